import numpy as np
import pytest

from deduce import HOME7, ModelBundle, NBestConfig, default_codebook, train
from deduce.linear import combined_schedule, concat_features, scene_schedule
from deduce.synthgen import generate, home7_preset

DEFAULT_SEED = 7
N_TRAIN = 500
N_TEST = 200


@pytest.fixture(scope="session")
def default_run():
    """One full pipeline run on the default preset (500 train + 200 test per
    class, seed 7): generated frames, trained scene and combined heads with
    their standard schedules, and a ready bundle. Shared because training is
    the expensive part."""
    models = home7_preset()
    full = generate(models, HOME7, N_TRAIN + N_TEST, seed=DEFAULT_SEED)
    train_recs, test_recs = [], []
    for k in range(len(HOME7)):
        per_class = [r for r in full if r.truth.id == k]
        train_recs += per_class[:N_TRAIN]
        test_recs += per_class[N_TRAIN:]

    def matrices(records, combined):
        if combined:
            X = np.stack([concat_features(r.scene_feature, r.detections)
                          for r in records])
        else:
            X = np.stack([r.scene_feature for r in records])
        y = np.array([r.truth.id for r in records])
        return X, y

    Xs, y = matrices(train_recs, combined=False)
    Xs_te, y_te = matrices(test_recs, combined=False)
    Xc, _ = matrices(train_recs, combined=True)
    Xc_te, _ = matrices(test_recs, combined=True)
    scene_head, scene_report = train(Xs, y, HOME7, scene_schedule(seed=DEFAULT_SEED),
                                     Xs_te, y_te)
    combined_head, combined_report = train(Xc, y, HOME7,
                                           combined_schedule(seed=DEFAULT_SEED),
                                           Xc_te, y_te)
    codebook = default_codebook()
    bundle = ModelBundle(scene_head=scene_head, combined_head=combined_head,
                         codebook=codebook,
                         nbest=NBestConfig(codebook, threshold=0.5, min_conf=0.5))
    return {
        "models": models,
        "train": train_recs,
        "test": test_recs,
        "scene_head": scene_head,
        "scene_report": scene_report,
        "combined_head": combined_head,
        "combined_report": combined_report,
        "bundle": bundle,
        "y_test": y_te,
    }
