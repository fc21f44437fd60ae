"""Shared fixtures: a small seeded corpus and a forest trained on it.

Session-scoped because dataset generation and signature extraction are
the expensive parts; every test that needs real pipeline output reuses
these.
"""

import numpy as np
import pytest

from leamatch.config import Config
from leamatch.forest import train_forest
from leamatch.pipeline import Signature
from leamatch.synth import make_dataset
from leamatch.training import build_training_set, signatures_for_dataset


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def small_dataset(cfg):
    return make_dataset(6, 3, seed=7, cfg=cfg.synth, n_holdout=2)


@pytest.fixture(scope="session")
def small_signatures(small_dataset, cfg):
    return signatures_for_dataset(small_dataset.bullets, cfg)


@pytest.fixture(scope="session")
def small_forest(small_dataset, small_signatures, cfg):
    fvs, labels = build_training_set(small_dataset, cfg, seed=7,
                                     signatures=small_signatures)
    return train_forest(fvs, labels, cfg.forest, seed=7)


def make_signature(values, mask=None, x_res_um=1.5625):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.zeros(len(values), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    centered = values.copy()
    finite = np.isfinite(centered) & ~mask
    centered = centered - centered[finite].mean()
    centered[~finite] = np.nan
    return Signature(residuals=centered, mask=mask | ~np.isfinite(values),
                     x_res_um=x_res_um)


@pytest.fixture
def sig_factory():
    return make_signature
