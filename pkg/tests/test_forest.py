"""Forest training determinism, voting semantics, serialization."""

import numpy as np
import pytest

from leamatch.compare import FeatureVector
from leamatch.config import ForestConfig
from leamatch.errors import (BadMagicError, ClassImbalanceError,
                             DegenerateFeaturesError, StoreCorruptionError)
from leamatch.forest import (Forest, Node, load_forest, save_forest,
                             score_land_pair, train_forest)


def _fv(ccf, **kwargs):
    defaults = dict(lag_um=0.0, mean_abs_diff=1.0 - ccf, n_matches=5,
                    n_mismatches=5, cms=3, non_cms=3, sum_peak_heights=4.0,
                    overlap_frac=0.9)
    defaults.update(kwargs)
    return FeatureVector(ccf=ccf, **defaults)


def _separable_set(n=200, seed=0):
    """ccf decides the class with a clear margin around the 0.5 boundary."""
    rng = np.random.default_rng(seed)
    fvs, labels = [], []
    for _ in range(n):
        positive = bool(rng.integers(0, 2))
        ccf = float(rng.uniform(0.55, 1.0) if positive else rng.uniform(0.0, 0.45))
        fvs.append(_fv(ccf,
                       n_matches=int(rng.integers(0, 30)),
                       cms=int(rng.integers(0, 12)),
                       sum_peak_heights=float(rng.uniform(0, 30))))
        labels.append(1 if positive else 0)
    return fvs, labels


def test_separable_toy_oob_perfect():
    fvs, labels = _separable_set()
    forest = train_forest(fvs, labels, seed=1)
    assert forest.oob_accuracy == 1.0


def test_training_deterministic():
    fvs, labels = _separable_set(seed=2)
    f1 = train_forest(fvs, labels, seed=9)
    f2 = train_forest(fvs, labels, seed=9)
    assert f1.training_digest == f2.training_digest
    f3 = train_forest(fvs, labels, seed=10)
    assert f3.training_digest != f1.training_digest


def test_class_imbalance_rejected():
    fvs, _ = _separable_set()
    with pytest.raises(ClassImbalanceError):
        train_forest(fvs, [1] * len(fvs))
    labels = [1] * (len(fvs) - 10) + [0] * 10
    with pytest.raises(ClassImbalanceError):
        train_forest(fvs, labels)


def test_degenerate_features_rejected():
    fvs = [_fv(0.5)] * 120
    labels = [0] * 60 + [1] * 60
    with pytest.raises(DegenerateFeaturesError):
        train_forest(fvs, labels)


def test_single_stump_vote():
    # one stump splitting on ccf (feature 0) at 0.5
    stump = Node(feature=0, threshold=0.5,
                 left=Node(counts=(10, 0)), right=Node(counts=(0, 10)))
    forest = Forest(trees=[stump], cfg=ForestConfig(n_trees=1), seed=0)
    assert score_land_pair(forest, _fv(0.9)) == 1.0
    assert score_land_pair(forest, _fv(0.1)) == 0.0
    tied = Node(feature=0, threshold=0.5,
                left=Node(counts=(10, 0)), right=Node(counts=(7, 7)))
    forest_tied = Forest(trees=[tied], cfg=ForestConfig(n_trees=1), seed=0)
    assert score_land_pair(forest_tied, _fv(0.9)) == 0.5


def test_scoring_deterministic():
    fvs, labels = _separable_set(seed=5)
    forest = train_forest(fvs, labels, seed=5)
    fv = _fv(0.42)
    assert score_land_pair(forest, fv) == score_land_pair(forest, fv)


def test_scores_within_unit_interval():
    fvs, labels = _separable_set(seed=6)
    forest = train_forest(fvs, labels, seed=6)
    for fv in fvs[:50]:
        assert 0.0 <= score_land_pair(forest, fv) <= 1.0


def test_save_load_roundtrip(tmp_path):
    fvs, labels = _separable_set(seed=7)
    forest = train_forest(fvs, labels, seed=7)
    path = tmp_path / "forest.bin"
    digest = save_forest(forest, path)
    assert digest == forest.training_digest
    loaded = load_forest(path)
    assert loaded.training_digest == forest.training_digest
    assert loaded.cfg == forest.cfg
    assert loaded.seed == forest.seed
    for fv in fvs[:40]:
        assert score_land_pair(loaded, fv) == score_land_pair(forest, fv)


def test_load_detects_corruption(tmp_path):
    fvs, labels = _separable_set(seed=8)
    forest = train_forest(fvs, labels, ForestConfig(n_trees=20), seed=8)
    path = tmp_path / "forest.bin"
    save_forest(forest, path)
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0x55
    path.write_bytes(bytes(blob))
    with pytest.raises(StoreCorruptionError):
        load_forest(path)
    path.write_bytes(b"WRONGMAG" + bytes(blob[8:]))
    with pytest.raises(BadMagicError):
        load_forest(path)
