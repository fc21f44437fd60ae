"""Random-forest land-pair classifier, built for determinism.

Bagging with replacement per tree, Gini-impurity greedy splits over a
per-node random feature subset. A fixed seed plus a fixed sample order
reproduces the forest bit-exactly, which the serialized digest checks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ForestConfig
from .digest import fnv1a64_hex
from .errors import BadMagicError, ClassImbalanceError, CorruptHeaderError, \
    DegenerateFeaturesError, StoreCorruptionError
from .compare import FEATURE_NAMES, FeatureVector, feature_array

FOREST_MAGIC = b"LEAFRST1"
MIN_PER_CLASS = 50


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    counts: Optional[tuple] = None  # (n_different, n_same) at a leaf

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


@dataclass
class Forest:
    trees: list
    cfg: ForestConfig
    seed: int
    n_features: int = len(FEATURE_NAMES)
    feature_names: tuple = FEATURE_NAMES
    training_digest: str = ""
    oob_accuracy: Optional[float] = None

    def vote(self, x: np.ndarray) -> float:
        """Fraction of trees whose leaf majority is same-source; in-leaf
        ties contribute 0.5."""
        total = 0.0
        for root in self.trees:
            node = root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            diff, same = node.counts
            total += 0.5 if same == diff else (1.0 if same > diff else 0.0)
        return total / len(self.trees)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def _best_split(X, y, feature_ids, min_leaf):
    """Best (feature, threshold) by weighted Gini over midpoint thresholds."""
    n = len(y)
    min_leaf = max(min_leaf, 1)
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        same_prefix = np.cumsum(ys)
        total_same = same_prefix[-1]
        # candidate split after position i (1-indexed prefix sizes)
        for i in range(min_leaf, n - min_leaf + 1):
            if xs[i - 1] == xs[i]:
                continue  # not a boundary between distinct values
            left_n, right_n = i, n - i
            left_same = int(same_prefix[i - 1])
            right_same = int(total_same - left_same)
            left_counts = np.array([left_n - left_same, left_same])
            right_counts = np.array([right_n - right_same, right_same])
            impurity = (left_n * _gini(left_counts) + right_n * _gini(right_counts)) / n
            if best is None or impurity < best[0] - 1e-12:
                threshold = (xs[i - 1] + xs[i]) / 2.0
                best = (impurity, int(f), float(threshold))
    return best


def _grow(X, y, depth, cfg: ForestConfig, rng: np.random.Generator) -> Node:
    counts = (int((y == 0).sum()), int((y == 1).sum()))
    n = len(y)
    if depth >= cfg.max_depth or n < 2 * cfg.min_leaf or counts[0] == 0 or counts[1] == 0:
        return Node(counts=counts)
    k = min(cfg.feature_subset_size, X.shape[1])
    feature_ids = rng.choice(X.shape[1], size=k, replace=False)
    best = _best_split(X, y, feature_ids, cfg.min_leaf)
    if best is None:
        return Node(counts=counts)
    _, f, threshold = best
    go_left = X[:, f] <= threshold
    if go_left.all() or (~go_left).all():
        return Node(counts=counts)
    left = _grow(X[go_left], y[go_left], depth + 1, cfg, rng)
    right = _grow(X[~go_left], y[~go_left], depth + 1, cfg, rng)
    return Node(feature=f, threshold=threshold, left=left, right=right)


def train_forest(samples, labels, cfg: Optional[ForestConfig] = None,
                 seed: int = 0) -> Forest:
    """Train on labeled feature vectors (label 1 = same-source pair).

    ``samples`` may be FeatureVector instances or ready feature rows.
    """
    cfg = cfg or ForestConfig()
    X = np.array([feature_array(s) if isinstance(s, FeatureVector) else np.asarray(s, float)
                  for s in samples], dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("samples/labels shape mismatch")
    n_same = int((y == 1).sum())
    n_diff = int((y == 0).sum())
    if n_same < MIN_PER_CLASS or n_diff < MIN_PER_CLASS:
        raise ClassImbalanceError(
            f"need >= {MIN_PER_CLASS} per class, got same={n_same} different={n_diff}")
    if np.all(X == X[0]):
        raise DegenerateFeaturesError("all samples identical")

    master = np.random.SeedSequence(seed)
    children = master.spawn(cfg.n_trees)
    trees = []
    n = len(y)
    oob_votes = np.zeros((n, 2), dtype=np.float64)
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        indices = rng.integers(0, n, size=n)
        tree = _grow(X[indices], y[indices], 0, cfg, rng)
        trees.append(tree)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[indices] = True
        for i in np.nonzero(~in_bag)[0]:
            node = tree
            x = X[i]
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            diff, same = node.counts
            if same > diff:
                oob_votes[i, 1] += 1
            elif diff > same:
                oob_votes[i, 0] += 1
            else:
                oob_votes[i] += 0.5

    voted = oob_votes.sum(axis=1) > 0
    oob_accuracy = None
    if voted.any():
        pred = (oob_votes[voted, 1] > oob_votes[voted, 0]).astype(np.int64)
        oob_accuracy = float((pred == y[voted]).mean())

    forest = Forest(trees=trees, cfg=cfg, seed=seed)
    forest.training_digest = fnv1a64_hex(_encode_trees(trees))
    forest.oob_accuracy = oob_accuracy
    return forest


def score_land_pair(forest: Forest, fv) -> float:
    x = feature_array(fv) if isinstance(fv, FeatureVector) else np.asarray(fv, float)
    return forest.vote(x)


# --- serialization: LEAFRST1 -------------------------------------------------

def _encode_node(node: Node, out: bytearray) -> None:
    if node.is_leaf:
        out.append(1)
        out += struct.pack("<II", node.counts[0], node.counts[1])
    else:
        out.append(0)
        out += struct.pack("<Bd", node.feature, node.threshold)
        _encode_node(node.left, out)
        _encode_node(node.right, out)


def _encode_trees(trees: list) -> bytes:
    out = bytearray()
    for tree in trees:
        body = bytearray()
        _encode_node(tree, body)
        out += struct.pack("<I", len(body))
        out += body
    return bytes(out)


def save_forest(forest: Forest, path) -> str:
    tree_bytes = _encode_trees(forest.trees)
    digest = fnv1a64_hex(tree_bytes)
    header = json.dumps({
        "version": 1,
        "n_trees": forest.cfg.n_trees,
        "max_depth": forest.cfg.max_depth,
        "min_leaf": forest.cfg.min_leaf,
        "feature_subset_size": forest.cfg.feature_subset_size,
        "seed": forest.seed,
        "n_features": forest.n_features,
        "feature_names": list(forest.feature_names),
        "digest": digest,
        "oob_accuracy": forest.oob_accuracy,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FOREST_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(tree_bytes)
    return digest


def _decode_node(blob: bytes, offset: int) -> tuple:
    kind = blob[offset]
    offset += 1
    if kind == 1:
        c0, c1 = struct.unpack_from("<II", blob, offset)
        return Node(counts=(c0, c1)), offset + 8
    feature, threshold = struct.unpack_from("<Bd", blob, offset)
    offset += 9
    left, offset = _decode_node(blob, offset)
    right, offset = _decode_node(blob, offset)
    return Node(feature=feature, threshold=threshold, left=left, right=right), offset


def load_forest(path) -> Forest:
    blob = Path(path).read_bytes()
    if blob[:8] != FOREST_MAGIC:
        raise BadMagicError("not a LEAFRST1 file")
    (header_len,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeaderError(str(exc)) from exc
    tree_bytes = blob[12 + header_len:]
    digest = fnv1a64_hex(tree_bytes)
    if digest != header["digest"]:
        raise StoreCorruptionError(
            f"forest digest mismatch: header {header['digest']}, trees {digest}")
    trees = []
    offset = 0
    for _ in range(header["n_trees"]):
        (body_len,) = struct.unpack_from("<I", tree_bytes, offset)
        offset += 4
        tree, end = _decode_node(tree_bytes, offset)
        if end != offset + body_len:
            raise StoreCorruptionError("tree body length mismatch")
        trees.append(tree)
        offset = end
    cfg = ForestConfig(
        n_trees=header["n_trees"], max_depth=header["max_depth"],
        min_leaf=header["min_leaf"], feature_subset_size=header["feature_subset_size"])
    return Forest(trees=trees, cfg=cfg, seed=header["seed"],
                  n_features=header["n_features"],
                  feature_names=tuple(header["feature_names"]),
                  training_digest=header["digest"],
                  oob_accuracy=header.get("oob_accuracy"))
