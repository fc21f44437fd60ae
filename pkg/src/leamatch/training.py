"""Bridges the generator, pipeline and forest: training-set assembly from
a labeled dataset and holdout evaluation (score pools, ROC AUC, phase
recovery)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Config
from .errors import FeatureUnavailableError
from .compare import features
from .forest import Forest, train_forest
from .scoring import (PhaseResult, best_phase, land_matrix_from_signatures,
                      signatures_for_bullet)
from .synth import Dataset, FiredBullet, same_source_lands, true_phase


def signatures_for_dataset(bullets, cfg: Optional[Config] = None) -> dict:
    """bullet_id -> list of (Signature | None, error_code) per land."""
    cfg = cfg or Config()
    return {fb.bullet.bullet_id: signatures_for_bullet(fb.bullet, cfg)
            for fb in bullets}


def build_training_set(dataset: Dataset, cfg: Optional[Config] = None,
                       different_ratio: float = 3.0, seed: int = 0,
                       signatures: Optional[dict] = None):
    """Feature vectors and labels from the train-barrel part of a dataset.

    Every same-source pair is used; different-source pairs are a seeded
    subsample of ``different_ratio`` times as many, drawn across the full
    train manifest so barrels mix.
    """
    cfg = cfg or Config()
    train_set = set(dataset.train_barrels)
    by_id = dataset.bullets_by_id()
    train_bullets = [fb for fb in dataset.bullets if fb.truth.barrel_id in train_set]
    if signatures is None:
        signatures = signatures_for_dataset(train_bullets, cfg)

    land_index = {}
    for fb in train_bullets:
        for idx, scan in enumerate(fb.bullet.lands):
            land_index[scan.land_id] = idx

    same_rows = []
    diff_rows = []
    for row in dataset.manifest:
        if row.barrel_a not in train_set or row.barrel_b not in train_set:
            continue
        (same_rows if row.label == "same-source" else diff_rows).append(row)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 555))))
    n_diff = min(len(diff_rows), int(different_ratio * len(same_rows)))
    chosen = rng.choice(len(diff_rows), size=n_diff, replace=False)
    picked = same_rows + [diff_rows[i] for i in sorted(chosen)]

    fvs, labels = [], []
    for row in picked:
        sig_a = signatures[row.bullet_a][land_index[row.land_a]][0]
        sig_b = signatures[row.bullet_b][land_index[row.land_b]][0]
        if sig_a is None or sig_b is None:
            continue
        try:
            fv = features(sig_a, sig_b, cfg)
        except FeatureUnavailableError:
            continue
        fvs.append(fv)
        labels.append(1 if row.label == "same-source" else 0)
    return fvs, labels


def roc_auc(scores_pos, scores_neg) -> float:
    """Mann-Whitney AUC with ties counted half."""
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        return float("nan")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(len(combined))
    ranks[order] = np.arange(1, len(combined) + 1)
    # average ranks over ties
    sorted_vals = combined[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    r_pos = ranks[:len(pos)].sum()
    u = r_pos - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


@dataclass
class HoldoutEvaluation:
    same_land_scores: list = field(default_factory=list)      # in-phase, same barrel
    diff_land_scores: list = field(default_factory=list)      # everything else
    same_bullet_scores: list = field(default_factory=list)
    diff_bullet_scores: list = field(default_factory=list)
    phase_hits: int = 0
    phase_total: int = 0

    @property
    def auc(self) -> float:
        return roc_auc(self.same_land_scores, self.diff_land_scores)


def evaluate_holdout(dataset: Dataset, forest: Forest,
                     cfg: Optional[Config] = None,
                     signatures: Optional[dict] = None) -> HoldoutEvaluation:
    """Score every holdout bullet pair; pools land scores by ground truth
    and records bullet scores and phase recovery for same-barrel pairs."""
    cfg = cfg or Config()
    holdout_set = set(dataset.holdout_barrels)
    holdout = [fb for fb in dataset.bullets if fb.truth.barrel_id in holdout_set]
    if signatures is None:
        signatures = signatures_for_dataset(holdout, cfg)
    out = HoldoutEvaluation()
    for i in range(len(holdout)):
        for j in range(i + 1, len(holdout)):
            fa, fb = holdout[i], holdout[j]
            matrix = land_matrix_from_signatures(
                forest, signatures[fa.bullet.bullet_id], signatures[fb.bullet.bullet_id],
                cfg, bullet_a=fa.bullet.bullet_id, bullet_b=fb.bullet.bullet_id)
            same_barrel = fa.truth.barrel_id == fb.truth.barrel_id
            for la in range(matrix.n):
                for lb in range(matrix.n):
                    score = matrix.scores[la, lb]
                    if not np.isfinite(score):
                        continue
                    if same_barrel and same_source_lands(fa, la, fb, lb):
                        out.same_land_scores.append(float(score))
                    else:
                        out.diff_land_scores.append(float(score))
            result = best_phase(matrix)
            if same_barrel:
                out.same_bullet_scores.append(result.bullet_score)
                out.phase_total += 1
                if result.phase == true_phase(fa, fb):
                    out.phase_hits += 1
            else:
                out.diff_bullet_scores.append(result.bullet_score)
    return out
