"""Land-to-land score matrices, in-phase search, bullet-to-bullet scores.

Two bullets from one barrel have exactly one cyclic land pairing in
maximum agreement, so the bullet score is the best mean over the n
cyclic diagonals of the n x n land-score matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Config
from .compare import FeatureVector, features
from .errors import AllMaskedError, BadPhaseError, FeatureUnavailableError
from .forest import Forest, score_land_pair
from .pipeline import scan_to_signature
from .scan import Bullet


@dataclass
class ScoreMatrix:
    bullet_a: str
    bullet_b: str
    n: int
    scores: np.ndarray          # (n, n) float, NaN where unavailable
    feature_grid: list          # (n, n) nested list of FeatureVector | None
    unavailable: np.ndarray     # (n, n) bool
    land_ids_a: list = field(default_factory=list)
    land_ids_b: list = field(default_factory=list)


@dataclass
class PhaseResult:
    phase: int
    per_phase_means: list       # length n, None where a diagonal had no cells
    bullet_score: float
    in_phase_pairs: list        # (i, (i+phase) % n, score | None)
    cells_used: list = field(default_factory=list)  # per phase
    degraded: bool = False      # some phase mean used fewer than n cells


def signatures_for_bullet(bullet: Bullet, cfg: Optional[Config] = None,
                          row_overrides: Optional[dict] = None):
    """Per-land signatures; a land that fails any pipeline stage yields
    (None, error_code) so downstream scoring can mask it."""
    cfg = cfg or Config()
    out = []
    for i, scan in enumerate(bullet.lands):
        override = (row_overrides or {}).get(i)
        try:
            *_, signature = scan_to_signature(scan, cfg, row_override=override)
            out.append((signature, None))
        except Exception as exc:  # typed pipeline errors carry .code
            out.append((None, getattr(exc, "code", type(exc).__name__)))
    return out


def land_matrix_from_signatures(forest: Forest, sigs_a, sigs_b,
                                cfg: Optional[Config] = None,
                                bullet_a: str = "", bullet_b: str = "",
                                land_ids_a=None, land_ids_b=None) -> ScoreMatrix:
    cfg = cfg or Config()
    n = len(sigs_a)
    scores = np.full((n, n), np.nan)
    unavailable = np.ones((n, n), dtype=bool)
    grid = [[None] * n for _ in range(n)]
    for i, (sig_a, _) in enumerate(sigs_a):
        for j, (sig_b, _) in enumerate(sigs_b):
            if sig_a is None or sig_b is None:
                continue
            try:
                fv = features(sig_a, sig_b, cfg)
            except FeatureUnavailableError:
                continue
            grid[i][j] = fv
            scores[i, j] = score_land_pair(forest, fv)
            unavailable[i, j] = False
    return ScoreMatrix(bullet_a=bullet_a, bullet_b=bullet_b, n=n, scores=scores,
                       feature_grid=grid, unavailable=unavailable,
                       land_ids_a=list(land_ids_a or []), land_ids_b=list(land_ids_b or []))


def land_matrix(forest: Forest, bullet_a: Bullet, bullet_b: Bullet,
                cfg: Optional[Config] = None) -> ScoreMatrix:
    """All n x n land-pair scores for two bullets (36 cells for 6 lands);
    lands whose signature extraction fails become masked cells."""
    cfg = cfg or Config()
    sigs_a = signatures_for_bullet(bullet_a, cfg)
    sigs_b = signatures_for_bullet(bullet_b, cfg)
    return land_matrix_from_signatures(
        forest, sigs_a, sigs_b, cfg,
        bullet_a=bullet_a.bullet_id, bullet_b=bullet_b.bullet_id,
        land_ids_a=[s.land_id for s in bullet_a.lands],
        land_ids_b=[s.land_id for s in bullet_b.lands])


def best_phase(matrix: ScoreMatrix) -> PhaseResult:
    """Mean score per cyclic diagonal; the best phase wins, ties to the
    smallest phase index."""
    n = matrix.n
    means = []
    used = []
    for p in range(n):
        cells = [matrix.scores[i, (i + p) % n] for i in range(n)]
        cells = [c for c in cells if np.isfinite(c)]
        used.append(len(cells))
        means.append(float(np.mean(cells)) if cells else None)
    if all(m is None for m in means):
        raise AllMaskedError("every cell of the score matrix is unavailable")
    best_p = max((p for p in range(n) if means[p] is not None),
                 key=lambda p: (means[p], -p))
    pairs = []
    for i in range(n):
        j = (i + best_p) % n
        value = matrix.scores[i, j]
        pairs.append((i, j, float(value) if np.isfinite(value) else None))
    return PhaseResult(
        phase=best_p,
        per_phase_means=means,
        bullet_score=means[best_p],
        in_phase_pairs=pairs,
        cells_used=used,
        degraded=any(u < n and means[p] is not None for p, u in enumerate(used)),
    )


@dataclass
class BulletScore:
    bullet_a: str
    bullet_b: str
    score: float
    by_convention: bool = False
    phase: Optional[int] = None
    matrix: Optional[ScoreMatrix] = None
    phase_result: Optional[PhaseResult] = None


def bullet_score(bullet_a: Bullet, bullet_b: Bullet, forest: Forest,
                 cfg: Optional[Config] = None) -> BulletScore:
    """Bullet-to-bullet score: mean of the in-phase land scores; a bullet
    compared with itself reports 1.0 by display convention, uncomputed."""
    if bullet_a.bullet_id == bullet_b.bullet_id:
        return BulletScore(bullet_a=bullet_a.bullet_id, bullet_b=bullet_b.bullet_id,
                           score=1.0, by_convention=True)
    matrix = land_matrix(forest, bullet_a, bullet_b, cfg)
    result = best_phase(matrix)
    return BulletScore(bullet_a=bullet_a.bullet_id, bullet_b=bullet_b.bullet_id,
                       score=result.bullet_score, phase=result.phase,
                       matrix=matrix, phase_result=result)


def expected_match_frame(n: int, hypothesis_phase: int) -> list:
    """The n cells (i, (i+phase) mod n) a match hypothesis marks; pure
    geometry, independent of any score."""
    if not 0 <= hypothesis_phase < n:
        raise BadPhaseError(f"phase {hypothesis_phase} outside [0, {n})")
    return [(i, (i + hypothesis_phase) % n) for i in range(n)]


def export_matrix_csv(matrix: ScoreMatrix, path) -> None:
    """CSV grid with land ids as header row/column."""
    ids_a = matrix.land_ids_a or [f"L{i+1}" for i in range(matrix.n)]
    ids_b = matrix.land_ids_b or [f"L{j+1}" for j in range(matrix.n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("," + ",".join(ids_b) + "\n")
        for i, row_id in enumerate(ids_a):
            cells = []
            for j in range(matrix.n):
                v = matrix.scores[i, j]
                cells.append(repr(float(v)) if np.isfinite(v) else "")
            fh.write(row_id + "," + ",".join(cells) + "\n")
