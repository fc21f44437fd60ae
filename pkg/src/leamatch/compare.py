"""Signature-to-signature comparison: alignment, extrema, CMS, features.

The alignment lag maximizes Pearson correlation over the unmasked
overlap across all admissible integer lags. Sum statistics for every lag
come from six cross-correlations (values and indicator products), so the
search is exact and fast; near-ties are re-evaluated with the direct
per-lag formula before the documented tie-break (smaller |lag|, then
negative) is applied.

The lag convention: sample j of signature b lines up with sample
j + lag of signature a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.signal import correlate

from .config import AlignConfig, Config, ExtremaConfig
from .errors import FeatureUnavailableError, NoAdmissibleLagError
from .pipeline import Signature

PEAK = "peak"
VALLEY = "valley"


@dataclass(frozen=True)
class Alignment:
    lag: int
    ccf: float
    overlap_len: int


@dataclass(frozen=True)
class Extremum:
    kind: str       # PEAK or VALLEY
    index: int      # sample index in the signature
    height: float   # signed µm of the smoothed series at the extremum
    width: float    # samples between flanking zero-crossings


@dataclass(frozen=True)
class FeatureVector:
    """Per-land-pair inputs to the forest; lag_um keeps its sign here,
    the scorer consumes |lag_um| so argument order cannot leak into scores."""

    ccf: float
    lag_um: float
    mean_abs_diff: float     # "D": mean |height difference| over the overlap
    n_matches: int
    n_mismatches: int
    cms: int                 # longest run of consecutively matching striae
    non_cms: int
    sum_peak_heights: float  # sum of average |height| of matched extrema
    overlap_frac: float


FEATURE_NAMES = (
    "ccf", "abs_lag_um", "mean_abs_diff", "n_matches", "n_mismatches",
    "cms", "non_cms", "sum_peak_heights", "overlap_frac",
)

CSV_COLUMNS = ("ccf", "lag_um", "D", "n_matches", "n_mismatches",
               "cms", "non_cms", "sum_peaks", "overlap_frac")


def feature_array(fv: FeatureVector) -> np.ndarray:
    return np.array([
        fv.ccf, abs(fv.lag_um), fv.mean_abs_diff, fv.n_matches, fv.n_mismatches,
        fv.cms, fv.non_cms, fv.sum_peak_heights, fv.overlap_frac,
    ], dtype=np.float64)


def _clean(sig: Signature) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(sig.residuals, dtype=np.float64)
    valid = np.isfinite(values) & ~np.asarray(sig.mask, dtype=bool)
    return np.where(valid, values, 0.0), valid.astype(np.float64)


def _pearson_at_lag(a, va, b, vb, lag: int) -> tuple[float, int]:
    """Direct Pearson over pairs (a[j+lag], b[j]); returns (r, n)."""
    lo = max(0, -lag)
    hi = min(len(b), len(a) - lag)
    if hi <= lo:
        return float("nan"), 0

    sl_b = slice(lo, hi)
    sl_a = slice(lo + lag, hi + lag)
    ok = (va[sl_a] > 0) & (vb[sl_b] > 0)
    n = int(ok.sum())
    if n < 2:
        return float("nan"), n
    xa = a[sl_a][ok]
    xb = b[sl_b][ok]
    xa = xa - xa.mean()
    xb = xb - xb.mean()
    denom = math.sqrt(float(xa @ xa) * float(xb @ xb))
    if denom == 0.0:
        return float("nan"), n
    return float(xa @ xb) / denom, n


def align(a: Signature, b: Signature, cfg: Optional[AlignConfig] = None) -> Alignment:
    """Maximize Pearson correlation over all lags with enough overlap."""
    cfg = cfg or AlignConfig()
    az, va = _clean(a)
    bz, vb = _clean(b)
    if len(az) == 0 or len(bz) == 0:
        raise NoAdmissibleLagError("empty signature")
    min_overlap = max(16, math.ceil(cfg.min_overlap_frac * min(len(az), len(bz))))

    # full cross-correlations of value/indicator products give the per-lag
    # sums needed for Pearson; index k corresponds to lag k - (len(b) - 1)
    def xc(x, y):
        return correlate(x, y, mode="full", method="auto")

    n_ov = xc(va, vb)
    s_ab = xc(az, bz)
    s_a = xc(az, vb)
    s_b = xc(va, bz)
    s_aa = xc(az * az, vb)
    s_bb = xc(va, bz * bz)

    lags = np.arange(len(n_ov)) - (len(bz) - 1)
    counts = np.rint(n_ov).astype(np.int64)
    var_a = counts * s_aa - s_a * s_a
    var_b = counts * s_bb - s_b * s_b
    cov = counts * s_ab - s_a * s_b
    admissible = (counts >= min_overlap) & (var_a > 0) & (var_b > 0)
    if not admissible.any():
        raise NoAdmissibleLagError(f"no lag with overlap >= {min_overlap}")
    r = np.full(len(lags), -np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        r[admissible] = cov[admissible] / np.sqrt(var_a[admissible] * var_b[admissible])

    # near-ties are settled with the direct formula and the documented order
    shortlist = lags[admissible & (r >= r.max() - 1e-9)]
    shortlist = sorted(shortlist, key=lambda l: (abs(l), l > 0))
    best = None
    for lag in shortlist:
        r_exact, n_exact = _pearson_at_lag(az, va, bz, vb, int(lag))
        if math.isnan(r_exact) or n_exact < min_overlap:
            continue
        if best is None or r_exact > best[1]:
            best = (int(lag), r_exact, n_exact)
    if best is None:
        raise NoAdmissibleLagError("all candidate lags degenerate")
    return Alignment(lag=best[0], ccf=best[1], overlap_len=best[2])


def _moving_average(values: np.ndarray, valid: np.ndarray, window: int) -> np.ndarray:
    kernel = np.ones(window)
    sums = np.convolve(np.where(valid, values, 0.0), kernel, mode="same")
    counts = np.convolve(valid.astype(np.float64), kernel, mode="same")
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def find_extrema(sig: Signature, cfg: Optional[ExtremaConfig] = None) -> list:
    """Peaks and valleys of the smoothed signature with widths.

    The signature is smoothed with a centered moving average; extrema are
    sign changes of the first difference. Extrema whose |height| is below
    ``min_prominence_um`` or whose sign contradicts their kind are
    dropped, so the surviving list may not alternate. Widths span the
    flanking zero-crossings of the smoothed series.
    """
    cfg = cfg or ExtremaConfig()
    # signatures are immutable once built; memoize per smoothing settings
    cache = getattr(sig, "_extrema_cache", None)
    cache_key = (cfg.smooth_window, cfg.min_prominence_um)
    if cache is not None and cache_key in cache:
        return cache[cache_key]
    values = np.asarray(sig.residuals, dtype=np.float64)
    if len(values) < cfg.smooth_window:
        return []
    valid_in = np.isfinite(values) & ~np.asarray(sig.mask, dtype=bool)
    smoothed = _moving_average(values, valid_in, cfg.smooth_window)
    valid = np.isfinite(smoothed)
    pos = np.nonzero(valid)[0]
    if len(pos) < 3:
        return []
    s = smoothed[pos]

    # fractional zero-crossing positions of the smoothed series
    crossings = []
    for k in range(len(s) - 1):
        if s[k] == 0.0 or (s[k] > 0) == (s[k + 1] > 0):
            continue
        frac = s[k] / (s[k] - s[k + 1])
        crossings.append(pos[k] + frac * (pos[k + 1] - pos[k]))
    crossings = np.array(crossings) if crossings else np.empty(0)

    extrema = []
    diffs = np.diff(s)
    last_sign = 0
    run_start = 0  # index into s of the first sample after the last signed diff
    for k, d in enumerate(diffs):
        sign = 0 if d == 0 else (1 if d > 0 else -1)
        if sign == 0:
            continue
        if last_sign != 0 and sign != last_sign:
            segment = slice(run_start, k + 1)
            if last_sign > 0:  # rising then falling: peak on the plateau
                local = int(np.argmax(s[segment])) + run_start
                kind = PEAK
            else:
                local = int(np.argmin(s[segment])) + run_start
                kind = VALLEY
            extrema.append((kind, local))
        if sign != last_sign:
            run_start = k
        last_sign = sign

    out = []
    for kind, local in extrema:
        height = float(s[local])
        if abs(height) < cfg.min_prominence_um:
            continue
        if (kind == PEAK) != (height > 0):
            continue
        index = int(pos[local])
        left = crossings[crossings < index]
        right = crossings[crossings > index]
        left_x = float(left[-1]) if len(left) else float(pos[0])
        right_x = float(right[0]) if len(right) else float(pos[-1])
        out.append(Extremum(kind=kind, index=index, height=height,
                            width=max(right_x - left_x, 1.0)))
    if cache is None:
        cache = {}
        try:
            sig._extrema_cache = cache
        except AttributeError:
            return out
    cache[cache_key] = out
    return out


def match_extrema(ea: list, eb: list, lag: int, tol: int):
    """Greedy left-to-right pairing of same-kind extrema within ``tol``.

    b-extrema are viewed at their aligned positions index_b + lag. Each
    a-extremum takes the closest free candidate; ties go to the earlier
    b-extremum. Returns (pairs, matched_a, matched_b) where pairs hold
    list indices into ``ea``/``eb``.
    """
    used_b = [False] * len(eb)
    pairs = []
    for i, ex_a in enumerate(ea):
        best = None
        for j, ex_b in enumerate(eb):
            if used_b[j] or ex_b.kind != ex_a.kind:
                continue
            dist = abs(ex_a.index - (ex_b.index + lag))
            if dist > tol:
                continue
            if best is None or dist < best[0]:
                best = (dist, j)
        if best is not None:
            used_b[best[1]] = True
            pairs.append((i, best[1]))
    matched_a = [False] * len(ea)
    for i, _ in pairs:
        matched_a[i] = True
    return pairs, matched_a, used_b


def merged_match_flags(ea: list, eb: list, matched_a: list, matched_b: list,
                       lag: int) -> list:
    """Canonical merged striae sequence for CMS: a-extrema in index order
    with their match flags, unmatched b-extrema interleaved by aligned
    index (a before b on position ties)."""
    items = [(ex.index, 0, bool(matched_a[i])) for i, ex in enumerate(ea)]
    items += [(ex.index + lag, 1, False)
              for j, ex in enumerate(eb) if not matched_b[j]]
    items.sort(key=lambda t: (t[0], t[1]))
    return [flag for _, _, flag in items]


def cms_runs(match_flags: list) -> dict:
    """Longest run of matches and of mismatches in the merged sequence."""
    best_true = best_false = 0
    run_true = run_false = 0
    for flag in match_flags:
        if flag:
            run_true += 1
            run_false = 0
        else:
            run_false += 1
            run_true = 0
        best_true = max(best_true, run_true)
        best_false = max(best_false, run_false)
    return {"cms": best_true, "non_cms": best_false}


def _features_oriented(a: Signature, b: Signature, cfg: Config) -> FeatureVector:
    try:
        alignment = align(a, b, cfg.align)
    except NoAdmissibleLagError as exc:
        raise FeatureUnavailableError(str(exc)) from exc
    lag = alignment.lag
    az, va = _clean(a)
    bz, vb = _clean(b)
    lo = max(0, -lag)
    hi = min(len(bz), len(az) - lag)
    ok = (va[lo + lag:hi + lag] > 0) & (vb[lo:hi] > 0)
    diffs = np.abs(az[lo + lag:hi + lag][ok] - bz[lo:hi][ok])
    mean_abs_diff = float(diffs.mean()) if len(diffs) else 0.0

    ea = find_extrema(a, cfg.extrema)
    eb = find_extrema(b, cfg.extrema)
    pairs, matched_a, matched_b = match_extrema(ea, eb, lag, cfg.extrema.match_tol)
    flags = merged_match_flags(ea, eb, matched_a, matched_b, lag)
    runs = cms_runs(flags)
    sum_peaks = sum((abs(ea[i].height) + abs(eb[j].height)) / 2.0 for i, j in pairs)
    n_matches = len(pairs)
    n_mismatches = (len(ea) - n_matches) + (len(eb) - n_matches)
    return FeatureVector(
        ccf=alignment.ccf,
        lag_um=lag * a.x_res_um,
        mean_abs_diff=mean_abs_diff,
        n_matches=n_matches,
        n_mismatches=n_mismatches,
        cms=runs["cms"],
        non_cms=runs["non_cms"],
        sum_peak_heights=float(sum_peaks),
        overlap_frac=alignment.overlap_len / min(len(az), len(bz)),
    )


def _canonical_swap(a: Signature, b: Signature) -> bool:
    """True when (b, a) is the canonical computation order.

    Provenance ids order the pair when they differ (stable under any
    rescaling of the data); anonymous signatures fall back to comparing
    residual bytes, which is still deterministic.
    """
    key_a = (a.provenance.bullet_id, a.provenance.land_id)
    key_b = (b.provenance.bullet_id, b.provenance.land_id)
    if key_a != key_b:
        return key_a > key_b
    return a.residuals.tobytes() > b.residuals.tobytes()


def features(a: Signature, b: Signature, cfg: Optional[Config] = None) -> FeatureVector:
    """Full feature vector for a land pair.

    Computed in a canonical argument order with the lag sign mirrored
    back, so features(a, b) and features(b, a) agree exactly apart from
    the lag sign.
    """
    cfg = cfg or Config()
    swap = _canonical_swap(a, b)
    fv = _features_oriented(b, a, cfg) if swap else _features_oriented(a, b, cfg)
    if swap:
        fv = replace(fv, lag_um=-fv.lag_um)
    return fv


def export_feature_csv(rows: list, path) -> None:
    """rows: (bullet_a, land_a, bullet_b, land_b, FeatureVector)."""
    header = "bullet_a,land_a,bullet_b,land_b," + ",".join(CSV_COLUMNS)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for bullet_a, land_a, bullet_b, land_b, fv in rows:
            fields = [bullet_a, land_a, bullet_b, land_b,
                      repr(fv.ccf), repr(fv.lag_um), repr(fv.mean_abs_diff),
                      str(fv.n_matches), str(fv.n_mismatches), str(fv.cms),
                      str(fv.non_cms), repr(fv.sum_peak_heights), repr(fv.overlap_frac)]
            fh.write(",".join(fields) + "\n")
