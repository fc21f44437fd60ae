"""Reduce an LEA scan to a comparison-ready signature.

Stages: crosscut selection (lowest stable row band near the base),
band-averaged profile extraction, groove shoulder detection (robust
quadratic + outward walk), LOWESS detrending, mean-centered residuals.

All stages are pure functions over immutable inputs; masked samples are
excluded from every regression and correlation window, never
interpolated, so no striae are fabricated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Config, CrosscutConfig, GrooveConfig, LowessConfig
from .errors import (
    GapTooLongError,
    InteriorTooNarrowError,
    NoStableRegionError,
    TooFewSamplesError,
)
from .scan import SurfaceScan


@dataclass
class CrosscutSelection:
    row_index: int
    stability: float
    search_trace: list = field(default_factory=list)  # (row, stability | None)


@dataclass
class Profile:
    values: np.ndarray  # float64 µm, NaN where masked
    mask: np.ndarray    # True = missing
    x_res_um: float
    row_index: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class GrooveBounds:
    left_index: int
    right_index: int
    left_found: bool
    right_found: bool

    def interior_range(self) -> tuple[int, int]:
        """Inclusive sample range strictly inside detected groove walls.

        A bound that was actually found sits on the first groove sample,
        so the interior starts one past it; an unfound bound is snapped
        to the profile end and belongs to the interior.
        """
        lo = self.left_index + 1 if self.left_found else self.left_index
        hi = self.right_index - 1 if self.right_found else self.right_index
        return lo, hi

    def interior_width(self) -> int:
        lo, hi = self.interior_range()
        return hi - lo + 1


@dataclass
class SignatureProvenance:
    bullet_id: str = ""
    land_id: str = ""
    row_index: int = -1
    groove_left: int = -1
    groove_right: int = -1
    lowess_span: float = 0.0


@dataclass
class Signature:
    residuals: np.ndarray  # float64 µm, NaN where masked
    mask: np.ndarray
    x_res_um: float
    provenance: SignatureProvenance = field(default_factory=SignatureProvenance)

    def __len__(self) -> int:
        return len(self.residuals)


def _band_means(scan: SurfaceScan, row: int, band: int) -> np.ndarray:
    """Per-column mean of unmasked heights over rows [row, row+band)."""
    block = scan.heights[row:row + band].astype(np.float64)
    valid = ~scan.mask[row:row + band]
    counts = valid.sum(axis=0)
    sums = np.where(valid, block, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation over samples finite in both series."""
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    xv, yv = x[ok], y[ok]
    xv = xv - xv.mean()
    yv = yv - yv.mean()
    denom = math.sqrt(float(xv @ xv) * float(yv @ yv))
    if denom == 0.0:
        return float("nan")
    return float(xv @ yv) / denom


def select_crosscut(scan: SurfaceScan, cfg: Optional[CrosscutConfig] = None) -> CrosscutSelection:
    """Pick the lowest stable row band above the base.

    A row r qualifies when the band [r, r+band) has less than
    ``max_band_mask_frac`` masked cells and its per-column mean correlates
    at least ``stability_threshold`` with the band delta rows above. The
    search walks upward from ``min_row_offset`` and stops at the first
    qualifying row, honoring base proximity.
    """
    cfg = cfg or CrosscutConfig()
    trace = []
    last_start = scan.rows - cfg.delta - cfg.band
    for row in range(cfg.min_row_offset, last_start + 1):
        band_mask_frac = float(scan.mask[row:row + cfg.band].mean())
        if band_mask_frac >= cfg.max_band_mask_frac:
            trace.append((row, None))
            continue
        here = _band_means(scan, row, cfg.band)
        above = _band_means(scan, row + cfg.delta, cfg.band)
        stability = _pearson(here, above)
        trace.append((row, None if math.isnan(stability) else stability))
        if not math.isnan(stability) and stability >= cfg.stability_threshold:
            return CrosscutSelection(row_index=row, stability=stability, search_trace=trace)
    raise NoStableRegionError(
        f"no row in [{cfg.min_row_offset}, {last_start}] met stability "
        f">= {cfg.stability_threshold}")


def extract_profile(scan: SurfaceScan, selection: CrosscutSelection,
                    band: int = CrosscutConfig.band) -> Profile:
    """Band-averaged crosscut: column means over [row_index, row_index+band).

    A sample is masked only when every cell of its column band is masked.
    """
    row = selection.row_index
    if not (0 <= row < scan.rows):
        raise ValueError(f"row_index {row} outside scan with {scan.rows} rows")
    band = min(band, scan.rows - row)
    values = _band_means(scan, row, band)
    mask = ~np.isfinite(values)
    return Profile(values=values, mask=mask, x_res_um=scan.x_res_um, row_index=row)


def _robust_quadratic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """IRLS quadratic fit, 3 Tukey-biweight reweightings, cutoff 4.685*MAD.

    Returns coefficients [c0, c1, c2] for c0 + c1*x + c2*x^2. The fixed
    iteration count keeps the fit deterministic.
    """
    design = np.column_stack([np.ones_like(x), x, x * x])
    weights = np.ones_like(y)
    coeffs = np.zeros(3)
    for _ in range(4):  # initial OLS + 3 reweightings
        sw = np.sqrt(weights)
        coeffs, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        resid = y - design @ coeffs
        mad = float(np.median(np.abs(resid - np.median(resid))))
        if mad == 0.0:
            break
        cutoff = 4.685 * mad
        u = resid / cutoff
        weights = np.where(np.abs(u) < 1.0, (1.0 - u * u) ** 2, 0.0)
        if weights.sum() < 3:
            break
    return coeffs


def detect_grooves(profile: Profile, cfg: Optional[GrooveConfig] = None) -> GrooveBounds:
    """Find groove shoulders by walking outward from a robust central fit.

    A robust quadratic is fit to the central (1 - 2*shoulder_fraction)
    span; each bound is the first sample, walking outward, whose residual
    above the quadratic exceeds ``rise_threshold_um`` and stays above it
    for ``persistence`` consecutive unmasked samples. Bounds snap to the
    profile ends with ``*_found = False`` when no shoulder qualifies.
    """
    cfg = cfg or GrooveConfig()
    n = len(profile)
    if n < 128:
        raise TooFewSamplesError(f"profile has {n} samples, need >= 128")
    center_lo = int(round(cfg.shoulder_fraction * n))
    center_hi = int(round((1.0 - cfg.shoulder_fraction) * n)) - 1
    x = np.arange(n, dtype=np.float64) / n  # scaled for conditioning
    central = np.arange(center_lo, center_hi + 1)
    central = central[~profile.mask[central]]
    if len(central) < 8:
        raise TooFewSamplesError("central span is almost fully masked")
    coeffs = _robust_quadratic(x[central], profile.values[central])
    fitted = coeffs[0] + coeffs[1] * x + coeffs[2] * x * x
    residual = profile.values - fitted

    def walk(indices: np.ndarray) -> Optional[int]:
        # indices in outward order; persistence counted over unmasked samples
        usable = indices[~profile.mask[indices]]
        above = residual[usable] > cfg.rise_threshold_um
        run = 0
        for pos in range(len(usable)):
            run = run + 1 if above[pos] else 0
            if run == cfg.persistence:
                return int(usable[pos - cfg.persistence + 1])
        return None

    left = walk(np.arange(center_lo, -1, -1))
    right = walk(np.arange(center_hi, n))
    bounds = GrooveBounds(
        left_index=left if left is not None else 0,
        right_index=right if right is not None else n - 1,
        left_found=left is not None,
        right_found=right is not None,
    )
    if bounds.interior_width() < cfg.min_interior:
        raise InteriorTooNarrowError(
            f"interior width {bounds.interior_width()} < {cfg.min_interior}")
    return bounds


def lowess_fit(values: np.ndarray, mask: Optional[np.ndarray] = None,
               span_fraction: float = LowessConfig.span_fraction,
               degree: int = LowessConfig.degree) -> np.ndarray:
    """Locally weighted polynomial regression with tricube weights.

    For each sample the k = ceil(span_fraction * n) nearest unmasked
    samples are fit with weights (1 - (d/d_max)^3)^3 and the polynomial
    is evaluated at the sample. Masked samples receive fitted values too
    (their flags are the caller's concern). Exactly reproduces
    polynomials up to ``degree``.
    """
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if mask is None:
        mask = ~np.isfinite(values)
    mask = np.asarray(mask, dtype=bool) | ~np.isfinite(values)
    positions = np.nonzero(~mask)[0]
    m = len(positions)
    k = max(math.ceil(span_fraction * n), degree + 2)
    if m < max(8, k):
        raise TooFewSamplesError(f"{m} unmasked samples, need >= {max(8, k)}")

    pos = positions.astype(np.float64)
    obs = values[positions]
    targets = np.arange(n, dtype=np.float64)

    # k nearest unmasked neighbours of each target form a contiguous window
    # over the sorted unmasked positions; slide it with two pointers.
    starts = np.empty(n, dtype=np.intp)
    lo = 0
    for t in range(n):
        while lo + k < m and abs(pos[lo + k] - t) < abs(pos[lo] - t):
            lo += 1
        starts[t] = lo

    window = starts[:, None] + np.arange(k)[None, :]
    d = pos[window] - targets[:, None]           # (n, k) signed distances
    d_max = np.abs(d).max(axis=1, keepdims=True)
    d_max[d_max == 0.0] = 1.0
    w = (1.0 - (np.abs(d) / d_max) ** 3) ** 3
    scaled = d / d_max                           # basis on [-1, 1] for conditioning
    y = obs[window]

    powers = np.arange(degree + 1)
    basis = scaled[:, :, None] ** powers[None, None, :]      # (n, k, p)
    wb = w[:, :, None] * basis
    lhs = np.einsum("nkp,nkq->npq", wb, basis)               # (n, p, p)
    rhs = np.einsum("nkp,nk->np", wb, y)                     # (n, p)
    try:
        beta = np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        beta = np.empty_like(rhs)
        for i in range(n):
            beta[i], *_ = np.linalg.lstsq(lhs[i], rhs[i], rcond=None)
    return beta[:, 0]  # polynomial value at d = 0


def extract_signature(profile: Profile, grooves: GrooveBounds,
                      cfg: Optional[Config] = None) -> Signature:
    """LOWESS-detrend the groove-trimmed interior and mean-center it."""
    cfg = cfg or Config()
    lo, hi = grooves.interior_range()
    values = profile.values[lo:hi + 1]
    mask = profile.mask[lo:hi + 1]
    width = hi - lo + 1
    if width < cfg.grooves.min_interior:
        raise InteriorTooNarrowError(f"interior width {width}")
    max_gap = int(cfg.signature.max_gap_frac * width)
    run = 0
    for missing in mask:
        run = run + 1 if missing else 0
        if run > max_gap:
            raise GapTooLongError(f"masked run > {cfg.signature.max_gap_frac:.0%} of interior")
    fitted = lowess_fit(values, mask, cfg.lowess.span_fraction, cfg.lowess.degree)
    residuals = values - fitted
    residuals[mask] = np.nan
    residuals = residuals - np.nanmean(residuals)
    return Signature(
        residuals=residuals,
        mask=mask.copy(),
        x_res_um=profile.x_res_um,
        provenance=SignatureProvenance(
            row_index=profile.row_index,
            groove_left=grooves.left_index,
            groove_right=grooves.right_index,
            lowess_span=cfg.lowess.span_fraction,
        ),
    )


def scan_to_signature(scan: SurfaceScan, cfg: Optional[Config] = None,
                      row_override: Optional[int] = None):
    """Full per-land reduction; returns (selection, profile, grooves, signature).

    ``row_override`` forces the crosscut row (used to study extraction
    location sensitivity); the stability search is skipped in that case.
    """
    cfg = cfg or Config()
    if row_override is not None:
        selection = CrosscutSelection(row_index=int(row_override), stability=float("nan"),
                                      search_trace=[])
    else:
        selection = select_crosscut(scan, cfg.crosscut)
    profile = extract_profile(scan, selection, band=cfg.crosscut.band)
    grooves = detect_grooves(profile, cfg.grooves)
    signature = extract_signature(profile, grooves, cfg)
    signature.provenance.bullet_id = scan.bullet_id
    signature.provenance.land_id = scan.land_id
    return selection, profile, grooves, signature


def export_series_csv(values: np.ndarray, mask: np.ndarray, x_res_um: float, path) -> None:
    """CSV export with header index,x_um,value_um,masked (LF, '.' decimals)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,x_um,value_um,masked\n")
        for i, (v, is_masked) in enumerate(zip(values, mask)):
            value = "" if not np.isfinite(v) else repr(float(v))
            fh.write(f"{i},{repr(i * x_res_um)},{value},{int(is_masked)}\n")
