"""Ground-truth synthetic barrel and bullet generator.

Stands in for physical scan corpora: every scan is built from seeded,
reproducible components (circular-arc curvature, raised-cosine groove
shoulders, per-land latent striation patterns, taper toward the base,
pixel noise, optional damage), and each fired bullet carries annotations
with the true rotation, shoulder positions and latent patterns so
pipeline stages can be tested against known answers.

Striation patterns drift slowly from base to nose (a second latent mixes
in with height), which is what makes crosscut placement matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .config import SynthConfig
from .digest import fnv1a64, digest_of
from .scan import Bullet, SurfaceScan


def _rng(*key) -> np.random.Generator:
    ints = [k if isinstance(k, int) else fnv1a64(str(k).encode()) for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(ints)))


def _smoothed_noise(rng: np.random.Generator, n: int, correlation_length: int,
                    sd: float) -> np.ndarray:
    raw = rng.normal(0.0, 1.0, n + 2 * correlation_length)
    kernel = np.ones(correlation_length) / correlation_length
    smooth = np.convolve(raw, kernel, mode="same")[correlation_length:correlation_length + n]
    smooth = smooth - smooth.mean()
    scale = smooth.std()
    return smooth * (sd / scale) if scale > 0 else smooth


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / denom if denom else 0.0


@dataclass
class Barrel:
    barrel_id: str
    n_lands: int
    base_patterns: np.ndarray   # (n_lands, cols) µm, recovered near the base
    nose_patterns: np.ndarray   # (n_lands, cols) µm, mixes in toward the nose
    cfg: SynthConfig
    seed: int

    @property
    def latents(self) -> np.ndarray:
        return self.base_patterns


def make_barrel(seed: int, n_lands: int = 6, cfg: Optional[SynthConfig] = None,
                barrel_id: Optional[str] = None) -> Barrel:
    """Deterministic barrel with mutually decorrelated land patterns.

    Each pattern is moving-average-smoothed white noise; draws that
    correlate above ``max_latent_correlation`` with an earlier pattern of
    the same barrel are deterministically re-drawn.
    """
    cfg = cfg or SynthConfig()
    if not 4 <= n_lands <= 8:
        raise ValueError(f"n_lands {n_lands} outside [4, 8]")
    barrel_id = barrel_id or f"BRL{seed}"
    accepted: list = []
    for land in range(n_lands):
        for which in (0, 1):  # 0 = base, 1 = nose
            attempt = 0
            while True:
                rng = _rng(seed, barrel_id, land, which, attempt)
                pattern = _smoothed_noise(rng, cfg.cols, cfg.correlation_length,
                                          cfg.latent_sd_um)
                if all(abs(_corr(pattern, prev)) < cfg.max_latent_correlation
                       for prev in accepted):
                    accepted.append(pattern)
                    break
                attempt += 1
                if attempt > 64:
                    raise RuntimeError("latent decorrelation failed to converge")
    stack = np.array(accepted).reshape(n_lands, 2, cfg.cols)
    return Barrel(barrel_id=barrel_id, n_lands=n_lands,
                  base_patterns=stack[:, 0], nose_patterns=stack[:, 1],
                  cfg=cfg, seed=seed)


@dataclass(frozen=True)
class Damage:
    kind: str            # "break_off" | "smear"
    extent: float        # fraction of scan area / width
    land_index: int = 0  # bullet land the damage applies to


@dataclass(frozen=True)
class FiringSpec:
    rotation: int = 0
    wear_scale: float = 1.0
    noise_sd_um: Optional[float] = None  # default: cfg.noise_sd_um
    damages: tuple = ()
    groove_overrides: dict = field(default_factory=dict)  # land -> (left_h, right_h)


@dataclass
class LandTruth:
    source_land: int            # barrel land engraved on this bullet land
    base_pattern: np.ndarray
    nose_pattern: np.ndarray
    shoulder_left: int          # first interior sample (ramp ends here)
    shoulder_right: int         # last interior sample
    wear: float
    deterministic_shape: np.ndarray  # curvature + groove shoulders, 1-D µm


@dataclass
class BulletTruth:
    barrel_id: str
    rotation: int
    lands: list = field(default_factory=list)  # LandTruth per bullet land


@dataclass
class FiredBullet:
    bullet: Bullet
    truth: BulletTruth


def _deterministic_shape(cfg: SynthConfig, left_h: float, right_h: float) -> np.ndarray:
    cols = cfg.cols
    x_um = np.arange(cols, dtype=np.float64) * cfg.x_res_um
    half = x_um[-1] / 2.0
    depth = cfg.curvature_depth_um
    radius = (half * half + depth * depth) / (2.0 * depth)
    arc = np.sqrt(np.maximum(radius * radius - (x_um - half) ** 2, 0.0)) - (radius - depth)
    margin = int(round(cfg.groove_margin_frac * cols))
    shape = arc.copy()
    c = np.arange(margin, dtype=np.float64)
    if margin > 0:
        shape[:margin] += 0.5 * left_h * (1.0 + np.cos(math.pi * c / margin))
        shape[cols - margin:] += 0.5 * right_h * (1.0 + np.cos(math.pi * c[::-1] / margin))
    return shape


def fire_bullet(barrel: Barrel, spec: FiringSpec, seed: int,
                bullet_id: Optional[str] = None) -> FiredBullet:
    """Engrave one bullet: barrel land k marks bullet land (k + rotation)
    mod n. Striation amplitude tapers from the base upward and the nose
    pattern mixes in with height."""
    cfg = barrel.cfg
    n = barrel.n_lands
    if not 0 <= spec.rotation < n:
        raise ValueError(f"rotation {spec.rotation} outside [0, {n})")
    bullet_id = bullet_id or f"{barrel.barrel_id}-S{seed}"
    rng = _rng(barrel.seed, barrel.barrel_id, "fire", seed)
    wear = spec.wear_scale * (1.0 + rng.uniform(-cfg.wear_jitter, cfg.wear_jitter))
    noise_sd = cfg.noise_sd_um if spec.noise_sd_um is None else spec.noise_sd_um

    rows, cols = cfg.rows, cfg.cols
    r = np.arange(rows, dtype=np.float64) / (rows - 1)
    taper = 1.0 + (cfg.taper_top - 1.0) * r
    mix = r  # nose-pattern weight grows with height

    lands = []
    truths = []
    for j in range(n):
        k = (j - spec.rotation) % n
        left_h = right_h = cfg.groove_height_um
        if j in spec.groove_overrides:
            left_h, right_h = spec.groove_overrides[j]
        shape = _deterministic_shape(cfg, left_h, right_h)
        base = barrel.base_patterns[k]
        nose = barrel.nose_patterns[k]
        pattern = (1.0 - mix)[:, None] * base[None, :] + mix[:, None] * nose[None, :]
        heights = shape[None, :] + (taper[:, None] * wear) * pattern
        if noise_sd > 0:
            heights = heights + rng.normal(0.0, noise_sd, (rows, cols))
        mask = np.zeros((rows, cols), dtype=bool)
        for damage in spec.damages:
            if damage.land_index != j:
                continue
            if damage.kind == "break_off":
                a = math.sqrt(2.0 * damage.extent) * rows
                b = math.sqrt(2.0 * damage.extent) * cols
                rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
                mask |= (rr / a + cc / b) < 1.0
            elif damage.kind == "smear":
                width = int(damage.extent * cols)
                lo = (cols - width) // 2
                heights[:, lo:lo + width] = (
                    shape[None, lo:lo + width]
                    + 0.1 * (taper[:, None] * wear) * pattern[:, lo:lo + width])
                if noise_sd > 0:
                    heights[:, lo:lo + width] += rng.normal(0.0, noise_sd, (rows, width))
            else:
                raise ValueError(f"unknown damage kind {damage.kind}")
        margin = int(round(cfg.groove_margin_frac * cols))
        scan = SurfaceScan.create(
            land_id=f"{bullet_id}-L{j + 1}",
            bullet_id=bullet_id,
            heights=heights.astype(np.float32),
            x_res_um=cfg.x_res_um,
            y_res_um=cfg.y_res_um,
            mask=mask,
            barrel_id=barrel.barrel_id,
        )
        lands.append(scan)
        truths.append(LandTruth(
            source_land=k, base_pattern=base, nose_pattern=nose,
            shoulder_left=margin, shoulder_right=cols - margin - 1,
            wear=wear, deterministic_shape=shape))
    bullet = Bullet(bullet_id=bullet_id, lands=lands, n_lands=n)
    return FiredBullet(bullet=bullet,
                       truth=BulletTruth(barrel_id=barrel.barrel_id,
                                         rotation=spec.rotation, lands=truths))


@dataclass
class ManifestRow:
    bullet_a: str
    land_a: str
    bullet_b: str
    land_b: str
    label: str               # "same-source" | "different-source"
    barrel_a: str
    barrel_b: str
    rotation_a: int
    rotation_b: int


@dataclass
class Dataset:
    barrels: list
    bullets: list            # FiredBullet
    manifest: list           # ManifestRow
    train_barrels: list
    holdout_barrels: list
    n_lands: int
    seed: int

    def bullets_by_id(self) -> dict:
        return {fb.bullet.bullet_id: fb for fb in self.bullets}

    def manifest_digest(self) -> str:
        return digest_of([row.__dict__ for row in self.manifest])


def true_phase(a: FiredBullet, b: FiredBullet) -> int:
    """Ground-truth in-phase offset: land i of a matches land i+phase of b."""
    return (b.truth.rotation - a.truth.rotation) % a.bullet.n_lands


def same_source_lands(a: FiredBullet, la: int, b: FiredBullet, lb: int) -> bool:
    if a.truth.barrel_id != b.truth.barrel_id:
        return False
    n = a.bullet.n_lands
    return (la - a.truth.rotation) % n == (lb - b.truth.rotation) % n


def make_dataset(n_barrels: int, bullets_per_barrel: int, seed: int,
                 cfg: Optional[SynthConfig] = None, n_holdout: Optional[int] = None,
                 n_lands: int = 6, store=None) -> Dataset:
    """Seeded corpus: barrels, fired bullets, and a fully labeled land-pair
    manifest with a train/holdout barrel split. Holdout barrels never
    appear in training labels."""
    if n_barrels < 4:
        raise ValueError("need at least 4 barrels")
    cfg = cfg or SynthConfig()
    if n_holdout is None:
        n_holdout = max(1, n_barrels // 3)
    rot_rng = _rng(seed, "rotations")
    barrels = []
    fired = []
    for bi in range(n_barrels):
        barrel_seed = int(_rng(seed, "barrel-seed", bi).integers(0, 2 ** 31))
        barrel = make_barrel(barrel_seed, n_lands=n_lands, cfg=cfg,
                             barrel_id=f"BRL{bi + 1:02d}")
        barrels.append(barrel)
        for bj in range(bullets_per_barrel):
            rotation = int(rot_rng.integers(0, n_lands))
            spec = FiringSpec(rotation=rotation)
            fire_seed = int(_rng(seed, "fire-seed", bi, bj).integers(0, 2 ** 31))
            fb = fire_bullet(barrel, spec, fire_seed,
                             bullet_id=f"{barrel.barrel_id}-B{bj + 1}")
            fired.append(fb)
            if store is not None:
                store.put_bullet(fb.bullet, allow_replace=True)

    manifest = []
    for i in range(len(fired)):
        for j in range(i + 1, len(fired)):
            fa, fb = fired[i], fired[j]
            for la in range(n_lands):
                for lb in range(n_lands):
                    label = ("same-source" if same_source_lands(fa, la, fb, lb)
                             else "different-source")
                    manifest.append(ManifestRow(
                        bullet_a=fa.bullet.bullet_id,
                        land_a=fa.bullet.lands[la].land_id,
                        bullet_b=fb.bullet.bullet_id,
                        land_b=fb.bullet.lands[lb].land_id,
                        label=label,
                        barrel_a=fa.truth.barrel_id,
                        barrel_b=fb.truth.barrel_id,
                        rotation_a=fa.truth.rotation,
                        rotation_b=fb.truth.rotation,
                    ))
    train = [b.barrel_id for b in barrels[:n_barrels - n_holdout]]
    holdout = [b.barrel_id for b in barrels[n_barrels - n_holdout:]]
    return Dataset(barrels=barrels, bullets=fired, manifest=manifest,
                   train_barrels=train, holdout_barrels=holdout,
                   n_lands=n_lands, seed=seed)


def write_manifest_csv(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bullet_a,land_a,bullet_b,land_b,label,barrel_a,barrel_b,"
                 "rotation_a,rotation_b\n")
        for row in dataset.manifest:
            fh.write(f"{row.bullet_a},{row.land_a},{row.bullet_b},{row.land_b},"
                     f"{row.label},{row.barrel_a},{row.barrel_b},"
                     f"{row.rotation_a},{row.rotation_b}\n")
