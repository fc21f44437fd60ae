"""Pipeline configuration: every tolerance and hyperparameter in one place.

The on-disk form is a single INI document (section per stage). A config
digest is stored alongside every computed artifact so payloads can never
silently mix results from different settings.
"""

from __future__ import annotations

import ast
import configparser
import io
from dataclasses import asdict, dataclass, field

from .digest import digest_of


@dataclass(frozen=True)
class CrosscutConfig:
    min_row_offset: int = 10
    band: int = 5
    delta: int = 25
    stability_threshold: float = 0.9
    max_band_mask_frac: float = 0.05


@dataclass(frozen=True)
class GrooveConfig:
    shoulder_fraction: float = 0.25
    rise_threshold_um: float = 4.0
    persistence: int = 5
    min_interior: int = 64


@dataclass(frozen=True)
class LowessConfig:
    span_fraction: float = 0.30
    degree: int = 2


@dataclass(frozen=True)
class SignatureConfig:
    max_gap_frac: float = 0.10


@dataclass(frozen=True)
class AlignConfig:
    min_overlap_frac: float = 0.30


@dataclass(frozen=True)
class ExtremaConfig:
    smooth_window: int = 11
    min_prominence_um: float = 0.3
    match_tol: int = 8


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 8
    min_leaf: int = 5
    feature_subset_size: int = 3


@dataclass(frozen=True)
class SynthConfig:
    rows: int = 96
    cols: int = 1536
    x_res_um: float = 1.5625
    y_res_um: float = 1.5625
    correlation_length: int = 12
    latent_sd_um: float = 1.5
    curvature_depth_um: float = 30.0
    groove_height_um: float = 30.0
    groove_margin_frac: float = 0.12
    taper_top: float = 0.35
    wear_jitter: float = 0.10
    noise_sd_um: float = 0.15
    max_latent_correlation: float = 0.25


@dataclass(frozen=True)
class Config:
    crosscut: CrosscutConfig = field(default_factory=CrosscutConfig)
    grooves: GrooveConfig = field(default_factory=GrooveConfig)
    lowess: LowessConfig = field(default_factory=LowessConfig)
    signature: SignatureConfig = field(default_factory=SignatureConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    extrema: ExtremaConfig = field(default_factory=ExtremaConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def digest(self) -> str:
        return digest_of(asdict(self))

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, values in asdict(self).items():
            parser[section] = {k: repr(v) for k, v in values.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


_SECTIONS = {
    "crosscut": CrosscutConfig,
    "grooves": GrooveConfig,
    "lowess": LowessConfig,
    "signature": SignatureConfig,
    "align": AlignConfig,
    "extrema": ExtremaConfig,
    "forest": ForestConfig,
    "synth": SynthConfig,
}


def load_config(path) -> Config:
    """Read an INI config document; absent sections/keys keep defaults."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    kwargs = {}
    for section, cls in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        defaults = cls()
        values = {}
        for key in parser[section]:
            if not hasattr(defaults, key):
                raise ValueError(f"unknown config key [{section}] {key}")
            current = getattr(defaults, key)
            raw = parser[section][key]
            values[key] = type(current)(ast.literal_eval(raw))
        kwargs[section] = cls(**{**asdict(defaults), **values})
    return Config(**kwargs)


def save_config(cfg: Config, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_ini())
