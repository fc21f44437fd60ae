"""Land engraved area (LEA) scan data model and bit-exact file I/O.

A scan is a rectangular height grid in micrometres with an explicit
missing-data mask (break-off, dropouts). Row 0 is the bullet base; the
most prominent striation marks sit near the base, so orientation is
fixed in the data model rather than per operation.

LEASCAN1 byte layout:
  bytes 0..7    ASCII magic "LEASCAN1"
  bytes 8..11   u32 little-endian header length H
  bytes 12..12+H UTF-8 JSON header: bullet_id, land_id, rows, cols,
                x_res_um, y_res_um, optional barrel_id
  then rows*cols IEEE-754 float32 little-endian, row-major; NaN = masked
  no trailing bytes
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

from .digest import fnv1a64_hex
from .errors import (
    BadMagicError,
    CorruptHeaderError,
    DimensionMismatchError,
    InvalidScanError,
    NonFiniteUnmaskedError,
    TooSparseError,
)

MAGIC = b"LEASCAN1"
MIN_DIM = 32
MAX_MASK_FRACTION = 0.9


@dataclass(eq=False)
class SurfaceScan:
    """One LEA height grid. ``heights`` is float32 µm, ``mask`` True = missing."""

    land_id: str
    bullet_id: str
    heights: np.ndarray
    x_res_um: float
    y_res_um: float
    mask: np.ndarray
    barrel_id: Optional[str] = None

    @classmethod
    def create(cls, land_id, bullet_id, heights, x_res_um, y_res_um,
               mask=None, barrel_id=None) -> "SurfaceScan":
        """Normalizing constructor: NaN heights imply masked, masked heights
        are stored as NaN so round-trips are bit-exact."""
        heights = np.asarray(heights, dtype=np.float32)
        if mask is None:
            mask = np.zeros(heights.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool) | np.isnan(heights)
        heights = heights.copy()
        heights[mask] = np.nan
        return cls(land_id=land_id, bullet_id=bullet_id, heights=heights,
                   x_res_um=float(x_res_um), y_res_um=float(y_res_um),
                   mask=mask, barrel_id=barrel_id)

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    @property
    def mask_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 1.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurfaceScan):
            return NotImplemented
        return (
            self.land_id == other.land_id
            and self.bullet_id == other.bullet_id
            and self.barrel_id == other.barrel_id
            and self.x_res_um == other.x_res_um
            and self.y_res_um == other.y_res_um
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.heights, other.heights, equal_nan=True)
        )

    def header_dict(self) -> dict:
        header = {
            "bullet_id": self.bullet_id,
            "land_id": self.land_id,
            "rows": int(self.rows),
            "cols": int(self.cols),
            "x_res_um": self.x_res_um,
            "y_res_um": self.y_res_um,
        }
        if self.barrel_id is not None:
            header["barrel_id"] = self.barrel_id
        return header

    def digest(self) -> str:
        header, payload = _encode_parts(self)
        return fnv1a64_hex(header + payload)


@dataclass
class Bullet:
    """Ordered cyclic list of lands: index i is adjacent to (i+1) mod n."""

    bullet_id: str
    lands: list  # list[SurfaceScan]
    n_lands: int = 6

    def __post_init__(self):
        if len(self.lands) != self.n_lands:
            raise InvalidScanError(
                f"bullet {self.bullet_id}: {len(self.lands)} lands, expected {self.n_lands}")
        ids = [s.land_id for s in self.lands]
        if len(set(ids)) != len(ids):
            raise InvalidScanError(f"bullet {self.bullet_id}: duplicate land ids")


@dataclass(frozen=True)
class Violation:
    code: str
    location: Optional[tuple] = None
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_scan(scan: SurfaceScan) -> ValidationReport:
    """Check every SurfaceScan invariant; violations are data, not errors."""
    report = ValidationReport()
    rows, cols = scan.heights.shape
    if rows < MIN_DIM or cols < MIN_DIM:
        report.violations.append(Violation("GridTooSmall", (rows, cols),
                                           f"grid {rows}x{cols} below {MIN_DIM}x{MIN_DIM}"))
    if scan.x_res_um <= 0 or scan.y_res_um <= 0:
        report.violations.append(Violation("NonPositiveResolution", None,
                                           f"x={scan.x_res_um} y={scan.y_res_um}"))
    if scan.mask.shape != scan.heights.shape:
        report.violations.append(Violation("MaskShapeMismatch", scan.mask.shape, ""))
        return report
    bad = ~np.isfinite(scan.heights) & ~scan.mask
    if bad.any():
        for r, c in zip(*np.nonzero(bad)):
            report.violations.append(Violation("NonFiniteUnmasked", (int(r), int(c)), ""))
    if scan.mask_fraction >= MAX_MASK_FRACTION:
        report.violations.append(Violation("TooSparse", None,
                                           f"mask fraction {scan.mask_fraction:.3f}"))
    return report


def _encode_parts(scan: SurfaceScan) -> tuple[bytes, bytes]:
    header = json.dumps(scan.header_dict(), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(scan.heights, dtype="<f4").tobytes()
    return header, payload


def save_scan(scan: SurfaceScan, sink: BinaryIO) -> str:
    """Serialize to LEASCAN1; returns the content digest."""
    report = validate_scan(scan)
    if not report.ok:
        raise InvalidScanError("; ".join(v.code for v in report.violations))
    header, payload = _encode_parts(scan)
    sink.write(MAGIC)
    sink.write(struct.pack("<I", len(header)))
    sink.write(header)
    sink.write(payload)
    return fnv1a64_hex(header + payload)


def load_scan(source: BinaryIO) -> SurfaceScan:
    """Parse a LEASCAN1 stream and validate the result.

    Raises BadMagic, CorruptHeader, DimensionMismatch, TooSparse or
    NonFiniteUnmasked; NaN payload cells become masked cells.
    """
    blob = source.read()
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise BadMagicError("stream does not begin with LEASCAN1")
    (header_len,) = struct.unpack("<I", blob[8:12])
    header_bytes = blob[12:12 + header_len]
    if len(header_bytes) != header_len:
        raise CorruptHeaderError("declared header length exceeds stream")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeaderError(f"header is not valid JSON: {exc}") from exc
    required = {"bullet_id", "land_id", "rows", "cols", "x_res_um", "y_res_um"}
    missing = required - header.keys()
    if missing:
        raise CorruptHeaderError(f"header missing keys: {sorted(missing)}")
    rows, cols = int(header["rows"]), int(header["cols"])
    if rows <= 0 or cols <= 0:
        raise CorruptHeaderError(f"non-positive grid size {rows}x{cols}")
    payload = blob[12 + header_len:]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise DimensionMismatchError(
            f"header claims {rows}x{cols} ({expected} bytes), payload has {len(payload)}")
    heights = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    scan = SurfaceScan.create(
        land_id=str(header["land_id"]),
        bullet_id=str(header["bullet_id"]),
        heights=heights,
        x_res_um=float(header["x_res_um"]),
        y_res_um=float(header["y_res_um"]),
        barrel_id=str(header["barrel_id"]) if "barrel_id" in header else None,
    )
    report = validate_scan(scan)
    for violation in report.violations:
        if violation.code == "TooSparse":
            raise TooSparseError(violation.detail)
        if violation.code == "NonFiniteUnmasked":
            raise NonFiniteUnmaskedError(f"at {violation.location}")
    if not report.ok:
        raise InvalidScanError("; ".join(v.code for v in report.violations))
    return scan
