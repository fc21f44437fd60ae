"""Case artifact computation and level payload assembly.

compute_case runs the full pipeline for every bullet of a case once and
persists the results (signatures, feature grids, score matrices, bullet
grid) under a config digest; session payloads are assembled from these
stored artifacts and are never recomputed with different settings
mid-session.

Payloads carry measurements and scores only. There is deliberately no
field for a recommendation, verbal verdict or threshold at any level.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Config
from .digest import digest_of
from .errors import (AllMaskedError, FeatureUnavailableError, MissingSelectionError,
                     ScoresNotComputedError, UnknownCaseError)
from .compare import FeatureVector, features
from .forest import Forest, score_land_pair
from .pipeline import scan_to_signature
from .scan import SurfaceScan
from .scoring import ScoreMatrix, best_phase, expected_match_frame
from .session import ExaminerSession
from .store import ScanStore


def _listify(values) -> list:
    """float array -> JSON-safe list (NaN becomes None)."""
    out = []
    for v in np.asarray(values, dtype=np.float64):
        out.append(None if not math.isfinite(v) else float(v))
    return out


def _fv_dict(fv: FeatureVector) -> dict:
    return {
        "ccf": fv.ccf, "lag_um": fv.lag_um, "D": fv.mean_abs_diff,
        "n_matches": fv.n_matches, "n_mismatches": fv.n_mismatches,
        "cms": fv.cms, "non_cms": fv.non_cms,
        "sum_peaks": fv.sum_peak_heights, "overlap_frac": fv.overlap_frac,
    }


def pair_key(bullet_a: str, bullet_b: str) -> str:
    return "|".join(sorted((bullet_a, bullet_b)))


def compute_case(store: ScanStore, case_id: str, bullet_ids, forest: Forest,
                 cfg: Optional[Config] = None,
                 row_overrides: Optional[dict] = None) -> dict:
    """Run the pipeline for every land and pair of a case.

    Per-land failures become masked matrix cells, never a case failure;
    the case fails only if every pair is unavailable. ``row_overrides``
    maps (bullet_id, land_index) to a forced crosscut row.
    """
    cfg = cfg or Config()
    bullet_ids = sorted(bullet_ids)
    lands_doc = {}
    signatures = {}
    n_lands = None
    for bullet_id in bullet_ids:
        land_ids = store.land_ids(bullet_id)
        if n_lands is None:
            n_lands = len(land_ids)
        per_land = []
        sigs = []
        for idx, land_id in enumerate(land_ids):
            scan = store.get(bullet_id, land_id)
            override = (row_overrides or {}).get((bullet_id, idx))
            try:
                selection, profile, grooves, signature = scan_to_signature(
                    scan, cfg, row_override=override)
                per_land.append({
                    "land_id": land_id,
                    "status": "ok",
                    "crosscut_row": selection.row_index,
                    "crosscut_stability": None if math.isnan(selection.stability)
                    else selection.stability,
                    "grooves": {
                        "left_index": grooves.left_index,
                        "right_index": grooves.right_index,
                        "left_found": grooves.left_found,
                        "right_found": grooves.right_found,
                    },
                    "profile": {"values": _listify(profile.values),
                                "mask": [bool(m) for m in profile.mask]},
                    "signature": {"values": _listify(signature.residuals),
                                  "mask": [bool(m) for m in signature.mask]},
                    "x_res_um": scan.x_res_um,
                })
                sigs.append((signature, None))
            except Exception as exc:
                code = getattr(exc, "code", type(exc).__name__)
                per_land.append({"land_id": land_id, "status": code})
                sigs.append((None, code))
        lands_doc[bullet_id] = per_land
        signatures[bullet_id] = sigs

    pairs_doc = {}
    any_scored = False
    for i in range(len(bullet_ids)):
        for j in range(i + 1, len(bullet_ids)):
            id_a, id_b = bullet_ids[i], bullet_ids[j]
            n = n_lands
            scores = [[None] * n for _ in range(n)]
            grid = [[None] * n for _ in range(n)]
            for la in range(n):
                for lb in range(n):
                    sig_a = signatures[id_a][la][0]
                    sig_b = signatures[id_b][lb][0]
                    if sig_a is None or sig_b is None:
                        continue
                    try:
                        fv = features(sig_a, sig_b, cfg)
                    except FeatureUnavailableError:
                        continue
                    grid[la][lb] = _fv_dict(fv)
                    scores[la][lb] = score_land_pair(forest, fv)
                    any_scored = True
            matrix = ScoreMatrix(
                bullet_a=id_a, bullet_b=id_b, n=n,
                scores=np.array([[np.nan if s is None else s for s in row]
                                 for row in scores]),
                feature_grid=grid,
                unavailable=np.array([[s is None for s in row] for row in scores]))
            try:
                phase = best_phase(matrix)
                phase_doc = {
                    "phase": phase.phase,
                    "per_phase_means": phase.per_phase_means,
                    "bullet_score": phase.bullet_score,
                    "cells_used": phase.cells_used,
                    "degraded": phase.degraded,
                }
            except AllMaskedError:
                phase_doc = None
            pairs_doc[pair_key(id_a, id_b)] = {
                "bullet_a": id_a, "bullet_b": id_b,
                "scores": scores, "features": grid, "phase": phase_doc,
            }
    if pairs_doc and not any_scored:
        raise AllMaskedError(f"every pair of case {case_id} is unavailable")

    grid_doc = []
    for id_a in bullet_ids:
        row = []
        for id_b in bullet_ids:
            if id_a == id_b:
                row.append({"score": 1.0, "by_convention": True, "phase": None})
            else:
                pair = pairs_doc[pair_key(id_a, id_b)]
                phase = pair["phase"]
                row.append({
                    "score": None if phase is None else phase["bullet_score"],
                    "by_convention": False,
                    "phase": None if phase is None else phase["phase"],
                })
        grid_doc.append(row)

    doc = {
        "case_id": case_id,
        "bullet_ids": bullet_ids,
        "n_lands": n_lands,
        "cfg_digest": cfg.digest(),
        "forest_digest": forest.training_digest,
        "lands": lands_doc,
        "pairs": pairs_doc,
        "bullet_grid": grid_doc,
    }
    doc["artifact_digest"] = digest_of({k: v for k, v in doc.items()
                                        if k != "artifact_digest"})
    return doc


def save_case(doc: dict, cases_dir) -> Path:
    case_dir = Path(cases_dir) / doc["case_id"]
    case_dir.mkdir(parents=True, exist_ok=True)
    path = case_dir / "artifacts.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
    return path


def load_case(cases_dir, case_id: str) -> dict:
    path = Path(cases_dir) / case_id / "artifacts.json"
    if not path.exists():
        raise UnknownCaseError(f"case {case_id} has no computed artifacts")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# --- level payloads ----------------------------------------------------------

def _oriented_pair(doc: dict, bullet_a: str, bullet_b: str):
    """Stored pair doc plus a transpose flag when the selection order is
    reversed relative to storage (scores are symmetric, lag flips sign)."""
    pair = doc["pairs"].get(pair_key(bullet_a, bullet_b))
    if pair is None:
        raise UnknownCaseError(f"no computed pair for ({bullet_a}, {bullet_b})")
    return pair, pair["bullet_a"] != bullet_a


def _pair_cell(pair: dict, transposed: bool, i: int, j: int):
    si, sj = (j, i) if transposed else (i, j)
    score = pair["scores"][si][sj]
    fv = pair["features"][si][sj]
    if fv is not None and transposed:
        fv = {**fv, "lag_um": -fv["lag_um"]}
    return score, fv


def _require_selection(session: ExaminerSession, level: int) -> None:
    if level >= 2 and session.bullet_pair is None:
        raise MissingSelectionError(f"level {level} payload needs a bullet pair")
    if level >= 3 and session.land_pair is None:
        raise MissingSelectionError(f"level {level} payload needs a land pair")


def _land_entry(doc: dict, bullet_id: str, index: int) -> dict:
    lands = doc["lands"].get(bullet_id)
    if lands is None or not 0 <= index < len(lands):
        raise UnknownCaseError(f"no land {index} for bullet {bullet_id}")
    return lands[index]


def _downsample(scan: SurfaceScan, target: int = 160):
    factor = max(1, math.ceil(max(scan.rows, scan.cols) / target))
    rows = scan.rows // factor
    cols = scan.cols // factor
    heights = scan.heights[:rows * factor, :cols * factor].astype(np.float64)
    mask = scan.mask[:rows * factor, :cols * factor]
    blocks = heights.reshape(rows, factor, cols, factor)
    good = ~mask.reshape(rows, factor, cols, factor)
    counts = good.sum(axis=(1, 3))
    sums = np.where(good, blocks, 0.0).sum(axis=(1, 3))
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    mask_frac = 1.0 - counts / (factor * factor)
    return means, mask_frac, factor


def payload_for_level(doc: dict, session: ExaminerSession, level: int,
                      store: Optional[ScanStore] = None) -> dict:
    """Assemble the content of one active information level."""
    if level == 1:
        ids = doc["bullet_ids"]
        grid = doc["bullet_grid"]
        hover = [[{
            "bullet_a": ids[i], "bullet_b": ids[j],
            "score": grid[i][j]["score"],
            "by_convention": grid[i][j]["by_convention"],
            "phase": grid[i][j]["phase"],
        } for j in range(len(ids))] for i in range(len(ids))]
        return {
            "level": 1,
            "bullet_ids": ids,
            "scores": [[cell["score"] for cell in row] for row in grid],
            "by_convention": [[cell["by_convention"] for cell in row] for row in grid],
            "hover": hover,
        }

    _require_selection(session, level)
    bullet_a, bullet_b = session.bullet_pair

    if level == 2:
        pair, transposed = _oriented_pair(doc, bullet_a, bullet_b)
        n = doc["n_lands"]
        scores = [[None] * n for _ in range(n)]
        feats = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                scores[i][j], feats[i][j] = _pair_cell(pair, transposed, i, j)
        land_ids_a = [entry["land_id"] for entry in doc["lands"][bullet_a]]
        land_ids_b = [entry["land_id"] for entry in doc["lands"][bullet_b]]
        payload = {
            "level": 2,
            "bullet_a": bullet_a, "bullet_b": bullet_b,
            "land_ids_a": land_ids_a, "land_ids_b": land_ids_b,
            "scores": scores,
            "features": feats,
            "match_frame": None,
        }
        if session.match_frame_enabled:
            payload["match_frame"] = {
                "hypothesis_phase": session.match_frame_phase,
                "cells": [list(c) for c in
                          expected_match_frame(n, session.match_frame_phase)],
            }
        return payload

    land_a, land_b = session.land_pair
    entry_a = _land_entry(doc, bullet_a, land_a)
    entry_b = _land_entry(doc, bullet_b, land_b)

    if level == 3:
        pair, transposed = _oriented_pair(doc, bullet_a, bullet_b)
        _, fv = _pair_cell(pair, transposed, land_a, land_b)
        if entry_a["status"] != "ok" or entry_b["status"] != "ok" or fv is None:
            return {
                "level": 3, "bullet_a": bullet_a, "bullet_b": bullet_b,
                "land_a": land_a, "land_b": land_b, "available": False,
                "status_a": entry_a["status"], "status_b": entry_b["status"],
            }
        x_res = entry_a["x_res_um"]
        return {
            "level": 3,
            "bullet_a": bullet_a, "bullet_b": bullet_b,
            "land_a": land_a, "land_b": land_b,
            "available": True,
            "a": entry_a["signature"],
            "b": entry_b["signature"],
            "lag": int(round(fv["lag_um"] / x_res)),
            "ccf": fv["ccf"],
            "x_res_um": x_res,
        }

    if level in (4, 5):
        def side(entry):
            if entry["status"] != "ok":
                return {"status": entry["status"], "available": False}
            out = {
                "status": "ok", "available": True,
                "land_id": entry["land_id"],
                "profile": entry["profile"],
                "x_res_um": entry["x_res_um"],
            }
            if level == 4:
                out["grooves"] = entry["grooves"]
            return out
        return {
            "level": level,
            "bullet_a": bullet_a, "bullet_b": bullet_b,
            "land_a": land_a, "land_b": land_b,
            "a": side(entry_a),
            "b": side(entry_b),
        }

    if level == 6:
        if store is None:
            raise ScoresNotComputedError("level 6 needs the scan store")

        def scan_side(bullet_id, entry):
            scan = store.get(bullet_id, entry["land_id"])
            means, mask_frac, factor = _downsample(scan)
            return {
                "status": entry["status"],
                "land_id": entry["land_id"],
                "rows": scan.rows, "cols": scan.cols,
                "x_res_um": scan.x_res_um, "y_res_um": scan.y_res_um,
                "downsample_factor": factor,
                "heights": [_listify(row) for row in means],
                "mask_fraction": [[float(v) for v in row] for row in mask_frac],
                "crosscut_row": entry.get("crosscut_row"),
            }
        return {
            "level": 6,
            "bullet_a": bullet_a, "bullet_b": bullet_b,
            "land_a": land_a, "land_b": land_b,
            "a": scan_side(bullet_a, entry_a),
            "b": scan_side(bullet_b, entry_b),
        }

    raise ValueError(f"no payload for level {level}")
