"""Examiner session engine: sequentially unlocked information levels.

Level order (guided mode unlocks them strictly one at a time):
  1 bullet-to-bullet score heatmap        (always active at creation)
  2 land-to-land score heatmap            (needs a selected bullet pair)
  3 aligned signatures                    (needs a selected land pair)
  4 groove identification on the profiles
  5 side-by-side profiles
  6 the two LEA scans

Earlier levels never vanish. Diagnostics mode relaxes the ordering so
stages can be inspected out of sequence, but every level still demands
its selection prerequisites. Payloads carry data only; no stage offers a
recommendation, verbal verdict or threshold.

Sessions are event-sourced: every mutation validates against current
state, then appends exactly one audit event; replaying the audit log
against a fresh session reproduces the final state bit-exactly.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import (
    AlreadyActiveError,
    AlreadyConcludedError,
    BadPhaseError,
    LevelNotActiveError,
    MissingSelectionError,
    OutOfOrderError,
    PrematureConclusionError,
    UnknownIdError,
)

GUIDED = "guided"
DIAGNOSTICS = "diagnostics"
LEVELS = (1, 2, 3, 4, 5, 6)

CONCLUSION_CATEGORIES = ("identification", "elimination", "inconclusive", "unsuitable")
#: categories requiring the full guided walk before they may be recorded
FINAL_CATEGORIES = ("identification", "elimination")


@dataclass
class AfteConclusion:
    category: str
    rationale: str = ""
    levels_visited_at_decision: list = field(default_factory=list)


@dataclass
class ExaminerSession:
    session_id: str
    case_id: str
    mode: str
    bullet_ids: list
    n_lands: int
    active_levels: list = field(default_factory=lambda: [1])
    bullet_pair: Optional[list] = None   # [bullet_id, bullet_id]
    land_pair: Optional[list] = None     # [i, j] land indices
    match_frame_enabled: bool = False
    match_frame_phase: int = 0
    audit: list = field(default_factory=list)
    conclusion: Optional[AfteConclusion] = None

    @property
    def concluded(self) -> bool:
        return self.conclusion is not None

    def to_dict(self) -> dict:
        data = asdict(self)
        return data


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _event(session: ExaminerSession, action: str, params: dict,
           timestamp: Optional[int] = None) -> dict:
    return {
        "seq": len(session.audit),
        "timestamp": _now_ms() if timestamp is None else timestamp,
        "action": action,
        "params": params,
    }


def _require_live(session: ExaminerSession) -> None:
    if session.concluded:
        raise AlreadyConcludedError("session is frozen after its conclusion")


def create_session(case_id: str, bullet_ids, n_lands: int, mode: str = GUIDED,
                   session_id: Optional[str] = None,
                   timestamp: Optional[int] = None) -> ExaminerSession:
    """New session with level 1 active (the first stage is presented
    automatically) and a Created audit entry."""
    if mode not in (GUIDED, DIAGNOSTICS):
        raise ValueError(f"unknown mode {mode!r}")
    session = ExaminerSession(
        session_id=session_id or uuid.uuid4().hex,
        case_id=case_id,
        mode=mode,
        bullet_ids=list(bullet_ids),
        n_lands=n_lands,
    )
    session.audit.append(_event(session, "created", {
        "case_id": case_id, "mode": mode, "bullet_ids": list(bullet_ids),
        "n_lands": n_lands, "session_id": session.session_id,
    }, timestamp))
    return session


def _selection_satisfied(session: ExaminerSession, level: int) -> None:
    if level == 2 and session.bullet_pair is None:
        raise MissingSelectionError("level 2 requires a selected bullet pair")
    if level >= 3 and (session.bullet_pair is None or session.land_pair is None):
        raise MissingSelectionError(f"level {level} requires a selected land pair")


def add_level(session: ExaminerSession, level: int,
              timestamp: Optional[int] = None) -> ExaminerSession:
    """Activate one more information level.

    Guided mode accepts only max(active)+1 (the willful, check-box step);
    diagnostics mode accepts any level whose selections are in place.
    """
    _require_live(session)
    if level not in LEVELS:
        raise OutOfOrderError(f"no level {level}")
    if level in session.active_levels:
        raise AlreadyActiveError(f"level {level} already active")
    if session.mode == GUIDED and level != max(session.active_levels) + 1:
        raise OutOfOrderError(
            f"guided mode unlocks level {max(session.active_levels) + 1} next, not {level}")
    _selection_satisfied(session, level)
    session.audit.append(_event(session, "level_added", {"level": level}, timestamp))
    session.active_levels.append(level)
    session.active_levels.sort()
    return session


def select_bullet_pair(session: ExaminerSession, bullet_a: str, bullet_b: str,
                       timestamp: Optional[int] = None) -> ExaminerSession:
    _require_live(session)
    for bullet_id in (bullet_a, bullet_b):
        if bullet_id not in session.bullet_ids:
            raise UnknownIdError(f"bullet {bullet_id} not in case")
    session.audit.append(_event(session, "bullet_pair_selected",
                                {"bullet_a": bullet_a, "bullet_b": bullet_b}, timestamp))
    session.bullet_pair = [bullet_a, bullet_b]
    if session.mode == GUIDED:
        # the land selection belonged to the previous pair's heatmap
        session.land_pair = None
        session.active_levels = [k for k in session.active_levels if k <= 2]
    return session


def select_land_pair(session: ExaminerSession, land_a: int, land_b: int,
                     timestamp: Optional[int] = None) -> ExaminerSession:
    _require_live(session)
    if 2 not in session.active_levels:
        raise LevelNotActiveError("land selection happens on the level 2 heatmap")
    if not (0 <= land_a < session.n_lands and 0 <= land_b < session.n_lands):
        raise UnknownIdError(f"land pair ({land_a}, {land_b}) outside 0..{session.n_lands - 1}")
    session.audit.append(_event(session, "land_pair_selected",
                                {"land_a": land_a, "land_b": land_b}, timestamp))
    changed = session.land_pair is not None and session.land_pair != [land_a, land_b]
    session.land_pair = [land_a, land_b]
    if session.mode == GUIDED and changed:
        # downstream payloads referred to the old pair; drop them
        session.active_levels = [k for k in session.active_levels if k <= 2]
    return session


def set_match_frame(session: ExaminerSession, enabled: bool, hypothesis_phase: int = 0,
                    timestamp: Optional[int] = None) -> ExaminerSession:
    """Toggle the match-hypothesis frame overlay on the level 2 heatmap;
    a pure overlay, scores are untouched."""
    _require_live(session)
    if 2 not in session.active_levels:
        raise LevelNotActiveError("the match frame lives on the level 2 heatmap")
    if not 0 <= hypothesis_phase < session.n_lands:
        raise BadPhaseError(f"phase {hypothesis_phase} outside [0, {session.n_lands})")
    session.audit.append(_event(session, "match_frame_set",
                                {"enabled": bool(enabled), "hypothesis_phase": hypothesis_phase},
                                timestamp))
    session.match_frame_enabled = bool(enabled)
    session.match_frame_phase = int(hypothesis_phase)
    return session


def record_conclusion(session: ExaminerSession, category: str, rationale: str = "",
                      timestamp: Optional[int] = None) -> ExaminerSession:
    """Freeze the session with one of the four AFTE conclusions.

    Guided mode demands all six levels before identification or
    elimination; inconclusive and unsuitable are available from level 1.
    Diagnostics mode demands at least one active level (always true).
    """
    _require_live(session)
    if category not in CONCLUSION_CATEGORIES:
        raise ValueError(f"category must be one of {CONCLUSION_CATEGORIES}")
    if session.mode == GUIDED and category in FINAL_CATEGORIES:
        if set(session.active_levels) != set(LEVELS):
            raise PrematureConclusionError(
                f"{category} requires all levels {list(LEVELS)}; "
                f"active {session.active_levels}")
    session.audit.append(_event(session, "conclusion_recorded",
                                {"category": category, "rationale": rationale}, timestamp))
    session.conclusion = AfteConclusion(
        category=category, rationale=rationale,
        levels_visited_at_decision=sorted(session.active_levels))
    return session


def replay(events: list) -> ExaminerSession:
    """Rebuild a session by applying its audit log to a fresh state.

    Events carry their original timestamps, so the rebuilt session equals
    the live one bit-exactly.
    """
    if not events or events[0]["action"] != "created":
        raise ValueError("audit log must start with a created event")
    params = events[0]["params"]
    session = create_session(
        case_id=params["case_id"], bullet_ids=params["bullet_ids"],
        n_lands=params["n_lands"], mode=params["mode"],
        session_id=params["session_id"], timestamp=events[0]["timestamp"])
    for event in events[1:]:
        action, p, ts = event["action"], event["params"], event["timestamp"]
        if action == "level_added":
            add_level(session, p["level"], timestamp=ts)
        elif action == "bullet_pair_selected":
            select_bullet_pair(session, p["bullet_a"], p["bullet_b"], timestamp=ts)
        elif action == "land_pair_selected":
            select_land_pair(session, p["land_a"], p["land_b"], timestamp=ts)
        elif action == "match_frame_set":
            set_match_frame(session, p["enabled"], p["hypothesis_phase"], timestamp=ts)
        elif action == "conclusion_recorded":
            record_conclusion(session, p["category"], p["rationale"], timestamp=ts)
        else:
            raise ValueError(f"unknown audit action {action!r}")
    return session


def guided_prefix_ok(session: ExaminerSession) -> bool:
    """Invariant check: in guided mode the active levels are always a
    prefix 1..k of the level sequence."""
    levels = sorted(session.active_levels)
    return levels == list(range(1, len(levels) + 1))
