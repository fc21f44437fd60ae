"""Per-session report bundle: markdown summary + CSV audit timeline.

Ground truth (generator labels) is revealed only here, via an explicit
flag and a manifest file, never through session payloads: the examiner
sees it after concluding, as a self-assessment aid.
"""

from __future__ import annotations

import csv
import datetime
import json
from pathlib import Path

from .artifacts import load_case
from .session import ExaminerSession, replay


def _fmt_ts(ms: int) -> str:
    return datetime.datetime.fromtimestamp(ms / 1000.0,
                                           tz=datetime.timezone.utc).isoformat()


def load_session_events(sessions_dir, session_id: str) -> list:
    path = Path(sessions_dir) / f"{session_id}.events.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no event log for session {session_id}")
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def truth_labels_from_manifest(manifest_path, bullet_ids) -> dict:
    """(bullet_a, bullet_b) -> same/different barrel, from a generator manifest."""
    pairs = {}
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            a, b = row["bullet_a"], row["bullet_b"]
            if a in bullet_ids and b in bullet_ids:
                key = tuple(sorted((a, b)))
                pairs[key] = "same barrel" if row["barrel_a"] == row["barrel_b"] \
                    else "different barrels"
    return pairs


def write_report(sessions_dir, cases_dir, session_id: str, out_dir,
                 reveal_truth: bool = False, manifest_path=None) -> Path:
    events = load_session_events(sessions_dir, session_id)
    session = replay(events)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    audit_csv = out / f"{session_id}_audit.csv"
    with open(audit_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seq", "timestamp_utc", "action", "params"])
        for event in events:
            writer.writerow([event["seq"], _fmt_ts(event["timestamp"]),
                             event["action"], json.dumps(event["params"], sort_keys=True)])

    lines = [
        f"# Examiner session report: {session_id}",
        "",
        f"- case: `{session.case_id}`",
        f"- mode: {session.mode}",
        f"- bullets: {', '.join(session.bullet_ids)}",
        f"- levels visited: {sorted(session.active_levels)}",
    ]
    if session.conclusion is not None:
        lines += [
            f"- conclusion: **{session.conclusion.category}**",
            f"- levels at decision: {session.conclusion.levels_visited_at_decision}",
        ]
        if session.conclusion.rationale:
            lines += ["", "## Rationale", "", session.conclusion.rationale]
    else:
        lines.append("- conclusion: (none recorded)")
    lines += ["", "## Audit timeline", ""]
    lines.append("| seq | time (UTC) | action | params |")
    lines.append("|----:|------------|--------|--------|")
    for event in events:
        params = json.dumps(event["params"], sort_keys=True)
        lines.append(f"| {event['seq']} | {_fmt_ts(event['timestamp'])} | "
                     f"{event['action']} | `{params}` |")

    if reveal_truth:
        lines += ["", "## Ground truth (generator labels)", ""]
        if manifest_path is None:
            lines.append("_no manifest supplied; truth unavailable_")
        else:
            labels = truth_labels_from_manifest(manifest_path, set(session.bullet_ids))
            lines.append("| bullet pair | truth |")
            lines.append("|-------------|-------|")
            for (a, b), label in sorted(labels.items()):
                lines.append(f"| {a} vs {b} | {label} |")

    try:
        doc = load_case(cases_dir, session.case_id)
        lines += ["", "## Bullet-to-bullet scores", ""]
        ids = doc["bullet_ids"]
        lines.append("| | " + " | ".join(ids) + " |")
        lines.append("|" + "---|" * (len(ids) + 1))
        for i, id_a in enumerate(ids):
            cells = []
            for j in range(len(ids)):
                cell = doc["bullet_grid"][i][j]
                mark = "*" if cell["by_convention"] else ""
                cells.append("" if cell["score"] is None
                             else f"{cell['score']:.3f}{mark}")
            lines.append(f"| {id_a} | " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("`*` self-comparison shown as 1.0 by convention.")
    except Exception:
        lines += ["", "_case artifacts unavailable for score table_"]

    report_md = out / f"{session_id}_report.md"
    report_md.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report_md
