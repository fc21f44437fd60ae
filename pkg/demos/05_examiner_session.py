#!/usr/bin/env python3
"""A guided examiner session over the HTTP API, start to conclusion.

Stands up the service in-process, computes a 4-bullet case, then walks
the six information levels the way the workbench does: bullet scores
first, land scores with the match-hypothesis frame, aligned signatures,
grooves, profiles, raw scans, and finally an AFTE conclusion. Emits the
session report bundle at the end.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from leamatch import Config
from leamatch.forest import train_forest
from leamatch.report import write_report
from leamatch.service import AppState, create_app
from leamatch.store import ScanStore
from leamatch.synth import make_dataset
from leamatch.training import build_training_set, signatures_for_dataset

cfg = Config()
workdir = Path(tempfile.mkdtemp(prefix="leamatch-demo-"))
store = ScanStore(workdir / "store")

print("building corpus and forest (seed 7)...")
dataset = make_dataset(6, 3, seed=7, cfg=cfg.synth, n_holdout=2)
signatures = signatures_for_dataset(dataset.bullets, cfg)
fvs, labels = build_training_set(dataset, cfg, seed=7, signatures=signatures)
forest = train_forest(fvs, labels, cfg.forest, seed=7)

holdout = [fb for fb in dataset.bullets
           if fb.truth.barrel_id in dataset.holdout_barrels][:4]
for fired in holdout:
    store.put_bullet(fired.bullet)

state = AppState(store, forest=forest, cfg=cfg)
client = TestClient(create_app(state))

resp = client.post("/api/v1/cases/demo/compute", json={})
print(f"computed case: {resp.json()['artifact_digest']}")

session = client.post("/api/v1/sessions",
                      json={"case_id": "demo", "mode": "guided"}).json()
sid = session["session_id"]
print(f"\nsession {sid[:8]}… opens at level {session['active_levels']}")

level1 = client.get(f"/api/v1/sessions/{sid}/levels/1").json()
ids = level1["bullet_ids"]
print("level 1, bullet-to-bullet scores (diagonal = self, by convention):")
for i, row in enumerate(level1["scores"]):
    cells = " ".join("  -  " if v is None else f"{v:.3f}" for v in row)
    print(f"  {ids[i]:>10}  {cells}")

# the examiner picks the most interesting off-diagonal pair
best = max(((i, j) for i in range(len(ids)) for j in range(len(ids)) if i != j),
           key=lambda ij: level1["scores"][ij[0]][ij[1]] or 0)
pair = [ids[best[0]], ids[best[1]]]
client.post(f"/api/v1/sessions/{sid}/selection", json={"bullet_pair": pair})
client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 2})
client.post(f"/api/v1/sessions/{sid}/match-frame",
            json={"enabled": True, "hypothesis_phase": 0})
level2 = client.get(f"/api/v1/sessions/{sid}/levels/2").json()
print(f"\nlevel 2, land scores for {pair[0]} vs {pair[1]} "
      f"(match frame at phase 0 covers {len(level2['match_frame']['cells'])} cells)")

client.post(f"/api/v1/sessions/{sid}/selection", json={"land_pair": [0, 0]})
for level in (3, 4, 5, 6):
    client.post(f"/api/v1/sessions/{sid}/levels", json={"level": level})
level3 = client.get(f"/api/v1/sessions/{sid}/levels/3").json()
print(f"level 3, aligned signatures: lag {level3['lag']} samples, "
      f"ccf {level3['ccf']:.3f}")
level6 = client.get(f"/api/v1/sessions/{sid}/levels/6").json()
print(f"level 6, scans: crosscut rows {level6['a']['crosscut_row']} / "
      f"{level6['b']['crosscut_row']}")

resp = client.post(f"/api/v1/sessions/{sid}/conclusion",
                   json={"category": "identification",
                         "rationale": "in-phase agreement across all levels"})
print(f"\nconcluded: {resp.json()['conclusion']['category']} "
      f"after levels {resp.json()['conclusion']['levels_visited_at_decision']}")

report = write_report(state.sessions_dir, state.cases_dir, sid,
                      workdir / "reports")
print(f"report bundle: {report}")
