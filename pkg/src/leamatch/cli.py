"""Unified command line: leamatch ingest|synth|train|score|serve|report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import Config, load_config, save_config


def _load_cfg(args) -> Config:
    if getattr(args, "config", None):
        return load_config(args.config)
    return Config()


def cmd_ingest(args) -> int:
    from .store import ScanStore
    store = ScanStore(args.store)
    loaded = store.ingest_directory(args.directory)
    print(f"ingested {len(loaded)} scans into {args.store}")
    return 0


def cmd_synth(args) -> int:
    from .store import ScanStore
    from .synth import make_dataset, write_manifest_csv
    from .scan import save_scan
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = ScanStore(args.store) if args.store else None
    dataset = make_dataset(args.barrels, args.bullets, args.seed,
                           cfg=cfg.synth, n_holdout=args.holdout, store=store)
    for fired in dataset.bullets:
        for scan in fired.bullet.lands:
            path = out / f"{scan.bullet_id}__{scan.land_id}.leascan"
            with open(path, "wb") as fh:
                save_scan(scan, fh)
    write_manifest_csv(dataset, out / "manifest.csv")
    print(f"wrote {sum(len(f.bullet.lands) for f in dataset.bullets)} scans, "
          f"manifest digest {dataset.manifest_digest()}")
    print(f"train barrels: {','.join(dataset.train_barrels)}")
    print(f"holdout barrels: {','.join(dataset.holdout_barrels)}")
    return 0


def cmd_train(args) -> int:
    from .forest import save_forest, train_forest
    from .synth import make_dataset
    from .training import build_training_set
    cfg = _load_cfg(args)
    dataset = make_dataset(args.barrels, args.bullets, args.seed,
                           cfg=cfg.synth, n_holdout=args.holdout)
    fvs, labels = build_training_set(dataset, cfg, seed=args.seed)
    forest = train_forest(fvs, labels, cfg.forest, seed=args.seed)
    digest = save_forest(forest, args.out)
    oob = "n/a" if forest.oob_accuracy is None else f"{forest.oob_accuracy:.3f}"
    print(f"trained {cfg.forest.n_trees} trees on {len(labels)} pairs "
          f"(oob accuracy {oob}); digest {digest}")
    return 0


def cmd_score(args) -> int:
    from .artifacts import compute_case, save_case
    from .forest import load_forest
    from .store import ScanStore
    cfg = _load_cfg(args)
    store = ScanStore(args.store)
    forest = load_forest(args.forest)
    bullet_ids = args.bullet_ids.split(",") if args.bullet_ids else store.bullet_ids()
    doc = compute_case(store, args.case_id, bullet_ids, forest, cfg)
    cases_dir = Path(args.store) / "cases"
    path = save_case(doc, cases_dir)
    print(f"case {args.case_id}: {len(doc['bullet_ids'])} bullets, "
          f"artifact digest {doc['artifact_digest']}")
    print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import build_app
    app = build_app(args.store, forest_path=args.forest, config_path=args.config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_report(args) -> int:
    from .report import write_report
    root = Path(args.store)
    path = write_report(root / "sessions", root / "cases", args.session_id,
                        args.out, reveal_truth=args.reveal_truth,
                        manifest_path=args.manifest)
    print(f"wrote {path}")
    return 0


def cmd_init_config(args) -> int:
    save_config(Config(), args.out)
    print(f"wrote default config to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leamatch",
        description="Objective bullet land comparison pipeline and examiner service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load *.leascan files into a scan store")
    p.add_argument("directory")
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic labeled scan corpus")
    p.add_argument("--barrels", type=int, default=10)
    p.add_argument("--bullets", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--store", default=None, help="also ingest into this store")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the land-pair forest on synthetic data")
    p.add_argument("--barrels", type=int, default=10)
    p.add_argument("--bullets", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="compute case artifacts for stored bullets")
    p.add_argument("--store", required=True)
    p.add_argument("--forest", required=True)
    p.add_argument("--case-id", required=True)
    p.add_argument("--bullet-ids", default=None, help="comma separated; default all")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="run the examiner HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--forest", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8181)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="emit a per-session markdown/CSV bundle")
    p.add_argument("session_id")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reveal-truth", action="store_true")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("init-config", help="write the default config document")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
