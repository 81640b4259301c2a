"""Command-line entry points.

Subcommands: run, seed-init, degrade-pool, analyze, replay, snapshot-dump.
Success exits 0; any failure exits nonzero after a single diagnostic line
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import analysis as an
from . import seeding as sd
from .config import load_config
from .orchestrator import CONFIG_COPY, SNAPSHOTS_FILE, TRANSCRIPT_DIR, run
from .telemetry import load_events, read_snapshots

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="archipelago",
        description="Multi-island program search with multi-candidate generation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a search run from a config file")
    p_run.add_argument("config", help="YAML run configuration")
    p_run.add_argument("--output-dir", help="override output directory")
    p_run.add_argument("--seed", type=int, help="override rng seed")
    p_run.add_argument("--max-evals", type=int, help="override evaluation cap")
    p_run.add_argument("--max-cost", type=float, help="override API cost cap")
    p_run.add_argument("--timeout-secs", type=float, help="override evaluator timeout")
    p_run.add_argument("--seeding-mode", help="override seeding mode")

    p_seed = sub.add_parser("seed-init", help="cluster and mix a seed pool")
    p_seed.add_argument("--pool", required=True, help="seed pool directory")
    p_seed.add_argument("--islands", type=int, required=True)
    p_seed.add_argument("--mode", default="kmeans_elite", choices=sd.ALLOCATION_MODES)
    p_seed.add_argument("--d", type=float, default=sd.DEFAULT_MIX_FRACTION,
                        help="mix fraction (copied out / injected back)")
    p_seed.add_argument("--rho", type=float, default=sd.DEFAULT_ELITE_FRACTION,
                        help="protected elite fraction")
    p_seed.add_argument("--seed", type=int, default=0)
    p_seed.add_argument("--direction", default="maximize", choices=["maximize", "minimize"])
    p_seed.add_argument("--out", required=True, help="assignment manifest path (JSON)")

    p_deg = sub.add_parser("degrade-pool", help="drop the top fraction of a pool by score")
    p_deg.add_argument("--pool", required=True)
    p_deg.add_argument("--fraction", type=float, required=True)
    p_deg.add_argument("--out", required=True, help="degraded pool directory")
    p_deg.add_argument("--direction", default="maximize", choices=["maximize", "minimize"])

    p_an = sub.add_parser("analyze", help="offline analyses over event logs")
    p_an.add_argument("kind", choices=["topm", "ranks", "distance-grid"])
    p_an.add_argument("--log", action="append", required=True, dest="logs",
                      help="event log path; repeat for multiple runs")
    p_an.add_argument("--out", required=True, help="output directory for tables and figures")
    p_an.add_argument("--no-figures", action="store_true", help="emit tables only")

    p_rep = sub.add_parser("replay", help="re-run from a prior run's transcripts")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--out", help="output directory (default: <run-dir>-replay)")

    p_snap = sub.add_parser("snapshot-dump", help="dump snapshot records as CSV")
    p_snap.add_argument("--run-dir", help="run directory containing snapshots.jsonl")
    p_snap.add_argument("--snapshots", help="snapshot file (alternative to --run-dir)")
    p_snap.add_argument("--out", help="CSV output path (default: stdout)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.seed is not None:
        config.seed = args.seed
    if args.max_evals is not None:
        config.budgets.max_evals = args.max_evals
    if args.max_cost is not None:
        config.budgets.max_cost = args.max_cost
    if args.timeout_secs is not None:
        config.task.timeout_secs = args.timeout_secs
    if args.seeding_mode:
        config.seeding.mode = args.seeding_mode
    summary = run(config)
    best = "none" if summary.best_score is None else f"{summary.best_score:.6f}"
    print(
        f"run complete: task={summary.task} best={best} n_eval={summary.n_eval} "
        f"api_cost={summary.api_cost:.6f} -> {summary.output_dir}"
    )
    return 0


def _cmd_seed_init(args) -> int:
    pool = sd.load_seed_pool(args.pool, args.direction)
    allocation = sd.allocate_pool(
        pool, args.islands, args.mode, d=args.d, rho=args.rho, seed=args.seed
    )
    manifest = {
        "mode": allocation.mode,
        "islands": args.islands,
        "effective_clusters": allocation.effective_clusters,
        "d": args.d,
        "rho": args.rho,
        "seed": args.seed,
        "pool": str(args.pool),
        "pool_size": len(pool.entries),
        "warnings": allocation.warnings,
        "clusters": [
            {
                "island": cid,
                "size": len(cluster.members),
                "injected": cluster.injected,
                "evicted": cluster.evicted,
                "protected": cluster.protected,
                "entries": [[idx, bool(injected)] for idx, injected in cluster.members],
            }
            for cid, cluster in enumerate(allocation.clusters)
        ],
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote assignment for {len(pool.entries)} entries -> {out}")
    return 0


def _cmd_degrade_pool(args) -> int:
    pool = sd.load_seed_pool(args.pool, args.direction)
    degraded = sd.degrade_pool(pool, args.fraction)
    sd.write_seed_pool(args.out, degraded)
    print(
        f"dropped top {len(pool.entries) - len(degraded.entries)} of {len(pool.entries)} "
        f"entries -> {args.out}"
    )
    return 0


def _cmd_analyze(args) -> int:
    runs = [load_events(path) for path in args.logs]
    if args.kind == "topm":
        result = an.topm_replay(runs)
        results = [result]
    elif args.kind == "ranks":
        result = an.rank_profile(runs)
        results = [result]
    else:
        result = an.distance_k_grid(runs)
        results = [result]
    if result.diagnostic:
        print(f"error: {result.diagnostic}", file=sys.stderr)
        return 3
    paths = an.emit_tables(results, args.out)
    if not args.no_figures:
        from . import reporting

        if args.kind == "topm":
            paths.append(reporting.render_topm(result, args.out))
        elif args.kind == "ranks":
            paths.append(reporting.render_rank_profile(result, args.out))
        else:
            paths.append(reporting.render_distance_grid(result, args.out))
    for warning in getattr(result, "warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print("\n".join(str(p) for p in paths))
    return 0


def _cmd_replay(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / CONFIG_COPY)
    config.backend.kind = "scripted"
    config.backend.transcript_dir = str(run_dir / TRANSCRIPT_DIR)
    config.output_dir = args.out or str(run_dir) + "-replay"
    summary = run(config)
    best = "none" if summary.best_score is None else f"{summary.best_score:.6f}"
    print(f"replay complete: best={best} n_eval={summary.n_eval} -> {summary.output_dir}")
    return 0


def _cmd_snapshot_dump(args) -> int:
    if not args.run_dir and not args.snapshots:
        print("error: provide --run-dir or --snapshots", file=sys.stderr)
        return 2
    path = Path(args.snapshots) if args.snapshots else Path(args.run_dir) / SNAPSHOTS_FILE
    records = read_snapshots(path)
    columns = [
        "n_eval_at_snapshot",
        "n_eval",
        "island_id",
        "coverage",
        "cell_quality",
        "best_score",
        "global_best",
    ]
    rows = []
    for rec in records:
        for island in rec["islands"]:
            rows.append(
                {
                    "n_eval_at_snapshot": rec["n_eval_at_snapshot"],
                    "n_eval": rec["n_eval"],
                    "island_id": island["island_id"],
                    "coverage": island["coverage"],
                    "cell_quality": island["cell_quality"],
                    "best_score": island["best_score"],
                    "global_best": rec["global_best"],
                }
            )
    sink = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row[c] is None else row[c] for c in columns])
    finally:
        if args.out:
            sink.close()
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "seed-init": _cmd_seed_init,
    "degrade-pool": _cmd_degrade_pool,
    "analyze": _cmd_analyze,
    "replay": _cmd_replay,
    "snapshot-dump": _cmd_snapshot_dump,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 — CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
