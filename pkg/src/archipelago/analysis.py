"""Offline analyses over recorded generation events.

All three analyses replay logs only — nothing here re-runs a backend or an
evaluator.  Shared conventions, which any independent reimplementation
must follow to reproduce the tables:

- Quantiles use linear interpolation on the sorted values: position
  q*(n-1), interpolated between the two bracketing order statistics.
  Median is the 0.5 quantile; the IQR band is the (0.25, 0.75) pair.
- Aggregation is per run first (a run = one log file), then median/IQR
  across the run-level values.
- delta is the signed improvement over the parent as logged; "improved"
  always means delta > 0.
- Inspiration tiers split a run's k_used=7 events into five bins of the
  maximum inspiration score, sizes differing by at most one (extra events
  go to the lower tiers), ties and missing scores resolved by event order;
  tier 1 is the lowest-signal bin.
- Distance deciles are computed within each run from pre_distance values
  via the nine decile quantiles; a value equal to an edge falls in the
  lower bin.  Runs with fewer than 10 such events fall back to rank-based
  bins of equal count (one event per bin, by distance then event order)
  and are reported in `warnings`.
"""

from __future__ import annotations

import csv
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

from .telemetry import GenerationEvent

logger = logging.getLogger(__name__)

TOPM_K = 7
MAX_RANK = 7
HEAD_RANKS = (1, 2)
MID_RANKS = (3, 4, 5)
TAIL_RANKS = (6, 7)
N_TIERS = 5
N_DECILES = 10
K_COLUMNS = (1, 3, 5, 7)


def quantile(values: list[float], q: float) -> float:
    """Linear-interpolation quantile of an unsorted, nonempty list."""
    s = sorted(values)
    if len(s) == 1:
        return s[0]
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return s[lo] + (s[hi] - s[lo]) * frac


def _median_iqr(values: list[float]) -> tuple[float | None, float | None, float | None]:
    if not values:
        return None, None, None
    return quantile(values, 0.5), quantile(values, 0.25), quantile(values, 0.75)


def coverage_prefix(event: GenerationEvent, max_rank: int = MAX_RANK) -> list[int]:
    """coverage_m for m = 1..max_rank: 1 once any candidate at rank <= m is
    a strict improvement.  Monotone in m by construction."""
    out = []
    seen = 0
    by_rank = {c.rank: c for c in event.candidates}
    for m in range(1, max_rank + 1):
        c = by_rank.get(m)
        if c is not None and c.valid and c.delta is not None and c.delta > 0:
            seen = 1
        out.append(seen)
    return out


def best_delta_prefix(event: GenerationEvent, max_rank: int = MAX_RANK) -> list[float | None]:
    """Best valid delta among ranks <= m, per m; None until one exists."""
    out: list[float | None] = []
    best: float | None = None
    by_rank = {c.rank: c for c in event.candidates}
    for m in range(1, max_rank + 1):
        c = by_rank.get(m)
        if c is not None and c.valid and c.delta is not None:
            best = c.delta if best is None else max(best, c.delta)
        out.append(best)
    return out


def _max_inspiration(event: GenerationEvent) -> float:
    return max(event.inspiration_scores) if event.inspiration_scores else -math.inf


def assign_tiers(events: list[GenerationEvent]) -> list[int]:
    """Tier (1..5) per event, by max inspiration score within this run."""
    order = sorted(range(len(events)), key=lambda i: (_max_inspiration(events[i]), i))
    tiers = [0] * len(events)
    n = len(events)
    base, extra = divmod(n, N_TIERS)
    start = 0
    for tier in range(N_TIERS):
        size = base + (1 if tier < extra else 0)
        for i in order[start : start + size]:
            tiers[i] = tier + 1
        start += size
    return tiers


# ---------------------------------------------------------------------------
# top-m replay


@dataclass
class TopmResult:
    rows: list[dict]
    n_events: int
    diagnostic: str | None = None

    def table(self) -> tuple[str, list[str], list[dict]]:
        cols = [
            "tier",
            "m",
            "n_events",
            "coverage_median",
            "coverage_iqr_lo",
            "coverage_iqr_hi",
            "best_delta_median",
            "best_delta_iqr_lo",
            "best_delta_iqr_hi",
        ]
        return "topm_replay", cols, self.rows


def topm_replay(runs: list[list[GenerationEvent]]) -> TopmResult:
    """What shorter candidate lists would have kept, replayed from k=7 events.

    For each event, truncating to the top m ranks either still contains an
    improvement (coverage) or not, and attains some best prefix delta.
    Both are averaged per run and tier, then summarized across runs.
    """
    per_cell_cov: dict[tuple[int, int], list[float]] = {}
    per_cell_delta: dict[tuple[int, int], list[float]] = {}
    cell_events: dict[tuple[int, int], int] = {}
    total = 0
    for run in runs:
        events = [e for e in run if e.k_used == TOPM_K]
        total += len(events)
        if not events:
            continue
        tiers = assign_tiers(events)
        cov: dict[tuple[int, int], list[float]] = {}
        dlt: dict[tuple[int, int], list[float]] = {}
        for event, tier in zip(events, tiers):
            cprefix = coverage_prefix(event)
            dprefix = best_delta_prefix(event)
            for m in range(1, MAX_RANK + 1):
                key = (tier, m)
                cov.setdefault(key, []).append(float(cprefix[m - 1]))
                cell_events[key] = cell_events.get(key, 0) + 1
                if dprefix[m - 1] is not None:
                    dlt.setdefault(key, []).append(dprefix[m - 1])
        for key, vals in cov.items():
            per_cell_cov.setdefault(key, []).append(sum(vals) / len(vals))
        for key, vals in dlt.items():
            per_cell_delta.setdefault(key, []).append(sum(vals) / len(vals))
    rows = []
    for tier in range(1, N_TIERS + 1):
        for m in range(1, MAX_RANK + 1):
            key = (tier, m)
            cov_med, cov_lo, cov_hi = _median_iqr(per_cell_cov.get(key, []))
            d_med, d_lo, d_hi = _median_iqr(per_cell_delta.get(key, []))
            rows.append(
                {
                    "tier": tier,
                    "m": m,
                    "n_events": cell_events.get(key, 0),
                    "coverage_median": cov_med,
                    "coverage_iqr_lo": cov_lo,
                    "coverage_iqr_hi": cov_hi,
                    "best_delta_median": d_med,
                    "best_delta_iqr_lo": d_lo,
                    "best_delta_iqr_hi": d_hi,
                }
            )
    diagnostic = None if total else f"no k_used={TOPM_K} events in any input log"
    return TopmResult(rows=rows, n_events=total, diagnostic=diagnostic)


# ---------------------------------------------------------------------------
# rank profile


def _cell_distance(a: list[int], b: list[int]) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


_BUCKETS: list[tuple[str, tuple[int, ...]]] = (
    [(str(r), (r,)) for r in range(1, MAX_RANK + 1)]
    + [("head", HEAD_RANKS), ("mid", MID_RANKS), ("tail", TAIL_RANKS)]
)


@dataclass
class RankProfileResult:
    rows: list[dict]
    scatter: list[dict]
    skipped: dict[str, int]
    n_events: int
    diagnostic: str | None = None

    def table(self) -> tuple[str, list[str], list[dict]]:
        cols = [
            "bucket",
            "n_candidates",
            "validity_median",
            "validity_iqr_lo",
            "validity_iqr_hi",
            "delta_median",
            "delta_iqr_lo",
            "delta_iqr_hi",
            "cell_distance_median",
            "cell_distance_iqr_lo",
            "cell_distance_iqr_hi",
        ]
        return "rank_profile", cols, self.rows

    def scatter_table(self) -> tuple[str, list[str], list[dict]]:
        cols = ["run", "island_id", "iteration", "rank", "delta", "cell_distance"]
        return "rank_scatter", cols, self.scatter


def rank_profile(runs: list[list[GenerationEvent]]) -> RankProfileResult:
    """Positional yield of k=7 events: validity, improvement, and how far
    from the parent's cell each rank lands."""
    per_bucket: dict[str, dict[str, list[float]]] = {
        name: {"validity": [], "delta": [], "dist": []} for name, _ in _BUCKETS
    }
    counts: dict[str, int] = {name: 0 for name, _ in _BUCKETS}
    skipped = {"missing_parent_cell": 0, "missing_candidate_cell": 0}
    scatter: list[dict] = []
    total = 0
    for run_idx, run in enumerate(runs):
        events = [e for e in run if e.k_used == TOPM_K]
        total += len(events)
        if not events:
            continue
        acc: dict[str, dict[str, list[float]]] = {
            name: {"valid": [], "delta": [], "dist": []} for name, _ in _BUCKETS
        }
        for event in events:
            for cand in event.candidates:
                for name, ranks in _BUCKETS:
                    if cand.rank not in ranks:
                        continue
                    counts[name] += 1
                    acc[name]["valid"].append(1.0 if cand.valid else 0.0)
                    if cand.valid and cand.delta is not None:
                        acc[name]["delta"].append(cand.delta)
                dist: int | None = None
                if cand.valid:
                    if not event.parent_cell_index:
                        skipped["missing_parent_cell"] += 1
                    elif cand.cell_index is None:
                        skipped["missing_candidate_cell"] += 1
                    else:
                        dist = _cell_distance(cand.cell_index, event.parent_cell_index)
                        for name, ranks in _BUCKETS:
                            if cand.rank in ranks:
                                acc[name]["dist"].append(float(dist))
                if cand.valid and cand.delta is not None and dist is not None:
                    scatter.append(
                        {
                            "run": run_idx,
                            "island_id": event.island_id,
                            "iteration": event.iteration,
                            "rank": cand.rank,
                            "delta": cand.delta,
                            "cell_distance": dist,
                        }
                    )
        for name, _ in _BUCKETS:
            if acc[name]["valid"]:
                per_bucket[name]["validity"].append(
                    sum(acc[name]["valid"]) / len(acc[name]["valid"])
                )
            if acc[name]["delta"]:
                per_bucket[name]["delta"].append(sum(acc[name]["delta"]) / len(acc[name]["delta"]))
            if acc[name]["dist"]:
                per_bucket[name]["dist"].append(sum(acc[name]["dist"]) / len(acc[name]["dist"]))
    rows = []
    for name, _ in _BUCKETS:
        v_med, v_lo, v_hi = _median_iqr(per_bucket[name]["validity"])
        d_med, d_lo, d_hi = _median_iqr(per_bucket[name]["delta"])
        c_med, c_lo, c_hi = _median_iqr(per_bucket[name]["dist"])
        rows.append(
            {
                "bucket": name,
                "n_candidates": counts[name],
                "validity_median": v_med,
                "validity_iqr_lo": v_lo,
                "validity_iqr_hi": v_hi,
                "delta_median": d_med,
                "delta_iqr_lo": d_lo,
                "delta_iqr_hi": d_hi,
                "cell_distance_median": c_med,
                "cell_distance_iqr_lo": c_lo,
                "cell_distance_iqr_hi": c_hi,
            }
        )
    diagnostic = None if total else f"no k_used={TOPM_K} events in any input log"
    return RankProfileResult(
        rows=rows, scatter=scatter, skipped=skipped, n_events=total, diagnostic=diagnostic
    )


# ---------------------------------------------------------------------------
# distance x K grid


def assign_deciles(distances: list[float]) -> tuple[list[int], bool]:
    """Decile (1..10) per value, within one run.

    Returns (assignments, used_rank_fallback).  Fewer than 10 values cannot
    support value deciles, so each value gets its own bin by rank.
    """
    n = len(distances)
    if n >= N_DECILES:
        edges = [quantile(distances, i / N_DECILES) for i in range(1, N_DECILES)]
        return [bisect_left(edges, d) + 1 for d in distances], False
    order = sorted(range(n), key=lambda i: (distances[i], i))
    out = [0] * n
    for pos, i in enumerate(order):
        out[i] = pos + 1
    return out, True


@dataclass
class DistanceGridResult:
    rows: list[dict]
    warnings: list[str]
    skipped: dict[str, int]
    n_events: int
    diagnostic: str | None = None

    def table(self) -> tuple[str, list[str], list[dict]]:
        cols = [
            "distance_decile",
            "k",
            "n_events",
            "p_improve_median",
            "p_improve_iqr_lo",
            "p_improve_iqr_hi",
            "delta_best_median",
            "delta_best_iqr_lo",
            "delta_best_iqr_hi",
        ]
        return "distance_k_grid", cols, self.rows


def distance_k_grid(runs: list[list[GenerationEvent]]) -> DistanceGridResult:
    """Improvement odds and payoff over (parent-inspiration distance, K)."""
    per_cell_p: dict[tuple[int, int], list[float]] = {}
    per_cell_d: dict[tuple[int, int], list[float]] = {}
    cell_events: dict[tuple[int, int], int] = {}
    warnings: list[str] = []
    skipped = {"missing_pre_distance": 0}
    k_values: set[int] = set(K_COLUMNS)
    total = 0
    for run_idx, run in enumerate(runs):
        events = [e for e in run if e.pre_distance is not None]
        skipped["missing_pre_distance"] += len(run) - len(events)
        total += len(events)
        if not events:
            continue
        deciles, fallback = assign_deciles([e.pre_distance for e in events])
        if fallback:
            msg = (
                f"run {run_idx}: {len(events)} events < {N_DECILES}; "
                "using rank-based distance bins"
            )
            warnings.append(msg)
            logger.warning(msg)
        p_acc: dict[tuple[int, int], list[float]] = {}
        d_acc: dict[tuple[int, int], list[float]] = {}
        for event, decile in zip(events, deciles):
            k_values.add(event.k_used)
            key = (decile, event.k_used)
            cell_events[key] = cell_events.get(key, 0) + 1
            deltas = [c.delta for c in event.candidates if c.valid and c.delta is not None]
            p_acc.setdefault(key, []).append(1.0 if any(d > 0 for d in deltas) else 0.0)
            if deltas:
                d_acc.setdefault(key, []).append(max(deltas))
        for key, vals in p_acc.items():
            per_cell_p.setdefault(key, []).append(sum(vals) / len(vals))
        for key, vals in d_acc.items():
            per_cell_d.setdefault(key, []).append(sum(vals) / len(vals))
    rows = []
    for decile in range(1, N_DECILES + 1):
        for k in sorted(k_values):
            key = (decile, k)
            p_med, p_lo, p_hi = _median_iqr(per_cell_p.get(key, []))
            d_med, d_lo, d_hi = _median_iqr(per_cell_d.get(key, []))
            rows.append(
                {
                    "distance_decile": decile,
                    "k": k,
                    "n_events": cell_events.get(key, 0),
                    "p_improve_median": p_med,
                    "p_improve_iqr_lo": p_lo,
                    "p_improve_iqr_hi": p_hi,
                    "delta_best_median": d_med,
                    "delta_best_iqr_lo": d_lo,
                    "delta_best_iqr_hi": d_hi,
                }
            )
    diagnostic = None if total else "no events with a pre_distance in any input log"
    return DistanceGridResult(
        rows=rows, warnings=warnings, skipped=skipped, n_events=total, diagnostic=diagnostic
    )


# ---------------------------------------------------------------------------
# table emission


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(out_dir: str | Path, name: str, columns: list[str], rows: list[dict]) -> Path:
    """One CSV per analysis; stable column order, byte-deterministic."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(col)) for col in columns])
    return path


def emit_tables(results: list, out_dir: str | Path) -> list[Path]:
    """Write every table the given analysis results expose."""
    paths = []
    for result in results:
        name, cols, rows = result.table()
        paths.append(write_table(out_dir, name, cols, rows))
        if hasattr(result, "scatter_table"):
            name, cols, rows = result.scatter_table()
            paths.append(write_table(out_dir, name, cols, rows))
    return paths
