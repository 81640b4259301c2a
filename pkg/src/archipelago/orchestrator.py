"""Run orchestration: seeding, the island round loop, budgets, snapshots.

One island iteration is one backend call: sample parent and inspirations,
request K candidates, evaluate and insert all of them, then let the
scheduler fold the outcome into its window.  Islands advance in rounds —
sequential round-robin by default, one thread per island per sweep when
configured — and the run ends when a budget cap trips at a round boundary,
so an in-flight round may overshoot the evaluation cap by at most K - 1.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import archive as ar
from . import seeding as sd
from .backends import MockMutationBackend, RemoteBackend, ScriptedBackend, TranscriptRecorder
from .config import RunConfig, save_config
from .errors import BackendUnavailable, TranscriptExhausted, TranscriptMismatch
from .evaluation import BudgetLedger, ExternalEvaluator, evaluate
from .generation import RoundResult, generate_round
from .scheduler import SchedulerState
from .seeding import PrecomputedEmbeddings, RemoteEmbedder, TrigramEmbedder
from .tasks import Task, circle_packing_task, synthetic_sphere_task
from .telemetry import (
    CandidateOutcome,
    EventLog,
    GenerationEvent,
    SnapshotRecord,
    append_snapshot,
)

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_BACKEND_FAILURES = 10

EVENTS_FILE = "events.jsonl"
SNAPSHOTS_FILE = "snapshots.jsonl"
SUMMARY_FILE = "summary.json"
CONFIG_COPY = "config.yaml"
CHECKPOINT_DIR = "checkpoints"
TRANSCRIPT_DIR = "transcripts"


@dataclass
class RunSummary:
    task: str
    direction: str
    seeding_mode: str
    initial_best_score: float | None
    best_score: float | None
    best_program: dict | None
    n_eval: int
    input_tokens: int
    output_tokens: int
    api_cost: float
    iterations: int
    stop_reason: str
    islands: list[dict]
    paths: dict[str, str]
    output_dir: str

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        return d


def build_task(config: RunConfig) -> Task:
    tc = config.task
    if tc.kind == "circle_packing":
        return circle_packing_task(n=tc.n_circles, bins=config.archive.bins)
    if tc.kind == "synthetic_sphere":
        return synthetic_sphere_task(bins=config.archive.bins)
    dims = [
        ar.GridDim(lo, hi, config.archive.bins, name=name)
        for (lo, hi), name in zip(tc.feature_bounds, tc.feature_names)
    ]
    initial = Path(tc.initial_program).read_text(encoding="utf-8") if tc.initial_program else ""
    return Task(
        name="external",
        direction=tc.direction,
        dims=dims,
        evaluate=ExternalEvaluator(tc.command, timeout=tc.timeout_secs),
        initial_body=initial,
        description=(
            "Improve the program according to the external evaluator. "
            "Return complete program source."
        ),
        genome_kind=None,
    )


def build_embedder(config: RunConfig):
    ec = config.embeddings
    if ec.provider == "none":
        return None
    if ec.provider == "trigram":
        return TrigramEmbedder()
    if ec.provider == "precomputed":
        return PrecomputedEmbeddings(ec.path)
    return RemoteEmbedder(ec.endpoint, ec.model, api_key_env=ec.api_key_env)


def _island_rng(seed: int, island_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, island_id, stream]))


def build_backends(config: RunConfig, out_dir: Path) -> list:
    """One backend per island so rng and transcripts never cross islands."""
    backends = []
    shared_remote = None
    for island_id in range(config.islands):
        bc = config.backend
        if bc.kind == "mock":
            inner = MockMutationBackend(
                rng=_island_rng(config.seed, island_id, 1), sigma=bc.mock_sigma
            )
        elif bc.kind == "scripted":
            inner = ScriptedBackend(Path(bc.transcript_dir) / f"island_{island_id:02d}.jsonl")
        else:
            if shared_remote is None:
                shared_remote = RemoteBackend(
                    bc.endpoint,
                    bc.model,
                    api_key_env=bc.api_key_env,
                    max_in_flight=bc.max_in_flight,
                    max_retries=bc.max_retries,
                    temperature=bc.temperature,
                )
            inner = shared_remote
        path = out_dir / TRANSCRIPT_DIR / f"island_{island_id:02d}.jsonl"
        backends.append(TranscriptRecorder(inner, path))
    return backends


def signed_delta(score: float, parent_score: float, direction: str) -> float:
    d = score - parent_score
    return d if direction == "maximize" else -d


@dataclass
class _RoundOutput:
    event: GenerationEvent
    transition: object | None = None
    migrations: list[tuple[int, ar.Program]] = field(default_factory=list)


class Runner:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.task = build_task(config)
        self.embedder = build_embedder(config)
        self.ledger = BudgetLedger(
            max_evals=config.budgets.max_evals,
            max_cost=config.budgets.max_cost,
            price_in_per_token=config.prices.input_per_million / 1e6,
            price_out_per_token=config.prices.output_per_million / 1e6,
        )
        self.islands = [
            ar.Island(
                id=i,
                grid=ar.ArchiveGrid(dims=self.task.dims, direction=self.task.direction),
                scheduler=SchedulerState(
                    k_init=config.scheduler.k_init,
                    window_len=config.scheduler.window,
                    warmup_remaining=config.scheduler.warmup,
                    k_set=tuple(config.scheduler.k_set),
                    step=config.scheduler.step,
                ),
                rng=_island_rng(config.seed, i, 0),
                rank_weight=config.archive.rank_weight,
            )
            for i in range(config.islands)
        ]
        self.backends = build_backends(config, self.out_dir)
        self.pending_milestones = sorted(set(config.snapshots))
        self.stop_reason: str | None = None

    # -- seeding ------------------------------------------------------------

    def _seed_program(self, island: ar.Island, prog_id: str, body: str) -> bool:
        prog = ar.Program(
            id=prog_id, body=body, island_id=island.id, origin="seed", iteration_born=0
        )
        result = evaluate(prog, self.task.evaluate, self.ledger, enforce_budget=False)
        if result.valid:
            ar.insert(prog, island.grid)
            return True
        return False

    def seed(self, event_log: EventLog) -> dict:
        cfg = self.config.seeding
        report = {
            "mode": cfg.mode,
            "evaluations": 0,
            "inserted": 0,
            "failures": 0,
            "per_island": [0] * len(self.islands),
        }
        before = self.ledger.n_eval
        if cfg.mode != "cold" and cfg.pool:
            pool = sd.load_seed_pool(cfg.pool, self.task.direction)
            if cfg.degrade_top_fraction > 0:
                pool = sd.degrade_pool(pool, cfg.degrade_top_fraction)
            allocation = sd.allocate_pool(
                pool,
                len(self.islands),
                cfg.mode,
                d=cfg.d,
                rho=cfg.rho,
                seed=self.config.seed,
                embedder=self.embedder or TrigramEmbedder(),
            )
            for island, cluster in zip(self.islands, allocation.clusters):
                for idx, _injected in cluster.members:
                    ok = self._seed_program(island, f"s{idx}-i{island.id}", pool.entries[idx].body)
                    report["inserted" if ok else "failures"] += 1
                    report["per_island"][island.id] += 1
        # Any island still empty falls back to the task's starting program.
        for island in self.islands:
            if not island.grid.cells:
                ok = self._seed_program(island, f"init-i{island.id}", self.task.initial_body)
                report["inserted" if ok else "failures"] += 1
                report["per_island"][island.id] += 1
        report["evaluations"] = self.ledger.n_eval - before
        event_log.log_seeding(report)
        return report

    # -- one island round ---------------------------------------------------

    def _deliver_migrants(self, island: ar.Island) -> None:
        while island.migration_queue:
            prog = island.migration_queue.pop(0)
            ar.insert(prog, island.grid)  # never feeds the scheduler window

    def _pre_distance(self, round_result: RoundResult) -> float | None:
        inspirations = round_result.inspirations
        if not inspirations:
            return None
        best = inspirations[0]
        for p in inspirations[1:]:
            if ar.better(p.score, best.score, self.task.direction):
                best = p
        if self.embedder is not None:
            va, vb = self.embedder.embed([round_result.parent.body, best.body])
            return float(math.sqrt(sum((a - b) ** 2 for a, b in zip(va, vb))))
        pa = ar.cell_index(round_result.parent.features, self.task.dims)
        pb = ar.cell_index(best.features, self.task.dims)
        return float(sum(abs(a - b) for a, b in zip(pa, pb)))

    def _island_round(self, island: ar.Island) -> _RoundOutput:
        self._deliver_migrants(island)
        k = island.scheduler.k
        gen = self.config.generation
        rr = generate_round(
            island,
            k,
            self.backends[island.id],
            self.task,
            self.ledger,
            n_inspirations=gen.n_inspirations,
            min_candidates=gen.min_candidates,
            max_requeries=gen.max_requeries,
        )
        outcomes: list[CandidateOutcome] = []
        any_replacement = False
        for cand in rr.candidates:
            prog = ar.Program(
                id=f"i{island.id}-t{island.iteration}-r{cand.rank}",
                body=cand.body,
                island_id=island.id,
                parent_id=rr.parent.id,
                iteration_born=island.iteration,
                origin="generated",
            )
            result = evaluate(prog, self.task.evaluate, self.ledger, enforce_budget=False)
            if result.valid:
                outcome = ar.insert(prog, island.grid)
                any_replacement = any_replacement or outcome.improved
                outcomes.append(
                    CandidateOutcome(
                        rank=cand.rank,
                        valid=True,
                        score=result.score,
                        delta=signed_delta(result.score, rr.parent.score, self.task.direction),
                        cell_index=list(ar.cell_index(result.features, self.task.dims)),
                    )
                )
            else:
                outcomes.append(
                    CandidateOutcome(rank=cand.rank, valid=False, failure=result.failure)
                )
        transition = island.scheduler.record_iteration(any_replacement)
        event = GenerationEvent(
            island_id=island.id,
            iteration=island.iteration,
            k_used=k,
            parent_id=rr.parent.id,
            parent_score=rr.parent.score,
            parent_cell_index=list(ar.cell_index(rr.parent.features, self.task.dims)),
            inspiration_ids=[p.id for p in rr.inspirations],
            inspiration_scores=[p.score for p in rr.inspirations],
            candidates=outcomes,
            pre_distance=self._pre_distance(rr),
            input_tokens=rr.input_tokens,
            output_tokens=rr.output_tokens,
            requery_count=rr.requery_count,
        )
        migrations = self._plan_migration(island)
        return _RoundOutput(event=event, transition=transition, migrations=migrations)

    def _aborted_round_event(self, island: ar.Island, exc: BackendUnavailable) -> GenerationEvent:
        rr: RoundResult | None = exc.context if isinstance(exc.context, RoundResult) else None
        parent_cell = (
            list(ar.cell_index(rr.parent.features, self.task.dims)) if rr is not None else []
        )
        return GenerationEvent(
            island_id=island.id,
            iteration=island.iteration,
            k_used=island.scheduler.k,
            parent_id=rr.parent.id if rr else "",
            parent_score=rr.parent.score if rr else math.nan,
            parent_cell_index=parent_cell,
            inspiration_ids=[p.id for p in rr.inspirations] if rr else [],
            inspiration_scores=[p.score for p in rr.inspirations] if rr else [],
            candidates=[],
            pre_distance=self._pre_distance(rr) if rr else None,
            input_tokens=rr.input_tokens if rr else 0,
            output_tokens=rr.output_tokens if rr else 0,
            requery_count=rr.requery_count if rr else 0,
        )

    def _plan_migration(self, island: ar.Island) -> list[tuple[int, ar.Program]]:
        interval = self.config.archive.migration_interval
        if not interval or len(self.islands) < 2:
            return []
        # iteration counter increments after this round completes
        if (island.iteration + 1) % interval != 0:
            return []
        best: ar.Program | None = None
        for cell in sorted(island.grid.cells):
            prog = island.grid.cells[cell]
            if best is None or ar.better(prog.score, best.score, self.task.direction):
                best = prog
        if best is None:
            return []
        target = (island.id + 1) % len(self.islands)
        copy = ar.Program(
            id=f"mig-{best.id}-to{target}-t{island.iteration}",
            body=best.body,
            island_id=target,
            score=best.score,
            features=list(best.features),
            parent_id=best.id,
            iteration_born=island.iteration,
            origin="reinjected",
            valid=True,
        )
        return [(target, copy)]

    # -- snapshots / summary --------------------------------------------------

    def _maybe_snapshot(self, path: Path) -> None:
        while self.pending_milestones and self.ledger.n_eval >= self.pending_milestones[0]:
            milestone = self.pending_milestones.pop(0)
            stats = []
            for island in self.islands:
                snap = ar.snapshot(island)
                stats.append(
                    {
                        "island_id": island.id,
                        "coverage": snap.coverage,
                        "cell_quality": snap.cell_quality,
                        "best_score": snap.best_score,
                    }
                )
            best = ar.best_program(self.islands)
            append_snapshot(
                path,
                SnapshotRecord(
                    n_eval_at_snapshot=milestone,
                    n_eval=self.ledger.n_eval,
                    islands=stats,
                    global_best=best.score if best else None,
                ),
            )

    def _best_score(self) -> float | None:
        best = ar.best_program(self.islands)
        return best.score if best else None

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunSummary:
        out = self.out_dir
        out.mkdir(parents=True, exist_ok=True)
        save_config(self.config, out / CONFIG_COPY)
        snapshots_file = out / SNAPSHOTS_FILE
        snapshots_file.write_text("", encoding="utf-8")
        consecutive_failures = 0
        with EventLog(out / EVENTS_FILE) as event_log:
            self.seed(event_log)
            initial_best = self._best_score()
            self._maybe_snapshot(snapshots_file)
            executor = (
                ThreadPoolExecutor(max_workers=len(self.islands))
                if self.config.concurrent and len(self.islands) > 1
                else None
            )
            try:
                while self.stop_reason is None:
                    staged: list[tuple[int, ar.Program]] = []
                    if executor is None:
                        for island in self.islands:
                            if self.ledger.exhausted():
                                self.stop_reason = "budget_exhausted"
                                break
                            consecutive_failures = self._run_and_log(
                                island, event_log, snapshots_file, staged, consecutive_failures
                            )
                            if self.stop_reason:
                                break
                    else:
                        if self.ledger.exhausted():
                            self.stop_reason = "budget_exhausted"
                        else:
                            # Whole sweep admitted against the frozen ledger;
                            # records flush in island order at the barrier.
                            futures = [
                                executor.submit(self._guarded_round, island)
                                for island in self.islands
                            ]
                            for island, fut in zip(self.islands, futures):
                                outcome = fut.result()
                                consecutive_failures = self._log_outcome(
                                    island, outcome, event_log, staged, consecutive_failures
                                )
                            self._maybe_snapshot(snapshots_file)
                    for target, prog in staged:
                        self.islands[target].migration_queue.append(prog)
                    if consecutive_failures >= MAX_CONSECUTIVE_BACKEND_FAILURES:
                        self.stop_reason = "backend_unavailable"
            finally:
                if executor is not None:
                    executor.shutdown()
        checkpoint = out / CHECKPOINT_DIR / "final.jsonl"
        ar.write_checkpoint(self.islands, checkpoint)
        summary = self._summary(initial_best)
        (out / SUMMARY_FILE).write_text(
            json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        return summary

    def _guarded_round(self, island: ar.Island) -> _RoundOutput | Exception:
        try:
            return self._island_round(island)
        except Exception as exc:  # surfaced at the barrier
            return exc

    def _run_and_log(self, island, event_log, snapshots_file, staged, consecutive_failures):
        outcome = self._guarded_round(island)
        consecutive_failures = self._log_outcome(
            island, outcome, event_log, staged, consecutive_failures
        )
        self._maybe_snapshot(snapshots_file)
        return consecutive_failures

    def _log_outcome(self, island, outcome, event_log, staged, consecutive_failures):
        if isinstance(outcome, BackendUnavailable):
            event = self._aborted_round_event(island, outcome)
            island.scheduler.record_iteration(False)
            event_log.log_event(event)
            island.iteration += 1
            logger.warning("island %d round aborted: %s", island.id, outcome)
            return consecutive_failures + 1
        if isinstance(outcome, (TranscriptExhausted, TranscriptMismatch)):
            logger.warning("stopping: %s", outcome)
            self.stop_reason = "transcript_exhausted"
            return consecutive_failures
        if isinstance(outcome, Exception):
            raise outcome
        event_log.log_event(outcome.event)
        if outcome.transition is not None:
            t = outcome.transition
            event_log.log_scheduler_transition(
                island.id, island.iteration, t.c, t.k_before, t.k_after
            )
        island.iteration += 1
        staged.extend(outcome.migrations)
        return 0

    def _summary(self, initial_best: float | None) -> RunSummary:
        best = ar.best_program(self.islands)
        island_stats = []
        for island in self.islands:
            snap = ar.snapshot(island)
            island_stats.append(
                {
                    "island_id": island.id,
                    "iterations": island.iteration,
                    "coverage": snap.coverage,
                    "cell_quality": snap.cell_quality,
                    "best_score": snap.best_score,
                }
            )
        return RunSummary(
            task=self.task.name,
            direction=self.task.direction,
            seeding_mode=self.config.seeding.mode,
            initial_best_score=initial_best,
            best_score=best.score if best else None,
            best_program=(
                {
                    "id": best.id,
                    "body": best.body,
                    "island_id": best.island_id,
                    "score": best.score,
                    "features": best.features,
                }
                if best
                else None
            ),
            n_eval=self.ledger.n_eval,
            input_tokens=self.ledger.input_tokens,
            output_tokens=self.ledger.output_tokens,
            api_cost=self.ledger.api_cost,
            iterations=sum(i.iteration for i in self.islands),
            stop_reason=self.stop_reason or "budget_exhausted",
            islands=island_stats,
            paths={
                "events": EVENTS_FILE,
                "snapshots": SNAPSHOTS_FILE,
                "checkpoint": f"{CHECKPOINT_DIR}/final.jsonl",
                "config": CONFIG_COPY,
                "transcripts": TRANSCRIPT_DIR,
            },
            output_dir=str(self.out_dir),
        )


def run(config: RunConfig) -> RunSummary:
    """Execute one full search run; everything lands in config.output_dir."""
    return Runner(config).run()
