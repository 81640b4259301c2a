"""Structured run telemetry: per-iteration events, scheduler transitions,
and archive snapshots.

The event log is line-delimited JSON with a schema-version header line.
Every island iteration logs exactly one generation event — aborted and
unparseable rounds included, with an empty candidate list — so offline
passes can reconstruct evaluation and token totals from the log alone.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_NAME = "archipelago-telemetry"
SCHEMA_VERSION = 1


@dataclass
class CandidateOutcome:
    """One candidate's fate within a generation event."""

    rank: int
    valid: bool
    score: float | None = None
    delta: float | None = None  # signed improvement over the parent
    cell_index: list[int] | None = None
    failure: str | None = None

    def to_record(self) -> dict:
        rec: dict = {"rank": self.rank, "valid": self.valid}
        if self.score is not None:
            rec["score"] = self.score
        if self.delta is not None:
            rec["delta"] = self.delta
        if self.cell_index is not None:
            rec["cell_index"] = self.cell_index
        if self.failure is not None:
            rec["failure"] = self.failure
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> CandidateOutcome:
        return cls(
            rank=rec["rank"],
            valid=rec["valid"],
            score=rec.get("score"),
            delta=rec.get("delta"),
            cell_index=rec.get("cell_index"),
            failure=rec.get("failure"),
        )


@dataclass
class GenerationEvent:
    island_id: int
    iteration: int
    k_used: int
    parent_id: str
    parent_score: float
    parent_cell_index: list[int]
    inspiration_ids: list[str]
    inspiration_scores: list[float]
    candidates: list[CandidateOutcome]
    pre_distance: float | None
    input_tokens: int
    output_tokens: int
    requery_count: int
    timestamp: float = field(default_factory=time.time)

    def to_record(self) -> dict:
        rec = {
            "type": "event",
            "island_id": self.island_id,
            "iteration": self.iteration,
            "k_used": self.k_used,
            "parent_id": self.parent_id,
            "parent_score": self.parent_score,
            "parent_cell_index": self.parent_cell_index,
            "inspiration_ids": self.inspiration_ids,
            "inspiration_scores": self.inspiration_scores,
            "candidates": [c.to_record() for c in self.candidates],
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "requery_count": self.requery_count,
            "timestamp": self.timestamp,
        }
        if self.pre_distance is not None:
            rec["pre_distance"] = self.pre_distance
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> GenerationEvent:
        return cls(
            island_id=rec["island_id"],
            iteration=rec["iteration"],
            k_used=rec["k_used"],
            parent_id=rec["parent_id"],
            parent_score=rec["parent_score"],
            parent_cell_index=rec.get("parent_cell_index", []),
            inspiration_ids=rec.get("inspiration_ids", []),
            inspiration_scores=rec.get("inspiration_scores", []),
            candidates=[CandidateOutcome.from_record(c) for c in rec.get("candidates", [])],
            pre_distance=rec.get("pre_distance"),
            input_tokens=rec.get("input_tokens", 0),
            output_tokens=rec.get("output_tokens", 0),
            requery_count=rec.get("requery_count", 0),
            timestamp=rec.get("timestamp", 0.0),
        )


class EventLog:
    """Append-only telemetry sink, flushed per record.

    An unwritable sink raises immediately: silently losing telemetry would
    invalidate every downstream analysis, so the run aborts instead.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = self.path.open("w", encoding="utf-8")
        self._write({"type": "header", "schema": SCHEMA_NAME, "version": SCHEMA_VERSION})
        self.event_count = 0

    def _write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def log_event(self, event: GenerationEvent) -> None:
        self._write(event.to_record())
        self.event_count += 1

    def log_scheduler_transition(
        self, island_id: int, iteration: int, c: int, k_before: int, k_after: int
    ) -> None:
        self._write(
            {
                "type": "scheduler",
                "island_id": island_id,
                "iteration": iteration,
                "c": c,
                "k_before": k_before,
                "k_after": k_after,
            }
        )

    def log_seeding(self, record: dict) -> None:
        self._write({"type": "seeding", **record})

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self) -> EventLog:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log(path: str | Path) -> tuple[dict, list[dict]]:
    """Return (header, records).  Raises on a missing or foreign header."""
    records: list[dict] = []
    header: dict | None = None
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if header is None:
                if rec.get("type") != "header" or rec.get("schema") != SCHEMA_NAME:
                    raise ValueError(f"{path}: not a telemetry log (missing header line)")
                header = rec
                continue
            records.append(rec)
    if header is None:
        raise ValueError(f"{path}: empty log")
    return header, records


def load_events(path: str | Path) -> list[GenerationEvent]:
    _, records = read_log(path)
    return [GenerationEvent.from_record(r) for r in records if r.get("type") == "event"]


# ---------------------------------------------------------------------------
# snapshots


@dataclass
class SnapshotRecord:
    n_eval_at_snapshot: int
    n_eval: int
    islands: list[dict]  # {island_id, coverage, cell_quality, best_score}
    global_best: float | None

    def to_record(self) -> dict:
        return {
            "n_eval_at_snapshot": self.n_eval_at_snapshot,
            "n_eval": self.n_eval,
            "islands": self.islands,
            "global_best": self.global_best,
        }


def append_snapshot(path: str | Path, record: SnapshotRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_record(), sort_keys=True) + "\n")
        fh.flush()


def read_snapshots(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
