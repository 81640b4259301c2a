"""Builders for synthetic telemetry used across analysis tests.

Events are built as raw dicts first — the same shape the log file carries —
so oracle code can work on plain records while the library parses them
through its own types.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from archipelago.telemetry import SCHEMA_NAME, SCHEMA_VERSION, GenerationEvent


def candidate(rank, valid, score=None, delta=None, cell=None, failure=None) -> dict:
    rec = {"rank": rank, "valid": valid}
    if score is not None:
        rec["score"] = score
    if delta is not None:
        rec["delta"] = delta
    if cell is not None:
        rec["cell_index"] = cell
    if failure is not None:
        rec["failure"] = failure
    return rec


def event(
    *,
    island_id=0,
    iteration=0,
    k_used=7,
    parent_id="p",
    parent_score=1.0,
    parent_cell=(2, 2),
    inspiration_scores=(),
    candidates=(),
    pre_distance=None,
    input_tokens=10,
    output_tokens=20,
    requery_count=0,
) -> dict:
    rec = {
        "type": "event",
        "island_id": island_id,
        "iteration": iteration,
        "k_used": k_used,
        "parent_id": parent_id,
        "parent_score": parent_score,
        "parent_cell_index": list(parent_cell),
        "inspiration_ids": [f"insp{i}" for i in range(len(inspiration_scores))],
        "inspiration_scores": list(inspiration_scores),
        "candidates": list(candidates),
        "input_tokens": input_tokens,
        "output_tokens": output_tokens,
        "requery_count": requery_count,
        "timestamp": 1000.0 + iteration,
    }
    if pre_distance is not None:
        rec["pre_distance"] = pre_distance
    return rec


def write_log(path: str | Path, records: list[dict]) -> Path:
    path = Path(path)
    lines = [json.dumps({"type": "header", "schema": SCHEMA_NAME, "version": SCHEMA_VERSION})]
    lines += [json.dumps(rec, sort_keys=True) for rec in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def parse_events(records: list[dict]) -> list[GenerationEvent]:
    return [GenerationEvent.from_record(r) for r in records if r.get("type") == "event"]


def random_event_log(seed: int, n_events: int) -> list[dict]:
    """A varied synthetic run: mixed K, validity, distances, inspirations."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_events):
        k = int(rng.choice([1, 3, 5, 7]))
        n_cands = int(rng.integers(0, k + 1))
        parent_score = float(rng.normal(1.0, 0.5))
        cands = []
        for rank in range(1, n_cands + 1):
            if rng.random() < 0.7:
                score = parent_score + float(rng.normal(0.0, 0.3))
                cands.append(
                    candidate(
                        rank,
                        True,
                        score=score,
                        delta=score - parent_score,
                        cell=[int(rng.integers(0, 10)), int(rng.integers(0, 10))],
                    )
                )
            else:
                failure = str(rng.choice(["ParseError", "ConstraintViolation", "RuntimeError"]))
                cands.append(candidate(rank, False, failure=failure))
        n_insp = int(rng.integers(0, 4))
        records.append(
            event(
                island_id=int(rng.integers(0, 4)),
                iteration=i,
                k_used=k,
                parent_score=parent_score,
                parent_cell=[int(rng.integers(0, 10)), int(rng.integers(0, 10))],
                inspiration_scores=[float(rng.normal(1.0, 0.5)) for _ in range(n_insp)],
                candidates=cands,
                pre_distance=float(rng.uniform(0, 2)) if rng.random() < 0.9 else None,
                input_tokens=int(rng.integers(50, 500)),
                output_tokens=int(rng.integers(50, 500)),
                requery_count=int(rng.random() < 0.1),
            )
        )
    return records
