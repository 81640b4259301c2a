"""Telemetry stream tests: header discipline, round trips, snapshots."""

from __future__ import annotations

import json

import pytest

from archipelago.telemetry import (
    SCHEMA_NAME,
    SCHEMA_VERSION,
    CandidateOutcome,
    EventLog,
    GenerationEvent,
    SnapshotRecord,
    append_snapshot,
    load_events,
    read_log,
    read_snapshots,
)


def _event(island_id=0, iteration=3, pre_distance=0.5):
    return GenerationEvent(
        island_id=island_id,
        iteration=iteration,
        k_used=5,
        parent_id="p1",
        parent_score=1.5,
        parent_cell_index=[2, 3],
        inspiration_ids=["a", "b"],
        inspiration_scores=[1.0, 0.5],
        candidates=[
            CandidateOutcome(rank=1, valid=True, score=1.7, delta=0.2, cell_index=[2, 4]),
            CandidateOutcome(rank=2, valid=False, failure="ParseError"),
        ],
        pre_distance=pre_distance,
        input_tokens=120,
        output_tokens=60,
        requery_count=1,
        timestamp=1234.5,
    )


def test_log_starts_with_header(tmp_path):
    path = tmp_path / "events.jsonl"
    with EventLog(path):
        pass
    first = json.loads(path.read_text().splitlines()[0])
    assert first == {"type": "header", "schema": SCHEMA_NAME, "version": SCHEMA_VERSION}


def test_event_round_trip(tmp_path):
    path = tmp_path / "events.jsonl"
    original = _event()
    with EventLog(path) as log:
        log.log_event(original)
        assert log.event_count == 1
    [loaded] = load_events(path)
    assert loaded == original


def test_pre_distance_none_is_omitted_from_record(tmp_path):
    rec = _event(pre_distance=None).to_record()
    assert "pre_distance" not in rec
    assert GenerationEvent.from_record(rec).pre_distance is None


def test_candidate_record_omits_null_fields():
    rec = CandidateOutcome(rank=2, valid=False, failure="Timeout").to_record()
    assert rec == {"rank": 2, "valid": False, "failure": "Timeout"}


def test_scheduler_and_seeding_records(tmp_path):
    path = tmp_path / "events.jsonl"
    with EventLog(path) as log:
        log.log_scheduler_transition(island_id=1, iteration=6, c=0, k_before=5, k_after=7)
        log.log_seeding({"mode": "kmeans", "evaluations": 12, "inserted": 10})
    _, records = read_log(path)
    assert records[0] == {
        "type": "scheduler", "island_id": 1, "iteration": 6,
        "c": 0, "k_before": 5, "k_after": 7,
    }
    assert records[1]["type"] == "seeding"
    assert records[1]["mode"] == "kmeans"


def test_read_log_rejects_headerless_file(tmp_path):
    path = tmp_path / "bogus.jsonl"
    path.write_text(json.dumps({"type": "event"}) + "\n")
    with pytest.raises(ValueError):
        read_log(path)
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(ValueError):
        read_log(tmp_path / "empty.jsonl")


def test_load_events_filters_non_event_records(tmp_path):
    path = tmp_path / "events.jsonl"
    with EventLog(path) as log:
        log.log_seeding({"mode": "cold"})
        log.log_event(_event())
        log.log_scheduler_transition(0, 1, 3, 5, 3)
    events = load_events(path)
    assert len(events) == 1


def test_snapshot_append_and_read(tmp_path):
    path = tmp_path / "snapshots.jsonl"
    rec = SnapshotRecord(
        n_eval_at_snapshot=100,
        n_eval=104,
        islands=[{"island_id": 0, "coverage": 3, "cell_quality": 1.0, "best_score": 2.0}],
        global_best=2.0,
    )
    append_snapshot(path, rec)
    append_snapshot(path, SnapshotRecord(200, 200, [], None))
    rows = read_snapshots(path)
    assert len(rows) == 2
    assert rows[0]["n_eval_at_snapshot"] == 100
    assert rows[0]["n_eval"] == 104
    assert rows[1]["global_best"] is None
