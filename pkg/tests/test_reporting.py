"""Figure rendering smoke tests: files land where promised, as real PNGs."""

from __future__ import annotations

from archipelago.analysis import distance_k_grid, rank_profile, topm_replay
from archipelago.reporting import render_distance_grid, render_rank_profile, render_topm

from helpers import parse_events, random_event_log

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _runs():
    return [parse_events(random_event_log(seed=8, n_events=150))]


def test_render_topm(tmp_path):
    path = render_topm(topm_replay(_runs()), tmp_path)
    assert path.name == "topm_replay.png"
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_render_rank_profile(tmp_path):
    path = render_rank_profile(rank_profile(_runs()), tmp_path)
    assert path.name == "rank_profile.png"
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_render_distance_grid(tmp_path):
    path = render_distance_grid(distance_k_grid(_runs()), tmp_path)
    assert path.name == "distance_k_grid.png"
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_render_handles_sparse_tables(tmp_path):
    # A single thin run: most cells empty, every panel still renders.
    runs = [parse_events(random_event_log(seed=9, n_events=12))]
    assert render_topm(topm_replay(runs), tmp_path).exists()
    assert render_rank_profile(rank_profile(runs), tmp_path).exists()
    assert render_distance_grid(distance_k_grid(runs), tmp_path).exists()
