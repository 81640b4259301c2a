"""Feature-grid archive: programs, islands, insertion, and parent sampling.

The archive is a uniform grid over a low-dimensional feature space.  Each
occupied cell holds exactly one program; a candidate displaces the occupant
only on strict score improvement, so per-cell quality is monotone over the
life of a run.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import ContractViolation, EmptyArchive

if TYPE_CHECKING:
    from .scheduler import SchedulerState

logger = logging.getLogger(__name__)


@dataclass
class GridDim:
    """One archive dimension: half-open value range cut into `bins` cells."""

    lower: float
    upper: float
    bins: int
    name: str = ""


@dataclass
class Program:
    id: str
    body: str
    island_id: int
    score: float | None = None
    features: list[float] | None = None
    parent_id: str | None = None
    iteration_born: int = 0
    origin: str = "generated"  # seed | generated | reinjected
    valid: bool = False


class InsertOutcome(enum.Enum):
    NEW_CELL = "new_cell"
    REPLACED = "replaced"
    REJECTED = "rejected"

    @property
    def improved(self) -> bool:
        return self is not InsertOutcome.REJECTED


@dataclass
class ArchiveGrid:
    dims: list[GridDim]
    direction: str = "maximize"  # maximize | minimize
    cells: dict[tuple[int, ...], Program] = field(default_factory=dict)


@dataclass
class Island:
    """One independent evolution lane: archive + scheduler + private rng."""

    id: int
    grid: ArchiveGrid
    scheduler: SchedulerState
    rng: np.random.Generator
    rank_weight: float = 1.0
    iteration: int = 0
    migration_queue: list[Program] = field(default_factory=list)


@dataclass
class IslandSnapshot:
    coverage: int
    cell_quality: float | None
    best_score: float | None


def better(a: float, b: float, direction: str) -> bool:
    """True when score `a` strictly beats `b` under the task direction."""
    return a > b if direction == "maximize" else a < b


def cell_index(features: list[float] | tuple[float, ...], dims: list[GridDim]) -> tuple[int, ...]:
    """Map a feature vector to its grid cell.

    Each coordinate bins as floor(bins * (f - lower) / (upper - lower)),
    clamped into [0, bins - 1]; values at or beyond the upper bound land in
    the top bin.
    """
    if len(features) != len(dims):
        raise ContractViolation(
            f"feature vector has {len(features)} coordinates, grid has {len(dims)} dimensions"
        )
    idx = []
    for f, dim in zip(features, dims):
        raw = math.floor(dim.bins * (f - dim.lower) / (dim.upper - dim.lower))
        idx.append(min(max(raw, 0), dim.bins - 1))
    return tuple(idx)


def insert(program: Program, grid: ArchiveGrid) -> InsertOutcome:
    """Place an evaluated program into its cell under strict improvement.

    Ties keep the incumbent.  Unevaluated or invalid programs are a contract
    violation: feasibility filtering happens upstream.
    """
    if not program.valid or program.score is None or program.features is None:
        raise ContractViolation(f"program {program.id!r} is not a valid evaluated program")
    cell = cell_index(program.features, grid.dims)
    incumbent = grid.cells.get(cell)
    if incumbent is None:
        grid.cells[cell] = program
        return InsertOutcome.NEW_CELL
    if better(program.score, incumbent.score, grid.direction):
        grid.cells[cell] = program
        return InsertOutcome.REPLACED
    return InsertOutcome.REJECTED


def _ranked_occupants(grid: ArchiveGrid) -> list[Program]:
    """Occupants ordered worst-to-best; cell tuple breaks score ties."""
    items = sorted(grid.cells.items(), key=lambda kv: kv[0])
    signed = 1.0 if grid.direction == "maximize" else -1.0
    items.sort(key=lambda kv: signed * kv[1].score)  # stable: ties keep cell order
    return [p for _, p in items]


def _rank_probabilities(n: int, rank_weight: float) -> np.ndarray:
    """Softmax over normalized ranks 0..n-1; rank_weight 0 is uniform."""
    if n == 1:
        return np.ones(1)
    ranks = np.arange(n) / (n - 1)
    w = np.exp(rank_weight * ranks)
    return w / w.sum()


def sample_parent(island: Island) -> Program:
    """Draw a parent from occupied cells, biased toward better scores."""
    occupants = _ranked_occupants(island.grid)
    if not occupants:
        raise EmptyArchive(f"island {island.id} archive is empty")
    probs = _rank_probabilities(len(occupants), island.rank_weight)
    pick = island.rng.choice(len(occupants), p=probs)
    return occupants[pick]


def sample_inspirations(island: Island, n: int, exclude: str) -> list[Program]:
    """Up to `n` distinct occupants (never `exclude`), without replacement."""
    occupants = [p for p in _ranked_occupants(island.grid) if p.id != exclude]
    chosen: list[Program] = []
    while occupants and len(chosen) < n:
        probs = _rank_probabilities(len(occupants), island.rank_weight)
        pick = int(island.rng.choice(len(occupants), p=probs))
        chosen.append(occupants.pop(pick))
    return chosen


def snapshot(island: Island) -> IslandSnapshot:
    """Coverage, mean occupant score, and best score for one island."""
    scores = [p.score for p in island.grid.cells.values()]
    if not scores:
        return IslandSnapshot(coverage=0, cell_quality=None, best_score=None)
    best = max(scores) if island.grid.direction == "maximize" else min(scores)
    return IslandSnapshot(
        coverage=len(scores),
        cell_quality=sum(scores) / len(scores),
        best_score=best,
    )


def best_program(islands: list[Island]) -> Program | None:
    """Global best across islands, or None when every archive is empty."""
    direction = islands[0].grid.direction if islands else "maximize"
    best: Program | None = None
    for island in islands:
        for cell in sorted(island.grid.cells):
            prog = island.grid.cells[cell]
            if best is None or better(prog.score, best.score, direction):
                best = prog
    return best


def write_checkpoint(islands: list[Island], path: str | Path) -> None:
    """Serialize every occupied cell, one record per line, ordered for
    byte-stable output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for island in sorted(islands, key=lambda i: i.id):
            for cell in sorted(island.grid.cells):
                prog = island.grid.cells[cell]
                record = {
                    "island_id": island.id,
                    "cell_index": list(cell),
                    "program_id": prog.id,
                    "score": prog.score,
                    "features": prog.features,
                    "body": prog.body,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_checkpoint(path: str | Path) -> dict[int, dict[tuple[int, ...], Program]]:
    """Load a checkpoint back into per-island cell maps."""
    out: dict[int, dict[tuple[int, ...], Program]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            cell = tuple(rec["cell_index"])
            prog = Program(
                id=rec["program_id"],
                body=rec["body"],
                island_id=rec["island_id"],
                score=rec["score"],
                features=rec["features"],
                valid=True,
            )
            out.setdefault(rec["island_id"], {})[cell] = prog
    return out
