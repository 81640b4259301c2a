"""Built-in optimization tasks and their genome wire formats.

A task bundles an evaluator with the feature-space geometry, the search
direction, a feasible starting program, and a short description used in
generation prompts.  Program bodies are plain text; the built-in tasks use
JSON genomes so the deterministic mutation backend can parse and perturb
them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .archive import GridDim
from .evaluation import EvaluationResult, failed

OVERLAP_EPSILON = 1e-9
SPHERE_DIM = 8

# Best published total for the 26-circle instance is 2.635988; it is
# context for judging run quality, nothing in the engine asserts it.
CIRCLE_PACKING_REFERENCE_BEST = 2.635988

DEFAULT_FEATURE_BINS = 10


@dataclass
class Task:
    name: str
    direction: str
    dims: list[GridDim]
    evaluate: Callable[[str], EvaluationResult]
    initial_body: str
    description: str
    genome_kind: str | None = None  # circles | vector | None (opaque)

    @property
    def feature_names(self) -> list[str]:
        return [d.name for d in self.dims]


# ---------------------------------------------------------------------------
# genome wire formats


def parse_circles(text: str) -> np.ndarray:
    """Parse a circle genome: JSON array of [x, y, r] triples (dicts with
    x/y/r keys are accepted too).  Returns an (n, 3) float array."""
    data = json.loads(text)
    if isinstance(data, dict) and "circles" in data:
        data = data["circles"]
    if not isinstance(data, list) or not data:
        raise ValueError("expected a non-empty array of circles")
    rows = []
    for item in data:
        if isinstance(item, dict):
            row = [item["x"], item["y"], item["r"]]
        elif isinstance(item, (list, tuple)) and len(item) == 3:
            row = list(item)
        else:
            raise ValueError(f"bad circle entry: {item!r}")
        rows.append([float(v) for v in row])
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite circle coordinates")
    return arr


def serialize_circles(circles: np.ndarray) -> str:
    return json.dumps([[float(x), float(y), float(r)] for x, y, r in circles])


def parse_vector(text: str) -> np.ndarray:
    data = json.loads(text)
    if not isinstance(data, list) or not data:
        raise ValueError("expected a non-empty array of numbers")
    arr = np.asarray([float(v) for v in data], dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite vector entries")
    return arr


def serialize_vector(vec: np.ndarray) -> str:
    return json.dumps([float(v) for v in vec])


# ---------------------------------------------------------------------------
# circle packing


def circles_feasible(circles: np.ndarray, epsilon: float = OVERLAP_EPSILON) -> bool:
    """Unit-square containment and pairwise disjointness.

    Feasible iff every radius is positive, every circle lies inside the
    unit square, and every pair satisfies dist >= r_i + r_j - epsilon.
    """
    x, y, r = circles[:, 0], circles[:, 1], circles[:, 2]
    if not np.all(r > 0):
        return False
    if np.any(x - r < 0) or np.any(x + r > 1) or np.any(y - r < 0) or np.any(y + r > 1):
        return False
    if len(circles) > 1:
        centers = circles[:, :2]
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        rsum = r[:, None] + r[None, :]
        iu = np.triu_indices(len(circles), k=1)
        if np.any(dist[iu] < rsum[iu] - epsilon):
            return False
    return True


def circle_packing_eval(genome_text: str, n: int = 26) -> EvaluationResult:
    """Score a packing by the sum of radii; infeasible genomes are invalid."""
    try:
        circles = parse_circles(genome_text)
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        return failed("ParseError", detail=str(exc))
    if len(circles) != n:
        return failed("ConstraintViolation", detail=f"expected {n} circles, got {len(circles)}")
    if not circles_feasible(circles):
        return failed("ConstraintViolation", detail="containment or overlap violated")
    radii = circles[:, 2]
    return EvaluationResult(
        valid=True,
        score=float(radii.sum()),
        features=[float(radii.mean()), float(radii.std())],
    )


def initial_circle_packing(n: int) -> str:
    """A loose square-grid packing, feasible with wide margins."""
    g = math.ceil(math.sqrt(n))
    spacing = 1.0 / g
    radius = 0.3 * spacing
    circles = []
    for j in range(g):
        for i in range(g):
            if len(circles) == n:
                break
            circles.append([(i + 0.5) * spacing, (j + 0.5) * spacing, radius])
    return serialize_circles(np.asarray(circles))


def circle_packing_task(n: int = 26, bins: int = DEFAULT_FEATURE_BINS) -> Task:
    return Task(
        name=f"circle_packing_{n}",
        direction="maximize",
        dims=[
            GridDim(0.0, 0.25, bins, name="mean_radius"),
            GridDim(0.0, 0.15, bins, name="radius_std"),
        ],
        evaluate=lambda body: circle_packing_eval(body, n=n),
        initial_body=initial_circle_packing(n),
        description=(
            f"Pack {n} non-overlapping circles inside the unit square so that "
            "the sum of their radii is as large as possible. The program is a "
            "JSON array of [x, y, r] triples."
        ),
        genome_kind="circles",
    )


# ---------------------------------------------------------------------------
# synthetic sphere


def synthetic_sphere_eval(genome_text: str, dim: int = SPHERE_DIM) -> EvaluationResult:
    try:
        vec = parse_vector(genome_text)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        return failed("ParseError", detail=str(exc))
    if len(vec) != dim:
        return failed("ConstraintViolation", detail=f"expected dim {dim}, got {len(vec)}")
    score = -float(np.dot(vec, vec))
    features = [float(np.clip(vec[0], -1.0, 1.0)), float(np.clip(vec[1], -1.0, 1.0))]
    return EvaluationResult(valid=True, score=score, features=features)


def synthetic_sphere_task(bins: int = DEFAULT_FEATURE_BINS) -> Task:
    return Task(
        name="synthetic_sphere",
        direction="maximize",
        dims=[
            GridDim(-1.0, 1.0, bins, name="x1"),
            GridDim(-1.0, 1.0, bins, name="x2"),
        ],
        evaluate=lambda body: synthetic_sphere_eval(body),
        initial_body=serialize_vector(np.full(SPHERE_DIM, 0.5)),
        description=(
            f"Minimize the squared norm of a {SPHERE_DIM}-dimensional real vector "
            "(the score is its negation, so higher is better). The program is a "
            "JSON array of numbers."
        ),
        genome_kind="vector",
    )
