"""Warm-start seeding: pool ingestion, clustering, and copy-and-mix.

A seed pool is a directory of program files plus a line-delimited manifest
({file, score, optional embedding_file}).  Warm starts embed the programs,
cluster them into one group per island, then optionally mix: each cluster
donates its top slice to a shared pool, receives a few uniformly sampled
programs from other clusters, and evicts the same number from the bottom
of its ranking — never touching its protected elite slice — so cluster
sizes are preserved exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientSeeds

logger = logging.getLogger(__name__)

DEFAULT_MIX_FRACTION = 0.2  # d: share copied out and injected back
DEFAULT_ELITE_FRACTION = 0.2  # rho: slice shielded from eviction
TRIGRAM_DIM = 256
KMEANS_MAX_ITERS = 100
KMEANS_TOLERANCE = 1e-6

# Fraction-of-count arithmetic guard: products like 0.3 * 10 can land one
# ulp below the exact integer, which would flip a floor/ceil.
_ULP_GUARD = 1e-9


def floor_count(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + _ULP_GUARD))


def ceil_count(fraction: float, n: int) -> int:
    return int(math.ceil(fraction * n - _ULP_GUARD))


@dataclass
class SeedEntry:
    body: str
    score: float
    embedding: list[float] | None = None


@dataclass
class SeedPool:
    entries: list[SeedEntry]
    direction: str = "maximize"


# ---------------------------------------------------------------------------
# pool ingestion


def load_seed_pool(pool_dir: str | Path, direction: str = "maximize") -> SeedPool:
    pool_dir = Path(pool_dir)
    manifest = pool_dir / "manifest.jsonl"
    entries: list[SeedEntry] = []
    with manifest.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            body = (pool_dir / rec["file"]).read_text(encoding="utf-8")
            embedding = None
            if rec.get("embedding_file"):
                embedding = json.loads((pool_dir / rec["embedding_file"]).read_text(encoding="utf-8"))
            entries.append(SeedEntry(body=body, score=float(rec["score"]), embedding=embedding))
    return SeedPool(entries=entries, direction=direction)


def write_seed_pool(pool_dir: str | Path, pool: SeedPool) -> None:
    pool_dir = Path(pool_dir)
    pool_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, entry in enumerate(pool.entries):
        name = f"prog_{i:04d}.txt"
        (pool_dir / name).write_text(entry.body, encoding="utf-8")
        rec: dict = {"file": name, "score": entry.score}
        if entry.embedding is not None:
            emb_name = f"emb_{i:04d}.json"
            (pool_dir / emb_name).write_text(json.dumps(entry.embedding), encoding="utf-8")
            rec["embedding_file"] = emb_name
        lines.append(json.dumps(rec, sort_keys=True))
    (pool_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _score_order(pool: SeedPool, indices: list[int]) -> list[int]:
    """Indices ranked best-first; original order breaks ties."""
    sign = -1.0 if pool.direction == "maximize" else 1.0
    return sorted(indices, key=lambda i: (sign * pool.entries[i].score, i))


def degrade_pool(pool: SeedPool, top_fraction: float) -> SeedPool:
    """Drop the best floor(q*n) entries — a deliberately hobbled pool for
    studying how much warm starts lean on their elites."""
    n = len(pool.entries)
    drop = floor_count(top_fraction, n)
    ranked = _score_order(pool, list(range(n)))
    dropped = set(ranked[:drop])
    kept = [pool.entries[i] for i in range(n) if i not in dropped]
    return SeedPool(entries=kept, direction=pool.direction)


# ---------------------------------------------------------------------------
# embedding providers


class TrigramEmbedder:
    """Offline fallback: hashed character-trigram frequencies, L2-normalized."""

    dim = TRIGRAM_DIM

    def embed(self, bodies: list[str]) -> list[list[float]]:
        out = []
        for body in bodies:
            vec = np.zeros(self.dim)
            data = body.encode("utf-8")
            for i in range(len(data) - 2):
                vec[zlib.crc32(data[i : i + 3]) % self.dim] += 1.0
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec /= norm
            out.append(vec.tolist())
        return out


class PrecomputedEmbeddings:
    """Vectors read from a JSONL file of {sha256, vector} records, keyed by
    the SHA-256 of the program body."""

    def __init__(self, path: str | Path):
        self._table: dict[str, list[float]] = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    self._table[rec["sha256"]] = rec["vector"]

    @staticmethod
    def key(body: str) -> str:
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    def embed(self, bodies: list[str]) -> list[list[float]]:
        out = []
        for body in bodies:
            key = self.key(body)
            if key not in self._table:
                raise KeyError(f"no precomputed embedding for body sha256={key[:12]}…")
            out.append(self._table[key])
        return out


class RemoteEmbedder:
    """OpenAI-style embeddings endpoint."""

    def __init__(self, endpoint: str, model: str, *, api_key_env: str = "ARCHIPELAGO_API_KEY"):
        import os

        self.endpoint = endpoint
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")

    def embed(self, bodies: list[str]) -> list[list[float]]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint, json={"model": self.model, "input": bodies}, headers=headers, timeout=120
        )
        resp.raise_for_status()
        data = resp.json()["data"]
        return [item["embedding"] for item in data]


# ---------------------------------------------------------------------------
# clustering


@dataclass
class ClusterAssignment:
    clusters: list[list[int]]  # entry indices per cluster
    centroids: np.ndarray


def _kmeans_pp_init(vectors: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = len(vectors)
    centroids = np.empty((m, vectors.shape[1]))
    centroids[0] = vectors[rng.integers(n)]
    d2 = ((vectors - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, m):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[j] = vectors[pick]
        d2 = np.minimum(d2, ((vectors - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    vectors: np.ndarray | list[list[float]],
    m: int,
    seed: int | np.random.Generator = 0,
) -> ClusterAssignment:
    """Lloyd iterations from a kmeans++ start; deterministic given the seed.

    Stops after 100 iterations or when no centroid moves more than 1e-6.
    An emptied cluster is repaired by re-seeding it with the point farthest
    from its assigned centroid.
    """
    vectors = np.asarray(vectors, dtype=float)
    n = len(vectors)
    if m < 1 or n < m:
        raise InsufficientSeeds(f"need at least {m} seed vectors, have {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(vectors, m, rng)
    labels = np.zeros(n, dtype=int)
    for _ in range(KMEANS_MAX_ITERS):
        dists = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        for empty in range(m):
            if not np.any(labels == empty):
                assigned_d = dists[np.arange(n), labels]
                far = int(assigned_d.argmax())
                labels[far] = empty
                centroids[empty] = vectors[far]
                dists[:, empty] = ((vectors - centroids[empty]) ** 2).sum(axis=1)
        new_centroids = np.stack([vectors[labels == j].mean(axis=0) for j in range(m)])
        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if movement < KMEANS_TOLERANCE:
            break
    clusters = [[int(i) for i in np.flatnonzero(labels == j)] for j in range(m)]
    return ClusterAssignment(clusters=clusters, centroids=centroids)


def assign_random(n_entries: int, m: int, rng: np.random.Generator) -> list[list[int]]:
    """Uniform random partition into m near-equal groups."""
    order = rng.permutation(n_entries)
    return [sorted(int(i) for i in chunk) for chunk in np.array_split(order, m)]


# ---------------------------------------------------------------------------
# copy-and-mix


@dataclass
class PoolMember:
    entry_index: int
    source_cluster: int


@dataclass
class MixedCluster:
    """One island's final seed list, with mix bookkeeping."""

    members: list[tuple[int, bool]]  # (pool entry index, arrived-by-injection)
    injected: int = 0
    evicted: int = 0
    protected: int = 0


def build_shared_pool(clusters: list[list[int]], pool: SeedPool, d: float) -> list[PoolMember]:
    """Copy each cluster's top ceil(d*|C_i|) entries, tagged with the source."""
    shared: list[PoolMember] = []
    for cid, cluster in enumerate(clusters):
        take = ceil_count(d, len(cluster))
        for idx in _score_order(pool, list(cluster))[:take]:
            shared.append(PoolMember(entry_index=idx, source_cluster=cid))
    return shared


def inject_and_evict(
    cluster: list[int],
    cluster_id: int,
    shared_pool: list[PoolMember],
    pool: SeedPool,
    d: float,
    rho: float,
    seed: int | np.random.Generator = 0,
) -> MixedCluster:
    """Swap floor(d*n) bottom entries for uniform draws from other clusters.

    The top ceil(rho*n) of the original cluster is never evicted.  When
    other clusters donated fewer programs than the injection quota, both
    the injection and the eviction shrink to match, so the cluster size is
    preserved in every case.
    """
    rng = np.random.default_rng(seed)
    n = len(cluster)
    quota = floor_count(d, n)
    donors = [pm for pm in shared_pool if pm.source_cluster != cluster_id]
    r = min(quota, len(donors))
    picked = sorted(int(i) for i in rng.choice(len(donors), size=r, replace=False)) if r else []
    injected = [donors[i].entry_index for i in picked]

    protected_count = min(ceil_count(rho, n), n)
    best_first = _score_order(pool, list(cluster))
    protected_positions = {cluster.index(idx) for idx in best_first[:protected_count]}

    combined: list[tuple[int, bool]] = [(idx, False) for idx in cluster]
    combined += [(idx, True) for idx in injected]
    sign = -1.0 if pool.direction == "maximize" else 1.0
    # Stable sort: score ties evict in list order.
    worst_first = sorted(
        range(len(combined)),
        key=lambda pos: -sign * pool.entries[combined[pos][0]].score,
    )
    evict: set[int] = set()
    for pos in worst_first:
        if len(evict) == r:
            break
        if combined[pos][1] is False and pos in protected_positions:
            continue
        evict.add(pos)
    members = [entry for pos, entry in enumerate(combined) if pos not in evict]
    assert len(members) == n
    return MixedCluster(
        members=members, injected=r, evicted=len(evict), protected=protected_count
    )


# ---------------------------------------------------------------------------
# allocation modes


ALLOCATION_MODES = ("cold", "random", "kmeans", "random_perturbed", "kmeans_elite")


@dataclass
class Allocation:
    mode: str
    clusters: list[MixedCluster]
    effective_clusters: int
    warnings: list[str] = field(default_factory=list)


def _pool_vectors(pool: SeedPool, embedder) -> np.ndarray:
    if all(e.embedding is not None for e in pool.entries):
        return np.asarray([e.embedding for e in pool.entries], dtype=float)
    vectors = embedder.embed([e.body for e in pool.entries])
    return np.asarray(vectors, dtype=float)


def allocate_pool(
    pool: SeedPool,
    m: int,
    mode: str,
    *,
    d: float = DEFAULT_MIX_FRACTION,
    rho: float = DEFAULT_ELITE_FRACTION,
    seed: int = 0,
    embedder=None,
) -> Allocation:
    """Assign pool entries to m islands under the requested mode.

    Pools smaller than m fill only the first len(pool) islands; the rest
    get an empty cluster and cold-start from the task's initial program.
    """
    if mode not in ALLOCATION_MODES:
        raise ValueError(f"unknown seeding mode {mode!r}")
    if mode == "cold" or not pool.entries:
        return Allocation(mode=mode, clusters=[MixedCluster(members=[]) for _ in range(m)],
                          effective_clusters=0)
    warnings: list[str] = []
    effective = min(m, len(pool.entries))
    if effective < m:
        warnings.append(
            f"pool has {len(pool.entries)} entries for {m} islands; "
            f"{m - effective} island(s) cold-start"
        )
        logger.warning(warnings[-1])
    if mode in ("random", "random_perturbed"):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 30]))
        clusters = assign_random(len(pool.entries), effective, rng)
    else:
        embedder = embedder or TrigramEmbedder()
        assignment = kmeans(_pool_vectors(pool, embedder), effective, seed=np.random.default_rng(np.random.SeedSequence([seed, 31])))
        clusters = assignment.clusters
    if mode in ("random_perturbed", "kmeans_elite"):
        shared = build_shared_pool(clusters, pool, d)
        mixed = [
            inject_and_evict(
                cluster, cid, shared, pool, d, rho,
                seed=np.random.default_rng(np.random.SeedSequence([seed, 32, cid])),
            )
            for cid, cluster in enumerate(clusters)
        ]
    else:
        mixed = [MixedCluster(members=[(idx, False) for idx in cluster]) for cluster in clusters]
    mixed += [MixedCluster(members=[]) for _ in range(m - effective)]
    return Allocation(mode=mode, clusters=mixed, effective_clusters=effective, warnings=warnings)
