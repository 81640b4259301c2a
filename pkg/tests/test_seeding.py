"""Seed-pool tests: IO, embeddings, clustering, and the copy-and-mix rules."""

from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from archipelago.errors import InsufficientSeeds
from archipelago.seeding import (
    ALLOCATION_MODES,
    PoolMember,
    PrecomputedEmbeddings,
    SeedEntry,
    SeedPool,
    TrigramEmbedder,
    allocate_pool,
    assign_random,
    build_shared_pool,
    ceil_count,
    degrade_pool,
    floor_count,
    inject_and_evict,
    kmeans,
    load_seed_pool,
    write_seed_pool,
)


def make_pool(scores, direction="maximize"):
    return SeedPool(
        entries=[SeedEntry(body=f"prog {i} score {s}", score=float(s)) for i, s in enumerate(scores)],
        direction=direction,
    )


# -------------------------------------------------------- count arithmetic

def test_count_guards_absorb_float_noise():
    # 0.3 * 10 and 0.7 * 10 both land one ulp under the integer.
    assert floor_count(0.3, 10) == 3
    assert floor_count(0.7, 10) == 7
    assert ceil_count(0.3, 10) == 3
    assert ceil_count(0.2, 10) == 2
    assert floor_count(0.25, 10) == 2
    assert ceil_count(0.25, 10) == 3
    assert floor_count(0.0, 50) == 0
    assert ceil_count(0.0, 50) == 0
    assert floor_count(1.0, 50) == 50
    assert ceil_count(1.0, 50) == 50


# ------------------------------------------------------------------- IO

def test_pool_round_trip(tmp_path):
    pool = make_pool([3.0, 1.0, 2.0])
    pool.entries[1].embedding = [0.25, 0.75]
    write_seed_pool(tmp_path / "pool", pool)
    loaded = load_seed_pool(tmp_path / "pool")
    assert [e.body for e in loaded.entries] == [e.body for e in pool.entries]
    assert [e.score for e in loaded.entries] == [3.0, 1.0, 2.0]
    assert loaded.entries[0].embedding is None
    assert loaded.entries[1].embedding == [0.25, 0.75]


def test_degrade_drops_best_fraction():
    pool = make_pool([5.0, 1.0, 4.0, 2.0, 3.0, 0.0, 6.0, 2.5, 3.5, 1.5])
    degraded = degrade_pool(pool, 0.2)
    scores = [e.score for e in degraded.entries]
    assert len(scores) == 8
    assert 6.0 not in scores and 5.0 not in scores
    # Relative order of survivors is untouched.
    assert scores == [1.0, 4.0, 2.0, 3.0, 0.0, 2.5, 3.5, 1.5]


def test_degrade_respects_direction():
    pool = make_pool([5.0, 1.0, 3.0], direction="minimize")
    degraded = degrade_pool(pool, 1 / 3)
    assert [e.score for e in degraded.entries] == [5.0, 3.0]


def test_degrade_zero_fraction_is_identity():
    pool = make_pool([1.0, 2.0])
    assert [e.score for e in degrade_pool(pool, 0.0).entries] == [1.0, 2.0]


# ---------------------------------------------------------------- embedders

def test_trigram_embedder_is_unit_norm_and_deterministic():
    embedder = TrigramEmbedder()
    vecs = embedder.embed(["def f():\n    return 1\n", "def f():\n    return 2\n"])
    assert len(vecs) == 2 and len(vecs[0]) == 256
    assert np.linalg.norm(vecs[0]) == pytest.approx(1.0)
    assert embedder.embed(["def f():\n    return 1\n"])[0] == vecs[0]
    assert vecs[0] != vecs[1]


def test_trigram_embedder_short_body():
    [vec] = TrigramEmbedder().embed(["ab"])  # fewer than 3 bytes: zero vector
    assert np.linalg.norm(vec) == 0.0


def test_precomputed_embeddings(tmp_path):
    path = tmp_path / "emb.jsonl"
    body = "some program"
    rec = {"sha256": PrecomputedEmbeddings.key(body), "vector": [1.0, 0.0]}
    path.write_text(json.dumps(rec) + "\n")
    table = PrecomputedEmbeddings(path)
    assert table.embed([body]) == [[1.0, 0.0]]
    with pytest.raises(KeyError):
        table.embed(["unknown body"])


# --------------------------------------------------------------- clustering

def _brute_force_best_sse(vectors, m=2):
    """Exact minimum SSE over every non-empty m=2 partition."""
    n = len(vectors)
    best = np.inf
    for mask in range(1, 2**n - 1):
        groups = [[], []]
        for i in range(n):
            groups[(mask >> i) & 1].append(i)
        sse = 0.0
        for grp in groups:
            pts = vectors[grp]
            sse += ((pts - pts.mean(axis=0)) ** 2).sum()
        best = min(best, sse)
    return best


def test_kmeans_matches_brute_force_on_two_blobs():
    rng = np.random.default_rng(0)
    blob_a = rng.normal(0.0, 0.05, size=(3, 2))
    blob_b = rng.normal(5.0, 0.05, size=(3, 2)) + [0.0, 5.0]
    vectors = np.vstack([blob_a, blob_b])
    assignment = kmeans(vectors, 2, seed=1)
    sse = 0.0
    for cluster in assignment.clusters:
        pts = vectors[cluster]
        sse += ((pts - pts.mean(axis=0)) ** 2).sum()
    assert sse == pytest.approx(_brute_force_best_sse(vectors), abs=1e-9)
    memberships = sorted(sorted(c) for c in assignment.clusters)
    assert memberships == [[0, 1, 2], [3, 4, 5]]


def test_kmeans_deterministic_under_seed():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(20, 4))
    a = kmeans(vectors, 4, seed=7)
    b = kmeans(vectors, 4, seed=7)
    assert a.clusters == b.clusters
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_covers_every_point_exactly_once():
    rng = np.random.default_rng(4)
    vectors = rng.normal(size=(17, 3))
    assignment = kmeans(vectors, 5, seed=2)
    flat = sorted(itertools.chain.from_iterable(assignment.clusters))
    assert flat == list(range(17))
    assert all(cluster for cluster in assignment.clusters)


def test_kmeans_repairs_degenerate_input():
    vectors = np.zeros((4, 2))  # all identical: one cluster would empty
    assignment = kmeans(vectors, 2, seed=0)
    assert len(assignment.clusters) == 2
    assert all(cluster for cluster in assignment.clusters)


def test_kmeans_insufficient_seeds():
    with pytest.raises(InsufficientSeeds):
        kmeans(np.zeros((2, 2)), 3)


def test_assign_random_partitions_evenly():
    rng = np.random.default_rng(5)
    clusters = assign_random(11, 3, rng)
    flat = sorted(itertools.chain.from_iterable(clusters))
    assert flat == list(range(11))
    sizes = [len(c) for c in clusters]
    assert max(sizes) - min(sizes) <= 1
    assert all(c == sorted(c) for c in clusters)


# ------------------------------------------------------------- copy-and-mix

def test_shared_pool_takes_top_slice_per_cluster():
    pool = make_pool(list(range(17)))
    clusters = [list(range(10)), list(range(10, 17))]
    shared = build_shared_pool(clusters, pool, d=0.2)
    by_source = {}
    for member in shared:
        by_source.setdefault(member.source_cluster, []).append(member.entry_index)
    # ceil(0.2 * 10) = 2 best of cluster 0, ceil(0.2 * 7) = 2 best of cluster 1
    assert by_source == {0: [9, 8], 1: [16, 15]}

    shared = build_shared_pool(clusters, pool, d=0.3)
    assert len([m for m in shared if m.source_cluster == 0]) == 3
    assert len([m for m in shared if m.source_cluster == 1]) == 3  # ceil(2.1)


def test_inject_and_evict_full_protection_keeps_originals():
    # n=5, d=0.5, rho=1.0: two injected arrive, every original is protected,
    # so the same two injected entries must be the ones evicted.
    pool = make_pool([10.0, 20.0, 30.0, 40.0, 50.0, 1.0, 2.0])
    cluster = [0, 1, 2, 3, 4]
    shared = [PoolMember(5, 1), PoolMember(6, 1)]
    mixed = inject_and_evict(cluster, 0, shared, pool, d=0.5, rho=1.0, seed=0)
    assert mixed.injected == 2 and mixed.evicted == 2 and mixed.protected == 5
    assert [idx for idx, _ in mixed.members] == cluster
    assert all(flag is False for _, flag in mixed.members)


def test_inject_and_evict_swaps_bottom_for_donors():
    # Donors score far above everyone local: with rho=0.2 only the local
    # best is shielded, so the two worst locals leave.
    pool = make_pool([1.0, 2.0, 3.0, 4.0, 5.0, 100.0, 200.0])
    cluster = [0, 1, 2, 3, 4]
    shared = [PoolMember(5, 1), PoolMember(6, 2)]
    mixed = inject_and_evict(cluster, 0, shared, pool, d=0.5, rho=0.2, seed=0)
    indices = sorted(idx for idx, _ in mixed.members)
    assert len(mixed.members) == 5
    assert mixed.injected == 2 and mixed.evicted == 2
    assert indices == [2, 3, 4, 5, 6]  # entries 0 and 1 evicted
    assert {idx for idx, flag in mixed.members if flag} == {5, 6}


def test_inject_and_evict_excludes_own_cluster_donations():
    pool = make_pool([1.0, 2.0, 3.0, 4.0])
    cluster = [0, 1]
    shared = [PoolMember(0, 0), PoolMember(1, 0), PoolMember(3, 1)]
    mixed = inject_and_evict(cluster, 0, shared, pool, d=1.0, rho=0.0, seed=0)
    injected = {idx for idx, flag in mixed.members if flag}
    assert injected == {3}  # never its own donations; r shrank to the donor count
    assert mixed.injected == 1
    assert len(mixed.members) == 2


def test_inject_and_evict_protects_elite_slice():
    pool = make_pool([5.0, 4.0, 1.0, 2.0, 3.0, 50.0, 60.0, 70.0])
    cluster = [0, 1, 2, 3, 4]
    shared = [PoolMember(5, 1), PoolMember(6, 1), PoolMember(7, 1)]
    # rho=0.4 protects ceil(2.0)=2 best originals: entries 0 (5.0) and 1 (4.0).
    mixed = inject_and_evict(cluster, 0, shared, pool, d=0.6, rho=0.4, seed=1)
    surviving = {idx for idx, _ in mixed.members}
    assert {0, 1} <= surviving
    assert mixed.protected == 2
    assert len(mixed.members) == 5


def test_inject_and_evict_size_preserved_randomized(rng):
    for _ in range(200):
        n = int(rng.integers(1, 30))
        n_donors = int(rng.integers(0, 20))
        d = float(rng.uniform(0, 1))
        rho = float(rng.uniform(0, 1))
        scores = rng.normal(size=n + n_donors)
        pool = make_pool(scores.tolist())
        cluster = list(range(n))
        shared = [PoolMember(n + i, 1) for i in range(n_donors)]
        mixed = inject_and_evict(cluster, 0, shared, pool, d=d, rho=rho,
                                 seed=int(rng.integers(2**31)))
        assert len(mixed.members) == n
        assert mixed.injected == mixed.evicted == min(floor_count(d, n), n_donors)


# ---------------------------------------------------------------- allocation

def test_allocation_modes_tuple():
    assert ALLOCATION_MODES == ("cold", "random", "kmeans", "random_perturbed", "kmeans_elite")


def test_allocate_cold():
    alloc = allocate_pool(make_pool([1.0, 2.0]), 4, "cold")
    assert alloc.effective_clusters == 0
    assert [c.members for c in alloc.clusters] == [[], [], [], []]


def test_allocate_random_covers_pool_once():
    pool = make_pool(np.arange(23).tolist())
    alloc = allocate_pool(pool, 4, "random", seed=9)
    flat = sorted(idx for c in alloc.clusters for idx, _ in c.members)
    assert flat == list(range(23))
    sizes = [len(c.members) for c in alloc.clusters]
    assert max(sizes) - min(sizes) <= 1


def test_allocate_kmeans_covers_pool_once():
    pool = make_pool(np.arange(12).tolist())
    alloc = allocate_pool(pool, 3, "kmeans", seed=9)
    flat = sorted(idx for c in alloc.clusters for idx, _ in c.members)
    assert flat == list(range(12))


def test_allocate_mixed_modes_preserve_cluster_sizes():
    pool = make_pool(np.linspace(0, 10, 20).tolist())
    for mode in ("random_perturbed", "kmeans_elite"):
        base_mode = "random" if mode == "random_perturbed" else "kmeans"
        base = allocate_pool(pool, 4, base_mode, seed=3)
        mixed = allocate_pool(pool, 4, mode, seed=3)
        assert [len(c.members) for c in mixed.clusters] == [len(c.members) for c in base.clusters]
        assert sum(len(c.members) for c in mixed.clusters) == 20
        assert any(c.injected for c in mixed.clusters)


def test_allocate_deterministic():
    pool = make_pool(np.linspace(0, 5, 15).tolist())
    a = allocate_pool(pool, 3, "kmeans_elite", seed=11)
    b = allocate_pool(pool, 3, "kmeans_elite", seed=11)
    assert [c.members for c in a.clusters] == [c.members for c in b.clusters]


def test_allocate_small_pool_cold_starts_remaining_islands():
    alloc = allocate_pool(make_pool([1.0, 2.0]), 4, "random", seed=0)
    assert alloc.effective_clusters == 2
    sizes = [len(c.members) for c in alloc.clusters]
    assert sorted(sizes) == [0, 0, 1, 1]
    assert alloc.warnings and "cold-start" in alloc.warnings[0]


def test_allocate_unknown_mode():
    with pytest.raises(ValueError):
        allocate_pool(make_pool([1.0]), 2, "warmish")
