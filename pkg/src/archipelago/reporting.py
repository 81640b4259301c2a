"""Figure rendering for the analyze CLI.

The analyses themselves stop at delimited tables; this layer turns their
rows into matplotlib figures written next to the CSVs, so a report
directory is self-contained: tables for machines, pictures for people.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# Rank buckets are deliberately categorical ("1".."7", "head", ...); drop
# matplotlib's per-axis INFO notice about it.
logging.getLogger("matplotlib.category").setLevel(logging.WARNING)

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import (  # noqa: E402
    MAX_RANK,
    N_DECILES,
    N_TIERS,
    DistanceGridResult,
    RankProfileResult,
    TopmResult,
)

_DPI = 120


def _nan(value) -> float:
    return float("nan") if value is None else float(value)


def render_topm(result: TopmResult, out_dir: str | Path) -> Path:
    out = Path(out_dir) / "topm_replay.png"
    fig, (ax_cov, ax_delta) = plt.subplots(1, 2, figsize=(11, 4.2))
    ms = list(range(1, MAX_RANK + 1))
    for tier in range(1, N_TIERS + 1):
        rows = [r for r in result.rows if r["tier"] == tier]
        cov = [_nan(r["coverage_median"]) for r in rows]
        lo = [_nan(r["coverage_iqr_lo"]) for r in rows]
        hi = [_nan(r["coverage_iqr_hi"]) for r in rows]
        ax_cov.plot(ms, cov, marker="o", label=f"tier {tier}")
        ax_cov.fill_between(ms, lo, hi, alpha=0.15)
        delta = [_nan(r["best_delta_median"]) for r in rows]
        ax_delta.plot(ms, delta, marker="o", label=f"tier {tier}")
    ax_cov.set_xlabel("kept ranks m")
    ax_cov.set_ylabel("improvement coverage")
    ax_cov.set_title("Coverage if truncated to top-m")
    ax_delta.set_xlabel("kept ranks m")
    ax_delta.set_ylabel("best delta in prefix (median)")
    ax_delta.set_title("Best prefix improvement")
    ax_cov.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def render_rank_profile(result: RankProfileResult, out_dir: str | Path) -> Path:
    out = Path(out_dir) / "rank_profile.png"
    ranks = [str(r) for r in range(1, MAX_RANK + 1)]
    rows = {r["bucket"]: r for r in result.rows}
    fig, axes = plt.subplots(1, 4, figsize=(15, 3.8))
    for ax, key, title in (
        (axes[0], "validity_median", "validity rate"),
        (axes[1], "delta_median", "delta when valid"),
        (axes[2], "cell_distance_median", "cell distance to parent"),
    ):
        ax.bar(ranks, [_nan(rows[r][key]) for r in ranks], color="#4878a8")
        ax.set_xlabel("rank")
        ax.set_title(title)
    if result.scatter:
        axes[3].scatter(
            [p["cell_distance"] for p in result.scatter],
            [p["delta"] for p in result.scatter],
            s=10,
            alpha=0.5,
            c=[p["rank"] for p in result.scatter],
            cmap="viridis",
        )
    axes[3].set_xlabel("cell distance")
    axes[3].set_ylabel("delta")
    axes[3].set_title("valid candidates")
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def render_distance_grid(result: DistanceGridResult, out_dir: str | Path) -> Path:
    out = Path(out_dir) / "distance_k_grid.png"
    ks = sorted({r["k"] for r in result.rows})
    p_grid = np.full((N_DECILES, len(ks)), np.nan)
    d_grid = np.full((N_DECILES, len(ks)), np.nan)
    for row in result.rows:
        i = row["distance_decile"] - 1
        j = ks.index(row["k"])
        p_grid[i, j] = _nan(row["p_improve_median"])
        d_grid[i, j] = _nan(row["delta_best_median"])
    fig, (ax_p, ax_d) = plt.subplots(1, 2, figsize=(9, 4.5))
    for ax, grid, title in ((ax_p, p_grid, "P(improve)"), (ax_d, d_grid, "E[delta_best]")):
        im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
        ax.set_xticks(range(len(ks)), [str(k) for k in ks])
        ax.set_yticks(range(N_DECILES), [str(d) for d in range(1, N_DECILES + 1)])
        ax.set_xlabel("K")
        ax.set_ylabel("distance decile")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out
