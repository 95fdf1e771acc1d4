"""Static plot emission: per-region interval charts and citywide maps."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _by_region(records):
    grouped = defaultdict(list)
    for rec in records:
        grouped[rec["region_id"]].append(rec)
    return grouped


def write_interval_chart(path, records, max_regions: int = 6) -> None:
    """Truth vs prediction with the +/- sigma band over the evaluated timeline."""
    grouped = _by_region(records)
    regions = sorted(grouped)[:max_regions]
    fig, axes = plt.subplots(len(regions), 1, figsize=(10, 2.2 * len(regions)),
                             sharex=True, squeeze=False)
    for ax, rid in zip(axes[:, 0], regions):
        rows = grouped[rid]
        x = np.arange(len(rows))
        truth = np.array([r["h_true"] for r in rows])
        pred = np.array([r["h_pred"] for r in rows])
        sig = np.array([r["sigma"] for r in rows])
        ax.fill_between(x, pred - sig, pred + sig, alpha=0.25, label="interval")
        ax.plot(x, pred, lw=1.2, label="predicted")
        ax.plot(x, truth, lw=1.0, ls="--", label="truth")
        ax.set_ylabel(rid)
    axes[0, 0].legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("test interval")
    fig.suptitle("prediction intervals per region")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_city_maps(path, records, graph) -> None:
    """Citywide scatter maps of mean prediction and mean uncertainty."""
    grouped = _by_region(records)
    mean_pred, mean_sigma = [], []
    for rid in graph.region_ids:
        rows = grouped.get(rid, [])
        mean_pred.append(np.mean([r["h_pred"] for r in rows]) if rows else np.nan)
        mean_sigma.append(np.mean([r["sigma"] for r in rows]) if rows else np.nan)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for ax, color, title in ((ax1, mean_pred, "mean predicted intensity"),
                             (ax2, mean_sigma, "mean predicted uncertainty")):
        sc = ax.scatter(graph.coords[:, 0], graph.coords[:, 1], c=color,
                        s=220, cmap="viridis", edgecolors="k")
        for rid, (x, y) in zip(graph.region_ids, graph.coords):
            ax.annotate(rid, (x, y), fontsize=7, ha="center", va="center")
        ax.set_title(title)
        ax.set_xlabel("x (km)")
        ax.set_ylabel("y (km)")
        fig.colorbar(sc, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_plots(out_dir, report, graph) -> None:
    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    write_interval_chart(os.path.join(plots, "intervals.png"), report.records)
    write_city_maps(os.path.join(plots, "city_maps.png"), report.records, graph)
