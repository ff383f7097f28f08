"""Figures for ablation sweeps, written straight to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_sweep(reports: Sequence, path: str | Path) -> Path:
    """mAP, Top1 and 5xRecall@Top5 against vocabulary size for VLAD and locVLAD queries."""
    ks = [r.k for r in reports]
    panels = [
        ("mAP", lambda m: m.map_score),
        ("Top1", lambda m: m.top1),
        ("5xRecall@Top5", lambda m: m.recall5x),
    ]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(9, 2.8), constrained_layout=True)
        for ax, (label, get) in zip(axes, panels):
            ax.plot(ks, [get(r.vlad) for r in reports], "o-", label="VLAD")
            ax.plot(ks, [get(r.locvlad) for r in reports], "s-", label="locVLAD")
            if all(r.locvlad_both is not None for r in reports):
                ax.plot(ks, [get(r.locvlad_both) for r in reports], "^--", label="locVLAD (db too)", alpha=0.7)
            ax.set_xscale("log", base=2)
            ax.set_xticks(ks, [str(k) for k in ks])
            ax.set_xlabel("vocabulary size k")
            ax.set_ylabel(label)
        axes[0].legend(frameon=False)
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_vocab_time(reports: Sequence, path: str | Path) -> Path:
    ks = [r.k for r in reports]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.5, 2.6), constrained_layout=True)
        ax.bar([str(k) for k in ks], [r.vocab_seconds for r in reports], color="0.4")
        ax.set_xlabel("vocabulary size k")
        ax.set_ylabel("clustering time [s]")
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path
