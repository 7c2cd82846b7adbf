"""Figures written next to the CSV reports."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .losses import HorizonTable  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_horizons(tables: Mapping[str, HorizonTable], path, title: str | None = None) -> None:
    """MPJPE against prediction horizon, one line per table."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for label, table in tables.items():
            xs = [r.horizon_ms for r in table.rows]
            ys = [r.mpjpe_mm for r in table.rows]
            ax.plot(xs, ys, marker="o", ms=3, lw=1.2, label=f"{label} (avg {table.average:.2f})")
        ax.set_xlabel("horizon (ms)")
        ax.set_ylabel("MPJPE (mm)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_training_log(rows: Sequence, path) -> None:
    """Loss components per epoch on a log scale (zero components are skipped)."""
    epochs = [r.epoch for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for name in ("total", "l1", "l_st", "l_con_s", "l_con_t"):
            ys = [getattr(r, name) for r in rows]
            if any(y > 0 for y in ys):
                ax.plot(epochs, ys, lw=1.2 if name == "total" else 0.9, label=name)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
