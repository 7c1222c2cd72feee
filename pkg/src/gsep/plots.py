"""Report figures written next to the JSON/TSV outputs.

Only the Agg backend is used; nothing here opens a window.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

STRATA_COLORS = {"F&M": "#4c72b0", "F&F": "#dd8452", "M&M": "#55a868", "average": "#333333"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def _db(mag: np.ndarray, floor_db: float = -80.0) -> np.ndarray:
    mag = np.abs(mag)
    ref = max(float(mag.max()), 1e-12)
    return np.maximum(20 * np.log10(np.maximum(mag, 1e-12) / ref), floor_db)


def spectrogram_panels(
    panels: Sequence[tuple[str, np.ndarray]],
    path,
    sample_rate: int = 8000,
    hop: int = 128,
    anchor_s: float | None = None,
) -> Path:
    """Stacked log-magnitude spectrograms, one panel per ``(title, frames x bins)`` entry."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(panels), 1, figsize=(6.0, 1.6 * len(panels)), sharex=True, squeeze=False)
        for ax, (title, mag) in zip(axes[:, 0], panels):
            n_frames, n_bins = mag.shape
            extent = (0, n_frames * hop / sample_rate, 0, sample_rate / 2000)
            ax.imshow(_db(mag).T, origin="lower", aspect="auto", extent=extent, cmap="magma")
            ax.set_title(title, loc="left")
            ax.set_ylabel("kHz")
            if anchor_s is not None:
                ax.axvline(anchor_s, color="white", lw=0.8, ls="--")
        axes[-1, 0].set_xlabel("time (s)")
        fig.tight_layout()
        return _save(fig, path)


def loss_curves(history: Sequence[dict], path) -> Path:
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        ax.plot(epochs, [h["train_mse"] for h in history], marker="o", ms=3, label="train")
        ax.plot(epochs, [h["valid_mse"] for h in history], marker="s", ms=3, label="valid")
        best = min(history, key=lambda h: h["valid_mse"])
        ax.axvline(best["epoch"], color="grey", lw=0.8, ls=":")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def strata_bars(aggregates: dict, path, title: str = "") -> Path:
    """Unprocessed vs processed mean SI-SDR for each gender pairing."""
    names = [n for n in ("F&M", "F&F", "M&M", "average") if n in aggregates]
    x = np.arange(len(names))
    unproc = [aggregates[n]["si_sdr_unprocessed_db"] for n in names]
    proc = [aggregates[n]["si_sdr_db"] for n in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        ax.bar(x - 0.2, unproc, 0.4, label="unprocessed", color="#bbbbbb")
        ax.bar(x + 0.2, proc, 0.4, label="separated", color=[STRATA_COLORS[n] for n in names])
        ax.set_xticks(x, names)
        ax.set_ylabel("SI-SDR (dB)")
        ax.axhline(0, color="black", lw=0.5)
        if title:
            ax.set_title(title, loc="left")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def sweep_curve(table: Sequence[dict], path) -> Path:
    lengths = [r["anchor_len_s"] for r in table]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        for name, color in STRATA_COLORS.items():
            vals = [r.get(name) for r in table]
            if any(v is None for v in vals):
                continue
            ax.plot(lengths, vals, marker="o", ms=3, color=color, label=name,
                    lw=1.6 if name == "average" else 1.0)
        ax.set_xlabel("anchor length (s)")
        ax.set_ylabel("SI-SDR (dB)")
        ax.legend(frameon=False, ncol=2)
        fig.tight_layout()
        return _save(fig, path)
