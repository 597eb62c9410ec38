"""Training-curve figures rendered from the epoch-log CSV.

One loss panel (train vs validation) plus one validation-F1 panel per
class, written as a single PNG next to the delimited log.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_training_curves(
    classes: Sequence[str], rows: Sequence[dict[str, float]], out_path: str | Path
) -> Path:
    """rows come from training.read_epoch_csv (or EpochLogs flattened the same way)."""
    out_path = Path(out_path)
    epochs = [r["epoch"] for r in rows]
    panels = 1 + len(classes)
    ncols = min(3, panels)
    nrows = math.ceil(panels / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False)
    flat = [ax for row in axes for ax in row]

    ax = flat[0]
    ax.plot(epochs, [r["train_loss"] for r in rows], label="train")
    ax.plot(epochs, [r["val_loss"] for r in rows], label="validation")
    ax.set_title("cross-entropy loss")
    ax.set_xlabel("epoch")
    ax.legend()

    for i, cls in enumerate(classes):
        ax = flat[1 + i]
        ax.plot(epochs, [r[f"f1_{cls}"] for r in rows], color="tab:green")
        ax.set_title(f"validation F1: {cls}")
        ax.set_xlabel("epoch")
        ax.set_ylim(-0.05, 1.05)

    for ax in flat[panels:]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def figure_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".png")
