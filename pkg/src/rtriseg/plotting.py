"""Report figures, rendered off-screen to image files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import final_rows, rate_curve  # noqa: E402


def plot_correct_rate(rows, path, threshold: float = 0.75, xlabel: str = "interaction step") -> None:
    """Correct-segment rate per step: one thin line per scene, the mean in bold."""
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=100)
    scenes = {}
    for r in rows:
        if isinstance(r.step, int):
            scenes.setdefault(r.scene, []).append((r.step, r.correct_rate))
    for name, pts in scenes.items():
        s, c = zip(*sorted(pts))
        ax.plot(s, c, color="0.7", lw=1, marker=".", label=None)
    mean = rate_curve(rows)
    if mean.size:
        ax.plot(np.arange(mean.size), mean, color="C0", lw=2.5, marker="o", label="mean")
        ax.legend(loc="lower right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(f"correct rate (overlap F >= {threshold:g})")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_final_prf(rows, path) -> None:
    """Grouped bars of the final-step overlap and boundary P/R/F averaged over scenes."""
    fin = final_rows(rows)
    vals = np.mean([r.values()[:6] for r in fin], axis=0) if fin else np.zeros(6)
    fig, ax = plt.subplots(figsize=(5, 3.2), dpi=100)
    x = np.arange(3)
    ax.bar(x - 0.18, vals[:3], width=0.36, label="overlap")
    ax.bar(x + 0.18, vals[3:], width=0.36, label="boundary")
    ax.set_xticks(x, ["P", "R", "F"])
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
