"""Matplotlib renderings of the CSV/JSON outputs.

Figures are written next to the data files they are drawn from. PNG metadata
is stripped of the software tag so reruns produce identical bytes.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLASS_NAMES = ("No-motion", "Motion")
COLORS = ("#1f77b4", "#d62728")

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_loss_history(history, path):
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
        ax1.plot(epochs, [h["loss"] for h in history], color="k", lw=1)
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("ELBO loss per example (nats)")
        ax2.plot(epochs, [100 * h["accuracy"] for h in history], color="k", lw=1)
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("training accuracy (%)")
        ax2.set_ylim(0, 100)
        return _save(fig, path)


def plot_sampled_probabilities(records, path, title=None):
    """Sampled class probabilities for the most and least certain examples.

    Each panel shows, per class, the ``T`` sampled probabilities as points
    and their mean as a bar.
    """
    if not records:
        return None
    H = np.array([r["predictive_bits"] for r in records])
    picks = [("most certain", int(np.argmin(H))), ("least certain", int(np.argmax(H)))]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
        for ax, (tag, i) in zip(axes, picks):
            rec = records[i]
            s = np.asarray(rec["samples"])
            jitter = np.linspace(-0.15, 0.15, s.shape[0])
            for c in range(s.shape[1]):
                ax.bar(c, s[:, c].mean(), color=COLORS[c], alpha=0.35, width=0.6)
                ax.plot(c + jitter, s[:, c], ".", ms=3, color=COLORS[c])
            ax.set_xticks(range(s.shape[1]), CLASS_NAMES[: s.shape[1]])
            ax.set_ylim(0, 1)
            ax.set_title(
                f"{tag} (#{i}): true {CLASS_NAMES[rec['true_label']]}, "
                f"pred {CLASS_NAMES[rec['predicted_label']]}\n"
                f"H={rec['predictive_bits']:.2f}  Ha={rec['aleatoric_bits']:.2f}  "
                f"He={rec['epistemic_bits']:.2f} bits",
                fontsize=9,
            )
        axes[0].set_ylabel("sampled probability")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_class_entropy(records, path, title=None):
    """Per-example predictive entropy, grouped by true class."""
    if not records:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        for c in (0, 1):
            vals = [r["predictive_bits"] for r in records if r["true_label"] == c]
            if vals:
                ax.plot(range(len(vals)), vals, ".", ms=4, color=COLORS[c],
                        label=f"{CLASS_NAMES[c]} (mean {np.mean(vals):.2f})")
        ax.set_xlabel("test example (within class)")
        ax.set_ylabel("predictive entropy (bits)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="upper right")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_report(rows, path):
    """Accuracy and per-class mean entropy per test home."""
    ok = [r for r in rows if r[1] is not None]
    if not ok:
        return None
    homes = [r[0] for r in ok]
    x = np.arange(len(ok))
    nan0 = lambda v: 0.0 if v is None or (isinstance(v, float) and math.isnan(v)) else v  # noqa: E731
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
        ax1.bar(x, [r[1] for r in ok], color="0.5")
        ax1.set_xticks(x, homes)
        ax1.set_ylabel("accuracy (%)")
        ax1.set_ylim(0, 100)
        w = 0.38
        for c in (0, 1):
            ax2.bar(x + (c - 0.5) * w, [nan0(r[2 + c]) for r in ok], w,
                    color=COLORS[c], label=CLASS_NAMES[c])
        ax2.set_xticks(x, homes)
        ax2.set_ylabel("mean predictive entropy (bits)")
        ax2.set_ylim(0, 1)
        ax2.legend()
        return _save(fig, path)
