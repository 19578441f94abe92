"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import roc_curve  # noqa: E402

# no timestamps or version strings, so reruns give byte-identical files
_SAVE = dict(dpi=100, metadata={"Software": None})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def roc_figure(path, maps, truths, names, title="ROC per image"):
    """Overlay the ROC curve of every scorable image; legend carries per-image Az."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    for prob, truth, name in zip(maps, truths, names):
        truth = np.asarray(truth, dtype=bool)
        if truth.all() or not truth.any():
            continue
        roc = roc_curve(prob, truth)
        ax.plot(roc.fpr, roc.tpr, lw=1.0, label=name)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    if len(names) <= 12:
        ax.legend(fontsize=6, loc="lower right")
    _finish(fig, path)


def az_figure(path, rows, title="Az per image"):
    scored = [r for r in rows if r.az is not None]
    fig, ax = plt.subplots(figsize=(6.0, 3.0))
    ax.bar(np.arange(len(scored)), [r.az for r in scored], color="tab:green")
    if scored:
        mean = float(np.mean([r.az for r in scored]))
        ax.axhline(mean, color="k", lw=0.8, label=f"mean {mean:.3f}")
        ax.legend(fontsize=7, loc="lower right")
    ax.set_xticks(np.arange(len(scored)))
    ax.set_xticklabels([r.name for r in scored], rotation=90, fontsize=6)
    ax.set_ylim(min([0.5] + [r.az for r in scored]), 1.0)
    ax.set_ylabel("Az")
    ax.set_title(title)
    _finish(fig, path)


def trace_figure(path, result, title="best score per iteration"):
    it = [t[0] for t in result.trace]
    score = [t[1] for t in result.trace]
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    ax.step(it, score, where="post")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean Az")
    ax.set_title(title)
    _finish(fig, path)
