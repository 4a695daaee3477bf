"""Report rendering: a standalone hand-emitted ROC SVG plus matplotlib
figures written next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SIZE = 400
_MARGIN = 50
_SPAN = _SIZE - 2 * _MARGIN

# stable PNG bytes across runs: drop the version-bearing Software chunk
_PNG_META = {"metadata": {"Software": None}}


def render_roc_svg(curve) -> str:
    """Minimal standalone SVG: unit axes, the ROC polyline, AUC annotation."""

    def sx(fpr):
        return _MARGIN + fpr * _SPAN

    def sy(tpr):
        return _SIZE - _MARGIN - tpr * _SPAN

    points = " ".join(f"{sx(f):.2f},{sy(t):.2f}" for _, f, t in curve.points)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_SPAN}" height="{_SPAN}" '
        'fill="white" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_SIZE - _MARGIN}" x2="{_SIZE - _MARGIN}" '
        f'y2="{_MARGIN}" stroke="#bbbbbb" stroke-dasharray="6,4"/>',
        f'<polyline fill="none" stroke="#c02020" stroke-width="2" points="{points}"/>',
        f'<text x="{_MARGIN}" y="{_SIZE - _MARGIN + 32}" font-size="14">'
        "false positive rate</text>",
        f'<text x="14" y="{_MARGIN}" font-size="14" '
        f'transform="rotate(-90 14 {_MARGIN})" text-anchor="end">true positive rate</text>',
        f'<text x="{_MARGIN + 10}" y="{_MARGIN + 22}" font-size="16">'
        f"AUC = {curve.auc:.3f}</text>",
        f'<text x="{_MARGIN - 12}" y="{_SIZE - _MARGIN + 14}" font-size="12">0</text>',
        f'<text x="{_SIZE - _MARGIN}" y="{_SIZE - _MARGIN + 14}" font-size="12">1</text>',
        f'<text x="{_MARGIN - 14}" y="{_MARGIN + 4}" font-size="12">1</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def write_roc_svg(curve, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(render_roc_svg(curve))


def save_roc_png(curve, path, fold_curves=None) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    if fold_curves:
        for i, fold_curve in enumerate(fold_curves):
            ax.plot(
                [p[1] for p in fold_curve.points],
                [p[2] for p in fold_curve.points],
                lw=1,
                alpha=0.5,
                label=f"fold {i} (AUC {fold_curve.auc:.3f})",
            )
    ax.plot(
        [p[1] for p in curve.points],
        [p[2] for p in curve.points],
        "r-",
        lw=2,
        label=f"pooled (AUC {curve.auc:.3f})",
    )
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def save_fold_metrics_png(fold_rows, path) -> None:
    names = ("accuracy", "sensitivity", "specificity", "auc")
    folds = [row["fold"] for row in fold_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names:
        ax.plot(folds, [row[name] for row in fold_rows], marker="o", label=name)
    ax.set_xticks(folds)
    ax.set_xlabel("fold")
    ax.set_ylabel("value")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def save_history_png(history, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [rep.epoch for rep in history]
    survivor = [rep.climbers[rep.survivor_id].val_accuracy for rep in history]
    best = [rep.best_accuracy for rep in history]
    for rep in history:
        accs = [c.val_accuracy for c in rep.climbers]
        ax.plot([rep.epoch] * len(accs), accs, "k.", ms=3, alpha=0.4)
    ax.plot(epochs, survivor, "b-o", ms=3, label="survivor")
    ax.plot(epochs, best, "r-", lw=1.5, label="best so far")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)
