"""Figure rendering for the CLI: coefficient bars and fidelity curves.

Charts are written as SVG with a fixed hash salt and no embedded date,
so rerunning with the same inputs reproduces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_POSITIVE = "#2c6fbb"
_NEGATIVE = "#b0b0b0"
_SELECTED = "#d9541e"

_METHOD_STYLE = {
    "audiolime": ("#2c6fbb", "o"),
    "slime": ("#3aa655", "s"),
    "random_positive": ("#c23b22", "^"),
}


def _new_figure(width: float, height: float):
    plt.rcParams["svg.hashsalt"] = "audiolime"
    return plt.subplots(figsize=(width, height), dpi=100)


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_coefficient_chart(labels, coefficients, selected_ids, path, tag: str = "") -> None:
    """Horizontal bar chart of surrogate coefficients, selected bars highlighted."""
    labels = list(labels)
    coefficients = [float(c) for c in coefficients]
    selected = set(int(i) for i in selected_ids)
    colors = [
        _SELECTED if i in selected else (_POSITIVE if c > 0 else _NEGATIVE)
        for i, c in enumerate(coefficients)
    ]
    height = max(2.0, 0.45 * len(labels) + 1.2)
    fig, ax = _new_figure(7.0, height)
    positions = range(len(labels))
    ax.barh(positions, coefficients, color=colors)
    ax.set_yticks(list(positions))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("surrogate coefficient")
    title = "component weights" + (f" for tag {tag!r}" if tag else "")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def save_fidelity_chart(aggregates, path) -> None:
    """Fidelity vs. k, one line per method."""
    by_method: dict = {}
    for row in aggregates:
        by_method.setdefault(row["method"], []).append((row["k"], row["fidelity"]))
    fig, ax = _new_figure(6.0, 4.0)
    for method in sorted(by_method):
        points = sorted(by_method[method])
        color, marker = _METHOD_STYLE.get(method, ("#555555", "x"))
        ax.plot(
            [k for k, _ in points],
            [f for _, f in points],
            color=color,
            marker=marker,
            label=method,
        )
    ax.set_xlabel("k (components in explanation)")
    ax.set_ylabel("fidelity (same top tag)")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xticks(sorted({row["k"] for row in aggregates}))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
