"""Figure rendering for the report paths: convergence curves per
training run, per-variant comparison curves for the bench, and the
parameter-sweep grid. All figures are written to files (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["save_convergence_figure", "save_bench_figure", "save_sweep_figure"]

_METRIC_LABELS = {
    "auc": "AUC",
    "f1": "F1",
    "ratp_005": "RATP@0.05",
    "ratp_001": "RATP@0.01",
}


def save_convergence_figure(reports, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = [r.iteration for r in reports]
    for attr, label in _METRIC_LABELS.items():
        ax.plot(xs, [getattr(r, attr) for r in reports], marker="o",
                markersize=3, label=label)
    ax.set_xlabel("training iteration")
    ax.set_ylabel("validation metric")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bench_figure(series: dict, path, metric: str = "ratp_005") -> None:
    """One line per variant of the given validation metric."""
    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    for variant, reports in series.items():
        if not reports:
            continue
        ax.plot([r.iteration for r in reports],
                [getattr(r, metric) for r in reports],
                marker="o", markersize=3, label=variant)
    ax.set_xlabel("training iteration")
    ax.set_ylabel(f"validation {_METRIC_LABELS.get(metric, metric)}")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(rows, hidden_set, dim_set, path) -> None:
    """rows: (hidden, time_dim, ratp_0.05) triples; one line per hidden
    size over the time-embedding dims."""
    by_hidden = {h: {} for h in hidden_set}
    for h, g, v in rows:
        by_hidden[h][g] = v
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for h in hidden_set:
        xs = [g for g in dim_set if g in by_hidden[h]]
        ax.plot(xs, [by_hidden[h][g] for g in xs], marker="s",
                label=f"hidden={h}")
    ax.set_xlabel("time embedding dimension")
    ax.set_ylabel("test RATP@0.05")
    ax.set_xticks(list(dim_set))
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
