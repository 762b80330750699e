"""Figure rendering for the report path. All figures are written to files
next to the delimited outputs; nothing is shown interactively."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import GiniReport


def plot_gini_trials(report: GiniReport, path) -> Path:
    """Per-trial test Gini of models A, B, C across resampling trials."""
    ok = report.successes
    trials = [t.trial_index for t in ok]
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(trials, [t.test_gini_a for t in ok], "o-", label="Model A (null)", color="#888888")
    ax.plot(trials, [t.test_gini_b for t in ok], "s-", label="Model B (incumbent)", color="#1f77b4")
    ax.plot(trials, [t.test_gini_c for t in ok], "^-", label="Model C (with house features)", color="#d62728")
    ax.set_xlabel("resampling trial")
    ax.set_ylabel("test Gini coefficient")
    ax.set_xticks(trials)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_gini_summary(report: GiniReport, path) -> Path:
    """Box plot of test Ginis per model over the trials."""
    ok = report.successes
    data = [
        [t.test_gini_a for t in ok],
        [t.test_gini_b for t in ok],
        [t.test_gini_c for t in ok],
    ]
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.boxplot(data, tick_labels=["A (null)", "B (incumbent)", "C (features)"])
    ax.set_ylabel("test Gini coefficient")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
