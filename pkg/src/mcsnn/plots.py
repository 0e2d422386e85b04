"""Figure rendering for the report paths; every figure goes straight to file."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if len(values) <= window:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def plot_training_curves(metrics_rows: list[dict], history_rows: list[dict], path) -> None:
    """Training loss (smoothed over steps) and periodic test metrics."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    if metrics_rows:
        steps = np.array([row["step"] for row in metrics_rows])
        loss = np.array([np.mean(row["visible_loss"]) for row in metrics_rows])
        window = max(1, min(200, len(loss) // 20))
        axes[0].plot(steps[window - 1:], _smooth(loss, window), lw=1.0)
        axes[0].set_xlabel("training step")
        axes[0].set_ylabel("visible loss (nats/step)")
        axes[0].set_title("training loss")
    if history_rows:
        seen = [row["examples_seen"] for row in history_rows]
        ax = axes[1]
        ax.plot(seen, [row["accuracy"] for row in history_rows], "o-", label="accuracy")
        ax.plot(seen, [row["ece"] for row in history_rows], "s-", label="ECE")
        ax.set_ylim(-0.02, 1.02)
        ax2 = ax.twinx()
        ax2.plot(seen, [row["mean_log_likelihood"] for row in history_rows],
                 "^--", color="tab:green", label="log-likelihood")
        ax2.set_ylabel("mean log-likelihood (nats)")
        ax.set_xlabel("training examples")
        ax.set_title("test metrics")
        handles, labels = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(handles + h2, labels + l2, fontsize=8, loc="center right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_reliability(report, path) -> None:
    """Reliability diagram plus the per-bin example counts."""
    M = report.num_bins
    centers = (np.arange(M) + 0.5) / M
    width = 1.0 / M
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    occupied = report.counts > 0
    axes[0].bar(centers[occupied], report.accuracy[occupied], width=width * 0.9,
                color="tab:blue", edgecolor="black", label="accuracy")
    axes[0].plot([0, 1], [0, 1], "k--", lw=1, label="perfect calibration")
    axes[0].plot(centers[occupied], report.mean_confidence[occupied], "r.",
                 markersize=8, label="mean confidence")
    axes[0].set_xlabel("confidence bin")
    axes[0].set_ylabel("accuracy")
    axes[0].set_xlim(0, 1)
    axes[0].set_ylim(0, 1)
    axes[0].legend(fontsize=8)
    axes[0].set_title(f"reliability (ECE = {report.ece:.4f})")
    axes[1].bar(centers, report.counts, width=width * 0.9, color="tab:gray",
                edgecolor="black")
    axes[1].set_xlabel("confidence bin")
    axes[1].set_ylabel("examples")
    axes[1].set_xlim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(rows: list[dict], path) -> None:
    """Test metrics and per-step communication load against compartment count."""
    ks = [row["k"] for row in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    ax = axes[0]
    ax.plot(ks, [row["mean_log_likelihood"] for row in rows], "o-", label="log-likelihood")
    ax.set_xlabel("compartments K")
    ax.set_ylabel("mean log-likelihood (nats)")
    ax2 = ax.twinx()
    ax2.plot(ks, [row["accuracy"] for row in rows], "s--", color="tab:orange",
             label="accuracy")
    ax2.plot(ks, [row["ece"] for row in rows], "^--", color="tab:red", label="ECE")
    ax2.set_ylim(-0.02, 1.02)
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, fontsize=8)
    ax.set_title("test performance vs K")
    ax = axes[1]
    ax.plot(ks, [row["broadcast_per_step"] for row in rows], "o-",
            label="broadcast reals/step")
    ax.plot(ks, [row["unicast_per_step"] for row in rows], "s-",
            label="unicast reals/step")
    ax.plot(ks, [row["hidden_spikes_per_step"] for row in rows], "^--",
            label="hidden spikes/step")
    ax.set_xlabel("compartments K")
    ax.set_ylabel("per training step")
    ax.legend(fontsize=8)
    ax.set_title("communication and activity vs K")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
