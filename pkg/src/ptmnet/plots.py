"""Render evolution history curves to an image file."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_fitness_figure(history, path) -> None:
    """Plot best and mean fitness per generation and save the figure."""
    gens = [h.generation for h in history]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(gens, [h.best for h in history], label="best", linewidth=1.8)
    ax.plot(gens, [h.mean for h in history], label="mean", linewidth=1.2)
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
