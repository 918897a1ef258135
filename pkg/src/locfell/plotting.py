"""Matplotlib rendering of the figure descriptions produced by experiments."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render", "plot_paths"]


def render(fig: dict, target) -> Path:
    """Draw a ``bar`` or ``line`` figure description to ``target`` (PNG)."""
    target = Path(target)
    f, ax = plt.subplots(figsize=(8, 4.5))
    if fig["kind"] == "bar":
        labels = fig["labels"]
        ax.bar(range(len(labels)), fig["values"], yerr=fig.get("errors"), color="tab:blue",
               capsize=3)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60 if len(labels) > 3 else 0, ha="right", fontsize=7)
    else:
        for s in fig["series"]:
            ax.errorbar(s["x"], s["y"], yerr=s.get("yerr"), marker="o", capsize=3,
                        label=s["label"])
        if fig.get("xticks"):
            ax.set_xticks(range(len(fig["xticks"])))
            ax.set_xticklabels(fig["xticks"])
        if len(fig["series"]) > 1:
            ax.legend(fontsize=7)
    for y in fig.get("hlines", []):
        ax.axhline(y, color="grey", linestyle="--", linewidth=0.8)
    if fig.get("logx"):
        ax.set_xscale("log")
    if fig.get("logy"):
        ax.set_yscale("log")
    ax.set_title(fig.get("title", ""), fontsize=10)
    ax.set_xlabel(fig.get("xlabel", ""))
    ax.set_ylabel(fig.get("ylabel", ""))
    f.tight_layout()
    f.savefig(target, dpi=100, metadata={"Software": None})
    plt.close(f)
    return target


def plot_paths(paths, target, horizon: float | None = None, max_paths: int = 20,
               title: str = "") -> Path:
    """Step plot of the first ``max_paths`` paths; explosions marked with a cross."""
    target = Path(target)
    f, ax = plt.subplots(figsize=(8, 4.5))
    for p in list(paths)[:max_paths]:
        if len(p) == 0:
            continue
        end = horizon if horizon is not None else min(p.xi, p.times[-1] * 1.1 or 1.0)
        end = min(end, p.xi)
        keep = p.times <= end
        t = list(p.times[keep]) + [end]
        v = list(p.values[keep]) + [p.values[keep][-1]]
        ax.step(t, v, where="post", linewidth=0.8)
        if p.xi <= (horizon or p.xi):
            ax.plot([p.xi], [v[-1]], "kx")
    ax.set_xlabel("t")
    ax.set_ylabel("X_t")
    ax.set_title(title, fontsize=10)
    f.tight_layout()
    f.savefig(target, dpi=100, metadata={"Software": None})
    plt.close(f)
    return target
