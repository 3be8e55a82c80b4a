"""Static SVG charts of a run directory."""
from __future__ import annotations

import logging
import os
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from app.core.measurement import CHANNEL_NAMES  # noqa: E402
from app.services.exceptions import RepoError  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt and no date so identical runs give identical files.
matplotlib.rcParams["svg.hashsalt"] = "resilient-pruning-observer"
_SVG_METADATA = {"Date": None}

STRATEGY_COLORS = {"ukf-only": "tab:red", "ukf-with-oracle": "tab:orange", "pruning-ukf": "tab:green"}


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    try:
        os.makedirs(out_dir, exist_ok=True)
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    except Exception as e:
        raise RepoError(f"Failed to write plot {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def _shade_attack(ax, frame: pd.DataFrame) -> None:
    attacked = frame[[f"e_{c}" for c in CHANNEL_NAMES]].to_numpy().any(axis=1)
    if attacked.any():
        t = frame["t"].to_numpy()
        ax.axvspan(t[attacked][0], t[attacked][-1], alpha=0.12, color="red", label="attack")


def plot_path(frame: pd.DataFrame, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(frame["px_d"], frame["py_d"], "k--", linewidth=1.2, label="reference")
    ax.plot(frame["px"], frame["py"], "b-", linewidth=1.5, label="true")
    ax.plot(frame["px_hat"], frame["py_hat"], "g:", linewidth=1.2, label="estimated")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    return _save(fig, out_dir, "path.svg")


def plot_velocity(frame: pd.DataFrame, out_dir: str) -> str:
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, name, unit in ((axes[0], "v", "m/s"), (axes[1], "omega", "rad/s")):
        ax.plot(frame["t"], frame[name], "b-", linewidth=1.2, label="true")
        ax.plot(frame["t"], frame[f"{name}_hat"], "g-", linewidth=1.0, label="estimate")
        _shade_attack(ax, frame)
        ax.set_ylabel(f"{name} [{unit}]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="upper right")
    axes[1].set_xlabel("Time [s]")
    return _save(fig, out_dir, "velocity.svg")


def plot_monitor(frame: pd.DataFrame, out_dir: str) -> str:
    """psi1 on top; per-channel attack, mask and psi2 as a raster below."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True, gridspec_kw={"height_ratios": [1, 3]})
    t = frame["t"].to_numpy()
    axes[0].step(t, frame["psi1"], where="post", color="k")
    axes[0].set_ylabel("psi1")
    axes[0].set_ylim(-0.1, 1.1)
    axes[0].grid(True, alpha=0.3)

    ax = axes[1]
    for i, c in enumerate(CHANNEL_NAMES):
        base = i * 1.5
        ax.fill_between(t, base, base + frame[f"mask_{c}"].to_numpy() * 0.4, step="post", color="tab:green", alpha=0.5)
        ax.fill_between(t, base + 0.45, base + 0.45 + (frame[f"e_{c}"].to_numpy() != 0) * 0.4,
                        step="post", color="tab:red", alpha=0.5)
        ax.fill_between(t, base + 0.9, base + 0.9 + frame[f"psi2_{c}"].to_numpy() * 0.4,
                        step="post", color="tab:blue", alpha=0.5)
    ax.set_yticks([i * 1.5 + 0.65 for i in range(len(CHANNEL_NAMES))])
    ax.set_yticklabels(CHANNEL_NAMES)
    ax.set_xlabel("Time [s]")
    ax.set_title("mask (green), attacked (red), psi2 (blue)", fontsize=9)
    return _save(fig, out_dir, "monitor.svg")


def plot_sweep(frames: Dict[str, pd.DataFrame], out_dir: str) -> str:
    fig, axes = plt.subplots(1, 2, figsize=(12, 5))
    first = next(iter(frames.values()))
    axes[0].plot(first["px_d"], first["py_d"], "k--", linewidth=1.2, label="reference")
    for strategy, frame in frames.items():
        color = STRATEGY_COLORS.get(strategy)
        axes[0].plot(frame["px"], frame["py"], color=color, linewidth=1.3, label=strategy)
        axes[1].plot(frame["t"], frame["pos_err"], color=color, linewidth=1.3, label=strategy)
    axes[0].set_aspect("equal", adjustable="datalim")
    axes[0].set_xlabel("x [m]")
    axes[0].set_ylabel("y [m]")
    axes[1].set_xlabel("Time [s]")
    axes[1].set_ylabel("position error [m]")
    for ax in axes:
        ax.legend(loc="upper left", fontsize=8)
        ax.grid(True, alpha=0.3)
    return _save(fig, out_dir, "sweep.svg")


def plot_exclusion(per_eta: pd.DataFrame, out_dir: str) -> str:
    """Retained attacked channels per eta from a pruning Monte Carlo."""
    fig, ax = plt.subplots(figsize=(6, 4))
    etas = per_eta["eta"].to_numpy()
    x = np.arange(len(etas))
    ax.bar(x - 0.2, per_eta["mean_retained_attacked"], width=0.4, label="mean retained")
    ax.bar(x + 0.2, per_eta["max_retained_attacked"], width=0.4, label="max retained")
    ax.set_xticks(x)
    ax.set_xticklabels([f"{e:g}" for e in etas])
    ax.set_xlabel("eta")
    ax.set_ylabel("attacked channels kept")
    ax.legend()
    ax.grid(True, alpha=0.3, axis="y")
    return _save(fig, out_dir, "exclusion.svg")


def render_run(frame: pd.DataFrame, out_dir: str) -> List[str]:
    paths = [plot_path(frame, out_dir), plot_velocity(frame, out_dir), plot_monitor(frame, out_dir)]
    logger.info("plots written", extra={"out_dir": out_dir, "count": len(paths)})
    return paths
