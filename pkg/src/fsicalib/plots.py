"""Figure rendering for study results and solver output.

All figures are written straight to files; the Agg backend keeps this
working on headless machines.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

PARAM_LABELS = ("c1", "rho_s", "mu_f")


def profile_figure(mesh, states, config, path: str | Path) -> Path:
    """Velocity profiles u(r) at the snapshot times, with the steady state."""
    from .solver import steady_state_profile

    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    r = mesh.nodes
    for state in states:
        ax.plot(r, state.u, label=f"t = {state.t:g}")
    fine = np.linspace(config.r0, config.r1, 400)
    ax.plot(fine, steady_state_profile(fine, config), "k--", lw=1,
            label="steady state")
    ax.axvline(config.r_interface, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("r")
    ax.set_ylabel("angular velocity u")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def samples_figure(result, path: str | Path) -> Path:
    """Log-log relative error versus corpus size, one line per parameter."""
    path = Path(path)
    ms = [c["m"] for c in result.cells]
    errs = np.array([c["rel_errors"] for c in result.cells])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for j, label in enumerate(PARAM_LABELS):
        ax.loglog(ms, errs[:, j], "o-", label=label)
    ax.set_xlabel("number of samples M")
    ax.set_ylabel("mean relative error [%]")
    ax.grid(True, which="both", lw=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def probes_figure(result, path: str | Path) -> Path:
    """Grouped bars of relative error per probe grid."""
    path = Path(path)
    labels = [f"{c['grid'][0]}x{c['grid'][1]}" for c in result.cells]
    errs = np.array([c["rel_errors"] for c in result.cells])
    x = np.arange(len(labels))
    width = 0.25
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for j, label in enumerate(PARAM_LABELS):
        ax.bar(x + (j - 1) * width, errs[:, j], width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel("probe grid (n_r x n_t)")
    ax.set_ylabel("mean relative error [%]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def architecture_figure(result, path: str | Path) -> Path:
    """Epochs-to-stop and best validation loss per architecture."""
    path = Path(path)
    labels = [
        "x".join(str(h) for h in c["hidden_layers"]) for c in result.cells
    ]
    epochs = [c["mean_epochs"] for c in result.cells]
    losses = [c["mean_best_val_loss"] for c in result.cells]
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.bar(x, epochs, color="tab:blue")
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("mean epochs to stop")
    ax2.bar(x, losses, color="tab:orange")
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("mean best validation loss")
    ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def baseline_figure(result, path: str | Path) -> Path:
    """CMA-ES versus network relative errors, grouped by grid and target."""
    path = Path(path)
    labels, cma_err, dnn_err = [], [], []
    for cell in result.cells:
        for i, t in enumerate(cell["targets"]):
            labels.append(f"{cell['grid'][0]}x{cell['grid'][1]} #{i}")
            cma_err.append(100 * max(t["cmaes"]["rel_errors"]))
            dnn_err.append(100 * max(t["dnn"]["rel_errors"]))
    x = np.arange(len(labels))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.bar(x - width / 2, cma_err, width, label="cma-es")
    ax.bar(x + width / 2, dnn_err, width, label="network")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("max relative error [%]")
    ax.set_yscale("log")
    ax.set_xlabel("grid / target")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def convergence_figure(history, path: str | Path) -> Path:
    """Best-so-far loss against evaluation count for one optimizer run."""
    path = Path(path)
    evals = [h[0] for h in history]
    best = [h[1] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(evals, best, "-")
    ax.set_xlabel("function evaluations")
    ax.set_ylabel("best misfit")
    ax.grid(True, lw=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def training_figure(report, path: str | Path) -> Path:
    """Train / validation loss curves for one fit."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(report.train_losses) + 1)
    ax.semilogy(epochs, report.train_losses, label="train")
    ax.semilogy(epochs, report.val_losses, label="validation")
    ax.axvline(report.best_epoch, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean squared loss (normalized)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
