"""Matplotlib figures summarizing reconstruction experiments.

Figures are rendered headlessly to files and are deterministic for
identical inputs, so they can sit next to the metrics files in
byte-compared output directories.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ARM_COLORS = {
    "sap_plain": "#1f77b4",
    "sap_superiorized": "#ff7f0e",
    "bip_plain": "#2ca02c",
    "bip_superiorized": "#d62728",
}


def _panel(ax, values, window, title):
    low, high = window
    ax.imshow(values, cmap="gray", vmin=low, vmax=high, interpolation="nearest")
    ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])


def save_comparison(path, phantom, arms, window):
    """Phantom and reconstructions side by side, all in the same window.

    ``arms`` maps arm names to ``(image values, objective value)`` pairs;
    arms without an output are skipped.
    """
    names = [name for name, payload in arms.items() if payload is not None]
    n = 1 + len(names)
    cols = min(n, 3)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.4 * rows))
    axes = np.atleast_1d(axes).ravel()
    _panel(axes[0], phantom, window, "phantom")
    for ax, name in zip(axes[1:], names):
        values, phi = arms[name]
        _panel(ax, values, window, f"{name.replace('_', ' ')}\nobjective {phi:.2f}")
    for ax in axes[n:]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_convergence(path, traces):
    """Proximity and objective traces per arm, proximity on a log axis.

    ``traces`` maps arm names to ``(proximities, objective_values)``;
    the objective panel skips arms that carried no objective trace.
    """
    fig, (ax_pr, ax_phi) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    for name, (prox, phis) in traces.items():
        color = ARM_COLORS.get(name)
        ax_pr.semilogy(np.arange(len(prox)), prox, label=name.replace("_", " "),
                       color=color)
        if phis is not None:
            ax_phi.plot(np.arange(len(phis)), phis, label=name.replace("_", " "),
                        color=color)
    ax_pr.set_xlabel("iteration")
    ax_pr.set_ylabel("proximity")
    ax_pr.legend(fontsize=8)
    ax_phi.set_xlabel("iteration")
    ax_phi.set_ylabel("objective")
    if ax_phi.has_data():
        ax_phi.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
