"""Report figures written next to the CSV tables."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes reproducible
_META = {"Software": None}


def _style(ax, xlabel, ylabel, title):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    ax.grid(True, which="both", alpha=0.3)


def convergence_figure(study, path, title=""):
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    h = study.h_values
    for j in range(study.lambdas.shape[1]):
        err = np.abs(study.lambdas[:, j] - study.reference[j])
        ax.loglog(h, err, "o-", ms=4, label=f"$\\lambda_{{h{j + 1}}}$ ({study.orders[j]:.2f})")
    ref = np.abs(study.lambdas[0, 0] - study.reference[0]) * (h / h[0]) ** 2
    ax.loglog(h, ref, "k--", lw=0.8, label="$h^2$")
    _style(ax, "h", "|λ - λ_h|", title or f"errors vs {study.reference_kind} values")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def sweep_figure(table, path, title=""):
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for i, w in enumerate(table.w_values):
        ax.semilogx(table.n_values, table.lambdas[i, :, 0], "o-", ms=3,
                    label=f"w={w:g} (order {table.orders[i]:.2f})")
    ax.axhline(table.reference, color="k", lw=0.8, ls="--")
    _style(ax, "N", "$\\lambda_{h1}$", title or "lowest eigenvalue vs stability constant")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def spectrum_figure(computed, exact, flagged, path, title=""):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    idx = np.arange(1, len(computed) + 1)
    ax.plot(idx, exact[:len(computed)], "k_", ms=14, label="exact")
    colors = ["tab:red" if c in flagged else "tab:blue" for c in computed]
    ax.scatter(idx, computed, c=colors, s=18, zorder=3, label="computed (red: spurious)")
    _style(ax, "index", "λ", title or "computed spectrum")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
