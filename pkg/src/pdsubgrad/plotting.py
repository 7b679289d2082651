"""Matplotlib renderings of the experiment CSVs (Agg backend, files only)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _series(rows, key, where):
    sel = [r for r in rows if all(r.get(k) == v for k, v in where.items())]
    t = np.array([r["t"] for r in sel], dtype=float)
    y = np.array([np.nan if r.get(key) is None else r[key] for r in sel], dtype=float)
    return t, y


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fig1(rows, path):
    """Aggregate measure with its bound, plus each component, per schedule."""
    names = list(dict.fromkeys(r["schedule"] for r in rows))
    panels = (("aggregate", "aggregate and bound"), ("primal_gap", "primal gap"),
              ("dual_gap", "dual gap"), ("dist2", "(mu/2) ||x - x_opt||^2"))
    fig, axes = plt.subplots(2, 2, figsize=(10, 7.5))
    for ax, (key, title) in zip(axes.flat, panels):
        for i, name in enumerate(names):
            t, y = _series(rows, key, {"schedule": name})
            line, = ax.loglog(t, np.abs(y), label=name, lw=1.2)
            if key == "aggregate":
                t, b = _series(rows, "thm2_rhs", {"schedule": name})
                ax.loglog(t, b, ls="--", color=line.get_color(), lw=1.0)
        ax.set_title(title)
        ax.set_xlabel("t")
    axes.flat[0].legend(fontsize=8)
    _save(fig, path)


def plot_divergence(rows, path):
    """Certificates along the uncapped (top) and capped (bottom) runs for each sigma."""
    keys = ("pbar", "delta", "p", "d", "dist2")
    sigmas = list(dict.fromkeys(r["sigma"] for r in rows))
    fig, axes = plt.subplots(2, len(keys), figsize=(3.2 * len(keys), 6.5), sharex=True)
    for row, kind in enumerate(("linear", "capped")):
        for col, key in enumerate(keys):
            ax = axes[row, col]
            for s in sigmas:
                t, y = _series(rows, key, {"sigma": s, "schedule": kind})
                ok = np.isfinite(y) & (np.abs(y) > 0)
                ax.loglog(t[ok] + 1, np.abs(y[ok]), label=f"sigma={s:g}", lw=1.0)
            ax.set_title(f"{key} ({kind})", fontsize=9)
    axes[0, 0].legend(fontsize=7)
    _save(fig, path)


def plot_toy(rows, path):
    t = np.array([r["t"] for r in rows])
    nrm = np.array([r["norm"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(t, np.maximum(nrm, 1e-300))
    ax.set_xlabel("k")
    ax.set_ylabel("||x_k||")
    _save(fig, path)


def plot_run(records, path):
    keys = [k for k in ("p", "pbar", "delta", "d", "gap") if any(r.get(k) is not None for r in records)]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in keys:
        t, y = _series(records, key, {})
        ok = np.isfinite(y) & (np.abs(y) > 0)
        ax.loglog(t[ok] + 1, np.abs(y[ok]), label=key)
    ax.set_xlabel("t + 1")
    if keys:
        ax.legend()
    _save(fig, path)
