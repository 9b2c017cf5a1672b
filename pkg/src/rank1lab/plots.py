"""Figures written next to the CSV tables of a report.  Agg backend only;
every function takes plain arrays and an output path."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

# PNG metadata without a timestamp keeps reruns byte-identical
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def growth(est, path, title=None):
    """log Lambda(t) per eps with the upper-half fit lines."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    t = np.asarray(est.t_grid, float)
    for eps in est.eps:
        y = np.asarray(est.log_lambda[eps], float)
        ax.plot(t, y, "o", ms=4, label=f"eps = {eps:g}")
        s, c = est.slopes[eps], est.intercepts[eps]
        if np.isfinite(s):
            tt = np.asarray(est.fit_times, float)
            ax.plot(tt, s * tt + c, "-", lw=1, color=ax.lines[-1].get_color())
    ax.set_xlabel("t")
    ax.set_ylabel("log Lambda(t)")
    ax.set_title(title or f"slope {est.value:.3f}")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def pressure_vs_q(q, sep, sep_u, gur=None, gur_u=None, ref=None, path=None):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.errorbar(q, sep, yerr=sep_u, fmt="o", capsize=3, label="separated sets")
    if gur is not None:
        ax.errorbar(np.asarray(q) + 0.02, gur, yerr=gur_u, fmt="s", capsize=3, label="closed geodesics")
    if ref is not None:
        qq = np.linspace(min(q) - 0.1, max(q) + 0.1, 2)
        ax.plot(qq, ref(qq), "k--", lw=1, label="reference")
    ax.set_xlabel("q")
    ax.set_ylabel("pressure")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def eta_sweep(eta, p, u, p_sing=None, path=None):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.errorbar(eta, p, yerr=u, fmt="o-", capsize=3, label="[B(eta)]")
    if p_sing is not None and np.isfinite(p_sing):
        ax.axhline(p_sing, color="k", ls="--", lw=1, label="Sing")
    ax.set_xscale("log")
    ax.set_xlabel("eta")
    ax.set_ylabel("pressure")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def decay_curves(curves, path):
    """curves: list of (times, discrepancy)."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for t, d in curves:
        d = np.asarray(d, float)
        ax.semilogy(t, np.where(d > 0, d, np.nan), lw=0.8, alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("|tr U(f_t v) - tr U(f_t w)|")
    return _save(fig, path)


def property_table(names, worst, tol, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    w = np.maximum(np.asarray(worst, float), 1e-18)
    ax.bar(range(len(names)), w)
    ax.axhline(tol, color="r", lw=1, ls="--")
    ax.set_yscale("log")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("worst excess")
    return _save(fig, path)


def sing_profiles(times, dists, T, t, delta, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for d in dists:
        ax.semilogy(times, np.maximum(d, 1e-12), lw=0.6, alpha=0.5)
    ax.axvspan(T, t - T, color="0.9", zorder=0)
    ax.axhline(delta, color="r", lw=1, ls="--")
    ax.set_xlabel("tau")
    ax.set_ylabel("d_K(f_tau w, Sing)")
    return _save(fig, path)


def tv_curve(T, tv, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(T, tv, "o-")
    ax.set_xlabel("T")
    ax.set_ylabel("total variation to Liouville")
    return _save(fig, path)


def residuals(res, shadow, eps, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(np.maximum(res, 1e-18), shadow, "o", ms=4)
    ax.axhline(4 * eps, color="r", lw=1, ls="--")
    ax.axvline(1e-8, color="r", lw=1, ls=":")
    ax.set_xlabel("closing residual")
    ax.set_ylabel("d_t(v, w)")
    return _save(fig, path)
