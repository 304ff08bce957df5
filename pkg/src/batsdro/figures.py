"""Matplotlib renderings of experiment results, written next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "optimal": ("tab:blue", "optimal"),
    "direct": ("tab:red", "direct"),
    "mu_universal": ("tab:green", r"$\mu$-universal"),
    "safety_margin": ("tab:cyan", "safety margin"),
    "tv": ("tab:brown", "total variation DRO"),
    "wasserstein": ("tab:gray", "Wasserstein DRO"),
}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
}


def plot_mismatch(result, path) -> None:
    """Achieved vs. optimal normalized rate across per-link loss rates."""
    cfg = result.config
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for method in ("optimal", "direct"):
            pts = sorted((r.loss_p, r.theta_over_M) for r in result.records if r.method == method)
            color, label = STYLE[method]
            if method == "direct":
                label = f"designed for p = {cfg.design_p:g}"
            ax.plot([p for p, _ in pts], [v for _, v in pts], marker=".", color=color, label=label)
        ax.axvline(cfg.design_p, color="0.6", lw=0.8, ls=":")
        ax.set_xlabel("packet loss rate per link")
        ax.set_ylabel(r"rate $\tilde\theta / M$")
        ax.set_title(f"hop {cfg.mismatch_hop}, M = {cfg.M}", fontsize=9)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_stability(result, path) -> None:
    """One panel per N: interquartile bands of normalized rate against hop count."""
    cfg = result.config
    Ns = sorted({r.N for r in result.summary})
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(Ns), figsize=(4.2 * len(Ns), 3.2), squeeze=False)
        for ax, N in zip(axes[0], Ns):
            rows = [r for r in result.summary if r.N == N]
            for method in ("optimal",) + tuple(cfg.methods):
                mine = sorted((r for r in rows if r.method == method), key=lambda r: r.hop)
                if not mine:
                    continue
                color, label = STYLE[method]
                hops = [r.hop for r in mine]
                if method == "optimal":
                    ax.plot(hops, [r.median for r in mine], color=color, label=label)
                    continue
                ax.fill_between(hops, [r.q1 for r in mine], [r.q3 for r in mine],
                                color=color, alpha=0.35, lw=0, label=label)
                ax.plot(hops, [r.median for r in mine], color=color, lw=0.6)
            caps = sorted({(r.hop, r.capacity) for r in result.records if r.N == N and r.method == "optimal"})
            ax.plot([h for h, _ in caps], [c / (cfg.M * cfg.eta) for _, c in caps],
                    color="k", ls="--", lw=0.8, label="capacity / (M eta)")
            ax.set_xlabel("number of hops")
            ax.set_ylabel(r"rate $\tilde\theta / M$")
            ax.set_title(f"p = {cfg.loss_p:g}, N = {N}", fontsize=9)
            ax.set_xticks(sorted(cfg.hops))
        axes[0][-1].legend(frameon=False, loc="upper right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
