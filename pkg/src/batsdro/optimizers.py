"""Degree-distribution optimizers.

All five formulations share the same decision layout: degree masses first,
then the rate, then any formulation-specific dual variables. The rate has
lower bound zero everywhere, which keeps ``rate = 0`` with any degree
distribution feasible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .calibration import AmbiguitySpec
from .core import CodeParams, DegreeDistribution, RankDistribution, coefficient_stack
from .lp import EQ, GE, LinearProgram, LpBuilder, LpStatus, SolverError, solve

log = logging.getLogger(__name__)

METHODS = ("direct", "wasserstein", "tv", "mu_universal", "safety_margin")


@dataclass(frozen=True)
class OptimizationResult:
    theta: float
    psi: DegreeDistribution
    method: str
    params: CodeParams
    ambiguity: AmbiguitySpec | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def normalized(self) -> float:
        return self.theta / self.params.M

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "params": self.params.to_dict(),
            "theta": self.theta,
            "theta_over_M": self.normalized,
            "psi": self.psi.mass.tolist(),
        }
        if self.ambiguity is not None:
            out["ambiguity"] = self.ambiguity.to_dict()
        if self.diagnostics:
            out["diagnostics"] = {k: v for k, v in self.diagnostics.items() if _jsonable(v)}
        return out


def _jsonable(v) -> bool:
    return isinstance(v, (int, float, str, bool, list)) or v is None


class _DegreeLp:
    """Shared skeleton: degree simplex plus a rate to maximize (nonnegative by default)."""

    def __init__(self, params: CodeParams, theta_lower: float = 0.0):
        self.params = params
        self.b = LpBuilder()
        self.psi = self.b.add_variables("psi", params.D, lower=0.0)
        self.theta = self.b.add_variables("theta", 1, lower=theta_lower).start
        self.b.set_objective(self.theta, 1.0)
        self.log_terms = np.log1p(-params.grid)

    def finish(self):
        n = self.b.n_vars
        simplex = np.zeros((1, n))
        simplex[0, self.psi] = 1.0
        self.b.add_rows(simplex, EQ, 1.0)
        return self.b.build()


def _solve_degree_lp(lp: LinearProgram, psi: slice, theta_index: int, method: str):
    sol = solve(lp)
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverError(f"{method}: LP returned {sol.status.value} ({sol.message})")
    theta = max(float(sol.x[theta_index]), 0.0)
    return theta, DegreeDistribution.from_solver(sol.x[psi]), sol


def _check_h(h: RankDistribution, params: CodeParams) -> None:
    if h.M != params.M:
        raise ValueError(f"rank distribution has M={h.M}, params have M={params.M}")


def _scenario_lp(dists: list[RankDistribution], params: CodeParams):
    """Maximize the rate guaranteed simultaneously for every listed distribution."""
    stack = coefficient_stack(params)
    skel = _DegreeLp(params)
    n = skel.b.n_vars
    for h in dists:
        coef = np.einsum("r,xrd->xd", h.mass, stack)
        rows = np.zeros((params.grid.size, n))
        rows[:, skel.psi] = coef
        rows[:, skel.theta] = skel.log_terms
        skel.b.add_rows(rows, GE, 0.0)
    return skel, skel.finish()


def direct_lp(h_hat: RankDistribution, params: CodeParams) -> OptimizationResult:
    """Optimize the degree distribution treating ``h_hat`` as the truth."""
    _check_h(h_hat, params)
    skel, lp = _scenario_lp([h_hat], params)
    zero = np.zeros(lp.n_vars)
    zero[skel.psi.start] = 1.0
    assert lp.is_feasible(zero), "rate 0 must always be feasible"
    theta, psi, sol = _solve_degree_lp(lp, skel.psi, skel.theta, "direct")
    return OptimizationResult(theta, psi, "direct", params, diagnostics={"rows": lp.n_rows})


def build_wasserstein_lp(h_hat: RankDistribution, rho: float, params: CodeParams):
    """Dual reformulation of the worst case over a 1-Wasserstein ball.

    Per grid point ``x``: a multiplier ``lam_x >= 0`` and epigraph variables
    ``s_{x,r}`` with

        theta ln(1-x) - rho lam_x - sum_r h_r s_{x,r} >= 0
        s_{x,r} >= -coef_x[r'] @ psi - lam_x |r' - r|     for all r, r'.
    """
    M, X = params.M, params.grid.size
    stack = coefficient_stack(params)
    skel = _DegreeLp(params)
    b = skel.b
    lam = b.add_variables("lambda", X, lower=0.0)
    s = b.add_variables("s", X * (M + 1), lower=-np.inf)
    n = b.n_vars

    rate = np.zeros((X, n))
    rate[:, skel.theta] = skel.log_terms
    rate[np.arange(X), lam.start + np.arange(X)] = -rho
    for i in range(X):
        rate[i, s.start + i * (M + 1): s.start + (i + 1) * (M + 1)] = -h_hat.mass
    b.add_rows(rate, GE, 0.0)

    ranks = np.arange(M + 1)
    dist = np.abs(ranks[:, None] - ranks[None, :])  # dist[r, r']
    for i in range(X):
        # row (r, r'): s_{x,r} + coef[r'] @ psi + lam_x |r' - r| >= 0
        n_rows = (M + 1) ** 2
        rr, rp = np.divmod(np.arange(n_rows), M + 1)
        block = np.zeros((n_rows, n))
        block[:, skel.psi] = stack[i][rp]
        block[:, lam.start + i] = dist[rr, rp]
        block[np.arange(n_rows), s.start + i * (M + 1) + rr] = 1.0
        b.add_rows(block, GE, 0.0)
    return skel, lam, s, skel.finish()


def wasserstein_dro(h_hat: RankDistribution, rho: float, params: CodeParams,
                    ambiguity: AmbiguitySpec | None = None) -> OptimizationResult:
    """Maximize the worst-case rate over ``{h : W1(h, h_hat) <= rho}``."""
    _check_h(h_hat, params)
    if rho < 0:
        raise ValueError("Wasserstein radius must be nonnegative")
    skel, lam, _, lp = build_wasserstein_lp(h_hat, rho, params)
    theta, psi, sol = _solve_degree_lp(lp, skel.psi, skel.theta, "wasserstein")
    diag = {"rho": float(rho), "rows": lp.n_rows, "lambda": sol.x[lam].tolist()}
    return OptimizationResult(theta, psi, "wasserstein", params, ambiguity, diag)


def build_tv_lp(h_hat: RankDistribution, rho: float, params: CodeParams):
    """Dual reformulation of the worst case over a total-variation ball.

    Per grid point ``x``: free ``alpha_x`` and ``beta_x`` with

        theta ln(1-x) - 2 rho beta_x + h_hat @ coef_x @ psi >= 0
        beta_x >= |coef_x[r] @ psi + alpha_x|             for all r.

    This bound ignores nonnegativity of the worst-case distribution, so for
    large radii it can fall below zero for every psi. theta is left free
    here and the caller clamps the certified rate at zero.
    """
    M, X = params.M, params.grid.size
    stack = coefficient_stack(params)
    skel = _DegreeLp(params, theta_lower=-np.inf)
    b = skel.b
    alpha = b.add_variables("alpha", X, lower=-np.inf)
    beta = b.add_variables("beta", X, lower=-np.inf)
    n = b.n_vars

    rate = np.zeros((X, n))
    rate[:, skel.psi] = np.einsum("r,xrd->xd", h_hat.mass, stack)
    rate[:, skel.theta] = skel.log_terms
    rate[np.arange(X), beta.start + np.arange(X)] = -2.0 * rho
    b.add_rows(rate, GE, 0.0)

    for i in range(X):
        inner = np.zeros((M + 1, n))
        inner[:, skel.psi] = stack[i]
        inner[:, alpha.start + i] = 1.0
        bound = np.zeros((M + 1, n))
        bound[:, beta.start + i] = 1.0
        b.add_abs_le(inner, bound)
    return skel, alpha, beta, skel.finish()


def tv_dro(h_hat: RankDistribution, rho: float, params: CodeParams,
           ambiguity: AmbiguitySpec | None = None) -> OptimizationResult:
    """Maximize the worst-case rate over ``{h : TV(h, h_hat) <= rho}``."""
    _check_h(h_hat, params)
    if rho < 0:
        raise ValueError("total-variation radius must be nonnegative")
    if rho >= 1:
        log.info("TV radius %.4g >= 1: ambiguity set is the full simplex", rho)
    skel, alpha, beta, lp = build_tv_lp(h_hat, rho, params)
    theta, psi, sol = _solve_degree_lp(lp, skel.psi, skel.theta, "tv")
    diag = {"rho": float(rho), "rows": lp.n_rows, "full_simplex": bool(rho >= 1),
            "lp_theta": float(sol.x[skel.theta]),
            "alpha": sol.x[alpha].tolist(), "beta": sol.x[beta].tolist()}
    return OptimizationResult(theta, psi, "tv", params, ambiguity, diag)


def mu_vertices(mu: float, M: int) -> list[RankDistribution]:
    """Extreme points of the rank distributions on ``0..M`` with mean ``mu``.

    Two-point masses on ``i < mu <= j``; when ``mu`` is an integer the pairs
    with ``j = mu`` all collapse to the point mass at ``mu``, kept once.
    """
    if not 0 <= mu <= M:
        raise ValueError(f"mu={mu} outside [0, {M}]")
    if mu == 0:
        return [RankDistribution.point_mass(0, M)]
    top = math.ceil(mu)
    out: list[RankDistribution] = []
    seen = set()
    for i in range(top):
        for j in range(top, M + 1):
            if not i < mu <= j:
                continue
            mass = np.zeros(M + 1)
            mass[i] += (j - mu) / (j - i)
            mass[j] += (mu - i) / (j - i)
            key = tuple(np.round(mass, 15))
            if key in seen:
                continue
            seen.add(key)
            out.append(RankDistribution(mass))
    return out


def mu_universal(mu: float, params: CodeParams) -> OptimizationResult:
    """Maximize the rate guaranteed for every rank distribution with mean ``mu``."""
    vertices = mu_vertices(mu, params.M)
    skel, lp = _scenario_lp(vertices, params)
    theta, psi, _ = _solve_degree_lp(lp, skel.psi, skel.theta, "mu_universal")
    diag = {"mu": float(mu), "vertices": len(vertices), "rows": lp.n_rows}
    return OptimizationResult(theta, psi, "mu_universal", params, diagnostics=diag)


def _normal_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * erfc(-z / math.sqrt(2.0))


def discretized_gaussian(mean: float, var: float, M: int) -> RankDistribution:
    """Bin ``N(mean, var)`` onto ranks with unit cells; the end ranks take the tails."""
    if var < 0:
        raise ValueError("variance must be nonnegative")
    if var == 0:
        return RankDistribution.point_mass(int(np.clip(round(mean), 0, M)), M)
    edges = (np.arange(M) + 0.5 - mean) / math.sqrt(var)
    cdf = _normal_cdf(edges)
    mass = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    mass = np.maximum(mass, 0.0)
    return RankDistribution(mass)


def safety_margin_distribution(h_hat: RankDistribution, scale: float,
                               n_samples: int | None = None) -> RankDistribution:
    if not 0 < scale < 1:
        raise ValueError("scale factor must lie in (0, 1)")
    mu = h_hat.mean()
    var = h_hat.variance()
    if n_samples is not None:
        if n_samples < 2:
            raise ValueError("sample variance needs at least two samples")
        var *= n_samples / (n_samples - 1)
    return discretized_gaussian(scale * mu, var, h_hat.M)


def safety_margin(h_hat: RankDistribution, scale: float, params: CodeParams,
                  n_samples: int | None = None) -> OptimizationResult:
    """Fit a Gaussian to ``h_hat``, shrink its mean by ``scale``, optimize on the binned fit."""
    _check_h(h_hat, params)
    h = safety_margin_distribution(h_hat, scale, n_samples)
    res = direct_lp(h, params)
    diag = {"scale": float(scale), "n_samples": n_samples, "fitted": h.mass.tolist()}
    return OptimizationResult(res.theta, res.psi, "safety_margin", params, diagnostics=diag)
