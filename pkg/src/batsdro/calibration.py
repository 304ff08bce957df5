"""Distances between rank distributions and ambiguity-radius calibration."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .lp import LE, EQ, LpBuilder, LpStatus, SolverError, solve

log = logging.getLogger(__name__)

WASSERSTEIN = "wasserstein"
TOTAL_VARIATION = "total-variation"


@dataclass(frozen=True)
class AmbiguitySpec:
    metric: str
    rho: float
    confidence: float
    N: int
    L: int | None = None

    def __post_init__(self):
        if self.metric not in (WASSERSTEIN, TOTAL_VARIATION):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.rho < 0:
            raise ValueError("radius must be nonnegative")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.N < 1:
            raise ValueError("sample count must be positive")
        if self.L is not None and self.L < 1:
            raise ValueError("quantile sample count must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _as_mass(h) -> np.ndarray:
    return np.asarray(getattr(h, "mass", h), dtype=float)


def _pair(h1, h2):
    a, b = _as_mass(h1), _as_mass(h2)
    if a.shape != b.shape:
        raise ValueError(f"support sizes differ: {a.size} vs {b.size}")
    return a, b


def wasserstein_distance(h1, h2) -> float:
    """1-Wasserstein distance on ranks with cost ``|r1 - r2|``.

    On the integer line this is the L1 distance between the two CDFs.
    """
    a, b = _pair(h1, h2)
    return float(np.abs(np.cumsum(a - b))[:-1].sum())


def tv_distance(h1, h2) -> float:
    a, b = _pair(h1, h2)
    return 0.5 * float(np.abs(a - b).sum())


def transport_lp_distance(h1, h2) -> float:
    """Wasserstein distance by solving the full transport LP (slow; an oracle)."""
    a, b = _pair(h1, h2)
    n = a.size
    builder = LpBuilder()
    plan = builder.add_variables("gamma", n * n, lower=0.0)
    cost = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]).ravel()
    for j, c in enumerate(cost):
        builder.set_objective(plan.start + j, -c)
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1.0
        rows[n + i, i::n] = 1.0
    builder.add_rows(rows, EQ, np.concatenate([a, b]))
    sol = solve(builder.build())
    if not sol.ok:
        raise SolverError(f"transport LP returned {sol.status.value}")
    return -sol.objective


def gaussian_limit_cov(h_hat) -> np.ndarray:
    """Multinomial covariance ``diag(h) - h h^T``."""
    h = _as_mass(h_hat)
    return np.diag(h) - np.outer(h, h)


def lipschitz_support(g: np.ndarray, method: str = "lp") -> float:
    """``max g @ u`` over 1-Lipschitz ``u`` on ranks ``0..M`` with ``u_0 = 0``.

    ``method="lp"`` solves the pairwise-constraint LP; ``"closed-form"``
    uses ``sum_k |cumsum(g)_k|`` (exact when ``sum(g) = 0``).
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    if method == "closed-form":
        return float(np.abs(np.cumsum(g)[:-1]).sum())
    if method != "lp":
        raise ValueError(f"unknown method {method!r}")
    builder = LpBuilder()
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[0] = upper[0] = 0.0
    u = builder.add_variables("u", n, lower=lower, upper=upper)
    for j in range(n):
        builder.set_objective(u.start + j, g[j])
    r1, r2 = np.nonzero(~np.eye(n, dtype=bool))
    rows = np.zeros((r1.size, n))
    rows[np.arange(r1.size), r1] = 1.0
    rows[np.arange(r1.size), r2] = -1.0
    builder.add_rows(rows, LE, np.abs(r1 - r2).astype(float))
    sol = solve(builder.build())
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverError(f"Lipschitz support LP returned {sol.status.value}")
    return sol.objective


def sample_limit_gaussian(h_hat, L: int, rng: np.random.Generator) -> np.ndarray:
    """``L`` draws of ``N(0, Sigma(h_hat))`` via a clipped eigen factorization."""
    cov = gaussian_limit_cov(h_hat)
    w, V = np.linalg.eigh(cov)
    w = np.where(w < 1e-12, 0.0, w)
    factor = V * np.sqrt(w)
    z = rng.standard_normal((L, cov.shape[0]))
    return z @ factor.T


def quantile_index(L: int, c: float) -> int:
    """1-based rank (from the top) of the sample used as the radius."""
    k = math.floor(L * (1 - c) + 1e-9)
    if k < 1:
        log.warning("floor(L(1-c)) = 0 for L=%d, c=%g; using the sample maximum", L, c)
        k = 1
    return k


def wasserstein_radius(h_hat, N: int, c: float, L: int = 100,
                       seed=None, rng: np.random.Generator | None = None,
                       method: str = "lp") -> float:
    """Radius whose Wasserstein ball around ``h_hat`` covers the truth w.p. about ``c``.

    Draws ``L`` limit-Gaussian vectors, evaluates the Lipschitz support
    function on each, and returns the ``floor(L(1-c))``-th largest value
    divided by ``sqrt(N)``.
    """
    if N < 1:
        raise ValueError("sample count N must be positive")
    if not 0 < c < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if L < 1:
        raise ValueError("L must be positive")
    mass = _as_mass(h_hat)
    if np.max(mass) == 1.0:
        return 0.0
    if rng is None:
        rng = np.random.default_rng(seed)
    draws = sample_limit_gaussian(mass, L, rng)
    values = np.array([lipschitz_support(g, method) for g in draws])
    ordered = np.sort(values)[::-1]
    return float(ordered[quantile_index(L, c) - 1]) / math.sqrt(N)


def tv_radius(N: int, c: float, M: int) -> float:
    """``sqrt(max(M + 1, 2 ln(2 / (1 - c))) / N)``, clamped to ``[0, 1]``."""
    if N < 1:
        raise ValueError("sample count N must be positive")
    if not 0 < c < 1:
        raise ValueError("confidence must lie in (0, 1)")
    rho = math.sqrt(max(M + 1, 2 * math.log(2 / (1 - c))) / N)
    if rho > 1:
        log.info("TV radius %.4g clamped to 1", rho)
        rho = 1.0
    return rho


def coverage_experiment(h_true, N: int, c: float, trials: int, L: int = 100,
                        seed: int = 0, method: str = "lp") -> float:
    """Fraction of trials in which the calibrated ball contains ``h_true``."""
    mass = _as_mass(h_true)
    root = np.random.SeedSequence(seed)
    hits = 0
    for child in root.spawn(trials):
        rng = np.random.default_rng(child)
        counts = rng.multinomial(N, mass)
        h_hat = counts / N
        rho = wasserstein_radius(h_hat, N, c, L, rng=rng, method=method)
        hits += wasserstein_distance(mass, h_hat) <= rho
    return hits / trials
