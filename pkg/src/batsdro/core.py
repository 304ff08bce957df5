"""BATS code model: rank/degree distributions, the decodability transform and
the per-grid-point constraint matrices used by every degree optimizer.

Matrices follow the usual indexing: ranks and decodable degrees count from 0,
codeword degrees from 1 (column ``d - 1`` of an array holds degree ``d``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

PROB_TOL = 1e-12
DEGREE_TOL = 1e-9
SOLVER_TOL = 1e-7  # matches the LP feasibility check


def is_prime_power(q: int) -> bool:
    if q < 2:
        return False
    p = 2
    while p * p <= q:
        if q % p == 0:
            while q % p == 0:
                q //= p
            return q == 1
        p += 1
    return True


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_probability_vector(mass: np.ndarray, tol: float, what: str) -> None:
    if mass.ndim != 1 or mass.size == 0:
        raise ValueError(f"{what} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(mass)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(mass < 0):
        raise ValueError(f"{what} has negative entries (min {mass.min():.3g})")
    total = math.fsum(mass)
    if abs(total - 1.0) > tol:
        raise ValueError(f"{what} sums to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class RankDistribution:
    """Probability of each batch rank ``0..M`` at the destination."""

    mass: np.ndarray

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        _check_probability_vector(mass, PROB_TOL, "rank distribution")
        object.__setattr__(self, "mass", mass)

    @property
    def M(self) -> int:
        return self.mass.size - 1

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(self.mass.size)

    def mean(self) -> float:
        return float(self.ranks @ self.mass)

    def variance(self) -> float:
        mu = self.mean()
        return float(((self.ranks - mu) ** 2) @ self.mass)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    @classmethod
    def point_mass(cls, rank: int, M: int) -> RankDistribution:
        if not 0 <= rank <= M:
            raise ValueError(f"rank {rank} outside [0, {M}]")
        mass = np.zeros(M + 1)
        mass[rank] = 1.0
        return cls(mass)

    @classmethod
    def from_counts(cls, counts) -> RankDistribution:
        counts = np.asarray(counts, dtype=float)
        if np.any(counts < 0) or counts.sum() <= 0:
            raise ValueError("counts must be nonnegative with a positive total")
        return cls(counts / counts.sum())

    @classmethod
    def normalized(cls, mass) -> RankDistribution:
        """Build from a nonnegative vector, rescaling it to sum to one."""
        mass = np.asarray(mass, dtype=float)
        if np.any(mass < 0):
            raise ValueError("cannot normalize a vector with negative entries")
        return cls(mass / math.fsum(mass))

    def to_dict(self) -> dict:
        return {"M": self.M, "mass": self.mass.tolist()}

    def __eq__(self, other):
        if not isinstance(other, RankDistribution):
            return NotImplemented
        return np.array_equal(self.mass, other.mass)

    def __hash__(self):
        return hash(self.mass.tobytes())


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """Probability of each degree ``1..D``; ``mass[d - 1]`` is degree ``d``."""

    mass: np.ndarray

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        _check_probability_vector(mass, DEGREE_TOL, "degree distribution")
        object.__setattr__(self, "mass", mass)

    @property
    def D(self) -> int:
        return self.mass.size

    @classmethod
    def from_solver(cls, values) -> DegreeDistribution:
        """Absorb solver round-off: clip tiny negatives, rescale a sum within SOLVER_TOL of one."""
        values = np.asarray(values, dtype=float).copy()
        if np.any(values < -SOLVER_TOL):
            raise ValueError("solver returned a clearly negative degree mass")
        values[values < 0] = 0.0
        total = math.fsum(values)
        if abs(total - 1.0) > SOLVER_TOL:
            raise ValueError(f"solver degree masses sum to {total!r}")
        return cls(values / total)

    def mean(self) -> float:
        return float(np.arange(1, self.D + 1) @ self.mass)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0) + 1

    def to_dict(self) -> dict:
        return {"D": self.D, "mass": self.mass.tolist()}


def default_max_degree(M: int, eta: float) -> int:
    # tolerance absorbs 1 - eta round-off, e.g. 2 / (1 - 0.9) = 20.000000000000004
    return math.ceil(M / (1 - eta) - 1e-9) - 1


def make_grid(eta: float, step: float = 0.01) -> np.ndarray:
    """Arithmetic grid ``step, 2*step, ...`` below ``eta``, closed by ``eta``."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if step <= 0:
        raise ValueError("grid step must be positive")
    points = []
    k = 1
    while True:
        x = round(k * step, 12)
        if x >= eta - 1e-12:
            break
        points.append(x)
        k += 1
    points.append(eta)
    return np.array(points)


@dataclass(frozen=True, eq=False)
class CodeParams:
    """Batch size, field size, decodable fraction, degree cap and x-grid.

    ``D`` defaults to ``ceil(M / (1 - eta)) - 1``; ``grid`` defaults to
    :func:`make_grid` with ``grid_step``. ``identity_z`` selects the
    large-field approximation ``Z = I``; ``None`` enables it for q = 256.
    """

    M: int
    q: int = 256
    eta: float = 0.98
    D: int | None = None
    grid_step: float = 0.01
    grid: np.ndarray | None = None
    identity_z: bool | None = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("batch size M must be at least 1")
        if not is_prime_power(self.q):
            raise ValueError(f"field size {self.q} is not a prime power")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        D = default_max_degree(self.M, self.eta) if self.D is None else int(self.D)
        if D < 1:
            raise ValueError("max degree D must be at least 1")
        object.__setattr__(self, "D", D)
        grid = make_grid(self.eta, self.grid_step) if self.grid is None else np.asarray(self.grid, float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-D sequence")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] <= 0 or abs(grid[-1] - self.eta) > 1e-15:
            raise ValueError("grid must lie in (0, eta] and end at eta")
        object.__setattr__(self, "grid", _frozen_array(grid))
        if self.identity_z is None:
            object.__setattr__(self, "identity_z", self.q == 256)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "q": self.q,
            "eta": self.eta,
            "D": self.D,
            "grid_step": self.grid_step,
            "grid_size": int(self.grid.size),
            "identity_z": bool(self.identity_z),
        }

    def _key(self):
        return (self.M, self.q, self.eta, self.D, self.grid.tobytes(), self.identity_z)

    def __eq__(self, other):
        if not isinstance(other, CodeParams):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


def zeta(r: int, m: int, q: int, M: int | None = None, exact: bool = False):
    """Probability that an ``r x m`` uniformly random matrix over GF(q) has rank ``r``.

    The product form applies for ``0 < r`` (and ``r <= M`` when ``M`` is
    given); every other case is 1. ``exact=True`` returns a Fraction.
    """
    if q < 2:
        raise ValueError("field size q must be at least 2")
    if r < 0 or m < 0:
        raise ValueError("dimensions must be nonnegative")
    one = Fraction(1) if exact else 1.0
    if r == 0 or (M is not None and r > M):
        return one
    out = one
    for i in range(r):
        if exact:
            out *= 1 - Fraction(1, q) ** (m - i)
        else:
            out *= 1.0 - float(q) ** (i - m)
    return out


@lru_cache(maxsize=64)
def _z_matrix(M: int, q: int) -> np.ndarray:
    Z = np.zeros((M + 1, M + 1))
    for r in range(M + 1):
        for s in range(r + 1):
            Z[s, r] = zeta(s, r, q, M=M) / float(q) ** (r - s)
    Z.setflags(write=False)
    return Z


def build_decodability_matrix(params: CodeParams, identity: bool | None = None) -> np.ndarray:
    """Upper-triangular ``Z`` mapping a rank distribution to first-decodable degrees."""
    use_identity = params.identity_z if identity is None else identity
    if use_identity:
        Z = np.eye(params.M + 1)
        Z.setflags(write=False)
        return Z
    return _z_matrix(params.M, params.q)


def _betainc_cf(x: float, a: float, b: float) -> float:
    # modified Lentz continued fraction, valid for x < (a + 1) / (a + b + 2)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    return front * h / a


def _binomial_pmf(n: int, k: int, x: float) -> float:
    try:
        coeff = float(math.comb(n, k))
    except OverflowError:
        coeff = math.inf
    if math.isfinite(coeff):
        return coeff * x**k * (1.0 - x) ** (n - k)
    logp = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(logp + k * math.log(x) + (n - k) * math.log1p(-x))


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """``I_x(a, b)``.

    Integer arguments use the binomial tail ``P(Binomial(a+b-1, x) >= a)``,
    summing whichever side has fewer terms. Other arguments fall back to a
    continued fraction.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if float(a).is_integer() and float(b).is_integer():
        a, b = int(a), int(b)
        n = a + b - 1
        if b <= a:
            return math.fsum(_binomial_pmf(n, j, x) for j in range(a, n + 1))
        return 1.0 - math.fsum(_binomial_pmf(n, j, x) for j in range(a))
    if x < (a + 1.0) / (a + b + 2.0):
        return _betainc_cf(x, a, b)
    return 1.0 - _betainc_cf(1.0 - x, b, a)


@lru_cache(maxsize=16)
def _comb_table(D: int, M: int) -> np.ndarray:
    # table[n, k] = C(n, k) for n < D, k < M
    table = np.zeros((max(D, 1), max(M, 1)))
    for n in range(D):
        for k in range(min(n, M - 1) + 1):
            table[n, k] = float(math.comb(n, k))
    return table


def _mho_entries(x: float, M: int, D: int) -> np.ndarray:
    d = np.arange(1, D + 1)
    n = d - 1
    k = np.arange(M)
    # term[n, k] = C(n, k) (1-x)^k x^(n-k): probability of exactly k failures
    with np.errstate(under="ignore", invalid="ignore"):
        expo = n[:, None] - k[None, :]
        terms = _comb_table(D, M) * (1.0 - x) ** k[None, :] * np.where(expo >= 0, x ** np.maximum(expo, 0), 0.0)
    # tails[n, r-1] = I_x(d - r, r) = P(at most r-1 failures in d-1 trials)
    tails = np.cumsum(terms, axis=1)
    mho = np.zeros((M + 1, D))
    for r in range(1, M + 1):
        row = d.astype(float)
        high = d > r
        row[high] = d[high] * tails[high, r - 1]
        mho[r] = row
    return mho


def build_mho(x: float, params: CodeParams) -> np.ndarray:
    """Constraint matrix at grid point ``x``: ``(M+1) x D``, rank by degree.

    Entry ``(r, d)`` is 0 for r = 0, ``d`` for d <= r and
    ``d * I_x(d - r, r)`` otherwise.
    """
    if not 0.0 < x <= params.eta:
        raise ValueError(f"x={x} outside (0, eta={params.eta}]")
    return _mho_entries(float(x), params.M, params.D)


@lru_cache(maxsize=32)
def _coefficient_stack(params: CodeParams) -> np.ndarray:
    Z = build_decodability_matrix(params)
    stack = np.stack([Z.T @ _mho_entries(float(x), params.M, params.D) for x in params.grid])
    stack.setflags(write=False)
    return stack


def coefficient_stack(params: CodeParams) -> np.ndarray:
    """``Z^T mho(x)`` for every grid point, shape ``(|grid|, M+1, D)``.

    Row ``r`` of slice ``i`` is the decodability coefficient of rank ``r`` at
    ``grid[i]``; cached per parameter set.
    """
    return _coefficient_stack(params)


def _check_dims(h: RankDistribution, psi: DegreeDistribution, params: CodeParams) -> None:
    if h.M != params.M:
        raise ValueError(f"rank distribution has M={h.M}, params have M={params.M}")
    if psi.D != params.D:
        raise ValueError(f"degree distribution has D={psi.D}, params have D={params.D}")


def decodability_lhs(h: RankDistribution, psi: DegreeDistribution, x: float, params: CodeParams) -> float:
    """``h^T Z^T mho(x) psi``, the rate-free part of the decoding condition at ``x``."""
    _check_dims(h, psi, params)
    Z = build_decodability_matrix(params)
    return float((Z @ h.mass) @ build_mho(x, params) @ psi.mass)


@dataclass(frozen=True)
class RateEvaluation:
    theta: float
    normalized: float
    argmin_x: float
    per_x: np.ndarray = field(repr=False)


def evaluate_rate(psi: DegreeDistribution, h_true: RankDistribution, params: CodeParams) -> RateEvaluation:
    """Rate achieved by ``psi`` when batches really follow ``h_true``.

    Minimum over the grid of ``-h^T Z^T mho(x) psi / ln(1 - x)``.
    """
    _check_dims(h_true, psi, params)
    lhs = np.einsum("r,xrd,d->x", h_true.mass, coefficient_stack(params), psi.mass)
    ratios = -lhs / np.log1p(-params.grid)
    i = int(np.argmin(ratios))
    theta = max(float(ratios[i]), 0.0)
    return RateEvaluation(theta, theta / params.M, float(params.grid[i]), ratios)
