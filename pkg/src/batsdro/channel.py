"""Line networks with i.i.d. packet erasures and baseline recoding.

Each node forwards ``per_hop_tx`` recoded packets of every batch; each packet
is lost independently with probability ``loss_p``. The batch rank evolves as
a Markov chain starting from ``M`` at the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from .core import RankDistribution, is_prime_power

LARGE_FIELD = "large-field"
EXACT_Q = "exact-q"


@dataclass(frozen=True)
class NetworkSpec:
    hops: int
    loss_p: float
    M: int
    per_hop_tx: int | None = None
    rank_model: str = LARGE_FIELD
    q: int = 256

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("need at least one hop")
        if not 0 <= self.loss_p < 1:
            raise ValueError("loss probability must lie in [0, 1)")
        if self.M < 1:
            raise ValueError("batch size must be positive")
        if self.per_hop_tx is None:
            object.__setattr__(self, "per_hop_tx", self.M)
        if self.per_hop_tx < 1:
            raise ValueError("per_hop_tx must be positive")
        if self.rank_model not in (LARGE_FIELD, EXACT_Q):
            raise ValueError(f"unknown rank model {self.rank_model!r}")
        if self.rank_model == EXACT_Q and not is_prime_power(self.q):
            raise ValueError(f"field size {self.q} is not a prime power")


def random_rank_law(dim: int, count: int, q: int, exact: bool = False) -> np.ndarray:
    """Distribution of the rank of ``count`` uniform vectors in GF(q)^dim.

    Built by adding vectors one at a time: from rank ``j`` a fresh vector
    lies outside the current span with probability ``1 - q^(j - dim)``.
    ``exact=True`` returns an object array of Fractions.
    """
    if exact:
        grow = np.array([1 - Fraction(1, q) ** (dim - j) for j in range(dim + 1)], dtype=object)
        law = np.array([Fraction(0)] * (dim + 1), dtype=object)
        law[0] = Fraction(1)
    else:
        grow = 1.0 - float(q) ** (np.arange(dim + 1) - dim)
        law = np.zeros(dim + 1)
        law[0] = 1.0
    for _ in range(count):
        nxt = law * (1 - grow)
        nxt[1:] += law[:-1] * grow[:-1]
        law = nxt
    return law


def _received_law(n: int, loss_p, exact: bool):
    if exact:
        loss = Fraction(str(loss_p))
        return [math.comb(n, t) * (1 - loss) ** t * loss ** (n - t) for t in range(n + 1)]
    return binom.pmf(np.arange(n + 1), n, 1.0 - loss_p)


@lru_cache(maxsize=64)
def _kernel(spec: NetworkSpec, exact: bool) -> np.ndarray:
    M = spec.M
    received = _received_law(spec.per_hop_tx, spec.loss_p, exact)
    if exact:
        K = np.array([[Fraction(0)] * (M + 1) for _ in range(M + 1)], dtype=object)
    else:
        K = np.zeros((M + 1, M + 1))
    K[0, 0] = 1
    for r in range(1, M + 1):
        for t, pt in enumerate(received):
            if spec.rank_model == LARGE_FIELD:
                K[r, min(r, t)] += pt
            else:
                K[r, : r + 1] += pt * random_rank_law(r, t, spec.q, exact)
    K.setflags(write=False)
    return K


def build_kernel(spec: NetworkSpec, exact: bool = False) -> np.ndarray:
    """Rank transition matrix ``K[r, j] = P(rank j next hop | rank r)``.

    Large-field: the new rank is ``min(r, received)``. Exact-q: the new
    rank is that of ``received`` uniform vectors in the rank-``r`` space.
    ``exact=True`` computes in rational arithmetic (loss rate read from
    its decimal representation).
    """
    return _kernel(spec, exact)


def exact_hop_distribution(spec: NetworkSpec, hop: int) -> RankDistribution:
    """Rank distribution after ``hop`` links, starting from full rank ``M``."""
    if not 1 <= hop <= spec.hops:
        raise ValueError(f"hop {hop} outside [1, {spec.hops}]")
    K = build_kernel(spec)
    dist = np.zeros(spec.M + 1)
    dist[spec.M] = 1.0
    for _ in range(hop):
        dist = dist @ K
    dist = np.maximum(dist, 0.0)
    return RankDistribution(dist / dist.sum())


def sample_ranks(spec: NetworkSpec, hop: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Ranks of ``n`` independent batches after ``hop`` links."""
    if n < 1:
        raise ValueError("need at least one batch")
    if not 1 <= hop <= spec.hops:
        raise ValueError(f"hop {hop} outside [1, {spec.hops}]")
    cum = np.cumsum(build_kernel(spec), axis=1)
    cum[:, -1] = 1.0
    ranks = np.full(n, spec.M)
    for _ in range(hop):
        u = rng.random(n)
        ranks = (u[:, None] >= cum[ranks]).sum(axis=1)
    return ranks


def sample_empirical(spec: NetworkSpec, hop: int, n: int, seed=None,
                     rng: np.random.Generator | None = None) -> RankDistribution:
    """Empirical rank histogram of ``n`` simulated batches."""
    if rng is None:
        rng = np.random.default_rng(seed)
    ranks = sample_ranks(spec, hop, n, rng)
    return RankDistribution.from_counts(np.bincount(ranks, minlength=spec.M + 1))


def capacity(spec: NetworkSpec, hop: int) -> float:
    return exact_hop_distribution(spec, hop).mean()
