"""Brute-force reference computations and the ``validate`` suite.

Everything here enumerates: all matrices over a small prime field, all
transport plans via the full LP. Nothing reuses the closed forms it checks.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .calibration import transport_lp_distance, wasserstein_distance
from .channel import EXACT_Q, NetworkSpec, build_kernel, random_rank_law
from .core import zeta


def rank_mod_p(rows: list[list[int]], p: int) -> int:
    """Rank over GF(p) by Gaussian elimination (p prime)."""
    mat = [list(r) for r in rows]
    rank = 0
    n_cols = len(mat[0]) if mat else 0
    for col in range(n_cols):
        pivot = next((i for i in range(rank, len(mat)) if mat[i][col] % p), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        inv = pow(mat[rank][col], p - 2, p)
        mat[rank] = [(v * inv) % p for v in mat[rank]]
        for i in range(len(mat)):
            if i != rank and mat[i][col] % p:
                f = mat[i][col]
                mat[i] = [(a - f * b) % p for a, b in zip(mat[i], mat[rank])]
        rank += 1
    return rank


def _all_matrices(n_rows: int, n_cols: int, p: int):
    for flat in itertools.product(range(p), repeat=n_rows * n_cols):
        yield [list(flat[i * n_cols:(i + 1) * n_cols]) for i in range(n_rows)]


def enumerate_rank_counts(n_rows: int, n_cols: int, p: int) -> list[int]:
    """How many ``n_rows x n_cols`` matrices over GF(p) have each rank."""
    counts = [0] * (min(n_rows, n_cols) + 1)
    if n_rows == 0 or n_cols == 0:
        counts[0] = 1
        return counts
    for mat in _all_matrices(n_rows, n_cols, p):
        counts[rank_mod_p(mat, p)] += 1
    return counts


def brute_force_zeta(r: int, m: int, p: int) -> Fraction:
    counts = enumerate_rank_counts(r, m, p)
    full = counts[r] if r <= m else 0
    return Fraction(full, p ** (r * m))


@lru_cache(maxsize=None)
def brute_force_rank_law(dim: int, count: int, p: int) -> tuple[Fraction, ...]:
    """Rank law of ``count`` uniform vectors in GF(p)^dim, by enumeration."""
    counts = enumerate_rank_counts(count, dim, p)
    total = p ** (count * dim)
    law = [Fraction(0)] * (dim + 1)
    for j, c in enumerate(counts):
        law[j] = Fraction(c, total)
    return tuple(law)


def brute_force_kernel(spec: NetworkSpec) -> list[list[Fraction]]:
    """Exact-q rank kernel with erasures summed out and ranks enumerated."""
    loss = Fraction(str(spec.loss_p))
    n, M = spec.per_hop_tx, spec.M
    K = [[Fraction(0)] * (M + 1) for _ in range(M + 1)]
    K[0][0] = Fraction(1)
    for r in range(1, M + 1):
        for received in itertools.product((0, 1), repeat=n):
            t = sum(received)
            weight = (1 - loss) ** t * loss ** (n - t)
            for j, pj in enumerate(brute_force_rank_law(r, t, spec.q)):
                K[r][j] += weight * pj
    return K


@dataclass
class OracleCheck:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name, fn) -> OracleCheck:
    start = time.perf_counter()
    passed, detail = fn()
    return OracleCheck(name, passed, detail, time.perf_counter() - start)


def check_zeta() -> tuple[bool, str]:
    bad = []
    for p in (2, 3):
        for r in range(0, 4):
            for m in range(0, 4):
                got = zeta(r, m, p, exact=True)
                want = brute_force_zeta(r, m, p)
                if got != want:
                    bad.append(f"q={p} r={r} m={m}: {got} != {want}")
    return not bad, "; ".join(bad) or "32 cases exact"


def check_rank_law() -> tuple[bool, str]:
    bad = []
    for dim in range(0, 4):
        for count in range(0, 4):
            got = random_rank_law(dim, count, 2, exact=True)
            want = brute_force_rank_law(dim, count, 2)
            if tuple(got) != want:
                bad.append(f"dim={dim} count={count}")
    return not bad, "; ".join(bad) or "16 cases exact"


def check_kernel() -> tuple[bool, str]:
    bad = []
    for M in (1, 2, 3):
        for tx in (1, 2, 3):
            for loss in (0.0, 0.25, 0.5):
                spec = NetworkSpec(hops=1, loss_p=loss, M=M, per_hop_tx=tx, rank_model=EXACT_Q, q=2)
                got = build_kernel(spec, exact=True)
                want = brute_force_kernel(spec)
                if [list(row) for row in got] != want:
                    bad.append(f"M={M} tx={tx} p={loss}")
    return not bad, "; ".join(bad) or "27 kernels exact"


def check_transport(pairs: int = 100, M: int = 8, seed: int = 0, tol: float = 1e-9) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        a = rng.dirichlet(np.full(M + 1, 0.5))
        b = rng.dirichlet(np.full(M + 1, 0.5))
        worst = max(worst, abs(wasserstein_distance(a, b) - transport_lp_distance(a, b)))
    return worst <= tol, f"{pairs} pairs, max |closed form - LP| = {worst:.2e}"


def run_oracle_suite() -> list[OracleCheck]:
    return [
        _timed("zeta_vs_enumeration", check_zeta),
        _timed("rank_law_vs_enumeration", check_rank_law),
        _timed("kernel_vs_enumeration", check_kernel),
        _timed("wasserstein_vs_transport_lp", check_transport),
    ]
