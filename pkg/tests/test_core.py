import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from batsdro.core import (
    CodeParams,
    DegreeDistribution,
    RankDistribution,
    build_decodability_matrix,
    build_mho,
    decodability_lhs,
    default_max_degree,
    evaluate_rate,
    make_grid,
    regularized_incomplete_beta,
    zeta,
)
from batsdro.optimizers import direct_lp


def random_rank_dist(rng, M):
    return RankDistribution.normalized(rng.dirichlet(np.ones(M + 1)))


# -- distributions and parameters ------------------------------------------------

def test_rank_distribution_rejects_bad_mass():
    with pytest.raises(ValueError):
        RankDistribution([0.5, 0.6])
    with pytest.raises(ValueError):
        RankDistribution([1.2, -0.2])
    assert RankDistribution([0.25, 0.75]).M == 1


def test_rank_distribution_is_immutable():
    h = RankDistribution([0.5, 0.5])
    with pytest.raises(ValueError):
        h.mass[0] = 1.0


def test_degree_distribution_tolerance_is_lp_level():
    DegreeDistribution([0.5, 0.5 + 5e-10])
    with pytest.raises(ValueError):
        DegreeDistribution([0.5, 0.5 + 1e-6])


def test_default_max_degree_reference_setting():
    assert default_max_degree(8, 0.98) == 399
    assert CodeParams(M=8).D == 399


def test_grid_ends_at_eta():
    grid = make_grid(0.98, 0.01)
    assert grid[0] == pytest.approx(0.01)
    assert grid[-1] == 0.98
    assert grid.size == 98
    assert np.all(np.diff(grid) > 0)
    odd = make_grid(0.95, 0.02)
    assert odd[-2] == pytest.approx(0.94) and odd[-1] == 0.95


def test_code_params_validation():
    with pytest.raises(ValueError):
        CodeParams(M=8, q=6)
    with pytest.raises(ValueError):
        CodeParams(M=8, eta=1.0)
    with pytest.raises(ValueError):
        CodeParams(M=8, grid=[0.5, 0.2, 0.98])
    assert CodeParams(M=4, q=256).identity_z
    assert not CodeParams(M=4, q=2).identity_z


# -- zeta and Z -------------------------------------------------------------------

def _enumerated_full_rank_2x2_binary():
    full = 0
    for a, b, c, d in itertools.product((0, 1), repeat=4):
        full += (a * d - b * c) % 2 != 0
    return Fraction(full, 16)


def test_zeta_examples():
    assert zeta(0, 5, 2) == 1
    assert _enumerated_full_rank_2x2_binary() == Fraction(6, 16)
    assert zeta(2, 2, 2) == pytest.approx(0.375, abs=0)
    assert zeta(2, 2, 2, exact=True) == Fraction(3, 8)
    assert zeta(1, 1, 256) == pytest.approx(255 / 256, abs=1e-16)


def test_zeta_rejects_small_field():
    with pytest.raises(ValueError):
        zeta(1, 1, 1)


def test_zeta_beyond_batch_size_is_one():
    assert zeta(5, 5, 2, M=4) == 1


def test_z_matrix_small_case():
    Z = build_decodability_matrix(CodeParams(M=1, q=2, eta=0.5))
    np.testing.assert_allclose(Z, [[1.0, 0.5], [0.0, 0.5]], atol=0)


def test_z_identity_mode():
    Z = build_decodability_matrix(CodeParams(M=5, q=2), identity=True)
    np.testing.assert_array_equal(Z, np.eye(6))


@pytest.mark.parametrize("q", [2, 4, 256])
@pytest.mark.parametrize("M", [1, 2, 5, 8, 16])
def test_z_column_stochastic_and_upper_triangular(q, M):
    Z = build_decodability_matrix(CodeParams(M=M, q=q, identity_z=False))
    np.testing.assert_allclose(Z.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(np.tril(Z, -1) == 0)


def test_transformed_distribution_is_probability_vector():
    rng = np.random.default_rng(5)
    Z = build_decodability_matrix(CodeParams(M=8, q=2))
    for _ in range(20):
        RankDistribution(Z @ random_rank_dist(rng, 8).mass)


# -- regularized incomplete beta ----------------------------------------------------

def test_incomplete_beta_examples():
    assert regularized_incomplete_beta(0.25, 1, 1) == pytest.approx(0.25, abs=1e-15)
    for a, b in [(1, 1), (3, 7), (50, 2)]:
        assert regularized_incomplete_beta(1.0, a, b) == 1.0
    quad, _ = integrate.quad(lambda t: 6 * t * (1 - t), 0, 0.5)
    assert quad == pytest.approx(0.5, abs=1e-14)
    assert regularized_incomplete_beta(0.5, 2, 2) == pytest.approx(quad, abs=1e-12)


def test_incomplete_beta_domain():
    with pytest.raises(ValueError):
        regularized_incomplete_beta(1.5, 1, 1)
    with pytest.raises(ValueError):
        regularized_incomplete_beta(0.5, 0, 1)


def test_incomplete_beta_integer_grid_against_scipy():
    worst = 0.0
    for x in (0.01, 0.2, 0.5, 0.73, 0.9, 0.98):
        for a in (1, 2, 5, 17, 60, 150, 398):
            for b in (1, 2, 3, 5, 8):
                worst = max(worst, abs(regularized_incomplete_beta(x, a, b) - special.betainc(a, b, x)))
    assert worst <= 1e-12


@pytest.mark.parametrize("a,b", [(2, 2), (3, 5), (7, 4)])
def test_incomplete_beta_against_quadrature(a, b):
    norm = math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    for x in (0.1, 0.4, 0.8):
        quad, _ = integrate.quad(lambda t: t ** (a - 1) * (1 - t) ** (b - 1), 0, x, epsabs=1e-14)
        assert regularized_incomplete_beta(x, a, b) == pytest.approx(quad / norm, abs=1e-12)


@given(st.floats(0.001, 0.999), st.floats(0.3, 30), st.floats(0.3, 30))
@settings(max_examples=200, deadline=None)
def test_incomplete_beta_continued_fraction(x, a, b):
    assert regularized_incomplete_beta(x, a, b) == pytest.approx(special.betainc(a, b, x), abs=1e-11)


# -- mho matrices -------------------------------------------------------------------

SMALL = CodeParams(M=8, D=60, grid_step=0.05)


def test_mho_examples():
    mho = build_mho(0.25, SMALL)
    assert mho.shape == (9, 60)
    assert np.all(mho[0] == 0)
    assert mho[3, 2 - 1] == 2
    assert mho[1, 2 - 1] == pytest.approx(0.5, abs=1e-15)


def test_mho_matches_definition_via_scipy():
    x = 0.63
    mho = build_mho(x, SMALL)
    for r in range(1, 9):
        for d in range(1, 61):
            want = d if d <= r else d * special.betainc(d - r, r, x)
            assert mho[r, d - 1] == pytest.approx(want, abs=1e-11)


def test_mho_rejects_x_outside_interval():
    with pytest.raises(ValueError):
        build_mho(0.0, SMALL)
    with pytest.raises(ValueError):
        build_mho(0.99, SMALL)


def test_mho_monotone_in_rank_and_x():
    grid = SMALL.grid
    mats = np.stack([build_mho(x, SMALL) for x in grid])
    assert np.all(np.diff(mats, axis=1) >= -1e-12)
    assert np.all(np.diff(mats, axis=0) >= -1e-12)


# -- decodability and rate -----------------------------------------------------------

def _uniform_psi(D):
    return DegreeDistribution(np.full(D, 1.0 / D))


def test_lhs_vanishes_at_rank_zero():
    delta0 = RankDistribution.point_mass(0, 8)
    for x in SMALL.grid:
        assert decodability_lhs(delta0, _uniform_psi(60), x, SMALL) == 0.0


def test_lhs_dimension_mismatch():
    with pytest.raises(ValueError):
        decodability_lhs(RankDistribution.point_mass(0, 4), _uniform_psi(60), 0.5, SMALL)


def _dominating_pair(rng, M):
    """h2 moves some mass of h1 to higher ranks, so h2 dominates h1."""
    h1 = rng.dirichlet(np.ones(M + 1))
    h2 = h1.copy()
    for r in range(M):
        move = rng.uniform(0, h2[r])
        h2[r] -= move
        h2[rng.integers(r + 1, M + 1)] += move
    return RankDistribution.normalized(h1), RankDistribution.normalized(h2)


def test_lhs_nonnegative_and_monotone_under_dominance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        low, high = _dominating_pair(rng, 8)
        psi = DegreeDistribution.from_solver(rng.dirichlet(np.ones(60)))
        for x in SMALL.grid[::3]:
            lo = decodability_lhs(low, psi, x, SMALL)
            assert lo >= 0
            assert decodability_lhs(high, psi, x, SMALL) >= lo - 1e-12
        assert evaluate_rate(psi, high, SMALL).theta >= evaluate_rate(psi, low, SMALL).theta - 1e-12


def test_rate_zero_at_rank_zero():
    ev = evaluate_rate(_uniform_psi(60), RankDistribution.point_mass(0, 8), SMALL)
    assert ev.theta == 0.0


def test_rate_matches_lp_optimum_and_is_pure():
    rng = np.random.default_rng(2)
    h = random_rank_dist(rng, 8)
    res = direct_lp(h, SMALL)
    first = evaluate_rate(res.psi, h, SMALL)
    assert first.theta == pytest.approx(res.theta, abs=1e-6)
    assert first.normalized == pytest.approx(res.theta / 8, abs=1e-6)
    assert first.argmin_x in SMALL.grid
    again = evaluate_rate(res.psi, RankDistribution(h.mass * 1.0), SMALL)
    assert again.theta == first.theta


def test_rate_matches_definition_at_each_grid_point():
    rng = np.random.default_rng(3)
    P = CodeParams(M=4, q=2, D=30, grid_step=0.1)
    h = random_rank_dist(rng, 4)
    psi = DegreeDistribution.from_solver(rng.dirichlet(np.ones(30)))
    manual = [-decodability_lhs(h, psi, x, P) / math.log(1 - x) for x in P.grid]
    assert evaluate_rate(psi, h, P).theta == pytest.approx(min(manual), rel=1e-12)
