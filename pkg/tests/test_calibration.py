import math

import numpy as np
import pytest
from helpers import random_rank_dist
from hypothesis import given, settings
from hypothesis import strategies as st

from batsdro.calibration import (
    AmbiguitySpec,
    coverage_experiment,
    gaussian_limit_cov,
    lipschitz_support,
    quantile_index,
    sample_limit_gaussian,
    transport_lp_distance,
    tv_distance,
    tv_radius,
    wasserstein_distance,
    wasserstein_radius,
)
from batsdro.core import RankDistribution

simplex = st.integers(1, 8).flatmap(
    lambda M: st.lists(st.floats(0, 1), min_size=M + 1, max_size=M + 1).filter(lambda v: sum(v) > 1e-3)
)


def _norm(v):
    v = np.asarray(v, dtype=float)
    return v / v.sum()


# -- distances -----------------------------------------------------------------------------

def test_wasserstein_examples():
    assert wasserstein_distance([0.5, 0.5, 0, 0], [0, 1, 0, 0]) == pytest.approx(0.5, abs=1e-15)
    assert transport_lp_distance([0.5, 0.5, 0, 0], [0, 1, 0, 0]) == pytest.approx(0.5, abs=1e-12)
    assert wasserstein_distance([1, 0, 0, 0], [0, 0, 0, 1]) == 3.0


def test_tv_example():
    assert tv_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25, abs=1e-15)


def test_distances_reject_mismatched_support():
    with pytest.raises(ValueError):
        wasserstein_distance([1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])


def test_closed_form_matches_transport_lp():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        M = int(rng.integers(1, 9))
        a, b = random_rank_dist(rng, M), random_rank_dist(rng, M, 0.3)
        worst = max(worst, abs(wasserstein_distance(a, b) - transport_lp_distance(a, b)))
    assert worst <= 1e-9


@given(simplex, st.data())
@settings(max_examples=100, deadline=None)
def test_metric_axioms(v, data):
    n = len(v)
    other = lambda: _norm(data.draw(st.lists(st.floats(0.01, 1), min_size=n, max_size=n)))
    a, b, c = _norm(v), other(), other()
    M = n - 1
    for dist in (wasserstein_distance, tv_distance):
        assert dist(a, a) == 0.0
        assert dist(a, b) == pytest.approx(dist(b, a), abs=1e-12)
        assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-9
    assert wasserstein_distance(a, b) <= M + 1e-12
    assert tv_distance(a, b) <= 1 + 1e-12


def test_wasserstein_accepts_rank_distributions():
    h1, h2 = RankDistribution.point_mass(1, 3), RankDistribution.point_mass(3, 3)
    assert wasserstein_distance(h1, h2) == 2.0


# -- limit covariance and support function ------------------------------------------------------

def test_covariance_examples():
    np.testing.assert_array_equal(gaussian_limit_cov(RankDistribution.point_mass(8, 8)), np.zeros((9, 9)))
    np.testing.assert_allclose(gaussian_limit_cov([0.5, 0.5]), [[0.25, -0.25], [-0.25, 0.25]], atol=0)


def test_limit_samples_sum_to_zero_and_match_covariance():
    h = np.array([0.1, 0.0, 0.3, 0.6])
    g = sample_limit_gaussian(h, 40000, np.random.default_rng(0))
    assert np.abs(g.sum(axis=1)).max() < 1e-12
    assert np.abs(g[:, 1]).max() < 1e-12
    np.testing.assert_allclose(np.cov(g.T), gaussian_limit_cov(h), atol=0.01)


def test_lipschitz_support_closed_form_agrees_with_lp():
    rng = np.random.default_rng(2)
    for _ in range(30):
        h = random_rank_dist(rng, int(rng.integers(1, 9)))
        g = sample_limit_gaussian(h, 1, rng)[0]
        assert lipschitz_support(g, "lp") == pytest.approx(lipschitz_support(g, "closed-form"), abs=1e-9)
    with pytest.raises(ValueError):
        lipschitz_support(np.zeros(3), "simplex")


# -- radii ---------------------------------------------------------------------------------

def test_quantile_index():
    assert quantile_index(100, 0.9) == 10
    assert quantile_index(100, 0.95) == 5
    assert quantile_index(100, 0.999) == 1


def test_quantile_index_warns_when_degenerate(caplog):
    with caplog.at_level("WARNING"):
        assert quantile_index(50, 0.99) == 1
    assert "maximum" in caplog.text


def test_radius_zero_at_point_mass():
    assert wasserstein_radius(RankDistribution.point_mass(8, 8), 100, 0.9, seed=1) == 0.0


def test_radius_scales_with_inverse_root_n():
    h = np.array([0.05, 0.1, 0.25, 0.6])
    r100 = wasserstein_radius(h, 100, 0.9, seed=3)
    r400 = wasserstein_radius(h, 400, 0.9, seed=3)
    assert r400 == pytest.approx(r100 / 2, rel=1e-12)


def test_radius_nondecreasing_in_confidence():
    h = np.array([0.05, 0.1, 0.25, 0.6])
    radii = [wasserstein_radius(h, 100, c, L=200, seed=9) for c in (0.5, 0.8, 0.9, 0.95, 0.99)]
    assert all(b >= a for a, b in zip(radii, radii[1:]))


def test_radius_deterministic_and_method_independent():
    h = np.array([0.1, 0.2, 0.3, 0.4])
    a = wasserstein_radius(h, 50, 0.9, seed=12)
    assert wasserstein_radius(h, 50, 0.9, seed=12) == a
    assert wasserstein_radius(h, 50, 0.9, seed=12, method="closed-form") == pytest.approx(a, abs=1e-9)


def test_radius_argument_checks():
    h = [0.5, 0.5]
    for kwargs in ({"N": 0, "c": 0.9}, {"N": 10, "c": 1.0}, {"N": 10, "c": 0.9, "L": 0}):
        with pytest.raises(ValueError):
            wasserstein_radius(h, **kwargs)


def test_tv_radius_examples():
    assert tv_radius(100, 0.9, 8) == 0.3
    # above c = 1 - 2 exp(-(M+1)/2) the log term takes over
    threshold = 1 - 2 * math.exp(-4.5)
    assert threshold == pytest.approx(0.97778, abs=1e-5)
    assert tv_radius(100, 0.99, 8) == pytest.approx(math.sqrt(2 * math.log(200) / 100))
    assert tv_radius(100, 0.97, 8) == 0.3
    assert tv_radius(400, 0.9, 8) == pytest.approx(0.15)
    assert tv_radius(4, 0.9, 8) == 1.0


def test_coverage_small_scale():
    h = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    assert coverage_experiment(h, 500, 0.9, trials=60, L=100, seed=1, method="closed-form") >= 0.75


def test_ambiguity_spec_validation():
    spec = AmbiguitySpec("wasserstein", 0.1, 0.9, 100, 100)
    assert spec.to_dict()["rho"] == 0.1
    with pytest.raises(ValueError):
        AmbiguitySpec("kl", 0.1, 0.9, 100)
    with pytest.raises(ValueError):
        AmbiguitySpec("total-variation", -0.1, 0.9, 100)
    with pytest.raises(ValueError):
        AmbiguitySpec("total-variation", 0.1, 1.5, 100)
