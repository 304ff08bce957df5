import numpy as np

from batsdro.calibration import tv_distance, wasserstein_distance
from batsdro.core import RankDistribution


def random_rank_dist(rng, M, concentration=1.0):
    return RankDistribution.normalized(rng.dirichlet(np.full(M + 1, concentration)))


def sample_in_ball(rng, center, rho, metric, count):
    """Random distributions within distance rho of center.

    Both distances scale linearly along the segment from the center to any
    other distribution, so shrinking a random direction lands inside the ball.
    Half the draws sit on the boundary, where violations would show first.
    """
    dist = wasserstein_distance if metric == "wasserstein" else tv_distance
    M = center.M
    out = []
    for k in range(count):
        if k % 3 == 0:
            target = np.zeros(M + 1)
            target[rng.integers(0, M + 1)] = 1.0
        else:
            target = rng.dirichlet(np.full(M + 1, 0.3))
        gap = dist(center.mass, target)
        if gap == 0:
            out.append(center)
            continue
        t = min(1.0, rho / gap) * (1.0 if k % 2 else rng.uniform())
        mass = np.clip(center.mass + t * (target - center.mass), 0.0, None)
        h = RankDistribution.normalized(mass)
        assert dist(center.mass, h.mass) <= rho + 1e-9
        out.append(h)
    return out
