"""Particle configurations and rank-based interaction quantities.

The proximity rank of particle j relative to a focal particle i is its
position in the list of the other n-1 particles sorted by torus distance
from i, with distance ties broken by ascending particle index so that the
ranks always form a bijection onto {1, ..., n-1}.  Normalized ranks
rank/(n-1) coincide with the closed-ball empirical mass at the partner's
distance whenever interparticle distances are pairwise distinct.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import torus
from .kernels import DegenerateNormalizationError, Kernel


@dataclass
class Configuration:
    """Positions and velocities of n particles on the unit d-torus.

    Positions are wrapped into [0, 1) on construction.  ``n`` and ``d`` are
    fixed for the lifetime of a trajectory.
    """

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self) -> None:
        pos = np.atleast_1d(np.asarray(self.positions, dtype=float))
        vel = np.atleast_1d(np.asarray(self.velocities, dtype=float))
        if pos.ndim == 1:
            pos = pos[:, np.newaxis]
        if vel.ndim == 1:
            vel = vel[:, np.newaxis]
        if pos.shape != vel.shape:
            raise ValueError(f"positions {pos.shape} and velocities {vel.shape} disagree")
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 particles")
        if pos.shape[1] not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {pos.shape[1]}")
        self.positions = torus.wrap(pos)
        self.velocities = vel

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Configuration":
        return Configuration(self.positions.copy(), self.velocities.copy())

    def transported(self, dt: float) -> "Configuration":
        """Free streaming: advance every particle by its velocity for time dt.

        Returns an independent configuration (velocities copied, not aliased),
        so snapshots stay frozen while the source keeps evolving.
        """
        return Configuration(
            torus.wrap(self.positions + self.velocities * dt), self.velocities.copy()
        )

    def transport_inplace(self, dt: float) -> None:
        self.positions += self.velocities * dt
        np.mod(self.positions, 1.0, out=self.positions)


@dataclass
class RankTable:
    """Sorted view of the other particles around one focal particle.

    ``order[h-1]`` is the index holding rank h; distances along ``order`` are
    non-decreasing.  ``tie_breaks`` counts adjacent sorted pairs at exactly
    equal distance, which were separated by the index rule.
    """

    focal: int
    order: np.ndarray
    distances: np.ndarray
    tie_breaks: int = field(default=0)

    def rank_of(self, j: int) -> int:
        where = np.nonzero(self.order == j)[0]
        if where.size == 0:
            raise IndexError(f"particle {j} not ranked around focal {self.focal}")
        return int(where[0]) + 1


def _check_pair(config: Configuration, i: int, j: int) -> None:
    n = config.n
    if not (0 <= i < n) or not (0 <= j < n):
        raise IndexError(f"particle index out of range for n={n}: i={i}, j={j}")
    if i == j:
        raise ValueError("focal and partner index must differ")


def rank_table(config: Configuration, i: int) -> RankTable:
    """Rank all other particles around focal i (stable sort; ties fall to lower index)."""
    if not 0 <= i < config.n:
        raise IndexError(f"focal index {i} out of range for n={config.n}")
    others = np.concatenate([np.arange(i), np.arange(i + 1, config.n)])
    dist = torus.distances_from(config.positions[others], config.positions[i])
    sorter = np.argsort(dist, kind="stable")
    sorted_dist = dist[sorter]
    ties = int(np.count_nonzero(np.diff(sorted_dist) == 0.0))
    return RankTable(focal=i, order=others[sorter], distances=sorted_dist, tie_breaks=ties)


def rank(config: Configuration, i: int, j: int) -> int:
    """Proximity rank of j around i: 1 for the closest other particle, up to n-1."""
    _check_pair(config, i, j)
    return rank_table(config, i).rank_of(j)


def rank_vector(config: Configuration, i: int) -> np.ndarray:
    """Ranks of every particle around focal i as an int array; entry i is 0."""
    table = rank_table(config, i)
    ranks = np.zeros(config.n, dtype=np.int64)
    ranks[table.order] = np.arange(1, config.n)
    return ranks


def normalized_ranks(config: Configuration, i: int) -> np.ndarray:
    """rank/(n-1) for every particle around focal i; entry i is 0."""
    return rank_vector(config, i) / (config.n - 1)


def empirical_mass(
    config: Configuration, center: np.ndarray | float, radius: float, exclude: int
) -> float:
    """Fraction of the other particles inside the closed torus ball of given radius.

    Counts particles h != exclude with torus_dist(x_h, center) <= radius and
    divides by n-1.  With center = x_i and radius = |x_i - x_j| this equals
    the normalized rank of j whenever distances are pairwise distinct.
    """
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    if not 0 <= exclude < config.n:
        raise IndexError(f"excluded index {exclude} out of range for n={config.n}")
    center_arr = np.atleast_1d(np.asarray(center, dtype=float))
    dist = torus.distances_from(config.positions, center_arr)
    inside = dist <= radius
    inside[exclude] = False
    return float(np.count_nonzero(inside)) / (config.n - 1)


def partner_distribution(
    config: Configuration, kernel: Kernel, i: int
) -> tuple[np.ndarray, np.ndarray]:
    """Partner-choice probabilities for focal i together with the rank vector.

    Because the ranks of the others are exactly {1, ..., n-1}, normalizing by
    the sum of kernel values over the drawn ranks is algebraically the same
    as dividing by sum_s K(s/(n-1)).
    """
    ranks = rank_vector(config, i)
    weights = kernel(ranks / (config.n - 1))
    weights[i] = 0.0
    total = float(np.sum(weights))
    if total <= 0.0:
        raise DegenerateNormalizationError(
            f"kernel vanishes at every occurring rank around particle {i} (n={config.n})"
        )
    return weights / total, ranks


def transition_probs(config: Configuration, kernel: Kernel, i: int) -> np.ndarray:
    """Partner-choice probabilities for focal i: kernel at normalized ranks, normalized.

    Returns a length-n vector with entry i equal to 0.
    """
    return partner_distribution(config, kernel, i)[0]
