"""Event-driven simulation of the rank-interaction jump process.

A global exponential clock rings at rate n.  At each ring a focal particle is
chosen uniformly and adopts the velocity of a partner drawn from the
rank-based transition probabilities evaluated on the current (transported)
positions.  Between rings particles stream freely.  This is exact Gillespie
simulation: there is no time-discretization error anywhere in the particle
world.

For tiny frozen-position systems the exact law of the velocity labels is
available through a matrix exponential (`master_equation_law`), which serves
as the reference the simulator must reproduce.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .kernels import Kernel
from .ranks import Configuration, partner_distribution, transition_probs

_MAX_MASTER_STATES = 256


@dataclass(frozen=True)
class ProcessParams:
    """Driver settings for one trajectory of the jump process."""

    kernel: Kernel
    n: int
    horizon: float
    seed: int | None = None
    dimension: int = 1
    frozen_positions: bool = False

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"need at least 2 particles, got {self.n}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")


@dataclass
class Trajectory:
    """Realized jump chain: event log, requested snapshots, and the final state."""

    event_times: np.ndarray
    event_focal: np.ndarray
    event_partner: np.ndarray
    snapshots: dict[float, Configuration] = field(default_factory=dict)
    final: Configuration | None = None
    event_count: int = 0
    event_rank: np.ndarray | None = None


def categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Draw an index from a probability vector by inverse CDF.

    Zero-probability atoms are never returned (their cumulative segment has
    zero width, and boundary hits resolve past the flat run).
    """
    c = np.cumsum(probs)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(idx, len(probs) - 1)


def simulate(
    params: ProcessParams,
    initial: Configuration,
    snapshot_times: tuple[float, ...] = (),
    record_events: bool = True,
    record_ranks: bool = False,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Exact realization of the jump process up to the horizon.

    Snapshots are taken at the requested times by materializing the free
    streaming from the last event; they do not perturb the chain.  With
    ``frozen_positions`` the transport is skipped, so the transition matrix is
    constant and cached.
    """
    if initial.n != params.n:
        raise ValueError(f"initial configuration has n={initial.n}, params say {params.n}")
    if initial.d != params.dimension:
        raise ValueError(f"initial configuration has d={initial.d}, params say {params.dimension}")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    for s in snapshot_times:
        if not 0.0 <= s <= params.horizon:
            raise ValueError(f"snapshot time {s} outside [0, {params.horizon}]")

    n = params.n
    state = initial.copy()
    t = 0.0
    pending = sorted(snapshot_times)
    snapshots: dict[float, Configuration] = {}
    times: list[float] = []
    focals: list[int] = []
    partners: list[int] = []
    ranks_log: list[int] = []
    count = 0

    frozen_probs: np.ndarray | None = None
    frozen_ranks: np.ndarray | None = None
    if params.frozen_positions:
        pairs = [partner_distribution(state, params.kernel, i) for i in range(n)]
        frozen_probs = np.stack([p for p, _ in pairs])
        frozen_ranks = np.stack([r for _, r in pairs])

    def emit_snapshots(up_to: float) -> None:
        nonlocal pending
        while pending and pending[0] <= up_to:
            s = pending.pop(0)
            if params.frozen_positions:
                snapshots[s] = state.copy()
            else:
                snapshots[s] = state.transported(s - t)

    while True:
        gap = rng.exponential(1.0 / n)
        t_next = t + gap
        if t_next > params.horizon:
            emit_snapshots(params.horizon)
            if params.frozen_positions:
                final = state.copy()
            else:
                final = state.transported(params.horizon - t)
            break
        emit_snapshots(t_next)
        if not params.frozen_positions:
            state.transport_inplace(gap)
        t = t_next
        i = int(rng.integers(n))
        if frozen_probs is not None:
            probs, ranks = frozen_probs[i], frozen_ranks[i]
        else:
            probs, ranks = partner_distribution(state, params.kernel, i)
        j = categorical(rng, probs)
        state.velocities[i] = state.velocities[j]
        count += 1
        if record_events:
            times.append(t)
            focals.append(i)
            partners.append(j)
        if record_ranks:
            ranks_log.append(int(ranks[j]))

    return Trajectory(
        event_times=np.asarray(times),
        event_focal=np.asarray(focals, dtype=np.int64),
        event_partner=np.asarray(partners, dtype=np.int64),
        snapshots=snapshots,
        final=final,
        event_count=count,
        event_rank=np.asarray(ranks_log, dtype=np.int64) if record_ranks else None,
    )


# -- master-equation oracle (frozen positions, finite label alphabet) ---------


def label_states(n: int, alphabet: int) -> list[tuple[int, ...]]:
    """All velocity-label assignments, lexicographically ordered."""
    return list(itertools.product(range(alphabet), repeat=n))


def master_equation_law(
    config: Configuration, kernel: Kernel, labels0: np.ndarray, t: float, alphabet: int
) -> np.ndarray:
    """Exact law of the frozen-position label chain at time t.

    Builds the jump generator on the label state space (partner adoption
    i <- j at rate pi[i, j], positions fixed) and applies its matrix
    exponential to the initial point mass.  Refuses state spaces larger than
    256 to stay an honest brute-force oracle.
    """
    n = config.n
    labels0 = np.asarray(labels0, dtype=np.int64)
    if labels0.shape != (n,):
        raise ValueError("labels0 must assign one label per particle")
    if np.any(labels0 < 0) or np.any(labels0 >= alphabet):
        raise ValueError("labels0 outside the alphabet")
    if alphabet**n > _MAX_MASTER_STATES:
        raise ValueError(
            f"state space {alphabet}**{n} exceeds {_MAX_MASTER_STATES}; oracle refuses"
        )

    pi = np.stack([transition_probs(config, kernel, i) for i in range(n)])
    states = label_states(n, alphabet)
    index = {s: k for k, s in enumerate(states)}
    size = len(states)
    gen = np.zeros((size, size))
    for k, s in enumerate(states):
        for i in range(n):
            for j in range(n):
                if j == i or pi[i, j] == 0.0:
                    continue
                target = list(s)
                target[i] = s[j]
                kk = index[tuple(target)]
                if kk != k:
                    gen[k, kk] += pi[i, j]
                    gen[k, k] -= pi[i, j]

    p0 = np.zeros(size)
    p0[index[tuple(labels0)]] = 1.0
    return p0 @ expm(gen * t)


def frozen_label_trials(
    config: Configuration,
    kernel: Kernel,
    labels0: np.ndarray,
    t: float,
    trials: int,
    rng: np.random.Generator,
    alphabet: int,
) -> np.ndarray:
    """Monte-Carlo law of the frozen label chain, vectorized across trials.

    Distributionally identical to running `simulate` with frozen positions
    and reading off velocity labels: the event count is Poisson(n*t) and each
    event applies a uniform-focal, rank-weighted partner adoption.
    """
    n = config.n
    pi = np.stack([transition_probs(config, kernel, i) for i in range(n)])
    cum = np.cumsum(pi, axis=1)
    events = rng.poisson(n * t, size=trials)
    labels = np.tile(np.asarray(labels0, dtype=np.int64), (trials, 1))
    for step in range(int(events.max())):
        active = events > step
        focal = rng.integers(n, size=trials)
        u = rng.random(trials)
        partner = (u[:, None] < cum[focal]).argmax(axis=1)
        rows = np.nonzero(active)[0]
        labels[rows, focal[rows]] = labels[rows, partner[rows]]

    # the mixed-radix key of a label tuple equals its lexicographic state index
    counts = np.zeros(alphabet**n)
    keys = sum(labels[:, i] * alphabet ** (n - 1 - i) for i in range(n))
    uniq, cnt = np.unique(keys, return_counts=True)
    counts[uniq] = cnt
    return counts / trials


def empirical_marginal(
    config: Configuration, x_edges: np.ndarray, v_edges: np.ndarray
) -> np.ndarray:
    """Pooled one-particle histogram over (x, v) cells, normalized to total mass 1.

    Exchangeability of the particles justifies pooling all of them into a
    single histogram estimate of the one-particle marginal (d=1 only).
    """
    if config.d != 1:
        raise ValueError("phase-space histogram requires d=1")
    v = config.velocities[:, 0]
    if np.any(v < v_edges[0]) or np.any(v > v_edges[-1]):
        raise ValueError("velocities fall outside the histogram range")
    hist, _, _ = np.histogram2d(config.positions[:, 0], v, bins=[x_edges, v_edges])
    return hist / config.n


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance between two probability vectors (half L1)."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
