"""Coupled simulation of the particle system and its kinetic reference.

Two worlds share one event clock.  The Z world is the rank-interaction jump
process; the sigma world is a system of reference particles whose jump rates
come from ball masses of the limit spatial density instead of empirical
ranks.  At every event with focal particle i:

  * partner j is drawn from the Z-world rank probabilities pi_n(i, .), so the
    Z marginal is exact by construction, whatever happens on the sigma side;
  * with probability min(pi_n, pi_rho)/pi_n at the drawn partner both worlds
    adopt their own particle j's velocity (joint jump);
  * otherwise Z alone adopts v_j, and the sigma world completes its jump law:
    with the residual atom mass it adopts the velocity of a sigma-world
    partner drawn from (pi_rho - min)/residual, and with the leftover weight
    it draws a fresh velocity from the reference redistribution density at
    its own position (snapped to the velocity grid).

Pairs start identical (delta coupling).  A pair stays flagged as coupled only
while its two states are exactly equal; any one-sided velocity change
decouples it, and decoupling is absorbing because the positions then drift
apart under free streaming.  The average decoupled fraction is the estimator
of the total-variation distance between the one-particle marginal and the
kinetic solution, and the event bookkeeping exposes the error terms (rank vs
ball-mass discrepancies, residual-mass rescalings, law-of-large-numbers gaps)
that drive it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import torus
from .initial import VelocityLaw
from .kernels import Kernel, rate_normalization
from .kinetic import KineticSolution, MassFunction
from .particle import categorical, empirical_marginal
from .ranks import Configuration, partner_distribution

_RESIDUAL_TOL = -1e-12


def joint_rate(pi_particle: float, pi_reference: float) -> float:
    """Rate of the simultaneous jump: the minimum of the two marginal rates."""
    if pi_particle < 0 or pi_reference < 0:
        raise ValueError("rates must be nonnegative")
    return min(pi_particle, pi_reference)


def decoupling_bound(kernel: Kernel, n: int, t: float) -> float:
    """Proved upper bound exp(growth_constant * t) / sqrt(n - 1) for the mean decoupled fraction."""
    return math.exp(kernel.growth_constant * t) / math.sqrt(n - 1)


# -- reference dynamics ----------------------------------------------------------


class SolutionReference:
    """Kinetic reference backed by stored solver snapshots (d = 1).

    Ball masses and redistribution densities are evaluated on the snapshot
    linearly interpolated to the event time.  The spatial edge CDFs of all
    snapshots are precomputed once: mass queries then cost a single O(nx)
    interpolation per event.
    """

    def __init__(self, solution: KineticSolution, kernel: Kernel):
        self.solution = solution
        self.kernel = kernel
        self.grid = solution.grid
        self.d = 1
        dx = self.grid.dx
        self._edge_cdfs = np.stack(
            [
                np.concatenate([[0.0], np.cumsum(snap.values.sum(axis=1) * self.grid.dv) * dx])
                for snap in solution.snapshots
            ]
        )

    def mass_function(self, t: float) -> MassFunction:
        times = self.solution.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise ValueError(f"time {t} outside stored range [{times[0]}, {times[-1]}]")
        idx = int(np.searchsorted(times, t))
        if idx == 0:
            cdf = self._edge_cdfs[0]
        elif idx >= len(times):
            cdf = self._edge_cdfs[-1]
        else:
            w = (t - times[idx - 1]) / (times[idx] - times[idx - 1])
            cdf = (1.0 - w) * self._edge_cdfs[idx - 1] + w * self._edge_cdfs[idx]
        return MassFunction.from_edge_cdf(cdf, self.grid.dx)

    def ball_mass(self, t: float, center: np.ndarray, radii: np.ndarray) -> np.ndarray:
        mass_fn = self.mass_function(t)
        return mass_fn.ball_mass(np.full_like(radii, float(center[0])), radii)

    def fresh_velocity(self, t: float, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw from g(u) ~ sum_y K(m(center, dist)) f[y][u] dx, snapped to the v-grid."""
        grid = self.grid
        mass_fn = self.mass_function(t)
        dist = np.abs(grid.x_centers - float(center[0]))
        dist = np.minimum(dist, 1.0 - dist)
        weights = self.kernel(mass_fn.ball_mass(np.full_like(dist, float(center[0])), dist)) * grid.dx
        g = weights @ self.solution.values_at(t)
        cell = categorical(rng, g)
        return np.array([grid.v_centers[cell]])

    def cell_masses(self, t: float, x_edges: np.ndarray, v_edges: np.ndarray) -> np.ndarray:
        """Reference cell masses on a coarse histogram grid aligned with the solver grid."""
        values = self.values_masses(t)
        return _aggregate_cells(values, self.grid, x_edges, v_edges)

    def values_masses(self, t: float) -> np.ndarray:
        return self.solution.values_at(t) * (self.grid.dx * self.grid.dv)


class UniformReference:
    """Exact reference for spatially uniform data: the solution is stationary.

    With rho identically 1 the ball mass is the ball volume and the
    redistribution density is the initial velocity law itself, so this
    reference has no grid or time-stepping error.  Works in d = 1 and d = 2.
    """

    def __init__(self, velocity_law: VelocityLaw, d: int):
        self.velocity_law = velocity_law
        self.d = d

    def ball_mass(self, t: float, center: np.ndarray, radii: np.ndarray) -> np.ndarray:
        return torus.uniform_ball_mass(radii, self.d)

    def fresh_velocity(self, t: float, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = categorical(rng, self.velocity_law.weights)
        return self.velocity_law.atoms[idx]

    def cell_masses(self, t: float, x_edges: np.ndarray, v_edges: np.ndarray) -> np.ndarray:
        if self.d != 1:
            raise ValueError("histogram comparison is one-dimensional")
        pos = np.diff(x_edges)
        vel = self.velocity_law.cell_masses(v_edges)
        return np.outer(pos, vel)


def _aggregate_cells(
    masses: np.ndarray, grid, x_edges: np.ndarray, v_edges: np.ndarray
) -> np.ndarray:
    """Sum fine-grid cell masses into coarse bins whose edges sit on the fine edges."""
    x_idx = np.round(x_edges * grid.nx).astype(int)
    v_idx = np.round((v_edges + grid.v_max) / grid.dv).astype(int)
    if np.any(np.abs(x_idx * grid.dx - x_edges) > 1e-9) or np.any(
        np.abs(v_idx * grid.dv - grid.v_max - v_edges) > 1e-9
    ):
        raise ValueError("histogram edges must align with the solver grid")
    out = np.zeros((len(x_edges) - 1, len(v_edges) - 1))
    for a in range(out.shape[0]):
        for b in range(out.shape[1]):
            out[a, b] = masses[x_idx[a] : x_idx[a + 1], v_idx[b] : v_idx[b + 1]].sum()
    return out


# -- coupled state and diagnostics -----------------------------------------------


@dataclass
class CoupledState:
    """Paired configurations plus the per-pair identity flags."""

    z: Configuration
    sigma: Configuration
    coupled: np.ndarray
    t: float = 0.0

    @classmethod
    def delta(cls, initial: Configuration) -> "CoupledState":
        """Start both worlds from the same configuration with all pairs coupled."""
        return cls(z=initial.copy(), sigma=initial.copy(), coupled=np.ones(initial.n, dtype=bool))

    def transport(self, dt: float) -> None:
        self.z.transport_inplace(dt)
        self.sigma.transport_inplace(dt)
        self.t += dt

    def decoupled_fraction(self) -> float:
        return float(np.count_nonzero(~self.coupled)) / self.coupled.size


@dataclass
class CouplingDiagnostics:
    """Event classification counts and running error-term magnitudes."""

    joint: int = 0
    z_only: int = 0
    sigma_atom: int = 0
    fresh_draw: int = 0
    rescale_sum: float = 0.0
    rescale_events: int = 0
    row_dev_sum: float = 0.0
    partner_ranks: list = field(default_factory=list)

    @property
    def events(self) -> int:
        return self.joint + self.z_only

    def rescale_mean(self) -> float:
        return self.rescale_sum / self.events if self.events else 0.0

    def row_dev_mean(self) -> float:
        return self.row_dev_sum / self.events if self.events else 0.0


def coupled_event(
    state: CoupledState,
    kernel: Kernel,
    reference,
    alpha: float,
    rng: np.random.Generator,
    diag: CouplingDiagnostics,
    record_ranks: bool = False,
) -> None:
    """One clock ring: joint maximal-coupling jump or one-sided completion.

    Transport to the event time is done by the caller; this routine only
    performs the jump and the bookkeeping.
    """
    n = state.z.n
    i = int(rng.integers(n))

    pi_n, ranks = partner_distribution(state.z, kernel, i)

    radii = torus.distances_from(state.sigma.positions, state.sigma.positions[i])
    pi_rho = alpha * np.asarray(kernel(reference.ball_mass(state.t, state.sigma.positions[i], radii)))
    pi_rho[i] = 0.0
    diag.row_dev_sum += abs(float(pi_rho.sum()) - 1.0)

    lam = np.minimum(pi_n, pi_rho)
    big_lambda = float(lam.sum())

    j = categorical(rng, pi_n)
    if record_ranks:
        diag.partner_ranks.append(int(ranks[j]))

    if rng.random() * pi_n[j] < lam[j]:
        # joint jump: both worlds adopt their particle j's velocity
        same = bool(np.array_equal(state.z.velocities[j], state.sigma.velocities[j]))
        state.z.velocities[i] = state.z.velocities[j]
        state.sigma.velocities[i] = state.sigma.velocities[j]
        state.coupled[i] = state.coupled[i] and same
        diag.joint += 1
        return

    # Z jumps alone; any sigma-side velocity change decouples the pair
    state.z.velocities[i] = state.z.velocities[j]
    state.coupled[i] = False
    diag.z_only += 1

    residual = pi_rho - lam
    if residual.min() < _RESIDUAL_TOL:
        raise AssertionError(f"negative residual mass {residual.min()}")
    np.maximum(residual, 0.0, out=residual)
    resid_mass = float(residual.sum())
    available = 1.0 - big_lambda

    if resid_mass >= available:
        # sigma-side atoms exceed the remaining probability: rescale and log
        diag.rescale_sum += resid_mass - available
        diag.rescale_events += 1
        atom_prob = 1.0
    else:
        atom_prob = resid_mass / available if available > 0.0 else 0.0

    if resid_mass > 0.0 and rng.random() < atom_prob:
        jp = categorical(rng, residual)
        state.sigma.velocities[i] = state.sigma.velocities[jp]
        diag.sigma_atom += 1
    else:
        state.sigma.velocities[i] = reference.fresh_velocity(
            state.t, state.sigma.positions[i], rng
        )
        diag.fresh_draw += 1


# -- distance estimators ----------------------------------------------------------


def tv_estimate(
    config: Configuration,
    reference,
    t: float,
    x_edges: np.ndarray,
    v_edges: np.ndarray,
) -> float:
    """Half-L1 distance between the pooled particle histogram and the reference masses."""
    hist = empirical_marginal(config, x_edges, v_edges)
    ref = reference.cell_masses(t, x_edges, v_edges)
    return 0.5 * float(np.abs(hist - ref).sum())


def lln_diagnostic(config: Configuration, reference, t: float, focal: int = 0) -> float:
    """Mean gap between empirical and reference ball masses at the focal particle.

    Averages |M_emp(B_r(y_focal)) - M_rho(B_r(y_focal))| over the balls with
    radii reaching each other particle; for i.i.d. samples of the reference
    spatial density this decays like 1/sqrt(n-1).
    """
    n = config.n
    radii = torus.distances_from(config.positions, config.positions[focal])
    others = np.delete(np.arange(n), focal)
    r = radii[others]
    sorted_r = np.sort(r)
    empirical = np.searchsorted(sorted_r, r, side="right") / (n - 1)
    ref = reference.ball_mass(t, config.positions[focal], r)
    return float(np.mean(np.abs(empirical - ref)))


# -- marginal exactness report ------------------------------------------------------


@dataclass
class MarginalReport:
    """Two-sample comparison between the coupled Z world and the standalone process."""

    total_events: int
    rank_pvalue: float
    velocity_pvalues: dict[float, float]
    event_count_pvalue: float

    def passed(self, significance: float = 0.01) -> bool:
        return (
            self.rank_pvalue > significance
            and all(p > significance for p in self.velocity_pvalues.values())
            and self.event_count_pvalue > significance
        )


def z_marginal_report(
    kernel: Kernel,
    law,
    n: int,
    horizon: float,
    trials: int,
    reference,
    seed: int,
    probe_times: tuple[float, ...] = (0.5, 1.0),
    tail_rank: int | None = None,
) -> MarginalReport:
    """Distributional comparison of the coupled Z component with the plain simulator.

    The Z marginal is exact by construction (the partner is drawn from the
    rank probabilities before any coupling decision), so this is a check of
    the implementation: partner-rank frequencies, pooled velocity signs at
    the probe times, and per-trial event counts are compared by two-sample
    tests.  Ranks past ``tail_rank`` are merged into one bucket because the
    kernel weight vanishes toward the top rank.
    """
    from scipy import stats

    from .initial import sample_initial
    from .particle import ProcessParams, simulate

    coupled_ranks, standalone_ranks = [], []
    coupled_counts, standalone_counts = [], []
    coupled_plus = {t: 0 for t in probe_times}
    standalone_plus = {t: 0 for t in probe_times}
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, 0)))
        initial = sample_initial(law, n, np.random.SeedSequence(entropy=seed, spawn_key=(trial, 1)))
        rec = run_coupled_trial(
            kernel, reference, initial, horizon, rng, probe_times,
            record_ranks=True, record_z_snapshots=True,
        )
        coupled_ranks.append(rec.partner_ranks)
        coupled_counts.append(rec.event_count)
        for t in probe_times:
            coupled_plus[t] += int(np.sum(rec.z_snapshots[t].velocities > 0))

        params = ProcessParams(kernel=kernel, n=n, horizon=horizon)
        rng2 = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, 2)))
        traj = simulate(
            params,
            sample_initial(law, n, np.random.SeedSequence(entropy=seed, spawn_key=(trial, 3))),
            snapshot_times=probe_times,
            record_events=False,
            record_ranks=True,
            rng=rng2,
        )
        standalone_ranks.append(traj.event_rank)
        standalone_counts.append(traj.event_count)
        for t in probe_times:
            standalone_plus[t] += int(np.sum(traj.snapshots[t].velocities > 0))

    a = np.bincount(np.concatenate(coupled_ranks), minlength=n)[1:]
    b = np.bincount(np.concatenate(standalone_ranks), minlength=n)[1:]
    cut = tail_rank if tail_rank is not None else max(2, int(0.8 * (n - 1)))
    table = np.stack(
        [np.concatenate([a[:cut], [a[cut:].sum()]]), np.concatenate([b[:cut], [b[cut:].sum()]])]
    )
    rank_pvalue = float(stats.chi2_contingency(table).pvalue)

    pooled = trials * n
    velocity_pvalues = {}
    for t in probe_times:
        cont = np.array(
            [
                [coupled_plus[t], pooled - coupled_plus[t]],
                [standalone_plus[t], pooled - standalone_plus[t]],
            ]
        )
        velocity_pvalues[t] = float(stats.chi2_contingency(cont).pvalue)

    count_pvalue = float(stats.mannwhitneyu(coupled_counts, standalone_counts).pvalue)
    return MarginalReport(
        total_events=int(sum(coupled_counts) + sum(standalone_counts)),
        rank_pvalue=rank_pvalue,
        velocity_pvalues=velocity_pvalues,
        event_count_pvalue=count_pvalue,
    )


# -- trial runner -----------------------------------------------------------------


@dataclass
class TrialRecord:
    """Snapshot time series of one coupled trajectory."""

    times: np.ndarray
    d_n: np.ndarray
    tv: np.ndarray
    lln: np.ndarray
    joint: np.ndarray
    z_only: np.ndarray
    sigma_only: np.ndarray
    fresh: np.ndarray
    rescale_mean: np.ndarray
    row_dev_mean: np.ndarray
    event_count: int
    partner_ranks: np.ndarray
    final_z: Configuration
    final_sigma: Configuration
    z_snapshots: dict[float, Configuration] | None = None


def run_coupled_trial(
    kernel: Kernel,
    reference,
    initial: Configuration,
    horizon: float,
    rng: np.random.Generator,
    snapshot_times: tuple[float, ...],
    tv_bins_x: int = 0,
    v_edges: np.ndarray | None = None,
    record_ranks: bool = False,
    record_z_snapshots: bool = False,
) -> TrialRecord:
    """One coupled trajectory from the delta coupling, sampled at snapshot times."""
    n = initial.n
    alpha = rate_normalization(kernel, n)
    state = CoupledState.delta(initial)
    diag = CouplingDiagnostics()
    pending = sorted(snapshot_times)
    for s in pending:
        if not 0.0 <= s <= horizon:
            raise ValueError(f"snapshot time {s} outside [0, {horizon}]")

    x_edges = np.linspace(0.0, 1.0, tv_bins_x + 1) if tv_bins_x else None

    rows: list[tuple] = []
    z_snapshots: dict[float, Configuration] = {}

    def snap(s: float) -> None:
        z_now = state.z.transported(s - state.t)
        sigma_now = state.sigma.transported(s - state.t)
        if record_z_snapshots:
            z_snapshots[s] = z_now
        tv = (
            tv_estimate(z_now, reference, s, x_edges, v_edges)
            if x_edges is not None
            else float("nan")
        )
        rows.append(
            (
                s,
                state.decoupled_fraction(),
                tv,
                lln_diagnostic(sigma_now, reference, s),
                diag.joint,
                diag.z_only,
                diag.sigma_atom,
                diag.fresh_draw,
                diag.rescale_mean(),
                diag.row_dev_mean(),
            )
        )

    t = 0.0
    while True:
        gap = rng.exponential(1.0 / n)
        t_next = t + gap
        while pending and pending[0] <= min(t_next, horizon):
            snap(pending.pop(0))
        if t_next > horizon:
            state.transport(horizon - t)
            break
        state.transport(gap)
        t = t_next
        coupled_event(state, kernel, reference, alpha, rng, diag, record_ranks=record_ranks)

    cols = list(zip(*rows)) if rows else [[] for _ in range(10)]
    return TrialRecord(
        times=np.asarray(cols[0]),
        d_n=np.asarray(cols[1]),
        tv=np.asarray(cols[2]),
        lln=np.asarray(cols[3]),
        joint=np.asarray(cols[4], dtype=np.int64),
        z_only=np.asarray(cols[5], dtype=np.int64),
        sigma_only=np.asarray(cols[6], dtype=np.int64),
        fresh=np.asarray(cols[7], dtype=np.int64),
        rescale_mean=np.asarray(cols[8]),
        row_dev_mean=np.asarray(cols[9]),
        event_count=diag.events,
        partner_ranks=np.asarray(diag.partner_ranks, dtype=np.int64),
        final_z=state.z,
        final_sigma=state.sigma,
        z_snapshots=z_snapshots if record_z_snapshots else None,
    )
