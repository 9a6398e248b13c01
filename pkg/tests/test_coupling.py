import numpy as np
import pytest
from scipy import stats

from topolab.coupling import (
    CoupledState,
    CouplingDiagnostics,
    SolutionReference,
    UniformReference,
    coupled_event,
    decoupling_bound,
    joint_rate,
    lln_diagnostic,
    run_coupled_trial,
    tv_estimate,
)
from topolab.initial import InitialLaw, PositionLaw, VelocityLaw, sample_initial
from topolab.kernels import Kernel, rate_normalization
from topolab.kinetic import PhaseGrid, initial_density, solve
from topolab.particle import ProcessParams, simulate
from topolab.ranks import Configuration

V_EDGES = PhaseGrid(nx=8, nv=5, v_max=1.25).v_edges


def uniform_law() -> InitialLaw:
    return InitialLaw((PositionLaw.uniform(),), VelocityLaw.two_point())


def kinetic_reference(kernel, horizon=1.0, nx=128, amplitude=0.0):
    pos = PositionLaw.cosine(amplitude) if amplitude else PositionLaw.uniform()
    law = InitialLaw((pos,), VelocityLaw.two_point())
    grid = PhaseGrid(nx=nx, nv=5, v_max=1.25)
    times = tuple(np.round(np.arange(0, horizon + 1e-12, 0.02), 10))
    sol = solve(initial_density(law, grid), kernel, horizon, 0.01, times)
    return SolutionReference(sol, kernel)


def test_joint_rate_is_minimum():
    assert joint_rate(0.4, 0.25) == 0.25
    assert joint_rate(0.3, 0.3) == 0.3
    with pytest.raises(ValueError):
        joint_rate(-0.1, 0.2)


def test_decoupling_bound_values():
    assert decoupling_bound(Kernel.uniform(), 65, 1.0) == pytest.approx(1.0 / 8.0)
    assert decoupling_bound(Kernel.linear(), 2, 0.0) == 1.0


def test_flat_kernel_every_event_joint():
    # K = 1 makes both rate vectors identical, so pairs never decouple
    kernel = Kernel.uniform()
    initial = sample_initial(uniform_law(), 32, 5)
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    rng = np.random.default_rng(0)
    record = run_coupled_trial(kernel, ref, initial, 2.0, rng, snapshot_times=(1.0, 2.0))
    assert record.z_only[-1] == 0
    assert record.joint[-1] == record.event_count
    np.testing.assert_array_equal(record.d_n, 0.0)
    np.testing.assert_array_equal(record.final_z.velocities, record.final_sigma.velocities)


def test_lattice_construction_suppresses_one_sided_jumps():
    # particles on a half-arc lattice with spacing 1/(2(n-1)): the uniform
    # ball mass at the k-th neighbor distance never exceeds the normalized
    # rank, so the joint rate saturates at pi_n and every event is joint
    n = 64
    positions = np.arange(n) / (2.0 * (n - 1))
    initial = Configuration(positions, np.zeros(n))
    kernel = Kernel.linear()
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    alpha = rate_normalization(kernel, n)
    rng = np.random.default_rng(3)
    state = CoupledState.delta(initial)
    diag = CouplingDiagnostics()
    for _ in range(500):
        coupled_event(state, kernel, ref, alpha, rng, diag)
    assert diag.z_only == 0
    assert diag.joint == 500
    assert state.decoupled_fraction() == 0.0


def test_z_only_jump_decouples_and_is_absorbing():
    kernel = Kernel.linear()
    initial = sample_initial(uniform_law(), 16, 9)
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    rng = np.random.default_rng(11)
    record = run_coupled_trial(
        kernel, ref, initial, 4.0, rng, snapshot_times=tuple(np.linspace(0.25, 4.0, 16))
    )
    assert record.z_only[-1] > 0
    # decoupled fraction is non-decreasing (absorbing flags)
    assert np.all(np.diff(record.d_n) >= 0)
    assert record.d_n[0] >= 0.0
    # event bookkeeping: joint + z_only = all events, and the sigma-side
    # completions split z_only into atom adoptions and fresh draws
    assert record.joint[-1] + record.z_only[-1] == record.event_count
    assert record.sigma_only[-1] + record.fresh[-1] == record.z_only[-1]


def test_initial_delta_coupling_has_zero_distance():
    initial = sample_initial(uniform_law(), 8, 1)
    state = CoupledState.delta(initial)
    assert state.decoupled_fraction() == 0.0
    np.testing.assert_array_equal(state.z.positions, state.sigma.positions)


def test_residual_probabilities_sane_per_event():
    # direct check of the per-event split: rates nonnegative, residual
    # nonnegative, and the sigma branch probabilities sum to one
    kernel = Kernel.linear()
    n = 64
    initial = sample_initial(uniform_law(), n, 21)
    ref = kinetic_reference(kernel)
    alpha = rate_normalization(kernel, n)
    state = CoupledState.delta(initial)
    rng = np.random.default_rng(2)
    from topolab import torus
    from topolab.ranks import partner_distribution

    for _ in range(200):
        gap = rng.exponential(1.0 / n)
        if state.t + gap > 0.95:
            break
        state.transport(gap)
        i = int(rng.integers(n))
        pi_n, _ = partner_distribution(state.z, kernel, i)
        radii = torus.distances_from(state.sigma.positions, state.sigma.positions[i])
        pi_rho = alpha * np.asarray(kernel(ref.ball_mass(state.t, state.sigma.positions[i], radii)))
        pi_rho[i] = 0.0
        lam = np.minimum(pi_n, pi_rho)
        assert np.all(lam >= 0)
        assert np.all(pi_rho - lam >= -1e-12)
        assert pi_n.sum() == pytest.approx(1.0, abs=1e-12)
        big = lam.sum()
        resid = float(np.maximum(pi_rho - lam, 0).sum())
        atom = min(resid, 1.0 - big)
        fresh = max(1.0 - big - resid, 0.0)
        assert big + atom + fresh == pytest.approx(1.0, abs=1e-12)


def test_tv_estimate_identical_and_disjoint():
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    x_edges = np.linspace(0, 1, 9)
    # identical: particles exactly at the uniform-product cell masses is not
    # constructible, but the reference against itself is zero by definition
    masses = ref.cell_masses(0.0, x_edges, V_EDGES)
    assert 0.5 * np.abs(masses - masses).sum() == 0.0
    # disjoint supports: all particles at +1 velocity vs a reference at -1
    config = Configuration(np.linspace(0, 1, 50, endpoint=False), np.full(50, 1.0))
    one_sided = UniformReference(
        VelocityLaw.discrete([[-1.0]], [1.0]), d=1
    )
    assert tv_estimate(config, one_sided, 0.0, x_edges, V_EDGES) == pytest.approx(1.0)


def test_lln_diagnostic_quantile_construction():
    # reference-world particles at the quantiles of rho: the empirical mass
    # tracks the true mass within one quantile spacing
    kernel = Kernel.linear()
    ref = kinetic_reference(kernel, amplitude=0.3)
    nx = ref.grid.nx
    n = 2 * nx + 1
    law = PositionLaw.cosine(0.3)
    u = (np.arange(n - 1) + 0.5) / (n - 1)
    lo, hi = np.zeros(n - 1), np.ones(n - 1)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = law.cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    quantiles = 0.5 * (lo + hi)
    positions = np.concatenate([[0.37], quantiles])
    config = Configuration(positions, np.zeros(n))
    assert lln_diagnostic(config, ref, 0.0) <= 1.0 / nx


def test_lln_diagnostic_two_particles_bounds():
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    config = Configuration(np.array([0.1, 0.4]), np.zeros(2))
    val = lln_diagnostic(config, ref, 0.0)
    assert 0.0 <= val <= 1.0


def test_lln_diagnostic_iid_rate():
    # slope of log mean diagnostic against log(n-1) near -1/2 for i.i.d. samples
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    rng = np.random.default_rng(8)
    ns = [64, 256, 1024]
    means = []
    for n in ns:
        vals = [
            lln_diagnostic(
                Configuration(rng.uniform(0, 1, n), np.zeros(n)), ref, 0.0
            )
            for _ in range(200)
        ]
        means.append(np.mean(vals))
    slope = np.polyfit(np.log(np.asarray(ns) - 1.0), np.log(means), 1)[0]
    assert -0.65 < slope < -0.35


def test_two_dimensional_coupling_runs():
    kernel = Kernel.linear()
    law = InitialLaw((PositionLaw.uniform(), PositionLaw.uniform()), VelocityLaw.four_point())
    initial = sample_initial(law, 32, 13)
    ref = UniformReference(VelocityLaw.four_point(), d=2)
    rng = np.random.default_rng(4)
    record = run_coupled_trial(kernel, ref, initial, 1.0, rng, snapshot_times=(0.5, 1.0))
    assert record.event_count > 0
    assert np.all(np.diff(record.d_n) >= 0)
    assert 0.0 <= record.d_n[-1] <= 1.0


def test_coupled_flags_imply_exact_equality():
    kernel = Kernel.linear()
    initial = sample_initial(uniform_law(), 48, 17)
    ref = kinetic_reference(kernel)
    rng = np.random.default_rng(5)
    alpha = rate_normalization(kernel, 48)
    state = CoupledState.delta(initial)
    diag = CouplingDiagnostics()
    for _ in range(300):
        gap = rng.exponential(1.0 / 48)
        if state.t + gap > 0.98:
            break
        state.transport(gap)
        coupled_event(state, kernel, ref, alpha, rng, diag)
        still = state.coupled
        np.testing.assert_array_equal(
            state.z.positions[still], state.sigma.positions[still]
        )
        np.testing.assert_array_equal(
            state.z.velocities[still], state.sigma.velocities[still]
        )


def test_two_particle_consensus_probability_analytic():
    # with one partner the first event forces consensus, so the initial
    # velocity pair survives to time t with probability exactly e^{-2t}
    kernel = Kernel.uniform()
    ref = UniformReference(VelocityLaw.two_point(), d=1)
    t_probe, trials = 0.7, 3000
    survived = 0
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=37, spawn_key=(trial,)))
        initial = Configuration(np.array([0.2, 0.6]), np.array([-1.0, 1.0]))
        rec = run_coupled_trial(kernel, ref, initial, t_probe, rng, snapshot_times=())
        survived += int(rec.final_z.velocities[0, 0] != rec.final_z.velocities[1, 0])
    expected = np.exp(-2 * t_probe)
    stderr = np.sqrt(expected * (1 - expected) / trials)
    assert abs(survived / trials - expected) < 3.5 * stderr


def test_z_marginal_matches_standalone_rank_frequencies():
    # the partner-rank law of the coupled Z world equals the standalone law
    kernel = Kernel.linear()
    n, horizon, trials = 16, 1.0, 400
    law = uniform_law()
    ref = UniformReference(VelocityLaw.two_point(), d=1)

    coupled_ranks = []
    standalone_ranks = []
    for trial in range(trials):
        initial = sample_initial(law, n, 1000 + trial)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=77, spawn_key=(trial,)))
        rec = run_coupled_trial(
            kernel, ref, initial, horizon, rng, snapshot_times=(), record_ranks=True
        )
        coupled_ranks.append(rec.partner_ranks)
        params = ProcessParams(kernel=kernel, n=n, horizon=horizon, seed=None)
        rng2 = np.random.default_rng(np.random.SeedSequence(entropy=78, spawn_key=(trial,)))
        traj = simulate(
            params, sample_initial(law, n, 5000 + trial), record_events=False,
            record_ranks=True, rng=rng2,
        )
        standalone_ranks.append(traj.event_rank)

    a = np.bincount(np.concatenate(coupled_ranks), minlength=n)[1:]
    b = np.bincount(np.concatenate(standalone_ranks), minlength=n)[1:]
    keep = (a + b) > 0  # the top rank has kernel weight exactly 0
    res = stats.chi2_contingency(np.stack([a[keep], b[keep]]))
    assert res.pvalue > 0.01
