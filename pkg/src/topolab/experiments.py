"""Experiment configuration, trial orchestration, CSV schemas, and rate fitting.

A single JSON document configures every subcommand.  Runs are deterministic:
per-trial generator streams are spawned from (seed, n, trial), the kinetic
solution is computed once per content hash and cached on disk, and all
aggregation reduces in trial order, so results are byte-identical however
many workers are used.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coupling import SolutionReference, TrialRecord, decoupling_bound, run_coupled_trial
from .initial import InitialLaw, initial_law_from_json, sample_initial
from .kernels import Kernel
from .kinetic import (
    GridDensity,
    KineticSolution,
    PhaseGrid,
    initial_density,
    solve,
)
from .particle import ProcessParams, Trajectory, simulate

CONFIG_VERSION = 1
_TRIALS_SCHEMA = "topolab.trials.v1"
_AGGREGATE_SCHEMA = "topolab.aggregate.v1"
_EVENTS_SCHEMA = "topolab.events.v1"
_SNAPSHOTS_SCHEMA = "topolab.snapshots.v1"


class ConfigError(ValueError):
    """Raised for malformed experiment configurations (CLI exit code 2)."""


def _fmt(x: float) -> str:
    return format(x, ".12g")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see README for the JSON schema."""

    seed: int
    kernel: Kernel
    kernel_spec: dict
    initial: InitialLaw
    initial_spec: dict
    nx: int
    nv: int
    v_max: float
    dt: float
    snapshot_spacing: float
    n: int
    dimension: int
    horizon: float
    frozen_positions: bool
    snapshot_times: tuple[float, ...]
    tv_bins_x: int
    n_values: tuple[int, ...]
    trials: int
    fit: bool

    @classmethod
    def from_json(cls, text_or_dict: str | dict) -> "ExperimentConfig":
        try:
            spec = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        version = spec.get("version")
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r}, expected {CONFIG_VERSION}")
        try:
            kernel_spec = spec["kernel"]
            kernel = Kernel.from_json(kernel_spec)
            kernel.validate()
            initial_spec = spec["initial"]
            initial = initial_law_from_json(initial_spec)
            kin = spec.get("kinetic", {})
            system = spec.get("system", {})
            conv = spec.get("convergence", {})
            coupling = spec.get("coupling", {})
            config = cls(
                seed=int(spec.get("seed", 0)),
                kernel=kernel,
                kernel_spec=kernel_spec,
                initial=initial,
                initial_spec=initial_spec,
                nx=int(kin.get("nx", 512)),
                nv=int(kin.get("nv", 5)),
                v_max=float(kin.get("v_max", 1.25)),
                dt=float(kin.get("dt", 0.01)),
                snapshot_spacing=float(kin.get("snapshot_spacing", 0.02)),
                n=int(system.get("n", 64)),
                dimension=int(system.get("dimension", 1)),
                horizon=float(system.get("horizon", 1.0)),
                frozen_positions=bool(system.get("frozen_positions", False)),
                snapshot_times=tuple(float(t) for t in spec.get("snapshot_times", [])),
                tv_bins_x=int(coupling.get("tv_bins_x", 8)),
                n_values=tuple(int(v) for v in conv.get("n_values", [])),
                trials=int(conv.get("trials", 1)),
                fit=bool(conv.get("fit", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc
        config.validate()
        return config

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError(f"system.n must be >= 2, got {self.n}")
        if self.dimension not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.n_values:
            diffs = np.diff(self.n_values)
            if np.any(diffs <= 0) or min(self.n_values) < 2:
                raise ConfigError("n_values must be strictly increasing and >= 2")
        if self.snapshot_spacing > 10 * self.dt + 1e-12:
            raise ConfigError("snapshot_spacing must not exceed 10 * dt")
        for t in self.snapshot_times:
            if not 0.0 <= t <= self.horizon:
                raise ConfigError(f"snapshot time {t} outside [0, horizon]")
        if self.nx % self.tv_bins_x != 0:
            raise ConfigError("tv_bins_x must divide kinetic nx")
        if self.dimension == 1:
            grid = self.grid()
            centers = grid.v_centers
            for atom in self.initial.velocity.atoms[:, 0]:
                if np.min(np.abs(centers - atom)) > 1e-9:
                    raise ConfigError(
                        f"velocity atom {atom} is not a v-grid cell center; "
                        "choose nv/v_max so atoms sit on centers"
                    )

    def grid(self) -> PhaseGrid:
        return PhaseGrid(nx=self.nx, nv=self.nv, v_max=self.v_max)

    def kinetic_snapshot_times(self) -> tuple[float, ...]:
        count = int(round(self.horizon / self.snapshot_spacing))
        return tuple(np.round(np.arange(count + 1) * self.snapshot_spacing, 10))

    def default_snapshot_times(self) -> tuple[float, ...]:
        if self.snapshot_times:
            return self.snapshot_times
        return tuple(np.round(np.arange(1, 5) * self.horizon / 4, 10))

    def kinetic_cache_key(self) -> str:
        payload = json.dumps(
            {
                "kernel": self.kernel_spec,
                "initial": self.initial_spec,
                "nx": self.nx,
                "nv": self.nv,
                "v_max": self.v_max,
                "dt": self.dt,
                "spacing": self.snapshot_spacing,
                "horizon": self.horizon,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# -- kinetic solution with disk cache ---------------------------------------------


def kinetic_solution(config: ExperimentConfig, out_dir: Path | None) -> KineticSolution:
    """Solve (or load from cache) the kinetic equation for this configuration."""
    grid = config.grid()
    times = config.kinetic_snapshot_times()
    cache_path = None
    if out_dir is not None:
        cache_path = Path(out_dir) / "cache" / f"kinetic_{config.kinetic_cache_key()}.npz"
        if cache_path.exists():
            data = np.load(cache_path)
            snaps = [
                GridDensity(grid, data["values"][k], t=float(data["times"][k]))
                for k in range(len(data["times"]))
            ]
            return KineticSolution(grid, data["times"], snaps, drift_total=float(data["drift"]))
    f0 = initial_density(config.initial, grid)
    solution = solve(f0, config.kernel, config.horizon, config.dt, times)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            cache_path,
            times=solution.times,
            values=np.stack([s.values for s in solution.snapshots]),
            drift=solution.drift_total,
        )
    return solution


# -- coupled trial orchestration ---------------------------------------------------

_WORKER_CTX: dict = {}


def _run_one_trial(config: ExperimentConfig, reference, n: int, trial: int) -> TrialRecord:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(n, trial)))
    initial = sample_initial(
        config.initial, n, np.random.SeedSequence(entropy=config.seed, spawn_key=(n, trial, 1))
    )
    return run_coupled_trial(
        config.kernel,
        reference,
        initial,
        config.horizon,
        rng,
        config.default_snapshot_times(),
        tv_bins_x=config.tv_bins_x,
        v_edges=config.grid().v_edges,
    )


def _worker_init(config: ExperimentConfig, reference) -> None:
    _WORKER_CTX["config"] = config
    _WORKER_CTX["reference"] = reference


def _worker_run(args: tuple[int, int]) -> TrialRecord:
    n, trial = args
    return _run_one_trial(_WORKER_CTX["config"], _WORKER_CTX["reference"], n, trial)


def run_trials(
    config: ExperimentConfig, reference, n: int, threads: int = 1
) -> list[TrialRecord]:
    """All trials for one system size, in trial order regardless of worker count."""
    jobs = [(n, trial) for trial in range(config.trials)]
    if threads <= 1:
        return [_run_one_trial(config, reference, n, trial) for _, trial in jobs]
    with ProcessPoolExecutor(
        max_workers=threads, initializer=_worker_init, initargs=(config, reference)
    ) as pool:
        return list(pool.map(_worker_run, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


# -- rate fit -----------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log mean decoupled fraction against log(n-1)."""

    slope: float
    intercept: float
    r_squared: float
    ci_low: float
    ci_high: float
    n_values: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_values": list(self.n_values),
        }


def rate_fit(n_values: np.ndarray, means: np.ndarray) -> RateFit:
    """Fit the convergence exponent; needs at least 4 positive means."""
    n_values = np.asarray(n_values)
    means = np.asarray(means)
    usable = means > 0
    if np.count_nonzero(usable) < 4:
        raise ConfigError("rate fit needs at least 4 system sizes with positive means")
    x = np.log(n_values[usable] - 1.0)
    y = np.log(means[usable])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = len(x) - 2
    se = math.sqrt(ss_res / dof / float(np.sum((x - x.mean()) ** 2))) if dof > 0 else 0.0
    # ~95% normal interval; the fit is diagnostic, not inferential
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        ci_low=float(slope - 1.96 * se),
        ci_high=float(slope + 1.96 * se),
        n_values=tuple(int(v) for v in n_values[usable]),
    )


# -- CSV writers and readers --------------------------------------------------------


def write_trials_csv(path: Path, n: int, records: list[TrialRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={_TRIALS_SCHEMA} n={n}\n")
        fh.write("trial,t,d_n,tv_estimate,joint_count,z_only_count,sigma_only_count,lln_diag,rescale_mag\n")
        for trial, rec in enumerate(records):
            for k in range(len(rec.times)):
                fh.write(
                    ",".join(
                        [
                            str(trial),
                            _fmt(rec.times[k]),
                            _fmt(rec.d_n[k]),
                            _fmt(rec.tv[k]),
                            str(int(rec.joint[k])),
                            str(int(rec.z_only[k])),
                            str(int(rec.sigma_only[k])),
                            _fmt(rec.lln[k]),
                            _fmt(rec.rescale_mean[k]),
                        ]
                    )
                    + "\n"
                )


def read_trials_csv(path: Path) -> tuple[int, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        schema = fh.readline().strip()
        if not schema.startswith(f"# schema={_TRIALS_SCHEMA}"):
            raise ConfigError(f"unknown trials schema in {path}: {schema!r}")
        n = int(schema.split("n=")[1])
        header = fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header.count(",") != 8:
        raise ConfigError(f"unexpected trials header in {path}")
    return n, data


def write_aggregate_csv(path: Path, rows: list[tuple]) -> None:
    """Rows: (n, t, mean d_n, stderr, bound)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={_AGGREGATE_SCHEMA}\n")
        fh.write("n,t,mean_d_n,stderr,bound\n")
        for n, t, mean, stderr, bound in rows:
            fh.write(
                f"{n},{_fmt(t)},{_fmt(mean)},{_fmt(stderr)},{_fmt(bound)}\n"
            )


def read_aggregate_csv(path: Path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        schema = fh.readline().strip()
        if schema != f"# schema={_AGGREGATE_SCHEMA}":
            raise ConfigError(f"unknown aggregate schema in {path}: {schema!r}")
        fh.readline()
        return np.loadtxt(fh, delimiter=",", ndmin=2)


def write_events_csv(path: Path, trajectory: Trajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={_EVENTS_SCHEMA}\n")
        fh.write("t,i,j\n")
        for t, i, j in zip(
            trajectory.event_times, trajectory.event_focal, trajectory.event_partner
        ):
            fh.write(f"{_fmt(t)},{i},{j}\n")


def write_snapshots_csv(path: Path, trajectory: Trajectory, dimension: int) -> None:
    cols = [f"x{a}" for a in range(dimension)] + [f"v{a}" for a in range(dimension)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={_SNAPSHOTS_SCHEMA}\n")
        fh.write("t,particle," + ",".join(cols) + "\n")
        for t in sorted(trajectory.snapshots):
            snap = trajectory.snapshots[t]
            for p in range(snap.n):
                vals = list(snap.positions[p]) + list(snap.velocities[p])
                fh.write(f"{_fmt(t)},{p}," + ",".join(_fmt(v) for v in vals) + "\n")


# -- full convergence study ----------------------------------------------------------


@dataclass
class ConvergenceResult:
    aggregate_rows: list[tuple]
    fit: RateFit | None
    trial_files: list[Path]
    aggregate_file: Path
    fit_file: Path | None


def run_convergence(
    config: ExperimentConfig, out_dir: Path, threads: int = 1
) -> ConvergenceResult:
    """Coupled trials for every system size against one shared kinetic solution."""
    if not config.n_values:
        raise ConfigError("convergence study needs convergence.n_values")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solution = kinetic_solution(config, out_dir)
    reference = SolutionReference(solution, config.kernel)
    snapshot_times = config.default_snapshot_times()

    aggregate_rows: list[tuple] = []
    trial_files: list[Path] = []
    final_means: list[float] = []
    for n in config.n_values:
        records = run_trials(config, reference, n, threads=threads)
        path = out_dir / f"trials_n{n}.csv"
        write_trials_csv(path, n, records)
        trial_files.append(path)
        d_matrix = np.stack([rec.d_n for rec in records])
        for k, t in enumerate(snapshot_times):
            col = d_matrix[:, k]
            mean = float(col.mean())
            stderr = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0
            aggregate_rows.append((n, t, mean, stderr, decoupling_bound(config.kernel, n, t)))
        final_means.append(float(d_matrix[:, -1].mean()))

    aggregate_file = out_dir / "aggregate.csv"
    write_aggregate_csv(aggregate_file, aggregate_rows)

    fit = None
    fit_file = None
    if config.fit:
        fit = rate_fit(np.asarray(config.n_values), np.asarray(final_means))
        fit_file = out_dir / "ratefit.json"
        with open(fit_file, "w", encoding="utf-8") as fh:
            json.dump(fit.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return ConvergenceResult(aggregate_rows, fit, trial_files, aggregate_file, fit_file)


# -- single runs for the CLI ----------------------------------------------------------


def run_particle_simulation(config: ExperimentConfig, out_dir: Path) -> Trajectory:
    params = ProcessParams(
        kernel=config.kernel,
        n=config.n,
        horizon=config.horizon,
        seed=None,
        dimension=config.dimension,
        frozen_positions=config.frozen_positions,
    )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0,)))
    initial = sample_initial(
        config.initial, config.n, np.random.SeedSequence(entropy=config.seed, spawn_key=(1,))
    )
    trajectory = simulate(
        params, initial, snapshot_times=config.default_snapshot_times(), rng=rng
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_events_csv(out_dir / "events.csv", trajectory)
    write_snapshots_csv(out_dir / "snapshots.csv", trajectory, config.dimension)
    return trajectory


def run_single_coupled(config: ExperimentConfig, out_dir: Path) -> TrialRecord:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solution = kinetic_solution(config, out_dir)
    reference = SolutionReference(solution, config.kernel)
    record = _run_one_trial(config, reference, config.n, 0)
    write_trials_csv(out_dir / f"trials_n{config.n}.csv", config.n, [record])
    return record
