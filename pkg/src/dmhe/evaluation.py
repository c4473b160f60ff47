"""Monte Carlo harness, RMSE metrics, horizon sweeps, and timing reports.

All modes within one comparison consume identical disturbance realizations:
the simulation depends only on the model and the seeded noise specification,
never on the estimator mode. Runs are seeded independently from the master
seed and aggregated in fixed run-index order, so summaries are deterministic
for a given master seed regardless of execution interleaving.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conditions import ConditionReport
from .coordinator import EstimationSchedule, run_trajectory
from .dmhe1 import (build_iteration_matrices, check_error_stability,
                    check_iteration_convergence)
from .dmhe2 import check_dmhe2_convergence, check_dmhe2_stability
from .errors import DimensionMismatchError, EstimationError
from .simulator import NoiseSpec, simulate


def condition_report(derived):
    """All four certificates for one configuration."""
    matrices = build_iteration_matrices(derived)
    return ConditionReport(entries=(
        check_iteration_convergence(matrices),
        check_error_stability(derived),
        check_dmhe2_convergence(derived),
        check_dmhe2_stability(derived),
    ))


def rmse_at(estimates, truths):
    """Root mean square error over subsystems at one instant.

    ``sqrt(sum_j ||estimate_j - truth_j||^2 / n)`` with ``n`` the number of
    subsystems; every subsystem must be present in both mappings.
    """
    if set(estimates) != set(truths):
        missing = set(truths).symmetric_difference(estimates)
        raise DimensionMismatchError(f"subsystems missing from RMSE inputs: {sorted(missing)}")
    if not estimates:
        raise DimensionMismatchError("RMSE of an empty subsystem set")
    total = 0.0
    for i, est in estimates.items():
        diff = np.asarray(est, dtype=float) - np.asarray(truths[i], dtype=float)
        total += float(diff @ diff)
    return float(np.sqrt(total / len(estimates)))


@dataclass(frozen=True)
class RunSummary:
    """Aggregated Monte Carlo results for one configuration."""

    mode: str
    horizon: int
    runs: int
    rmse_trajectory_scaled: np.ndarray
    rmse_trajectory_physical: np.ndarray
    time_mean_rmse_scaled: float
    time_mean_rmse_physical: float
    per_run_means_scaled: np.ndarray
    condition_report: ConditionReport
    config_fingerprint: str
    master_seed: int
    timing: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mode": self.mode,
            "horizon": self.horizon,
            "runs": self.runs,
            "master_seed": self.master_seed,
            "config_fingerprint": self.config_fingerprint,
            "time_mean_rmse_scaled": float(self.time_mean_rmse_scaled),
            "time_mean_rmse_physical": float(self.time_mean_rmse_physical),
            "per_run_means_scaled": [float(v) for v in self.per_run_means_scaled],
            "rmse_trajectory_scaled": [float(v) for v in self.rmse_trajectory_scaled],
            "rmse_trajectory_physical": [float(v) for v in self.rmse_trajectory_physical],
            "certificates": self.condition_report.to_dict(),
            "timing": {k: float(v) for k, v in self.timing.items()},
        }


def run_seeds(master_seed, runs):
    """Independent, reproducible per-run seeds derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(runs)
    return [int(child.generate_state(1)[0]) for child in children]


def single_run(config, seed, derived=None, schedule=None):
    """One seeded simulation plus estimation pass.

    Returns ``(rmse_scaled, rmse_physical)`` arrays indexed by window-start
    instant, one entry per emitted record.
    """
    schedule = schedule or config.schedule
    derived = derived or config.derived(schedule.horizon)
    noise = NoiseSpec(sigma_w=config.noise.sigma_w, sigma_v=config.noise.sigma_v,
                      w_bound=config.noise.w_bound, v_bound=config.noise.v_bound,
                      seed=seed)
    sim = simulate(config.model, config.initial_state, None, noise, config.samples)
    records = run_trajectory(sim.outputs, None, schedule, derived,
                             config.initial_guess, boxes=config.boxes)
    p = config.model.partition
    scaling = config.bundle.scaling if config.bundle is not None else np.ones(config.model.n_states)
    rmse_scaled = np.empty(len(records))
    rmse_physical = np.empty(len(records))
    for idx, record in enumerate(records):
        truth = sim.states[record.k - schedule.horizon]
        estimates = {i: record.estimates[i] for i in p.ids}
        truths = {i: truth[p.state_slice(i)] for i in p.ids}
        rmse_scaled[idx] = rmse_at(estimates, truths)
        estimates_phys = {i: record.estimates[i] * scaling[p.state_slice(i)] for i in p.ids}
        truths_phys = {i: truth[p.state_slice(i)] * scaling[p.state_slice(i)] for i in p.ids}
        rmse_physical[idx] = rmse_at(estimates_phys, truths_phys)
    return rmse_scaled, rmse_physical


def monte_carlo(config, runs=None, workers=1, schedule=None):
    """Independent seeded runs, averaged into a :class:`RunSummary`.

    Deterministic for a given master seed: per-run seeds are spawned from it
    and aggregation follows run-index order. ``workers > 1`` evaluates runs
    concurrently without changing the result.
    """
    runs = config.runs if runs is None else int(runs)
    if runs < 1:
        raise EstimationError(f"runs must be >= 1, got {runs}")
    schedule = schedule or config.schedule
    derived = config.derived(schedule.horizon)
    seeds = run_seeds(config.noise.seed, runs)

    def one(index_seed):
        index, seed = index_seed
        try:
            return single_run(config, seed, derived=derived, schedule=schedule)
        except EstimationError as exc:
            raise EstimationError(f"Monte Carlo run {index} (seed {seed}) failed: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, enumerate(seeds)))
    else:
        results = [one(pair) for pair in enumerate(seeds)]

    scaled = np.vstack([r[0] for r in results])
    physical = np.vstack([r[1] for r in results])
    mean_scaled = scaled.mean(axis=0)
    mean_physical = physical.mean(axis=0)
    return RunSummary(
        mode=schedule.mode,
        horizon=schedule.horizon,
        runs=runs,
        rmse_trajectory_scaled=mean_scaled,
        rmse_trajectory_physical=mean_physical,
        time_mean_rmse_scaled=float(mean_scaled.mean()),
        time_mean_rmse_physical=float(mean_physical.mean()),
        per_run_means_scaled=scaled.mean(axis=1),
        condition_report=condition_report(derived),
        config_fingerprint=config.fingerprint(),
        master_seed=config.noise.seed,
    )


def horizon_sweep(config, horizons=None, runs=None, workers=1):
    """One Monte Carlo summary per horizon, identical seeds per run index."""
    horizons = config.horizons if horizons is None else tuple(horizons)
    summaries = []
    for N in horizons:
        schedule = EstimationSchedule(horizon=N,
                                      iterations=config.schedule.iterations,
                                      mode=config.schedule.mode)
        summaries.append(monte_carlo(config, runs=runs, workers=workers,
                                     schedule=schedule))
    return summaries


def noise_sweep(config, sigmas=None, runs=None, workers=1):
    """One Monte Carlo summary per disturbance magnitude.

    Returns ``[(sigma_w, RunSummary), ...]``; run seeds are identical across
    magnitudes, so differences reflect the noise level alone.
    """
    sigmas = config.sigma_sweep if sigmas is None else tuple(sigmas)
    results = []
    for sigma in sigmas:
        bumped = config.with_noise(sigma_w=float(sigma))
        results.append((float(sigma),
                        monte_carlo(bumped, runs=runs, workers=workers)))
    return results


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock statistics per estimator execution, per mode and horizon.

    ``stats[(mode, N)]`` holds mean/max seconds over every local-estimator
    execution of one trajectory. Empty when timing is disabled.
    """

    stats: dict = field(default_factory=dict)

    def mean(self, mode, horizon):
        return self.stats[(mode, horizon)]["mean"]

    def median(self, mode, horizon):
        return self.stats[(mode, horizon)]["median"]

    def rows(self):
        header = ("mode", "horizon", "executions", "mean_seconds",
                  "median_seconds", "max_seconds")
        rows = [header]
        for (mode, N), entry in sorted(self.stats.items()):
            rows.append((mode, str(N), str(entry["count"]),
                         format(entry["mean"], ".17g"),
                         format(entry["median"], ".17g"),
                         format(entry["max"], ".17g")))
        return rows


def timing_report(config, modes=("dmhe1", "dmhe2"), horizons=None, samples=None):
    """Measure per-execution wall-clock time of the local estimators.

    Both modes consume the identical simulated trajectory per horizon. The
    report is empty unless the configuration enables timing.
    """
    if not config.timed:
        return TimingReport(stats={})
    horizons = config.horizons if horizons is None else tuple(horizons)
    from .config import benchmark_physical_boxes  # local import to avoid a cycle

    def boxes_for(mode):
        if mode == "dmhe2" and config.boxes is None and config.bundle is not None:
            return benchmark_physical_boxes(config.bundle)
        return config.boxes

    # warm up code paths once per mode so cold-start cost does not land in
    # the first measured bucket
    warm_N = min(horizons)
    warm_derived = config.derived(warm_N)
    warm_sim = simulate(config.model, config.initial_state, None, config.noise,
                        warm_N + 2)
    for mode in modes:
        run_trajectory(warm_sim.outputs, None,
                       EstimationSchedule(horizon=warm_N, iterations=1, mode=mode),
                       warm_derived, config.initial_guess, boxes=boxes_for(mode))

    stats = {}
    for N in horizons:
        derived = config.derived(N)
        n_samples = samples or max(config.samples, N + 2)
        sim = simulate(config.model, config.initial_state, None, config.noise,
                       n_samples)
        for mode in modes:
            schedule = EstimationSchedule(horizon=N,
                                          iterations=config.schedule.iterations,
                                          mode=mode)
            records = run_trajectory(sim.outputs, None, schedule, derived,
                                     config.initial_guess, boxes=boxes_for(mode),
                                     timed=True)
            times = np.concatenate([np.asarray(r.timings) for r in records])
            stats[(mode, N)] = {
                "count": int(times.size),
                "mean": float(times.mean()),
                "median": float(np.median(times)),
                "max": float(times.max()),
            }
    return TimingReport(stats=stats)
