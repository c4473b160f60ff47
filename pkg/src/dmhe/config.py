"""Run configuration: loading, validation, and construction of run objects.

A configuration is a JSON document selecting the model (the bundled benchmark
or a model file), the estimation schedule, the weights (scalar shorthand or
full matrices), optional box constraints, the noise specification, and the
evaluation parameters. Everything is cross-validated against the model
dimensions at load time.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .coordinator import EstimationSchedule
from .dmhe2 import BoxConstraints
from .errors import ConfigError
from .model import build_stacked_maps, load_model
from .simulator import NoiseSpec, load_benchmark
from .weights import EstimatorWeights, derive_composites

_INF_SENTINELS = {"inf": np.inf, "+inf": np.inf, "-inf": -np.inf, None: None}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with its assembled run objects."""

    model: object
    schedule: EstimationSchedule
    weights: EstimatorWeights
    noise: NoiseSpec
    boxes: BoxConstraints = None
    bundle: object = None           # benchmark bundle when model == benchmark
    samples: int = 100
    runs: int = 25
    horizons: tuple = (2, 5, 10)
    sigma_sweep: tuple = ()
    timed: bool = False
    output_dir: str = "out"
    initial_state: np.ndarray = None
    initial_guess: np.ndarray = None
    raw: dict = field(default_factory=dict, repr=False)

    def derived(self, horizon=None):
        """Derive the composite weight bundle for ``horizon`` (default: schedule's)."""
        N = self.schedule.horizon if horizon is None else horizon
        maps = build_stacked_maps(self.model, N)
        return derive_composites(self.weights, maps, self.model)

    def fingerprint(self):
        """Stable hash of the canonicalized configuration document."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, mode=None, horizon=None, iterations=None,
                       seed=None, runs=None, timed=None, output_dir=None):
        """Copy of this configuration with CLI-style overrides applied."""
        raw = json.loads(json.dumps(self.raw))
        schedule_raw = raw.setdefault("schedule", {})
        if mode is not None:
            schedule_raw["mode"] = mode
        if horizon is not None:
            schedule_raw["horizon"] = horizon
        if iterations is not None:
            schedule_raw["iterations"] = iterations
        if seed is not None:
            raw.setdefault("noise", {})["seed"] = seed
        if runs is not None:
            raw.setdefault("evaluation", {})["runs"] = runs
        if timed is not None:
            raw["timed"] = timed
        if output_dir is not None:
            raw["output_dir"] = output_dir
        return config_from_dict(raw)

    def with_noise(self, **noise_overrides):
        """Copy of this configuration with noise fields replaced."""
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("noise", {}).update(noise_overrides)
        return config_from_dict(raw)


def _parse_bound(value, default):
    if isinstance(value, str):
        try:
            return _INF_SENTINELS[value.lower()]
        except KeyError as exc:
            raise ConfigError(f"unrecognized bound sentinel {value!r}") from exc
    return default if value is None else float(value)


def _parse_boxes(raw_boxes, model, bundle):
    """Per-subsystem box bounds; lists per state component or scalar fill.

    ``{"benchmark-physical": true}`` on the benchmark expands to the physical
    operating constraints (mass fractions in [0, 1], nonnegative
    temperatures, disturbances in [-0.1, 0.1]) mapped into the scaled
    deviation coordinate where estimation runs.
    """
    if raw_boxes is None:
        return None
    if raw_boxes.get("benchmark-physical"):
        if bundle is None:
            raise ConfigError("benchmark-physical boxes require the benchmark model")
        return benchmark_physical_boxes(bundle,
                                        raw_boxes.get("disturbance_bound", 0.1))
    p = model.partition

    def per_subsystem(entry, kind, fill):
        out = {}
        for i in p.ids:
            size = p.state_sizes[i]
            if entry is None:
                value = None
            elif np.isscalar(entry) or isinstance(entry, str):
                value = entry  # one bound for every subsystem
            else:
                value = entry.get(str(i), entry.get(i))
            if value is None:
                out[i] = np.full(size, fill)
            elif np.isscalar(value) or isinstance(value, str):
                out[i] = np.full(size, _parse_bound(value, fill))
            else:
                if len(value) != size:
                    raise ConfigError(
                        f"{kind} for subsystem {i} has {len(value)} entries, "
                        f"expected {size}")
                out[i] = np.asarray([_parse_bound(v, fill) for v in value], dtype=float)
        return out

    return BoxConstraints(
        state_lower=per_subsystem(raw_boxes.get("state_lower"), "state_lower", -np.inf),
        state_upper=per_subsystem(raw_boxes.get("state_upper"), "state_upper", np.inf),
        disturbance_lower=per_subsystem(raw_boxes.get("disturbance_lower"),
                                        "disturbance_lower", -np.inf),
        disturbance_upper=per_subsystem(raw_boxes.get("disturbance_upper"),
                                        "disturbance_upper", np.inf),
    )


def benchmark_physical_boxes(bundle, disturbance_bound=0.1):
    """Physical operating constraints of the benchmark in scaled coordinates.

    Mass fractions live in [0, 1] and temperatures are nonnegative; both are
    mapped through the steady state and scaling divisors into bounds on the
    scaled deviation estimate. Disturbance estimates are bounded
    componentwise by ``disturbance_bound`` at every stage.
    """
    model = bundle.model
    p = model.partition
    lower_phys = np.zeros(model.n_states)
    upper_phys = np.ones(model.n_states)
    upper_phys[list(bundle.temperature_components)] = np.inf
    lower_scaled = (lower_phys - bundle.steady_state) / bundle.scaling
    upper_scaled = (upper_phys - bundle.steady_state) / bundle.scaling
    upper_scaled[list(bundle.temperature_components)] = np.inf
    state_lower = {i: lower_scaled[p.state_slice(i)] for i in p.ids}
    state_upper = {i: upper_scaled[p.state_slice(i)] for i in p.ids}
    dist_lower = {i: np.full(p.state_sizes[i], -disturbance_bound) for i in p.ids}
    dist_upper = {i: np.full(p.state_sizes[i], disturbance_bound) for i in p.ids}
    return BoxConstraints(state_lower=state_lower, state_upper=state_upper,
                          disturbance_lower=dist_lower, disturbance_upper=dist_upper)


def config_from_dict(raw):
    """Build and cross-validate a :class:`RunConfig` from a JSON document."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    model_spec = raw.get("model", "benchmark")
    bundle = None
    if model_spec == "benchmark":
        bundle = load_benchmark(scaling=raw.get("scaling"))
        model = bundle.model
    elif isinstance(model_spec, dict) and "file" in model_spec:
        model = load_model(model_spec["file"])
    else:
        raise ConfigError(
            "model must be 'benchmark' or an object with a 'file' path")

    schedule_raw = raw.get("schedule", {})
    try:
        schedule = EstimationSchedule(
            horizon=int(schedule_raw.get("horizon", 10)),
            iterations=int(schedule_raw.get("iterations", 5)),
            mode=str(schedule_raw.get("mode", "dmhe1")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc

    weights_raw = raw.get("weights", {})

    def weight_entry(key, default):
        value = weights_raw.get(key, default)
        if isinstance(value, dict):
            return {int(k): (v if np.isscalar(v) else np.asarray(v, dtype=float))
                    for k, v in value.items()}
        if isinstance(value, list):
            return {i: np.asarray(v, dtype=float)
                    for i, v in zip(model.partition.ids, value)}
        return value

    weights = EstimatorWeights.from_scalars(
        model,
        prior=weight_entry("prior", 0.1),
        disturbance=weight_entry("disturbance", 1e-4),
        noise=weight_entry("noise", 1e-4),
    )
    weights.validate_against(model)

    noise_raw = raw.get("noise", {})
    noise = NoiseSpec(
        sigma_w=noise_raw.get("sigma_w", 0.01),
        sigma_v=noise_raw.get("sigma_v", 0.01),
        w_bound=noise_raw.get("w_bound"),
        v_bound=noise_raw.get("v_bound"),
        seed=int(noise_raw.get("seed", 0)),
    )

    boxes = _parse_boxes(raw.get("boxes"), model, bundle)
    if boxes is not None:
        boxes.validate_against(model)

    evaluation_raw = raw.get("evaluation", {})
    samples = int(evaluation_raw.get("samples", 100))
    runs = int(evaluation_raw.get("runs", 25))
    horizons = tuple(int(N) for N in evaluation_raw.get("horizons", (2, 5, 10)))
    sigma_sweep = tuple(float(s) for s in evaluation_raw.get("sigma_sweep", ()))
    if samples < schedule.horizon + 1:
        raise ConfigError(
            f"{samples} samples cannot cover one window of horizon {schedule.horizon}")
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    for N in horizons:
        if N < 1:
            raise ConfigError(f"horizon sweep entries must be >= 1, got {N}")
    for sigma in sigma_sweep:
        if sigma < 0:
            raise ConfigError(f"sigma sweep entries must be >= 0, got {sigma}")

    if bundle is not None:
        initial_state = bundle.initial_state_scaled
        initial_guess = bundle.initial_guess_scaled
    else:
        initial_state = np.asarray(raw.get("initial_state",
                                           np.zeros(model.n_states)), dtype=float)
        initial_guess = np.asarray(raw.get("initial_guess", initial_state), dtype=float)
    if initial_state.shape[0] != model.n_states or initial_guess.shape[0] != model.n_states:
        raise ConfigError("initial state/guess must have state dimension")

    return RunConfig(
        model=model,
        schedule=schedule,
        weights=weights,
        noise=noise,
        boxes=boxes,
        bundle=bundle,
        samples=samples,
        runs=runs,
        horizons=horizons,
        sigma_sweep=sigma_sweep,
        timed=bool(raw.get("timed", False)),
        output_dir=str(raw.get("output_dir", "out")),
        initial_state=initial_state,
        initial_guess=initial_guess,
        raw=raw,
    )


def load_run_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(raw)


def benchmark_config(**raw_overrides):
    """Default benchmark configuration document, optionally overridden."""
    raw = {
        "model": "benchmark",
        "schedule": {"horizon": 10, "iterations": 5, "mode": "dmhe1"},
        "weights": {"prior": 0.1, "disturbance": 1e-4, "noise": 1e-4},
        "noise": {"sigma_w": 0.01, "sigma_v": 0.01, "seed": 0},
        "evaluation": {"runs": 25, "samples": 100, "horizons": [2, 5, 10]},
        "output_dir": "out",
    }
    raw.update(raw_overrides)
    return config_from_dict(raw)
