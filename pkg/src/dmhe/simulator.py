"""Ground-truth simulation and the reactor-separator benchmark bundle.

Simulation runs in the model's own (scaled deviation) coordinates: the state
recursion applies seeded Gaussian disturbances, optionally truncated
componentwise by rejection, and the output adds seeded measurement noise.
The benchmark bundle carries the physical steady state and the componentwise
scaling divisors so physical values can be reconstructed at reporting time.

One trajectory is generated single-threaded for determinism; independent
Monte Carlo trajectories use independent seeds.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .model import model_from_dict

_BENCHMARK_RESOURCE = "reactor_separator.json"


@dataclass(frozen=True)
class NoiseSpec:
    """Seeded Gaussian disturbance/noise magnitudes with optional truncation.

    ``sigma_w`` and ``sigma_v`` are standard deviations (scalar or
    per-component). ``w_bound``/``v_bound``, when set, truncate every
    component to ``[-bound, bound]`` by redrawing offending components.
    """

    sigma_w: float = 0.0
    sigma_v: float = 0.0
    w_bound: float = None
    v_bound: float = None
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_w) < 0) or np.any(np.asarray(self.sigma_v) < 0):
            raise ConfigError("noise standard deviations must be nonnegative")
        for name in ("w_bound", "v_bound"):
            bound = getattr(self, name)
            if bound is not None and bound <= 0:
                raise ConfigError(f"{name} must be positive when present")


@dataclass(frozen=True)
class SimulationResult:
    """States, outputs, and the persisted noise realizations of one run."""

    states: np.ndarray        # (steps, n_x), states[0] = x0
    outputs: np.ndarray       # (steps, n_y)
    disturbances: np.ndarray  # (steps - 1, n_x)
    measurement_noise: np.ndarray  # (steps, n_y)


def _truncated_normal(rng, sigma, size, bound):
    draw = rng.normal(scale=sigma, size=size) if np.isscalar(sigma) else \
        rng.normal(size=size) * np.asarray(sigma)
    if bound is not None:
        bad = np.abs(draw) > bound
        while np.any(bad):
            fresh = rng.normal(size=int(bad.sum()))
            scale = sigma if np.isscalar(sigma) else np.asarray(sigma)[bad]
            draw[bad] = fresh * scale
            bad = np.abs(draw) > bound
    return draw


def simulate(model, x0, u_stream, noise, steps):
    """Simulate ``steps`` samples of the composite model.

    ``states[t+1] = A states[t] + B u[t] + w[t]`` for ``t < steps - 1`` and
    ``outputs[t] = C states[t] + v[t]``. ``u_stream`` may be ``None`` (zero
    inputs) or provide at least ``steps - 1`` rows.
    """
    if steps < 1:
        raise DimensionMismatchError(f"steps must be >= 1, got {steps}")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != model.n_states:
        raise DimensionMismatchError(
            f"x0 has {x0.shape[0]} entries, expected {model.n_states}")
    if u_stream is None:
        u_stream = np.zeros((max(steps - 1, 1), model.n_inputs))
    u_stream = np.atleast_2d(np.asarray(u_stream, dtype=float))
    if steps > 1 and (u_stream.shape[0] < steps - 1 or u_stream.shape[1] != model.n_inputs):
        raise DimensionMismatchError(
            f"input stream of shape {u_stream.shape} cannot cover {steps - 1} "
            f"steps of dimension {model.n_inputs}")

    rng = np.random.default_rng(noise.seed)
    n_x, n_y = model.n_states, model.n_outputs
    states = np.zeros((steps, n_x))
    outputs = np.zeros((steps, n_y))
    disturbances = np.zeros((max(steps - 1, 0), n_x))
    measurement_noise = np.zeros((steps, n_y))
    states[0] = x0
    for t in range(steps):
        measurement_noise[t] = _truncated_normal(rng, noise.sigma_v, n_y, noise.v_bound)
        outputs[t] = model.C @ states[t] + measurement_noise[t]
        if t + 1 < steps:
            disturbances[t] = _truncated_normal(rng, noise.sigma_w, n_x, noise.w_bound)
            states[t + 1] = model.A @ states[t] + model.B @ u_stream[t] + disturbances[t]
    return SimulationResult(states=states, outputs=outputs,
                            disturbances=disturbances,
                            measurement_noise=measurement_noise)


@dataclass(frozen=True)
class BenchmarkBundle:
    """The reactor-separator case study: model, operating point, scaling.

    States are, per vessel, two mass fractions and one temperature; the
    temperature of each vessel is measured. ``steady_state``,
    ``initial_state``, and ``initial_guess`` are physical values; the model
    operates on scaled deviations from the steady state.
    """

    model: object
    steady_state: np.ndarray
    steady_inputs: dict
    scaling: np.ndarray
    initial_state: np.ndarray
    initial_guess: np.ndarray
    state_labels: tuple
    mass_fraction_components: tuple
    temperature_components: tuple
    parameters: dict = field(default_factory=dict)
    sample_time_hours: float = 0.02

    @property
    def initial_state_scaled(self):
        return scale(self.initial_state - self.steady_state, self)

    @property
    def initial_guess_scaled(self):
        return scale(self.initial_guess - self.steady_state, self)

    def to_physical(self, scaled_state):
        """Scaled deviation -> physical value (unscale, add steady state)."""
        return unscale(scaled_state, self) + self.steady_state


def scale(physical_deviation, bundle):
    """Componentwise division of a physical deviation by the scaling vector."""
    scaling = np.asarray(bundle.scaling, dtype=float)
    if np.any(scaling <= 0):
        raise ConfigError("scaling divisors must be strictly positive")
    v = np.asarray(physical_deviation, dtype=float)
    if v.shape[-1] != scaling.shape[0]:
        raise DimensionMismatchError(
            f"vector of length {v.shape[-1]} does not match scaling of length "
            f"{scaling.shape[0]}")
    return v / scaling


def unscale(scaled_deviation, bundle):
    """Inverse of :func:`scale`."""
    scaling = np.asarray(bundle.scaling, dtype=float)
    if np.any(scaling <= 0):
        raise ConfigError("scaling divisors must be strictly positive")
    v = np.asarray(scaled_deviation, dtype=float)
    if v.shape[-1] != scaling.shape[0]:
        raise DimensionMismatchError(
            f"vector of length {v.shape[-1]} does not match scaling of length "
            f"{scaling.shape[0]}")
    return v * scaling


def load_benchmark(scaling=None):
    """Load the bundled reactor-separator benchmark.

    ``scaling`` optionally overrides the default componentwise divisors
    (1 for mass fractions, 100 for temperature deviations in kelvin).
    """
    raw = json.loads(
        resources.files("dmhe.data").joinpath(_BENCHMARK_RESOURCE).read_text())
    model = model_from_dict(raw)
    vector = np.asarray(raw["scaling"] if scaling is None else scaling, dtype=float)
    if vector.shape[0] != model.n_states or np.any(vector <= 0):
        raise ConfigError("scaling must be a strictly positive vector of state length")
    bundle = BenchmarkBundle(
        model=model,
        steady_state=np.asarray(raw["steady_state"], dtype=float),
        steady_inputs=dict(raw["steady_inputs"]),
        scaling=vector,
        initial_state=np.asarray(raw["initial_state"], dtype=float),
        initial_guess=np.asarray(raw["initial_guess"], dtype=float),
        state_labels=tuple(raw["state_labels"]),
        mass_fraction_components=tuple(raw["mass_fraction_components"]),
        temperature_components=tuple(raw["temperature_components"]),
        parameters=dict(raw["parameters"]),
        sample_time_hours=float(raw["sample_time_hours"]),
    )
    return bundle
