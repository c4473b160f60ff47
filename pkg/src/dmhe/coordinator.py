"""Per-instant execution of the distributed estimation rounds.

At each sampling instant the coordinator assembles the measurement/input
window, predicts each subsystem's prior from the previous instant's final
iterates, initializes the round-0 iterates (state at its prior, disturbances
at zero), and runs exactly ``p_max`` synchronous rounds. Every round reads
only the previous round's iterates (Jacobi exchange over an ideal in-process
broadcast: snapshots per round, no loss or reordering), so the per-subsystem
updates within a round are order-independent; the update order argument
exists purely to let tests demonstrate that.

Instants are processed strictly sequentially; the first estimated instant is
``k = N`` with the user-supplied initial guess as its prior, and subsequent
priors chain through the model prediction from the previous instant's final
iterates.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .cmhe import WindowState, cmhe_solve_constrained, cmhe_solve_unconstrained
from .dmhe1 import initial_iterates, local_update, unstack_iterates
from .dmhe2 import BoxConstraints, local_qp_solve
from .errors import ConfigError, DimensionMismatchError, ProtocolError

MODES = ("dmhe1", "dmhe2", "cmhe-reference")


@dataclass(frozen=True)
class EstimationSchedule:
    """Horizon length, per-instant round budget, and estimator mode."""

    horizon: int
    iterations: int
    mode: str = "dmhe1"

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class EstimateRecord:
    """Final iterates emitted for one sampling instant.

    ``estimates`` and ``disturbance_estimates`` index the last round's
    per-subsystem iterates; ``priors`` the window-start predictions the
    instant started from. ``history`` optionally retains every round's
    stacked iterates for diagnostics.
    """

    k: int
    estimates: dict
    priors: dict
    disturbance_estimates: dict = field(default_factory=dict)
    history: tuple = None
    timings: tuple = None

    def full_state(self, partition):
        """Concatenate the per-subsystem estimates in partition order."""
        return np.concatenate([self.estimates[i] for i in partition.ids])

    def full_prior(self, partition):
        return np.concatenate([self.priors[i] for i in partition.ids])


def compute_prior(model, index, previous_estimates, u_previous):
    """One-step model prediction of subsystem ``index``'s window-start state.

    ``previous_estimates`` maps every subsystem id to its final estimate at
    the previous instant; ``u_previous`` is the composite input applied at
    the previous window-start instant.
    """
    p = model.partition
    p.require(index)
    sub = model.subsystem(index)
    for j in p.ids:
        if j not in previous_estimates:
            raise ProtocolError(
                f"prior for subsystem {index} needs the previous estimate of "
                f"subsystem {j}, which is missing")
    u_previous = np.asarray(u_previous, dtype=float).ravel()
    if u_previous.shape[0] != model.n_inputs:
        raise DimensionMismatchError(
            f"previous input has {u_previous.shape[0]} entries, expected {model.n_inputs}")
    prior = sub.A_self @ np.asarray(previous_estimates[index], dtype=float)
    for j, block in sub.A_coupling.items():
        prior = prior + block @ np.asarray(previous_estimates[j], dtype=float)
    prior = prior + sub.B_self @ u_previous[p.input_slice(index)]
    for j, block in sub.B_coupling.items():
        prior = prior + block @ u_previous[p.input_slice(j)]
    return prior


def _centralized_iterates(window, derived, boxes):
    if boxes is None:
        estimate = cmhe_solve_unconstrained(window, derived)
    else:
        estimate = cmhe_solve_constrained(window, derived, boxes)
    return unstack_iterates(estimate.stacked, derived, iteration=1)


def run_instant(k, window, schedule, derived, boxes=None, order=None,
                keep_history=False, timed=False, qp_tol=1e-10,
                qp_max_iter=50000):
    """Run one sampling instant: initialization plus ``p_max`` rounds.

    ``order`` optionally overrides the in-round update order (a permutation
    of the subsystem ids); results are identical for any order because
    rounds read frozen snapshots. ``timed`` records wall-clock seconds per
    local-estimator execution.
    """
    p = derived.model.partition
    priors = {i: window.prior_for(derived, i) for i in p.ids}
    mode = schedule.mode
    ids = tuple(p.ids) if order is None else tuple(order)
    if sorted(ids) != sorted(p.ids):
        raise ProtocolError(f"update order {ids} is not a permutation of {p.ids}")
    if mode == "dmhe2" and boxes is None:
        boxes = BoxConstraints.unbounded(derived.model)

    history = []
    timings = []
    if mode == "cmhe-reference":
        iterates = _centralized_iterates(window, derived, boxes)
        if keep_history:
            history.append({i: iterates[i] for i in p.ids})
    else:
        iterates = initial_iterates(derived, priors)
        if keep_history:
            history.append(dict(iterates))
        for _ in range(schedule.iterations):
            snapshot = iterates  # round p reads only round p-1 data
            updated = {}
            for i in ids:
                started = time.perf_counter() if timed else 0.0
                if mode == "dmhe1":
                    updated[i] = local_update(i, window, snapshot, priors[i], derived)
                else:
                    updated[i] = local_qp_solve(
                        i, window, snapshot, priors[i], derived, boxes,
                        start=snapshot[i].stacked, tol=qp_tol,
                        max_iter=qp_max_iter)
                if timed:
                    timings.append(time.perf_counter() - started)
            iterates = updated
            if keep_history:
                history.append(dict(iterates))

    return EstimateRecord(
        k=k,
        estimates={i: iterates[i].x_hat for i in p.ids},
        priors=priors,
        disturbance_estimates={i: iterates[i].w_hat_window for i in p.ids},
        history=tuple(history) if keep_history else None,
        timings=tuple(timings) if timed else None,
    )


def run_trajectory(outputs, inputs, schedule, derived, initial_guess,
                   boxes=None, keep_history=False, timed=False,
                   qp_tol=1e-10, qp_max_iter=50000):
    """Process a measurement stream instant by instant.

    ``outputs`` has one row per sample ``y_0 .. y_{S-1}``; ``inputs`` one row
    per applied input ``u_0 .. u_{S-2}`` (ignored entries beyond that are
    allowed). Records are emitted for ``k = N .. S-1``; the first instant
    uses ``initial_guess`` as its prior and later instants chain their priors
    through the model prediction from the previous record.
    """
    model = derived.model
    N = schedule.horizon
    if N != derived.N:
        raise ConfigError(f"schedule horizon {N} does not match derived bundle horizon {derived.N}")
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    steps = outputs.shape[0]
    if steps < N + 1:
        raise DimensionMismatchError(
            f"stream of {steps} samples is shorter than one window of {N + 1}")
    if outputs.shape[1] != model.n_outputs:
        raise DimensionMismatchError(
            f"outputs have {outputs.shape[1]} columns, expected {model.n_outputs}")
    if inputs is None:
        inputs = np.zeros((steps - 1, model.n_inputs))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] < steps - 1 or inputs.shape[1] != model.n_inputs:
        raise DimensionMismatchError(
            f"inputs of shape {inputs.shape} cannot cover {steps - 1} applied steps "
            f"of dimension {model.n_inputs}")
    initial_guess = np.asarray(initial_guess, dtype=float).ravel()
    if initial_guess.shape[0] != model.n_states:
        raise DimensionMismatchError(
            f"initial guess has {initial_guess.shape[0]} entries, expected {model.n_states}")

    p = model.partition
    records = []
    previous = None
    for k in range(N, steps):
        if previous is None:
            prior = initial_guess
        else:
            prior = np.concatenate([
                compute_prior(model, i, previous.estimates, inputs[k - N - 1])
                for i in p.ids])
        window = WindowState.from_stages(
            k, outputs[k - N:k + 1], inputs[k - N:k], prior)
        record = run_instant(k, window, schedule, derived, boxes=boxes,
                             keep_history=keep_history, timed=timed,
                             qp_tol=qp_tol, qp_max_iter=qp_max_iter)
        records.append(record)
        previous = record
    return records
