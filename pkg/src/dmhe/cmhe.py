"""Centralized moving-horizon estimation, used as the reference oracle.

After substituting the dynamics into the window objective, the decision
variables are the window-initial state and the disturbance sequence. The
unconstrained problem is a symmetric positive-definite linear solve; the
box-constrained variant is handled by projected gradient on the same
quadratic. Both are pure functions of immutable inputs and safe to call
concurrently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .linalg import spd_solve, solve_box_qp


@dataclass(frozen=True)
class WindowState:
    """Measurement/input window anchored at sampling instant ``k``.

    ``y_window`` stacks the ``N+1`` output samples ``y_{k-N} .. y_k`` stage
    major; ``u_window`` stacks the ``N`` inputs ``u_{k-N} .. u_{k-1}``;
    ``prior`` is the prediction of the window-initial state.
    """

    k: int
    y_window: np.ndarray
    u_window: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        for name in ("y_window", "u_window", "prior"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_stages(cls, k, outputs, inputs, prior):
        """Build a window from per-stage rows (oldest stage first)."""
        outputs = np.asarray(outputs, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        return cls(k=k, y_window=outputs.reshape(-1), u_window=inputs.reshape(-1),
                   prior=np.asarray(prior, dtype=float))

    def validate_against(self, derived):
        maps = derived.maps
        if self.y_window.shape[0] != maps.O.shape[0]:
            raise DimensionMismatchError(
                f"output window has {self.y_window.shape[0]} entries, expected "
                f"{maps.O.shape[0]} for horizon {maps.N}")
        if self.u_window.shape[0] != maps.Lambda.shape[1]:
            raise DimensionMismatchError(
                f"input window has {self.u_window.shape[0]} entries, expected "
                f"{maps.Lambda.shape[1]} for horizon {maps.N}")
        if self.prior.shape[0] != derived.model.n_states:
            raise DimensionMismatchError(
                f"prior has {self.prior.shape[0]} entries, expected "
                f"{derived.model.n_states}")

    def prior_for(self, derived, index):
        return self.prior[derived.model.partition.state_slice(index)]


@dataclass(frozen=True)
class FullEstimate:
    """Solution of one window problem for the entire system."""

    x_hat: np.ndarray
    w_hat_window: np.ndarray
    objective_value: float

    @property
    def stacked(self):
        """Split-ordering decision vector ``(x_hat, w-window)``."""
        return np.concatenate([self.x_hat, self.w_hat_window])


def effective_output(window, derived):
    """Output window with the known-input response removed."""
    return window.y_window - derived.maps.Lambda @ window.u_window


def normal_equation_rhs(window, derived):
    """Right-hand side of the centralized normal equations, split ordering."""
    y_eff = effective_output(window, derived)
    return np.concatenate([
        derived.P_inv @ window.prior + derived.maps.O.T @ (derived.R_bold_inv @ y_eff),
        derived.maps.Gamma.T @ (derived.R_bold_inv @ y_eff),
    ])


def evaluate_objective(window, derived, x_hat, w_hat_window):
    """Window objective: prior, disturbance, and noise penalties.

    This is the quadratic the solvers minimize, evaluated from its
    definition, so tests can use it as an independent re-evaluation oracle.
    """
    dx = x_hat - window.prior
    v_hat = (window.y_window - derived.maps.O @ x_hat
             - derived.maps.Gamma @ w_hat_window
             - derived.maps.Lambda @ window.u_window)
    return 0.5 * float(
        dx @ derived.P_inv @ dx
        + w_hat_window @ derived.Q_bold_inv @ w_hat_window
        + v_hat @ derived.R_bold_inv @ v_hat)


def _split(derived, z):
    n_x = derived.model.n_states
    return z[:n_x], z[n_x:]


def cmhe_solve_unconstrained(window, derived):
    """Unique minimizer of the window objective, by one SPD solve."""
    window.validate_against(derived)
    rhs = normal_equation_rhs(window, derived)
    z = spd_solve(derived.kkt_factor, rhs)
    x_hat, w_hat = _split(derived, z)
    return FullEstimate(
        x_hat=x_hat, w_hat_window=w_hat,
        objective_value=evaluate_objective(window, derived, x_hat, w_hat))


def cmhe_solve_constrained(window, derived, boxes, start=None, tol=1e-10,
                           max_iter=50000):
    """Minimizer of the window objective under box constraints.

    The state box applies to the window-initial state estimate and the
    disturbance box to every stage of the window. Uses projected gradient
    with the fixed step ``1 / lambda_max`` of the quadratic's Hessian.
    """
    window.validate_against(derived)
    rhs = normal_equation_rhs(window, derived)
    lower, upper = boxes.split_bounds(derived)
    z, _, _ = solve_box_qp(derived.kkt, rhs, lower, upper, start=start,
                           tol=tol, max_iter=max_iter)
    x_hat, w_hat = _split(derived, z)
    return FullEstimate(
        x_hat=x_hat, w_hat_window=w_hat,
        objective_value=evaluate_objective(window, derived, x_hat, w_hat))
