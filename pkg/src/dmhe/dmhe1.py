"""Unconstrained iterative distributed MHE with closed-form local updates.

Within one sampling instant, every subsystem estimator repeatedly minimizes
its own window objective while treating the other subsystems' most recent
iterates as known data. Each local minimization has a closed form: a
two-block linear system in the subsystem's window-initial state and
disturbance window, solved here through its two Schur complements.

Stacking all local updates gives one linear fixed-point recursion on the full
decision vector, ``z_p = -Md^{-1} Mr z_{p-1} + Md^{-1} rhs``, where ``Md``
keeps the same-subsystem part of the centralized normal-equation matrix and
``Mr`` the cross-subsystem part. The recursion converges to the centralized
solution for every window exactly when the spectral radius of ``Md^{-1} Mr``
is below one; that spectral radius and the error-dynamics certificate are
computed by the two check functions.

Local updates for distinct subsystems within one iteration only read the
previous iteration's data, so they are independent and may run concurrently;
a barrier between iterations is the caller's responsibility (see the
coordinator module).
"""

from dataclasses import dataclass, field

import numpy as np

from .cmhe import effective_output, normal_equation_rhs
from .conditions import ConditionEntry
from .errors import DimensionMismatchError, ProtocolError
from .linalg import spd_factor, spd_solve, spectral_radius


@dataclass(frozen=True)
class LocalIterate:
    """One subsystem's iterate: state estimate and disturbance window."""

    index: int
    x_hat: np.ndarray
    w_hat_window: np.ndarray
    iteration: int

    def __post_init__(self):
        if self.iteration < 0:
            raise ProtocolError(f"iteration counter must be >= 0, got {self.iteration}")
        for name in ("x_hat", "w_hat_window"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def stacked(self):
        """Grouped vector ``(x_hat, w-window)`` for this subsystem."""
        return np.concatenate([self.x_hat, self.w_hat_window])


def initial_iterates(derived, priors, w0=None):
    """Iteration-0 iterates: state at its prior, disturbances at zero.

    ``priors`` maps subsystem id to the prior of its window-initial state;
    ``w0`` optionally overrides the zero disturbance initialization per
    subsystem.
    """
    p = derived.model.partition
    out = {}
    for i in p.ids:
        w = np.zeros(p.state_sizes[i] * derived.N) if w0 is None else np.asarray(w0[i], dtype=float)
        out[i] = LocalIterate(index=i, x_hat=np.asarray(priors[i], dtype=float),
                              w_hat_window=w, iteration=0)
    return out


def _neighbor_coupling(index, neighbor_iterates, derived):
    """Stacked-output contribution of every other subsystem's iterate."""
    p = derived.model.partition
    coupling = np.zeros(derived.maps.O.shape[0])
    expected = None
    for j in p.ids:
        if j == index:
            continue
        if j not in neighbor_iterates:
            raise ProtocolError(f"missing iterate for subsystem {j}")
        it = neighbor_iterates[j]
        if expected is None:
            expected = it.iteration
        elif it.iteration != expected:
            raise ProtocolError(
                f"neighbor iterates disagree on the iteration counter: "
                f"subsystem {j} is at {it.iteration}, expected {expected}")
        ops = derived.subsystem_operators[j]
        coupling += ops.O_block @ it.x_hat + ops.Gamma_block @ it.w_hat_window
    return coupling, (0 if expected is None else expected)


def local_update(index, window, neighbor_iterates, prior_i, derived):
    """Closed-form update of subsystem ``index`` from the neighbors' iterates.

    Solves the subsystem's two-block optimality system via its two Schur
    complements: the state solve marginalizes the disturbances through the
    disturbance-inflated output covariance, and the disturbance solve
    marginalizes the state through the prior-inflated one.
    """
    p = derived.model.partition
    p.require(index)
    prior_i = np.asarray(prior_i, dtype=float).ravel()
    if prior_i.shape[0] != p.state_sizes[index]:
        raise DimensionMismatchError(
            f"prior for subsystem {index} has {prior_i.shape[0]} entries, "
            f"expected {p.state_sizes[index]}")
    window.validate_against(derived)

    ops = derived.subsystem_operators[index]
    coupling, prev_iteration = _neighbor_coupling(index, neighbor_iterates, derived)
    residual = derived.R_bold_inv @ (effective_output(window, derived) - coupling)
    state_rows = p.state_slice(index)
    c1 = ops.O_block.T @ residual + derived.P_inv[state_rows, state_rows] @ prior_i
    c2 = ops.Gamma_block.T @ residual

    x_hat = spd_solve(ops.schur_x_factor, c1 - ops.m12 @ spd_solve(ops.m22_factor, c2))
    w_hat = spd_solve(ops.schur_w_factor, c2 - ops.m12.T @ spd_solve(ops.m11_factor, c1))
    return LocalIterate(index=index, x_hat=x_hat, w_hat_window=w_hat,
                        iteration=prev_iteration + 1)


@dataclass(frozen=True)
class IterationMatrices:
    """Fixed-point form of one full round of local updates, split ordering.

    ``M_d + M_r`` reproduces the centralized normal-equation matrix exactly.
    ``M_k`` is the window-dependent right-hand side and is ``None`` until a
    window is attached.
    """

    M_d: np.ndarray
    M_r: np.ndarray
    spectral_radius_iter: float
    M_k: np.ndarray = None
    _factor: tuple = field(default=None, repr=False)

    def with_window(self, window, derived):
        return IterationMatrices(
            M_d=self.M_d, M_r=self.M_r,
            spectral_radius_iter=self.spectral_radius_iter,
            M_k=normal_equation_rhs(window, derived),
            _factor=self._factor)


def build_iteration_matrices(derived, window=None):
    """Split the centralized normal-equation matrix into its same-subsystem
    and cross-subsystem parts and compute the iteration spectral radius."""
    M_d = derived.block_diagonal_part(derived.kkt, ordering="split")
    M_r = derived.off_diagonal_part(derived.kkt, ordering="split")
    factor = spd_factor(M_d, "same-subsystem iteration matrix")
    rho = spectral_radius(spd_solve(factor, M_r))
    matrices = IterationMatrices(M_d=M_d, M_r=M_r, spectral_radius_iter=rho,
                                 _factor=factor)
    if window is not None:
        matrices = matrices.with_window(window, derived)
    return matrices


def global_iteration_step(z_prev, matrices, rhs=None):
    """One full round on the stacked decision vector, split ordering.

    Computes ``Md^{-1} (rhs - Mr z_prev)``; ``rhs`` defaults to the
    window right-hand side attached to ``matrices``.
    """
    if rhs is None:
        rhs = matrices.M_k
    if rhs is None:
        raise ProtocolError("no right-hand side: attach a window or pass rhs")
    z_prev = np.asarray(z_prev, dtype=float)
    if z_prev.shape[0] != matrices.M_d.shape[0]:
        raise DimensionMismatchError(
            f"iterate has dimension {z_prev.shape[0]}, expected {matrices.M_d.shape[0]}")
    return spd_solve(matrices._factor, rhs - matrices.M_r @ z_prev)


def stack_iterates(iterates, derived):
    """Stack per-subsystem iterates into a split-ordering decision vector."""
    p = derived.model.partition
    n_x = p.n_states
    z = np.zeros(n_x * (1 + derived.N))
    for i in p.ids:
        it = iterates[i]
        z[p.state_slice(i)] = it.x_hat
        z[n_x + p.disturbance_indices(i, derived.N)] = it.w_hat_window
    return z


def unstack_iterates(z, derived, iteration):
    """Inverse of :func:`stack_iterates`."""
    p = derived.model.partition
    n_x = p.n_states
    z = np.asarray(z, dtype=float)
    out = {}
    for i in p.ids:
        out[i] = LocalIterate(
            index=i,
            x_hat=z[p.state_slice(i)],
            w_hat_window=z[n_x + p.disturbance_indices(i, derived.N)],
            iteration=iteration,
        )
    return out


def check_iteration_convergence(matrices):
    """Certificate: the round spectral radius must be inside the unit circle."""
    rho = matrices.spectral_radius_iter
    return ConditionEntry(
        name="dmhe1_iteration_convergence",
        satisfied=bool(rho < 1.0),
        value=rho,
        threshold=1.0,
        comparison="<",
        details={"spectral_radius": rho},
    )


def error_dynamics_matrix(derived):
    """One-instant propagation matrix of the window-start estimation error.

    With the estimators fully converged, the error at the window start
    contracts through ``(P^{-1} + O' (Rs + Gamma Qs Gamma')^{-1} O)^{-1}
    P^{-1} A`` between consecutive instants.
    """
    O, G = derived.maps.O, derived.maps.Gamma
    inflated = derived.R_bold + G @ derived.Q_bold @ G.T
    info = derived.P_inv + O.T @ spd_solve(
        spd_factor(inflated, "disturbance-inflated output covariance"), O)
    return spd_solve(spd_factor(info, "prior-information matrix"),
                     derived.P_inv @ derived.model.A)


def check_error_stability(derived):
    """Certificate: spectral radius of the error propagation matrix below one."""
    rho = spectral_radius(error_dynamics_matrix(derived))
    return ConditionEntry(
        name="dmhe1_error_stability",
        satisfied=bool(rho < 1.0),
        value=rho,
        threshold=1.0,
        comparison="<",
        details={"spectral_radius": rho},
    )
