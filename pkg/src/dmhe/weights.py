"""Estimator tuning matrices and every composite weight derived from them.

Two orderings of the stacked decision vector appear downstream and both are
served from the same bundle:

* split ordering ``z = (x, w-window)``: the window-initial state estimate for
  the whole system followed by the stage-major disturbance window. The
  centralized normal equations and the distributed iteration matrices are
  written in this ordering.
* grouped ordering ``z = (z_1, ..., z_n)`` with ``z_i = (x_i, w_i-window)``:
  each subsystem's state estimate followed by its own disturbance window. The
  scaled-gradient-projection view of the constrained scheme and its
  convergence certificate are written in this ordering.

The two are related by a permutation, precomputed here. The
"subsystem-block-diagonal part" of a matrix keeps every entry whose row and
column variables belong to the same subsystem (any window stages) and zeroes
the rest; the remainder is the cross-subsystem part.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .linalg import spd_factor, spd_inverse, spd_solve
from .model import column_block


def _check_spd(M, name):
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12):
        raise NotPositiveDefiniteError(name, f"matrix {name!r} is not symmetric")
    try:
        sla.cholesky(M, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(name) from exc
    M.flags.writeable = False
    return M


@dataclass(frozen=True)
class EstimatorWeights:
    """Per-subsystem prior, disturbance, and noise weighting matrices.

    ``P``, ``Q`` map subsystem id to an ``n_x_i`` square SPD matrix; ``R``
    maps it to an ``n_y_i`` square SPD matrix.
    """

    P: dict
    Q: dict
    R: dict

    def __post_init__(self):
        object.__setattr__(self, "P", {i: _check_spd(M, f"P_{i}") for i, M in self.P.items()})
        object.__setattr__(self, "Q", {i: _check_spd(M, f"Q_{i}") for i, M in self.Q.items()})
        object.__setattr__(self, "R", {i: _check_spd(M, f"R_{i}") for i, M in self.R.items()})

    @classmethod
    def from_scalars(cls, model, prior, disturbance, noise):
        """Scaled-identity shorthand: one positive scalar per weight family.

        Scalars may also be given per subsystem as ``{id: scalar}`` mappings.
        """
        p = model.partition

        def expand(value, sizes, family):
            if np.isscalar(value):
                value = {i: value for i in p.ids}
            out = {}
            for i in p.ids:
                v = value[i]
                if np.isscalar(v):
                    if v <= 0:
                        raise NotPositiveDefiniteError(f"{family}_{i}",
                                                       f"scalar weight {family}_{i} must be positive")
                    out[i] = float(v) * np.eye(sizes[i])
                else:
                    out[i] = v
            return out

        return cls(
            P=expand(prior, p.state_sizes, "P"),
            Q=expand(disturbance, p.state_sizes, "Q"),
            R=expand(noise, p.output_sizes, "R"),
        )

    def validate_against(self, model):
        p = model.partition
        for i in p.ids:
            for family, sizes in (("P", p.state_sizes), ("Q", p.state_sizes), ("R", p.output_sizes)):
                mats = getattr(self, family)
                if i not in mats:
                    raise DimensionMismatchError(f"missing weight {family}_{i}")
                if mats[i].shape != (sizes[i], sizes[i]):
                    raise DimensionMismatchError(
                        f"{family}_{i} has shape {mats[i].shape}, expected "
                        f"({sizes[i]}, {sizes[i]})")


@dataclass(frozen=True)
class SubsystemOperators:
    """Per-subsystem pieces of the distributed update equations.

    ``m11 = P_i^-1 + O_i' Rs^-1 O_i``, ``m12 = O_i' Rs^-1 G_i``,
    ``m22 = Qs_i^-1 + G_i' Rs^-1 G_i``, together with the two
    disturbance-marginalized forms ``schur_x = P_i^-1 + O_i' (Rs + G_i Qs_i
    G_i')^-1 O_i`` and ``schur_w = Qs_i^-1 + G_i' (Rs + O_i P_i O_i')^-1
    G_i``. All solve operators are cached Cholesky factors.
    """

    index: int
    O_block: np.ndarray
    Gamma_block: np.ndarray
    m11: np.ndarray
    m12: np.ndarray
    m22: np.ndarray
    schur_x: np.ndarray
    schur_w: np.ndarray
    m11_factor: tuple = field(repr=False)
    m22_factor: tuple = field(repr=False)
    schur_x_factor: tuple = field(repr=False)
    schur_w_factor: tuple = field(repr=False)
    hessian: np.ndarray = None
    hessian_factor: tuple = field(default=None, repr=False)


class DerivedWeights:
    """Composite weighting objects paired with a model and stacked maps.

    Built by :func:`derive_composites`; immutable by convention and safe to
    share between concurrent estimator evaluations.
    """

    def __init__(self, weights, maps, model):
        weights.validate_against(model)
        p = model.partition
        N = maps.N
        self.weights = weights
        self.maps = maps
        self.model = model
        self.N = N

        # Composite single-stage weights in partition order.
        self.P = sla.block_diag(*[weights.P[i] for i in p.ids])
        Q_stage = sla.block_diag(*[weights.Q[i] for i in p.ids])
        R_stage = sla.block_diag(*[weights.R[i] for i in p.ids])
        self.P_inv = spd_inverse(self.P, "P")
        Q_stage_inv = spd_inverse(Q_stage, "Q")
        R_stage_inv = spd_inverse(R_stage, "R")

        # Window-stacked weights, stage major.
        self.Q_bold = np.kron(np.eye(N), Q_stage)
        self.R_bold = np.kron(np.eye(N + 1), R_stage)
        self.Q_bold_inv = np.kron(np.eye(N), Q_stage_inv)
        self.R_bold_inv = np.kron(np.eye(N + 1), R_stage_inv)

        # Split ordering: owners of (x, w-window) components and the
        # same-subsystem mask implementing the (.)_d / (.)_r decomposition.
        owners_x = p.state_owners()
        owners_w = np.tile(owners_x, N)
        self.split_owners = np.concatenate([owners_x, owners_w])
        self._split_mask = self.split_owners[:, None] == self.split_owners[None, :]
        self._state_mask = owners_x[:, None] == owners_x[None, :]
        self._window_mask = owners_w[:, None] == owners_w[None, :]

        O, G = maps.O, maps.Gamma
        OtR = O.T @ self.R_bold_inv
        GtR = G.T @ self.R_bold_inv
        self.OtRO = OtR @ O
        self.OtRG = OtR @ G
        self.GtRG = GtR @ G
        self.kkt = np.block([
            [self.P_inv + self.OtRO, self.OtRG],
            [self.OtRG.T, self.Q_bold_inv + self.GtRG],
        ])
        self.kkt_factor = spd_factor(self.kkt, "centralized normal equations")

        # Grouped ordering: permutation taking a split-ordered vector to
        # (x_1, w_1, x_2, w_2, ...), plus grouped operators.
        n_x = p.n_states
        grouped = []
        for i in p.ids:
            grouped.extend(p.state_indices(i))
            grouped.extend(n_x + p.disturbance_indices(i, N))
        self.grouped_from_split = np.asarray(grouped, dtype=int)
        self.split_from_grouped = np.argsort(self.grouped_from_split)
        self.grouped_owners = self.split_owners[self.grouped_from_split]
        self._grouped_mask = self.grouped_owners[:, None] == self.grouped_owners[None, :]

        self.Pi_blocks = {}
        self.Q_tilde_blocks = {}
        per = {}
        for i in p.ids:
            O_i, G_i = column_block(maps, model, i)
            Pi_i = np.hstack([O_i, G_i])
            self.Pi_blocks[i] = Pi_i
            Q_bold_i = np.kron(np.eye(N), weights.Q[i])
            self.Q_tilde_blocks[i] = sla.block_diag(weights.P[i], Q_bold_i)
            P_i_inv = spd_inverse(weights.P[i], f"P_{i}")
            Q_bold_i_inv = np.kron(np.eye(N), spd_inverse(weights.Q[i], f"Q_{i}"))
            m11 = P_i_inv + O_i.T @ self.R_bold_inv @ O_i
            m12 = O_i.T @ self.R_bold_inv @ G_i
            m22 = Q_bold_i_inv + G_i.T @ self.R_bold_inv @ G_i
            noise_plus_dist = self.R_bold + G_i @ Q_bold_i @ G_i.T
            noise_plus_prior = self.R_bold + O_i @ weights.P[i] @ O_i.T
            schur_x = P_i_inv + O_i.T @ spd_solve(
                spd_factor(noise_plus_dist, f"noise+disturbance covariance[{i}]"), O_i)
            schur_w = Q_bold_i_inv + G_i.T @ spd_solve(
                spd_factor(noise_plus_prior, f"noise+prior covariance[{i}]"), G_i)
            hessian = np.block([[m11, m12], [m12.T, m22]])
            per[i] = SubsystemOperators(
                index=i,
                O_block=O_i,
                Gamma_block=G_i,
                m11=m11, m12=m12, m22=m22,
                schur_x=schur_x, schur_w=schur_w,
                m11_factor=spd_factor(m11, f"m11[{i}]"),
                m22_factor=spd_factor(m22, f"m22[{i}]"),
                schur_x_factor=spd_factor(schur_x, f"state Schur complement[{i}]"),
                schur_w_factor=spd_factor(schur_w, f"disturbance Schur complement[{i}]"),
                hessian=hessian,
                hessian_factor=spd_factor(hessian, f"local Hessian[{i}]"),
            )
        self.subsystem_operators = per

        self.Pi = np.hstack([self.Pi_blocks[i] for i in p.ids])
        self.Q_tilde = sla.block_diag(*[self.Q_tilde_blocks[i] for i in p.ids])
        self.Q_tilde_inv = sla.block_diag(
            *[spd_inverse(self.Q_tilde_blocks[i], f"Q_tilde_{i}") for i in p.ids])
        self.hessian_grouped = self.Q_tilde_inv + self.Pi.T @ self.R_bold_inv @ self.Pi
        self.scaling_grouped = self.Q_tilde_inv + self.block_diagonal_part(
            self.Pi.T @ self.R_bold_inv @ self.Pi, ordering="grouped")

    # -- subsystem-block decomposition -------------------------------------

    def block_diagonal_part(self, M, ordering="split"):
        """Same-subsystem part of ``M`` (exact: entries are kept or zeroed).

        ``ordering`` selects which variable layout the rows/columns of ``M``
        follow: ``"split"`` for the (state, disturbance-window) stacking,
        ``"grouped"`` for the per-subsystem stacking, ``"state"`` for a
        state-only block such as the observation information matrix, and
        ``"window"`` for a disturbance-window-only block.
        """
        masks = {
            "split": self._split_mask,
            "grouped": self._grouped_mask,
            "state": self._state_mask,
            "window": self._window_mask,
        }
        try:
            mask = masks[ordering]
        except KeyError:
            raise DimensionMismatchError(f"unknown ordering {ordering!r}") from None
        if M.shape != mask.shape:
            raise DimensionMismatchError(
                f"matrix of shape {M.shape} does not match the {ordering} ordering "
                f"dimension {mask.shape[0]}")
        return np.where(mask, M, 0.0)

    def off_diagonal_part(self, M, ordering="split"):
        """Cross-subsystem part: the exact complement of the same-subsystem part."""
        return M - self.block_diagonal_part(M, ordering)

    # -- ordering conversions ----------------------------------------------

    def to_grouped(self, z_split):
        return np.asarray(z_split)[..., self.grouped_from_split]

    def to_split(self, z_grouped):
        return np.asarray(z_grouped)[..., self.split_from_grouped]

    def grouped_slice(self, index):
        """Slice of subsystem ``index`` inside a grouped-ordered vector."""
        p = self.model.partition
        p.require(index)
        start = 0
        for j in p.ids:
            width = p.state_sizes[j] * (1 + self.N)
            if j == index:
                return slice(start, start + width)
            start += width
        raise AssertionError("unreachable")


def derive_composites(weights, maps, model):
    """Derive every composite weighting object used by the estimators.

    Returns a :class:`DerivedWeights` bundle holding the stacked weights, the
    centralized normal-equation matrix and factor, per-subsystem operators,
    the grouped-ordering operators, and the same-subsystem/cross-subsystem
    decomposition helpers.
    """
    return DerivedWeights(weights, maps, model)
