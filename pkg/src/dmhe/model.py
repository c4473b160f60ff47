"""Partitioned linear system models and horizon-stacked maps.

A system is described subsystem by subsystem: each subsystem owns an exclusive
block of states, inputs, and outputs, with dense coupling blocks toward its
neighbors in the state and input equations. Outputs are strictly local, so the
composite output matrix is block diagonal.

The stacked maps gather, over an estimation window of ``N`` steps, the linear
response of the output window to the window-initial state (``O``), to the
disturbance sequence (``Gamma``), and to the known-input sequence
(``Lambda``). The disturbance and input windows are stored stage-major: the
window vector concatenates one full composite vector per stage, oldest stage
first. Per-subsystem column blocks therefore gather, for every stage, the
columns belonging to that subsystem.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, UnknownSubsystemError, ConfigError


def _as_matrix(value, name):
    M = np.array(value, dtype=float)
    if M.ndim != 2 or M.shape[0] == 0 or M.shape[1] == 0:
        raise DimensionMismatchError(f"{name} must be a nonempty 2-D matrix, got shape {M.shape}")
    M.flags.writeable = False
    return M


@dataclass(frozen=True)
class SubsystemModel:
    """One subsystem of a partitioned linear system.

    Parameters
    ----------
    index : int
        Subsystem id. Ids across a partition must form a contiguous range
        starting at 0 or 1.
    A_self, B_self, C_self : array_like
        Own-block state, input, and output matrices.
    A_coupling, B_coupling : dict[int, array_like]
        Coupling blocks toward other subsystems, keyed by neighbor id.
    """

    index: int
    A_self: np.ndarray
    B_self: np.ndarray
    C_self: np.ndarray
    A_coupling: dict = field(default_factory=dict)
    B_coupling: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "A_self", _as_matrix(self.A_self, f"A_self[{self.index}]"))
        object.__setattr__(self, "B_self", _as_matrix(self.B_self, f"B_self[{self.index}]"))
        object.__setattr__(self, "C_self", _as_matrix(self.C_self, f"C_self[{self.index}]"))
        n = self.n_states
        if self.A_self.shape != (n, n):
            raise DimensionMismatchError(
                f"A_self[{self.index}] must be square, got {self.A_self.shape}")
        if self.B_self.shape[0] != n:
            raise DimensionMismatchError(
                f"B_self[{self.index}] must have {n} rows, got {self.B_self.shape[0]}")
        if self.C_self.shape[1] != n:
            raise DimensionMismatchError(
                f"C_self[{self.index}] must have {n} columns, got {self.C_self.shape[1]}")
        for attr in ("A_coupling", "B_coupling"):
            frozen = {}
            for j, block in getattr(self, attr).items():
                if j == self.index:
                    raise DimensionMismatchError(
                        f"{attr}[{self.index}] must not include the subsystem itself")
                block = _as_matrix(block, f"{attr}[{self.index}][{j}]")
                if block.shape[0] != n:
                    raise DimensionMismatchError(
                        f"{attr} block from subsystem {j} to {self.index} has "
                        f"{block.shape[0]} rows, expected {n}")
                frozen[int(j)] = block
            object.__setattr__(self, attr, frozen)

    @property
    def n_states(self):
        return self.A_self.shape[0]

    @property
    def n_inputs(self):
        return self.B_self.shape[1]

    @property
    def n_outputs(self):
        return self.C_self.shape[0]


class Partition:
    """Offset bookkeeping for the subsystem blocks of a composite model."""

    def __init__(self, ids, state_sizes, input_sizes, output_sizes):
        self.ids = tuple(ids)
        self.state_sizes = dict(zip(self.ids, state_sizes))
        self.input_sizes = dict(zip(self.ids, input_sizes))
        self.output_sizes = dict(zip(self.ids, output_sizes))
        self.state_offsets = dict(zip(self.ids, np.concatenate([[0], np.cumsum(state_sizes)[:-1]]).astype(int)))
        self.input_offsets = dict(zip(self.ids, np.concatenate([[0], np.cumsum(input_sizes)[:-1]]).astype(int)))
        self.output_offsets = dict(zip(self.ids, np.concatenate([[0], np.cumsum(output_sizes)[:-1]]).astype(int)))
        self.n_states = int(sum(state_sizes))
        self.n_inputs = int(sum(input_sizes))
        self.n_outputs = int(sum(output_sizes))

    def __len__(self):
        return len(self.ids)

    def require(self, index):
        if index not in self.state_sizes:
            raise UnknownSubsystemError(index, self.ids)

    def state_slice(self, index):
        self.require(index)
        off = self.state_offsets[index]
        return slice(off, off + self.state_sizes[index])

    def output_slice(self, index):
        self.require(index)
        off = self.output_offsets[index]
        return slice(off, off + self.output_sizes[index])

    def input_slice(self, index):
        self.require(index)
        off = self.input_offsets[index]
        return slice(off, off + self.input_sizes[index])

    def state_indices(self, index):
        s = self.state_slice(index)
        return np.arange(s.start, s.stop)

    def disturbance_indices(self, index, N):
        """Indices of subsystem ``index`` inside a stage-major disturbance window."""
        base = self.state_indices(index)
        return np.concatenate([base + stage * self.n_states for stage in range(N)])

    def output_indices(self, index, N):
        """Indices of subsystem ``index`` inside a stage-major output window of N+1 stages."""
        s = self.output_slice(index)
        base = np.arange(s.start, s.stop)
        return np.concatenate([base + stage * self.n_outputs for stage in range(N + 1)])

    def state_owners(self):
        """Owner id of every composite state component."""
        owners = np.empty(self.n_states, dtype=int)
        for i in self.ids:
            owners[self.state_slice(i)] = i
        return owners


@dataclass(frozen=True)
class CompositeModel:
    """Block-assembled model of the entire system."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    partition: Partition

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, "B"))
        object.__setattr__(self, "C", _as_matrix(self.C, "C"))

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    @property
    def n_subsystems(self):
        return len(self.partition)

    def subsystem(self, index):
        """Re-extract the subsystem blocks for ``index`` (inverse of assembly)."""
        p = self.partition
        p.require(index)
        rows = p.state_slice(index)
        A_coupling = {}
        B_coupling = {}
        for j in p.ids:
            if j == index:
                continue
            block = self.A[rows, p.state_slice(j)]
            if np.any(block):
                A_coupling[j] = block
            block = self.B[rows, p.input_slice(j)]
            if np.any(block):
                B_coupling[j] = block
        return SubsystemModel(
            index=index,
            A_self=self.A[rows, rows],
            B_self=self.B[rows, p.input_slice(index)],
            C_self=self.C[p.output_slice(index), rows],
            A_coupling=A_coupling,
            B_coupling=B_coupling,
        )


def assemble_composite(subsystems):
    """Assemble subsystem models into the composite model.

    Subsystem ids must form a contiguous range starting at 0 or 1. Coupling
    blocks must agree with the neighbor's state and input sizes; inconsistent
    blocks raise :class:`DimensionMismatchError` naming both subsystems.
    """
    if not subsystems:
        raise DimensionMismatchError("at least one subsystem is required")
    ordered = sorted(subsystems, key=lambda s: s.index)
    ids = [s.index for s in ordered]
    base = ids[0]
    if base not in (0, 1) or ids != list(range(base, base + len(ids))):
        raise DimensionMismatchError(
            f"subsystem ids must be contiguous from 0 or 1, got {ids}")

    partition = Partition(
        ids,
        [s.n_states for s in ordered],
        [s.n_inputs for s in ordered],
        [s.n_outputs for s in ordered],
    )
    A = np.zeros((partition.n_states, partition.n_states))
    B = np.zeros((partition.n_states, partition.n_inputs))
    C = np.zeros((partition.n_outputs, partition.n_states))
    for sub in ordered:
        rows = partition.state_slice(sub.index)
        A[rows, partition.state_slice(sub.index)] = sub.A_self
        B[rows, partition.input_slice(sub.index)] = sub.B_self
        C[partition.output_slice(sub.index), rows] = sub.C_self
        for j, block in sub.A_coupling.items():
            partition.require(j)
            if block.shape[1] != partition.state_sizes[j]:
                raise DimensionMismatchError(
                    f"state coupling from subsystem {j} into {sub.index} has "
                    f"{block.shape[1]} columns but subsystem {j} has "
                    f"{partition.state_sizes[j]} states")
            A[rows, partition.state_slice(j)] = block
        for j, block in sub.B_coupling.items():
            partition.require(j)
            if block.shape[1] != partition.input_sizes[j]:
                raise DimensionMismatchError(
                    f"input coupling from subsystem {j} into {sub.index} has "
                    f"{block.shape[1]} columns but subsystem {j} has "
                    f"{partition.input_sizes[j]} inputs")
            B[rows, partition.input_slice(j)] = block
    return CompositeModel(A=A, B=B, C=C, partition=partition)


@dataclass(frozen=True)
class StackedMaps:
    """Horizon-stacked output response maps over an ``N``-step window.

    ``O`` has block row ``t`` equal to ``C A^t`` for ``t = 0..N``. ``Gamma``
    and ``Lambda`` are strictly block lower triangular: block ``(t, s)`` is
    ``C A^(t-s-1)`` (``Gamma``) or ``C A^(t-s-1) B`` (``Lambda``) for
    ``s < t`` and zero otherwise.
    """

    N: int
    O: np.ndarray
    Gamma: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        for name in ("O", "Gamma", "Lambda"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def build_stacked_maps(model, N):
    """Build the stacked maps ``O``, ``Gamma``, ``Lambda`` for horizon ``N``.

    ``N`` must be at least 1: the estimation objective penalizes at least one
    disturbance stage.
    """
    if N < 1:
        raise DimensionMismatchError(f"horizon must be >= 1, got {N}")
    A, B, C = model.A, model.B, model.C
    n_x, n_y, n_u = model.n_states, model.n_outputs, model.n_inputs

    # C A^t for t = 0..N, computed by repeated multiplication
    powers = np.empty((N + 1, n_y, n_x))
    powers[0] = C
    for t in range(1, N + 1):
        powers[t] = powers[t - 1] @ A

    O = powers.reshape((N + 1) * n_y, n_x)
    Gamma = np.zeros(((N + 1) * n_y, N * n_x))
    Lambda = np.zeros(((N + 1) * n_y, N * n_u))
    CB = powers @ B  # CB[t] = C A^t B
    for t in range(1, N + 1):
        for s in range(t):
            Gamma[t * n_y:(t + 1) * n_y, s * n_x:(s + 1) * n_x] = powers[t - s - 1]
            Lambda[t * n_y:(t + 1) * n_y, s * n_u:(s + 1) * n_u] = CB[t - s - 1]
    return StackedMaps(N=N, O=O, Gamma=Gamma, Lambda=Lambda)


@dataclass(frozen=True)
class ObservabilityReport:
    observable: bool
    rank: int
    n_states: int
    singular_values: np.ndarray
    tolerance: float


def check_observability(model, N):
    """Numerical-rank test of the stacked observation map over ``N+1`` steps.

    The system is reported observable when the number of singular values of
    ``O`` above ``n_x * eps * sigma_max`` equals ``n_x``.
    """
    maps = build_stacked_maps(model, N)
    singular_values = np.linalg.svd(maps.O, compute_uv=False)
    tol = model.n_states * np.finfo(float).eps * (singular_values[0] if len(singular_values) else 0.0)
    rank = int(np.sum(singular_values > tol))
    return ObservabilityReport(
        observable=rank == model.n_states,
        rank=rank,
        n_states=model.n_states,
        singular_values=singular_values,
        tolerance=float(tol),
    )


def column_block(maps, model, index):
    """Columns of ``O`` and ``Gamma`` associated with subsystem ``index``.

    The ``O`` block selects the subsystem's state columns; the ``Gamma`` block
    gathers, for every stage of the window, the columns of that stage
    belonging to the subsystem.
    """
    p = model.partition
    O_i = maps.O[:, p.state_slice(index)]
    Gamma_i = maps.Gamma[:, p.disturbance_indices(index, maps.N)]
    return O_i, Gamma_i


def row_block(maps, model, index):
    """Rows of ``O``, ``Gamma``, ``Lambda`` for subsystem ``index``'s outputs."""
    p = model.partition
    rows = p.output_indices(index, maps.N)
    return maps.O[rows, :], maps.Gamma[rows, :], maps.Lambda[rows, :]


def load_model(path):
    """Load a partitioned model from a JSON file.

    The file lists the subsystems with row-major matrices::

        {"subsystems": [
            {"index": 1,
             "A_self": [[...], ...],
             "A_coupling": {"2": [[...], ...]},
             "B_self": [[...], ...],
             "B_coupling": {},
             "C_self": [[...], ...]},
            ...]}
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return model_from_dict(raw)


def model_from_dict(raw):
    """Build a composite model from the JSON-shaped dictionary layout."""
    if not isinstance(raw, dict) or "subsystems" not in raw:
        raise ConfigError("model file must contain a 'subsystems' list")
    subsystems = []
    for entry in raw["subsystems"]:
        try:
            subsystems.append(SubsystemModel(
                index=int(entry["index"]),
                A_self=entry["A_self"],
                B_self=entry["B_self"],
                C_self=entry["C_self"],
                A_coupling={int(k): v for k, v in entry.get("A_coupling", {}).items()},
                B_coupling={int(k): v for k, v in entry.get("B_coupling", {}).items()},
            ))
        except KeyError as exc:
            raise ConfigError(f"model subsystem entry missing field {exc}") from exc
    return assemble_composite(subsystems)
