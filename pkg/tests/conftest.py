"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from dmhe import (EstimatorWeights, WindowState, assemble_composite,
                  build_stacked_maps, check_observability, derive_composites,
                  load_benchmark, SubsystemModel)


def make_partitioned_system(rng, state_sizes, output_sizes=None, input_sizes=None,
                            coupling=0.15, spectral=0.9, base=1):
    """Random partitioned system with the composite spectral radius pinned.

    The composite state matrix is drawn dense, its off-diagonal blocks are
    shrunk by ``coupling``, and the whole matrix is rescaled to spectral
    radius ``spectral`` before being carved back into subsystem blocks.
    """
    n = len(state_sizes)
    output_sizes = output_sizes or list(state_sizes)
    input_sizes = input_sizes or [1] * n
    offsets = np.concatenate([[0], np.cumsum(state_sizes)]).astype(int)
    in_offsets = np.concatenate([[0], np.cumsum(input_sizes)]).astype(int)
    n_x = offsets[-1]

    A = rng.normal(size=(n_x, n_x))
    for a in range(n):
        for b in range(n):
            if a != b:
                A[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] *= coupling
    radius = max(abs(np.linalg.eigvals(A)))
    if radius > 0:
        A *= spectral / radius
    B = rng.normal(size=(n_x, in_offsets[-1])) * 0.5

    subsystems = []
    for a in range(n):
        rows = slice(offsets[a], offsets[a + 1])
        A_coupling = {}
        B_coupling = {}
        for b in range(n):
            if b == a:
                continue
            A_coupling[base + b] = A[rows, offsets[b]:offsets[b + 1]]
            B_coupling[base + b] = B[rows, in_offsets[b]:in_offsets[b + 1]]
        C_self = rng.normal(size=(output_sizes[a], state_sizes[a]))
        subsystems.append(SubsystemModel(
            index=base + a,
            A_self=A[rows, rows],
            B_self=B[rows, in_offsets[a]:in_offsets[a + 1]],
            C_self=C_self,
            A_coupling=A_coupling,
            B_coupling=B_coupling,
        ))
    return assemble_composite(subsystems)


def make_observable_system(rng, state_sizes, N, **kwargs):
    """Draw partitioned systems until the horizon-N observability test passes."""
    for _ in range(50):
        model = make_partitioned_system(rng, state_sizes, **kwargs)
        if check_observability(model, N).observable:
            return model
    raise AssertionError("failed to draw an observable random system")


def make_setup(rng, state_sizes, N, prior=1.0, disturbance=0.5, noise=1.0,
               **kwargs):
    """Observable random system plus weights and the derived bundle."""
    model = make_observable_system(rng, state_sizes, N, **kwargs)
    weights = EstimatorWeights.from_scalars(model, prior, disturbance, noise)
    maps = build_stacked_maps(model, N)
    derived = derive_composites(weights, maps, model)
    return model, weights, maps, derived


def random_window(rng, derived, k=None):
    """Random measurement/input window consistent with the bundle dimensions."""
    maps = derived.maps
    N = maps.N
    return WindowState(
        k=N if k is None else k,
        y_window=rng.normal(size=maps.O.shape[0]),
        u_window=rng.normal(size=maps.Lambda.shape[1]),
        prior=rng.normal(size=derived.model.n_states),
    )


def finite_difference_gradient(f, z, h=1e-6):
    """Central-difference gradient of a scalar function."""
    g = np.zeros_like(z, dtype=float)
    for i in range(z.size):
        step = np.zeros_like(z, dtype=float)
        step[i] = h
        g[i] = (f(z + step) - f(z - step)) / (2 * h)
    return g


def quadratic_minimizer_by_differences(f, dim, h=1e-3):
    """Exact minimizer of a quadratic scalar function via finite differences.

    Central second differences recover a quadratic's Hessian and gradient to
    roundoff, so the minimizer solves ``H z = -g0``.
    """
    z0 = np.zeros(dim)
    f0 = f(z0)
    H = np.zeros((dim, dim))
    g = np.zeros(dim)
    basis = np.eye(dim) * h
    for i in range(dim):
        fp = f(z0 + basis[i])
        fm = f(z0 - basis[i])
        g[i] = (fp - fm) / (2 * h)
        H[i, i] = (fp - 2 * f0 + fm) / h**2
    for i in range(dim):
        for j in range(i + 1, dim):
            fpp = f(z0 + basis[i] + basis[j])
            fpm = f(z0 + basis[i] - basis[j])
            fmp = f(z0 - basis[i] + basis[j])
            fmm = f(z0 - basis[i] - basis[j])
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return np.linalg.solve(H, -g)


def literal_local_objective(index, window, neighbor_iterates, prior_i, derived):
    """The subsystem window objective evaluated from its definition.

    Independent of the normal-equation code path: raw slicing of the stacked
    maps, literal penalty sums, and plain ``np.linalg.solve`` against the
    weight matrices.
    """
    model = derived.model
    p = model.partition
    maps = derived.maps
    N = maps.N
    P_i = derived.weights.P[index]
    Q_i = derived.weights.Q[index]
    n_i = p.state_sizes[index]

    def objective(z):
        x_i = z[:n_i]
        w_i = z[n_i:]
        dx = x_i - prior_i
        value = 0.5 * dx @ np.linalg.solve(P_i, dx)
        for stage in range(N):
            w_stage = w_i[stage * n_i:(stage + 1) * n_i]
            value += 0.5 * w_stage @ np.linalg.solve(Q_i, w_stage)
        # residual of the stacked output window given everyone's iterates
        contribution = maps.O[:, p.state_slice(index)] @ x_i
        contribution += maps.Gamma[:, p.disturbance_indices(index, N)] @ w_i
        for j in p.ids:
            if j == index:
                continue
            it = neighbor_iterates[j]
            contribution += maps.O[:, p.state_slice(j)] @ it.x_hat
            contribution += maps.Gamma[:, p.disturbance_indices(j, N)] @ it.w_hat_window
        residual = window.y_window - contribution - maps.Lambda @ window.u_window
        for l in p.ids:
            R_l = derived.weights.R[l]
            rows = p.output_indices(l, N)
            r_l = residual[rows]
            for stage in range(N + 1):
                n_y_l = p.output_sizes[l]
                piece = r_l[stage * n_y_l:(stage + 1) * n_y_l]
                value += 0.5 * piece @ np.linalg.solve(R_l, piece)
        return float(value)

    return objective


@pytest.fixture(scope="session")
def benchmark():
    return load_benchmark()


@pytest.fixture(scope="session")
def benchmark_derived(benchmark):
    weights = EstimatorWeights.from_scalars(benchmark.model, 0.1, 1e-4, 1e-4)
    maps = build_stacked_maps(benchmark.model, 10)
    return derive_composites(weights, maps, benchmark.model)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
