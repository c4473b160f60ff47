"""Dense linear-algebra helpers shared across the estimator modules.

Symmetric positive-definite systems are always solved through a Cholesky
factorization; explicit inverses appear only where a weight matrix itself is
part of a larger operator, and those are formed by solving against the
identity.
"""

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, ConvergenceError


def spd_factor(M, name="matrix"):
    """Cholesky-factor a symmetric positive-definite matrix.

    Raises
    ------
    ConditioningError
        If the factorization fails.
    """
    try:
        return sla.cho_factor(M, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise ConditioningError(f"Cholesky factorization of {name} failed: {exc}") from exc


def spd_solve(factor, B):
    """Solve ``M x = B`` given a factor from :func:`spd_factor`."""
    return sla.cho_solve(factor, B, check_finite=False)


def spd_inverse(M, name="matrix"):
    """Materialize the inverse of an SPD matrix via its Cholesky factor."""
    return spd_solve(spd_factor(M, name), np.eye(M.shape[0]))


def spectral_radius(M):
    """Largest eigenvalue magnitude of a general square matrix."""
    try:
        eigenvalues = sla.eigvals(M, check_finite=False)
    except sla.LinAlgError as exc:
        raise ConditioningError(f"eigensolver failed: {exc}") from exc
    return float(np.max(np.abs(eigenvalues)))


def symmetric_eigenrange(M):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix."""
    try:
        eigenvalues = sla.eigvalsh(M, check_finite=False)
    except sla.LinAlgError as exc:
        raise ConditioningError(f"symmetric eigensolver failed: {exc}") from exc
    return float(eigenvalues[0]), float(eigenvalues[-1])


def project_box(v, lower, upper):
    """Componentwise clamp of ``v`` onto ``[lower, upper]``."""
    return np.clip(v, lower, upper)


def _polish_active_set(H, b, lower, upper, z, step):
    """Solve the QP exactly on the face suggested by the current iterate.

    Components clamped at a bound (or pushed into it by the gradient) are
    frozen; the remaining free block is solved directly. Returns ``None`` when
    the face solve is infeasible or not optimal for the full problem.
    """
    g = H @ z - b
    at_lower = (z <= lower) & (g > 0)
    at_upper = (z >= upper) & (g < 0)
    free = ~(at_lower | at_upper)
    candidate = np.where(at_lower, lower, np.where(at_upper, upper, z))
    if np.any(free):
        idx = np.flatnonzero(free)
        Hff = H[np.ix_(idx, idx)]
        rhs = b[idx] - H[np.ix_(idx, ~free)] @ candidate[~free]
        try:
            zf = spd_solve(spd_factor(Hff, "active-set block"), rhs)
        except ConditioningError:
            return None
        if np.any(zf < lower[idx]) or np.any(zf > upper[idx]):
            return None
        candidate = candidate.copy()
        candidate[idx] = zf
    residual = np.linalg.norm(
        candidate - project_box(candidate - step * (H @ candidate - b), lower, upper)
    )
    return candidate, residual


def solve_box_qp(H, b, lower, upper, start=None, tol=1e-10, max_iter=50000,
                 polish_every=250):
    """Minimize ``0.5 z'Hz - z'b`` over the box ``[lower, upper]``.

    The workhorse is projected gradient descent with the fixed step
    ``1 / lambda_max(H)``, terminating when the iterate displacement drops
    below ``tol``. Two exact shortcuts keep the iteration count low: the
    unconstrained minimizer is returned directly when it is feasible, and a
    direct solve on the currently active face is attempted periodically and
    accepted when it satisfies the projected-gradient optimality test.

    Returns
    -------
    (z, iterations, residual)
        Solution, projected-gradient steps taken, and final fixed-point
        residual.

    Raises
    ------
    ConvergenceError
        If the iteration cap is reached before the tolerance.
    EmptyBoxError
        If ``lower > upper`` on any component.
    """
    from .errors import EmptyBoxError

    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise EmptyBoxError("box constraint has lower > upper")

    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    factor = spd_factor(H, "box QP Hessian")
    z_free = spd_solve(factor, b)
    if np.all(z_free >= lower) and np.all(z_free <= upper):
        return z_free, 0, 0.0

    lam_max = symmetric_eigenrange(H)[1]
    step = 1.0 / lam_max
    z = project_box(z_free if start is None else np.asarray(start, dtype=float),
                    lower, upper)
    displacement = np.inf
    for iteration in range(1, max_iter + 1):
        z_next = project_box(z - step * (H @ z - b), lower, upper)
        displacement = float(np.linalg.norm(z_next - z))
        z = z_next
        if displacement <= tol:
            return z, iteration, displacement
        if iteration % polish_every == 0:
            polished = _polish_active_set(H, b, lower, upper, z, step)
            if polished is not None and polished[1] <= tol:
                return polished[0], iteration, polished[1]
    polished = _polish_active_set(H, b, lower, upper, z, step)
    if polished is not None and polished[1] <= tol:
        return polished[0], max_iter, polished[1]
    raise ConvergenceError("box QP projected gradient hit the iteration cap",
                           residual=displacement, iterations=max_iter)
