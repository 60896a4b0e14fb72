"""Simulation-based region-of-attraction oracle and ellipsoid geometry.

The empirical oracle replaces the limit definition of the ROA with a finite
surrogate: a start converges when the state norm after ``horizon`` steps is
below ``tol`` and the trajectory never diverged. Grid points are evaluated
in one batch for speed; the result is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .plant import DIVERGENCE_LIMIT
from .policy import forward

DEFAULT_HORIZON = 400
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box grid: per-axis (name, low, high, count)."""
    axes: tuple

    def __post_init__(self):
        for name, lo, hi, count in self.axes:
            if count < 2:
                raise ContractError(f"axis '{name}' needs resolution >= 2")
            if not lo < hi:
                raise ContractError(f"axis '{name}' needs low < high")

    @property
    def names(self):
        return tuple(a[0] for a in self.axes)

    def points(self):
        """All grid points in C (row-major) order, shape (N, n_axes)."""
        ticks = [np.linspace(lo, hi, count) for _, lo, hi, count in self.axes]
        mesh = np.meshgrid(*ticks, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class RoaGridReport:
    points: np.ndarray       # (N, n_G)
    converged: np.ndarray    # (N,) bool
    final_norms: np.ndarray  # (N,), inf where diverged
    horizon: int
    tol: float


def _closed_loop_batch(plant, policy, X, horizon):
    """Roll every row of X forward under u = policy(x); returns final states.

    Diverged rows (non-finite or > 1e9 magnitude) are frozen and flagged.
    """
    X = np.array(X, dtype=float)
    alive = np.ones(X.shape[0], dtype=bool)
    A_T, B_T = plant.A.T, plant.B.T
    for _ in range(horizon):
        if not alive.any():
            break
        Xa = X[alive]
        U, _, _ = forward(policy, Xa)
        Xn = Xa @ A_T + U @ B_T
        bad = ~np.all(np.isfinite(Xn), axis=1) | (
            np.max(np.abs(np.where(np.isfinite(Xn), Xn, np.inf)), axis=1)
            > DIVERGENCE_LIMIT)
        X[alive] = np.where(bad[:, None], Xa, Xn)
        idx = np.flatnonzero(alive)
        alive[idx[bad]] = False
    return X, alive


def empirical_roa(plant, policy, grid, horizon=DEFAULT_HORIZON,
                  tol=DEFAULT_TOL):
    """Classify every grid start as converged or not under the closed loop."""
    if plant.n_states != policy.n_in:
        raise ContractError("plant and policy dimensions do not match")
    points = grid.points() if isinstance(grid, GridSpec) else np.asarray(grid, float)
    if points.ndim != 2 or points.shape[1] != plant.n_states:
        raise ContractError(
            f"grid points must be (N, {plant.n_states}), got {points.shape}")
    finals, alive = _closed_loop_batch(plant, policy, points, horizon)
    norms = np.linalg.norm(finals, axis=1)
    norms[~alive] = np.inf
    converged = alive & (norms < tol)
    return RoaGridReport(points=points, converged=converged,
                         final_norms=norms, horizon=horizon, tol=tol)


@dataclass(frozen=True)
class SoundnessAudit:
    violations: np.ndarray   # states inside the ellipsoid that failed to converge
    n_inside: int
    n_checked: int

    @property
    def ok(self):
        return self.violations.shape[0] == 0


def soundness_audit(cert, report):
    """List grid points inside E(P, x*) that did not converge.

    Empty for any valid certificate: the ellipsoid is an inner approximation
    of the true ROA.
    """
    if report.points.shape[0] == 0:
        return SoundnessAudit(
            violations=np.zeros((0, cert.P.shape[0])), n_inside=0, n_checked=0)
    inside = cert.ellipsoid.contains_points(report.points)
    bad = inside & ~report.converged
    return SoundnessAudit(
        violations=report.points[bad],
        n_inside=int(np.sum(inside)),
        n_checked=report.points.shape[0])


def volume_proxy(ellipsoid):
    """det(P)^(-1/2), proportional to the ellipsoid's Lebesgue volume."""
    P = np.asarray(ellipsoid.P, dtype=float)
    try:
        L = np.linalg.cholesky(0.5 * (P + P.T))
    except np.linalg.LinAlgError:
        raise ContractError("volume proxy needs a symmetric positive "
                            "definite P") from None
    return float(np.prod(np.diag(L)) ** -1.0)


def ellipse_boundary(ellipsoid, axes=(0, 1), n_points=256):
    """Boundary of the 2D slice of E(P, x*) through the center.

    For dimensions beyond two the slice fixes the remaining coordinates at
    the center, so the relevant quadratic form is the 2x2 submatrix of P.
    """
    P = np.asarray(ellipsoid.P, dtype=float)
    i, j = axes
    sub = P[np.ix_([i, j], [i, j])]
    vals, vecs = np.linalg.eigh(sub)
    if np.any(vals <= 0):
        raise ContractError("slice of P is not positive definite")
    theta = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts2 = circle @ np.diag(vals ** -0.5) @ vecs.T
    out = np.tile(ellipsoid.center, (n_points, 1))
    out[:, i] += pts2[:, 0]
    out[:, j] += pts2[:, 1]
    return out
