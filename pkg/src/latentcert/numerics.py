"""Shared numerical kernels.

Plain float64 numpy throughout: a classical RK4 step with zero-order-hold
input, a discrete-time algebraic Riccati solver by value iteration, right
pseudoinverses for full-row-rank Jacobians, 2-d convex hulls (monotone chain)
with half-plane membership, and central-difference Jacobians used to
cross-check hand-written gradients.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import (
    ContractError,
    DegenerateGeometryError,
    DivergenceError,
    NumericError,
    RankError,
)

Vec = np.ndarray  # shape (n,)
Mat = np.ndarray  # shape (n, m)


def require_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains non-finite entries")
    return a


def rk4_step(deriv: Callable, x: Vec, u, dt: float) -> Vec:
    """One classical Runge-Kutta step of xdot = deriv(x, u), u held constant.

    Accepts a single state (n,) or a batch (m, n) as long as `deriv`
    broadcasts the same way. Non-finite results raise NumericError.
    """
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(deriv(x, u), dtype=float)
    k2 = np.asarray(deriv(x + (0.5 * dt) * k1, u), dtype=float)
    k3 = np.asarray(deriv(x + (0.5 * dt) * k2, u), dtype=float)
    k4 = np.asarray(deriv(x + dt * k3, u), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return require_finite(out, "rk4 step")


def _check_symmetric(M: Mat, name: str, tol: float = 1e-9) -> Mat:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"{name} must be square, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > tol * (1.0 + np.max(np.abs(M))):
        raise ContractError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


def dare_solve(A: Mat, B: Mat, Q: Mat, R: Mat, tol: float = 1e-10,
               max_iter: int = 100_000) -> tuple[Mat, Mat]:
    """Solve the discrete-time algebraic Riccati equation by value iteration.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA from P0 = Q until the
    Frobenius norm of the update drops below `tol`. Returns (P, K) with
    K = (R + B'PB)^{-1} B'PA, the gain of the optimal policy u = -K x.

    Preconditions: Q symmetric positive semidefinite, R symmetric positive
    definite (ContractError otherwise). Hitting the iteration cap or
    producing non-finite iterates raises DivergenceError.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Q = _check_symmetric(Q, "Q")
    R = _check_symmetric(R, "R")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ContractError(f"incompatible shapes A{A.shape}, B{B.shape}")
    if np.any(np.linalg.eigvalsh(Q) < -1e-9):
        raise ContractError("Q must be positive semidefinite")
    if np.any(np.linalg.eigvalsh(R) <= 0.0):
        raise ContractError("R must be positive definite")

    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        S = R + BtP @ B
        K = np.linalg.solve(S, BtP @ A)
        P_next = Q + A.T @ P @ A - (BtP @ A).T @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or np.max(np.abs(P_next)) > 1e100:
            raise DivergenceError("Riccati iteration diverged")
        if np.linalg.norm(P_next - P, ord="fro") <= tol:
            BtP = B.T @ P_next
            K = np.linalg.solve(R + BtP @ B, BtP @ A)
            return P_next, K
        P = P_next
    raise DivergenceError(
        f"Riccati value iteration did not converge in {max_iter} iterations")


def pinv_row_fullrank(J: Mat, cond_max: float = 1e12) -> Mat:
    """Right pseudoinverse J^+ = J' (J J')^{-1} of a full-row-rank matrix.

    Raises RankError when J J' is numerically singular: smallest eigenvalue
    at or below largest/cond_max (covers the all-zero case too).
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {J.shape}")
    G = J @ J.T
    w = np.linalg.eigvalsh(G)
    if w[-1] <= 0.0 or w[0] <= w[-1] / cond_max:
        raise RankError(
            f"matrix is not full row rank (gram eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
    return np.linalg.solve(G, J).T


def spectral_radius(A: Mat) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points: Mat) -> Mat:
    """Convex hull of a 2-d point cloud by Andrew's monotone chain.

    Returns vertices in counterclockwise order, starting from the
    lexicographically smallest point, with no three consecutive collinear
    vertices. Fewer than three distinct points, or an all-collinear cloud,
    raises DegenerateGeometryError.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ContractError(f"expected (m, 2) points, got shape {pts.shape}")
    require_finite(pts, "hull input")
    uniq = np.unique(pts, axis=0)  # lexicographic sort as a side effect
    if uniq.shape[0] < 3:
        raise DegenerateGeometryError("need at least three distinct points")

    def half(chain_pts):
        chain: list = []
        for p in chain_pts:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0.0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(uniq)
    upper = half(uniq[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear")
    return np.array(hull)


def point_in_hull(p, hull: Mat, slack: float = 1e-12):
    """Half-plane membership test against a counterclockwise convex polygon.

    The signed distance to every edge line must be >= -slack (slack is a
    geometric distance: edge cross products are normalized by edge length).
    Accepts a single point (2,) or a batch (m, 2); returns bool or bool array.
    """
    hull = np.asarray(hull, dtype=float)
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = p[None, :] if single else p
    a = hull
    b = np.roll(hull, -1, axis=0)
    e = b - a                                      # (k, 2)
    elen = np.sqrt(np.sum(e * e, axis=1))          # (k,)
    d = P[:, None, :] - a[None, :, :]              # (m, k, 2)
    cross = e[None, :, 0] * d[:, :, 1] - e[None, :, 1] * d[:, :, 0]
    inside = np.all(cross >= -slack * elen[None, :], axis=1)
    return bool(inside[0]) if single else inside


def finite_diff_jacobian(f: Callable, x: Vec, h: float = 1e-6) -> Mat:
    """Central-difference Jacobian of f: R^n -> R^m at x, shape (m, n).

    Used as the independent oracle for hand-written derivatives.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = h
        fp = np.asarray(f(x + dx), dtype=float)
        fm = np.asarray(f(x - dx), dtype=float)
        cols.append((fp - fm) / (2.0 * h))
    J = np.stack(cols, axis=-1)
    return require_finite(J.reshape(-1, x.size), "finite-difference jacobian")
