"""Latent-space controllers.

LQR about the latent equilibrium z_eq = E(0): the gain solves the DARE for
the matrices (A(z_eq), B(z_eq)) and acts as u = -K (z - z_eq). Sign
convention: the input enters the latent dynamics as +B(z)u, so the minus
sign here is the stabilizing one.

CBF-QP safety filter for the two-vehicle system: minimally modify a nominal
wheel-speed command so the barrier h(z) = ||(z_1, z_2)|| - beta' satisfies
hdot >= -alpha h, subject to the per-wheel box ||u||_inf <= B_u:

    min ||u - u_nom||^2   s.t.  a^T u >= b,  ||u||_inf <= B_u

with a = M(z_3)^T (zbar_12, 0) for M(z_3) = G(z_3) B^{-T} and
b = <zbar_12, (cos theta_2, sin theta_2)> - alpha (||z_12|| - beta').
Solved exactly by enumerating active sets (each coordinate free or clamped
at a box face, halfspace tight or not: 2 * 3^3 candidates), cheap enough to
sit inside an RK4 stage derivative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import (CheckpointError, ContractError, InfeasibleError,
                     NumericError, SynthesisError)
from .jsonio import dump_json, load_json
from .models import LatentModel
from .numerics import dare_solve, spectral_radius
from .systems import OmniParams, omni_B_matrix


@dataclass
class LqrController:
    K: np.ndarray       # (n_u, n_z)
    z_eq: np.ndarray    # (n_z,)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.z_eq = np.asarray(self.z_eq, dtype=float)
        if self.K.ndim != 2 or self.K.shape[1] != self.z_eq.shape[0]:
            raise ContractError("gain width must match z_eq length")
        if not (np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.z_eq))):
            raise ContractError("controller entries must be finite")

    def __call__(self, z):
        """u = -K (z - z_eq); accepts (n_z,) or (m, n_z)."""
        z = np.asarray(z, dtype=float)
        return -(z - self.z_eq) @ self.K.T

    def to_dict(self) -> dict:
        return {"format": "lqr-controller-v1",
                "K": self.K.tolist(), "z_eq": self.z_eq.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LqrController":
        if d.get("format") != "lqr-controller-v1":
            raise CheckpointError("not an LQR controller file")
        try:
            return cls(np.array(d["K"], dtype=float),
                       np.array(d["z_eq"], dtype=float))
        except (KeyError, ContractError) as e:
            raise CheckpointError(f"malformed controller file: {e}") from e

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "LqrController":
        return cls.from_dict(load_json(path))


def lqr_from_latent(model: LatentModel, Q: Optional[np.ndarray] = None,
                    R: Optional[np.ndarray] = None) -> LqrController:
    """Infinite-horizon LQR for the latent dynamics frozen at z_eq = E(0).

    Raises SynthesisError when the DARE diverges (unstabilizable pair) or
    the closed loop A(z_eq) - B(z_eq) K is not Schur stable.
    """
    z_eq = model.encode(np.zeros(model.n_x))
    A, B = model.dynamics(z_eq)
    Q = np.eye(model.n_z) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(model.n_u) if R is None else np.asarray(R, dtype=float)
    try:
        _, K = dare_solve(A, B, Q, R)
    except NumericError as e:
        raise SynthesisError(f"DARE failed at z_eq: {e}") from e
    radius = spectral_radius(A - B @ K)
    if radius >= 1.0:
        raise SynthesisError(
            f"closed loop at z_eq has spectral radius {radius:.6f} >= 1")
    return LqrController(K, z_eq)


def closed_loop_latent(model: LatentModel, policy: Callable) -> Callable:
    """z -> latent_step(z, policy(z)); single point or batch."""
    return lambda z: model.latent_step(z, policy(z))


# ---------------------------------------------------------------------------
# CBF-QP safety filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CbfQpSpec:
    alpha: float                    # class-K slope, > 0
    beta_prime: float               # barrier radius, > 0
    u_max: float = 5.0              # input box bound B_u
    theta2: float = 0.0             # passive-vehicle heading
    params: OmniParams = field(default_factory=OmniParams)

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ContractError("alpha must be positive")
        if self.beta_prime <= 0.0:
            raise ContractError("beta' must be positive")
        if self.u_max <= 0.0:
            raise ContractError("input bound must be positive")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta_prime": self.beta_prime,
                "u_max": self.u_max, "theta2": self.theta2,
                "wheel_radius": self.params.wheel_radius,
                "frame_radius": self.params.frame_radius}


def cbf_constraint(z, spec: CbfQpSpec) -> Tuple[np.ndarray, float]:
    """Halfspace a^T u >= b enforcing hdot >= -alpha h at latent state z.

    h(z) = ||z_12|| - beta' and zdot_12 = (G(z_3) B^{-T} u)_12 - v_2 with
    the passive vehicle at unit speed along heading theta_2; the barrier
    inequality rearranges to the returned (a, b). Raises NumericError when
    z_12 ~ 0, where the barrier gradient is undefined.
    """
    z = np.asarray(z, dtype=float)
    z12 = z[:2]
    dist = float(np.linalg.norm(z12))
    if dist < 1e-9:
        raise NumericError("relative position ~ 0; barrier direction undefined")
    zbar = z12 / dist
    c, s = np.cos(z[2]), np.sin(z[2])
    # a = M(z3)^T (zbar, 0) = B^{-1} G(z3)^T (zbar, 0)
    w = np.array([c * zbar[0] + s * zbar[1], -s * zbar[0] + c * zbar[1], 0.0])
    a = np.linalg.solve(omni_B_matrix(spec.params), w)
    b = float(zbar @ np.array([np.cos(spec.theta2), np.sin(spec.theta2)]))
    b -= spec.alpha * (dist - spec.beta_prime)
    return a, b


def cbf_feasibility_margin(z, spec: CbfQpSpec) -> float:
    """B_u ||a||_1 - b: the gap between sup_box a^T u and b.

    Nonnegative iff some admissible input satisfies the barrier constraint
    at z.
    """
    a, b = cbf_constraint(z, spec)
    return float(spec.u_max * np.sum(np.abs(a)) - b)


def feasibility_scan(spec: CbfQpSpec, n_theta: int = 100,
                     n_radius: int = 100, r_min: float = 0.1,
                     r_max: float = 20.0) -> float:
    """Min feasibility margin over a (heading, separation) grid.

    Scans z_3 over [0, 2pi) and ||z_12|| over [r_min, r_max] with the
    relative position aligned to the passive velocity (zbar_12 = v_2), the
    alignment that maximizes b; a nonnegative result certifies the QP is
    feasible at every probed configuration.
    """
    if r_min <= 0.0 or r_max < r_min:
        raise ContractError("need 0 < r_min <= r_max")
    Binv = np.linalg.inv(omni_B_matrix(spec.params))
    thetas = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    radii = np.linspace(r_min, r_max, n_radius)
    # G(z3)^T (zbar, 0) with zbar = (cos th2, sin th2): rotate by th2 - z3
    rel = spec.theta2 - thetas
    W = np.stack([np.cos(rel), np.sin(rel), np.zeros_like(rel)], axis=1)
    a_l1 = np.sum(np.abs(W @ Binv.T), axis=1)            # (n_theta,)
    b = 1.0 - spec.alpha * (radii - spec.beta_prime)     # (n_radius,)
    margins = spec.u_max * a_l1[:, None] - b[None, :]
    return float(np.min(margins))


def project_box_halfspace(u_nom, a, b: float, u_max: float) -> np.ndarray:
    """Exact minimizer of ||u - u_nom||^2 s.t. a^T u >= b, ||u||_inf <= u_max.

    Enumerates all active sets: each coordinate free or clamped at a box
    face, halfspace tight or not. Every KKT point of this strictly convex
    QP appears among the candidates, so the feasible candidate with the
    smallest objective is the exact solution.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    a = np.asarray(a, dtype=float)
    n = u_nom.shape[0]
    if a.shape != (n,):
        raise ContractError("a and u_nom must have the same length")
    margin = float(u_max * np.sum(np.abs(a)) - b)
    if margin < 0.0:
        err = InfeasibleError(
            f"constraint unreachable within the input box "
            f"(margin {margin:.6e})")
        err.margin = margin
        raise err
    if np.max(np.abs(u_nom)) <= u_max and float(a @ u_nom) >= b:
        return u_nom.copy()

    best, best_obj = None, np.inf
    for signs in itertools.product((0, 1, -1), repeat=n):
        fixed = np.array(signs, dtype=float) * u_max
        free = np.array([s == 0 for s in signs])
        for tight in (False, True):
            u = fixed.copy()
            if not tight:
                u[free] = u_nom[free]
            else:
                af = a[free]
                denom = float(af @ af)
                if denom < 1e-18:
                    continue
                resid = b - float(a[~free] @ fixed[~free]) - float(af @ u_nom[free])
                u[free] = u_nom[free] + (resid / denom) * af
            # candidates violating their own constraints belong to a
            # different active set that is enumerated separately
            if np.max(np.abs(u)) > u_max + 1e-12:
                continue
            if float(a @ u) < b - 1e-9:
                continue
            obj = float(np.sum((u - u_nom) ** 2))
            if obj < best_obj:
                best, best_obj = u, obj
    if best is None:
        raise InfeasibleError("no feasible active-set candidate found")
    return np.clip(best, -u_max, u_max)


def cbf_qp(u_nom, z, spec: CbfQpSpec) -> np.ndarray:
    """Safety-filtered input at latent state z.

    Returns u_nom unchanged whenever it already satisfies the barrier
    halfspace and the box; otherwise the exact projection. Raises
    InfeasibleError (with the violation margin) when no admissible input
    satisfies the constraint.
    """
    a, b = cbf_constraint(z, spec)
    return project_box_halfspace(u_nom, a, b, spec.u_max)


def nominal_proportional(x, goal, gain: float = 1.0,
                         params: Optional[OmniParams] = None) -> np.ndarray:
    """Wheel speeds steering the active vehicle toward a planar goal.

    u = clamp(gain * B^T G(theta_1)^T (goal - p_1, 0), box). Because
    B^{-T} B^T = I, the unclamped command yields the world-frame velocity
    gain * (goal - p_1) exactly and zero heading rate; at the goal, u = 0.
    """
    p = OmniParams() if params is None else params
    x = np.asarray(x, dtype=float)
    goal = np.asarray(goal, dtype=float)
    w = np.array([goal[0] - x[0], goal[1] - x[1], 0.0])
    c, s = np.cos(x[2]), np.sin(x[2])
    body = np.array([c * w[0] + s * w[1], -s * w[0] + c * w[1], w[2]])
    u = gain * (omni_B_matrix(p).T @ body)
    return np.clip(u, -p.u_max, p.u_max)


def omni_safety_filter(spec: CbfQpSpec, goal, gain: float = 1.0) -> Callable:
    """State-feedback policy: CBF-QP projection of the proportional law.

    Returns a callable x -> u for the six-dimensional two-vehicle state,
    using the analytic encoding z = (p_1 - p_2, theta_1).
    """
    goal = np.asarray(goal, dtype=float)

    def policy(x):
        x = np.asarray(x, dtype=float)
        z = np.array([x[0] - x[3], x[1] - x[4], x[2]])
        u_nom = nominal_proportional(x, goal, gain, spec.params)
        return cbf_qp(u_nom, z, spec)

    return policy
