"""The two benchmark plants.

Cartpole: cart of mass m_c on a frictionless track, pole of mass m_p and
half-length l, force u on the cart. State s = (x, xdot, theta, thetadot) with
theta = 0 upright. Discretized with RK4 at a fixed dt.

Omnidirectional vehicles: an actuated three-wheel omnidirectional robot
(state q1 = (p1, theta1) in SE(2) coordinates) subject to a bounded
disturbance, plus a passive vehicle q2 = (p2, theta2) translating at constant
unit speed along its heading. Stacked state x = (p1, theta1, p2, theta2) in
R^6, wheel speeds u in R^3.

All dynamics functions accept a single state (n,) or a batch (m, n) and
broadcast accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError
from .numerics import rk4_step


# ---------------------------------------------------------------------------
# cartpole
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CartpoleParams:
    g: float = 9.8
    m_c: float = 0.5
    m_p: float = 0.05
    l: float = 0.5      # pole half-length
    dt: float = 0.02


class CartpoleState(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def cartpole_deriv(s, u, p: CartpoleParams = CartpoleParams()):
    """Continuous-time cartpole dynamics sdot = f(s, u).

    thetadotdot = [g sin(th) + cos(th) (-u - m_p l thdot^2 sin(th)) / (m_c+m_p)]
                  / [l (4/3 - m_p cos^2(th) / (m_c+m_p))]
    xdotdot     = [u + m_p l (thdot^2 sin(th) - thddot cos(th))] / (m_c+m_p)
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float).reshape(s.shape[:-1])
    x_dot = s[..., 1]
    th = s[..., 2]
    th_dot = s[..., 3]
    total = p.m_c + p.m_p
    sin, cos = np.sin(th), np.cos(th)
    tmp = (-u - p.m_p * p.l * th_dot**2 * sin) / total
    th_acc = (p.g * sin + cos * tmp) / (p.l * (4.0 / 3.0 - p.m_p * cos**2 / total))
    x_acc = (u + p.m_p * p.l * (th_dot**2 * sin - th_acc * cos)) / total
    return np.stack([x_dot, x_acc, th_dot, th_acc], axis=-1)


def cartpole_step(s, u, p: CartpoleParams = CartpoleParams()):
    """One RK4 step of length p.dt with the input held constant."""
    return rk4_step(lambda ss, uu: cartpole_deriv(ss, uu, p), s, u, p.dt)


def cartpole_energy(s, p: CartpoleParams = CartpoleParams()):
    """Total mechanical energy, zero level at the pole hanging at rest.

    E = (m_c+m_p)/2 xdot^2
        + m_p (l xdot thdot cos(th) + l^2/2 thdot^2 + l^2/6 thdot^2)
        + m_p g l (cos(th) + 1)

    The l^2/6 term is (1/2) I thdot^2 for a uniform rod of half-length l,
    I = m_p (2l)^2 / 12 = m_p l^2 / 3. This is the I behind the 4/3 factor
    in cartpole_deriv; dE/dt = u * xdot holds along exact solutions (only
    the cart is actuated), which is what energy_residuals checks discretely.
    A rod of full length l (I = m_p l^2 / 12) would break that identity.
    """
    s = np.asarray(s, dtype=float)
    x_dot = s[..., 1]
    th = s[..., 2]
    th_dot = s[..., 3]
    kin = (0.5 * (p.m_c + p.m_p) * x_dot**2
           + p.m_p * (p.l * x_dot * th_dot * np.cos(th)
                      + (0.5 + 1.0 / 6.0) * p.l**2 * th_dot**2))
    pot = p.m_p * p.g * p.l * (np.cos(th) + 1.0)
    return kin + pot


def energy_residuals(states, inputs, p: CartpoleParams = CartpoleParams()):
    """|dE/dt - u <xdot>| along an RK4 trajectory, one value per step.

    The work rate is quadratured with the trapezoidal endpoint average
    u_t (xdot_t + xdot_{t+1})/2, so the residual is O(dt^2) for smooth
    solutions; a left-endpoint rule would leave an O(dt) term and mask
    dynamics bugs that this check exists to catch.

    states: (T+1, 4), inputs: (T,). Returns (T,).
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if states.shape[0] != inputs.shape[0] + 1:
        raise ContractError("need T+1 states for T inputs")
    E = cartpole_energy(states, p)
    xdot_avg = 0.5 * (states[:-1, 1] + states[1:, 1])
    return np.abs((E[1:] - E[:-1]) / p.dt - inputs * xdot_avg)


def mass_matrix(rho: float, p: CartpoleParams = CartpoleParams()) -> np.ndarray:
    """Kinetic-energy quadratic form M_rho with rho = cos(theta).

    Kinetic energy = qdot^T M_rho qdot for qdot = (xdot, thetadot); the 1/2
    factors live inside M. M_rho is positive definite for every rho in
    [-1, 1], which upper-bounds speeds by energy.
    """
    return np.array([
        [0.5 * (p.m_c + p.m_p), 0.5 * p.m_p * p.l * rho],
        [0.5 * p.m_p * p.l * rho, (2.0 / 3.0) * p.m_p * p.l**2],
    ])


def min_mass_eigenvalue(p: CartpoleParams = CartpoleParams(), n: int = 10_000) -> float:
    """min over rho in [-1, 1] (n-point grid) of lambda_min(M_rho)."""
    rho = np.linspace(-1.0, 1.0, n)
    a = 0.5 * (p.m_c + p.m_p)
    b = 0.5 * p.m_p * p.l * rho
    c = (2.0 / 3.0) * p.m_p * p.l**2
    lam_min = 0.5 * (a + c) - np.sqrt((0.5 * (a - c))**2 + b**2)
    return float(np.min(lam_min))


def velocity_bound(E0: float, u_max: float, t, mu: float):
    """Forward-completeness speed bound ||(xdot, thetadot)|| at time t.

    With kinetic energy qdot^T M qdot >= mu ||qdot||^2 and |u| <= u_max,
    sqrt(E_t) <= sqrt(E_0) + u_max t / (2 sqrt(mu)), hence
    ||qdot_t|| <= (sqrt(E_0) + u_max t / (2 sqrt(mu))) / sqrt(mu).

    mu is the output of min_mass_eigenvalue.
    """
    if mu <= 0.0:
        raise ContractError("mu must be positive")
    root = np.sqrt(max(E0, 0.0)) + u_max * np.asarray(t, dtype=float) / (2.0 * np.sqrt(mu))
    return root / np.sqrt(mu)


# ---------------------------------------------------------------------------
# omnidirectional vehicles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OmniParams:
    wheel_radius: float = 0.02   # r
    frame_radius: float = 0.2    # l, wheel distance from body center
    u_max: float = 5.0           # B_u, per-wheel speed bound (inf-norm box)
    d_max: float = 1.0           # B_d, disturbance 2-norm bound


class OmniState(NamedTuple):
    p1x: float
    p1y: float
    theta1: float
    p2x: float
    p2y: float
    theta2: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def omni_B_matrix(p: OmniParams = OmniParams()) -> np.ndarray:
    """Wheel-to-body map B: body velocity qdot1 = G(theta1) B^{-T} u.

    Three omni wheels at 120 degrees, first wheel along the body x-axis:

        B = [[0,      r cos(pi/6), -r cos(pi/6)],
             [-r,     r sin(pi/6),  r sin(pi/6)],
             [l r,    l r,          l r       ]]

    B B^T = diag(3 r^2 / 2, 3 r^2 / 2, 3 l^2 r^2) and det B = 3 r^3 l cos(pi/6),
    so B is invertible for r, l > 0.
    """
    r, l = p.wheel_radius, p.frame_radius
    c, s = np.cos(np.pi / 6.0), np.sin(np.pi / 6.0)
    return np.array([
        [0.0, r * c, -r * c],
        [-r, r * s, r * s],
        [l * r, l * r, l * r],
    ])


def rotation3(theta):
    """Block rotation G(theta) = diag(R(theta), 1) mapping body to world frame."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate3_apply(theta, v):
    """Batched G(theta) @ v for theta (...,), v (..., 3)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([
        c * v[..., 0] - s * v[..., 1],
        s * v[..., 0] + c * v[..., 1],
        v[..., 2],
    ], axis=-1)


def omni_deriv(x, u, d, p: OmniParams = OmniParams()):
    """Two-vehicle dynamics xdot for x = (p1, theta1, p2, theta2) in R^6.

    Active: qdot1 = G(theta1) B^{-T} u + d, with wheel speeds bounded
    ||u||_inf <= u_max and disturbance ||d||_2 <= d_max (ContractError
    otherwise). Passive: pdot2 = (cos theta2, sin theta2), thetadot2 = 0.

    d may be a 3-vector applied identically or an (..., 3) batch.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if u.shape[-1] != 3:
        raise ContractError(f"u must have 3 wheel speeds, got shape {u.shape}")
    if np.max(np.abs(u)) > p.u_max + 1e-9:
        raise ContractError(f"wheel speed exceeds bound {p.u_max}")
    if np.max(np.sqrt(np.sum(np.reshape(d, (-1, 3))**2, axis=1))) > p.d_max + 1e-9:
        raise ContractError(f"disturbance norm exceeds bound {p.d_max}")
    Binv_T = np.linalg.inv(omni_B_matrix(p).T)
    body = u @ Binv_T.T                    # B^{-T} u, shape (..., 3)
    qdot1 = rotate3_apply(x[..., 2], body) + d
    ones = np.ones_like(x[..., 5])
    qdot2 = np.stack([np.cos(x[..., 5]), np.sin(x[..., 5]), 0.0 * ones], axis=-1)
    return np.concatenate([qdot1, qdot2], axis=-1)


def adversarial_disturbance(x, p: OmniParams = OmniParams()):
    """Worst-case drift pushing the active vehicle toward the passive one.

    d(x) = -d_max (p1 - p2)/||p1 - p2|| on the position components, zero on
    the heading; ||d|| = d_max exactly. Coincident positions are outside the
    contract.
    """
    x = np.asarray(x, dtype=float)
    rel = x[..., 0:2] - x[..., 3:5]
    dist = np.sqrt(np.sum(rel**2, axis=-1))
    if np.min(dist) < 1e-9:
        raise ContractError("vehicles coincide; disturbance direction undefined")
    unit = rel / dist[..., None]
    zero = np.zeros_like(dist)
    return np.stack([-p.d_max * unit[..., 0], -p.d_max * unit[..., 1], zero], axis=-1)


def omni_step(x, u, d, dt: float, p: OmniParams = OmniParams()):
    """One RK4 step with wheel speeds and disturbance held constant."""
    return rk4_step(lambda xx, uu: omni_deriv(xx, uu, d, p), x, u, dt)
