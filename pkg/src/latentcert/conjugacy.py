"""Conjugacy-error measurement between an original system and its latent model.

Four error modes, each the Euclidean norm of a pointwise residual between
the closed-loop original map f and the closed-loop latent map f_z through
the encoder E:

    forward  continuous   || J_E(x) f(x) - f_z(E(x)) ||
    backward continuous   || f(x) - J_E(x)^+ f_z(E(x)) ||   (full-row-rank J)
    forward  discrete     || E(f(x)) - f_z(E(x)) ||
    backward discrete     || f(x) - E^{-1}(f_z(E(x))) ||

gamma is the max of the per-sample errors over a sample set drawn from the
state-domain estimate. Sampling the decoder image of latent points instead
of the state domain is NOT equivalent and is deliberately unsupported: the
sample set must come from the original state space.

The backward-discrete mode only reports gamma when E^{-1} is a right
inverse in practice: max_samples ||E(E^{-1}(z)) - z|| must stay below a
tolerance (default 1e-3), measured at the latent points actually passed
through E^{-1}. The residual is kept in the estimate so the hypothesis can
be audited.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, NumericError
from .models import LatentModel
from .numerics import pinv_row_fullrank
from .systems import (OmniParams, adversarial_disturbance, omni_B_matrix,
                      omni_deriv, rotate3_apply)

MODES = ("forward", "backward")
TIMES = ("continuous", "discrete")


@dataclass
class ConjugacySpec:
    """Everything needed to evaluate one conjugacy-error mode.

    All callables take a batch of row vectors (m, n) and return (m, k);
    encoder_jacobian may return a constant (n_z, n_x) matrix instead of a
    per-sample (m, n_z, n_x) stack. f and f_z are already closed-loop: for
    continuous time they are vector fields, for discrete time step maps.
    """
    mode: str
    time: str
    f: Callable
    f_z: Callable
    encoder: Callable
    encoder_jacobian: Optional[Callable] = None
    right_inverse: Optional[Callable] = None
    right_inverse_tol: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.time not in TIMES:
            raise ContractError(f"time must be one of {TIMES}, got {self.time!r}")
        if self.time == "continuous" and self.encoder_jacobian is None:
            raise ContractError("continuous-time modes need encoder_jacobian")
        if self.mode == "backward" and self.time == "discrete" \
                and self.right_inverse is None:
            raise ContractError("backward-discrete mode needs a right inverse")


@dataclass
class ConjugacyEstimate:
    mode: str
    time: str
    gamma: float
    sample_count: int
    argmax_state: np.ndarray
    quantiles: dict
    right_inverse_residual: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "time": self.time, "gamma": self.gamma,
             "sample_count": self.sample_count,
             "argmax_state": np.asarray(self.argmax_state).tolist(),
             "quantiles": dict(self.quantiles)}
        if self.right_inverse_residual is not None:
            d["right_inverse_residual"] = self.right_inverse_residual
        return d


def _jacobian_apply(J: np.ndarray, V: np.ndarray) -> np.ndarray:
    """J @ v per sample; J constant (k, n) or stacked (m, k, n), V (m, n)."""
    if J.ndim == 2:
        return V @ J.T
    return np.einsum("mkn,mn->mk", J, V)


def _sample_errors(X: np.ndarray, spec: ConjugacySpec):
    """Per-sample errors, shape (m,); also the right-inverse residual or None."""
    Z = np.asarray(spec.encoder(X), dtype=float)
    FZ = np.asarray(spec.f_z(Z), dtype=float)
    FX = np.asarray(spec.f(X), dtype=float)
    residual = None

    if spec.time == "continuous":
        J = np.asarray(spec.encoder_jacobian(X), dtype=float)
        if spec.mode == "forward":
            diff = _jacobian_apply(J, FX) - FZ
        else:
            if J.ndim == 2:
                lifted = FZ @ pinv_row_fullrank(J).T
            else:
                lifted = np.stack([pinv_row_fullrank(J[i]) @ FZ[i]
                                   for i in range(J.shape[0])])
            diff = FX - lifted
    else:
        if spec.mode == "forward":
            diff = np.asarray(spec.encoder(FX), dtype=float) - FZ
        else:
            Xrec = np.asarray(spec.right_inverse(FZ), dtype=float)
            back = np.asarray(spec.encoder(Xrec), dtype=float) - FZ
            residual = float(np.max(np.sqrt(np.sum(back * back, axis=-1))))
            if residual > spec.right_inverse_tol:
                raise ContractError(
                    f"right-inverse residual {residual:.3e} exceeds "
                    f"{spec.right_inverse_tol:.1e}; backward-discrete gamma "
                    f"is not meaningful")
            diff = FX - Xrec

    errs = np.sqrt(np.sum(diff * diff, axis=-1))
    if not np.all(np.isfinite(errs)):
        raise NumericError("non-finite conjugacy error in sample set")
    return errs, residual


def conjugacy_error_at(x, spec: ConjugacySpec) -> float:
    """The spec's error mode at a single state; always >= 0."""
    X = np.asarray(x, dtype=float)[None, :]
    errs, _ = _sample_errors(X, spec)
    return float(errs[0])


def estimate_gamma(samples, spec: ConjugacySpec) -> ConjugacyEstimate:
    """gamma = max per-sample error over states drawn from the D_x estimate.

    samples: (m, n_x) array, m >= 1. The argmax state is recorded for
    diagnostics (ties broken by lowest sample index); quantiles expose how
    sharply the maximum stands out from the bulk.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("need a nonempty (m, n_x) sample array")
    errs, residual = _sample_errors(X, spec)
    i = int(np.argmax(errs))
    q50, q90, q99 = np.quantile(errs, [0.5, 0.9, 0.99])
    return ConjugacyEstimate(
        mode=spec.mode, time=spec.time,
        gamma=float(errs[i]), sample_count=X.shape[0],
        argmax_state=X[i].copy(),
        quantiles={"q50": float(q50), "q90": float(q90), "q99": float(q99)},
        right_inverse_residual=residual)


def learned_model_spec(model: LatentModel, f: Callable, policy: Callable,
                       mode: str, time: str) -> ConjugacySpec:
    """Wire a latent model into a ConjugacySpec.

    f is the closed-loop original map (batched); the latent closed loop is
    z -> latent_step(z, policy(z)). The decoder serves as the candidate
    right inverse for the backward-discrete mode.
    """
    return ConjugacySpec(
        mode=mode, time=time, f=f,
        f_z=lambda Z: model.latent_step(Z, policy(Z)),
        encoder=model.encode,
        encoder_jacobian=model.encoder_jacobian,
        right_inverse=model.decode)


# ---------------------------------------------------------------------------
# Analytic two-vehicle encoder
# ---------------------------------------------------------------------------

def omni_encoder(x) -> np.ndarray:
    """z = (p1 - p2, theta1) for x = (p1, theta1, p2, theta2); batched."""
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 0] - x[..., 3],
                     x[..., 1] - x[..., 4],
                     x[..., 2]], axis=-1)


def omni_encoder_jacobian(x=None) -> np.ndarray:
    """Constant 3x6 difference/selection matrix dE/dx (full row rank)."""
    J = np.zeros((3, 6))
    J[0, 0] = J[1, 1] = J[2, 2] = 1.0
    J[0, 3] = J[1, 4] = -1.0
    return J


def omni_analytic_spec(p: OmniParams = OmniParams(), theta2: float = 0.0,
                       policy: Optional[Callable] = None,
                       disturbance: Optional[Callable] = None,
                       mode: str = "forward",
                       time: str = "continuous") -> ConjugacySpec:
    """ConjugacySpec for the analytic encoder E(q) = (p1 - p2, theta1).

    The latent vector field is f_z(z) = G(z_3) B^{-T} u - (cos th2, sin th2, 0)
    with u = policy(z) evaluated per sample (zero input when policy is None).
    disturbance maps a batch of full states to drift vectors d (default 0);
    with the worst-case drift the forward-continuous error equals ||d||,
    hence gamma <= B_d for any sample set.
    """
    Binv_T = np.linalg.inv(omni_B_matrix(p).T)
    passive = np.array([np.cos(theta2), np.sin(theta2), 0.0])

    def inputs(Z):
        if policy is None:
            return np.zeros((Z.shape[0], 3))
        return np.stack([np.asarray(policy(z), dtype=float) for z in Z])

    def f_z(Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        body = inputs(Z) @ Binv_T.T
        return rotate3_apply(Z[:, 2], body) - passive

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = inputs(omni_encoder(X))
        D = np.zeros((X.shape[0], 3)) if disturbance is None else disturbance(X)
        return omni_deriv(X, U, D, p)

    return ConjugacySpec(
        mode=mode, time=time, f=f, f_z=f_z,
        encoder=omni_encoder,
        encoder_jacobian=lambda X=None: omni_encoder_jacobian())


def omni_adversarial_spec(p: OmniParams = OmniParams(), theta2: float = 0.0,
                          policy: Optional[Callable] = None) -> ConjugacySpec:
    """Forward-continuous spec under the worst-case approach disturbance."""
    return omni_analytic_spec(
        p, theta2, policy=policy,
        disturbance=lambda X: adversarial_disturbance(X, p))
