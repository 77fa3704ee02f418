"""Domain estimation, certificate checking, and latent-to-original transfer.

Pipeline (stability flavor): estimate the latent domain D_z from latent
closed-loop rollouts, pull it back to a state-space point cloud D_x (with
an epsilon Minkowski inflation), grid-check the certificate inequality on
D_z, estimate the Lipschitz constant L of V-bar = V o E and the conjugacy
error gamma on D_x, then combine everything into thresholds:

    discrete stability    V-bar settles below L*gamma/(1 - rho)
    continuous stability  V-bar settles below L*gamma/rho
    safety                h-bar stays above  -L*gamma/alpha

alpha_0 is the largest sublevel value of V-bar whose level set fits inside
the D_x estimate; the invariant band [L*gamma/(1-rho), alpha_0] is vacuous
when the lower end exceeds alpha_0, and the report says so.

Everything here is sampled evidence, not sound verification: grids and
point clouds can miss worst cases, so the report carries every constant
needed to re-derive its thresholds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ContractError, DegenerateGeometryError, NumericError
from .models import LatentModel
from .numerics import convex_hull_2d, point_in_hull, require_finite


def grid_over_box(lo, hi, density: int) -> np.ndarray:
    """Uniform grid with `density` points per axis over [lo, hi]; (m, n)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ContractError("lo and hi must be equal-length vectors")
    if np.any(hi < lo):
        raise ContractError("box upper corner below lower corner")
    if density < 2:
        raise ContractError("need at least 2 points per axis")
    axes = [np.linspace(lo[i], hi[i], density) for i in range(lo.shape[0])]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# Latent domain D_z
# ---------------------------------------------------------------------------

@dataclass
class LatentDomain:
    """Convex-hull (n_z = 2) or bounding-box (n_z >= 3) latent domain."""
    kind: str                       # "hull" | "box"
    vertices: Optional[np.ndarray]  # (k, 2) CCW polygon when kind == "hull"
    lo: np.ndarray
    hi: np.ndarray
    provenance: dict = field(default_factory=dict)

    def contains(self, z, slack: float = 1e-9):
        z = np.asarray(z, dtype=float)
        if self.kind == "hull":
            return point_in_hull(z, self.vertices, slack=slack)
        inside = (z >= self.lo - slack) & (z <= self.hi + slack)
        return np.all(inside, axis=-1)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lo.copy(), self.hi.copy()

    def grid(self, density: int, slack: float = 0.0) -> np.ndarray:
        """Bounding-box grid filtered to domain members."""
        pts = grid_over_box(self.lo, self.hi, density)
        return pts[self.contains(pts, slack=slack)]

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "vertices": None if self.vertices is None
                else self.vertices.tolist(),
                "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "provenance": dict(self.provenance)}


def estimate_Dz(model: LatentModel, policy: Callable, r1: float = 1.5,
                T: int = 300, density: int = 11) -> LatentDomain:
    """Latent domain from closed-loop rollouts seeded on a grid.

    Seeds the box ||z||_inf <= r1 with density^n_z points, rolls T latent
    steps under u = policy(z), and takes the convex hull of every visited
    point (bounding box instead when n_z >= 3, flagged as coarser).
    """
    if T < 0:
        raise ContractError("T must be >= 0")
    n_z = model.n_z
    lo = -r1 * np.ones(n_z)
    Z = grid_over_box(lo, -lo, density)
    visited = [Z]
    for _ in range(T):
        Z = model.latent_step(Z, policy(Z))
        visited.append(Z)
    pts = np.concatenate(visited, axis=0)
    require_finite(pts, "latent rollout")
    prov = {"r1": r1, "T": T, "density": density,
            "n_seeds": int(visited[0].shape[0]), "n_points": int(pts.shape[0])}
    if n_z == 2:
        hull = convex_hull_2d(pts)
        return LatentDomain("hull", hull, pts.min(axis=0), pts.max(axis=0),
                            prov)
    prov["note"] = "bounding box; coarser over-approximation than a hull"
    return LatentDomain("box", None, pts.min(axis=0), pts.max(axis=0), prov)


# ---------------------------------------------------------------------------
# State domain D_x: point cloud + infinity-norm epsilon inflation
# ---------------------------------------------------------------------------

class StateDomain:
    """Finite point cloud inflated by eps-balls in the infinity norm.

    Membership (any cloud point within eps) uses a uniform spatial hash
    with cell size eps: a query can only have neighbors in its own and
    adjacent cells, so each batch lookup touches 3^n_x cells, all handled
    with vectorized searchsorted/gather passes.
    """

    def __init__(self, points: np.ndarray, eps: float,
                 provenance: Optional[dict] = None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ContractError("need a nonempty (m, n_x) point cloud")
        if eps < 0.0:
            raise ContractError("inflation radius must be >= 0")
        require_finite(points, "state-domain cloud")
        self.eps = float(eps)
        self.provenance = dict(provenance or {})
        self._cell = self.eps if self.eps > 0.0 else 1.0
        cells = np.floor(points / self._cell).astype(np.int64)
        self._cmin = cells.min(axis=0)
        extent = cells.max(axis=0) - self._cmin + 1
        if float(np.prod(extent.astype(float))) > 2.0 ** 62:
            raise ContractError(
                "inflation radius too small relative to the cloud extent "
                "for integer cell indexing")
        self._strides = np.concatenate(
            [np.cumprod(extent[::-1])[-2::-1], np.ones(1, dtype=np.int64)])
        keys = (cells - self._cmin) @ self._strides
        order = np.argsort(keys, kind="stable")
        self.points = points[order]
        self._keys = keys[order]
        self._extent = extent

    @property
    def n_x(self) -> int:
        return self.points.shape[1]

    def contains(self, x) -> np.ndarray:
        """True where some cloud point is within eps in the infinity norm."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        m, d = X.shape
        out = np.zeros(m, dtype=bool)
        qcells = np.floor(X / self._cell).astype(np.int64) - self._cmin
        for offset in itertools.product((-1, 0, 1), repeat=d):
            nc = qcells + np.asarray(offset, dtype=np.int64)
            valid = np.all((nc >= 0) & (nc < self._extent), axis=1) & ~out
            if not np.any(valid):
                continue
            qi = np.nonzero(valid)[0]
            keys = nc[qi] @ self._strides
            lo = np.searchsorted(self._keys, keys, side="left")
            hi = np.searchsorted(self._keys, keys, side="right")
            counts = hi - lo
            nz = counts > 0
            if not np.any(nz):
                continue
            qi, lo, counts = qi[nz], lo[nz], counts[nz]
            starts = np.cumsum(counts) - counts
            total = int(counts.sum())
            rep_q = np.repeat(qi, counts)
            rep_p = np.repeat(lo, counts) + (np.arange(total)
                                             - np.repeat(starts, counts))
            dist = np.max(np.abs(X[rep_q] - self.points[rep_p]), axis=1)
            hit = dist <= self.eps + 1e-12
            out[rep_q[hit]] = True
        return bool(out[0]) if single else out

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.points.min(axis=0) - self.eps,
                self.points.max(axis=0) + self.eps)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n cloud points jittered uniformly inside their eps-balls."""
        idx = rng.integers(0, self.points.shape[0], size=n)
        jitter = rng.uniform(-self.eps, self.eps, size=(n, self.n_x))
        return self.points[idx] + jitter


def estimate_Dx(model: LatentModel, step: Callable, domain_z: LatentDomain,
                r2: float = 0.5, T_prime: int = 300, eps: float = 0.01,
                density: int = 7) -> StateDomain:
    """State-domain estimate: encoded grid seeds rolled through the true loop.

    Grids ||x||_inf <= r2, keeps seeds whose encodings land in D_z, rolls
    T_prime closed-loop steps of the original system (step: batched x -> x+),
    unions all visited states, and inflates by eps. Visited states whose
    encodings stray out of D_z are dropped so every retained point satisfies
    the domain invariant; the drop count lands in the provenance.
    """
    n_x = model.n_x
    lo = -r2 * np.ones(n_x)
    X0 = grid_over_box(lo, -lo, density)
    keep = domain_z.contains(model.encode(X0))
    if not np.any(keep):
        raise ContractError(
            "empty X0: no grid seed encodes into the latent domain")
    X = X0[keep]
    visited = [X]
    for _ in range(T_prime):
        X = np.asarray(step(X), dtype=float)
        visited.append(X)
    pts = np.concatenate(visited, axis=0)
    require_finite(pts, "closed-loop rollout")
    inside = domain_z.contains(model.encode(pts))
    dropped = int(pts.shape[0] - np.count_nonzero(inside))
    pts = np.unique(pts[inside], axis=0)
    prov = {"r2": r2, "T_prime": T_prime, "eps": eps, "density": density,
            "n_seeds": int(np.count_nonzero(keep)),
            "n_dropped_outside_Dz": dropped, "n_points": int(pts.shape[0])}
    return StateDomain(pts, eps, prov)


class PreimageDomain:
    """State-domain membership through the encoder: x is in iff E(x) in D_z.

    V-bar(x) = V(E(x)) depends on x only through its encoding, so level-set
    containment has to be judged against this set. A finite point cloud
    cannot stand in for it: whenever the encoder drops dimensions, the set
    of states encoding to any fixed latent extends past every bounded
    cloud, and those far-out states (with V-bar unchanged) would falsely
    witness exclusion at all levels. The preimage itself is typically
    unbounded, so the probe box is anchored by a supplied finite estimate
    (e.g. the rollout cloud's bounding box).
    """

    def __init__(self, encode: Callable, domain_z, box) -> None:
        lo, hi = box
        self._lo = np.asarray(lo, dtype=float).copy()
        self._hi = np.asarray(hi, dtype=float).copy()
        if self._lo.shape != self._hi.shape or np.any(self._lo > self._hi):
            raise ContractError("box must be (lo, hi) arrays with lo <= hi")
        self._encode = encode
        self.domain_z = domain_z

    def contains(self, x, slack: float = 1e-9):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        Z = np.asarray(self._encode(X), dtype=float)
        inside = np.asarray(self.domain_z.contains(Z, slack=slack))
        return bool(inside[0]) if single else inside

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._lo.copy(), self._hi.copy()


# ---------------------------------------------------------------------------
# Gridded certificate checks
# ---------------------------------------------------------------------------

CERTIFICATE_KINDS = ("lyapunov-discrete", "lyapunov-continuous",
                     "barrier-discrete", "barrier-continuous")


@dataclass
class GridCheck:
    fraction: float        # share of grid points satisfying the inequality
    worst: float           # max signed violation (<= 0 means all satisfied)
    worst_point: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "worst": self.worst,
                "worst_point": np.asarray(self.worst_point).tolist(),
                "n": self.n}


def check_certificate(grid, kind: str, fn: Callable, f_z: Callable,
                      rate: float, grad: Optional[Callable] = None) -> GridCheck:
    """Pointwise certificate inequality over a latent grid.

    fn is V or h (batched); f_z the latent closed loop (step map for
    discrete kinds, vector field for continuous ones); rate is rho or
    alpha. Violations are signed so that <= 0 means satisfied:

        lyapunov-discrete     V(f_z(z)) - rho V(z)
        lyapunov-continuous   <grad V, f_z(z)> + rho V(z)
        barrier-discrete      (1 - alpha) h(z) - h(f_z(z))
        barrier-continuous    -(<grad h, f_z(z)> + alpha h(z))
    """
    Z = np.asarray(grid, dtype=float)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ContractError("need a nonempty (m, n_z) grid")
    if kind not in CERTIFICATE_KINDS:
        raise ContractError(f"kind must be one of {CERTIFICATE_KINDS}")
    vals = np.asarray(fn(Z), dtype=float)
    if kind.endswith("discrete"):
        nxt = np.asarray(fn(np.asarray(f_z(Z), dtype=float)), dtype=float)
        if kind.startswith("lyapunov"):
            viol = nxt - rate * vals
        else:
            viol = (1.0 - rate) * vals - nxt
    else:
        if grad is None:
            raise ContractError("continuous kinds need the analytic gradient")
        directional = np.sum(np.asarray(grad(Z), dtype=float)
                             * np.asarray(f_z(Z), dtype=float), axis=1)
        viol = directional + rate * vals
        if kind.startswith("barrier"):
            viol = -viol
    require_finite(viol, "certificate violations")
    i = int(np.argmax(viol))
    return GridCheck(fraction=float(np.mean(viol <= 0.0)),
                     worst=float(viol[i]), worst_point=Z[i].copy(),
                     n=int(Z.shape[0]))


def estimate_lipschitz(grad: Callable, samples, fn: Optional[Callable] = None,
                       pairs: int = 10000, seed: int = 0,
                       guard: float = 1.05) -> float:
    """L = max gradient norm over the samples.

    When fn is given, difference quotients |fn(a)-fn(b)|/||a-b|| on random
    sample pairs cross-check the analytic gradient; a quotient exceeding
    guard * L indicates a gradient bug (or a badly undersampled domain) and
    raises NumericError rather than returning a constant the transfer
    bounds cannot trust.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("need a nonempty (m, n) sample array")
    G = np.asarray(grad(X), dtype=float)
    L = float(np.max(np.sqrt(np.sum(G * G, axis=1))))
    if fn is not None and X.shape[0] >= 2:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, X.shape[0], size=pairs)
        j = rng.integers(0, X.shape[0], size=pairs)
        dist = np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))
        ok = dist > 1e-12
        vals = np.asarray(fn(X), dtype=float)
        q = np.abs(vals[i[ok]] - vals[j[ok]]) / dist[ok]
        if q.size and float(np.max(q)) > guard * L + 1e-12:
            raise NumericError(
                f"difference quotient {float(np.max(q)):.6g} exceeds "
                f"{guard:.2f} x gradient bound {L:.6g}")
    return L


def compute_alpha0(vbar: Callable, domain, probe_box=None, density: int = 15,
                   tol: float = 1e-3) -> float:
    """Largest alpha (within tol) whose V-bar sublevel set fits inside D_x.

    Scans a probe grid strictly larger than the domain (default 1.5x its
    bounding box) and bisects on alpha: feasible means every probe point
    with vbar <= alpha is a domain member. The probe box must witness
    exclusion somewhere, else the sup is untestable and the call errors.
    """
    if probe_box is None:
        lo, hi = domain.bounding_box()
        center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        lo, hi = center - 1.5 * half, center + 1.5 * half
    else:
        lo, hi = (np.asarray(probe_box[0], dtype=float),
                  np.asarray(probe_box[1], dtype=float))
    P = grid_over_box(lo, hi, density)
    vals = np.asarray(vbar(P), dtype=float)
    member = np.asarray(domain.contains(P), dtype=bool)
    require_finite(vals, "vbar over probe grid")

    def feasible(alpha: float) -> bool:
        return bool(np.all(member[vals <= alpha]))

    hi_a = float(np.max(vals)) + 1.0
    if feasible(hi_a):
        raise DegenerateGeometryError(
            "probe box exhibits no exclusion; cannot witness the sup")
    if not feasible(tol):
        raise DegenerateGeometryError(
            "no positive alpha has its sublevel set inside the domain")
    lo_a = tol
    while hi_a - lo_a > tol:
        mid = 0.5 * (lo_a + hi_a)
        if feasible(mid):
            lo_a = mid
        else:
            hi_a = mid
    return lo_a


# ---------------------------------------------------------------------------
# Transfer bounds and the certificate report
# ---------------------------------------------------------------------------

@dataclass
class CertificateReport:
    kind: str
    constants: dict
    thresholds: dict
    vacuous: Optional[bool] = None
    satisfied_fraction: Optional[float] = None
    worst_violation: Optional[float] = None
    residual_stats: Optional[dict] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "constants": dict(self.constants),
             "thresholds": dict(self.thresholds), "notes": list(self.notes)}
        for key in ("vacuous", "satisfied_fraction", "worst_violation",
                    "residual_stats"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        return d


def transfer_bounds(L: float, gamma: float, rho: Optional[float] = None,
                    alpha: Optional[float] = None,
                    alpha0: Optional[float] = None, time: str = "discrete",
                    beta: Optional[float] = None,
                    beta_prime: Optional[float] = None,
                    quad_weight: float = 0.1) -> CertificateReport:
    """Pure arithmetic: latent-certificate constants -> original-space bounds.

    Exactly one of rho (Lyapunov) / alpha (barrier) selects the kind. For
    discrete Lyapunov the stability threshold is L*gamma/(1-rho) with
    rho in [0,1); continuous uses L*gamma/rho with rho > 0. Barriers (both
    times) degrade superlevel sets by L*gamma/alpha; with beta_prime given
    the guaranteed margin beta_prime - L*gamma/alpha is reported, and with
    beta as well, the inflation condition beta_prime >= beta + L*gamma/alpha.

    The invariant band [L*gamma/(1-rho), alpha0] is flagged vacuous when
    its lower end exceeds alpha0 (no nontrivial invariant band).
    """
    if (rho is None) == (alpha is None):
        raise ContractError("provide exactly one of rho or alpha")
    if time not in ("discrete", "continuous"):
        raise ContractError("time must be 'discrete' or 'continuous'")
    if L < 0.0 or gamma < 0.0:
        raise ContractError("L and gamma must be nonnegative")

    constants = {"L": L, "gamma": gamma, "time": time}
    thresholds: dict = {}
    notes: List[str] = []
    vacuous = None

    if rho is not None:
        kind = f"lyapunov-{time}"
        constants["rho"] = rho
        if time == "discrete":
            if not 0.0 <= rho < 1.0:
                raise ContractError("discrete rho must lie in [0, 1)")
            threshold = L * gamma / (1.0 - rho)
        else:
            if rho <= 0.0:
                raise ContractError("continuous rho must be positive")
            threshold = L * gamma / rho
        thresholds["stability_threshold"] = threshold
        thresholds["classk_radius"] = float(np.sqrt(threshold / quad_weight))
        notes.append("classk_radius interprets kappa(s) = "
                     f"{quad_weight} s^2 (the quadratic floor of V)")
        if alpha0 is not None:
            constants["alpha0"] = alpha0
            thresholds["invariant_band"] = [threshold, alpha0]
            vacuous = bool(threshold > alpha0)
            if vacuous:
                notes.append("no nontrivial invariant band: "
                             "stability threshold exceeds alpha0")
    else:
        kind = f"barrier-{time}"
        constants["alpha"] = alpha
        if alpha <= 0.0:
            raise ContractError("alpha must be positive")
        thresholds["safety_threshold"] = -L * gamma / alpha
        if beta_prime is not None:
            constants["beta_prime"] = beta_prime
            thresholds["min_distance_guarantee"] = \
                beta_prime - L * gamma / alpha
        if beta is not None and beta_prime is not None:
            constants["beta"] = beta
            thresholds["margin_inflation_ok"] = \
                bool(beta_prime >= beta + L * gamma / alpha)

    return CertificateReport(kind=kind, constants=constants,
                             thresholds=thresholds, vacuous=vacuous,
                             notes=notes)


# ---------------------------------------------------------------------------
# Residuals and trajectory-level checks
# ---------------------------------------------------------------------------

def residuals_R(X, model: LatentModel, V: Callable, f: Callable,
                f_z: Callable) -> np.ndarray:
    """Signed R(x) = V(E(f(x))) - V(f_z(E(x))) over a batch of states."""
    X = np.asarray(X, dtype=float)
    ahead = model.encode(np.asarray(f(X), dtype=float))
    predicted = np.asarray(f_z(model.encode(X)), dtype=float)
    return np.asarray(V(ahead), dtype=float) - np.asarray(V(predicted),
                                                          dtype=float)


def residual_R(x, model: LatentModel, V: Callable, f: Callable,
               f_z: Callable) -> float:
    return float(residuals_R(np.asarray(x, dtype=float)[None, :],
                             model, V, f, f_z)[0])


@dataclass
class TrajectoryCheck:
    passed: bool
    first_violation: Optional[int]   # step index, None when passed
    worst_gap: float                 # max over t of vbar - bound
    v0: float


def _per_trajectory(vals: np.ndarray, bounds: np.ndarray,
                    tol: float) -> List[TrajectoryCheck]:
    gaps = vals - bounds
    checks = []
    for r in range(vals.shape[0]):
        bad = np.nonzero(gaps[r] > tol)[0]
        checks.append(TrajectoryCheck(
            passed=bad.size == 0,
            first_violation=int(bad[0]) if bad.size else None,
            worst_gap=float(np.max(gaps[r])), v0=float(vals[r, 0])))
    return checks


def decay_bound(v0, t_idx, L: float, gamma: float, rho: float,
                time: str = "discrete", dt: Optional[float] = None):
    """Practical-stability envelope at step indices t_idx.

    Discrete: rho^t v0 + L*gamma/(1-rho). Continuous, sampled at t = k*dt:
    (v0 - L*gamma/rho) e^{-rho k dt} + L*gamma/rho. Broadcasts v0 against
    t_idx.
    """
    v0 = np.asarray(v0, dtype=float)
    t_idx = np.asarray(t_idx, dtype=float)
    if time == "discrete":
        if not 0.0 <= rho < 1.0:
            raise ContractError("discrete rho must lie in [0, 1)")
        floor = L * gamma / (1.0 - rho)
        return v0 * rho ** t_idx + floor
    if time == "continuous":
        if rho <= 0.0:
            raise ContractError("continuous rho must be positive")
        if dt is None:
            raise ContractError("continuous-time checks need dt")
        floor = L * gamma / rho
        return (v0 - floor) * np.exp(-rho * dt * t_idx) + floor
    raise ContractError("time must be 'discrete' or 'continuous'")


def rollout_values(X0, step: Callable, vbar: Callable,
                   horizon: int) -> np.ndarray:
    """(m, horizon+1) array of vbar along the simulated closed loop."""
    X = np.atleast_2d(np.asarray(X0, dtype=float))
    vals = np.empty((X.shape[0], horizon + 1))
    vals[:, 0] = vbar(X)
    for t in range(horizon):
        X = np.asarray(step(X), dtype=float)
        vals[:, t + 1] = vbar(X)
    return require_finite(vals, "vbar along trajectories")


def trajectory_bound_check(X0, step: Callable, vbar: Callable, L: float,
                           gamma: float, rho: float, horizon: int,
                           time: str = "discrete", dt: Optional[float] = None,
                           tol: float = 1e-9) -> List[TrajectoryCheck]:
    """Simulate the true closed loop and compare V-bar to its decay bound.

    Violations are results, not errors; each trajectory reports its first
    offending step.
    """
    vals = rollout_values(X0, step, vbar, horizon)
    t_idx = np.arange(horizon + 1, dtype=float)[None, :]
    bounds = decay_bound(vals[:, :1], t_idx, L, gamma, rho, time, dt)
    return _per_trajectory(vals, bounds, tol)


def invariance_check(X0, step: Callable, vbar: Callable, alpha: float,
                     horizon: int, tol: float = 1e-9) -> List[TrajectoryCheck]:
    """Forward invariance of the sublevel set {vbar <= alpha}: simulate and
    require vbar(x_t) <= alpha at every step."""
    vals = rollout_values(X0, step, vbar, horizon)
    bounds = np.full_like(vals, float(alpha))
    return _per_trajectory(vals, bounds, tol)


def zero_set_scan(model: LatentModel, grid, tol: float) -> np.ndarray:
    """Grid points whose encoding is within tol of latent zero.

    The set E^{-1}(0) is where practical stability actually lands the
    original system; these points are emitted for plotting.
    """
    X = np.asarray(grid, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("need a nonempty (m, n_x) grid")
    Z = model.encode(X)
    norms = np.sqrt(np.sum(Z * Z, axis=1))
    return X[norms <= tol]
