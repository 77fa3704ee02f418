"""Dataset collection and the two trainers (latent model, Lyapunov net).

Loss conventions, with N the number of trajectories in the dataset the loss
is evaluated on, T_i the length of trajectory i, E/D the encoder/decoder and
zhat the t-step latent rollout from E(x_k) under the recorded inputs:

  L_fwd   = sum_i sum_{t=1}^{T_i-1} sum_{k=1}^{T_i-t} ||E(x_{k+t}) - zhat||^2 / N
  L_bwd   = same triple sum with ||x_{k+t} - D(zhat)||^2 / N
  L_left  = sum_i sum_t ||D(E(x_t)) - x_t||^2 / (N T_i)
  L_right = sum_i sum_t ||E(D(E(x_t))) - E(x_t)||^2 / (N T_i)
  L_ori   = ||E(0)||                                   (unsquared)
  L_iso   = ||I - sum_{i,t} E(x_t) E(x_t)^T / (N T_i)||_F   (unsquared,
            raw second moment, not centered)

The forward/backward losses run on the union of the random and drift
datasets; left/right/iso on the random set alone. The total is the weighted
sum with weights (fwd, bwd, left, right, ori, iso).

Gradients are assembled by hand from the MLP reverse passes, including full
backpropagation through the multi-step latent rollouts; finite differences
validate them in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CheckpointError, ContractError, DivergenceError
from .jsonio import dump_json, load_json
from .models import LatentModel, LyapunovNet
from .systems import CartpoleParams, cartpole_step


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    states: np.ndarray   # (T, n_x)
    inputs: np.ndarray   # (T, n_u); the final input is recorded but unused

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if self.states.ndim != 2 or self.inputs.ndim != 2:
            raise ContractError("trajectory arrays must be 2-d")
        if self.states.shape[0] != self.inputs.shape[0]:
            raise ContractError("need one input per state")


@dataclass
class TrajectoryDataset:
    trajectories: list
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def n_states(self) -> int:
        return sum(tr.states.shape[0] for tr in self.trajectories)

    def union(self, other: "TrajectoryDataset") -> "TrajectoryDataset":
        return TrajectoryDataset(self.trajectories + other.trajectories,
                                 {"union_of": [self.meta, other.meta]})

    def grouped(self):
        """Stack same-length trajectories: list of (states (N,T,n_x),
        inputs (N,T,n_u)) in first-seen length order (deterministic)."""
        order, buckets = [], {}
        for tr in self.trajectories:
            T = tr.states.shape[0]
            if T not in buckets:
                buckets[T] = []
                order.append(T)
            buckets[T].append(tr)
        return [(np.stack([tr.states for tr in buckets[T]]),
                 np.stack([tr.inputs for tr in buckets[T]])) for T in order]

    def to_dict(self) -> dict:
        return {
            "format": "trajectory-dataset-v1",
            "meta": self.meta,
            "trajectories": [{"states": tr.states.tolist(),
                              "inputs": tr.inputs.tolist()}
                             for tr in self.trajectories],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryDataset":
        if d.get("format") != "trajectory-dataset-v1":
            raise CheckpointError("not a trajectory-dataset file")
        try:
            trajs = [Trajectory(np.array(td["states"], dtype=float),
                                np.array(td["inputs"], dtype=float))
                     for td in d["trajectories"]]
        except (KeyError, TypeError, ValueError, ContractError) as e:
            raise CheckpointError(f"malformed dataset: {e}") from e
        return cls(trajs, d.get("meta", {}))

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "TrajectoryDataset":
        return cls.from_dict(load_json(path))


def _axis(radius: float, n: int) -> np.ndarray:
    if n < 1:
        raise ContractError("grid needs at least one point per axis")
    return np.array([0.0]) if n == 1 else np.linspace(-radius, radius, n)


def collect_random_dataset(p: CartpoleParams, points_per_dim: int = 3,
                           input_levels: int = 7, T1: int = 16,
                           state_box: float = 0.1,
                           u_range: tuple = (-3.0, 3.0),
                           theta_cap: float = np.pi / 2,
                           seed: int = 0) -> TrajectoryDataset:
    """Gridded-start cartpole rollouts with random inputs, upright-filtered.

    Initial (state, input) pairs grid {||x||_inf <= state_box} x [u_range]
    (points_per_dim^4 x input_levels seeds); the remaining T1-2 stepping
    inputs are uniform in u_range. A trajectory is kept only if
    |theta_t| < theta_cap for all T1 states. The last input of each
    trajectory is drawn but never stepped; it only completes the final
    (state, input) pair.
    """
    if T1 < 2:
        raise ContractError("trajectories need at least two states")
    lo, hi = float(u_range[0]), float(u_range[1])
    if lo > hi:
        raise ContractError(f"invalid input range [{lo}, {hi}]")
    axes = [_axis(state_box, points_per_dim)] * 4
    X0 = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    u0 = _axis(0.5 * (hi - lo), input_levels) + 0.5 * (hi + lo)
    n_seeds = X0.shape[0] * u0.shape[0]
    X0 = np.repeat(X0, u0.shape[0], axis=0)
    U = np.empty((n_seeds, T1))
    U[:, 0] = np.tile(u0, X0.shape[0] // u0.shape[0])
    rng = np.random.default_rng(seed)
    U[:, 1:] = rng.uniform(lo, hi, size=(n_seeds, T1 - 1))

    S = np.empty((n_seeds, T1, 4))
    S[:, 0] = X0
    for t in range(1, T1):
        S[:, t] = cartpole_step(S[:, t - 1], U[:, t - 1], p)
    keep = np.all(np.abs(S[:, :, 2]) < theta_cap, axis=1)
    if not np.any(keep):
        raise ContractError("every seed trajectory left the upright region")
    trajs = [Trajectory(S[i], U[i][:, None]) for i in np.flatnonzero(keep)]
    return TrajectoryDataset(trajs, {
        "kind": "random", "seed": seed, "T1": T1,
        "points_per_dim": points_per_dim, "input_levels": input_levels,
        "state_box": state_box, "u_range": [lo, hi],
        "n_rejected": int(n_seeds - len(trajs)),
    })


def collect_drift_dataset(base: TrajectoryDataset,
                          p: CartpoleParams) -> TrajectoryDataset:
    """One zero-input step from every state of `base`: N2 = N1 T1 pairs
    [(x, 0), (f(x, 0), 0)]."""
    X = np.concatenate([tr.states for tr in base.trajectories], axis=0)
    Xn = cartpole_step(X, np.zeros(X.shape[0]), p)
    zeros = np.zeros((2, 1))
    trajs = [Trajectory(np.stack([X[i], Xn[i]]), zeros.copy())
             for i in range(X.shape[0])]
    return TrajectoryDataset(trajs, {"kind": "drift", "n_base": len(base)})


# ---------------------------------------------------------------------------
# losses (value path)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    fwd: float = 5.0
    bwd: float = 1.0
    left: float = 1.0
    right: float = 1.0
    origin: float = 1.0
    iso: float = 1.0

    def __post_init__(self):
        if min(self.fwd, self.bwd, self.left, self.right,
               self.origin, self.iso) < 0.0:
            raise ContractError("loss weights must be nonnegative")

    def as_dict(self) -> dict:
        return {"fwd": self.fwd, "bwd": self.bwd, "left": self.left,
                "right": self.right, "origin": self.origin, "iso": self.iso}


def _stage_indices(N: int, T: int, j: int):
    """Flat (i*T + t) indices for multi-step stage j over all chains.

    Chains are (start k, trajectory i) pairs ordered k-major, so the chains
    still alive at stage j are exactly the first N*(T-j) ones. Returns
    (input index at offset k+j-1, target index at offset k+j).
    """
    c = np.arange(N * (T - j))
    i = c % N
    k = c // N
    return i * T + k + j - 1, i * T + k + j


def _multistep_sums(model: LatentModel, ds: TrajectoryDataset):
    """Forward-only (sum_fwd_sq, sum_bwd_sq) of the multi-step triple sums."""
    s_fwd = s_bwd = 0.0
    for S, U in ds.grouped():
        N, T = S.shape[:2]
        if T < 2:
            continue
        X = S.reshape(N * T, -1)
        Uf = U.reshape(N * T, -1)
        Z = model.encode(X)
        c = np.arange(N * (T - 1))
        Zc = Z[(c % N) * T + c // N]
        for j in range(1, T):
            m = N * (T - j)
            in_idx, tgt_idx = _stage_indices(N, T, j)
            Znext = model.latent_step(Zc[:m], Uf[in_idx])
            s_fwd += float(np.sum((Znext - Z[tgt_idx]) ** 2))
            s_bwd += float(np.sum((model.decode(Znext) - X[tgt_idx]) ** 2))
            Zc = Znext
    return s_fwd, s_bwd


def reconstruction_losses(model: LatentModel, ds: TrajectoryDataset,
                          kind: str) -> float:
    """One of the six loss terms, unweighted, per the conventions above."""
    if len(ds) == 0:
        raise ContractError("dataset is empty")
    N = len(ds)
    if kind in ("fwd", "bwd"):
        s_fwd, s_bwd = _multistep_sums(model, ds)
        return (s_fwd if kind == "fwd" else s_bwd) / N
    if kind == "ori":
        return float(np.linalg.norm(model.encode(np.zeros(model.n_x))))
    if kind in ("left", "right", "iso"):
        total = 0.0
        S_mat = np.zeros((model.n_z, model.n_z))
        for S, U in ds.grouped():
            n_g, T = S.shape[:2]
            X = S.reshape(n_g * T, -1)
            Z = model.encode(X)
            w = 1.0 / (N * T)
            if kind == "left":
                total += w * float(np.sum((model.decode(Z) - X) ** 2))
            elif kind == "right":
                Z2 = model.encode(model.decode(Z))
                total += w * float(np.sum((Z2 - Z) ** 2))
            else:
                S_mat += w * (Z.T @ Z)
        if kind == "iso":
            return float(np.linalg.norm(np.eye(model.n_z) - S_mat, ord="fro"))
        return total
    raise ContractError(f"unknown loss kind {kind!r}")


def total_loss(model: LatentModel, rand_ds: TrajectoryDataset,
               drift_ds: TrajectoryDataset, w: LossWeights) -> float:
    """Weighted total: fwd/bwd on the union, left/right/iso on rand only."""
    union = rand_ds.union(drift_ds)
    return (w.fwd * reconstruction_losses(model, union, "fwd")
            + w.bwd * reconstruction_losses(model, union, "bwd")
            + w.left * reconstruction_losses(model, rand_ds, "left")
            + w.right * reconstruction_losses(model, rand_ds, "right")
            + w.origin * reconstruction_losses(model, rand_ds, "ori")
            + w.iso * reconstruction_losses(model, rand_ds, "iso"))


# ---------------------------------------------------------------------------
# losses (gradient path)
# ---------------------------------------------------------------------------

class _NetGrads:
    """Flat gradient buffers aligned with LatentModel.params() order."""

    def __init__(self, model: LatentModel):
        self.enc = model.encoder.zero_grads()
        self.dec = model.decoder.zero_grads()
        self.a = model.a_net.zero_grads()
        self.b = model.b_net.zero_grads()

    def flat(self) -> list:
        return self.enc + self.dec + self.a + self.b


def _multistep_grads(model, S, U, n_union, w: LossWeights, g: _NetGrads,
                     Z_flat, dZ_flat, X_flat):
    """Multi-step fwd/bwd sums and their gradients for one same-T group.

    Accumulates decoder/A-net/B-net parameter gradients into `g`, and the
    gradient w.r.t. every encoded dataset state into dZ_flat (the caller
    backpropagates those through the encoder in one batch). Returns
    (sum_fwd_sq, sum_bwd_sq) without the 1/N normalization.
    """
    N, T = S.shape[:2]
    if T < 2:
        return 0.0, 0.0
    n_z, n_u = model.n_z, model.n_u
    Uf = U.reshape(N * T, -1)
    c = np.arange(N * (T - 1))
    start_idx = (c % N) * T + c // N
    Zc = Z_flat[start_idx]
    recs = []
    s_fwd = s_bwd = 0.0
    for j in range(1, T):
        m = N * (T - j)
        Zc = Zc[:m]
        in_idx, tgt_idx = _stage_indices(N, T, j)
        Uc = Uf[in_idx]
        a_out, a_cache = model.a_net.forward_cached(Zc)
        b_out, b_cache = model.b_net.forward_cached(Zc)
        A = a_out.reshape(m, n_z, n_z)
        B = b_out.reshape(m, n_z, n_u)
        Znext = np.einsum("mij,mj->mi", A, Zc) + np.einsum("mij,mj->mi", B, Uc)
        r_fwd = Znext - Z_flat[tgt_idx]
        s_fwd += float(np.sum(r_fwd**2))
        Xhat, dec_cache = model.decoder.forward_cached(Znext)
        r_bwd = Xhat - X_flat[tgt_idx]
        s_bwd += float(np.sum(r_bwd**2))
        recs.append((Zc, Uc, a_cache, b_cache, A, r_fwd, dec_cache, r_bwd,
                     tgt_idx))
        Zc = Znext

    carry = None
    cf = 2.0 * w.fwd / n_union
    cb = 2.0 * w.bwd / n_union
    for j in range(T - 1, 0, -1):
        (Zc, Uc, a_cache, b_cache, A, r_fwd, dec_cache, r_bwd,
         tgt_idx) = recs[j - 1]
        m = Zc.shape[0]
        dZnext = cf * r_fwd
        dZ_flat[tgt_idx] -= dZnext          # target indices unique per stage
        if carry is not None:
            dZnext[:carry.shape[0]] += carry
        dXhat = cb * r_bwd
        dZ_dec, _ = model.decoder.backward(dec_cache, dXhat, g.dec)
        dZnext = dZnext + dZ_dec
        dA = np.einsum("mi,mj->mij", dZnext, Zc).reshape(m, n_z * n_z)
        dB = np.einsum("mi,mj->mij", dZnext, Uc).reshape(m, n_z * model.n_u)
        dZ_a, _ = model.a_net.backward(a_cache, dA, g.a)
        dZ_b, _ = model.b_net.backward(b_cache, dB, g.b)
        carry = np.einsum("mij,mi->mj", A, dZnext) + dZ_a + dZ_b
    dZ_flat[start_idx] += carry
    return s_fwd, s_bwd


def loss_and_grads(model: LatentModel, rand_ds: TrajectoryDataset,
                   drift_ds: TrajectoryDataset, w: LossWeights):
    """Total loss, unweighted components, and the full parameter gradient.

    Returns (total, components dict, grads) with grads aligned to
    model.params(). This is the training path; `total_loss` recomputes the
    same value through the forward-only route and the tests hold the two
    together.
    """
    n_union = len(rand_ds) + len(drift_ds)
    if len(rand_ds) == 0 or n_union == 0:
        raise ContractError("datasets are empty")
    g = _NetGrads(model)

    groups = []
    for ds_tag, ds in (("rand", rand_ds), ("drift", drift_ds)):
        for S, U in ds.grouped():
            N, T = S.shape[:2]
            X = S.reshape(N * T, -1)
            Z, enc_cache = model.encoder.forward_cached(X)
            groups.append({"tag": ds_tag, "S": S, "U": U, "X": X, "Z": Z,
                           "cache": enc_cache, "dZ": np.zeros_like(Z),
                           "N": N, "T": T})

    s_fwd = s_bwd = 0.0
    for grp in groups:
        a, b = _multistep_grads(model, grp["S"], grp["U"], n_union, w, g,
                                grp["Z"], grp["dZ"], grp["X"])
        s_fwd += a
        s_bwd += b
    l_fwd = s_fwd / n_union
    l_bwd = s_bwd / n_union

    # left / right / iso on the random dataset only
    N1 = len(rand_ds)
    l_left = l_right = 0.0
    S_mat = np.zeros((model.n_z, model.n_z))
    rand_groups = [grp for grp in groups if grp["tag"] == "rand"]
    for grp in rand_groups:
        scale = 1.0 / (N1 * grp["T"])
        X, Z = grp["X"], grp["Z"]
        Xhat, dec_cache = model.decoder.forward_cached(Z)
        r_left = Xhat - X
        l_left += scale * float(np.sum(r_left**2))
        Z2, enc2_cache = model.encoder.forward_cached(Xhat)
        r_right = Z2 - Z
        l_right += scale * float(np.sum(r_right**2))
        S_mat += scale * (Z.T @ Z)

        dXhat = (2.0 * w.left * scale) * r_left
        dZ2 = (2.0 * w.right * scale) * r_right
        dXhat_r, _ = model.encoder.backward(enc2_cache, dZ2, g.enc)
        dZ_dec, _ = model.decoder.backward(dec_cache, dXhat + dXhat_r, g.dec)
        grp["dZ"] += dZ_dec - dZ2

    M_iso = np.eye(model.n_z) - S_mat
    l_iso = float(np.linalg.norm(M_iso, ord="fro"))
    if l_iso > 1e-15:
        for grp in rand_groups:
            scale = 1.0 / (N1 * grp["T"])
            grp["dZ"] += (-2.0 * w.iso * scale / l_iso) * (grp["Z"] @ M_iso)

    z0, cache0 = model.encoder.forward_cached(np.zeros((1, model.n_x)))
    l_ori = float(np.linalg.norm(z0[0]))
    if l_ori > 1e-15:
        model.encoder.backward(cache0, (w.origin / l_ori) * z0, g.enc)

    for grp in groups:
        model.encoder.backward(grp["cache"], grp["dZ"], g.enc)

    comps = {"fwd": l_fwd, "bwd": l_bwd, "left": l_left, "right": l_right,
             "ori": l_ori, "iso": l_iso}
    total = (w.fwd * l_fwd + w.bwd * l_bwd + w.left * l_left
             + w.right * l_right + w.origin * l_ori + w.iso * l_iso)
    return total, comps, g.flat()


# ---------------------------------------------------------------------------
# optimizers and trainers
# ---------------------------------------------------------------------------

_OPTIMIZERS = ("sgd", "momentum", "adam")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 2000
    batch_size: Optional[int] = None   # None = full batch (the only mode)
    seed: int = 0
    optimizer: str = "adam"
    rho: float = 0.85                  # decay rate for Lyapunov training

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ContractError("learning rate must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be nonnegative")
        if self.batch_size is not None:
            raise ContractError("only full-batch training is implemented; "
                                "batch_size must be null")
        if self.optimizer not in _OPTIMIZERS:
            raise ContractError(f"optimizer must be one of {_OPTIMIZERS}")
        if not 0.0 <= self.rho < 1.0:
            raise ContractError("rho must lie in [0, 1)")


class Optimizer:
    """sgd / momentum (0.9) / adam (0.9, 0.999, 1e-8); updates in place."""

    def __init__(self, params: list, kind: str, lr: float):
        self.params = params
        self.kind = kind
        self.lr = lr
        self.t = 0
        if kind == "momentum":
            self.v = [np.zeros_like(p) for p in params]
        elif kind == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif kind != "sgd":
            raise ContractError(f"unknown optimizer {kind!r}")

    def step(self, grads: list) -> None:
        self.t += 1
        if self.kind == "sgd":
            for p, dp in zip(self.params, grads):
                p -= self.lr * dp
        elif self.kind == "momentum":
            for p, v, dp in zip(self.params, self.v, grads):
                v *= 0.9
                v += dp
                p -= self.lr * v
        else:
            b1c = 1.0 - 0.9**self.t
            b2c = 1.0 - 0.999**self.t
            for p, m, v, dp in zip(self.params, self.m, self.v, grads):
                m *= 0.9
                m += 0.1 * dp
                v *= 0.999
                v += 0.001 * dp * dp
                p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + 1e-8)


@dataclass
class TrainResult:
    model: LatentModel
    log: list            # dict rows: epoch, fwd, bwd, left, right, ori, iso, total
    best_epoch: int
    best_loss: float
    final_loss: float


def train_latent(rand_ds: TrajectoryDataset, drift_ds: TrajectoryDataset,
                 w: LossWeights, cfg: TrainConfig, n_z: int = 2,
                 hidden: int = 64) -> TrainResult:
    """Full-batch descent on the weighted loss; keeps the best parameters.

    The log has epochs+1 rows (loss before each update, plus the final
    evaluation). Non-finite loss raises DivergenceError carrying the best
    checkpoint seen so far in its `checkpoint` attribute.
    """
    rng = np.random.default_rng(cfg.seed)
    n_x = rand_ds.trajectories[0].states.shape[1]
    n_u = rand_ds.trajectories[0].inputs.shape[1]
    model = LatentModel.create(n_x, n_u, n_z, hidden, rng)
    opt = Optimizer(model.params(), cfg.optimizer, cfg.lr)

    log: list = []
    best_loss, best_epoch = np.inf, -1
    best_params = [p.copy() for p in model.params()]

    def record(epoch: int):
        nonlocal best_loss, best_epoch, best_params
        total, comps, grads = loss_and_grads(model, rand_ds, drift_ds, w)
        if not np.isfinite(total):
            err = DivergenceError(
                f"training loss became non-finite at epoch {epoch}; best was "
                f"{best_loss:.6g} at epoch {best_epoch}")
            err.checkpoint = best_params
            raise err
        log.append({"epoch": epoch, **comps, "total": total})
        if total < best_loss:
            best_loss, best_epoch = total, epoch
            best_params = [p.copy() for p in model.params()]
        return grads

    for epoch in range(cfg.epochs):
        grads = record(epoch)
        opt.step(grads)
    record(cfg.epochs)

    for p, src in zip(model.params(), best_params):
        p[...] = src
    return TrainResult(model, log, best_epoch, float(best_loss),
                       float(log[-1]["total"]))


@dataclass
class LyapunovTrainResult:
    net: LyapunovNet
    satisfied_fraction: float
    log: list            # dict rows: epoch, hinge_loss, satisfied_fraction
    best_epoch: int
    best_loss: float


def train_lyapunov(model: LatentModel, policy: Callable, cfg: TrainConfig,
                   rho: Optional[float] = None, box_halfwidth: float = 1.5,
                   seeds_per_axis: int = 11, rollout_steps: int = 40,
                   hidden: int = 256, quad_weight: float = 0.1,
                   z_eq: Optional[np.ndarray] = None) -> LyapunovTrainResult:
    """Squared-hinge training of V on frozen closed-loop latent rollouts.

    Rollout seeds grid the box {||z - z_eq||_inf <= box_halfwidth}; pairs
    (z_t, z_{t+1}) under z+ = f_z(z, policy(z)) feed the loss
    sum max(0, V(z+) - rho V(z))^2 (an exact sum, not a mean). The latent
    model and policy are never updated here. Returns the best-loss net and
    the fraction of pairs with zero hinge at those parameters.
    """
    rho = cfg.rho if rho is None else float(rho)
    if not 0.0 <= rho < 1.0:
        raise ContractError("rho must lie in [0, 1)")
    if z_eq is None:
        z_eq = model.encode(np.zeros(model.n_x))
    z_eq = np.asarray(z_eq, dtype=float)

    ax = _axis(box_halfwidth, seeds_per_axis)
    seeds = (np.stack(np.meshgrid(*([ax] * model.n_z), indexing="ij"),
                      axis=-1).reshape(-1, model.n_z) + z_eq)
    if seeds.shape[0] == 0 or rollout_steps < 1:
        raise ContractError("empty Lyapunov rollout set")
    Z = seeds
    pairs0, pairs1 = [], []
    for _ in range(rollout_steps):
        Zn = model.latent_step(Z, policy(Z))
        pairs0.append(Z)
        pairs1.append(Zn)
        Z = Zn
    Z0 = np.concatenate(pairs0, axis=0)
    Z1 = np.concatenate(pairs1, axis=0)

    rng = np.random.default_rng(cfg.seed)
    net = LyapunovNet.create(z_eq, hidden, rng, quad_weight)
    opt = Optimizer(net.params(), cfg.optimizer, cfg.lr)

    log: list = []
    best_loss, best_epoch = np.inf, -1
    best_params = [p.copy() for p in net.params()]

    D0 = Z0 - z_eq
    D1 = Z1 - z_eq
    q0 = quad_weight * np.sum(D0 * D0, axis=1)
    q1 = quad_weight * np.sum(D1 * D1, axis=1)

    def evaluate(with_grads: bool):
        if with_grads:
            out0, cache0 = net.f_net.forward_cached(D0)
            out1, cache1 = net.f_net.forward_cached(D1)
        else:
            out0, out1 = net.f_net.forward(D0), net.f_net.forward(D1)
        F0, F1 = out0[:, 0], out1[:, 0]
        gap = (F1 * F1 + q1) - rho * (F0 * F0 + q0)
        loss = float(np.sum(np.where(gap > 0.0, gap, 0.0) ** 2))
        frac = float(np.mean(gap <= 0.0))
        grads = None
        if with_grads:
            dgap = np.where(gap > 0.0, 2.0 * gap, 0.0)
            grads = [np.zeros_like(p) for p in net.params()]
            net.f_net.backward(cache1, (2.0 * F1 * dgap)[:, None], grads)
            net.f_net.backward(cache0, (-2.0 * rho * F0 * dgap)[:, None], grads)
        return loss, frac, grads

    for epoch in range(cfg.epochs + 1):
        last = epoch == cfg.epochs
        loss, frac, grads = evaluate(with_grads=not last)
        if not np.isfinite(loss):
            err = DivergenceError(
                f"Lyapunov loss became non-finite at epoch {epoch}")
            err.checkpoint = best_params
            raise err
        log.append({"epoch": epoch, "hinge_loss": loss,
                    "satisfied_fraction": frac})
        if loss < best_loss:
            best_loss, best_epoch = loss, epoch
            best_params = [p.copy() for p in net.params()]
        if not last:
            opt.step(grads)

    for p, src in zip(net.params(), best_params):
        p[...] = src
    _, frac, _ = evaluate(with_grads=False)
    return LyapunovTrainResult(net, frac, log, best_epoch, float(best_loss))
