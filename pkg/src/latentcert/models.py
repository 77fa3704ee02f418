"""Dense networks with hand-written reverse-mode differentiation.

Three model families built from one MLP primitive:

- Mlp: tanh hidden layers, linear output, float64, explicit forward caches
  and a backward pass that accumulates parameter gradients. No autograd
  framework; gradients are validated against central differences in tests.
- LatentModel: encoder E: R^{n_x} -> R^{n_z}, decoder D: R^{n_z} -> R^{n_x},
  and state-dependent latent dynamics z+ = A(z) z + B(z) u where A and B are
  MLP outputs reshaped row-major to (n_z, n_z) and (n_z, n_u).
- LyapunovNet: V(z) = F(z - z_eq)^2 + w ||z - z_eq||^2 with F an MLP without
  biases, so V(z_eq) = 0 and V > 0 elsewhere by construction.

Mlp methods take strictly 2-d batches (m, d); LatentModel and LyapunovNet
accept a single point (d,) or a batch (m, d).

Checkpoints are JSON: row-major weight lists plus activation tags, validated
on load.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CheckpointError, ContractError, NumericError
from .jsonio import dump_json, load_json

_ACTS = ("tanh", "linear")


@dataclass
class Layer:
    W: np.ndarray                  # (n_out, n_in)
    b: Optional[np.ndarray]        # (n_out,) or None
    act: str = "linear"


class Mlp:
    """Plain dense network; see module docstring for conventions."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ContractError("Mlp needs at least one layer")
        for layer in layers:
            if layer.act not in _ACTS:
                raise ContractError(f"unknown activation {layer.act!r}")
        self.layers = layers
        offsets, k = [], 0
        for layer in layers:
            offsets.append(k)
            k += 2 if layer.b is not None else 1
        self._offsets = offsets
        self.n_params = k

    @classmethod
    def create(cls, sizes: list[int], rng: np.random.Generator,
               bias: bool = True) -> "Mlp":
        """Tanh hidden layers, linear output. W ~ U[-1/sqrt(fan_in), +...],
        biases start at zero."""
        layers = []
        for i in range(len(sizes) - 1):
            bound = 1.0 / np.sqrt(sizes[i])
            W = rng.uniform(-bound, bound, size=(sizes[i + 1], sizes[i]))
            b = np.zeros(sizes[i + 1]) if bias else None
            act = "tanh" if i < len(sizes) - 2 else "linear"
            layers.append(Layer(W, b, act))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def n_out(self) -> int:
        return self.layers[-1].W.shape[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.W)
            if layer.b is not None:
                out.append(layer.b)
        return out

    def set_params(self, flat: list[np.ndarray]) -> None:
        mine = self.params()
        if len(flat) != len(mine):
            raise ContractError("parameter list length mismatch")
        for dst, src in zip(mine, flat):
            if dst.shape != src.shape:
                raise ContractError("parameter shape mismatch")
            dst[...] = src

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]

    def forward(self, X: np.ndarray) -> np.ndarray:
        A = X
        for layer in self.layers:
            A = A @ layer.W.T
            if layer.b is not None:
                A = A + layer.b
            if layer.act == "tanh":
                A = np.tanh(A)
        return A

    def forward_cached(self, X: np.ndarray):
        """Returns (Y, cache); cache = [X, A_1, ..., A_L] post-activation."""
        cache = [X]
        A = X
        for layer in self.layers:
            A = A @ layer.W.T
            if layer.b is not None:
                A = A + layer.b
            if layer.act == "tanh":
                A = np.tanh(A)
            cache.append(A)
        return A, cache

    def backward(self, cache, dY: np.ndarray, grads: Optional[list] = None):
        """Reverse pass. Accumulates parameter gradients into `grads`
        (allocated when None) and returns (dX, grads)."""
        if grads is None:
            grads = self.zero_grads()
        dA = dY
        for li in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[li]
            A_out = cache[li + 1]
            A_in = cache[li]
            if layer.act == "tanh":
                dpre = dA * (1.0 - A_out * A_out)
            else:
                dpre = dA
            o = self._offsets[li]
            grads[o] += dpre.T @ A_in
            if layer.b is not None:
                grads[o + 1] += dpre.sum(axis=0)
            dA = dpre @ layer.W
        return dA, grads

    def input_jacobian(self, X: np.ndarray) -> np.ndarray:
        """Batched Jacobian d out / d in, shape (m, n_out, n_in)."""
        _, cache = self.forward_cached(X)
        m = X.shape[0]
        J = np.repeat(np.eye(self.n_in)[None, :, :], m, axis=0)
        for li, layer in enumerate(self.layers):
            J = np.einsum("oi,mij->moj", layer.W, J)
            if layer.act == "tanh":
                A_out = cache[li + 1]
                J = J * (1.0 - A_out * A_out)[:, :, None]
        return J

    def to_dict(self) -> dict:
        return {"layers": [
            {"w": layer.W.tolist(),
             "b": None if layer.b is None else layer.b.tolist(),
             "act": layer.act}
            for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        try:
            layers = [Layer(np.array(ld["w"], dtype=float),
                            None if ld["b"] is None else np.array(ld["b"], dtype=float),
                            ld["act"]) for ld in d["layers"]]
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed MLP block: {e}") from e
        for layer in layers:
            if layer.W.ndim != 2:
                raise CheckpointError("weight blocks must be 2-d")
            if layer.b is not None and layer.b.shape != (layer.W.shape[0],):
                raise CheckpointError("bias length must match output width")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise CheckpointError("consecutive layer widths disagree")
        return cls(layers)


def _as_batch(x, d: int, what: str):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ContractError(f"{what} must have length {d}, got {x.shape}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != d:
        raise ContractError(f"{what} must be (m, {d}), got {x.shape}")
    return x, False


class LatentModel:
    """Encoder/decoder pair plus state-dependent linear latent dynamics."""

    def __init__(self, n_x: int, n_u: int, n_z: int,
                 encoder: Mlp, decoder: Mlp, a_net: Mlp, b_net: Mlp):
        if (encoder.n_in, encoder.n_out) != (n_x, n_z):
            raise ContractError("encoder shape mismatch")
        if (decoder.n_in, decoder.n_out) != (n_z, n_x):
            raise ContractError("decoder shape mismatch")
        if (a_net.n_in, a_net.n_out) != (n_z, n_z * n_z):
            raise ContractError("A-net shape mismatch")
        if (b_net.n_in, b_net.n_out) != (n_z, n_z * n_u):
            raise ContractError("B-net shape mismatch")
        self.n_x, self.n_u, self.n_z = n_x, n_u, n_z
        self.encoder, self.decoder = encoder, decoder
        self.a_net, self.b_net = a_net, b_net

    @classmethod
    def create(cls, n_x: int, n_u: int, n_z: int, hidden: int,
               rng: np.random.Generator) -> "LatentModel":
        return cls(
            n_x, n_u, n_z,
            encoder=Mlp.create([n_x, hidden, n_z], rng),
            decoder=Mlp.create([n_z, hidden, n_x], rng),
            a_net=Mlp.create([n_z, hidden, n_z * n_z], rng),
            b_net=Mlp.create([n_z, hidden, n_z * n_u], rng),
        )

    def params(self) -> list[np.ndarray]:
        return (self.encoder.params() + self.decoder.params()
                + self.a_net.params() + self.b_net.params())

    def encode(self, x):
        X, single = _as_batch(x, self.n_x, "state")
        Z = self.encoder.forward(X)
        return Z[0] if single else Z

    def decode(self, z):
        Z, single = _as_batch(z, self.n_z, "latent state")
        X = self.decoder.forward(Z)
        return X[0] if single else X

    def dynamics(self, z):
        """State-dependent (A(z), B(z)) at a single latent point."""
        Z, _ = _as_batch(z, self.n_z, "latent state")
        A = self.a_net.forward(Z)[0].reshape(self.n_z, self.n_z)
        B = self.b_net.forward(Z)[0].reshape(self.n_z, self.n_u)
        return A, B

    def latent_step(self, z, u):
        """z+ = A(z) z + B(z) u, single point or batch."""
        Z, single = _as_batch(z, self.n_z, "latent state")
        U, usingle = _as_batch(u, self.n_u, "input")
        if usingle and not single:
            U = np.repeat(U, Z.shape[0], axis=0)
        if Z.shape[0] != U.shape[0]:
            raise ContractError("batch sizes of z and u disagree")
        A = self.a_net.forward(Z).reshape(-1, self.n_z, self.n_z)
        B = self.b_net.forward(Z).reshape(-1, self.n_z, self.n_u)
        Znext = (np.einsum("mij,mj->mi", A, Z)
                 + np.einsum("mij,mj->mi", B, U))
        return Znext[0] if single else Znext

    def rollout_latent(self, z0, U):
        """Rollout of the latent dynamics.

        z0: (m, n_z) starts; U: (m, T, n_u) inputs. Returns (m, T+1, n_z).
        """
        Z0 = np.asarray(z0, dtype=float)
        U = np.asarray(U, dtype=float)
        if Z0.ndim != 2 or U.ndim != 3 or U.shape[0] != Z0.shape[0]:
            raise ContractError("rollout expects (m, n_z) starts and (m, T, n_u) inputs")
        out = np.empty((Z0.shape[0], U.shape[1] + 1, self.n_z))
        out[:, 0] = Z0
        for t in range(U.shape[1]):
            out[:, t + 1] = self.latent_step(out[:, t], U[:, t])
        return out

    def encoder_jacobian(self, x):
        """dE/dx, shape (n_z, n_x) for a single state, (m, n_z, n_x) batched."""
        X, single = _as_batch(x, self.n_x, "state")
        J = self.encoder.input_jacobian(X)
        return J[0] if single else J

    def to_dict(self) -> dict:
        return {
            "format": "latent-model-v1",
            "n_x": self.n_x, "n_u": self.n_u, "n_z": self.n_z,
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "a_net": self.a_net.to_dict(),
            "b_net": self.b_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentModel":
        if d.get("format") != "latent-model-v1":
            raise CheckpointError("not a latent-model checkpoint")
        try:
            return cls(int(d["n_x"]), int(d["n_u"]), int(d["n_z"]),
                       Mlp.from_dict(d["encoder"]), Mlp.from_dict(d["decoder"]),
                       Mlp.from_dict(d["a_net"]), Mlp.from_dict(d["b_net"]))
        except (KeyError, ContractError) as e:
            raise CheckpointError(f"malformed latent-model checkpoint: {e}") from e

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "LatentModel":
        return cls.from_dict(load_json(path))


class LyapunovNet:
    """V(z) = F(z - z_eq)^2 + quad_weight ||z - z_eq||^2, F bias-free."""

    def __init__(self, f_net: Mlp, z_eq, quad_weight: float = 0.1):
        z_eq = np.asarray(z_eq, dtype=float)
        if f_net.n_out != 1:
            raise ContractError("F must be scalar-valued")
        if z_eq.shape != (f_net.n_in,):
            raise ContractError("z_eq length must match F input width")
        if quad_weight <= 0.0:
            raise ContractError("quad_weight must be positive")
        if any(layer.b is not None for layer in f_net.layers):
            raise ContractError("F must have no biases so that V(z_eq) = 0")
        self.f_net = f_net
        self.z_eq = z_eq
        self.quad_weight = quad_weight

    @classmethod
    def create(cls, z_eq, hidden: int, rng: np.random.Generator,
               quad_weight: float = 0.1) -> "LyapunovNet":
        z_eq = np.asarray(z_eq, dtype=float)
        n_z = z_eq.shape[0]
        f_net = Mlp.create([n_z, hidden, hidden, 1], rng, bias=False)
        return cls(f_net, z_eq, quad_weight)

    @property
    def n_z(self) -> int:
        return self.f_net.n_in

    def params(self) -> list[np.ndarray]:
        return self.f_net.params()

    def value(self, z):
        Z, single = _as_batch(z, self.n_z, "latent state")
        delta = Z - self.z_eq
        F = self.f_net.forward(delta)[:, 0]
        V = F * F + self.quad_weight * np.sum(delta * delta, axis=1)
        return float(V[0]) if single else V

    def grad(self, z):
        """Analytic gradient of V: 2 F grad F + 2 w (z - z_eq)."""
        Z, single = _as_batch(z, self.n_z, "latent state")
        delta = Z - self.z_eq
        out, cache = self.f_net.forward_cached(delta)
        F = out[:, 0]
        dF, _ = self.f_net.backward(cache, np.ones((Z.shape[0], 1)))
        g = 2.0 * F[:, None] * dF + 2.0 * self.quad_weight * delta
        return g[0] if single else g

    def to_dict(self) -> dict:
        return {
            "format": "lyapunov-net-v1",
            "f_net": self.f_net.to_dict(),
            "z_eq": self.z_eq.tolist(),
            "quad_weight": self.quad_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LyapunovNet":
        if d.get("format") != "lyapunov-net-v1":
            raise CheckpointError("not a lyapunov-net checkpoint")
        try:
            return cls(Mlp.from_dict(d["f_net"]),
                       np.array(d["z_eq"], dtype=float),
                       float(d["quad_weight"]))
        except (KeyError, ContractError) as e:
            raise CheckpointError(f"malformed lyapunov checkpoint: {e}") from e

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "LyapunovNet":
        return cls.from_dict(load_json(path))


def identity_witness(F: np.ndarray, G: np.ndarray) -> LatentModel:
    """Latent model that replicates the linear system x+ = F x + G u exactly.

    Encoder and decoder are the identity (single linear layers), A(z) and
    B(z) are constant (zero hidden weights, output biases F and G row-major).
    Useful as the exact-conjugacy witness: every conjugacy error mode is
    identically zero for it.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    n = F.shape[0]
    n_u = G.shape[1]
    eye = Mlp([Layer(np.eye(n), np.zeros(n), "linear")])
    eye2 = Mlp([Layer(np.eye(n), np.zeros(n), "linear")])
    a_net = Mlp([Layer(np.zeros((n * n, n)), F.reshape(-1).copy(), "linear")])
    b_net = Mlp([Layer(np.zeros((n * n_u, n)), G.reshape(-1).copy(), "linear")])
    return LatentModel(n, n_u, n, eye, eye2, a_net, b_net)


def whiten_latent(model: LatentModel, X) -> LatentModel:
    """Change the latent basis so encodings of X have unit second moment.

    With S = (mean of z z^T over E(X))^{-1/2}, the new coordinates are
    z' = S z: the last encoder layer is folded with S, the decoder / A-net /
    B-net input layers with S^{-1}, and the A/B output layers with the
    matching Kronecker factors, so that A'(z') = S A(z) S^{-1} and
    B'(z') = S B(z). Every x-space prediction of the returned model is
    unchanged; only the internal latent scale moves. Downstream consumers
    (LQR weights, Lyapunov training boxes, domain radii) are calibrated for
    an isotropic latent cloud, which the raw trainer does not guarantee.

    A nearly collapsed latent direction has no well-conditioned inverse
    and raises NumericError instead of amplifying noise.
    """
    X = np.asarray(X, dtype=float)
    Z = model.encode(X)
    if Z.ndim != 2:
        raise ContractError("whitening expects a batch of states")
    sigma = Z.T @ Z / Z.shape[0]
    lam, Q = np.linalg.eigh(sigma)
    if lam[0] <= 1e-9 * max(lam[-1], 1.0):
        raise NumericError(
            "latent second moment is near-singular "
            f"(eigenvalues {np.array2string(lam, precision=3)}); a "
            "collapsed direction cannot be whitened")
    S = (Q * lam ** -0.5) @ Q.T
    Sinv = (Q * lam ** 0.5) @ Q.T

    out = copy.deepcopy(model)
    for net in (out.encoder, out.a_net, out.b_net):
        if net.layers[-1].act != "linear":
            raise ContractError("whitening needs linear output layers")
    enc = out.encoder.layers[-1]
    enc.W[...] = S @ enc.W
    if enc.b is not None:
        enc.b[...] = S @ enc.b
    for net in (out.decoder, out.a_net, out.b_net):
        net.layers[0].W[...] = net.layers[0].W @ Sinv
    for net, M in ((out.a_net, np.kron(S, Sinv.T)),
                   (out.b_net, np.kron(S, np.eye(out.n_u)))):
        last = net.layers[-1]
        last.W[...] = M @ last.W
        if last.b is not None:
            last.b[...] = M @ last.b
    return out
