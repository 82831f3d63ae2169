"""Small fully connected network trained with a trapezoidal multistep
residual loss, learning a continuous-time state derivative from sampled
trajectories.

The network maps concat(state, command) -> estimated d(state)/dt through
one tanh hidden layer. Training minimizes the mean squared residual of
    x_{k+1} - x_k - (dt/2) * (f(x_k, u_k) + f(x_{k+1}, u_{k+1}))
over all consecutive sample pairs (the trapezoidal one-step implicit rule),
with analytic backpropagation and Adam.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .quadrotor import TrajectoryDataset


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries the epoch index."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class MlpParams:
    """Weights plus the affine whitening baked into the forward pass."""

    w1: np.ndarray            # (n_in, n_hidden)
    b1: np.ndarray            # (n_hidden,)
    w2: np.ndarray            # (n_hidden, n_out)
    b2: np.ndarray            # (n_out,)
    in_shift: np.ndarray      # (n_in,)
    in_scale: np.ndarray      # (n_in,)
    out_scale: np.ndarray     # (n_out,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        n_in, n_h = self.w1.shape
        if self.b1.shape != (n_h,) or self.w2.shape[0] != n_h:
            raise ValueError("inconsistent layer shapes")
        if self.b2.shape != (self.w2.shape[1],):
            raise ValueError("inconsistent output shapes")

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1,
                               self.w2.ravel(), self.b2])

    def with_flat(self, v: np.ndarray) -> "MlpParams":
        n_in, n_h, n_out = self.sizes
        i = 0
        w1 = v[i:i + n_in * n_h].reshape(n_in, n_h); i += n_in * n_h
        b1 = v[i:i + n_h]; i += n_h
        w2 = v[i:i + n_h * n_out].reshape(n_h, n_out); i += n_h * n_out
        b2 = v[i:i + n_out]
        return replace(self, w1=w1, b1=b1, w2=w2, b2=b2)


@dataclass
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: Optional[int] = None   # None = full batch
    seed: int = 0
    init_scale: float = 1.0
    hidden: int = 256
    normalize: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.beta1, self.beta2):
            if not (0.0 < b < 1.0):
                raise ValueError("Adam decays must be in (0, 1)")


def init_params(rng: np.random.Generator, n_in: int = 16, n_hidden: int = 256,
                n_out: int = 12, scale: float = 1.0) -> MlpParams:
    """Uniform init scaled by 1/sqrt(fan_in); identity whitening."""
    def u(fan_in, shape):
        return rng.uniform(-1.0, 1.0, size=shape) * (scale / np.sqrt(fan_in))
    return MlpParams(
        w1=u(n_in, (n_in, n_hidden)),
        b1=np.zeros(n_hidden),
        w2=u(n_hidden, (n_hidden, n_out)),
        b2=np.zeros(n_out),
        in_shift=np.zeros(n_in),
        in_scale=np.ones(n_in),
        out_scale=np.ones(n_out),
    )


def forward_batch(params: MlpParams, Z: np.ndarray) -> np.ndarray:
    """Derivative estimates for a batch of concat(state, command) rows."""
    Zn = (Z - params.in_shift) / params.in_scale
    H = np.tanh(Zn @ params.w1 + params.b1)
    return (H @ params.w2 + params.b2) * params.out_scale


def forward(params: MlpParams, xi: np.ndarray, omega: np.ndarray) -> np.ndarray:
    z = np.concatenate([np.asarray(xi, float), np.asarray(omega, float)])
    return forward_batch(params, z[None, :])[0]


def _pairs(states: Sequence[np.ndarray], inputs: Sequence[np.ndarray], dt: float):
    """Stack trapezoidal pairs: Za=(x_k,u_k), Zb=(x_{k+1},u_{k+1}), D=x_{k+1}-x_k.

    Uses pairs k = 0..N-2 so both endpoints have a recorded command.
    """
    za, zb, d = [], [], []
    for xs, us in zip(states, inputs):
        n = us.shape[0]
        if n < 2:
            raise ValueError("need >= 2 commands per trajectory")
        za.append(np.hstack([xs[: n - 1], us[: n - 1]]))
        zb.append(np.hstack([xs[1:n], us[1:n]]))
        d.append(xs[1:n] - xs[: n - 1])
    return np.vstack(za), np.vstack(zb), np.vstack(d)


def multistep_loss(params: MlpParams, states, inputs, dt: float) -> float:
    Za, Zb, D = _pairs(states, inputs, dt)
    R = D - 0.5 * dt * (forward_batch(params, Za) + forward_batch(params, Zb))
    return float(np.mean(R * R))


def _backprop(params: MlpParams, Z: np.ndarray, dY: np.ndarray):
    """Gradients of sum(dY * forward_batch(params, Z)) w.r.t. weights."""
    Zn = (Z - params.in_shift) / params.in_scale
    A = Zn @ params.w1 + params.b1
    H = np.tanh(A)
    dPre = dY * params.out_scale
    gw2 = H.T @ dPre
    gb2 = dPre.sum(axis=0)
    dH = dPre @ params.w2.T
    dA = dH * (1.0 - H * H)
    gw1 = Zn.T @ dA
    gb1 = dA.sum(axis=0)
    return gw1, gb1, gw2, gb2


def loss_and_gradient(params: MlpParams, states, inputs, dt: float):
    """Exact analytic gradient of multistep_loss, shaped like the weights."""
    Za, Zb, D = _pairs(states, inputs, dt)
    Fa = forward_batch(params, Za)
    Fb = forward_batch(params, Zb)
    R = D - 0.5 * dt * (Fa + Fb)
    loss = float(np.mean(R * R))
    dR = (2.0 / R.size) * R
    dF = -0.5 * dt * dR
    ga = _backprop(params, Za, dF)
    gb = _backprop(params, Zb, dF)
    grads = tuple(x + y for x, y in zip(ga, gb))
    return loss, grads


def _whitening(states, inputs, dt: float):
    Za, Zb, D = _pairs(states, inputs, dt)
    Z = np.vstack([Za, Zb])
    shift = Z.mean(axis=0)
    scale = np.maximum(Z.std(axis=0), 1e-8)
    out_scale = np.maximum((D / dt).std(axis=0), 1e-8)
    return shift, scale, out_scale


def train(dataset: TrajectoryDataset, cfg: TrainConfig) -> Tuple[MlpParams, List[float]]:
    """Adam on the multistep loss; deterministic for a fixed (dataset, cfg)."""
    states, inputs, dt = dataset.states, dataset.inputs, dataset.dt
    n_in = states[0].shape[1] + inputs[0].shape[1]
    n_out = states[0].shape[1]
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0)))
    params = init_params(rng, n_in, cfg.hidden, n_out, cfg.init_scale)
    if cfg.normalize:
        shift, scale, out_scale = _whitening(states, inputs, dt)
        params = replace(params, in_shift=shift, in_scale=scale, out_scale=out_scale)

    Za, Zb, D = _pairs(states, inputs, dt)
    n_pairs = Za.shape[0]
    theta = [params.w1.copy(), params.b1.copy(), params.w2.copy(), params.b2.copy()]
    m = [np.zeros_like(t) for t in theta]
    v = [np.zeros_like(t) for t in theta]
    history: List[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        if cfg.batch_size is None:
            batches = [np.arange(n_pairs)]
        else:
            perm = rng.permutation(n_pairs)
            batches = [perm[i:i + cfg.batch_size]
                       for i in range(0, n_pairs, cfg.batch_size)]
        epoch_loss = 0.0
        for idx in batches:
            params = replace(params, w1=theta[0], b1=theta[1],
                             w2=theta[2], b2=theta[3])
            Fa = forward_batch(params, Za[idx])
            Fb = forward_batch(params, Zb[idx])
            R = D[idx] - 0.5 * dt * (Fa + Fb)
            loss = float(np.mean(R * R))
            dF = -0.5 * dt * (2.0 / R.size) * R
            ga = _backprop(params, Za[idx], dF)
            gb = _backprop(params, Zb[idx], dF)
            grads = [x + y for x, y in zip(ga, gb)]
            epoch_loss += loss * idx.size
            step += 1
            lr_t = cfg.learning_rate * np.sqrt(1.0 - cfg.beta2 ** step) / (1.0 - cfg.beta1 ** step)
            for j in range(4):
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grads[j]
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grads[j] ** 2
                theta[j] = theta[j] - lr_t * m[j] / (np.sqrt(v[j]) + cfg.eps)
        epoch_loss /= n_pairs
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(epoch)
        history.append(epoch_loss)
    params = replace(params, w1=theta[0], b1=theta[1], w2=theta[2], b2=theta[3])
    return params, history


def rollout(params: MlpParams, x0: np.ndarray, controls: np.ndarray,
            dt: float) -> np.ndarray:
    """RK4 integration of the learned derivative under zero-order-hold
    commands; returns (K+1, n_x) states."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    controls = np.atleast_2d(np.asarray(controls, float))
    out = np.empty((controls.shape[0] + 1, x0.shape[0]))
    out[0] = x0
    x = np.asarray(x0, float)
    for i, u in enumerate(controls):
        x = rk4_step(params, x, u, dt)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite rollout state at step {i}")
        out[i + 1] = x
    return out


def rk4_step(params: MlpParams, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    def f(xx):
        return forward_batch(params, np.concatenate([xx, u])[None, :])[0]
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_batch(params: MlpParams, X: np.ndarray, U: np.ndarray,
                   dt: float) -> np.ndarray:
    """Vectorized rk4_step over rows of X (states) and U (commands)."""
    def f(XX):
        return forward_batch(params, np.hstack([XX, U]))
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def save_checkpoint(params: MlpParams, path: str, seed: int = 0,
                    final_loss: float = float("nan")) -> None:
    n_in, n_h, n_out = params.sizes
    doc = {
        "sizes": [n_in, n_h, n_out],
        "activation": params.activation,
        "w1": params.w1.ravel().tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.ravel().tolist(),
        "b2": params.b2.tolist(),
        "normalization": {
            "in_shift": params.in_shift.tolist(),
            "in_scale": params.in_scale.tolist(),
            "out_scale": params.out_scale.tolist(),
        },
        "seed": seed,
        "final_loss": final_loss,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path: str) -> MlpParams:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        n_in, n_h, n_out = doc["sizes"]
        norm = doc["normalization"]
        params = MlpParams(
            w1=np.asarray(doc["w1"], float).reshape(n_in, n_h),
            b1=np.asarray(doc["b1"], float),
            w2=np.asarray(doc["w2"], float).reshape(n_h, n_out),
            b2=np.asarray(doc["b2"], float),
            in_shift=np.asarray(norm["in_shift"], float),
            in_scale=np.asarray(norm["in_scale"], float),
            out_scale=np.asarray(norm["out_scale"], float),
            activation=doc["activation"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
    if not all(np.all(np.isfinite(a)) for a in
               (params.w1, params.b1, params.w2, params.b2)):
        raise ValueError(f"corrupt checkpoint {path}: non-finite weights")
    return params
