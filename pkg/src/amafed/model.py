"""Feed-forward softmax classifier over a flat parameter vector, with
analytic hybrid-loss gradients, Adam, and client-side local training."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from amafed.losses import (
    DICE_SMOOTH,
    PROB_FLOOR,
    NormalizationWindow,
    cross_entropy,
    dice,
    l2_reg,
    minmax_normalize,
    one_hot,
)

ACTIVATIONS = ("relu", "tanh")


class NumericError(ArithmeticError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message: str, client_id=None, epoch=None):
        super().__init__(message)
        self.client_id = client_id
        self.epoch = epoch


@dataclass(frozen=True)
class Architecture:
    layer_dims: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"invalid layer_dims {self.layer_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_params(self) -> int:
        d = self.layer_dims
        return sum(d[i] * d[i + 1] + d[i + 1] for i in range(len(d) - 1))

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def to_dict(self) -> dict:
        return {"layer_dims": list(self.layer_dims), "activation": self.activation}


@dataclass(frozen=True)
class ModelParams:
    theta: np.ndarray
    arch: Architecture

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.arch.n_params,):
            raise ValueError(
                f"theta has {theta.size} entries, architecture needs {self.arch.n_params}"
            )
        if not np.all(np.isfinite(theta)):
            raise NumericError("parameters contain NaN or Inf")
        object.__setattr__(self, "theta", theta)

    def layers(self):
        """(W, b) views per layer, W shaped (fan_in, fan_out)."""
        out, offset = [], 0
        d = self.arch.layer_dims
        for i in range(len(d) - 1):
            w_size = d[i] * d[i + 1]
            W = self.theta[offset : offset + w_size].reshape(d[i], d[i + 1])
            offset += w_size
            b = self.theta[offset : offset + d[i + 1]]
            offset += d[i + 1]
            out.append((W, b))
        return out

    def to_dict(self) -> dict:
        return {**self.arch.to_dict(), "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> ModelParams:
        arch = Architecture(tuple(data["layer_dims"]), data["activation"])
        return cls(np.array(data["theta"], dtype=np.float64), arch)


def save_params(params: ModelParams, path) -> None:
    # json writes floats with repr, so the round trip is bit-exact.
    Path(path).write_text(json.dumps(params.to_dict()))


def load_params(path) -> ModelParams:
    return ModelParams.from_dict(json.loads(Path(path).read_text()))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kwargs) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), **kwargs)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 0.01
    lam: float = 0.6
    weight_decay: float = 0.0
    # Additive per-round learning-rate increment; 0 keeps the rate constant.
    lr_epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be nonnegative")


def init_params(arch: Architecture, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    d = arch.layer_dims
    for fan_in, fan_out in zip(d[:-1], d[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ModelParams(np.concatenate(chunks), arch)


def _activate(z, name):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _activation_grad(z, a, name):
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_width(params: ModelParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.layer_dims[0]:
        raise ValueError(
            f"feature width {x.shape[-1]} does not match input dim "
            f"{params.arch.layer_dims[0]}"
        )
    return x


def _forward_cache(params: ModelParams, x: np.ndarray):
    layers = params.layers()
    pre, post = [], [x]
    a = x
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        pre.append(z)
        a = _softmax(z) if i == len(layers) - 1 else _activate(z, params.arch.activation)
        post.append(a)
    return pre, post


def forward(params: ModelParams, features) -> np.ndarray:
    """Class probabilities, one row per sample."""
    x = _check_width(params, features)
    return _forward_cache(params, x)[1][-1]


def predict(params: ModelParams, features) -> np.ndarray:
    """Argmax class; np.argmax already breaks ties toward the lowest index."""
    return np.argmax(forward(params, features), axis=1)


def _prob_grads(targets, probs, lam, ce_scale, dice_scale):
    """dLoss/dlogits for λ·s_ce·CE + (1−λ)·s_d·(1−Dice)."""
    n = targets.shape[0]
    # CE through softmax collapses to (p − y)/N; rows whose target
    # probability sits under the clip floor have zero gradient.
    target_prob = np.sum(targets * probs, axis=1, keepdims=True)
    d_ce = np.where(target_prob >= PROB_FLOOR, probs - targets, 0.0) / n

    present = targets.sum(axis=0) > 0
    overlap = 2.0 * np.sum(targets * probs, axis=0) + DICE_SMOOTH
    denom = targets.sum(axis=0) + probs.sum(axis=0) + DICE_SMOOTH
    # d(1 − mean_c D_c)/dp_nc over present classes
    g = -(2.0 * targets / denom - overlap / denom**2)
    g = np.where(present, g, 0.0) / max(int(present.sum()), 1)
    d_dice = probs * (g - np.sum(g * probs, axis=1, keepdims=True))

    return lam * ce_scale * d_ce + (1.0 - lam) * dice_scale * d_dice


def gradient(
    params: ModelParams,
    features,
    labels,
    lam: float,
    ce_scale: float = 1.0,
    dice_scale: float = 1.0,
) -> np.ndarray:
    """Gradient of λ·CE + (1−λ)·(1−Dice) (mean over the batch) w.r.t. theta.

    ``ce_scale``/``dice_scale`` are the min-max normalisation factors, held
    constant for the batch.
    """
    x = _check_width(params, features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    pre, post = _forward_cache(params, x)
    probs = post[-1]
    targets = one_hot(labels, params.arch.n_classes)
    loss = lam * cross_entropy(targets, probs) + (1.0 - lam) * (1.0 - dice(targets, probs))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite hybrid loss {loss} (max |theta| "
                           f"{np.abs(params.theta).max():.3g})")

    delta = _prob_grads(targets, probs, lam, ce_scale, dice_scale)
    layers = params.layers()
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((delta.sum(axis=0), post[i].T @ delta))
        if i > 0:
            delta = (delta @ W.T) * _activation_grad(pre[i - 1], post[i], params.arch.activation)
    flat = []
    for gb, gW in reversed(grads):
        flat.append(gW.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def adam_step(
    params: ModelParams, grad: np.ndarray, state: AdamState, lr: float
) -> tuple[ModelParams, AdamState]:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.theta.shape:
        raise ValueError("gradient shape does not match parameters")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta = params.theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=m, v=v, t=t)
    return ModelParams(theta, params.arch), new_state


def train_local(
    global_params: ModelParams, split, cfg: TrainConfig, lr: float | None = None
) -> tuple[ModelParams, list[float]]:
    """Run ``cfg.epochs`` epochs of shuffled mini-batch Adam from a copy of
    ``global_params`` on ``split.train``.

    The objective is the min-max normalised hybrid loss plus
    ``cfg.weight_decay · ½‖θ‖²``. Returns the local parameters and the
    per-epoch mean of the raw (unnormalised) objective.
    """
    train = split.train
    if len(train) == 0:
        raise TrainingError("empty training split", split.client_id)
    lr = cfg.lr if lr is None else lr
    rng = np.random.default_rng(cfg.seed)
    params = ModelParams(global_params.theta.copy(), global_params.arch)
    state = AdamState.zeros(params.theta.size)
    window = NormalizationWindow()
    n_classes = params.arch.n_classes
    history = []
    for epoch in range(cfg.epochs):
        window.reset()
        order = rng.permutation(len(train))
        losses, sizes = [], []
        for start in range(0, len(train), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            x, y = train.features[batch], train.labels[batch]
            probs = forward(params, x)
            targets = one_hot(y, n_classes)
            ce = cross_entropy(targets, probs)
            dice_loss = 1.0 - dice(targets, probs)
            raw = cfg.lam * ce + (1.0 - cfg.lam) * dice_loss + cfg.weight_decay * l2_reg(params.theta)
            if not np.isfinite(raw):
                raise TrainingError(
                    f"client {split.client_id}: non-finite loss in epoch {epoch}",
                    split.client_id,
                    epoch,
                )
            minmax_normalize(ce, "ce", window)
            minmax_normalize(dice_loss, "dice", window)
            try:
                grad = gradient(
                    params, x, y, cfg.lam, window.scale("ce"), window.scale("dice")
                )
            except NumericError as exc:
                raise TrainingError(
                    f"client {split.client_id}, epoch {epoch}: {exc}",
                    split.client_id,
                    epoch,
                ) from exc
            try:
                params, state = adam_step(params, grad, state, lr)
                if cfg.weight_decay:
                    # Decoupled: the α·θ gradient of α·½‖θ‖² is stepped
                    # directly rather than through Adam's preconditioner.
                    params = ModelParams(
                        params.theta - lr * cfg.weight_decay * params.theta, params.arch
                    )
            except NumericError as exc:
                raise TrainingError(
                    f"client {split.client_id}: diverged in epoch {epoch}",
                    split.client_id,
                    epoch,
                ) from exc
            losses.append(raw)
            sizes.append(len(batch))
        history.append(float(np.average(losses, weights=sizes)))
    return params, history
