"""Adaptive client weighting and model aggregation.

Client utility ``u = γ·f1 + δ·f2`` seeds the weights; they are then refined
by projected gradient descent on

    Φ(w) = Σ w_k (1 − u_k) + μ Σ w_k ln w_k

over the probability simplex, whose minimiser is ``softmax(u / μ)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amafed.model import ModelParams, NumericError


@dataclass(frozen=True)
class MetaObjectiveCfg:
    gamma: float = 0.7
    delta: float = 0.3
    eta: float = 0.01
    # Smaller mu pushes optimal weights toward zero, where the fixed step
    # converges slowly; mu=0.25 with 2000 steps reaches 1e-3 of the optimum
    # for u in [0, 1]^K, K <= 10.
    mu: float = 0.25
    t_meta: int = 2000
    eps_w: float = 1e-6
    refine: bool = True

    def __post_init__(self):
        if self.gamma < 0 or self.delta < 0 or self.gamma + self.delta <= 0:
            raise ValueError("gamma, delta must be nonnegative with a positive sum")
        if self.eta <= 0 or self.mu <= 0:
            raise ValueError("eta and mu must be positive")
        if self.t_meta < 0:
            raise ValueError("t_meta must be nonnegative")
        if not self.eps_w > 0:
            raise ValueError("eps_w must be positive")


@dataclass(frozen=True)
class WeightTrace:
    """Per-round weight pipeline output, one entry per client."""

    u: np.ndarray
    w_init: np.ndarray
    w_refined: np.ndarray
    w_final: np.ndarray


def _vector(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    return x


def utility(f1_scores, f2_scores, gamma: float, delta: float) -> np.ndarray:
    f1_scores, f2_scores = _vector(f1_scores), _vector(f2_scores)
    if f1_scores.shape != f2_scores.shape:
        raise ValueError("f1 and f2 score vectors differ in length")
    return gamma * f1_scores + delta * f2_scores


def init_weights(u, eps_w: float = 1e-6) -> np.ndarray:
    floored = np.maximum(_vector(u), eps_w)
    return floored / floored.sum()


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort and threshold)."""
    v = _vector(v)
    k = v.size
    shifted = v - (v.sum() - 1.0) / k
    if shifted.min() >= 0.0:
        # Shifting along the all-ones normal already lands inside.
        return shifted
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ranks = np.arange(1, k + 1)
    rho = np.flatnonzero(u - css / ranks > 0)[-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def meta_objective(w, u, mu: float) -> tuple[float, np.ndarray]:
    w, u = _vector(w), _vector(u)
    if np.any(w <= 0):
        raise NumericError("meta-objective needs strictly positive weights")
    log_w = np.log(w)
    value = float(w @ (1.0 - u) + mu * (w @ log_w))
    grad = (1.0 - u) + mu * (1.0 + log_w)
    return value, grad


def refine_weights(w0, u, cfg: MetaObjectiveCfg) -> np.ndarray:
    w = _vector(w0).copy()
    u = _vector(u)
    for _ in range(cfg.t_meta):
        _, grad = meta_objective(np.maximum(w, cfg.eps_w), u, cfg.mu)
        nxt = project_simplex(w - cfg.eta * grad)
        if np.max(np.abs(nxt - w)) < 1e-10:
            w = nxt
            break
        w = nxt
    return w


def anomaly_bonus(w, rarity, beta: float) -> np.ndarray:
    w, rarity = _vector(w), _vector(rarity)
    if w.shape != rarity.shape:
        raise ValueError("weights and rarity scores differ in length")
    if beta == 0:
        return w.copy()
    return project_simplex(w + beta * rarity)


def amafed_weights(f1_scores, f2_scores, rarity, cfg: MetaObjectiveCfg, beta: float) -> WeightTrace:
    """init → refine (optional) → anomaly bonus."""
    u = utility(f1_scores, f2_scores, cfg.gamma, cfg.delta)
    w_init = init_weights(u, cfg.eps_w)
    w_refined = refine_weights(w_init, u, cfg) if cfg.refine else w_init.copy()
    w_final = anomaly_bonus(w_refined, rarity, beta)
    return WeightTrace(u, w_init, w_refined, w_final)


def aggregate(client_params: list[ModelParams], w) -> ModelParams:
    w = _vector(w)
    if len(client_params) != w.size or not client_params:
        raise ValueError("need exactly one weight per client model")
    arch = client_params[0].arch
    if any(p.arch != arch for p in client_params):
        raise ValueError("client models have mismatched architectures")
    stacked = np.stack([p.theta for p in client_params])
    return ModelParams(w @ stacked, arch)


def fedavg_weights(client_sizes) -> np.ndarray:
    sizes = _vector(client_sizes)
    if np.any(sizes < 0) or sizes.sum() <= 0:
        raise ValueError("client sizes must be nonnegative with a positive total")
    return sizes / sizes.sum()
