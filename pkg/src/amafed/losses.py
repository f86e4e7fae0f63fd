"""Scalar loss terms: cross-entropy, soft Dice, min-max normalisation, the
hybrid local loss, L2 and anomaly-aware regularisers and the global loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12
DICE_SMOOTH = 1e-6
# Spans at or below this count as a degenerate min-max window.
DEGENERATE_SPAN = 1e-12


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5  # L2 regularisation weight
    beta: float = 0.3  # anomaly-aware weight

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")


@dataclass
class NormalizationWindow:
    """Running per-term extremes for one client within one epoch."""

    minimum: dict = field(default_factory=dict)
    maximum: dict = field(default_factory=dict)

    def observe(self, term, value: float) -> None:
        self.minimum[term] = min(self.minimum.get(term, value), value)
        self.maximum[term] = max(self.maximum.get(term, value), value)

    def span(self, term) -> float:
        return self.maximum[term] - self.minimum[term]

    def scale(self, term) -> float:
        """Derivative of the normalised term w.r.t. its raw value (1 when degenerate)."""
        span = self.span(term)
        return 1.0 / span if span > DEGENERATE_SPAN else 1.0

    def reset(self) -> None:
        self.minimum.clear()
        self.maximum.clear()

    def copy(self) -> NormalizationWindow:
        return NormalizationWindow(dict(self.minimum), dict(self.maximum))


def _check_shapes(targets, probs):
    targets = np.asarray(targets, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if targets.shape != probs.shape or targets.ndim != 2:
        raise ValueError(
            f"targets {targets.shape} and probs {probs.shape} must be equal N x C"
        )
    return targets, probs


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(targets, probs) -> float:
    targets, probs = _check_shapes(targets, probs)
    if targets.shape[0] == 0:
        return 0.0
    logp = np.log(np.clip(probs, PROB_FLOOR, 1.0))
    return float(-np.sum(targets * logp) / targets.shape[0])


def dice_per_class(targets, probs) -> tuple[np.ndarray, np.ndarray]:
    """Soft Dice per class and the mask of classes present in ``targets``."""
    targets, probs = _check_shapes(targets, probs)
    overlap = np.sum(targets * probs, axis=0)
    denom = targets.sum(axis=0) + probs.sum(axis=0)
    dice = (2.0 * overlap + DICE_SMOOTH) / (denom + DICE_SMOOTH)
    return dice, targets.sum(axis=0) > 0


def dice(targets, probs) -> float:
    """Macro soft Dice over the classes present in the targets."""
    per_class, present = dice_per_class(targets, probs)
    if not present.any():
        return 1.0
    return float(per_class[present].mean())


def minmax_normalize(raw_loss: float, term_id, window: NormalizationWindow) -> float:
    """Record ``raw_loss`` in the window and map it to [0, 1] against the
    extremes seen so far; a degenerate window yields 0.5."""
    window.observe(term_id, raw_loss)
    span = window.span(term_id)
    if span <= DEGENERATE_SPAN:
        return 0.5
    return (raw_loss - window.minimum[term_id]) / span


def hybrid_loss(targets, probs, lam: float, window: NormalizationWindow) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    ce = minmax_normalize(cross_entropy(targets, probs), "ce", window)
    dl = minmax_normalize(1.0 - dice(targets, probs), "dice", window)
    return lam * ce + (1.0 - lam) * dl


def raw_hybrid_loss(targets, probs, lam: float) -> float:
    """Unnormalised λ·CE + (1−λ)·(1−Dice); used for monitoring and reports."""
    return lam * cross_entropy(targets, probs) + (1.0 - lam) * (1.0 - dice(targets, probs))


def l2_reg(theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    return 0.5 * float(theta @ theta)


def rarity_scores(client_histograms) -> np.ndarray:
    """Per-client rarity: sum of inverse global frequencies of held classes, normalised."""
    hist = np.asarray(client_histograms, dtype=np.float64)
    if hist.ndim != 2:
        raise ValueError("expected a K x C array of class counts")
    global_counts = hist.sum(axis=0)
    if global_counts.sum() <= 0:
        raise ValueError("all client histograms are empty")
    inverse = np.divide(
        1.0, global_counts, out=np.zeros_like(global_counts), where=global_counts > 0
    )
    raw = (hist > 0).astype(np.float64) @ inverse
    return raw / raw.sum()


def anomaly_reg(rarity, local_losses) -> float:
    rarity = np.asarray(rarity, dtype=np.float64)
    local_losses = np.asarray(local_losses, dtype=np.float64)
    if rarity.shape != local_losses.shape:
        raise ValueError(
            f"rarity {rarity.shape} and losses {local_losses.shape} differ in length"
        )
    return float(rarity @ local_losses)


def global_loss(weights, local_losses, theta_g, rarity, alpha: float, beta: float) -> float:
    """Σ w_k L_k + α·½‖θ_g‖² + β·Σ r_k L_k."""
    weights = np.asarray(weights, dtype=np.float64)
    local_losses = np.asarray(local_losses, dtype=np.float64)
    if weights.shape != local_losses.shape:
        raise ValueError("weights and local losses differ in length")
    return float(
        weights @ local_losses
        + alpha * l2_reg(theta_g)
        + beta * anomaly_reg(rarity, local_losses)
    )
