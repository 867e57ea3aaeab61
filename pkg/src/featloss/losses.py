"""Appearance, adversarial and segmentation objectives as pure functions.

Every differentiable loss returns ``(value, grad)`` where ``grad`` is the
gradient of ``value`` with respect to the prediction argument.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .masks import ClassScoreMap

LOG_CLAMP = 1e-7
DEFAULT_LAMBDA_L1 = 100.0


@dataclass
class LossReport:
    """Scalar loss terms plus an optional gradient with respect to the prediction."""

    adv: float = 0.0
    l1: float = 0.0
    det: float = 0.0
    ori: float = 0.0
    desc: float = 0.0
    orb: float = 0.0
    total: float = 0.0
    grad: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("grad")
        return {k: float(v) for k, v in d.items()}

    def to_json(self) -> str:
        # repr-exact floats: json uses float.__repr__
        return json.dumps(self.as_dict(), indent=2)


def weighted_l1(y: np.ndarray, yhat: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of ``w * |y - yhat|`` and its gradient w.r.t. ``yhat`` (sign(0) = 0)."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), y.shape)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yhat.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    r = y - yhat
    loss = float(np.mean(w * np.abs(r)))
    grad = -w * np.sign(r) / r.size
    return loss, grad


def weighted_bce(target: np.ndarray, pred: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of ``-w [t log p + (1 - t) log(1 - p)]`` with ``p`` clamped to [1e-7, 1 - 1e-7].

    The gradient is zero wherever the clamp is active.
    """
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), p.shape)
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    loss = float(np.mean(-w * (t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))))
    inside = (p > LOG_CLAMP) & (p < 1.0 - LOG_CLAMP)
    grad = np.where(inside, w * (-t / pc + (1.0 - t) / (1.0 - pc)), 0.0) / p.size
    return loss, grad


def gan_loss(d_score: np.ndarray, target_is_real: bool, w=1.0) -> tuple[float, np.ndarray]:
    """Weighted patch-level adversarial loss.

    With ``target_is_real`` the loss is ``mean(w * -log D)``, otherwise
    ``mean(w * -log(1 - D))``.  The generator's term is obtained by scoring fake
    patches with ``target_is_real=True`` (non-saturating form).  ``w`` is
    broadcast to the patch grid.
    """
    d = np.asarray(d_score, dtype=np.float64)
    target = np.ones_like(d) if target_is_real else np.zeros_like(d)
    return weighted_bce(target, d, w)


def generator_objective(adv: float, l1: float, orb: float, lambda1: float = DEFAULT_LAMBDA_L1) -> float:
    return adv + lambda1 * l1 + orb


def weighted_cross_entropy(
    scores: ClassScoreMap | np.ndarray,
    labels: np.ndarray,
    class_weights,
) -> float:
    """Mean over pixels of ``w[c] * (logsumexp(scores) - scores[c])`` for label ``c``."""
    s = scores.scores if isinstance(scores, ClassScoreMap) else np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    labels = np.asarray(labels)
    if labels.shape != s.shape[1:]:
        raise ValueError(f"labels shape {labels.shape} != score map {s.shape[1:]}")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ValueError(f"label out of range [0, {n})")
    cw = np.asarray(class_weights, dtype=np.float64)
    if cw.shape != (n,):
        raise ValueError(f"need {n} class weights, got {cw.shape}")
    m = s.max(axis=0)
    lse = m + np.log(np.exp(s - m).sum(axis=0))
    picked = np.take_along_axis(s, labels[None].astype(np.intp), axis=0)[0]
    return float(np.mean(cw[labels] * (lse - picked)))
