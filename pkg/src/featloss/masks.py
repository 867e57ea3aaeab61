"""Dynamic/static masks, their balance weights, and class-score collapse."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import as_tensor


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel dynamic indicator (1 = dynamic object, 0 = static background)."""

    values: np.ndarray
    dynamic_count: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 3 and v.shape[0] == 1:
            v = v[0]
        if v.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {v.shape}")
        if v.dtype != bool:
            if not np.all((v == 0) | (v == 1)):
                raise ValueError("mask values must be 0 or 1")
            v = v.astype(bool)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dynamic_count", int(v.sum()))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def total(self) -> int:
        return self.values.size

    def as_tensor(self) -> np.ndarray:
        return self.values.astype(np.float64)[None]


@dataclass(frozen=True)
class BalanceWeights:
    weights: np.ndarray
    degenerate: bool


def balance_weights(mask: BinaryMask) -> BalanceWeights:
    """Weights N/N_dyn on dynamic pixels and N/(N - N_dyn) on static ones.

    All-static and all-dynamic masks get uniform weight 1 and ``degenerate=True``.
    """
    n = mask.total
    n_dyn = mask.dynamic_count
    if n_dyn == 0 or n_dyn == n:
        return BalanceWeights(np.ones((1,) + mask.shape), True)
    w = np.where(mask.values, n / n_dyn, n / (n - n_dyn))
    return BalanceWeights(w[None], False)


@dataclass(frozen=True)
class ClassScoreMap:
    scores: np.ndarray
    dyn_flags: tuple[bool, ...]

    def __post_init__(self):
        s = as_tensor(self.scores)
        flags = tuple(bool(f) for f in self.dyn_flags)
        n = s.shape[0]
        if n < 2:
            raise ValueError("need at least two classes")
        if len(flags) != n:
            raise ValueError(f"{len(flags)} dynamic flags for {n} classes")
        n_dyn = sum(flags)
        if not 1 <= n_dyn < n:
            raise ValueError(f"need 1 <= n_dyn < n, got n_dyn={n_dyn}, n={n}")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "dyn_flags", flags)

    @property
    def n_classes(self) -> int:
        return self.scores.shape[0]

    @property
    def n_dynamic(self) -> int:
        return sum(self.dyn_flags)


def collapse_weights(n: int, n_dyn: int) -> tuple[float, float]:
    """Fixed 1x1 channel weights (w_dyn, w_stat)."""
    return (n - n_dyn) / n, -n_dyn / n


def collapse_dynamic(scores: ClassScoreMap) -> tuple[np.ndarray, BinaryMask]:
    """Softmax over classes, fixed weighted channel sum, tanh.

    Returns the soft map in (-1, 1) and the hard mask ``soft > 0``; an exact zero
    is treated as static.
    """
    s = scores.scores
    n, n_dyn = scores.n_classes, scores.n_dynamic
    flags = np.array(scores.dyn_flags)
    e = np.exp(s - s.max(axis=0, keepdims=True))
    # integer-weighted numerator keeps the uniform case at exactly zero
    num = (n - n_dyn) * e[flags].sum(axis=0) - n_dyn * e[~flags].sum(axis=0)
    pre = num / (n * e.sum(axis=0))
    soft = np.tanh(pre)[None]
    return soft, BinaryMask(soft[0] > 0)
