"""Dense (C, H, W) float64 tensors, kernel banks and the convolution machinery.

Tensors are plain ``numpy.ndarray`` objects of shape ``(channels, height,
width)`` and dtype float64.  Convolutions are cross-correlations (no kernel
flip), applied per input channel: a ``C``-channel input convolved with a
``K``-kernel bank yields ``C * K`` channels ordered ``c * K + k``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MCT_MAGIC = b"MCT1"


class ShapeError(ValueError):
    """Raised when tensor dimensions are inconsistent.

    ``axis`` names the offending dimension (``"channels"``, ``"height"``,
    ``"width"`` or ``"kernel"``).
    """

    def __init__(self, message: str, axis: str | None = None):
        super().__init__(message)
        self.axis = axis


def as_tensor(data, channels: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 ``(C, H, W)`` array.

    2-D inputs gain a leading channel axis.  Non-finite values are rejected.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) tensor, got ndim={arr.ndim}", "channels")
    if channels is not None and arr.shape[0] != channels:
        raise ShapeError(f"expected {channels} channel(s), got {arr.shape[0]}", "channels")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    for axis, name in enumerate(("channels", "height", "width")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError(
                f"{name} mismatch: {a.shape[axis]} != {b.shape[axis]}", name
            )


@dataclass(frozen=True)
class KernelBank:
    """An ordered stack of equally sized, odd, square kernels.

    ``weights`` has shape ``(count, size, size)``.
    """

    weights: np.ndarray
    label: str

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 3 or w.shape[1] != w.shape[2]:
            raise ShapeError(f"kernel bank must be (K, k, k), got {w.shape}", "kernel")
        if w.shape[1] % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {w.shape[1]}", "kernel")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> int:
        return self.weights.shape[1]

    def __len__(self) -> int:
        return self.count


def conv_output_size(dim: int, ksize: int, stride: int, padding: int) -> int:
    return (dim + 2 * padding - ksize) // stride + 1


def _check_conv_args(shape, bank: KernelBank, stride: int, padding: int):
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    _, h, w = shape
    for name, dim in (("height", h), ("width", w)):
        if dim + 2 * padding < bank.size:
            raise ShapeError(
                f"{name} {dim} (+2*{padding} padding) is smaller than kernel size {bank.size}",
                name,
            )


def conv2d(x: np.ndarray, bank: KernelBank, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Strided, zero-padded cross-correlation of every channel with every kernel."""
    x = as_tensor(x)
    _check_conv_args(x.shape, bank, stride, padding)
    c, h, w = x.shape
    k = bank.size
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.reshape(c * ho * wo, k * k)
    out = cols @ bank.weights.reshape(bank.count, k * k).T
    return np.ascontiguousarray(
        out.reshape(c, ho, wo, bank.count).transpose(0, 3, 1, 2).reshape(c * bank.count, ho, wo)
    )


def conv2d_grad_input(
    upstream: np.ndarray,
    bank: KernelBank,
    stride: int,
    padding: int,
    input_shape: tuple[int, int, int],
) -> np.ndarray:
    """Adjoint of :func:`conv2d` with respect to its input."""
    c, h, w = input_shape
    _check_conv_args(input_shape, bank, stride, padding)
    k = bank.size
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    expected = (c * bank.count, ho, wo)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != expected:
        axis = "channels"
        if upstream.ndim == 3:
            bad = [i for i in range(3) if upstream.shape[i] != expected[i]]
            axis = ("channels", "height", "width")[bad[0]]
        raise ShapeError(f"upstream shape {upstream.shape} != conv output {expected}", axis)

    up = upstream.reshape(c, bank.count, ho * wo).transpose(0, 2, 1)
    cols = (up @ bank.weights.reshape(bank.count, k * k)).reshape(c, ho, wo, k, k)
    grad = np.zeros((c, h + 2 * padding, w + 2 * padding))
    # scatter-add along whichever axis pair has fewer python-level iterations
    if ho * wo <= k * k:
        for oy in range(ho):
            for ox in range(wo):
                grad[:, oy * stride : oy * stride + k, ox * stride : ox * stride + k] += cols[:, oy, ox]
    else:
        span_y = stride * (ho - 1) + 1
        span_x = stride * (wo - 1) + 1
        for i in range(k):
            for j in range(k):
                grad[:, i : i + span_y : stride, j : j + span_x : stride] += cols[:, :, :, i, j]
    if padding:
        grad = grad[:, padding:-padding, padding:-padding]
    return np.ascontiguousarray(grad)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pointwise(x: np.ndarray, fn: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if fn == "sigmoid":
        return _sigmoid(x)
    if fn == "tanh":
        return np.tanh(x)
    if fn == "square":
        return x * x
    raise ValueError(f"unknown pointwise function {fn!r}")


def pointwise_grad(x: np.ndarray, fn: str, upstream: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if fn == "sigmoid":
        s = _sigmoid(x)
        return upstream * s * (1.0 - s)
    if fn == "tanh":
        t = np.tanh(x)
        return upstream * (1.0 - t * t)
    if fn == "square":
        return upstream * 2.0 * x
    raise ValueError(f"unknown pointwise function {fn!r}")


BOX5 = KernelBank(np.full((1, 5, 5), 1.0 / 25.0), "box5")


def smooth(x: np.ndarray, method: str = "box5") -> np.ndarray:
    """5x5 box average with edge-replicated borders; output keeps the input shape."""
    if method != "box5":
        raise ValueError(f"unknown smoothing method {method!r}")
    x = as_tensor(x, channels=1)
    padded = np.pad(x, ((0, 0), (2, 2), (2, 2)), mode="edge")
    return conv2d(padded, BOX5)


def smooth_grad(upstream: np.ndarray, method: str = "box5") -> np.ndarray:
    """Adjoint of :func:`smooth`: box adjoint, then fold the replicated border back."""
    if method != "box5":
        raise ValueError(f"unknown smoothing method {method!r}")
    upstream = as_tensor(upstream, channels=1)
    _, h, w = upstream.shape
    g_pad = conv2d_grad_input(upstream, BOX5, 1, 0, (1, h + 4, w + 4))[0]
    rows = np.clip(np.arange(-2, h + 2), 0, h - 1)
    cols = np.clip(np.arange(-2, w + 2), 0, w - 1)
    tmp = np.zeros((h, w + 4))
    np.add.at(tmp, rows, g_pad)
    out = np.zeros((w, h))
    np.add.at(out, cols, tmp.T)
    return out.T[None].copy()


_EPS64 = float(np.finfo(np.float64).eps)
FD_ROUNDOFF_SLACK = 32.0


def grad_check(
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    point: np.ndarray,
    eps: float = 1e-5,
    n_samples: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between ``fn``'s analytic gradient and central differences.

    ``fn`` returns ``(loss, grad)``.  When ``n_samples`` is given, only that many
    randomly chosen coordinates are probed.

    Central differences carry a round-off error of about
    ``delta = eps_machine * |loss| / eps``.  A component smaller than
    ``1e4 * delta`` cannot be resolved to 1e-4 relative accuracy, so there the
    two values only have to agree within ``FD_ROUNDOFF_SLACK * delta``;
    a larger disagreement is reported as its plain relative error.
    """
    point = np.array(point, dtype=np.float64)
    loss, analytic = fn(point)
    if not np.isfinite(loss):
        raise ValueError("loss is not finite at the check point")
    analytic = np.asarray(analytic, dtype=np.float64).reshape(point.shape)
    flat = point.reshape(-1)
    if n_samples is None or n_samples >= flat.size:
        coords = np.arange(flat.size)
    else:
        coords = np.random.default_rng(seed).choice(flat.size, n_samples, replace=False)

    worst = 0.0
    a_flat = analytic.reshape(-1)
    for idx in coords:
        orig = flat[idx]
        flat[idx] = orig + eps
        lp = fn(point)[0]
        flat[idx] = orig - eps
        lm = fn(point)[0]
        flat[idx] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise ValueError(f"loss is not finite near coordinate {idx}")
        fd = (lp - lm) / (2.0 * eps)
        a = a_flat[idx]
        delta = _EPS64 * max(abs(lp), abs(lm)) / eps
        scale = max(abs(a), abs(fd))
        if scale <= 1e4 * delta and abs(a - fd) <= FD_ROUNDOFF_SLACK * delta:
            continue
        worst = max(worst, abs(a - fd) / max(scale, 1e-300))
    return worst


def save_mct(path, tensor: np.ndarray) -> None:
    t = as_tensor(tensor)
    c, h, w = t.shape
    with open(path, "wb") as fh:
        fh.write(MCT_MAGIC)
        fh.write(struct.pack("<III", c, h, w))
        fh.write(t.astype("<f8").tobytes())


def load_mct(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MCT_MAGIC:
        raise ValueError(f"{path}: not an MCT1 tensor file")
    c, h, w = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != 8 * c * h * w:
        raise ValueError(f"{path}: expected {c * h * w} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(c, h, w)
