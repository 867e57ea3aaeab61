"""SRM high-pass noise residuals and discriminator input assembly."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .masks import BinaryMask
from .tensor import KernelBank, ShapeError, as_tensor, conv2d, conv2d_grad_input


@lru_cache(maxsize=None)
def srm_kernels() -> KernelBank:
    """The three 5x5 SRM residual filters: horizontal second difference, 3x3 and 5x5 squares."""
    a = np.zeros((5, 5))
    a[2, 1:4] = [1.0, -2.0, 1.0]
    a /= 2.0
    b = np.zeros((5, 5))
    b[1:4, 1:4] = [[-1, 2, -1], [2, -4, 2], [-1, 2, -1]]
    b /= 4.0
    c = np.array(
        [
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ],
        dtype=np.float64,
    ) / 12.0
    return KernelBank(np.stack([a, b, c]), "srm")


def extract_noise(image, amplify: float = 1.0) -> np.ndarray:
    """3-channel SRM residual map, same spatial size as ``image`` (zero padding 2)."""
    image = as_tensor(image, channels=1)
    return amplify * conv2d(image, srm_kernels(), stride=1, padding=2)


def extract_noise_grad(upstream: np.ndarray, amplify: float = 1.0) -> np.ndarray:
    upstream = as_tensor(upstream, channels=3)
    _, h, w = upstream.shape
    return conv2d_grad_input(amplify * upstream, srm_kernels(), 1, 2, (1, h, w))


def assemble_disc_input(x, y_or_yhat, mask: BinaryMask | np.ndarray, noise) -> np.ndarray:
    """Stack ``[x, y, m, n0, n1, n2]`` into a 6-channel discriminator input."""
    x = as_tensor(x, channels=1)
    y = as_tensor(y_or_yhat, channels=1)
    m = mask.as_tensor() if isinstance(mask, BinaryMask) else as_tensor(mask, channels=1)
    n = as_tensor(noise, channels=3)
    shape = x.shape[1:]
    for name, t in (("y", y), ("mask", m), ("noise", n)):
        if t.shape[1] != shape[0]:
            raise ShapeError(f"{name} height {t.shape[1]} != {shape[0]}", "height")
        if t.shape[2] != shape[1]:
            raise ShapeError(f"{name} width {t.shape[2]} != {shape[1]}", "width")
    return np.concatenate([x, y, m, n], axis=0)
