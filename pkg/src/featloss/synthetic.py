"""Seeded synthetic scenes used by the demonstrations and tests."""
from __future__ import annotations

import numpy as np

SENSOR_SIGMA = 2.0 / 255.0


def piecewise_scene(rng: np.random.Generator, size: int = 64, n_rects: int = 8) -> np.ndarray:
    """Smooth gradient background with overlapping constant rectangles, shape (1, size, size)."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    gx, gy, base = rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 0.7)
    img = base + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(n_rects):
        h, w = rng.integers(size // 8, size // 2, size=2)
        r, c = rng.integers(0, size - h), rng.integers(0, size - w)
        img[r : r + h, c : c + w] = rng.uniform(0.0, 1.0)
    return np.clip(img, 0.0, 1.0)[None]


def hole_mask(rng: np.random.Generator, size: int = 64, hole: int = 16, border: int = 16) -> np.ndarray:
    """Boolean (size, size) mask with one ``hole x hole`` square away from the border."""
    r, c = rng.integers(border, size - border - hole + 1, size=2)
    m = np.zeros((size, size), dtype=bool)
    m[r : r + hole, c : c + hole] = True
    return m


def inpainting_case(seed: int, size: int = 64, hole: int = 16):
    """``(x, mask, target)``: target scene, and the same scene with an object pasted in the hole."""
    rng = np.random.default_rng(seed)
    target = piecewise_scene(rng, size)
    mask = hole_mask(rng, size, hole)
    x = target.copy()
    x[0][mask] = rng.uniform(0.0, 1.0)
    return x, mask, target


def box_blur(img: np.ndarray, k: int = 9) -> np.ndarray:
    """``k x k`` box blur of a 2-D array with edge replication."""
    p = k // 2
    padded = np.pad(img, p, mode="edge")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = img.shape
    s = c[k : k + h, k : k + w] - c[:h, k : k + w] - c[k : k + h, :w] + c[:h, :w]
    return s / (k * k)


def tamper_pair(rng: np.random.Generator, size: int = 64, noise_sigma: float = SENSOR_SIGMA):
    """A noisy real image, its tampered twin and the per-pixel tamper mask.

    The tampered copy has a random rectangle replaced by a 9x9 box-blurred,
    hence nearly noise-free, version of the same content.
    """
    scene = piecewise_scene(rng, size)[0]
    real = np.clip(scene + rng.normal(0.0, noise_sigma, scene.shape), 0.0, 1.0)
    h, w = rng.integers(size // 4, size // 2 + 1, size=2)
    r, c = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
    region = np.zeros((size, size), dtype=bool)
    region[r : r + h, c : c + w] = True
    fake = real.copy()
    fake[region] = box_blur(real)[region]
    return real, fake, region
