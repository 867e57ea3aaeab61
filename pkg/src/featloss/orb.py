"""Differentiable ORB features: FAST-style detection, patch moments, BRIEF tests.

All three feature maps are evaluated on a regular grid of cell centres
``margin + stride * i`` with no padding, so every kernel sees real pixels
only.  :func:`feature_maps` uses a shared margin large enough for the widest
kernel so that detection, orientation and descriptor maps line up cell for
cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .losses import LossReport, weighted_bce
from .tensor import (
    KernelBank,
    ShapeError,
    as_tensor,
    conv2d,
    conv2d_grad_input,
    pointwise,
    smooth,
    smooth_grad,
)

# 16-pixel Bresenham circle of radius 3 as (dx, dy), clockwise from the top
FAST_RING = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
FAST_ARC = 12
MOMENT_RADIUS = 14
BRIEF_BITS = 256


@dataclass(frozen=True)
class OrbLossConfig:
    t: float = (20.0 / 255.0) ** 2
    gain: float = 1000.0
    gain_desc: float = 50.0
    lambda_det: float = 10.0
    lambda_ori: float = 0.1
    lambda_desc: float = 1.0
    stride: int = 5
    brief_seed: int = 0
    patch_size: int = 31
    square_first: bool = True

    def __post_init__(self):
        for name in ("gain", "gain_desc", "stride", "patch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_det", "lambda_ori", "lambda_desc", "t"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")

    @property
    def margin(self) -> int:
        """Shared grid margin: half-width of the widest kernel."""
        return max(3, MOMENT_RADIUS, self.patch_size // 2)


@lru_cache(maxsize=None)
def fast_kernels() -> KernelBank:
    """16 7x7 kernels: +1 at the centre, -1/12 on 12 contiguous ring pixels."""
    w = np.zeros((16, 7, 7))
    for i in range(16):
        w[i, 3, 3] = 1.0
        for j in range(FAST_ARC):
            dx, dy = FAST_RING[(i + j) % 16]
            w[i, 3 + dy, 3 + dx] = -1.0 / 12.0
    return KernelBank(w, "fast")


@lru_cache(maxsize=None)
def moment_kernels(radius: int = MOMENT_RADIUS) -> KernelBank:
    """Kernels holding x, y and 1 on the disc of the given radius (channels m10, m01, m00)."""
    size = 2 * radius + 1
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    disc = dx * dx + dy * dy <= radius * radius
    w = np.zeros((3, size, size))
    w[0][disc] = dx[disc]
    w[1][disc] = dy[disc]
    w[2][disc] = 1.0
    return KernelBank(w, "moment")


def brief_pairs(seed: int = 0, patch_size: int = 31, n: int = BRIEF_BITS) -> np.ndarray:
    """Test point pairs as an ``(n, 2, 2)`` int array of ``[[x_dx, x_dy], [y_dx, y_dy]]``.

    Offsets are i.i.d. isotropic Gaussian (sigma = patch_size / 5), rounded and
    clipped to the patch; pairs with coincident points are redrawn.
    """
    rng = np.random.default_rng(seed)
    half = patch_size // 2
    sigma = patch_size / 5.0

    def draw(k):
        return np.clip(np.rint(rng.normal(0.0, sigma, size=(k, 2, 2))), -half, half).astype(int)

    pairs = draw(n)
    while True:
        same = np.all(pairs[:, 0] == pairs[:, 1], axis=1)
        if not same.any():
            return pairs
        pairs[same] = draw(int(same.sum()))


@lru_cache(maxsize=None)
def brief_kernels(seed: int = 0, patch_size: int = 31) -> KernelBank:
    """One kernel per binary test: +1 at the first point, -1 at the second."""
    half = patch_size // 2
    pairs = brief_pairs(seed, patch_size)
    w = np.zeros((len(pairs), patch_size, patch_size))
    idx = np.arange(len(pairs))
    w[idx, half + pairs[:, 0, 1], half + pairs[:, 0, 0]] = 1.0
    w[idx, half + pairs[:, 1, 1], half + pairs[:, 1, 0]] = -1.0
    return KernelBank(w, "brief")


def grid_centers(length: int, margin: int, stride: int) -> np.ndarray:
    """Pixel coordinates of grid cell centres along one axis."""
    return np.arange(margin, length - margin, stride)


def _crop_for(image: np.ndarray, bank: KernelBank, margin: int) -> tuple[np.ndarray, int]:
    off = margin - bank.size // 2
    if off < 0:
        raise ValueError(f"margin {margin} is smaller than kernel half-width {bank.size // 2}")
    _, h, w = image.shape
    for name, dim in (("height", h), ("width", w)):
        if dim < 2 * margin + 1:
            raise ShapeError(
                f"image {name} {dim} is too small for a {2 * margin + 1}-pixel support", name
            )
    return image[:, off : h - off, off : w - off], off


def _single_channel(image) -> np.ndarray:
    return as_tensor(image, channels=1)


# -- detection ---------------------------------------------------------------


def _detect_forward(image, cfg: OrbLossConfig, margin: int):
    bank = fast_kernels()
    crop, off = _crop_for(image, bank, margin)
    resp = conv2d(crop, bank, stride=cfg.stride)
    if cfg.square_first:
        sq = resp * resp
        arg = sq.argmax(axis=0)
        score = np.take_along_axis(sq, arg[None], axis=0)
    else:
        arg = resp.argmax(axis=0)
        score = np.take_along_axis(resp, arg[None], axis=0) ** 2
    z = cfg.gain * (score - cfg.t)
    det = pointwise(z, "sigmoid")
    return det, (resp, arg, crop.shape, off)


def _detect_backward(upstream, det, cache, cfg: OrbLossConfig, image_shape):
    resp, arg, crop_shape, off = cache
    dz = upstream * det * (1.0 - det)
    dscore = cfg.gain * dz
    picked = np.take_along_axis(resp, arg[None], axis=0)
    dresp = np.zeros_like(resp)
    np.put_along_axis(dresp, arg[None], 2.0 * picked * dscore, axis=0)
    g_crop = conv2d_grad_input(dresp, fast_kernels(), cfg.stride, 0, crop_shape)
    grad = np.zeros(image_shape)
    _, h, w = image_shape
    grad[:, off : h - off, off : w - off] = g_crop
    return grad


def detect_map(image, cfg: OrbLossConfig = OrbLossConfig(), margin: int | None = None) -> np.ndarray:
    """Per-cell probability of a FAST feature, in (0, 1).

    Max over the 16 ring kernels of the squared response (or the square of the
    max when ``cfg.square_first`` is False), minus ``t``, scaled by ``gain``,
    through a sigmoid.
    """
    image = _single_channel(image)
    return _detect_forward(image, cfg, 3 if margin is None else margin)[0]


# -- orientation -------------------------------------------------------------


def orientation_maps(image, cfg: OrbLossConfig = OrbLossConfig(), margin: int | None = None) -> np.ndarray:
    """Patch moments (m10, m01, m00) over a radius-14 disc at every grid cell."""
    image = _single_channel(image)
    bank = moment_kernels()
    crop, _ = _crop_for(image, bank, MOMENT_RADIUS if margin is None else margin)
    return conv2d(crop, bank, stride=cfg.stride)


def angle_map(ori: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle atan2(m01, m10) in (-pi, pi]; 0 where both moments vanish."""
    ori = as_tensor(ori, channels=3)
    m10, m01 = ori[0], ori[1]
    theta = np.arctan2(m01, m10)
    theta[theta == -np.pi] = np.pi
    theta[(m10 == 0) & (m01 == 0)] = 0.0
    return theta[None]


# -- descriptor --------------------------------------------------------------


def _descriptor_forward(image, cfg: OrbLossConfig, margin: int):
    bank = brief_kernels(cfg.brief_seed, cfg.patch_size)
    smoothed = smooth(image)
    crop, off = _crop_for(smoothed, bank, margin)
    # kernel gives p(x) - p(y); bit 1 means p(x) < p(y)
    diff = conv2d(crop, bank, stride=cfg.stride)
    desc = pointwise(-cfg.gain_desc * diff, "sigmoid")
    return desc, (crop.shape, off)


def _descriptor_backward(upstream, desc, cache, cfg: OrbLossConfig, image_shape):
    crop_shape, off = cache
    ddiff = -cfg.gain_desc * upstream * desc * (1.0 - desc)
    bank = brief_kernels(cfg.brief_seed, cfg.patch_size)
    g_crop = conv2d_grad_input(ddiff, bank, cfg.stride, 0, crop_shape)
    g_smooth = np.zeros(image_shape)
    _, h, w = image_shape
    g_smooth[:, off : h - off, off : w - off] = g_crop
    return smooth_grad(g_smooth)


def descriptor_maps(image, cfg: OrbLossConfig = OrbLossConfig(), margin: int | None = None) -> np.ndarray:
    """256-channel per-bit probabilities; channel i > 0.5 encodes p(x_i) < p(y_i)."""
    image = _single_channel(image)
    return _descriptor_forward(image, cfg, cfg.patch_size // 2 if margin is None else margin)[0]


@dataclass(frozen=True)
class FeatureMaps:
    det: np.ndarray
    ori: np.ndarray
    desc: np.ndarray
    grid_stride: int
    margin: int


def feature_maps(image, cfg: OrbLossConfig = OrbLossConfig()) -> FeatureMaps:
    image = _single_channel(image)
    m = cfg.margin
    return FeatureMaps(
        det=detect_map(image, cfg, m),
        ori=orientation_maps(image, cfg, m),
        desc=descriptor_maps(image, cfg, m),
        grid_stride=cfg.stride,
        margin=m,
    )


# -- losses ------------------------------------------------------------------


def det_weights(det_y: np.ndarray, det_yhat: np.ndarray) -> tuple[np.ndarray, bool]:
    """Disagreement weights for the detection loss.

    Missed features (target > 0.5, prediction <= 0.5) get N / N_f, spurious ones
    get N / (N - N_f), agreeing cells get 0.  A branch whose denominator is zero
    falls back to 1 and the returned flag is set.
    """
    n = det_y.size
    feat = det_y > 0.5
    n_f = int(feat.sum())
    pred = det_yhat > 0.5
    degenerate = n_f == 0 or n_f == n
    w_miss = n / n_f if n_f else 1.0
    w_spur = n / (n - n_f) if n_f < n else 1.0
    w = np.zeros(det_y.shape)
    w[feat & ~pred] = w_miss
    w[~feat & pred] = w_spur
    return w, degenerate


def det_loss(det_y: np.ndarray, det_yhat: np.ndarray) -> tuple[float, np.ndarray]:
    det_y = np.asarray(det_y, dtype=np.float64)
    det_yhat = np.asarray(det_yhat, dtype=np.float64)
    if det_y.shape != det_yhat.shape:
        raise ShapeError(f"detection maps differ in shape: {det_y.shape} vs {det_yhat.shape}")
    w, _ = det_weights(det_y, det_yhat)
    return weighted_bce(det_y, det_yhat, w)


def ori_weights(det_y: np.ndarray, det_yhat: np.ndarray) -> np.ndarray:
    return ((np.asarray(det_y) > 0.5) | (np.asarray(det_yhat) > 0.5)).astype(np.float64)


def ori_loss(ori_y, ori_yhat, det_y, det_yhat) -> tuple[float, np.ndarray]:
    """Mean absolute moment difference over cells where either image has a feature."""
    ori_y = np.asarray(ori_y, dtype=np.float64)
    ori_yhat = np.asarray(ori_yhat, dtype=np.float64)
    if ori_y.shape != ori_yhat.shape:
        raise ShapeError(f"moment maps differ in shape: {ori_y.shape} vs {ori_yhat.shape}")
    w = ori_weights(det_y, det_yhat)
    if w.shape[-2:] != ori_y.shape[-2:]:
        raise ShapeError("detection and moment grids differ", "height")
    diff = ori_y - ori_yhat
    loss = float(np.mean(w * np.abs(diff)))
    grad = -w * np.sign(diff) / diff.size
    return loss, grad


def desc_weights(desc_y: np.ndarray, desc_yhat: np.ndarray) -> np.ndarray:
    return ((np.asarray(desc_y) > 0.5) != (np.asarray(desc_yhat) > 0.5)).astype(np.float64)


def desc_loss(desc_y, desc_yhat) -> tuple[float, np.ndarray]:
    desc_y = np.asarray(desc_y, dtype=np.float64)
    desc_yhat = np.asarray(desc_yhat, dtype=np.float64)
    if desc_y.shape != desc_yhat.shape:
        raise ShapeError(f"descriptor maps differ in shape: {desc_y.shape} vs {desc_yhat.shape}")
    return weighted_bce(desc_y, desc_yhat, desc_weights(desc_y, desc_yhat))


def orb_loss(image_y, image_yhat, cfg: OrbLossConfig = OrbLossConfig()) -> LossReport:
    """Weighted sum of detection, orientation and descriptor losses.

    ``report.grad`` is the gradient of ``report.orb`` with respect to
    ``image_yhat``.
    """
    y = _single_channel(image_y)
    yhat = _single_channel(image_yhat)
    if y.shape != yhat.shape:
        raise ShapeError(f"image shapes differ: {y.shape} vs {yhat.shape}")
    m = cfg.margin
    shape = yhat.shape

    det_y, _ = _detect_forward(y, cfg, m)
    det_h, det_cache = _detect_forward(yhat, cfg, m)
    bank = moment_kernels()
    crop_y, _ = _crop_for(y, bank, m)
    crop_h, ori_off = _crop_for(yhat, bank, m)
    ori_y = conv2d(crop_y, bank, stride=cfg.stride)
    ori_h = conv2d(crop_h, bank, stride=cfg.stride)
    desc_y, _ = _descriptor_forward(y, cfg, m)
    desc_h, desc_cache = _descriptor_forward(yhat, cfg, m)

    l_det, g_det = det_loss(det_y, det_h)
    l_ori, g_ori = ori_loss(ori_y, ori_h, det_y, det_h)
    l_desc, g_desc = desc_loss(desc_y, desc_h)

    grad = np.zeros(shape)
    if cfg.lambda_det:
        grad += cfg.lambda_det * _detect_backward(g_det, det_h, det_cache, cfg, shape)
    if cfg.lambda_ori:
        g_crop = conv2d_grad_input(cfg.lambda_ori * g_ori, bank, cfg.stride, 0, crop_h.shape)
        _, h, w = shape
        grad[:, ori_off : h - ori_off, ori_off : w - ori_off] += g_crop
    if cfg.lambda_desc:
        grad += cfg.lambda_desc * _descriptor_backward(g_desc, desc_h, desc_cache, cfg, shape)

    total = cfg.lambda_det * l_det + cfg.lambda_ori * l_ori + cfg.lambda_desc * l_desc
    return LossReport(det=l_det, ori=l_ori, desc=l_desc, orb=total, total=total, grad=grad)


def detection_loss(image_y, image_yhat, cfg: OrbLossConfig = OrbLossConfig(), margin: int | None = None):
    """Detection loss between two images and its gradient w.r.t. ``image_yhat``."""
    y = _single_channel(image_y)
    yhat = _single_channel(image_yhat)
    if y.shape != yhat.shape:
        raise ShapeError(f"image shapes differ: {y.shape} vs {yhat.shape}")
    m = 3 if margin is None else margin
    det_y, _ = _detect_forward(y, cfg, m)
    det_h, cache = _detect_forward(yhat, cfg, m)
    loss, g = det_loss(det_y, det_h)
    return loss, _detect_backward(g, det_h, cache, cfg, yhat.shape)
