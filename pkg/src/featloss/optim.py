"""Desk-scale demonstrations: Adam, pixel-space inpainting and the SRM ablation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .losses import DEFAULT_LAMBDA_L1, LossReport, weighted_bce, weighted_l1
from .masks import BinaryMask, balance_weights
from .orb import OrbLossConfig, orb_loss
from .srm import extract_noise
from .synthetic import tamper_pair
from .tensor import as_tensor

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update.  Returns new parameters; ``state`` is advanced in place."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise ValueError(f"optimizer state shape {state.m.shape} != parameter shape {params.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- inpainting by direct pixel optimisation ---------------------------------


@dataclass
class InpaintResult:
    image: np.ndarray
    trace: list[LossReport]
    flags: tuple[str, ...] = ()


def inpaint_objective(
    yhat: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray,
    lambda1: float,
    orb_cfg: OrbLossConfig,
    use_orb: bool = True,
) -> LossReport:
    l1, g_l1 = weighted_l1(target, yhat, weights)
    if use_orb:
        rep = orb_loss(target, yhat, orb_cfg)
    else:
        rep = LossReport(grad=np.zeros_like(yhat))
    rep.l1 = l1
    rep.total = lambda1 * l1 + rep.orb
    rep.grad = lambda1 * g_l1 + rep.grad
    return rep


def inpaint_optimize(
    x,
    mask: BinaryMask | np.ndarray,
    target,
    iterations: int = 500,
    lr: float = 0.05,
    lambda1: float = DEFAULT_LAMBDA_L1,
    orb_cfg: OrbLossConfig = OrbLossConfig(),
    orb_warmup: int = 0,
    schedule: str = "exp",
) -> InpaintResult:
    """Fill the masked pixels of ``x`` by Adam on ``lambda1 * weighted L1 + ORB loss``.

    Unmasked pixels are never written.  Masked pixels are projected onto [0, 1]
    after every step.  The ORB term is switched on after ``orb_warmup``
    iterations.

    The step size starts at ``lr`` and follows ``schedule``: ``"exp"`` decays
    it geometrically to ``lr / 100`` at the last iteration, ``"cosine"`` to
    zero, ``"constant"`` keeps it.  ``trace[i]`` holds the objective before
    update ``i``; the last entry is the objective of the returned image.
    """
    x = as_tensor(x, channels=1)
    target = as_tensor(target, channels=1)
    if x.shape != target.shape:
        raise ValueError(f"input {x.shape} and target {target.shape} differ")
    mask = mask if isinstance(mask, BinaryMask) else BinaryMask(mask)
    if mask.shape != x.shape[1:]:
        raise ValueError(f"mask {mask.shape} does not match image {x.shape[1:]}")
    if schedule not in ("cosine", "exp", "constant"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if mask.dynamic_count == 0:
        return InpaintResult(x.copy(), [], ("empty_mask",))

    sel = mask.values
    w = balance_weights(mask).weights
    image = x.copy()
    state = AdamState(lr=lr)
    trace = []
    for it in range(iterations + 1):
        rep = inpaint_objective(image, target, w, lambda1, orb_cfg, use_orb=it >= orb_warmup)
        if not np.isfinite(rep.total):
            raise FloatingPointError(f"non-finite objective at iteration {it}")
        trace.append(rep)
        if it == iterations:
            break
        if schedule == "cosine":
            state.lr = 0.5 * lr * (1.0 + np.cos(np.pi * it / iterations))
        elif schedule == "exp":
            state.lr = lr * 0.01 ** (it / iterations)
        pix = adam_step(image[0][sel], rep.grad[0][sel], state)
        image[0][sel] = np.clip(pix, 0.0, 1.0)
        rep.grad = None
    trace[-1].grad = None
    return InpaintResult(image, trace)


# -- tiny patch discriminator ------------------------------------------------


def leaky_relu(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def _conv_forward(x, w, b, stride=2, pad=1):
    k = w.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,ocij->nohw", win, w, optimize=True) + b[None, :, None, None]
    return out, win


def _conv_backward(dout, x_shape, win, w, stride=2, pad=1):
    k = w.shape[-1]
    dw = np.einsum("nohw,nchwij->ocij", dout, win, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.einsum("nohw,ocij->nchwij", dout, w, optimize=True)
    n, c, h, wd = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    ho, wo = dout.shape[2:]
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[..., i, j]
    return dxp[:, :, pad : pad + h, pad : pad + wd], dw, db


@dataclass
class TinyDiscriminator:
    """Two 3x3 stride-2 convolutions (16 then 1 channels), leaky ReLU between, sigmoid out."""

    in_channels: int
    seed: int = 0
    hidden: int = 16
    lr: float = 2e-3
    params: dict = field(init=False)
    states: dict = field(init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        fan1 = self.in_channels * 9
        fan2 = self.hidden * 9
        self.params = {
            "w1": rng.normal(0.0, np.sqrt(2.0 / fan1), (self.hidden, self.in_channels, 3, 3)),
            "b1": np.zeros(self.hidden),
            "w2": rng.normal(0.0, np.sqrt(1.0 / fan2), (1, self.hidden, 3, 3)),
            "b2": np.zeros(1),
        }
        self.states = {k: AdamState(lr=self.lr) for k in self.params}

    def forward(self, x):
        p = self.params
        z1, win1 = _conv_forward(x, p["w1"], p["b1"])
        a1 = leaky_relu(z1)
        z2, win2 = _conv_forward(a1, p["w2"], p["b2"])
        out = 1.0 / (1.0 + np.exp(-np.clip(z2, -500, 500)))
        return out, (x.shape, win1, z1, a1.shape, win2)

    def predict(self, x):
        return self.forward(x)[0][:, 0]

    def train_step(self, x, labels, weights) -> float:
        """One Adam step on weighted patch BCE; returns the loss before the step."""
        out, (x_shape, win1, z1, a1_shape, win2) = self.forward(x)
        loss, d_out = weighted_bce(labels[:, None], out, weights[:, None])
        dz2 = d_out * out * (1.0 - out)
        da1, dw2, db2 = _conv_backward(dz2, a1_shape, win2, self.params["w2"])
        dz1 = da1 * np.where(z1 > 0, 1.0, 0.2)
        _, dw1, db1 = _conv_backward(dz1, x_shape, win1, self.params["w1"])
        grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
        for k, g in grads.items():
            self.params[k] = adam_step(self.params[k], g, self.states[k])
        return loss


def patch_labels(region: np.ndarray, grid: int) -> np.ndarray:
    """Per-patch fake label: majority of the patch's pixels were tampered."""
    size = region.shape[0]
    block = size // grid
    frac = region.reshape(grid, block, grid, block).mean(axis=(1, 3))
    return (frac > 0.5).astype(np.float64)


def _ablation_data(rng, count, size):
    images, labels = [], []
    for _ in range(count):
        real, fake, region = tamper_pair(rng, size)
        images += [real, fake]
        labels += [np.zeros((size, size), bool), region]
    return np.stack(images), np.stack(labels)


def _with_noise(images):
    return np.stack([np.concatenate([im[None], extract_noise(im[None])]) for im in images])


def balanced_accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    hit = (pred > 0.5) == (labels > 0.5)
    pos = labels > 0.5
    parts = [hit[pos].mean() if pos.any() else None, hit[~pos].mean() if (~pos).any() else None]
    parts = [p for p in parts if p is not None]
    return float(np.mean(parts))


@dataclass
class AblationResult:
    acc_with_noise: float
    acc_without_noise: float


def srm_ablation(
    seed: int = 0,
    sample_count: int = 48,
    epochs: int = 60,
    size: int = 64,
    batch_size: int = 16,
) -> AblationResult:
    """Train the tiny discriminator with and without SRM noise channels on identical data.

    Real patches are labelled 0 and tampered patches 1; the score is the
    class-balanced patch accuracy on a held-out set a third the size of the
    training set.
    """
    rng = np.random.default_rng(seed)
    train_x, train_r = _ablation_data(rng, sample_count, size)
    test_x, test_r = _ablation_data(rng, max(1, sample_count // 3), size)
    grid = size // 4
    train_y = np.stack([patch_labels(r, grid) for r in train_r])
    test_y = np.stack([patch_labels(r, grid) for r in test_r])
    pos_frac = train_y.mean()
    cls_w = np.where(train_y > 0.5, 0.5 / pos_frac, 0.5 / (1.0 - pos_frac))

    inputs = {
        "with": (_with_noise(train_x), _with_noise(test_x)),
        "without": (train_x[:, None], test_x[:, None]),
    }
    acc = {}
    for name, (xtr, xte) in inputs.items():
        disc = TinyDiscriminator(xtr.shape[1], seed=seed)
        order_rng = np.random.default_rng(seed + 1)
        for epoch in range(epochs):
            order = order_rng.permutation(len(xtr))
            for start in range(0, len(order), batch_size):
                idx = order[start : start + batch_size]
                disc.train_step(xtr[idx], train_y[idx], cls_w[idx])
        acc[name] = balanced_accuracy(disc.predict(xte), test_y)
        log.info("srm ablation seed=%d %s noise: balanced accuracy %.4f", seed, name, acc[name])
    return AblationResult(acc["with"], acc["without"])
