"""Evaluation metrics: inpainting quality, shadows, place recognition and ATE."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .masks import BinaryMask
from .orb import OrbLossConfig, det_loss, detect_map, grid_centers
from .tensor import as_tensor, check_same_shape

PSNR_CAP = 99.0
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 8
DEFAULT_SHADOW_THRESH = 10.0 / 255.0
DEFAULT_PR_RADIUS = 10.0
DEFAULT_PR_EXCLUSION = 50
ASSOC_MAX_DT = 0.02


def _mask_array(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = mask.values if isinstance(mask, BinaryMask) else np.asarray(mask)
    if m.ndim == 3:
        m = m[0]
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} != image shape {shape}")
    return m.astype(bool)


@dataclass
class RegionScores:
    """A metric over the full image and the masked (in) / unmasked (out) regions.

    A region with no pixels (or grid cells) reports ``None`` and is listed in
    ``empty``.
    """

    full: float | None
    inside: float | None
    outside: float | None
    n_full: int = 0
    n_in: int = 0
    n_out: int = 0
    empty: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"full": self.full, "in": self.inside, "out": self.outside}


def _regions(values: np.ndarray, region: np.ndarray, reduce) -> RegionScores:
    parts = {}
    counts = {}
    for name, sel in (("full", np.ones_like(region)), ("in", region), ("out", ~region)):
        counts[name] = int(sel.sum())
        parts[name] = reduce(values, sel) if counts[name] else None
    empty = tuple(k for k, v in parts.items() if v is None)
    return RegionScores(
        parts["full"], parts["in"], parts["out"], counts["full"], counts["in"], counts["out"], empty
    )


def l1_percent(y, yhat, mask=None) -> RegionScores:
    """100 x mean absolute error over all, masked and unmasked pixels."""
    y = as_tensor(y, channels=1)[0]
    yhat = as_tensor(yhat, channels=1)[0]
    check_same_shape(y[None], yhat[None])
    err = np.abs(y - yhat)
    return _regions(err, _mask_array(mask, y.shape), lambda v, s: 100.0 * float(v[s].mean()))


def psnr(y, yhat, region=None) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped at 99 dB."""
    y = as_tensor(y, channels=1)[0]
    yhat = as_tensor(yhat, channels=1)[0]
    check_same_shape(y[None], yhat[None])
    sel = _mask_array(region, y.shape)
    if not sel.any():
        raise ValueError("empty region")
    mse = float(np.mean((y[sel] - yhat[sel]) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim_map(y, yhat, win: int = SSIM_WINDOW) -> np.ndarray:
    """Local SSIM for every fully contained ``win x win`` uniform window."""
    y = as_tensor(y, channels=1)[0]
    yhat = as_tensor(yhat, channels=1)[0]
    check_same_shape(y[None], yhat[None])

    def local_mean(a):
        return sliding_window_view(a, (win, win)).mean(axis=(-1, -2))

    mx, my = local_mean(y), local_mean(yhat)
    vx = local_mean(y * y) - mx * mx
    vy = local_mean(yhat * yhat) - my * my
    cxy = local_mean(y * yhat) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return num / den


def ssim(y, yhat, region=None, win: int = SSIM_WINDOW) -> float | None:
    """Mean local SSIM over windows whose centre pixel lies in ``region``.

    The centre of a window with top-left ``(i, j)`` is ``(i + (win-1)//2, j + (win-1)//2)``.
    Returns ``None`` when no window qualifies.
    """
    smap = ssim_map(y, yhat, win)
    shape = as_tensor(y)[0].shape
    sel = _mask_array(region, shape)
    c = (win - 1) // 2
    centres = sel[c : c + smap.shape[0], c : c + smap.shape[1]]
    if not centres.any():
        return None
    return float(smap[centres].mean())


def ssim_regions(y, yhat, mask=None, win: int = SSIM_WINDOW) -> RegionScores:
    shape = as_tensor(y)[0].shape
    m = _mask_array(mask, shape)
    vals = {
        "full": ssim(y, yhat, None, win),
        "in": ssim(y, yhat, m, win),
        "out": ssim(y, yhat, ~m, win),
    }
    empty = tuple(k for k, v in vals.items() if v is None)
    return RegionScores(vals["full"], vals["in"], vals["out"], int(m.size), int(m.sum()), int((~m).sum()), empty)


def psnr_regions(y, yhat, mask=None) -> RegionScores:
    shape = as_tensor(y)[0].shape
    m = _mask_array(mask, shape)
    vals = {}
    for name, sel in (("full", np.ones_like(m)), ("in", m), ("out", ~m)):
        vals[name] = psnr(y, yhat, sel) if sel.any() else None
    empty = tuple(k for k, v in vals.items() if v is None)
    return RegionScores(vals["full"], vals["in"], vals["out"], int(m.size), int(m.sum()), int((~m).sum()), empty)


def feat_metric(y, yhat, mask=None, cfg: OrbLossConfig = OrbLossConfig()) -> RegionScores:
    """Detection-loss disagreement between ``y`` and ``yhat`` per region.

    Each region uses only the grid cells whose centre pixel it contains; the
    feature-count normalisation is computed within the region.
    """
    y = as_tensor(y, channels=1)
    yhat = as_tensor(yhat, channels=1)
    check_same_shape(y, yhat)
    margin = 3
    dy = detect_map(y, cfg, margin)[0]
    dh = detect_map(yhat, cfg, margin)[0]
    m = _mask_array(mask, y.shape[1:])
    rows = grid_centers(y.shape[1], margin, cfg.stride)
    cols = grid_centers(y.shape[2], margin, cfg.stride)
    cell_region = m[np.ix_(rows, cols)]
    return _regions(
        np.stack([dy, dh]), cell_region, lambda v, s: det_loss(v[0][s], v[1][s])[0]
    )


def shadow_mask(dyn, stat, obj_mask, thresh: float = DEFAULT_SHADOW_THRESH) -> BinaryMask:
    """Pixels whose dynamic/static difference exceeds ``thresh``, minus the object mask."""
    dyn = as_tensor(dyn, channels=1)[0]
    stat = as_tensor(stat, channels=1)[0]
    check_same_shape(dyn[None], stat[None])
    obj = _mask_array(obj_mask, dyn.shape)
    return BinaryMask((np.abs(dyn - stat) > thresh) & ~obj)


@dataclass
class ShadowScores:
    iou: float
    shadow_acc: float | None
    non_shadow_acc: float | None
    total_acc: float

    def as_tuple(self):
        return (self.iou, self.shadow_acc, self.non_shadow_acc, self.total_acc)

    def as_dict(self) -> dict:
        return {
            "iou": self.iou,
            "shadow_acc": self.shadow_acc,
            "non_shadow_acc": self.non_shadow_acc,
            "total_acc": self.total_acc,
        }


def shadow_scores(pred, gt) -> ShadowScores:
    """IoU plus shadow / non-shadow / total pixel accuracy of ``pred`` against ``gt``.

    An empty union gives IoU 1; accuracies over an empty class are ``None``.
    """
    g = gt.values if isinstance(gt, BinaryMask) else np.asarray(gt).astype(bool)
    p = _mask_array(pred, g.shape)
    inter = int((p & g).sum())
    union = int((p | g).sum())
    iou = inter / union if union else 1.0
    n_shadow = int(g.sum())
    n_non = int((~g).sum())
    shadow_acc = inter / n_shadow if n_shadow else None
    non_acc = int((~p & ~g).sum()) / n_non if n_non else None
    total = float((p == g).mean())
    return ShadowScores(iou, shadow_acc, non_acc, total)


@dataclass
class MetricReport:
    l1: RegionScores
    psnr: RegionScores
    ssim: RegionScores
    feat: RegionScores
    shadow: ShadowScores | None = None

    def as_dict(self) -> dict:
        d = {
            "l1_percent": self.l1.as_dict(),
            "psnr": self.psnr.as_dict(),
            "ssim": self.ssim.as_dict(),
            "feat": self.feat.as_dict(),
            "pixels": {"full": self.l1.n_full, "in": self.l1.n_in, "out": self.l1.n_out},
        }
        if self.shadow is not None:
            d["shadow"] = self.shadow.as_dict()
        return d


def metric_report(
    real,
    fake,
    mask=None,
    dyn=None,
    shadow_thresh: float = DEFAULT_SHADOW_THRESH,
    cfg: OrbLossConfig = OrbLossConfig(),
) -> MetricReport:
    """All image metrics of ``fake`` against ``real``.

    When the dynamic input ``dyn`` and a mask are given, the shadow masks of
    ``(dyn, real)`` and ``(dyn, fake)`` are scored against each other.
    """
    shadow = None
    if dyn is not None and mask is not None:
        gt = shadow_mask(dyn, real, mask, shadow_thresh)
        pred = shadow_mask(dyn, fake, mask, shadow_thresh)
        shadow = shadow_scores(pred, gt)
    return MetricReport(
        l1=l1_percent(real, fake, mask),
        psnr=psnr_regions(real, fake, mask),
        ssim=ssim_regions(real, fake, mask),
        feat=feat_metric(real, fake, mask, cfg),
        shadow=shadow,
    )


# -- place recognition -------------------------------------------------------


@dataclass
class PRCurve:
    """Precision/recall per threshold; ``recall`` is NaN when there are no true pairs."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    n_positive: int
    flags: tuple[str, ...] = field(default=())


def candidate_pairs(n_frames: int, exclusion: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``i < j`` with ``j - i > exclusion``."""
    i, j = np.triu_indices(n_frames, k=exclusion + 1)
    return i, j


def pr_curve(
    scores,
    positions,
    radius: float = DEFAULT_PR_RADIUS,
    thresholds=None,
    exclusion: int = DEFAULT_PR_EXCLUSION,
) -> PRCurve:
    """Sweep a match-score threshold; a pair is predicted a match when ``score >= threshold``.

    Ground truth: frames closer than ``radius`` metres.  Pairs closer in time
    than ``exclusion`` frames (and the diagonal) are ignored.  Precision with no
    predicted matches is reported as 1.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positions, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"score matrix must be square, got {s.shape}")
    if pos.shape != (s.shape[0], 3):
        raise ValueError(f"positions must be ({s.shape[0]}, 3), got {pos.shape}")
    i, j = candidate_pairs(len(s), exclusion)
    pair_scores = s[i, j]
    truth = np.linalg.norm(pos[i] - pos[j], axis=1) < radius
    if thresholds is None:
        thresholds = np.unique(pair_scores)[::-1]
    thr = np.asarray(thresholds, dtype=np.float64)
    n_pos = int(truth.sum())
    flags = []
    if n_pos == 0:
        flags.append("no_positive_pairs")

    pred = pair_scores[None, :] >= thr[:, None]
    tp = (pred & truth).sum(axis=1)
    fp = (pred & ~truth).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 1.0)
        recall = tp / n_pos if n_pos else np.full(len(thr), np.nan)
    return PRCurve(thr, precision.astype(float), np.asarray(recall, dtype=float), n_pos, tuple(flags))


# -- trajectories ------------------------------------------------------------


@dataclass
class Trajectory:
    stamps: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray | None = None

    def __post_init__(self):
        self.stamps = np.asarray(self.stamps, dtype=np.float64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.stamps) != len(self.positions):
            raise ValueError("stamps and positions differ in length")
        if np.any(np.diff(self.stamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.stamps)


def associate(gt: Trajectory, est: Trajectory, max_dt: float = ASSOC_MAX_DT):
    """Greedy one-to-one nearest-timestamp matching within ``max_dt`` seconds."""
    dt = np.abs(gt.stamps[:, None] - est.stamps[None, :])
    cand = np.argwhere(dt <= max_dt)
    order = np.argsort(dt[cand[:, 0], cand[:, 1]], kind="stable")
    used_g, used_e, pairs = set(), set(), []
    for a, b in cand[order]:
        if a in used_g or b in used_e:
            continue
        used_g.add(a)
        used_e.add(b)
        pairs.append((a, b))
    pairs.sort()
    if not pairs:
        return np.empty(0, int), np.empty(0, int)
    g_idx, e_idx = map(np.array, zip(*pairs))
    return g_idx, e_idx


def umeyama_alignment(src: np.ndarray, dst: np.ndarray, with_scale: bool = False):
    """Least-squares ``(s, R, t)`` minimising ``sum |dst - (s R src + t)|^2``.

    ``src`` and ``dst`` are ``(N, 3)``.
    """
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    u, d, vt = np.linalg.svd(cov)
    sgn = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sgn[2, 2] = -1.0
    rot = u @ sgn @ vt
    scale = 1.0
    if with_scale:
        var_s = (xs**2).sum() / len(src)
        scale = float(np.trace(np.diag(d) @ sgn) / var_s)
    trans = mu_d - scale * rot @ mu_s
    return scale, rot, trans


def ate_rmse(gt: Trajectory, est: Trajectory, align: str = "rigid", max_dt: float = ASSOC_MAX_DT) -> float:
    """Absolute trajectory RMSE in metres after rigid or similarity alignment of ``est`` onto ``gt``."""
    if align not in ("rigid", "similarity"):
        raise ValueError(f"unknown alignment {align!r}")
    g_idx, e_idx = associate(gt, est, max_dt)
    if len(g_idx) < 3:
        raise ValueError(f"need at least 3 associated poses, found {len(g_idx)}")
    p_gt = gt.positions[g_idx]
    p_est = est.positions[e_idx]
    if np.array_equal(p_gt, p_est):
        # identity alignment is optimal; skip the SVD round-off
        return 0.0
    s, r, t = umeyama_alignment(p_est, p_gt, with_scale=align == "similarity")
    resid = p_gt - (s * p_est @ r.T + t)
    return float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
