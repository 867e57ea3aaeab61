"""Command-line front end.

Exit status: 0 on success, 1 on validation or I/O failure, 2 when a
non-finite value is produced.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .masks import ClassScoreMap, collapse_dynamic
from .metrics import (
    DEFAULT_PR_EXCLUSION,
    DEFAULT_PR_RADIUS,
    DEFAULT_SHADOW_THRESH,
    ate_rmse,
    metric_report,
    pr_curve,
    shadow_mask,
    shadow_scores,
)
from .orb import OrbLossConfig, angle_map, feature_maps, orb_loss
from .srm import extract_noise
from .tensor import grad_check, load_mct, save_mct

log = logging.getLogger("featloss")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
GRAD_CHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    args: dict = field(default_factory=dict)
    orb: OrbLossConfig = field(default_factory=OrbLossConfig)
    seed: int = 0


# flag name -> kind; "in" paths must exist, "out" paths need an existing parent
_PATH_FLAGS = {
    "input": "in", "mask": "in", "target": "in", "fake": "in", "real": "in", "dyn": "in",
    "scores": "in", "positions": "in", "gt": "in", "est": "in",
    "out": "out", "out_png": "out", "out_mct": "out", "out_soft": "out", "trace": "out",
    "out_dir": "dir",
}


def _add_orb_flags(p):
    d = OrbLossConfig()
    g = p.add_argument_group("ORB loss configuration")
    g.add_argument("--t", type=float, default=d.t, help="threshold on squared FAST response")
    g.add_argument("--gain", type=float, default=d.gain, help="detection sigmoid gain")
    g.add_argument("--gain-desc", type=float, default=d.gain_desc, help="descriptor sigmoid gain")
    g.add_argument("--lambda-det", type=float, default=d.lambda_det)
    g.add_argument("--lambda-ori", type=float, default=d.lambda_ori)
    g.add_argument("--lambda-desc", type=float, default=d.lambda_desc)
    g.add_argument("--stride", type=int, default=d.stride)
    g.add_argument("--brief-seed", type=int, default=d.brief_seed)
    g.add_argument("--max-then-square", action="store_true",
                   help="square the max response instead of taking the max squared response")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="featloss", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("noise", help="SRM noise residuals of an image")
    p.add_argument("--input", required=True)
    p.add_argument("--amplify", type=float, default=10.0)
    p.add_argument("--out-png", help="three side-by-side channels, +0.5 offset, 8-bit")
    p.add_argument("--out-mct", help="raw 3-channel noise tensor")

    p = sub.add_parser("featmaps", help="detection, moment, angle and descriptor maps")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    _add_orb_flags(p)

    p = sub.add_parser("mask-collapse", help="dynamic mask from per-class scores")
    p.add_argument("--scores", required=True, help=".mct with one channel per class")
    p.add_argument("--dynamic", required=True, help="comma-separated dynamic class ids")
    p.add_argument("--out", required=True, help="mask PNG/PGM")
    p.add_argument("--out-soft", help="soft map .mct")

    p = sub.add_parser("orb-loss", help="ORB feature loss between two images")
    p.add_argument("--fake", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--out", help="JSON report (stdout if omitted)")
    _add_orb_flags(p)

    p = sub.add_parser("metrics", help="L1%%, PSNR, SSIM and Feat with in/out splits")
    p.add_argument("--fake", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--mask")
    p.add_argument("--dyn", help="dynamic input image; enables shadow scores")
    p.add_argument("--shadow-thresh", type=float, default=DEFAULT_SHADOW_THRESH)
    p.add_argument("--out", help="JSON report (stdout if omitted)")
    _add_orb_flags(p)

    p = sub.add_parser("shadow-metrics", help="shadow IoU and accuracies")
    p.add_argument("--dyn", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--thresh", type=float, default=DEFAULT_SHADOW_THRESH)
    p.add_argument("--out")

    p = sub.add_parser("grad-check", help="finite-difference check of the ORB loss gradient")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--samples", type=int, default=128, help="coordinates probed")
    p.add_argument("--eps", type=float, default=1e-5)
    _add_orb_flags(p)

    p = sub.add_parser("inpaint-opt", help="fill a masked hole by optimising the losses")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lambda1", type=float, default=100.0)
    p.add_argument("--orb-warmup", type=int, default=0,
                   help="iterations run on the L1 term alone before the ORB loss is added")
    p.add_argument("--out", required=True, help="result PNG/PGM")
    p.add_argument("--trace", help="per-iteration loss CSV")
    _add_orb_flags(p)

    p = sub.add_parser("srm-ablation", help="tiny discriminator with vs without SRM channels")
    p.add_argument("--samples", type=int, default=48)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--out", help="CSV (stdout if omitted)")

    p = sub.add_parser("pr-curve", help="place-recognition precision/recall sweep")
    p.add_argument("--scores", required=True, help="square score matrix CSV")
    p.add_argument("--positions", required=True, help="x,y,z per frame CSV")
    p.add_argument("--radius", type=float, default=DEFAULT_PR_RADIUS)
    p.add_argument("--exclusion", type=int, default=DEFAULT_PR_EXCLUSION)
    p.add_argument("--out", help="CSV (stdout if omitted)")

    p = sub.add_parser("ate", help="absolute trajectory RMSE")
    p.add_argument("--gt", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--align", choices=("rigid", "similarity"), default="rigid")
    return parser


def parse_args(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    args = vars(ns).copy()
    command = args.pop("command")
    seed = args.pop("seed")
    args.pop("verbose")
    for name, kind in _PATH_FLAGS.items():
        value = args.get(name)
        if value is None:
            continue
        flag = "--" + name.replace("_", "-")
        path = Path(value)
        if kind == "in" and not path.is_file():
            raise UsageError(f"{flag}: file not found: {value}")
        if kind == "out" and not path.parent.exists():
            raise UsageError(f"{flag}: directory does not exist: {path.parent}")
        if kind == "dir" and path.exists() and not path.is_dir():
            raise UsageError(f"{flag}: not a directory: {value}")
    orb = OrbLossConfig()
    if "gain" in args:
        orb = OrbLossConfig(
            t=args.pop("t"),
            gain=args.pop("gain"),
            gain_desc=args.pop("gain_desc"),
            lambda_det=args.pop("lambda_det"),
            lambda_ori=args.pop("lambda_ori"),
            lambda_desc=args.pop("lambda_desc"),
            stride=args.pop("stride"),
            brief_seed=args.pop("brief_seed"),
            square_first=not args.pop("max_then_square"),
        )
    return RunConfig(command, args, orb, seed)


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _emit_csv(header, rows, out: str | None) -> None:
    if out:
        io.write_csv(out, header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r))


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a, dtype=np.float64))):
            raise FloatingPointError("non-finite value in result")


def _cmd_noise(cfg: RunConfig):
    a = cfg.args
    img = io.read_image(a["input"])
    noise = extract_noise(img, a["amplify"])
    _check_finite(noise)
    if a["out_mct"]:
        save_mct(a["out_mct"], noise)
    if a["out_png"]:
        io.write_image(a["out_png"], np.concatenate(list(noise + 0.5), axis=1))


def _cmd_featmaps(cfg: RunConfig):
    a = cfg.args
    maps = feature_maps(io.read_image(a["input"]), cfg.orb)
    _check_finite(maps.det, maps.ori, maps.desc)
    out = Path(a["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_mct(out / "det.mct", maps.det)
    save_mct(out / "ori.mct", maps.ori)
    save_mct(out / "angle.mct", angle_map(maps.ori))
    save_mct(out / "desc.mct", maps.desc)


def _cmd_mask_collapse(cfg: RunConfig):
    a = cfg.args
    scores = load_mct(a["scores"])
    try:
        ids = {int(s) for s in a["dynamic"].split(",") if s.strip()}
    except ValueError as exc:
        raise UsageError(f"--dynamic: expected comma-separated integers ({exc})") from None
    if any(i < 0 or i >= scores.shape[0] for i in ids):
        raise UsageError(f"--dynamic: class ids must lie in [0, {scores.shape[0]})")
    flags = [i in ids for i in range(scores.shape[0])]
    soft, mask = collapse_dynamic(ClassScoreMap(scores, flags))
    io.write_mask(a["out"], mask)
    if a["out_soft"]:
        save_mct(a["out_soft"], soft)


def _cmd_orb_loss(cfg: RunConfig):
    a = cfg.args
    rep = orb_loss(io.read_image(a["real"]), io.read_image(a["fake"]), cfg.orb)
    payload = rep.as_dict()
    _check_finite(list(payload.values()))
    _emit_json(payload, a["out"])


def _cmd_metrics(cfg: RunConfig):
    a = cfg.args
    real = io.read_image(a["real"])
    fake = io.read_image(a["fake"])
    mask = io.read_mask(a["mask"]) if a["mask"] else None
    dyn = io.read_image(a["dyn"]) if a["dyn"] else None
    rep = metric_report(real, fake, mask, dyn, a["shadow_thresh"], cfg.orb)
    _emit_json(rep.as_dict(), a["out"])


def _cmd_shadow_metrics(cfg: RunConfig):
    a = cfg.args
    dyn, real, fake = (io.read_image(a[k]) for k in ("dyn", "real", "fake"))
    obj = io.read_mask(a["mask"])
    gt = shadow_mask(dyn, real, obj, a["thresh"])
    pred = shadow_mask(dyn, fake, obj, a["thresh"])
    _emit_json(shadow_scores(pred, gt).as_dict(), a["out"])


def _cmd_grad_check(cfg: RunConfig):
    a = cfg.args
    rng = np.random.default_rng(cfg.seed)
    y = rng.random((1, a["size"], a["size"]))
    yhat = rng.random((1, a["size"], a["size"]))

    def fn(p):
        rep = orb_loss(y, p, cfg.orb)
        return rep.orb, rep.grad

    err = grad_check(fn, yhat, a["eps"], n_samples=a["samples"], seed=cfg.seed)
    ok = err < GRAD_CHECK_TOL
    print(f"max relative error {err:.3e} ({'pass' if ok else 'FAIL'}, tolerance {GRAD_CHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_inpaint_opt(cfg: RunConfig):
    from .optim import inpaint_optimize

    a = cfg.args
    res = inpaint_optimize(
        io.read_image(a["input"]),
        io.read_mask(a["mask"]),
        io.read_image(a["target"]),
        iterations=a["iters"],
        lr=a["lr"],
        lambda1=a["lambda1"],
        orb_cfg=cfg.orb,
        orb_warmup=a["orb_warmup"],
    )
    _check_finite(res.image)
    io.write_image(a["out"], res.image)
    if a["trace"]:
        keys = ("total", "l1", "det", "ori", "desc", "orb")
        rows = [[i] + [getattr(r, k) for k in keys] for i, r in enumerate(res.trace)]
        io.write_csv(a["trace"], ["iteration", *keys], rows)
    for flag in res.flags:
        log.warning("inpaint-opt: %s", flag)


def _cmd_srm_ablation(cfg: RunConfig):
    from .optim import srm_ablation

    a = cfg.args
    res = srm_ablation(cfg.seed, a["samples"], a["epochs"])
    _emit_csv(
        ["seed", "acc_with_noise", "acc_without_noise"],
        [[cfg.seed, res.acc_with_noise, res.acc_without_noise]],
        a["out"],
    )


def _cmd_pr_curve(cfg: RunConfig):
    a = cfg.args
    scores = io.read_numeric_csv(a["scores"])
    positions = io.read_numeric_csv(a["positions"])
    curve = pr_curve(scores, positions, a["radius"], exclusion=a["exclusion"])
    for flag in curve.flags:
        log.warning("pr-curve: %s", flag)
    rows = list(zip(curve.thresholds.tolist(), curve.precision.tolist(), curve.recall.tolist()))
    _emit_csv(["threshold", "precision", "recall"], rows, a["out"])


def _cmd_ate(cfg: RunConfig):
    a = cfg.args
    err = ate_rmse(io.read_trajectory(a["gt"]), io.read_trajectory(a["est"]), a["align"])
    _check_finite(err)
    print(repr(err))


COMMANDS = {
    "noise": _cmd_noise,
    "featmaps": _cmd_featmaps,
    "mask-collapse": _cmd_mask_collapse,
    "orb-loss": _cmd_orb_loss,
    "metrics": _cmd_metrics,
    "shadow-metrics": _cmd_shadow_metrics,
    "grad-check": _cmd_grad_check,
    "inpaint-opt": _cmd_inpaint_opt,
    "srm-ablation": _cmd_srm_ablation,
    "pr-curve": _cmd_pr_curve,
    "ate": _cmd_ate,
}


def run(cfg: RunConfig) -> int:
    try:
        status = COMMANDS[cfg.command](cfg)
    except FloatingPointError as exc:
        print(f"featloss {cfg.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, OSError) as exc:
        print(f"featloss {cfg.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if status is None else status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(
        level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"featloss: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    threads = os.environ.get("FEATLOSS_THREADS")
    if threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=int(threads)):
            return run(cfg)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
