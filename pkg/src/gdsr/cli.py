"""Command-line interface.

Subcommands:
  sr     super-resolve one LR depth map against an HR color guide
  bench  run the degradation benchmark over a manifest
  fit    fit lambda / head parameters on a manifest's train split
  dct    dump forward or inverse transform coefficients to PFM

Worker count for bench comes from --threads or the GDSR_THREADS
environment variable (default: logical cores).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (
    PipelineConfig,
    fit_feature_params,
    fit_image_lambda,
    load_manifest,
    predict,
    rmse,
    run_bench,
)
from .feature_bank import default_bank, save_params
from .image_core import DepthMap, RgbImage
from .imgio import load_image, load_pfm_grid, save_error_map, save_image
from .dct import dct2_forward, dct2_inverse
from .resample import bicubic_upsample, check_scale


def _add_edge_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edge", choices=("none", "hard", "soft"), default="hard",
                   help="edge attention mode (default: hard)")
    p.add_argument("--tau-q", type=float, default=0.9,
                   help="edge threshold quantile in (0,1) (default: 0.9)")
    p.add_argument("--alpha", type=float, default=50.0,
                   help="soft-mode logistic steepness (default: 50)")
    p.add_argument("--symbol", choices=("derived", "paper"), default="derived",
                   help="spectral symbol mode (default: derived)")
    p.add_argument("--no-antialias", action="store_true",
                   help="disable antialiasing in bicubic downsampling")


def _config_from_args(args, method: str, scale: int | None) -> PipelineConfig:
    return PipelineConfig(
        method=method,
        lam=getattr(args, "lam", 1.0),
        params_path=getattr(args, "params", None),
        edge_mode=args.edge,
        tau_quantile=args.tau_q,
        steepness=args.alpha,
        symbol_mode=args.symbol,
        scale=scale,
        crop_border=getattr(args, "crop_border", 0),
        antialias=not args.no_antialias,
    )


_METHOD_ALIASES = {"bicubic": "bicubic", "image": "image_domain", "feature": "feature_domain"}


def _cmd_sr(args) -> int:
    s = check_scale(args.scale)
    depth = load_image(args.depth)
    rgb = load_image(args.rgb)
    if not isinstance(depth, DepthMap):
        raise SystemExit(f"--depth must be a grayscale depth file: {args.depth}")
    if not isinstance(rgb, RgbImage):
        raise SystemExit(f"--rgb must be a color image: {args.rgb}")
    m, n = depth.shape
    if rgb.shape != (m * s, n * s):
        raise SystemExit(
            f"guide {rgb.shape} is not the depth size {depth.shape} times scale {s}"
        )
    up = DepthMap(np.maximum(bicubic_upsample(depth.data, s), 0.0), depth.unit_scale)
    cfg = _config_from_args(args, _METHOD_ALIASES[args.method], s)
    pred = predict(up, rgb, cfg)
    save_image(pred, args.out, args.format)
    if args.gt is not None:
        gt = load_image(args.gt)
        if not isinstance(gt, DepthMap):
            raise SystemExit(f"--gt must be a grayscale depth file: {args.gt}")
        gt = DepthMap(gt.data, depth.unit_scale)
        print(f"rmse {rmse(pred, gt, args.crop_border)!r}")
        if args.errmap is not None:
            save_error_map(pred, gt, args.errmap, args.max_err)
    elif args.errmap is not None:
        raise SystemExit("--errmap requires --gt")
    return 0


def _cmd_bench(args) -> int:
    manifest = load_manifest(args.manifest)
    scales = [check_scale(int(tok)) for tok in args.scales.split(",") if tok]
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    raw_configs = doc if isinstance(doc, list) else [doc]
    configs = []
    for raw in raw_configs:
        raw = dict(raw)
        raw["method"] = _METHOD_ALIASES.get(raw.get("method", "bicubic"),
                                            raw.get("method", "bicubic"))
        configs.append(PipelineConfig(**raw))
    records = run_bench(manifest, scales, configs, args.out,
                        threads=args.threads, timing=not args.no_timing)
    means = [r for r in records if r.image_id == "__mean__"]
    for r in means:
        shown = "ERROR" if r.rmse is None else f"{r.rmse:.4f}"
        print(f"{r.dataset} x{r.scale} {r.method} [{r.config_hash}] mean rmse {shown}")
    return 0


def _cmd_fit(args) -> int:
    manifest = load_manifest(args.manifest)
    s = check_scale(args.scale)
    cfg = _config_from_args(args, _METHOD_ALIASES[args.method], s)
    if args.method == "image":
        lam = fit_image_lambda(manifest, cfg, s, grid_points=args.grid_points)
        save_params(args.out, {
            "method": "image",
            "lambda": lam,
            "config_hash": cfg.config_hash(),
        })
        print(f"fitted lambda {lam!r}")
        return 0
    bank = default_bank()
    lambdas, head, trace = fit_feature_params(
        manifest, cfg, s,
        head_gamma=args.gamma,
        grid_points=args.grid_points,
        sweeps=args.sweeps,
        fit_lambdas=args.mode in ("lambda", "both"),
        bank=bank,
    )
    save_params(args.out, {
        "method": "feature",
        "bank": bank.name,
        "lambdas": lambdas,
        "head_weights": head.weights,
        "head_bias": head.bias,
        "head_gamma": head.gamma,
        "config_hash": cfg.config_hash(),
    })
    if trace:
        print(f"fit rmse {trace[0]!r} -> {trace[-1]!r} over {len(trace) - 1} accepted moves")
    else:
        print("head-only fit complete")
    return 0


def _cmd_dct(args) -> int:
    if args.inverse:
        grid = load_pfm_grid(args.infile)
        out = dct2_inverse(grid)
    else:
        img = load_image(args.infile)
        if isinstance(img, RgbImage):
            raise SystemExit("dct expects a grayscale input")
        out = dct2_forward(img.data)
    save_image(out, args.out, "pfm")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdsr",
                                     description="Guided depth map super-resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sr", help="super-resolve one depth map")
    p.add_argument("--depth", required=True, help="LR depth input (PGM/PFM)")
    p.add_argument("--rgb", required=True, help="HR color guide (PPM)")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--method", choices=sorted(_METHOD_ALIASES), default="image")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="regularization weight for --method image")
    p.add_argument("--params", default=None, help="fitted parameter file")
    _add_edge_flags(p)
    p.add_argument("--out", required=True, help="prediction output path")
    p.add_argument("--format", choices=("pgm8", "pgm16", "pfm"), default="pgm16")
    p.add_argument("--gt", default=None, help="ground truth for RMSE / error map")
    p.add_argument("--errmap", default=None, help="error map output path (PGM)")
    p.add_argument("--max-err", type=float, default=0.1,
                   help="error map saturation level (default: 0.1)")
    p.add_argument("--crop-border", type=int, default=0)
    p.set_defaults(func=_cmd_sr)

    p = sub.add_parser("bench", help="run the degradation benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scales", default="4,8,16", help="comma-separated scale factors")
    p.add_argument("--config", required=True,
                   help="JSON pipeline config (object or list of objects)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (default: GDSR_THREADS or logical cores)")
    p.add_argument("--no-timing", action="store_true",
                   help="report runtimes as 0 for byte-reproducible CSV")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("fit", help="fit parameters on the manifest train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("lambda", "head", "both"), default="both")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--method", choices=("image", "feature"), default="feature")
    p.add_argument("--gamma", type=float, default=1e-6, help="ridge penalty")
    p.add_argument("--grid-points", type=int, default=9)
    p.add_argument("--sweeps", type=int, default=2)
    _add_edge_flags(p)
    p.add_argument("--out", required=True, help="parameter file output path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("dct", help="dump transform coefficients to PFM")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--inverse", action="store_true")
    p.set_defaults(func=_cmd_dct)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
