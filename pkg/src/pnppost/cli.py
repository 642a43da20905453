"""Command-line entry point: ``pnppost <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .codecs import CodecError, CountingCodec, PairTransformCodec, parse_codec
from .core import BlockGrid, read_pgm, write_matrix, write_pgm
from .denoise import parse_denoiser
from .jacobian import StepSet, estimate_block_jacobian
from .metrics import quality
from .presets import preset
from .quantlin import (
    ScalarQuantizer,
    TransformCoder,
    dct_matrix,
    fit_transform_coder,
    rotation_45,
    rows_to_csv,
    sweep_grid,
)
from .solver import SolverConfig, SolverError, finite_difference_linearizer, rotated_pair_linearizer, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CODEC = 4
EXIT_SOLVER = 5

log = logging.getLogger("pnppost")


class UsageError(Exception):
    pass


def parse_range(text: str) -> np.ndarray:
    """``start:step:stop`` (inclusive), a comma list, or a single number."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"empty or invalid range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"block shape must look like HxW, got {text!r}") from None
    return h, w


def codec_kind(spec: str) -> str:
    return spec.partition(":")[0]


# --- manifest ---------------------------------------------------------------

MANIFEST_KEYS = (
    "input", "codec", "denoiser", "rate", "area", "lam", "beta", "mu", "max_iters", "stop_threshold",
    "delta_tilde", "steps", "grid", "output_iterate", "no_clip", "sigma_scale", "timeout", "seed",
    "output", "log",
)


def write_manifest(path, args, cfg: SolverConfig, state=None):
    with open(path, "w") as f:
        f.write(f"version={__version__}\n")
        for key in MANIFEST_KEYS:
            f.write(f"{key}={'' if getattr(args, key) is None else getattr(args, key)}\n")
        f.write(f"resolved.lam={cfg.lam!r}\nresolved.beta={cfg.beta!r}\nresolved.mu={cfg.mu!r}\n")
        f.write(f"resolved.steps={','.join(repr(d) for d in cfg.steps)}\n")
        f.write(f"resolved.max_iters={cfg.max_iters}\nresolved.grid={cfg.block_shape[0]}x{cfg.block_shape[1]}\n")
        f.write(f"resolved.sigma={cfg.sigma!r}\n")
        if state is not None:
            f.write(f"result.iterations={state.iteration}\nresult.stop_reason={state.stop_reason}\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}: malformed manifest line {line!r}")
            out[key] = value
    return out


def apply_manifest(args, path, defaults):
    """Fill every option still at its default from the manifest at ``path``."""
    types = {
        "rate": float, "lam": float, "beta": float, "mu": float, "max_iters": int, "stop_threshold": float,
        "delta_tilde": float, "sigma_scale": float, "timeout": float, "seed": int,
        "no_clip": lambda v: v == "True",
    }
    values = read_manifest(path)
    for key in MANIFEST_KEYS:
        if key not in values or getattr(args, key) != defaults.get(key):
            continue
        raw = values[key]
        setattr(args, key, None if raw == "" else types.get(key, str)(raw))


# --- subcommands ------------------------------------------------------------


def resolve_config(args) -> SolverConfig:
    kind = codec_kind(args.codec)
    flags = {"lam": "lambda"}
    explicit = dict(lam=args.lam, beta=args.beta, mu=args.mu, max_iters=args.max_iters)
    if kind in ("scalar", "pair", "dct") and args.rate is not None:
        cfg = preset(kind, args.rate, area=args.area, delta_tilde=args.delta_tilde)
    elif kind in ("scalar", "pair") and args.rate is None:
        # derive the rate from the codec's own step
        step = float(args.codec.partition(":")[2])
        rate = math.log2(256.0 / step) if kind == "scalar" else 16.0 - math.log2(step)
        cfg = preset(kind, rate, area=args.area, delta_tilde=args.delta_tilde)
    else:
        missing = [k for k, v in explicit.items() if v is None]
        if args.steps is None:
            missing.append("steps")
        if args.grid is None:
            missing.append("grid")
        if missing:
            raise UsageError(
                f"codec {kind!r} has no preset without --rate; give --"
                + " --".join(flags.get(m, m).replace("_", "-") for m in missing)
            )
        cfg = SolverConfig(
            lam=args.lam, beta=args.beta, mu=args.mu, steps=StepSet(tuple(parse_range(args.steps))),
            max_iters=args.max_iters, block_shape=parse_shape(args.grid),
        )
    changes = {k: v for k, v in explicit.items() if v is not None}
    if args.steps is not None:
        changes["steps"] = StepSet(tuple(parse_range(args.steps)))
    if args.grid is not None:
        changes["block_shape"] = parse_shape(args.grid)
    if args.stop_threshold is not None:
        changes["stop_threshold"] = args.stop_threshold
    changes["output_iterate"] = args.output_iterate
    changes["clip_output"] = not args.no_clip
    changes["sigma_scale"] = args.sigma_scale
    changes["workers"] = args.threads
    return cfg.with_(**changes)


def cmd_postprocess(args) -> int:
    if args.from_manifest:
        apply_manifest(args, args.from_manifest, args.defaults)
    if not args.input or not args.output or not args.codec:
        raise UsageError("postprocess needs --input, --codec and --output")
    block = parse_shape(args.grid) if args.grid else None
    codec = parse_codec(args.codec, timeout=args.timeout, block_shape=block)
    denoiser = parse_denoiser(args.denoiser)
    cfg = resolve_config(args)
    linearizer = finite_difference_linearizer
    if args.area == "rotated":
        if not isinstance(codec, PairTransformCodec):
            raise UsageError("--area rotated is only available for the pair codec")
        linearizer = rotated_pair_linearizer
    y = read_pgm(args.input)
    restored, state = run(codec, y, denoiser, cfg, linearizer=linearizer)
    write_pgm(args.output, restored)
    if args.log:
        with open(args.log, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iter", "delta_u", "objective", "psnr_vs_input"])
            for i, (du, obj, p) in enumerate(zip(state.delta_u, state.objective, state.psnr_vs_input), 1):
                w.writerow([i, "%.12g" % du, "%.12g" % obj, "%.12g" % p])
    manifest = args.manifest or args.output + ".manifest"
    write_manifest(manifest, args, cfg, state)
    print(f"iterations={state.iteration} stop={state.stop_reason} output={args.output}")
    return EXIT_OK


def _emit(text: str, path):
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze_quantizer(args) -> int:
    if args.kind == "two-level":
        q = ScalarQuantizer.two_level()
    else:
        q = ScalarQuantizer.uniform(args.step)
    rows = sweep_grid(q, parse_range(args.x0), parse_range(args.delta))
    _emit(rows_to_csv(rows), args.output)
    return EXIT_OK


def cmd_analyze_transform(args) -> int:
    deltas = parse_range(args.delta)
    if args.mode == "filter":
        n = args.size
        steps = [2.0 ** (i / 4) for i in range(1, n + 1)]
        tc = TransformCoder(dct_matrix(n), [ScalarQuantizer.uniform(s) for s in steps])
        x0 = tc.transform @ (np.array(steps) / 2)  # every coefficient mid-cell
        rows = []
        for d in deltas:
            fit = fit_transform_coder(tc, x0, d, area="rotated")
            rows.extend((d, i + 1, steps[i], g) for i, g in enumerate(fit.transform_gains))
        _emit(rows_to_csv(rows, header=("delta", "index", "step", "gain")), args.output)
        return EXIT_OK
    # 2D 45-degree example: first transform coefficient varies, second fixed
    tc = TransformCoder(rotation_45(), [ScalarQuantizer.two_level()] * 2)
    rows = []
    for t in parse_range(args.x0):
        x0 = tc.transform @ np.array([t, args.second])
        for d in deltas:
            fit = fit_transform_coder(tc, x0, d, area=args.area, n_samples=args.samples, seed=args.seed)
            a, b = fit.matrix, fit.offset
            rows.append((t, d, a[0, 0], a[0, 1], a[1, 0], a[1, 1], b[0], b[1], fit.lmse))
    header = ("x0_1", "delta", "a11", "a12", "a21", "a22", "b1", "b2", "lmse")
    _emit(rows_to_csv(rows, header=header), args.output)
    return EXIT_OK


def cmd_jacobian(args) -> int:
    block = parse_shape(args.grid) if args.grid else None
    codec = CountingCodec(parse_codec(args.codec, timeout=args.timeout, block_shape=block))
    z = read_pgm(args.input)
    shape = block or codec.block_shape
    if shape is None:
        raise UsageError("codec declares no block structure; give --grid HxW")
    if args.steps:
        steps = StepSet(tuple(parse_range(args.steps)))
    elif args.rate is not None:
        steps = preset(codec_kind(args.codec), args.rate).steps
    else:
        raise UsageError("give --steps or --rate")
    grid = BlockGrid(z.shape, shape)
    cz = codec(z)
    before = codec.calls
    lin = estimate_block_jacobian(codec, z, grid, steps, base_value=cz, workers=args.threads)
    calls = codec.calls - before
    os.makedirs(args.outdir, exist_ok=True)
    wanted = range(len(grid)) if args.blocks is None else [int(v) for v in args.blocks.split(",")]
    blocks = lin.blocks
    for i in wanted:
        write_matrix(os.path.join(args.outdir, f"block_{i:05d}.txt"), blocks[i])
    if args.count_calls:
        print(f"codec_calls={calls}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    print(quality(read_pgm(args.ref), read_pgm(args.test)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnppost", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("postprocess", help="restore a decompressed image")
    pp.add_argument("--input")
    pp.add_argument("--codec", help="scalar:STEP | pair:STEP | dct:SCALE | cmd:TEMPLATE")
    pp.add_argument("--denoiser", default="dct", help="gauss | dct | cmd:TEMPLATE (with {sigma})")
    pp.add_argument("--rate", type=float, help="bit rate selecting the parameter preset")
    pp.add_argument("--area", choices=("aligned", "rotated"), default="aligned")
    pp.add_argument("--lambda", dest="lam", type=float)
    pp.add_argument("--beta", type=float)
    pp.add_argument("--mu", type=float)
    pp.add_argument("--max-iters", type=int)
    pp.add_argument("--stop-threshold", type=float)
    pp.add_argument("--delta-tilde", type=float, help="base of the step set {0.1*k*D}")
    pp.add_argument("--steps", help="explicit step set, e.g. 0.5,1,1.5")
    pp.add_argument("--grid", help="block shape HxW (assumed for external codecs)")
    pp.add_argument("--output-iterate", choices=("x", "v"), default="v")
    pp.add_argument("--no-clip", action="store_true")
    pp.add_argument("--sigma-scale", type=float, default=1.0)
    pp.add_argument("--timeout", type=float, default=60.0)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--threads", type=int)
    pp.add_argument("--output")
    pp.add_argument("--log", help="per-iteration CSV")
    pp.add_argument("--manifest", help="manifest path (default OUTPUT.manifest)")
    pp.add_argument("--from-manifest", help="re-run with the settings of a manifest")
    pp.set_defaults(func=cmd_postprocess)
    pp.set_defaults(defaults={k: pp.get_default(k) for k in MANIFEST_KEYS})

    aq = sub.add_parser("analyze-quantizer", help="CSV sweep of optimal scalar linearizations")
    aq.add_argument("--kind", choices=("two-level", "uniform"), required=True)
    aq.add_argument("--step", type=float, default=1.0)
    aq.add_argument("--x0", required=True, help="start:step:stop or list")
    aq.add_argument("--delta", required=True, help="start:step:stop or list")
    aq.add_argument("--output")
    aq.set_defaults(func=cmd_analyze_quantizer)

    at = sub.add_parser("analyze-transform", help="transform-coder linearization tables")
    at.add_argument("--mode", choices=("filter", "rotation2d"), default="filter")
    at.add_argument("--size", type=int, default=32)
    at.add_argument("--delta", required=True)
    at.add_argument("--x0", default="-2:0.05:2", help="first transform coefficient (rotation2d)")
    at.add_argument("--second", type=float, default=15.0, help="fixed second coefficient (rotation2d)")
    at.add_argument("--area", choices=("aligned", "rotated"), default="rotated")
    at.add_argument("--samples", type=int, default=200_000)
    at.add_argument("--seed", type=int, default=0)
    at.add_argument("--output")
    at.set_defaults(func=cmd_analyze_transform)

    jc = sub.add_parser("jacobian", help="dump estimated Jacobian blocks")
    jc.add_argument("--input", required=True)
    jc.add_argument("--codec", required=True)
    jc.add_argument("--grid")
    jc.add_argument("--steps")
    jc.add_argument("--rate", type=float)
    jc.add_argument("--blocks", help="comma list of block indices (default all)")
    jc.add_argument("--outdir", required=True)
    jc.add_argument("--count-calls", action="store_true")
    jc.add_argument("--timeout", type=float, default=60.0)
    jc.add_argument("--threads", type=int)
    jc.set_defaults(func=cmd_jacobian)

    mt = sub.add_parser("metrics", help="PSNR and SSIM of two PGM images")
    mt.add_argument("ref")
    mt.add_argument("test")
    mt.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pnppost: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CodecError as exc:
        print(f"pnppost: codec failure: {exc}", file=sys.stderr)
        return EXIT_CODEC
    except SolverError as exc:
        cause = exc.__cause__
        if isinstance(cause, CodecError):
            print(f"pnppost: codec failure: {cause}", file=sys.stderr)
            return EXIT_CODEC
        print(f"pnppost: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        if isinstance(exc, OSError) or "PGM" in str(exc) or "matrix" in str(exc):
            print(f"pnppost: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"pnppost: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
