"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .experiment import (
    ExperimentSpec,
    bench_bands,
    load_input,
    run_experiment,
    write_trace_csv,
)
from .io import DataError, add_gaussian_noise, parse_band_list, write_cube
from .metrics import quality_report
from .pipeline import DenoiseConfig, NumericalError, denoise
from .spatial import PatchGeometry
from .subspace import estimate_band_noise, estimate_subspace_dim

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here reserves 2 for
    # data problems
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text):
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _read_config_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    vals = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        vals[key.lower().replace("-", "_")] = val
    return vals


def _add_config_flags(parser):
    grp = parser.add_argument_group("denoiser options")
    grp.add_argument("--config", metavar="FILE", help="key = value defaults; flags override")
    grp.add_argument("--k0", type=int, help="initial subspace dimension (default: estimated)")
    grp.add_argument("--delta", type=int, help="subspace growth per iteration (default 2)")
    grp.add_argument("--lambda", dest="lam", type=float, help="estimate/observation mix in [0,1] (default 0.9)")
    grp.add_argument("--gamma", type=float, help="noise re-estimation scale (default 0.5)")
    grp.add_argument("--iters", type=int, help="outer iterations (default 5)")
    grp.add_argument("--patch", type=int, help="patch side (default 6)")
    grp.add_argument("--stride", type=int, help="reference patch spacing (default 4)")
    grp.add_argument("--window", type=int, help="search window side (default 30)")
    grp.add_argument("--group", type=int, help="patches per group (default 70)")
    grp.add_argument("--seed", type=int, help="noise seed (default 0)")
    grp.add_argument("--sigma0", type=float, help="noise sigma on the [0,255] scale (default: estimated)")
    grp.add_argument("--wnnm-c", dest="wnnm_c", type=float, help="shrinkage weight constant")
    grp.add_argument("--wnnm-eps", dest="wnnm_eps", type=float, help="shrinkage weight floor")
    grp.add_argument("--k-growth", dest="k_growth", choices=["cumulative", "affine"], help="subspace growth rule")
    grp.add_argument("--early-stop", dest="early_stop", type=float, help="relative-change stop threshold")
    grp.add_argument("--no-normalize", action="store_true", help="keep stored values; skip [0,255] rescale on load")
    grp.add_argument("--keep-bands", metavar="LIST", help="bands to keep, e.g. 0-102,108-148")


def _build_config(args):
    file_vals = _read_config_file(args.config) if args.config else {}

    def pick(name, cast, default, file_key=None):
        val = getattr(args, name, None)
        if val is not None:
            return val
        key = file_key or name
        if key in file_vals:
            return cast(file_vals[key])
        return default

    geom = PatchGeometry(
        patch=pick("patch", int, 6),
        stride=pick("stride", int, 4),
        window=pick("window", int, 30),
        group=pick("group", int, 70),
    )
    cfg = DenoiseConfig(
        k0=pick("k0", int, None),
        delta=pick("delta", int, 2),
        lam=pick("lam", float, 0.9, file_key="lambda"),
        gamma=pick("gamma", float, 0.5),
        iters=pick("iters", int, 5),
        geom=geom,
        wnnm_c=pick("wnnm_c", float, DenoiseConfig.wnnm_c),
        wnnm_eps=pick("wnnm_eps", float, DenoiseConfig.wnnm_eps),
        seed=pick("seed", int, 0),
        k_growth=pick("k_growth", str, "cumulative"),
        early_stop=pick("early_stop", float, None),
    )
    sigma0 = pick("sigma0", float, None)
    if args.no_normalize:
        normalize = False
    elif "normalize" in file_vals:
        normalize = _parse_bool(file_vals["normalize"])
    else:
        normalize = True
    keep = getattr(args, "keep_bands", None)
    if keep is None and "keep_bands" in file_vals:
        keep = file_vals["keep_bands"]
    keep_bands = parse_band_list(keep) if keep else None
    return cfg, sigma0, normalize, keep_bands


def _cmd_denoise(args):
    cfg, sigma0, normalize, keep_bands = _build_config(args)
    cube = load_input(args.input, normalize, keep_bands)
    clean = load_input(args.clean, normalize, keep_bands) if args.clean else None
    t0 = time.perf_counter()
    x, trace = denoise(cube, sigma0, cfg, clean=clean)
    elapsed = time.perf_counter() - t0
    write_cube(args.output, x, dtype=args.dtype)
    if args.trace:
        write_trace_csv(args.trace, trace)
    m, n, b = x.shape
    last = trace[-1]
    print(
        f"denoised {m}x{n}x{b} cube in {len(trace)} iterations "
        f"({elapsed:.1f} s); final K={last.k}, sigma_i={last.sigma:.3f}"
    )
    if clean is not None:
        rep = quality_report(clean, x)
        print(f"mpsnr={rep.mpsnr:.2f} dB  mssim={rep.mssim:.4f}  sam={rep.sam_deg:.3f} deg")
    return 0


def _cmd_add_noise(args):
    cfg, _, normalize, keep_bands = _build_config(args)
    cube = load_input(args.input, normalize, keep_bands)
    noisy = add_gaussian_noise(cube, args.sigma, seed=cfg.seed)
    write_cube(args.output, noisy, dtype=args.dtype)
    print(f"wrote {args.output} (sigma={args.sigma:g}, seed={cfg.seed})")
    return 0


def _cmd_metrics(args):
    ref = load_input(args.ref, normalize=False)
    test = load_input(args.test, normalize=False)
    rep = quality_report(ref, test, peak=args.peak)
    print(f"mpsnr={rep.mpsnr:.4f} dB  mssim={rep.mssim:.6f}  sam={rep.sam_deg:.4f} deg")
    return 0


def _cmd_estimate_k(args):
    _, _, normalize, keep_bands = _build_config(args)
    cube = load_input(args.input, normalize, keep_bands)
    sig = estimate_band_noise(cube)
    k = estimate_subspace_dim(cube, sig)
    print(f"K = {k}")
    print(
        f"band sigma: median={np.median(sig):.4f} "
        f"min={sig.min():.4f} max={sig.max():.4f}"
    )
    return 0


def _parse_float_list(text, what):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"bad {what} list {text!r}") from exc


def _cmd_run_exp(args):
    cfg, _, normalize, keep_bands = _build_config(args)
    sigmas = _parse_float_list(args.sigmas, "sigma")
    spec = ExperimentSpec(
        input_path=args.input,
        sigmas=sigmas,
        output_dir=args.outdir,
        seed=cfg.seed,
        config=cfg,
        normalize=normalize,
        keep_bands=keep_bands,
        label=args.label,
        jobs=args.jobs,
        save_cubes=not args.no_save_cubes,
    )
    rows = run_experiment(spec)
    for row in rows:
        if row["status"] == "ok":
            print(
                f"sigma={float(row['sigma']):g}: mpsnr={float(row['mpsnr']):.2f} dB "
                f"mssim={float(row['mssim']):.4f} sam={float(row['sam_deg']):.3f} deg "
                f"({float(row['seconds']):.1f} s)"
            )
        else:
            print(f"sigma={float(row['sigma']):g}: {row['status']}")
    print(f"report: {Path(args.outdir) / 'report.csv'}")
    return 0


def _cmd_bench_bands(args):
    cfg, _, normalize, keep_bands = _build_config(args)
    spec = ExperimentSpec(
        input_path=args.input,
        sigmas=[args.sigma],
        output_dir=args.outdir,
        seed=cfg.seed,
        config=cfg,
        normalize=normalize,
        keep_bands=keep_bands,
    )
    counts = [int(c) for c in _parse_float_list(args.bands, "band")] if args.bands else None
    rows = bench_bands(spec, counts)
    for row in rows:
        print(
            f"bands={row['bands']}: stage A {float(row['stage_a_seconds']):.3f} s, "
            f"stage B {float(row['stage_b_seconds']):.3f} s, "
            f"mssim={float(row['mssim']):.4f}"
        )
    print(f"report: {Path(args.outdir) / 'bench.csv'}")
    return 0


def build_parser():
    parser = _Parser(
        prog="hsidenoise",
        description="Hyperspectral image denoising by iterated spectral "
        "subspace projection and non-local low-rank filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("denoise", help="denoise one cube")
    p.add_argument("input", help="cube header (.hdr) or PGM band directory")
    p.add_argument("output", help="output cube path (writes .hdr + .raw)")
    p.add_argument("--clean", help="ground-truth cube for metrics")
    p.add_argument("--trace", help="write per-iteration trace CSV here")
    p.add_argument("--dtype", default="f64", choices=["f32", "f64", "u8", "u16"])
    _add_config_flags(p)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("add-noise", help="write a noisy copy of a cube")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--dtype", default="f64", choices=["f32", "f64", "u8", "u16"])
    _add_config_flags(p)
    p.set_defaults(func=_cmd_add_noise)

    p = sub.add_parser("metrics", help="compare two cubes")
    p.add_argument("ref")
    p.add_argument("test")
    p.add_argument("--peak", type=float, default=255.0)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("estimate-k", help="estimate noise and subspace dimension")
    p.add_argument("input")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_estimate_k)

    p = sub.add_parser("run-exp", help="noise sweep with CSV report")
    p.add_argument("input")
    p.add_argument("--sigmas", required=True, help="comma list, e.g. 10,30,50,100")
    p.add_argument("--outdir", required=True)
    p.add_argument("--label", help="image name in the report (default: input stem)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--no-save-cubes", action="store_true", help="skip writing denoised cubes")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run_exp)

    p = sub.add_parser("bench-bands", help="stage timing vs band count")
    p.add_argument("input")
    p.add_argument("--sigma", type=float, default=50.0)
    p.add_argument("--bands", help="comma list of band counts (default 32,64,128,B)")
    p.add_argument("--outdir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench_bands)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits for usage errors and --help; report the code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"hsidenoise: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hsidenoise: i/o error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"hsidenoise: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"hsidenoise: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
