"""Command-line interface: ``histocolor {hist,recolor,auto,eval,pool}``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import default_workers, evaluate_batch, read_pairs_manifest
from .histogram import DegenerateImageError, HistogramParams, compute_histogram, read_hgf, write_hgf
from .imageio import atomic_write_text, read_image, write_image
from .metrics import hellinger
from .postproc import recolor_hires_detailed
from .recolor import KERNELS, OptimizationError, RecolorConfig, recolor, trace_to_csv
from .sampler import pool_from_directory, pool_from_images

log = logging.getLogger("histocolor")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.default in (None, False) or action.default is argparse.SUPPRESS:
            return action.help
        return super()._get_help_string(action)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_hist_flags(p):
    g = p.add_argument_group("histogram")
    g.add_argument("--bins", type=int, default=64, help="histogram bins per axis (h)")
    g.add_argument("--tau", type=float, default=0.02, help="kernel fall-off")
    g.add_argument("--epsilon", type=float, default=1 / 255, help="offset inside the logarithm")


def _add_recolor_flags(p):
    g = p.add_argument_group("optimization")
    g.add_argument("--alpha", type=float, default=2.0, help="weight of the histogram (Hellinger) term")
    g.add_argument("--beta", type=float, default=1.5, help="weight of the reconstruction term")
    g.add_argument("--variance-scale", type=float, default=1.0,
                   help="multiplier on the variance term; 0 disables it")
    g.add_argument("--blur-sigma", type=float, default=15.0, help="Gaussian blur sigma of the variance term")
    g.add_argument("--kernel", choices=KERNELS, default="laplacian", help="reconstruction filter")
    g.add_argument("--iters", type=int, default=400, help="optimizer iterations")
    g.add_argument("--step-size", type=float, default=0.01, help="initial step size")
    g.add_argument("--jitter", type=float, default=0.0,
                   help="uniform noise added to the starting image (drawn from --seed)")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--hires", action="store_true",
                   help="optimize at 256x256 and transfer the change through a fitted color mapping")
    g.add_argument("--bits", type=int, choices=(8, 16), default=8, help="PNG bit depth of outputs")


def build_parser() -> Parser:
    fmt = HelpFormatter
    parser = Parser(prog="histocolor", description="Histogram-guided image recoloring.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="JSON file of flag defaults (keys are long flag names)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("hist", help="compute and save an RGB-uv histogram", formatter_class=fmt)
    p.add_argument("input", type=Path)
    _add_hist_flags(p)
    p.add_argument("--out", type=Path, help="HGF1 output file")
    p.add_argument("--plot", type=Path, help="PNG visualization")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("recolor", help="recolor an image toward a target histogram", formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--target", type=Path, required=True, help="target image or .hgf histogram")
    p.add_argument("--out", type=Path, required=True, help="output PNG")
    p.add_argument("--trace", type=Path, help="loss-trace CSV (a PNG plot is written next to it)")
    p.add_argument("--mapping", type=Path, help="with --hires, save the fitted color mapping as JSON")
    _add_recolor_flags(p)
    _add_hist_flags(p)
    p.set_defaults(func=cmd_recolor)

    p = sub.add_parser("auto", help="recolor toward targets sampled from a histogram pool",
                       formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--pool", type=Path, required=True,
                   help="folder of images and/or .hgf files, or a saved pool")
    p.add_argument("--count", type=int, default=5, help="number of variants")
    p.add_argument("--outdir", type=Path, required=True)
    _add_recolor_flags(p)
    _add_hist_flags(p)
    p.set_defaults(func=cmd_auto)

    p = sub.add_parser("eval", help="histogram similarity of outputs to targets", formatter_class=fmt)
    p.add_argument("--pairs", type=Path, required=True, help="CSV manifest of output,target rows")
    p.add_argument("--rgb-bins", type=int, default=16, help="RGB histogram bins per channel")
    p.add_argument("--out", type=Path, required=True,
                   help="report CSV; a .json report and a .png figure are written alongside")
    _add_hist_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pool", help="build and save a target histogram pool", formatter_class=fmt)
    p.add_argument("inputs", type=Path, nargs="+", help="image files or folders")
    p.add_argument("--out", type=Path, required=True, help="output folder")
    p.add_argument("--seed", type=int, default=0, help="sampling seed stored with the pool")
    _add_hist_flags(p)
    p.set_defaults(func=cmd_pool)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            overrides = json.loads(args.config.read_text())
        except OSError as exc:
            parser.exit(EXIT_IO, f"histocolor: cannot read config: {exc}\n")
        except json.JSONDecodeError as exc:
            parser.error(f"invalid JSON in {args.config}: {exc}")
        if not isinstance(overrides, dict):
            parser.error("config file must hold a JSON object")
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions if a.option_strings}
        keys = {k.replace("-", "_"): v for k, v in overrides.items()}
        unknown = sorted(set(keys) - known)
        if unknown:
            parser.error(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
        # explicit flags still win over the file
        sub.set_defaults(**keys)
        args = parser.parse_args(argv)
    return args


def _params(args) -> HistogramParams:
    try:
        return HistogramParams(h=args.bins, tau=args.tau, epsilon=args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config(args) -> RecolorConfig:
    try:
        return RecolorConfig(
            alpha=args.alpha, beta=args.beta, variance_weight_scale=args.variance_scale,
            recon_kernel=args.kernel, blur_sigma=args.blur_sigma, iterations=args.iters,
            step_size=args.step_size, jitter=args.jitter, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_target(path: Path, params: HistogramParams) -> np.ndarray:
    if path.suffix.lower() == ".hgf":
        hist = read_hgf(path)
        if hist.shape[0] != params.h:
            raise UsageError(f"{path} has {hist.shape[0]} bins but --bins is {params.h}")
        return hist
    return compute_histogram(read_image(path), params)


def cmd_hist(args) -> int:
    params = _params(args)
    img = read_image(args.input, allow_gray=True)
    hist = compute_histogram(img, params)
    if args.out:
        write_hgf(args.out, hist)
    if args.plot:
        from .plotting import plot_histogram

        plot_histogram(hist, args.plot, params, title=args.input.name)
    total = float(hist.sum())
    print(f"sum(H) = {total:.15f}  |1 - sum(H)| = {abs(1.0 - total):.3e}")
    return EXIT_OK


def _run_recolor(img, target, cfg, params, hires):
    if hires:
        res = recolor_hires_detailed(img, target, cfg, params)
        return res.image, res.trace, res.mapping
    out, trace = recolor(img, target, cfg, params)
    return out, trace, None


def cmd_recolor(args) -> int:
    params = _params(args)
    cfg = _config(args)
    if args.mapping and not args.hires:
        raise UsageError("--mapping requires --hires")
    img = read_image(args.input)
    target = _load_target(args.target, params)
    if not args.hires and max(img.shape[:2]) > 256:
        log.warning("optimizing a %dx%d image directly; --hires is much faster", *img.shape[:2])
    out, trace, mapping = _run_recolor(img, target, cfg, params, args.hires)
    write_image(args.out, out, args.bits)
    if args.trace:
        from .plotting import plot_trace

        atomic_write_text(args.trace, trace_to_csv(trace))
        plot_trace(trace, args.trace.with_suffix(".png"))
    if args.mapping and mapping is not None:
        atomic_write_text(args.mapping, mapping.to_json())
    print(f"initial Hellinger: {hellinger(compute_histogram(img, params), target):.6f}")
    print(f"final Hellinger:   {hellinger(compute_histogram(out, params), target):.6f}")
    return EXIT_OK


def cmd_auto(args) -> int:
    params = _params(args)
    cfg = _config(args)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    img = read_image(args.input)
    if not args.pool.is_dir():
        raise FileNotFoundError(f"pool folder not found: {args.pool}")
    pool = pool_from_directory(args.pool, params, seed=args.seed)
    if len(pool) == 0:
        raise FileNotFoundError(f"no usable histograms in pool {args.pool}")
    if pool.entries[0].shape[0] != params.h:
        raise UsageError(f"pool histograms have {pool.entries[0].shape[0]} bins but --bins is {params.h}")
    draws = [pool.draw() for _ in range(args.count)]
    h_in = compute_histogram(img, params)

    def work(k):
        draw = draws[k]
        entry = {"variant": k, "file": f"variant_{k:03d}.png", "target": f"variant_{k:03d}.hgf",
                 "first": draw.first, "second": draw.second, "delta": draw.delta}
        try:
            out, _, _ = _run_recolor(img, draw.hist, cfg, params, args.hires)
            write_image(args.outdir / entry["file"], out, args.bits)
            write_hgf(args.outdir / entry["target"], draw.hist)
            entry["hellinger_initial"] = hellinger(h_in, draw.hist)
            entry["hellinger_final"] = hellinger(compute_histogram(out, params), draw.hist)
            entry["status"] = "ok"
        except (OptimizationError, DegenerateImageError, ValueError, OSError) as exc:
            entry["status"] = f"error: {exc}"
        return entry

    workers = default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            entries = list(ex.map(work, range(args.count)))
    else:
        entries = [work(k) for k in range(args.count)]

    manifest = {"input": str(args.input), "pool": str(args.pool), "seed": args.seed,
                "pool_ids": pool.ids, "variants": entries}
    atomic_write_text(args.outdir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["output", "target"])
    writer.writerows([e["file"], e["target"]] for e in entries if e["status"] == "ok")
    atomic_write_text(args.outdir / "pairs.csv", buf.getvalue())

    failed = 0
    for e in entries:
        if e["status"] == "ok":
            pair = e["first"] if e["second"] is None else f"{e['first']} + {e['second']}"
            print(f"{e['file']}: {pair} delta={e['delta']:.4f} "
                  f"Hellinger {e['hellinger_initial']:.4f} -> {e['hellinger_final']:.4f}")
        else:
            failed += 1
            print(f"{e['file']}: {e['status']}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_eval(args) -> int:
    params = _params(args)
    if args.rgb_bins < 2:
        raise UsageError("--rgb-bins must be >= 2")
    rows = read_pairs_manifest(args.pairs)
    if not rows:
        raise UsageError("empty evaluation set")
    pairs = [r[0] for r in rows]
    labels = [r[1] for r in rows]
    report = evaluate_batch(pairs, params, args.rgb_bins, labels=labels)
    from .plotting import plot_eval

    atomic_write_text(args.out, report.to_csv())
    atomic_write_text(args.out.with_suffix(".json"), report.to_json())
    plot_eval(report, args.out.with_suffix(".png"))
    agg = report.aggregates
    for name, value in agg.items():
        print(f"mean {name}: {'n/a' if value is None else f'{value:.6f}'}")
    for item in report.failures:
        print(f"failed: {item.source}: {item.error}", file=sys.stderr)
    return EXIT_IO if report.failures else EXIT_OK


def cmd_pool(args) -> int:
    params = _params(args)
    paths = []
    for p in args.inputs:
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in {".png", ".jpg", ".jpeg"}))
        else:
            paths.append(p)
    pool = pool_from_images(paths, params, seed=args.seed)
    if len(pool) == 0:
        raise FileNotFoundError("no usable images for the pool")
    pool.save(args.out)
    for path, why in pool.errors:
        print(f"skipped {path}: {why}", file=sys.stderr)
    print(f"saved {len(pool)} histograms to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"histocolor {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateImageError, OptimizationError) as exc:
        print(f"histocolor {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        # grayscale input, malformed files and unreadable paths land here
        print(f"histocolor {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
