"""Command-line interface: ``msrdl {convert,srdl,msrdl,metrics}``.

Clustering commands write everything under ``--out``: ``labels_t{t}.csv``
and ``map_t{t}.png`` per diffusion time, and ``report.json``.
Exit codes: 0 success, 2 bad configuration, 3 bad data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .density import K_SELECTION
from .errors import ConfigError, DataError, MsrdlError
from .hsi import NORMALIZE_MODES, HsiCube, load_cube, load_labels, normalize_cube, save_cube
from .labeling import CONSENSUS_MODES, SRDLConfig, consensus_neighbors, srdl_at
from .multiscale import NMI_NORMS, NoNontrivialScale, against_truth, msrdl, nmi, vi
from .report import RunReport, ScaleSummary, boundary_disagreement, render_label_map, write_label_csv

logger = logging.getLogger("msrdl")

CACHE_ENV = "MSRDL_CACHE_DIR"
RAW_DTYPES = {"f32": "<f4", "f64": "<f8", "i16": "<i2", "u16": "<u2", "i32": "<i4"}


def _window(text):
    if text.lower() in ("none", "unbounded", "inf"):
        return None
    try:
        r = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be an integer or 'none', got {text!r}")
    if r < 0:
        raise argparse.ArgumentTypeError("window radius must be non-negative")
    return r


def _cache_dir(args):
    if not args.cache:
        return None
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "msrdl")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="msrdl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    cv = sub.add_parser("convert", help="wrap a raw numeric dump as a cube file")
    cv.add_argument("raw", help="raw little-endian dump")
    cv.add_argument("--rows", type=int, required=True)
    cv.add_argument("--cols", type=int, required=True)
    cv.add_argument("--bands", type=int, required=True)
    cv.add_argument("--raw-dtype", choices=sorted(RAW_DTYPES), default="f32")
    cv.add_argument("--interleave", choices=("bip", "bsq"), default="bip",
                    help="bip: all bands per pixel (row-major pixels); bsq: one full image per band")
    cv.add_argument("--dtype", choices=("f32", "f64"), default="f32", help="stored dtype")
    cv.add_argument("--out", required=True, help="header path to write (payload goes next to it)")

    for name, hlp in (("srdl", "cluster at one diffusion time"),
                      ("msrdl", "multiscale clustering with VI-barycenter selection")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--data", required=True, help="cube header file")
        p.add_argument("--labels", help="ground-truth CSV; adds NMI/VI to the report")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--n-neighbors", type=int, default=100)
        p.add_argument("--sigma", type=float, default=1.30)
        p.add_argument("--sigma0", type=float, default=3.6e-3)
        p.add_argument("--window", type=_window, default=12, metavar="R|none")
        p.add_argument("--no-spatial", action="store_true", help="plain KNN graph, no consensus")
        p.add_argument("--consensus", choices=CONSENSUS_MODES, default="graph")
        p.add_argument("--k-selection", choices=K_SELECTION, default="ratio-max")
        p.add_argument("--nmi-norm", choices=NMI_NORMS, default="sqrt")
        p.add_argument("--normalize", choices=NORMALIZE_MODES, default="none")
        p.add_argument("--m-max", type=int, default=100)
        p.add_argument("--cache", action="store_true",
                       help=f"reuse diffusion models from ${CACHE_ENV} (default ~/.cache/msrdl)")
        if name == "srdl":
            p.add_argument("--t", type=float, default=0.0, help="diffusion time")
        else:
            p.add_argument("--tau", type=float, default=1e-5)
            p.add_argument("--horizon-rule", choices=("paper", "certified"), default="paper")
            p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    mt = sub.add_parser("metrics", help="VI and NMI between two label files")
    mt.add_argument("--pred", required=True)
    mt.add_argument("--truth", required=True)
    mt.add_argument("--nmi-norm", choices=NMI_NORMS, default="sqrt")
    mt.add_argument("--all-pixels", action="store_true",
                    help="keep pixels whose truth label is 0")
    mt.add_argument("--out", help="also write metrics.json into this directory")
    return ap


def config_from_args(args) -> SRDLConfig:
    window = None if args.no_spatial else args.window
    try:
        return SRDLConfig(n_neighbors=args.n_neighbors, sigma=args.sigma, sigma0=args.sigma0,
                          window=window, consensus=args.consensus, k_selection=args.k_selection,
                          m_max=args.m_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt_t(t):
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def _scores(pred, truth, norm, warnings):
    p, g = against_truth(pred, truth)
    return {"nmi": nmi(p, g, norm, warnings), "vi": vi(p, g)}


def _write_scale(out: Path, c, rows, cols, warnings):
    tag = _fmt_t(c.t)
    write_label_csv(c.labels, rows, cols, out / f"labels_t{tag}.csv")
    (out / f"map_t{tag}.png").write_bytes(render_label_map(c.labels, rows, cols, warnings=warnings))


def _summary(c, rows, cols, runtime_ms=0.0):
    return ScaleSummary(t=c.t, K=c.K, modes=[int(m) for m in c.modes],
                        stage1_labeled=int(c.stage1_labeled),
                        boundary_disagreement=boundary_disagreement(c.labels, rows, cols),
                        runtime_ms=runtime_ms)


def _prepare(args):
    config = config_from_args(args)
    raw = load_cube(args.data)
    cube = normalize_cube(raw, args.normalize)
    truth = load_labels(args.labels, cube) if args.labels else None
    config.graph.validate_for(cube)
    params = {**asdict(config), "normalize": args.normalize, "nmi_norm": args.nmi_norm,
              "cache": bool(args.cache)}
    dataset = {"data": str(args.data), "labels": args.labels, "rows": cube.rows,
               "cols": cube.cols, "bands": cube.bands, "sha256": raw.digest()}
    return config, cube, truth, params, dataset


def cmd_srdl(args, report: RunReport):
    from .density import kde
    from .graph import diffusion_model

    config, cube, truth, params, dataset = _prepare(args)
    report.parameters.update(params, t=args.t)
    report.dataset.update(dataset)
    if args.t < 0:
        raise ConfigError(f"diffusion time must be non-negative, got {args.t}")
    t0 = time.perf_counter()
    model = diffusion_model(cube, config.graph, config.m_max, config.eig_tol, _cache_dir(args))
    prof = kde(cube.pixels, config.kde_n, config.sigma0)
    t1 = time.perf_counter()
    c = srdl_at(model, prof, args.t, config, (cube.rows, cube.cols), consensus_neighbors(cube, config))
    t2 = time.perf_counter()
    report.lazy_walk = model.lazy
    report.grid = [c.t]
    report.scales = [_summary(c, cube.rows, cube.cols, (t2 - t1) * 1e3)]
    report.warnings += c.warnings
    _write_scale(Path(args.out), c, cube.rows, cube.cols, report.warnings)
    if truth is not None:
        report.metrics = {_fmt_t(c.t): _scores(c, truth, args.nmi_norm, report.warnings)}
    report.timing = {"model_ms": (t1 - t0) * 1e3, "cluster_ms": (t2 - t1) * 1e3}
    print(f"t={_fmt_t(c.t)} K={c.K}")


def _fill_multiscale(report, res, cube, truth, norm, out):
    rows, cols = cube.rows, cube.cols
    report.grid = list(res.grid)
    report.T = res.T
    report.J = list(res.J)
    report.vi_totals = dict(res.vi_totals)
    report.t_star = res.t_star
    report.K_star = res.K_star
    report.lazy_walk = res.lazy
    report.warnings += res.warnings
    report.scales = [_summary(c, rows, cols, ms) for c, ms in zip(res.clusterings, res.runtimes_ms)]
    for c in res.clusterings:
        _write_scale(out, c, rows, cols, report.warnings)
    if truth is not None:
        report.metrics = {_fmt_t(c.t): _scores(c, truth, norm, report.warnings)
                          for c in res.clusterings}
        if res.t_star is not None:
            report.metrics["barycenter"] = report.metrics[_fmt_t(res.t_star)]


def cmd_msrdl(args, report: RunReport):
    config, cube, truth, params, dataset = _prepare(args)
    report.parameters.update(params, tau=args.tau, horizon_rule=args.horizon_rule,
                             threads=args.threads)
    report.dataset.update(dataset)
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        res = msrdl(cube, config, tau=args.tau, threads=args.threads,
                    horizon_rule=args.horizon_rule, cache_dir=_cache_dir(args))
    except NoNontrivialScale as exc:
        _fill_multiscale(report, exc.result, cube, truth, args.nmi_norm, out)
        raise
    finally:
        report.timing = {"total_ms": (time.perf_counter() - t0) * 1e3}
    _fill_multiscale(report, res, cube, truth, args.nmi_norm, out)
    line = f"grid={res.grid} K={res.Ks} t*={res.t_star} K*={res.K_star}"
    if truth is not None:
        line += f" NMI={report.metrics['barycenter']['nmi']:.4f}"
    print(line)


def cmd_convert(args):
    dims = (args.rows, args.cols, args.bands)
    if min(dims) < 1:
        raise DataError(f"dimensions must be positive, got {dims}")
    try:
        raw = np.fromfile(args.raw, dtype=RAW_DTYPES[args.raw_dtype])
    except FileNotFoundError:
        raise DataError(f"raw dump not found: {args.raw}") from None
    expected = args.rows * args.cols * args.bands
    if raw.size != expected or raw.nbytes != os.path.getsize(args.raw):
        raise DataError(f"{args.raw} holds {os.path.getsize(args.raw)} bytes, but "
                        f"{args.rows}x{args.cols}x{args.bands} {args.raw_dtype} needs "
                        f"{expected * raw.itemsize}")
    if args.interleave == "bip":
        values = raw.reshape(dims)
    else:
        values = raw.reshape(args.bands, args.rows, args.cols).transpose(1, 2, 0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_cube(HsiCube(values), out, dtype=args.dtype)
    print(f"wrote {out} ({args.rows}x{args.cols}x{args.bands}, {args.dtype})")


def cmd_metrics(args):
    pred, truth = load_labels(args.pred), load_labels(args.truth)
    if (pred.rows, pred.cols) != (truth.rows, truth.cols):
        raise DataError(f"prediction is {pred.rows}x{pred.cols}, truth is {truth.rows}x{truth.cols}")
    warnings = []
    if args.all_pixels:
        res = {"nmi": nmi(pred, truth, args.nmi_norm, warnings), "vi": vi(pred, truth)}
    else:
        res = _scores(pred, truth, args.nmi_norm, warnings)
    res.update(nmi_norm=args.nmi_norm, warnings=warnings)
    text = json.dumps(res, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metrics.json").write_text(text)
    sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("convert", "metrics"):
        try:
            (cmd_convert if args.command == "convert" else cmd_metrics)(args)
        except MsrdlError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return exc.exit_code
        return 0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(command=args.command, parameters={}, dataset={})
    code = 0
    try:
        (cmd_srdl if args.command == "srdl" else cmd_msrdl)(args, report)
    except MsrdlError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    report.warnings = list(dict.fromkeys(report.warnings))
    report.save(out / "report.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
