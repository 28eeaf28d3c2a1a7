"""Command line interface: ``mriseg {synth,run,grid,metrics}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import io
from .config import (
    ConfigError,
    ExperimentCase,
    PipelineConfig,
    build_config,
    load_config,
    load_suite,
    reference_suite,
    parse_degradation,
)
from .core import LabelMap
from .metrics import MetricError, multi_class_report, scores
from .pipeline import StageError, run, run_experiment_grid, synthesize, write_metrics_csv
from .recon import FourierOperator

log = logging.getLogger("mriseg")


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    degradation = parse_degradation(args.degradation, seed=args.seed)
    clean, degraded, k, truth = synthesize(degradation, args.size)
    io.save_image(clean, out / "clean.pgm")
    io.save_image(degraded, out / "degraded.pgm")
    io.save_labels(truth, out / "truth.pgm")
    io.save_kspace(k, out / "kspace.bin")
    print(f"wrote clean.pgm, degraded.pgm, truth.pgm, kspace.bin to {out}")
    return 0


def _load_run_config(args):
    pairs = {}
    if args.config:
        cfg, extras = load_config(args.config)
    else:
        cfg, extras = PipelineConfig(), {}
    if args.preset:
        pairs["preset"] = args.preset
        cfg, more = build_config(pairs, cfg)
        extras = {**extras, **more}
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg, extras


def _cmd_run(args) -> int:
    cfg, extras = _load_run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = None
    source = args.kspace or args.image or extras.get("input")
    if source and (args.image or Path(source).suffix.lower() in (".pgm", ".png")):
        img = io.load_image(source)
        k = FourierOperator(*img.shape).forward(img)
    elif source:
        k = io.load_kspace(source)
    else:
        degradation = parse_degradation(extras.get("degradation", "none"), seed=cfg.seed)
        _, degraded, k, truth_map = synthesize(degradation, args.size)
        truth = truth_map.foreground()
        io.save_image(degraded, out / "degraded.pgm")
    truth_path = args.truth or extras.get("truth")
    if truth_path:
        truth = io.load_labels(truth_path) == 1

    filtered, seg, trace = run(k, cfg)
    for name, img in trace.images.items():
        if name != "segmented":
            io.save_image(img, out / f"{name}.pgm")
    io.save_labels(seg, out / "segmented.pgm")
    with open(out / "diagnostics.tsv", "w") as fh:
        for i, d in enumerate(trace.diagnostics):
            for j, line in enumerate(d.lines()):
                if i == 0 or j > 0:
                    fh.write(line + "\n")
    print(f"segmented into {seg.k} classes, breaks {', '.join(f'{b:.4f}' for b in seg.breaks)}")
    if truth is not None:
        s = scores(seg.foreground(), truth)
        image = extras.get("degradation", Path(source or "input").stem)
        write_metrics_csv(out / "metrics.csv", [[
            image, cfg.approach, f"{cfg.K:g}", f"{cfg.d_p:g}", f"{cfg.eta:g}", cfg.n_cl, cfg.n_b,
            f"{100 * s.js:.2f}", f"{100 * s.dsc:.2f}", f"{100 * s.sa:.2f}",
        ]])
        print("JS %.2f%%  DSC %.2f%%  SA %.2f%%" % s.percent())
    return 0


def _cmd_grid(args) -> int:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.suite:
        suite = load_suite(args.suite)
        if overrides:
            suite = [ExperimentCase(c.name, parse_degradation(c.image or "none", seed=args.seed),
                                    c.config.replace(**overrides), c.image, c.expected, c.extras)
                     for c in suite]
    else:
        approaches = tuple(a.strip() for a in args.approaches.split(","))
        suite = reference_suite(approaches, **overrides)
    results = run_experiment_grid(suite, args.out, size=args.size, figures=not args.no_figures)
    for r in results:
        print(",".join(r.row()))
    failed = len(suite) - len(results)
    if failed:
        print(f"{failed} case(s) failed; see {Path(args.out) / 'failures.csv'}", file=sys.stderr)
        return 1
    return 0


def _cmd_metrics(args) -> int:
    pred = io.load_labels(args.pred)
    truth = io.load_labels(args.truth)
    w = csv.writer(sys.stdout)
    if args.matching == "foreground":
        s = scores(pred == pred.max(), truth == truth.max())
        w.writerow(["JS", "DSC", "SA"])
        w.writerow([f"{v:.2f}" for v in s.percent()])
        return 0
    rep = multi_class_report(LabelMap(pred), LabelMap(truth), args.matching)
    w.writerow(["class", "JS", "DSC", "SA"])
    for cls, s in rep.per_class.items():
        w.writerow([cls, *(f"{v:.2f}" for v in s.percent())])
    w.writerow(["mean", *(f"{v:.2f}" for v in rep.mean.percent())])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mriseg", description="PDE-based denoising and segmentation of MRI-style images.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a phantom, its degraded version and k-space")
    s.add_argument("--degradation", default="noise:0.1", help="none, noise:VAR or blur:{gaussian,average,motion}")
    s.add_argument("--size", type=int, default=512)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_synth)

    r = sub.add_parser("run", help="run one case from a config file")
    r.add_argument("--config", help="key = value config file")
    r.add_argument("--preset", help="parameter row, e.g. noise0.3/modified")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--kspace", help="k-space binary file")
    src.add_argument("--image", help="image file (PGM/PNG); its transform is used as input")
    r.add_argument("--truth", help="indexed label PGM for scoring")
    r.add_argument("--size", type=int, default=512, help="phantom size when synthesizing")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("grid", help="run an experiment suite")
    g.add_argument("--suite", help="suite file with [case NAME] sections")
    g.add_argument("--approaches", default="basic,modified", help="built-in grid approaches (used without --suite)")
    g.add_argument("--size", type=int, default=512)
    g.add_argument("--seed", type=int)
    g.add_argument("--no-figures", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_grid)

    m = sub.add_parser("metrics", help="compare two label maps")
    m.add_argument("pred")
    m.add_argument("truth")
    m.add_argument("--matching", choices=("foreground", "identity", "best"), default="foreground")
    m.set_defaults(func=_cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, MetricError, io.FormatError, FileNotFoundError, PermissionError, ValueError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
