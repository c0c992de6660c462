"""Command-line entry point.

Exit codes: 0 success, 2 configuration or parse error, 3 herald never
fires, 4 rank-deficient fit.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import warnings
from pathlib import Path

from noonsim import __version__
from noonsim.analysis import (
    FomInput,
    NegativeRateWarning,
    RankDeficientError,
    fit_column,
    fom_approx,
    fom_exact,
    hom_scan,
    hwp2_calibration_scan,
    subtract_triple_pair,
)
from noonsim.config import (
    MANIFEST_KEY,
    PRESET_NAMES,
    ConfigError,
    ExperimentConfig,
    build_preset,
    load_config,
    overlap_model,
    shipped_config,
    shipped_config_names,
)
from noonsim.detection import (
    COLUMNS,
    FringeTable,
    fringe_scan,
    herald_singles_probability,
    herald_success_probability,
    mc_sample_counts,
)

EXIT_CONFIG = 2
EXIT_HERALD = 3
EXIT_RANK = 4


class HeraldError(RuntimeError):
    pass


def _write_rows(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    path.write_text(buf.getvalue())


def simulate(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run the configured experiment, write its table and manifest; return the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    axis = cfg.scan.axis()
    manifest = {
        MANIFEST_KEY: 1,
        "version": __version__,
        "seed": cfg.scan.seed,
        "config": cfg.to_dict(),
    }
    if cfg.preset == "hom":
        scan = hom_scan(overlap_model(cfg), axis)
        _write_rows(out_dir / "hom.csv", ("delay", "p_coincidence"), scan)
        manifest["table"] = "hom.csv"
        manifest["dip_visibility"] = 1.0 - min(p for _, p in scan) / 0.5
    elif cfg.preset == "hwp2-cal":
        preset = build_preset(cfg)
        scan = hwp2_calibration_scan(preset, axis)
        _write_rows(out_dir / "hwp2_cal.csv", ("hwp2_deg", "p_fourfold"), scan)
        manifest["table"] = "hwp2_cal.csv"
    else:
        preset = build_preset(cfg)
        singles = herald_singles_probability(preset)
        if singles < 1e-14:
            raise HeraldError("herald detector(s) never fire for this configuration")
        if cfg.output.analytic_only:
            table = fringe_scan(preset, axis)
        else:
            table = mc_sample_counts(
                preset, axis, cfg.scan.pulses_per_point, cfg.scan.seed, cfg.scan.workers
            )
        table.to_csv(out_dir / "fringe.csv")
        manifest["table"] = "fringe.csv"
        manifest["herald_success_probability"] = herald_success_probability(preset)
        manifest["herald_singles_probability"] = singles
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _apply_overrides(cfg: ExperimentConfig, args, preset: str | None = None) -> ExperimentConfig:
    scan, output = cfg.scan, cfg.output
    if args.seed is not None:
        scan = dataclasses.replace(scan, seed=args.seed)
    if args.pulses is not None:
        scan = dataclasses.replace(scan, pulses_per_point=args.pulses)
    if args.workers is not None:
        scan = dataclasses.replace(scan, workers=args.workers)
    if args.analytic_only:
        output = dataclasses.replace(output, analytic_only=True)
    if args.out is not None:
        output = dataclasses.replace(output, dir=args.out)
    return dataclasses.replace(cfg, scan=scan, output=output, preset=preset or cfg.preset)


def _load(args, preset: str | None = None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif preset in ("hom", "hwp2-cal"):
        cfg = shipped_config(preset)
    else:
        cfg = ExperimentConfig()
    return _apply_overrides(cfg, args, preset)


def cmd_simulate(args, preset: str | None = None) -> int:
    cfg = _load(args, preset)
    manifest = simulate(cfg, Path(cfg.output.dir))
    print(f"table = {Path(cfg.output.dir) / manifest['table']}")
    for key in ("herald_success_probability", "herald_singles_probability", "dip_visibility"):
        if key in manifest:
            print(f"{key} = {manifest[key]!r}")
    return 0


def cmd_fit(args) -> int:
    try:
        table = FringeTable.from_csv(args.csv)
        res = fit_column(table, args.column, args.k, args.weights)
    except RankDeficientError as exc:  # a ValueError subclass, so test it first
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(f"column = {args.column}\n" + res.to_record())
    return 0


def cmd_fom(args) -> int:
    try:
        f = FomInput(args.scheme, args.gamma, args.alpha)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = fom_exact(f, args.kind) if args.mode == "exact" else fom_approx(f)
    print(f"scheme = {args.scheme}")
    print(f"mode = {args.mode}")
    print(f"ratio = {res.ratio!r}")
    print(f"p_exact = {res.p_exact!r}")
    print(f"p_excess = {res.p_excess!r}")
    return 0


def _visibility_k3(table: FringeTable) -> float:
    col = "c_fourfold" if table.has_counts else "p_fourfold"
    return fit_column(table, col, 3).visibility


def cmd_background_subtract(args) -> int:
    try:
        table = FringeTable.from_csv(args.csv)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NegativeRateWarning)
            corrected = subtract_triple_pair(table, args.herald_singles_prob)
        raw_v, cor_v = _visibility_k3(table), _visibility_k3(corrected)
    except RankDeficientError as exc:  # a ValueError subclass, so test it first
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.output) if args.output else Path(args.csv).with_name(
        Path(args.csv).stem + "_corrected.csv"
    )
    corrected.to_csv(out)
    print(f"output = {out}")
    print(f"visibility_raw = {raw_v!r}")
    print(f"visibility_corrected = {cor_v!r}")
    return 0


def cmd_presets(args) -> int:
    print("presets = " + ", ".join(PRESET_NAMES))
    for name in shipped_config_names():
        print(f"\n[{name}]")
        print(json.dumps(shipped_config(name).to_dict(), indent=2, sort_keys=True))
    return 0


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="JSON config or run manifest")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--analytic-only", action="store_true", help="skip Monte Carlo sampling")
    p.add_argument("--pulses", type=int, metavar="N", help="pulses per scan point")
    p.add_argument("--workers", type=int, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noonsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="fringe scan (or the configured preset)")
    _run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hom", help="HOM delay scan")
    _run_flags(p)
    p.set_defaults(func=lambda a: cmd_simulate(a, "hom"))

    p = sub.add_parser("hwp2-cal", help="four-fold probability vs HWP2 angle")
    _run_flags(p)
    p.set_defaults(func=lambda a: cmd_simulate(a, "hwp2-cal"))

    p = sub.add_parser("fit", help="fixed-frequency sinusoid fit of a table column")
    p.add_argument("csv")
    p.add_argument("--column", default="p_fourfold", choices=COLUMNS[2:])
    p.add_argument("-k", "--frequency", dest="k", type=int, default=3)
    p.add_argument("--weights", choices=("poisson", "uniform"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fom", help="excess-photon figure of merit")
    p.add_argument("--scheme", choices=("double-pair", "pair-plus-coherent"), default="double-pair")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=("exact", "approx"), default="approx")
    p.add_argument("--kind", choices=("thermal", "poissonian"), default="thermal")
    p.set_defaults(func=cmd_fom)

    p = sub.add_parser("background-subtract", help="remove the triple-pair background")
    p.add_argument("csv")
    p.add_argument("--herald-singles-prob", type=float, required=True)
    p.add_argument("-o", "--output", metavar="PATH")
    p.set_defaults(func=cmd_background_subtract)

    p = sub.add_parser("presets", help="list presets and shipped configs")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeraldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HERALD


if __name__ == "__main__":
    sys.exit(main())
