"""Command-line front end.

    dispcancel simulate CONFIG [--out DIR] [--set key=value ...]
    dispcancel analyze CONFIG [--frames PATH] [--out DIR] [--set key=value ...]
    dispcancel reproduce {fig2,fig3a,fig3b} [--out DIR] [--set key=value ...]
    dispcancel validate-config CONFIG [--mode simulate|analyze] [--set key=value ...]

Exit status: 0 on success, 2 for invalid input (config, CSV parse, argument
errors), 3 when a pipeline stage fails.

The output directory is ``--out`` if given, else ``$DISPCANCEL_OUTPUT_ROOT/<scenario.name>``
if that variable is set, else ``output.dir`` from the config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, load_config, parse_value, validate
from .errors import DispCancelError, ParseError, PipelineError, ValidationError
from .pipeline import FIGURES, reproduce_figure, run_scenario

ENV_OUTPUT_ROOT = "DISPCANCEL_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PIPELINE = 3

log = logging.getLogger("dispcancel")


def _parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, text = item.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = parse_value(text.strip())
    return out


def output_dir(flag, scenario_name: str, cfg: ScenarioConfig | None) -> Path:
    if flag is not None:
        return Path(flag)
    root = os.environ.get(ENV_OUTPUT_ROOT)
    if root:
        return Path(root) / scenario_name
    return Path(cfg["output.dir"]) if cfg is not None else Path("out") / scenario_name


def _summary(report: dict) -> dict:
    fit = report.get("s_filtered_fit", {})
    ti = report.get("total_intensity", {})
    return {
        "scenario": report.get("scenario"),
        "s_fwhm_um": fit.get("fwhm", {}).get("value", float("nan")) * 1e6,
        "s_center_um": fit.get("center", {}).get("value", float("nan")) * 1e6,
        "s_visibility": fit.get("visibility", {}).get("value"),
        "total_intensity_fwhm_um": ti.get("fwhm", {}).get("value", float("nan")) * 1e6,
    }


def _cmd_run(args, mode):
    overrides = _parse_sets(args.set)
    if mode == "analyze" and args.frames is not None:
        overrides["input.frames_csv"] = str(Path(args.frames).resolve())
    if args.seed is not None:
        overrides["noise.seed"] = args.seed
    cfg = load_config(args.config, overrides)
    validate(cfg, mode)
    out = output_dir(args.out, cfg["scenario.name"], cfg)
    result = run_scenario(cfg, out, mode=mode)
    print(json.dumps(_summary(result.report), indent=2))
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_simulate(args):
    return _cmd_run(args, "simulate")


def cmd_analyze(args):
    return _cmd_run(args, "analyze")


def cmd_reproduce(args):
    overrides = _parse_sets(args.set)
    out = output_dir(args.out, args.figure, None)
    summary = reproduce_figure(args.figure, out, overrides)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_validate(args):
    cfg = load_config(args.config, _parse_sets(args.set))
    validate(cfg, args.mode)
    print(f"{args.config}: ok ({args.mode})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dispcancel", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        if with_config:
            sp.add_argument("config", help="scenario file (key = value, TOML syntax)")
        sp.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config key (repeatable), e.g. --set medium.thickness_mm=[16.8]",
        )

    sp = sub.add_parser("simulate", help="simulate frames from a model source and run the pipeline")
    common(sp)
    sp.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT_ROOT}/<scenario> or output.dir)")
    sp.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="ingest frame CSVs and run the pipeline")
    common(sp)
    sp.add_argument("--frames", help="frame CSV file or directory (overrides input.frames_csv)")
    sp.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT_ROOT}/<scenario> or output.dir)")
    sp.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("reproduce", help="run the built-in figure scenarios and write tables")
    sp.add_argument("figure", choices=FIGURES)
    common(sp, with_config=False)
    sp.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT_ROOT}/<figure> or out/<figure>)")
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("validate-config", help="check a scenario file without running it")
    common(sp)
    sp.add_argument("--mode", choices=("simulate", "analyze"), default="simulate")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse itself exits with 2 on bad usage
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        # unreadable input files are an input problem even when found mid-run
        return EXIT_VALIDATION if isinstance(exc.__cause__, ParseError) else EXIT_PIPELINE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DispCancelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
