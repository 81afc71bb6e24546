"""Command line entry point: ``chipqa run | synth | rsf``.

Exit status is 0 on success, 1 on any error, and 2 when ``run`` finished
but at least one chip carries a fail flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ChipQAError, ConfigError, ParseError
from .ingest import load_chipset
from .landscape import CLI_CHANNELS
from .metrics import Thresholds, parse_expression_table, parse_thresholds
from .pipeline import PipelineConfig, run_pipeline, run_rsf
from .plm import PlmConfig
from .preprocess import parse_target
from .report import emit_report, emit_rsf_report
from .synthgen import spec_from_dict, write_synth

log = logging.getLogger("chipqa")

EXIT_OK, EXIT_ERROR, EXIT_FAIL_FLAG = 0, 1, 2


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as err:
        raise ChipQAError(f"cannot read {path}: {err.strerror}") from err


def _reader_for(manifest_path):
    base = os.path.dirname(os.path.abspath(manifest_path))

    def read(rel):
        return _read(rel if os.path.isabs(rel) else os.path.join(base, rel))

    return read


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _color_keys(path):
    keys = {}
    for lineno, line in enumerate(_read(path).split("\n"), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\r").split("\t")
        if len(parts) != 2:
            raise ParseError("color-by rows must be 'chip\\tkey'", line=lineno, context=path)
        keys[parts[0]] = parts[1]
    return keys


def _add_fit_options(p):
    p.add_argument("--manifest", required=True, help="run manifest TSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--background", default="none", help="none | offset:<c>")
    p.add_argument("--target", default="self", help="self | path to a saved target TSV")
    p.add_argument("--huber-k", type=float, default=1.345)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--ignore-unmapped", action="store_true",
                   help="skip chip-file coordinates that hold no layout probe")


def build_parser():
    parser = argparse.ArgumentParser(prog="chipqa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="quality report for one chip set")
    _add_fit_options(run)
    run.add_argument("--formats", default="csv,json,svg,png")
    run.add_argument("--color-by", help="TSV of chip<TAB>group key for box colors")
    run.add_argument("--thresholds", help="key = value file overriding flag thresholds")
    run.add_argument("--landscapes", default="", help="comma list of weights,pos,neg,signed")
    run.add_argument("--palette", choices=("color", "gray"), default="color")
    run.add_argument("--scale", type=int, default=1, help="integer pixel upscaling of landscapes")
    run.add_argument("--expressions", help="external log2 expression TSV used for RLE")
    run.add_argument("--scale-factor-constant", type=float, default=500.0)

    synth = sub.add_parser("synth", help="write a synthetic chip set")
    synth.add_argument("--spec", required=True, help="JSON synth spec")
    synth.add_argument("--out", required=True)

    rsf = sub.add_parser("rsf", help="residual scale factors per manifest batch")
    _add_fit_options(rsf)
    return parser


def _config(args, thresholds=Thresholds(), sf_constant=500.0):
    target = None if args.target == "self" else parse_target(_read(args.target))
    return PipelineConfig(
        background=args.background,
        target=target,
        plm=PlmConfig(args.huber_k, args.tol, args.max_iter),
        thresholds=thresholds,
        scale_factor_constant=sf_constant,
    )


def _cmd_run(args):
    landscapes = _csv_list(args.landscapes)
    bad = [c for c in landscapes if c not in CLI_CHANNELS]
    if bad:
        raise ConfigError(f"unknown landscape channel(s): {', '.join(bad)}")
    thresholds = parse_thresholds(_read(args.thresholds)) if args.thresholds else Thresholds()
    config = _config(args, thresholds, args.scale_factor_constant)
    chipset = load_chipset(_read(args.manifest), _reader_for(args.manifest), args.ignore_unmapped)
    expressions = parse_expression_table(_read(args.expressions)) if args.expressions else None
    results = run_pipeline(chipset, config, expressions)
    group_keys = _color_keys(args.color_by) if args.color_by else None
    report = emit_report(results, args.out, _csv_list(args.formats), landscapes, args.palette,
                         args.scale, group_keys)
    failed = [s.chip_name for s in results.summaries if s.failed]
    for s in results.summaries:
        for f in s.flags:
            log.info("%s: %s", s.chip_name, f.describe())
    log.info("wrote %d files to %s", len(report.files), args.out)
    if failed:
        log.warning("fail flags on: %s", ", ".join(failed))
        return EXIT_FAIL_FLAG
    return EXIT_OK


def _cmd_synth(args):
    try:
        spec = spec_from_dict(json.loads(_read(args.spec)))
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err.msg}", line=err.lineno, context=args.spec) from None
    except TypeError as err:
        raise ConfigError(str(err), context=args.spec) from None
    manifest = write_synth(spec, args.out)
    log.info("wrote %s", manifest)
    return EXIT_OK


def _cmd_rsf(args):
    config = _config(args)
    chipset = load_chipset(_read(args.manifest), _reader_for(args.manifest), args.ignore_unmapped)
    batches = run_rsf(chipset, config)
    emit_rsf_report(batches, args.out, config.echo())
    for b in batches:
        log.info("%s: rsf=%r nrsf=%r", b.batch_name, b.rsf, b.nrsf)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="chipqa: %(levelname)s: %(message)s")
    logging.captureWarnings(True)
    handler = {"run": _cmd_run, "synth": _cmd_synth, "rsf": _cmd_rsf}[args.command]
    try:
        return handler(args)
    except ChipQAError as err:
        print(f"chipqa: error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"chipqa: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
