"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 input error (unreadable or invalid
file), 3 detections present (``run --fail-on-detect``).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .campaign import CampaignConfigError, load_config, parse_report, run_campaign, serialize_report
from .campaign.report import SCHEMA_VERSION as REPORT_SCHEMA
from .ir import ParseError, ProgramInput, gen_random_program, parse_module, print_module, validate_module
from .ir.types import TYPE_BITS
from .microsim import FaultSpecError, load_faults, run
from .microsim.interp import DEFAULT_BUDGET
from .sitemap import CheckSiteMap
from .transforms import ConfigError, PassConfig, instrument

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_DETECTED = 0, 1, 2, 3
LOG_ENV = "ITHACA_KIT_LOG"

log = logging.getLogger("ithica_kit")


class InputError(Exception):
    """A file could not be read or does not hold what it should."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path, data) -> None:
    """Write via a temp file in the target directory and rename, so readers never see partial output."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from None


def _module(path):
    try:
        return parse_module(_read(path))
    except ParseError as e:
        raise InputError(f"{path}:{e}") from None


def _site_map(path) -> CheckSiteMap:
    try:
        return CheckSiteMap.from_json(_read(path))
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{path}: bad check-site map: {e}") from None


def _faults(path):
    try:
        return load_faults(_read(path))
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{path}: bad fault specification: {e}") from None


def _int(text: str) -> int:
    return int(text, 0)


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _args_from_text(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(a, 0) for a in text.split(",") if a.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad argument list {text!r}") from None


# -- subcommands -------------------------------------------------------------------


def cmd_instrument(ns) -> int:
    try:
        cfg = PassConfig(ns.passes, ns.interleaving, ns.block_size)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_USAGE
    src = Path(ns.input)
    m = _module(src)
    im, sites, stats = instrument(m, cfg)
    stem = f"{src.stem}-{cfg.suffix}"
    out = Path(ns.output) if ns.output else src.with_name(f"{stem}.sir")
    map_path = Path(ns.map) if ns.map else src.with_name(f"{stem}.map.json")
    stats_path = Path(ns.stats) if ns.stats else src.with_name(f"{stem}.stats.json")
    write_atomic(out, print_module(im))
    write_atomic(map_path, sites.to_json())
    write_atomic(stats_path, stats.to_json())
    print(out)
    return EXIT_OK


def _default_args(m, seed: int) -> tuple[int, ...]:
    rng = np.random.default_rng(np.random.SeedSequence(seed & ((1 << 64) - 1)))
    return tuple(int(rng.integers(0, 1 << TYPE_BITS[ty], dtype=np.uint64)) for _, ty in m.entry.params)


def cmd_run(ns) -> int:
    path = Path(ns.module)
    m = _module(path)
    if ns.map:
        sites = _site_map(ns.map)
    else:
        guess = path.with_suffix(".map.json")
        sites = _site_map(guess) if guess.exists() else None
    faults = _faults(ns.faults) if ns.faults else []
    args = ns.args if ns.args is not None else _default_args(m, ns.seed)
    if len(args) != len(m.entry.params):
        log.error("entry function takes %d arguments, got %d", len(m.entry.params), len(args))
        return EXIT_USAGE
    out = run(
        m,
        ProgramInput(ns.seed, args),
        faults,
        ns.budget,
        trace=ns.trace is not None,
        site_map=sites,
        halt_on_error=ns.halt_on_error,
        rng=np.random.default_rng(np.random.SeedSequence(ns.seed & ((1 << 64) - 1), spawn_key=(0, 1))),
    )
    for e in out.detections:
        print(json.dumps(e.to_json(), sort_keys=True))
    if ns.trace is not None:
        write_atomic(ns.trace, "".join(json.dumps(r, sort_keys=True) + "\n" for r in out.trace))
    summary = {
        "status": out.status.value,
        "return_value": out.return_value,
        "trap_reason": out.trap_reason,
        "steps": out.steps_executed,
        "detections": len(out.detections),
        "faults_fired": out.faults_fired,
    }
    print(json.dumps({"outcome": summary}, sort_keys=True))
    if ns.fail_on_detect and out.detections:
        return EXIT_DETECTED
    return EXIT_OK


def cmd_campaign(ns) -> int:
    try:
        cfg = load_config(ns.config)
    except (CampaignConfigError, ConfigError, FaultSpecError) as e:
        raise InputError(f"{ns.config}: {e}") from None
    except ParseError as e:
        raise InputError(f"{ns.config}: variant module: {e}") from None
    except OSError as e:
        raise InputError(f"{ns.config}: {e}") from None
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{ns.config}: malformed campaign config: {e}") from None
    if ns.seed is not None or ns.runs is not None:
        cfg = dataclasses.replace(
            cfg,
            seed=cfg.seed if ns.seed is None else ns.seed,
            runs=cfg.runs if ns.runs is None else ns.runs,
        )
    report = run_campaign(cfg, jobs=ns.jobs)
    data = serialize_report(report, "json")
    if ns.output:
        write_atomic(ns.output, data)
    else:
        sys.stdout.write(data.decode())
    if ns.csv:
        write_atomic(ns.csv, serialize_report(report, "csv"))
    return EXIT_OK


def cmd_fuzz(ns) -> int:
    if ns.size < 1:
        log.error("--size must be at least 1")
        return EXIT_USAGE
    if ns.count == 1:
        text = print_module(gen_random_program(ns.seed, ns.size))
        if ns.output:
            write_atomic(ns.output, text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    out_dir = Path(ns.output or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(ns.count):
        write_atomic(out_dir / f"fuzz-{ns.seed + k}.sir", print_module(gen_random_program(ns.seed + k, ns.size)))
    return EXIT_OK


def _text_summary(report) -> str:
    lines = [f"schema_version {REPORT_SCHEMA}, tool {report.tool_version}"]
    for v in report.variants:
        lines.append(
            f"{v.name}: runs={v.runs_total} detected={v.runs_with_detection} detections={v.total_detections} "
            f"native={v.native_detections} crashes={v.count_status('Trapped')} hangs={v.count_status('HungAtBudget')}"
        )
        for metric in v.metrics():
            value = "n/a" if metric.value is None else f"{float(metric.value):.4f}"
            scope = f"[{metric.opcode}]" if metric.opcode else ""
            lines.append(f"  {metric.name}{scope} = {value} {metric.units}")
    return "\n".join(lines) + "\n"


def cmd_report(ns) -> int:
    try:
        report = parse_report(_read(ns.report))
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{ns.report}: bad report: {e}") from None
    data = _text_summary(report).encode() if ns.format == "text" else serialize_report(report, ns.format)
    if ns.output:
        write_atomic(ns.output, data)
    else:
        sys.stdout.write(data.decode())
    return EXIT_OK


def cmd_validate(ns) -> int:
    text = _read(ns.module)
    try:
        m = parse_module(text, validate=False)
    except ParseError as e:
        print(f"{ns.module}:{e}")
        return EXIT_INPUT
    problems = validate_module(m)
    if not problems:
        print(f"{ns.module}: ok")
        return EXIT_OK
    for v in problems:
        print(f"{ns.module}: {v.function}/{v.block}[{v.index}]: {v.rule}: {v.message}")
    return EXIT_INPUT


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ithica-kit", description="Instrument, simulate and test IR programs for silent errors.")
    p.add_argument("--version", action="version", version=f"ithica-kit {__version__} (report schema {REPORT_SCHEMA})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("instrument", help="apply instrumentation passes to a module")
    s.add_argument("input", help="input .sir module")
    s.add_argument("--pass", dest="passes", default="arith", help="comma-separated passes: arith, mem|memdiv, br (default: arith)")
    s.add_argument("--block-size", default="1", help="check every N-th target, or 'dep' (default: 1)")
    s.add_argument("--interleaving", default="1", help="originals per validation group, or 'max' (default: 1)")
    s.add_argument("-o", "--output", help="instrumented module (default: <input>-<Passes>.sir)")
    s.add_argument("--map", help="check-site map (default: <input>-<Passes>.map.json)")
    s.add_argument("--stats", help="statistics (default: <input>-<Passes>.stats.json)")
    s.set_defaults(fn=cmd_instrument)

    s = sub.add_parser("run", help="execute a module once, optionally under faults")
    s.add_argument("module", help=".sir module")
    s.add_argument("--map", help="check-site map (default: <module>.map.json when present)")
    s.add_argument("--faults", help="fault specification JSON (default: no faults)")
    s.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET, help=f"step budget (default: {DEFAULT_BUDGET})")
    s.add_argument("--args", type=_args_from_text, help="comma-separated entry arguments (default: drawn from --seed)")
    s.add_argument("--seed", type=_int, default=0, help="seed for default arguments and fault coin flips (default: 0)")
    s.add_argument("--trace", metavar="FILE", help="write a JSON-lines step trace to FILE (default: off)")
    s.add_argument("--halt-on-error", action="store_true", help="stop at the first detection (default: continue)")
    s.add_argument("--fail-on-detect", action="store_true", help="exit with status 3 when anything was detected")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("campaign", help="run a campaign described by a JSON config")
    s.add_argument("--config", required=True, help="campaign config JSON")
    s.add_argument("-o", "--output", help="report JSON (default: stdout)")
    s.add_argument("--csv", help="also write the per-opcode CSV table here (default: off)")
    s.add_argument("--jobs", type=_positive, default=1, help="worker processes; the report is identical for any value (default: 1)")
    s.add_argument("--seed", type=_int, help="override the config seed")
    s.add_argument("--runs", type=_positive, help="override the config run count")
    s.set_defaults(fn=cmd_campaign)

    s = sub.add_parser("fuzz", help="generate random valid programs")
    s.add_argument("--seed", type=_int, default=0, help="generator seed (default: 0)")
    s.add_argument("--size", type=int, default=50, help="instruction budget (default: 50)")
    s.add_argument("--count", type=_positive, default=1, help="number of programs, seeds seed..seed+count-1 (default: 1)")
    s.add_argument("-o", "--output", help="output file, or directory when --count > 1 (default: stdout / .)")
    s.set_defaults(fn=cmd_fuzz)

    s = sub.add_parser("report", help="render or convert a campaign report")
    s.add_argument("report", help="report JSON")
    s.add_argument("--format", choices=("json", "csv", "text"), default="text", help="output format (default: text)")
    s.add_argument("-o", "--output", help="output file (default: stdout)")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("validate", help="check a module for syntax, type, SSA and CFG errors")
    s.add_argument("module", help=".sir module")
    s.set_defaults(fn=cmd_validate)
    return p


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return ns.fn(ns)
    except InputError as e:
        print(f"ithica-kit: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
