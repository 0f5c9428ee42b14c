"""Campaign execution.

Every run ``i`` draws its input from ``SeedSequence(seed, spawn_key=(i,))``
and its fault coin flips from ``SeedSequence(seed, spawn_key=(i, 1))``.
Neither stream depends on the variant, so all variants of one campaign see
the same inputs and the same coin flips, and adding a variant leaves the
others untouched.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..ir import parse_module
from ..ir.types import IRModule, Origin, ProgramInput, TYPE_BITS
from ..microsim import FaultSpec, dump_faults, load_faults, run
from ..microsim.interp import DEFAULT_BUDGET
from ..sitemap import CheckSiteMap
from ..transforms import PassConfig, instrument
from .report import CampaignReport, OpcodeSites, RunRecord, VariantReport

log = logging.getLogger(__name__)


class CampaignConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Variant:
    name: str
    module: IRModule
    site_map: Optional[CheckSiteMap] = None


@dataclass(frozen=True)
class InputPolicy:
    """``fresh``: new random arguments every run; ``fixed``: the same input every run."""

    mode: str = "fresh"
    fixed: Optional[ProgramInput] = None
    # fresh arguments are drawn below this bound (full type range when None)
    arg_bound: Optional[int] = None
    # fresh mode only: also replace the initial contents of program globals
    randomize_memory: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("fresh", "fixed"):
            raise CampaignConfigError(f"unknown input policy {self.mode!r}")
        if self.mode == "fixed" and self.fixed is None:
            raise CampaignConfigError("fixed input policy needs an input")
        if self.arg_bound is not None and self.arg_bound < 1:
            raise CampaignConfigError("arg_bound must be positive")

    def to_json(self) -> dict:
        d = {"policy": self.mode}
        if self.mode == "fixed":
            d["args"] = list(self.fixed.arg_values)
            d["seed"] = self.fixed.seed
        else:
            d["arg_bound"] = self.arg_bound
            d["randomize_memory"] = self.randomize_memory
        return d


@dataclass(frozen=True)
class CampaignConfig:
    variants: tuple[Variant, ...]
    faults: tuple[FaultSpec, ...] = ()
    runs: int = 100
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    inputs: InputPolicy = field(default_factory=InputPolicy)
    halt_on_error: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "faults", tuple(self.faults))
        if self.runs < 1:
            raise CampaignConfigError("runs must be >= 1")
        if self.budget < 1:
            raise CampaignConfigError("budget must be >= 1")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise CampaignConfigError("variant names must be unique")

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "runs": self.runs,
            "budget": self.budget,
            "halt_on_error": self.halt_on_error,
            "inputs": self.inputs.to_json(),
            "faults": json.loads(dump_faults(self.faults)),
            "variants": [v.name for v in self.variants],
        }


def _seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed & ((1 << 64) - 1), spawn_key=key)


def run_input(cfg: CampaignConfig, module: IRModule, index: int) -> ProgramInput:
    """The input of run ``index``; identical for every variant with the same signature."""
    pol = cfg.inputs
    if pol.mode == "fixed":
        return pol.fixed
    seq = _seq(cfg.seed, index)
    rng = np.random.default_rng(seq)
    args = []
    for _, ty in module.entry.params:
        hi = 1 << TYPE_BITS[ty]
        if pol.arg_bound is not None:
            hi = min(hi, pol.arg_bound)
        args.append(int(rng.integers(0, hi, dtype=np.uint64, endpoint=False)) if hi > 1 else 0)
    image = None
    if pol.randomize_memory:
        image = {g.name: rng.bytes(g.size) for g in module.program_globals()}
    return ProgramInput(int(seq.generate_state(2, np.uint64)[0]), tuple(args), image)


def fault_rng(cfg: CampaignConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(_seq(cfg.seed, index, 1))


def opcode_population(v: Variant) -> dict[str, OpcodeSites]:
    """All original PCs and blocks of each opcode that carries at least one check."""
    checked = {s.opcode for s in v.site_map} if v.site_map is not None else set()
    pcs: dict[str, list] = {op: [] for op in checked}
    blocks: dict[str, list] = {op: [] for op in checked}
    n = 0
    for fn in v.module.functions:
        for b in fn.blocks:
            for ins in b.instructions:
                if ins.origin is not Origin.ORIGINAL:
                    continue
                if ins.opcode in pcs:
                    pcs[ins.opcode].append(n)
                    blocks[ins.opcode].append(b.label)
                n += 1
    return {op: OpcodeSites(tuple(pcs[op]), tuple(sorted(set(blocks[op])))) for op in sorted(checked)}


def _one(cfg: CampaignConfig, vi: int, index: int) -> RunRecord:
    v = cfg.variants[vi]
    out = run(
        v.module,
        run_input(cfg, v.module, index),
        cfg.faults,
        cfg.budget,
        site_map=v.site_map,
        halt_on_error=cfg.halt_on_error,
        rng=fault_rng(cfg, index),
    )
    return RunRecord(
        run=index,
        status=out.status.value,
        steps=out.steps_executed,
        return_value=out.return_value,
        trap_reason=out.trap_reason,
        faults_fired=out.faults_fired,
        events=out.detections,
    )


def _chunk(args) -> list[RunRecord]:
    cfg, vi, indices = args
    return [_one(cfg, vi, i) for i in indices]


def run_campaign(cfg: CampaignConfig, jobs: int = 1) -> CampaignReport:
    """Execute every run of every variant; the report does not depend on ``jobs``."""
    tasks = []
    per = max(1, cfg.runs // max(1, 4 * jobs))
    for vi in range(len(cfg.variants)):
        for start in range(0, cfg.runs, per):
            tasks.append((cfg, vi, range(start, min(cfg.runs, start + per))))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_chunk, tasks))
    else:
        chunks = [_chunk(t) for t in tasks]
    variants = [VariantReport(v.name, opcode_population(v)) for v in cfg.variants]
    for (_, vi, _), records in zip(tasks, chunks):
        variants[vi].runs.extend(records)
    for v in variants:
        v.runs.sort(key=lambda r: r.run)
        log.info("variant %s: %d/%d runs detected", v.name, v.runs_with_detection, v.runs_total)
    return CampaignReport(cfg.summary(), variants, __version__)


# -- config files ------------------------------------------------------------------


def _load_variant(d: dict, base: Path) -> Variant:
    try:
        name = d["name"]
        if "module" in d:
            m = parse_module((base / d["module"]).read_text())
            sm = CheckSiteMap.from_json((base / d["map"]).read_text()) if d.get("map") else None
            return Variant(name, m, sm)
        m = parse_module((base / d["source"]).read_text())
    except KeyError as e:
        raise CampaignConfigError(f"variant entry lacks {e}") from None
    if not d.get("passes"):
        return Variant(name, m, None)
    pc = PassConfig(d["passes"], d.get("interleaving", 1), d.get("block_size", 1))
    im, sm, _ = instrument(m, pc)
    return Variant(name, im, sm)


def config_from_json(doc: dict, base: Path = Path(".")) -> CampaignConfig:
    """Build a config from its JSON form; relative paths resolve against ``base``."""
    faults = doc.get("faults", [])
    if isinstance(faults, str):
        faults = load_faults((base / faults).read_text())
    else:
        faults = load_faults(json.dumps(faults))
    inp = doc.get("inputs", {"policy": "fresh"})
    if inp.get("policy", "fresh") == "fixed":
        policy = InputPolicy(
            "fixed", fixed=ProgramInput(int(inp.get("seed", 0)), tuple(int(a) for a in inp.get("args", ())))
        )
    else:
        policy = InputPolicy(
            "fresh", arg_bound=inp.get("arg_bound"), randomize_memory=bool(inp.get("randomize_memory", False))
        )
    return CampaignConfig(
        variants=tuple(_load_variant(v, base) for v in doc.get("variants", [])),
        faults=tuple(faults),
        runs=int(doc.get("runs", 100)),
        seed=int(doc.get("seed", 0)),
        budget=int(doc.get("budget", DEFAULT_BUDGET)),
        inputs=policy,
        halt_on_error=bool(doc.get("halt_on_error", False)),
    )


def load_config(path) -> CampaignConfig:
    path = Path(path)
    return config_from_json(json.loads(path.read_text()), path.parent)

