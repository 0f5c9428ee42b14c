"""Instrumentation passes that insert validation, check, diversity and reporting code."""
from __future__ import annotations

from ..ir.types import IRModule
from ..sitemap import CheckSiteMap
from .branch import TOKEN_BASE, br_pass, instrument_br, slot_name
from .config import (
    DEP,
    MAX,
    PASS_ORDER,
    ConfigError,
    InstrumentationStats,
    PassConfig,
    canonical_pass,
    parse_passes,
)
from .passes import (
    count_checked,
    data_pass,
    dep_chain_ends,
    instrument_arith,
    instrument_mem,
    instrument_memdiv,
    is_arith_target,
    is_memory_target,
    require_valid,
)


def instrument(m: IRModule, cfg: PassConfig) -> tuple[IRModule, CheckSiteMap, InstrumentationStats]:
    """Apply the passes of ``cfg`` in the fixed order Arith, Mem/MemDiv, Br."""
    require_valid(m)
    total = InstrumentationStats(instructions_before=m.instruction_count(), instructions_after=m.instruction_count())
    sites = CheckSiteMap()
    for name in cfg.passes:
        if name == "Br":
            m, s, st = br_pass(m)
        else:
            m, s, st = data_pass(m, cfg, name)
        sites = sites.merged(s)
        total.absorb(st)
    return m, sites, total


def instrument_combined(m: IRModule, cfg: PassConfig) -> tuple[IRModule, CheckSiteMap, InstrumentationStats]:
    if len(cfg.passes) < 2:
        raise ConfigError("a combination needs at least two passes")
    return instrument(m, cfg)


__all__ = [
    "DEP",
    "MAX",
    "PASS_ORDER",
    "TOKEN_BASE",
    "ConfigError",
    "InstrumentationStats",
    "PassConfig",
    "canonical_pass",
    "count_checked",
    "dep_chain_ends",
    "instrument",
    "instrument_arith",
    "instrument_br",
    "instrument_combined",
    "instrument_mem",
    "instrument_memdiv",
    "is_arith_target",
    "is_memory_target",
    "parse_passes",
    "slot_name",
]
