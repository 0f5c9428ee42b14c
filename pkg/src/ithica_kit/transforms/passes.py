"""Arith, Mem and MemDiv: duplicate or re-load target instructions and compare."""
from __future__ import annotations

import dataclasses
from typing import Callable, Iterable, Optional

from ..ir.types import (
    ARITH_OPS,
    TYPE_BYTES,
    BasicBlock,
    Const,
    Function,
    Instruction,
    IRModule,
    Origin,
    Var,
    original_pcs,
)
from ..ir.validate import check_module
from ..sitemap import CheckSite, CheckSiteMap
from .config import DEP, MAX, InstrumentationStats, PassConfig
from .rewrite import AddressOracle, Namer, PendingCheck, attach_reporting, eq

MEMORY_PASSES = ("Mem", "MemDiv")


def is_arith_target(ins: Instruction) -> bool:
    return ins.origin is Origin.ORIGINAL and ins.opcode in ARITH_OPS


def is_memory_target(ins: Instruction) -> bool:
    return ins.origin is Origin.ORIGINAL and ins.opcode in ("load", "store")


def dep_chain_ends(
    b: BasicBlock, is_target: Callable[[Instruction], bool] = is_arith_target
) -> set[int]:
    """Indices of targeted instructions whose result no other targeted instruction of ``b`` reads."""
    targets = [i for i, ins in enumerate(b.instructions) if is_target(ins)]
    consumed = set()
    for i in targets:
        consumed.update(b.instructions[i].uses())
    return {i for i in targets if b.instructions[i].result is None or b.instructions[i].result not in consumed}


class _Expansion:
    """What a pass inserts for one target: validation/diversity code and its comparisons."""

    __slots__ = ("code", "compares")

    def __init__(self):
        self.code: list[Instruction] = []
        # (ordinal, type, original operand, validation operand)
        self.compares: list[tuple] = []


def _expand_arith(ins: Instruction, namer: Namer, dup: dict) -> _Expansion:
    e = _Expansion()
    ops = tuple(Var(dup[o.name]) if isinstance(o, Var) and o.name in dup else o for o in ins.operands)
    r1 = namer.value(f"{ins.result}.dup")
    dup[ins.result] = r1
    e.code.append(dataclasses.replace(ins, operands=ops, result=r1, origin=Origin.VALIDATION, loc=None))
    e.compares.append((1, ins.result_type, Var(ins.result), Var(r1)))
    return e


def _reload(ins: Instruction, namer: Namer, k: int) -> tuple[Instruction, Var]:
    addr = ins.operands[0] if ins.opcode == "load" else ins.operands[1]
    base = ins.result if ins.opcode == "load" else "st"
    name = namer.value(f"{base}.v{k}")
    return Instruction("load", (addr,), name, ty=ins.ty, origin=Origin.VALIDATION), Var(name)


def _original_value(ins: Instruction):
    return Var(ins.result) if ins.opcode == "load" else ins.operands[0]


def _expand_mem(ins: Instruction, namer: Namer, dup: dict) -> _Expansion:
    e = _Expansion()
    load, v = _reload(ins, namer, 1)
    e.code.append(load)
    e.compares.append((1, ins.ty, _original_value(ins), v))
    return e


def _expand_memdiv(ins: Instruction, namer: Namer, dup: dict) -> _Expansion:
    e = _Expansion()
    addr = ins.operands[0] if ins.opcode == "load" else ins.operands[1]
    flush = Instruction("clflush", (addr,), origin=Origin.DIVERSITY)
    fence = Instruction("mfence", (), origin=Origin.DIVERSITY)
    if ins.opcode == "load":
        plan = [None, flush, None]
    else:
        plan = [None, fence, None, flush, None]
    k = 0
    for step in plan:
        if step is not None:
            e.code.append(step)
            continue
        k += 1
        load, v = _reload(ins, namer, k)
        e.code.append(load)
        e.compares.append((k, ins.ty, _original_value(ins), v))
    return e


_PASSES = {
    "Arith": (is_arith_target, _expand_arith),
    "Mem": (is_memory_target, _expand_mem),
    "MemDiv": (is_memory_target, _expand_memdiv),
}


def _address(ins: Instruction):
    return ins.operands[0] if ins.opcode == "load" else ins.operands[1]


def _already(m: IRModule, pass_name: str) -> bool:
    if pass_name in MEMORY_PASSES:
        return any(p in m.instrumented for p in MEMORY_PASSES)
    return pass_name in m.instrumented


def next_site(m: IRModule) -> int:
    """First check-site id above every report_error site already in ``m``."""
    hi = -1
    for fn in m.functions:
        for b in fn.blocks:
            for ins in b.instructions:
                if ins.opcode == "report_error" and ins.operands and isinstance(ins.operands[0], Const):
                    hi = max(hi, ins.operands[0].value)
    return hi + 1


def require_valid(m: IRModule) -> None:
    check_module(m)


def data_pass(m: IRModule, cfg: PassConfig, pass_name: str) -> tuple[IRModule, CheckSiteMap, InstrumentationStats]:
    before = m.instruction_count()
    stats = InstrumentationStats(instructions_before=before, instructions_after=before)
    if _already(m, pass_name):
        return m, CheckSiteMap(), stats
    is_target, expand = _PASSES[pass_name]
    pcs = original_pcs(m)
    site_id = next_site(m)
    sites = CheckSiteMap()
    stats.originals_targeted[pass_name] = 0
    functions = []
    for fn in m.functions:
        namer = Namer(fn)
        aliases = AddressOracle(fn) if pass_name in MEMORY_PASSES else None
        blocks = list(fn.blocks)
        tail: list[BasicBlock] = []
        pos = 0
        while pos < len(blocks):
            b = blocks[pos]
            body = b.body
            targets = [i for i, ins in enumerate(body) if is_target(ins)]
            if not targets:
                pos += 1
                continue
            stats.originals_targeted[pass_name] += len(targets)
            if cfg.block_size == DEP:
                checked = dep_chain_ends(BasicBlock(b.label, body), is_target)
            else:
                checked = {t for k, t in enumerate(targets, 1) if k % cfg.block_size == 0}
            group = len(targets) if cfg.interleaving == MAX else cfg.interleaving
            target_set = set(targets)
            dup: dict[str, str] = {}
            out: list[Instruction] = []
            checks: list[PendingCheck] = []
            pending: list[int] = []

            def flush() -> None:
                nonlocal site_id
                eqs = []
                for i in pending:
                    ins = body[i]
                    e = expand(ins, namer, dup)
                    out.extend(e.code)
                    for ins_ in e.code:
                        if ins_.origin is Origin.VALIDATION:
                            stats.validations_inserted += 1
                        else:
                            stats.diversity_inserted += 1
                    if i not in checked:
                        continue
                    for ordinal, ty, orig, val in e.compares:
                        c = namer.value("chk")
                        eqs.append(eq(c, ty, orig, val))
                        sites.add(
                            CheckSite(
                                site_id,
                                pcs[(fn.name, b.label, i)],
                                fn.name,
                                b.label,
                                ins.opcode,
                                pass_name,
                                ordinal=ordinal,
                                ty=ins.ty,
                                pred=ins.pred,
                            )
                        )
                        checks.append(PendingCheck(c, site_id, orig, (val,)))
                        site_id += 1
                out.extend(eqs)
                stats.checks_inserted += len(eqs)
                pending.clear()

            for i, ins in enumerate(body):
                if aliases is not None and pending and ins.opcode == "store":
                    w = TYPE_BYTES[ins.ty]
                    if any(
                        aliases.may_alias(_address(ins), w, _address(body[j]), TYPE_BYTES[body[j].ty])
                        for j in pending
                    ):
                        flush()
                out.append(ins)
                if i in target_set:
                    pending.append(i)
                    if len(pending) == group:
                        flush()
            if pending:
                flush()
            stats.reporting_blocks_added += attach_reporting(blocks, pos, out, checks, namer, tail)
            pos += 1
        functions.append(Function(fn.name, fn.params, fn.ret_type, tuple(blocks + tail)))
    out_m = dataclasses.replace(m, functions=tuple(functions), instrumented=m.instrumented + (pass_name,))
    stats.instructions_after = out_m.instruction_count()
    return out_m, sites, stats


def _default(cfg: Optional[PassConfig], pass_name: str) -> PassConfig:
    if cfg is None:
        return PassConfig((pass_name,))
    if pass_name not in cfg.passes:
        raise ValueError(f"configuration does not select {pass_name}")
    return cfg


def instrument_arith(m: IRModule, cfg: Optional[PassConfig] = None):
    """Duplicate every arithmetic-category original and compare the two results."""
    require_valid(m)
    return data_pass(m, _default(cfg, "Arith"), "Arith")


def instrument_mem(m: IRModule, cfg: Optional[PassConfig] = None):
    """Re-load the address of every load and store and compare with the original value."""
    require_valid(m)
    return data_pass(m, _default(cfg, "Mem"), "Mem")


def instrument_memdiv(m: IRModule, cfg: Optional[PassConfig] = None):
    """Like :func:`instrument_mem`, with fences and flushes steering each re-load to a different level."""
    require_valid(m)
    return data_pass(m, _default(cfg, "MemDiv"), "MemDiv")


def count_checked(sites: Iterable[CheckSite]) -> int:
    """Number of distinct checked originals (MemDiv emits several sites per original)."""
    return len({(s.pass_name, s.pc) for s in sites})
