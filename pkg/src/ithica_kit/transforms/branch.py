"""Br: record the expected successor before a conditional branch and verify it on arrival."""
from __future__ import annotations

import dataclasses

from ..ir.types import (
    BasicBlock,
    Const,
    Function,
    Global,
    GlobalRef,
    Instruction,
    IRModule,
    Label,
    Origin,
    Var,
    original_pcs,
    INSTRUMENTATION_PREFIX,
)
from ..sitemap import CheckSite, CheckSiteMap
from .config import InstrumentationStats
from .passes import next_site, require_valid
from .rewrite import Namer, PendingCheck, eq, report

TOKEN_BASE = 0xB0000


def slot_name(fn_name: str) -> str:
    return f"{INSTRUMENTATION_PREFIX}.br.{fn_name}"


def _targets(ins: Instruction) -> bool:
    if ins.origin is not Origin.ORIGINAL or ins.opcode != "condbr":
        return False
    return ins.operands[1] != ins.operands[2]


def instrument_br(m: IRModule, cfg=None) -> tuple[IRModule, CheckSiteMap, InstrumentationStats]:
    """Guard every two-way conditional branch with an expected-target token.

    Before the branch the token of the successor selected by the condition
    is stored to a per-function slot. Each edge is split by a trampoline
    that re-loads the slot and compares it with the token of the edge it
    sits on, so a shared successor is never checked twice.
    """
    require_valid(m)
    return br_pass(m)


def br_pass(m: IRModule) -> tuple[IRModule, CheckSiteMap, InstrumentationStats]:
    before = m.instruction_count()
    stats = InstrumentationStats(instructions_before=before, instructions_after=before)
    if "Br" in m.instrumented:
        return m, CheckSiteMap(), stats
    stats.originals_targeted["Br"] = 0
    pcs = original_pcs(m)
    site_id = next_site(m)
    sites = CheckSiteMap()
    functions = []
    new_globals = []
    for fn in m.functions:
        index = {b.label: k for k, b in enumerate(fn.blocks)}
        namer = Namer(fn)
        slot = GlobalRef(slot_name(fn.name))
        blocks = list(fn.blocks)
        tail: list[BasicBlock] = []
        for pos, b in enumerate(fn.blocks):
            term = b.terminator
            if term is None or not _targets(term):
                continue
            stats.originals_targeted["Br"] += 1
            cond, t_true, t_false = term.operands
            tokens = (TOKEN_BASE + index[t_true.name], TOKEN_BASE + index[t_false.name])
            expected = namer.value("br.expect")
            body = list(b.body)
            body.append(
                Instruction(
                    "select",
                    (cond, Const(tokens[0]), Const(tokens[1])),
                    expected,
                    ty="i64",
                    origin=Origin.VALIDATION,
                )
            )
            body.append(Instruction("store", (Var(expected), slot), ty="i64", origin=Origin.VALIDATION))
            stats.validations_inserted += 2
            pc = pcs[(fn.name, b.label, len(b.instructions) - 1)]
            pads = []
            for ordinal, (target, token) in enumerate(zip((t_true, t_false), tokens), 1):
                pad = namer.label(f"{b.label}.to.{target.name}")
                err = namer.label(f"{pad}.err")
                seen = namer.value("br.seen")
                ok = namer.value("br.ok")
                check = PendingCheck(ok, site_id, Const(token), (Var(seen),))
                tail.append(
                    BasicBlock(
                        pad,
                        (
                            Instruction("load", (slot,), seen, ty="i64", origin=Origin.VALIDATION),
                            eq(ok, "i64", Var(seen), Const(token)),
                            Instruction("condbr", (Var(ok), target, Label(err)), origin=Origin.REPORTING),
                        ),
                    )
                )
                tail.append(
                    BasicBlock(err, (report(check), Instruction("br", (target,), origin=Origin.REPORTING)))
                )
                sites.add(
                    CheckSite(site_id, pc, fn.name, b.label, "condbr", "Br", ordinal=ordinal, tokens=tokens)
                )
                site_id += 1
                pads.append(Label(pad))
                stats.validations_inserted += 1
                stats.checks_inserted += 1
                stats.reporting_blocks_added += 1
                stats.trampolines_added += 1
            body.append(dataclasses.replace(term, operands=(cond, pads[0], pads[1]), loc=None))
            blocks[pos] = BasicBlock(b.label, tuple(body))
        if tail:
            new_globals.append(Global(slot.name, 8))
        functions.append(Function(fn.name, fn.params, fn.ret_type, tuple(blocks + tail)))
    out = dataclasses.replace(
        m,
        functions=tuple(functions),
        globals=m.globals + tuple(new_globals),
        instrumented=m.instrumented + ("Br",),
    )
    stats.instructions_after = out.instruction_count()
    return out, sites, stats
