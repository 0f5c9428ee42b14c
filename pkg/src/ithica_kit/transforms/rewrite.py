"""Shared plumbing for the passes: fresh names, reporting branches, aliasing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..ir.types import (
    BasicBlock,
    Const,
    Function,
    GlobalRef,
    Instruction,
    Label,
    Operand,
    Origin,
    Var,
)


class Namer:
    """Hands out value names and labels that do not clash with a function's own."""

    def __init__(self, fn: Function):
        self.values = {p for p, _ in fn.params}
        self.labels = set()
        for b in fn.blocks:
            self.labels.add(b.label)
            for ins in b.instructions:
                if ins.result is not None:
                    self.values.add(ins.result)
        self._n: dict[str, int] = {}

    def _fresh(self, base: str, taken: set) -> str:
        name = base
        while name in taken:
            n = self._n[base] = self._n.get(base, 0) + 1
            name = f"{base}.{n}"
        taken.add(name)
        return name

    def value(self, base: str) -> str:
        return self._fresh(base, self.values)

    def label(self, base: str) -> str:
        return self._fresh(base, self.labels)


@dataclass(frozen=True)
class PendingCheck:
    """An equality result waiting to be aggregated and reported."""

    var: str
    site_id: int
    original: Operand
    validations: tuple[Operand, ...]


def eq(result: str, ty: str, a: Operand, b: Operand) -> Instruction:
    return Instruction("icmp", (a, b), result, ty=ty, pred="eq", origin=Origin.CHECK)


def report(check: PendingCheck) -> Instruction:
    ops = (Const(check.site_id), Var(check.var), check.original) + check.validations
    return Instruction("report_error", ops, origin=Origin.REPORTING)


def has_reporting_branch(b: BasicBlock) -> bool:
    t = b.terminator
    return t is not None and t.opcode == "condbr" and t.origin is Origin.REPORTING


def attach_reporting(
    blocks: list[BasicBlock],
    pos: int,
    body: list[Instruction],
    checks: list[PendingCheck],
    namer: Namer,
    tail: list[BasicBlock],
) -> int:
    """Finish block ``blocks[pos]`` with ``body`` and route failed checks to a reporting block.

    All checks of the block are AND-ed into one flag feeding a single
    conditional branch. A block that already ends in a reporting branch gets
    its flag extended and its reporting block appended to, so it keeps
    exactly one. Returns the number of reporting blocks created.
    """
    b = blocks[pos]
    term = b.terminator
    if not checks:
        blocks[pos] = BasicBlock(b.label, tuple(body) + (term,))
        return 0
    flag = Var(checks[0].var)
    existing = has_reporting_branch(b)
    rest = checks if existing else checks[1:]
    if existing:
        flag = term.operands[0]
    for c in rest:
        name = namer.value("ok")
        body.append(Instruction("and", (flag, Var(c.var)), name, ty="i1", origin=Origin.CHECK))
        flag = Var(name)
    reports = [report(c) for c in checks]
    if existing:
        cont, err = term.operands[1], term.operands[2]
        body.append(Instruction("condbr", (flag, cont, err), origin=Origin.REPORTING))
        blocks[pos] = BasicBlock(b.label, tuple(body))
        for k, t in enumerate(tail):
            if t.label == err.name:
                tail[k] = BasicBlock(t.label, t.instructions[:-1] + tuple(reports) + t.instructions[-1:])
                return 0
        for k, t in enumerate(blocks):
            if t.label == err.name:
                blocks[k] = BasicBlock(t.label, t.instructions[:-1] + tuple(reports) + t.instructions[-1:])
                return 0
        raise AssertionError(f"reporting block {err.name} not found")
    cont = namer.label(f"{b.label}.cont")
    err = namer.label(f"{b.label}.err")
    body.append(Instruction("condbr", (flag, Label(cont), Label(err)), origin=Origin.REPORTING))
    blocks[pos] = BasicBlock(b.label, tuple(body))
    blocks.insert(pos + 1, BasicBlock(cont, (term,)))
    tail.append(BasicBlock(err, tuple(reports) + (Instruction("br", (Label(cont),), origin=Origin.REPORTING),)))
    return 1


class AddressOracle:
    """Conservative may-alias test over ``ptradd`` chains rooted at globals."""

    def __init__(self, fn: Function):
        self.defs = {}
        for b in fn.blocks:
            for ins in b.instructions:
                if ins.result is not None:
                    self.defs[ins.result] = ins

    def base(self, op: Operand) -> tuple[Optional[str], Optional[int]]:
        offset = 0
        for _ in range(64):
            if isinstance(op, GlobalRef):
                return op.name, offset
            if isinstance(op, Var):
                d = self.defs.get(op.name)
                if d is not None and d.opcode == "ptradd":
                    step = d.operands[1]
                    if isinstance(step, Const) and offset is not None:
                        offset += step.value
                    else:
                        offset = None
                    op = d.operands[0]
                    continue
            break
        return None, None

    def may_alias(self, a: Operand, wa: int, b: Operand, wb: int) -> bool:
        ga, oa = self.base(a)
        gb, ob = self.base(b)
        if ga is None or gb is None:
            return True
        if ga != gb:
            return False
        if oa is None or ob is None:
            return True
        oa &= (1 << 64) - 1
        ob &= (1 << 64) - 1
        return oa < ob + wb and ob < oa + wa
