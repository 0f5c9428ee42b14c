"""Type, SSA and CFG checks for IR modules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import cfg
from .types import (
    BINARY_OPS,
    ICMP_PREDICATES,
    NO_RESULT_OPS,
    OPCODES,
    TYPE_BITS,
    VALUE_TYPES,
    Const,
    Function,
    GlobalRef,
    Instruction,
    IRModule,
    Label,
    Var,
)

INT_TYPES = ("i1", "i8", "i32", "i64")


@dataclass(frozen=True)
class Violation:
    function: Optional[str]
    block: Optional[str]
    index: Optional[int]
    rule: str
    message: str
    loc: Optional[tuple[int, int]] = None

    def __str__(self) -> str:
        where = "/".join(str(x) for x in (self.function, self.block, self.index) if x is not None)
        return f"{where}: [{self.rule}] {self.message}"


class IRValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def validate_module(m: IRModule) -> list[Violation]:
    """Return every violation found; an empty list means the module is valid."""
    out: list[Violation] = []
    names = [f.name for f in m.functions]
    for n in sorted({n for n in names if names.count(n) > 1}):
        out.append(Violation(n, None, None, "duplicate-function", f"function @{n} defined more than once"))
    gnames = [g.name for g in m.globals]
    for n in sorted({n for n in gnames if gnames.count(n) > 1}):
        out.append(Violation(None, None, None, "duplicate-global", f"global @{n} defined more than once"))
    for g in m.globals:
        if g.size <= 0:
            out.append(Violation(None, None, None, "bad-global-size", f"global @{g.name} has size {g.size}"))
    if names.count(m.entry_function) != 1:
        out.append(Violation(None, None, None, "missing-entry", f"entry function @{m.entry_function} not found"))
    globals_ = set(gnames)
    for fn in m.functions:
        out.extend(_validate_function(fn, globals_))
    return out


def check_module(m: IRModule) -> IRModule:
    violations = validate_module(m)
    if violations:
        raise IRValidationError(violations)
    return m


def _validate_function(fn: Function, globals_: set[str]) -> list[Violation]:
    out: list[Violation] = []

    def bad(block, index, rule, msg, ins=None):
        out.append(Violation(fn.name, block, index, rule, msg, ins.loc if ins is not None else None))

    if fn.ret_type not in VALUE_TYPES:
        bad(None, None, "bad-type", f"unknown return type {fn.ret_type!r}")
    if not fn.blocks:
        bad(None, None, "empty-function", "function has no blocks")
        return out

    labels = [b.label for b in fn.blocks]
    for n in sorted({n for n in labels if labels.count(n) > 1}):
        bad(n, None, "duplicate-label", f"label {n} defined more than once")
    label_set = set(labels)

    # value name -> (block, index, type); params use index -1
    defs: dict[str, tuple[Optional[str], int, str]] = {}
    for name, ty in fn.params:
        if name in defs:
            bad(None, None, "duplicate-definition", f"%{name} defined more than once")
        if ty not in VALUE_TYPES:
            bad(None, None, "bad-type", f"parameter %{name} has unknown type {ty!r}")
        defs[name] = (None, -1, ty)
    for b in fn.blocks:
        for i, ins in enumerate(b.instructions):
            if ins.result is None:
                continue
            if ins.result in defs:
                bad(b.label, i, "duplicate-definition", f"%{ins.result} defined more than once", ins)
                continue
            defs[ins.result] = (b.label, i, ins.result_type or "?")

    for b in fn.blocks:
        if not b.instructions or not b.instructions[-1].is_terminator:
            bad(b.label, len(b.instructions), "missing-terminator", f"block {b.label} does not end in a terminator")
        for i, ins in enumerate(b.instructions):
            if ins.is_terminator and i != len(b.instructions) - 1:
                bad(b.label, i, "misplaced-terminator", f"{ins.opcode} before end of block {b.label}", ins)
            for t in ins.targets():
                if t not in label_set:
                    bad(b.label, i, "unknown-target", f"branch to unknown label {t}", ins)
                elif t == fn.entry.label:
                    bad(b.label, i, "entry-has-predecessor", f"branch to entry block {t}", ins)
            _check_instruction(fn, b.label, i, ins, defs, globals_, bad)

    _check_dominance(fn, defs, bad)
    return out


def _operand_type(op, defs) -> Optional[str]:
    if isinstance(op, Var):
        d = defs.get(op.name)
        return d[2] if d else None
    if isinstance(op, GlobalRef):
        return "ptr"
    return None


def _check_instruction(fn, block, i, ins: Instruction, defs, globals_, bad) -> None:
    op = ins.opcode
    if op not in OPCODES:
        bad(block, i, "unknown-opcode", f"unknown opcode {op!r}", ins)
        return
    if op in NO_RESULT_OPS and ins.result is not None:
        bad(block, i, "unexpected-result", f"{op} produces no value", ins)
    if op not in NO_RESULT_OPS and ins.result is None:
        bad(block, i, "missing-result", f"{op} must name its result", ins)

    for k, operand in enumerate(ins.operands):
        if isinstance(operand, GlobalRef) and operand.name not in globals_:
            bad(block, i, "unknown-global", f"unknown global @{operand.name}", ins)
        if isinstance(operand, Var) and operand.name not in defs:
            bad(block, i, "undefined-value", f"use of undefined value %{operand.name}", ins)

    def expect(shape: tuple[Optional[str], ...]) -> None:
        # shape entries: a value type, "label", or None for "any value"
        if len(ins.operands) != len(shape):
            bad(block, i, "operand-count", f"{op} takes {len(shape)} operands, got {len(ins.operands)}", ins)
            return
        for k, (operand, want) in enumerate(zip(ins.operands, shape)):
            if want == "label":
                if not isinstance(operand, Label):
                    bad(block, i, "operand-kind", f"operand {k} of {op} must be a label", ins)
                continue
            if isinstance(operand, Label):
                bad(block, i, "operand-kind", f"operand {k} of {op} must be a value", ins)
                continue
            if want is None:
                continue
            if isinstance(operand, Const):
                continue
            have = _operand_type(operand, defs)
            if have is not None and have != want:
                bad(block, i, "type-mismatch", f"operand {k} of {op} is {have}, expected {want}", ins)

    ty = ins.ty
    if op in BINARY_OPS:
        if ty not in INT_TYPES:
            bad(block, i, "type-mismatch", f"{op} needs an integer type, got {ty}", ins)
            return
        expect((ty, ty))
        if op == "udiv" and len(ins.operands) == 2 and ins.operands[1] == Const(0):
            bad(block, i, "udiv-by-zero", "constant zero divisor", ins)
    elif op == "icmp":
        if ins.pred not in ICMP_PREDICATES:
            bad(block, i, "bad-predicate", f"unknown icmp predicate {ins.pred!r}", ins)
        if ty not in VALUE_TYPES:
            bad(block, i, "type-mismatch", f"icmp on unknown type {ty}", ins)
            return
        expect((ty, ty))
    elif op == "select":
        if ty not in VALUE_TYPES:
            bad(block, i, "type-mismatch", f"select on unknown type {ty}", ins)
            return
        expect(("i1", ty, ty))
    elif op in ("trunc", "zext"):
        src = ins.src_ty
        if src not in INT_TYPES or ty not in INT_TYPES:
            bad(block, i, "bad-cast", f"{op} needs integer types, got {src} to {ty}", ins)
            return
        if op == "trunc" and not TYPE_BITS[src] > TYPE_BITS[ty]:
            bad(block, i, "bad-cast", f"trunc must narrow, got {src} to {ty}", ins)
        if op == "zext" and not TYPE_BITS[src] < TYPE_BITS[ty]:
            bad(block, i, "bad-cast", f"zext must widen, got {src} to {ty}", ins)
        expect((src,))
    elif op == "ptradd":
        if ty != "ptr":
            bad(block, i, "type-mismatch", "ptradd produces ptr", ins)
        expect(("ptr", "i64"))
    elif op == "load":
        if ty not in VALUE_TYPES:
            bad(block, i, "type-mismatch", f"load of unknown type {ty}", ins)
        expect(("ptr",))
    elif op == "store":
        if ty not in VALUE_TYPES:
            bad(block, i, "type-mismatch", f"store of unknown type {ty}", ins)
            return
        expect((ty, "ptr"))
    elif op == "br":
        expect(("label",))
    elif op == "condbr":
        expect(("i1", "label", "label"))
    elif op == "ret":
        expect((fn.ret_type,))
    elif op == "mfence":
        expect(())
    elif op == "clflush":
        expect(("ptr",))
    elif op == "report_error":
        if len(ins.operands) < 2 or not isinstance(ins.operands[0], Const):
            bad(block, i, "operand-count", "report_error takes a constant site id, an i1 flag and values", ins)
            return
        expect((None, "i1") + (None,) * (len(ins.operands) - 2))


def _check_dominance(fn: Function, defs, bad) -> None:
    dom = cfg.dominators(fn)
    for b in fn.blocks:
        if b.label not in dom:
            continue  # unreachable code never executes
        for i, ins in enumerate(b.instructions):
            for name in ins.uses():
                d = defs.get(name)
                if d is None or d[0] is None:
                    continue
                dblock, didx, _ = d
                if dblock == b.label:
                    ok = didx < i
                else:
                    ok = dblock in dom[b.label]
                if not ok:
                    bad(b.label, i, "use-not-dominated", f"%{name} does not dominate its use", ins)
