"""Deterministic IR interpreter with an execution-context model and fault engine."""
from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..ir import semantics
from ..ir.types import OPCODES, TYPE_BYTES, Const, GlobalRef, IRModule, Label, Origin, ProgramInput, Var, mask, original_pcs
from ..sitemap import CheckSiteMap
from .detect import DetectionEvent, classify_wrongness, golden_value, input_digest
from .faults import (
    HANG,
    HISTORY_DEFAULT,
    INFLIGHT_DEFAULT,
    PORT_CLASS,
    PORTS_DEFAULT,
    ExecutionContext,
    FaultSpec,
    apply_fault,
)
from .memory import Level, MemoryHierarchy, OutOfBounds

BASE_ADDRESS = 0x10000
DEFAULT_BUDGET = 1_000_000


class RunStatus(enum.Enum):
    COMPLETED = "Completed"
    TRAPPED = "Trapped"
    HUNG = "HungAtBudget"
    # stopped at the first detection in halt-on-error mode
    HALTED = "Halted"


@dataclass(frozen=True)
class SimConfig:
    history: int = HISTORY_DEFAULT
    ports: int = PORTS_DEFAULT
    inflight_window: int = INFLIGHT_DEFAULT
    sb_capacity: int = 8
    line_size: int = 64
    l1_sets: int = 64


@dataclass(frozen=True)
class RunOutcome:
    status: RunStatus
    steps_executed: int
    detections: tuple[DetectionEvent, ...] = ()
    return_value: Optional[int] = None
    trap_reason: Optional[str] = None
    memory: dict = field(default_factory=dict, compare=False)
    trace: Optional[list] = field(default=None, compare=False)
    faults_fired: int = 0

    @property
    def detected(self) -> bool:
        return any(e.origin == "ithica" for e in self.detections)


def layout(m: IRModule) -> dict[str, int]:
    """Line-aligned addresses of all globals, in declaration order."""
    addrs = {}
    a = BASE_ADDRESS
    for g in m.globals:
        addrs[g.name] = a
        a += g.size
        a += -a % 64
    return addrs


_BINOPS = {
    "add": lambda a, b, m: (a + b) & m,
    "sub": lambda a, b, m: (a - b) & m,
    "mul": lambda a, b, m: (a * b) & m,
    "and": lambda a, b, m: a & b,
    "or": lambda a, b, m: a | b,
    "xor": lambda a, b, m: a ^ b,
}

# dispatch codes
_BIN, _UDIV, _SHIFT, _ICMP, _SELECT, _CAST, _PTRADD = range(7)
_LOAD, _STORE, _BR, _CONDBR, _RET, _MFENCE, _CLFLUSH, _REPORT = range(7, 15)
_CODES = {
    "udiv": _UDIV,
    "shl": _SHIFT,
    "lshr": _SHIFT,
    "icmp": _ICMP,
    "select": _SELECT,
    "trunc": _CAST,
    "zext": _CAST,
    "ptradd": _PTRADD,
    "load": _LOAD,
    "store": _STORE,
    "br": _BR,
    "condbr": _CONDBR,
    "ret": _RET,
    "mfence": _MFENCE,
    "clflush": _CLFLUSH,
    "report_error": _REPORT,
}


class _Op:
    __slots__ = (
        "code", "opcode", "dest", "ops", "ty", "mask", "pred", "fn", "width", "origin",
        "pc", "label", "index", "port_class", "targets",
    )


class _Trap(Exception):
    pass


class _Stop(Exception):
    pass


class Machine:
    """One interpreter instance executes one run."""

    def __init__(
        self,
        m: IRModule,
        inp: ProgramInput,
        faults: Sequence[FaultSpec] = (),
        *,
        budget: int = DEFAULT_BUDGET,
        trace: bool = False,
        site_map: Optional[CheckSiteMap] = None,
        halt_on_error: bool = False,
        rng: Optional[random.Random] = None,
        config: SimConfig = SimConfig(),
    ):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.module = m
        self.fn = m.entry
        self.input = inp
        self.faults = tuple(faults)
        self.budget = budget
        self.tracing = trace
        self.site_map = site_map
        self.halt_on_error = halt_on_error
        self.rng = rng if rng is not None else random.Random(inp.seed)
        self.config = config

        self.addrs = layout(m)
        image = inp.memory_image or {}
        regions = []
        for g in m.globals:
            data = image.get(g.name, g.init)
            data = bytes(data).ljust(g.size, b"\0")[: g.size]
            regions.append((self.addrs[g.name], data))
        self.mem = MemoryHierarchy(
            regions, sb_capacity=config.sb_capacity, line_size=config.line_size, sets=config.l1_sets
        )
        self.site_pcs = site_map.pcs() if site_map is not None else set()
        self.shadow = bytearray(self.mem.main) if site_map is not None else None
        self.records: dict[int, tuple] = {}
        self.fault_opcodes = None
        if self.faults:
            self.fault_opcodes = frozenset(op for op in OPCODES if any(f.target.matches(op) for f in self.faults))
        self.need_gap = any(f.uses_gap for f in self.faults)
        self._compile()

    # -- compilation -------------------------------------------------------------
    def _compile(self) -> None:
        fn = self.fn
        index = {b.label: k for k, b in enumerate(fn.blocks)}
        pcs = original_pcs(self.module)
        self.blocks: list[list[_Op]] = []
        self.labels = [b.label for b in fn.blocks]
        for b in fn.blocks:
            code = []
            for i, ins in enumerate(b.instructions):
                op = _Op()
                op.opcode = ins.opcode
                op.code = _CODES.get(ins.opcode, _BIN)
                op.dest = ins.result
                ops = []
                for o in ins.operands:
                    if isinstance(o, Var):
                        ops.append(o.name)
                    elif isinstance(o, Const):
                        ops.append(o.value)
                    elif isinstance(o, GlobalRef):
                        ops.append(self.addrs[o.name])
                op.ops = tuple(ops)
                op.targets = tuple(index[o.name] for o in ins.operands if isinstance(o, Label))
                op.ty = ins.ty
                op.mask = mask(ins.ty) if ins.ty else (1 << 64) - 1
                op.pred = ins.pred
                op.fn = _BINOPS.get(ins.opcode)
                op.width = TYPE_BYTES[ins.ty] if ins.ty else 0
                op.origin = ins.origin
                op.pc = pcs.get((fn.name, b.label, i))
                op.label = b.label
                op.index = i
                op.port_class = PORT_CLASS.get(ins.opcode)
                code.append(op)
            self.blocks.append(code)
        self.ret_mask = mask(fn.ret_type)

    # -- fault plumbing ----------------------------------------------------------
    def _context(self, op: _Op, vals, level: Optional[Level]) -> ExecutionContext:
        dist = []
        for o in op.ops:
            if o.__class__ is str and o in self.def_step:
                dist.append(self.step - self.def_step[o])
            else:
                dist.append(None)
        gap = None
        if self.need_gap:
            last = self.last_seen.get((op.opcode, tuple(vals)))
            if last is not None:
                gap = self.step - last
        return ExecutionContext(
            step=self.step,
            history=tuple(self.hist),
            port=self.port,
            inflight=frozenset(self.recent),
            operand_distances=tuple(dist),
            access_level=level,
            gap=gap,
        )

    def _inject(self, op: _Op, vals, golden: int, level: Optional[Level] = None, evaluate=None, ty=None):
        """Apply every matching fault in order; returns (value, fired_fault or None)."""
        ctx = None
        value = golden
        fired = None
        for f in self.faults:
            if not f.target.matches(op.opcode):
                continue
            if ctx is None:
                ctx = self._context(op, vals, level)
            draw = None
            if f.probability is not None:
                if f.target.level is not None and level is not f.target.level:
                    continue
                if not all(t.holds(op.opcode, vals, ctx) for t in f.trigger):
                    continue
                draw = self.rng.random()
            out = apply_fault(
                f, op.opcode, vals, ctx, value, ty=ty or op.ty, pred=op.pred, draw=draw, evaluate=evaluate
            )
            if out is None:
                continue
            self.fired += 1
            if out is HANG:
                raise _Hang()
            value = out
            fired = f
        return value, fired

    # -- execution ---------------------------------------------------------------
    def run(self) -> RunOutcome:
        fn = self.fn
        regs: dict[str, int] = {}
        for (name, ty), v in zip(fn.params, self.input.arg_values):
            regs[name] = v & mask(ty)
        if len(self.input.arg_values) != len(fn.params):
            return self._finish(RunStatus.TRAPPED, 0, reason="malformed: argument count")
        self.regs = regs
        self.events: list[DetectionEvent] = []
        self.trace: Optional[list] = [] if self.tracing else None
        self.fired = 0
        self.hist: deque = deque(maxlen=self.config.history)
        self.recent: deque = deque(maxlen=self.config.inflight_window)
        self.def_step: dict[str, int] = {}
        self.last_seen: dict = {}
        self.port_counters: dict[str, int] = {}
        self.port: Optional[int] = None
        self.step = 0

        ctx_on = bool(self.faults) or self.tracing
        faulty = bool(self.faults)
        fault_ops = self.fault_opcodes or frozenset()
        budget = self.budget
        blocks = self.blocks
        blk = blocks[0]
        ip = 0
        mem = self.mem
        ports = self.config.ports
        records = self.records
        site_pcs = self.site_pcs
        step = 0
        try:
            while True:
                if step >= budget:
                    self.step = budget
                    return self._finish(RunStatus.HUNG, budget)
                op = blk[ip]
                c = op.code
                self.step = step
                if ctx_on:
                    cls = op.port_class
                    if cls is not None:
                        n = self.port_counters.get(cls, 0)
                        self.port = n % ports
                        self.port_counters[cls] = n + 1
                    else:
                        self.port = None
                vals = [regs[o] if o.__class__ is str else o for o in op.ops]
                result = None
                level = None
                hit = faulty and op.opcode in fault_ops
                if c <= _PTRADD:
                    if c == _BIN:
                        golden = op.fn(vals[0] & op.mask, vals[1] & op.mask, op.mask)
                    elif c == _UDIV:
                        d = vals[1] & op.mask
                        if d == 0:
                            raise _Trap("divide-by-zero")
                        golden = (vals[0] & op.mask) // d
                    elif c == _ICMP and op.pred == "eq":
                        golden = int((vals[0] & op.mask) == (vals[1] & op.mask))
                    else:
                        golden = semantics.evaluate(op.opcode, vals, op.ty, op.pred)
                    result = golden
                    if hit:
                        try:
                            result, _ = self._inject(
                                op, vals, golden, ty="i1" if c == _ICMP else ("ptr" if c == _PTRADD else None)
                            )
                        except semantics.DivideByZero:
                            raise _Trap("divide-by-zero") from None
                    regs[op.dest] = result
                    ip += 1
                elif c == _LOAD:
                    addr = vals[0]
                    data, level = mem.read(addr, op.width)
                    result = int.from_bytes(data, "little") & op.mask
                    if self.shadow is not None:
                        o = addr - mem.base
                        golden = int.from_bytes(self.shadow[o : o + op.width], "little") & op.mask
                    else:
                        golden = result
                    if hit:
                        width = op.width

                        def reread(ops, width=width, m=op.mask):
                            return int.from_bytes(mem.read(ops[0], width)[0], "little") & m

                        new, f = self._inject(op, vals, result, level, evaluate=reread)
                        if f is not None and f.target.level is not None and new != result:
                            mem.corrupt(level, addr, new.to_bytes(width, "little"))
                        result = new
                    regs[op.dest] = result
                    ip += 1
                elif c == _STORE:
                    value, addr = vals[0] & op.mask, vals[1]
                    golden = value
                    level = Level.STORE_BUFFER
                    if hit:
                        new, f = self._inject(op, vals, value, level, evaluate=lambda ops: ops)
                        if isinstance(new, list):
                            value, addr = new[0] & op.mask, new[1]
                        else:
                            value = new & op.mask
                    mem.write(addr, value.to_bytes(op.width, "little"))
                    if self.shadow is not None:
                        o = vals[1] - mem.base
                        self.shadow[o : o + op.width] = golden.to_bytes(op.width, "little")
                    ip += 1
                elif c == _BR:
                    golden = None
                    if hit:
                        self._inject(op, vals, 0)
                    blk = blocks[op.targets[0]]
                    ip = 0
                elif c == _CONDBR:
                    cond = vals[0] & 1
                    golden = cond
                    if hit:
                        cond, _ = self._inject(op, vals, cond, ty="i1")
                        cond &= 1
                    result = cond
                    blk = blocks[op.targets[0] if cond else op.targets[1]]
                    ip = 0
                elif c == _RET:
                    value = vals[0] & self.ret_mask
                    golden = value
                    if hit:
                        value, _ = self._inject(op, vals, value, ty=fn.ret_type)
                    self._after(op, vals, golden, value, level, ctx_on)
                    return self._finish(RunStatus.COMPLETED, step + 1, value=value)
                elif c == _MFENCE:
                    golden = None
                    if hit:
                        self._inject(op, vals, 0)
                    mem.mfence()
                    ip += 1
                elif c == _CLFLUSH:
                    golden = None
                    if hit:
                        self._inject(op, vals, 0)
                    mem.clflush(vals[0])
                    ip += 1
                else:  # _REPORT
                    golden = None
                    if hit:
                        self._inject(op, vals, 0)
                    if not vals[1] & 1:
                        self._report(op, vals, step)
                    ip += 1
                if op.pc is not None and op.pc in site_pcs:
                    records[op.pc] = (tuple(vals), golden)
                if ctx_on:
                    self._after(op, vals, golden, result, level, True)
                step += 1
                if c == _REPORT and self.halt_on_error and any(e.origin == "ithica" for e in self.events):
                    return self._finish(RunStatus.HALTED, step)
        except _Trap as t:
            return self._finish(RunStatus.TRAPPED, step + 1, reason=str(t))
        except OutOfBounds:
            return self._finish(RunStatus.TRAPPED, step + 1, reason="out-of-bounds")
        except _Hang:
            return self._finish(RunStatus.HUNG, budget)
        except KeyError as e:
            return self._finish(RunStatus.TRAPPED, step + 1, reason=f"malformed: {e}")

    def _after(self, op: _Op, vals, golden, result, level, ctx_on) -> None:
        step = self.step
        if self.trace is not None:
            snap = ExecutionContext(
                step=step,
                history=tuple(self.hist),
                port=self.port,
                inflight=frozenset(self.recent),
                access_level=level,
            ).snapshot()
            self.trace.append(
                {
                    "step": step,
                    "block": op.label,
                    "index": op.index,
                    "pc": op.pc,
                    "opcode": op.opcode,
                    "origin": op.origin.value,
                    "operands": list(vals),
                    "result": result,
                    "ctx": snap,
                }
            )
        self.hist.append(op.opcode)
        if op.dest is not None:
            self.def_step[op.dest] = step
            self.recent.append(op.dest)
        if self.need_gap:
            self.last_seen[(op.opcode, tuple(vals))] = step

    def _report(self, op: _Op, vals, step: int) -> None:
        site_id = vals[0]
        original = vals[2] if len(vals) > 2 else 0
        validations = tuple(vals[3:])
        if op.origin is Origin.ORIGINAL:
            ev = DetectionEvent(
                check_site=site_id,
                step=step,
                origin="native",
                original_value=original,
                validation_values=validations,
                original_pc=op.pc,
                opcode="report_error",
                block_id=op.label,
                operand_values=tuple(vals[2:]),
                input_digest=input_digest("report_error", vals[2:]),
            )
            self.events.append(ev)
            return
        site = self.site_map.get(site_id) if self.site_map is not None else None
        if site is None:
            self.events.append(
                DetectionEvent(site_id, step, "ithica", original, validations, block_id=op.label)
            )
            return
        operands, recorded = self.records.get(site.pc, ((), None))
        golden = golden_value(site, operands) if operands else None
        if golden is None:
            golden = recorded
        wrong = classify_wrongness(original, validations, golden) if golden is not None else None
        self.events.append(
            DetectionEvent(
                check_site=site_id,
                step=step,
                origin="ithica",
                original_value=original,
                validation_values=validations,
                original_pc=site.pc,
                opcode=site.opcode,
                block_id=site.block,
                pass_name=site.pass_name,
                ordinal=site.ordinal,
                wrongness=wrong,
                operand_values=tuple(operands),
                input_digest=input_digest(site.opcode, operands),
            )
        )

    def _finish(self, status: RunStatus, steps: int, *, value=None, reason=None) -> RunOutcome:
        memory = {}
        for g in self.module.program_globals():
            memory[g.name] = self.mem.peek(self.addrs[g.name], g.size)
        return RunOutcome(
            status=status,
            steps_executed=steps,
            detections=tuple(getattr(self, "events", ())),
            return_value=value,
            trap_reason=reason,
            memory=memory,
            trace=getattr(self, "trace", None),
            faults_fired=getattr(self, "fired", 0),
        )


class _Hang(Exception):
    pass


def run(
    m: IRModule,
    inp: ProgramInput,
    faults: Sequence[FaultSpec] = (),
    budget: int = DEFAULT_BUDGET,
    trace: bool = False,
    *,
    site_map: Optional[CheckSiteMap] = None,
    halt_on_error: bool = False,
    rng: Optional[random.Random] = None,
    config: SimConfig = SimConfig(),
) -> RunOutcome:
    """Execute the entry function of ``m`` on ``inp`` under ``faults``.

    Deterministic in all arguments. ``rng`` feeds only the Bernoulli draws of
    probabilistic faults and defaults to a generator seeded from ``inp.seed``.
    """
    return Machine(
        m,
        inp,
        faults,
        budget=budget,
        trace=trace,
        site_map=site_map,
        halt_on_error=halt_on_error,
        rng=rng,
        config=config,
    ).run()
