"""Permanent-fault descriptions and the pure fault-application rule.

A fault names a target (opcode, opcode class or memory level), a trigger
built from a fixed predicate language and a corruption. Consistent faults
may only look at the opcode and its operand values; inconsistent faults
must look at some execution-context field; unresponsive faults hang.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from ..ir import semantics
from ..ir.types import ARITH_OPS, mask
from .memory import Level

HISTORY_DEFAULT = 16
PORTS_DEFAULT = 2
INFLIGHT_DEFAULT = 2

# functional-unit class of each opcode; None = no port model
PORT_CLASS = {
    **{op: "alu" for op in ARITH_OPS},
    "mul": "mul",
    "udiv": "div",
    "load": "mem",
    "store": "mem",
    "br": "branch",
    "condbr": "branch",
}

OPCODE_CLASSES = {
    "arith": frozenset(ARITH_OPS),
    "alu": frozenset(op for op, c in PORT_CLASS.items() if c == "alu"),
    "mem": frozenset(("load", "store")),
    "branch": frozenset(("br", "condbr")),
    "div": frozenset(("udiv",)),
}


class FaultKind(enum.Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    UNRESPONSIVE = "unresponsive"


class FaultSpecError(ValueError):
    pass


@dataclass
class ExecutionContext:
    """Context of one dynamic instruction, as seen by fault triggers."""

    step: int
    history: tuple[str, ...] = ()  # previous opcodes, oldest first
    port: Optional[int] = None
    inflight: frozenset[str] = frozenset()
    # steps since each operand's producer executed; None for constants/params
    operand_distances: tuple[Optional[int], ...] = ()
    access_level: Optional[Level] = None
    # steps since the last instance with the same opcode and operand values
    gap: Optional[int] = None

    def snapshot(self) -> dict:
        return {
            "step": self.step,
            "history": list(self.history),
            "port": self.port,
            "inflight": sorted(self.inflight),
            "access_level": self.access_level.value if self.access_level else None,
        }


# -- trigger predicates ----------------------------------------------------------


@dataclass(frozen=True)
class Always:
    context = False

    def holds(self, opcode, operands, ctx) -> bool:
        return True

    def to_json(self) -> dict:
        return {"kind": "always"}


@dataclass(frozen=True)
class InputEquals:
    values: tuple[int, ...]
    context = False

    def holds(self, opcode, operands, ctx) -> bool:
        return tuple(operands) == self.values

    def to_json(self) -> dict:
        return {"kind": "input-equals", "values": list(self.values)}


@dataclass(frozen=True)
class PortEquals:
    unit: int
    context = True

    def holds(self, opcode, operands, ctx) -> bool:
        return ctx.port == self.unit

    def to_json(self) -> dict:
        return {"kind": "port-equals", "unit": self.unit}


@dataclass(frozen=True)
class HistoryContains:
    opcode: str
    window: int
    context = True

    def holds(self, opcode, operands, ctx) -> bool:
        return self.opcode in ctx.history[-self.window :] if self.window > 0 else False

    def to_json(self) -> dict:
        return {"kind": "history-contains", "opcode": self.opcode, "window": self.window}


@dataclass(frozen=True)
class ProducerInFlight:
    """The operand's producer executed at most ``window`` steps ago."""

    operand: int
    window: int = INFLIGHT_DEFAULT
    context = True

    def holds(self, opcode, operands, ctx) -> bool:
        if self.operand >= len(ctx.operand_distances):
            return False
        d = ctx.operand_distances[self.operand]
        return d is not None and d <= self.window

    def to_json(self) -> dict:
        return {"kind": "producer-in-flight", "operand": self.operand, "window": self.window}


@dataclass(frozen=True)
class LevelEquals:
    level: Level
    context = True

    def holds(self, opcode, operands, ctx) -> bool:
        return ctx.access_level is self.level

    def to_json(self) -> dict:
        return {"kind": "level-equals", "level": self.level.value}


@dataclass(frozen=True)
class MinGap:
    """Fires when an identical (opcode, operands) instance ran at least ``gap`` steps earlier."""

    gap: int
    context = True

    def holds(self, opcode, operands, ctx) -> bool:
        return ctx.gap is not None and ctx.gap >= self.gap

    def to_json(self) -> dict:
        return {"kind": "min-gap", "gap": self.gap}


Trigger = Union[Always, InputEquals, PortEquals, HistoryContains, ProducerInFlight, LevelEquals, MinGap]

# -- corruptions -----------------------------------------------------------------


@dataclass(frozen=True)
class BitFlip:
    mask: int

    def to_json(self) -> dict:
        return {"kind": "bitflip", "mask": self.mask}


@dataclass(frozen=True)
class StuckOperandZero:
    operand: int

    def to_json(self) -> dict:
        return {"kind": "stuck-operand-zero", "operand": self.operand}


@dataclass(frozen=True)
class FixedOutput:
    value: int

    def to_json(self) -> dict:
        return {"kind": "fixed-output", "value": self.value}


Corruption = Union[BitFlip, StuckOperandZero, FixedOutput]


@dataclass(frozen=True)
class Target:
    """Opcode name, class name (see OPCODE_CLASSES) or ``*``; optional memory level."""

    opcode: str = "*"
    level: Optional[Level] = None

    def matches(self, opcode: str) -> bool:
        if self.opcode == "*" or self.opcode == opcode:
            return True
        cls = OPCODE_CLASSES.get(self.opcode)
        return cls is not None and opcode in cls

    def to_json(self) -> dict:
        d = {"opcode": self.opcode}
        if self.level is not None:
            d["level"] = self.level.value
        return d


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    target: Target
    trigger: tuple[Trigger, ...] = (Always(),)
    corruption: Optional[Corruption] = None
    # optional Bernoulli modifier: fire with this probability when triggered
    probability: Optional[float] = None
    name: str = ""
    uses_gap: bool = field(default=False, init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "trigger", tuple(self.trigger))
        object.__setattr__(self, "uses_gap", any(isinstance(t, MinGap) for t in self.trigger))
        self.validate()

    def validate(self) -> None:
        context = any(t.context for t in self.trigger) or self.target.level is not None
        if self.kind is FaultKind.CONSISTENT:
            if context:
                raise FaultSpecError("consistent faults may only trigger on opcode and operand values")
            if self.probability is not None and self.probability < 1:
                raise FaultSpecError("a Bernoulli modifier would make a consistent fault inconsistent")
        if self.kind is FaultKind.INCONSISTENT and not context:
            raise FaultSpecError("inconsistent faults must reference an execution-context field")
        if self.kind is FaultKind.UNRESPONSIVE and self.corruption is not None:
            raise FaultSpecError("unresponsive faults have no corruption")
        if self.kind is not FaultKind.UNRESPONSIVE and self.corruption is None:
            raise FaultSpecError(f"{self.kind.value} faults need a corruption")
        if self.probability is not None and not 0 <= self.probability <= 1:
            raise FaultSpecError("probability must lie in [0, 1]")

    def to_json(self) -> dict:
        d = {
            "kind": self.kind.value,
            "target": self.target.to_json(),
            "trigger": [t.to_json() for t in self.trigger],
            "corruption": self.corruption.to_json() if self.corruption else None,
        }
        if self.probability is not None:
            d["probability"] = self.probability
        if self.name:
            d["name"] = self.name
        return d


class _Hang:
    def __repr__(self) -> str:
        return "HANG"


HANG = _Hang()


def apply_fault(
    f: FaultSpec,
    opcode: str,
    operands: Sequence[int],
    ctx: ExecutionContext,
    golden: int,
    *,
    ty: Optional[str] = None,
    pred: Optional[str] = None,
    draw: Optional[float] = None,
    evaluate: Optional[Callable[[list[int]], int]] = None,
):
    """Corrupted value, ``HANG``, or ``None`` when the fault does not fire.

    ``draw`` is a uniform sample in [0, 1) consumed only by faults with a
    probability. ``evaluate`` recomputes the instruction on modified operands
    (needed for stuck-operand corruption of non-pure opcodes such as loads).
    """
    if not f.target.matches(opcode):
        return None
    if f.target.level is not None and ctx.access_level is not f.target.level:
        return None
    for t in f.trigger:
        if not t.holds(opcode, operands, ctx):
            return None
    if f.probability is not None:
        if draw is None:
            raise ValueError("probabilistic fault needs a draw")
        if draw >= f.probability:
            return None
    if f.kind is FaultKind.UNRESPONSIVE:
        return HANG
    m = mask(ty) if ty else (1 << 64) - 1
    c = f.corruption
    if isinstance(c, BitFlip):
        return (golden ^ c.mask) & m
    if isinstance(c, FixedOutput):
        return c.value & m
    if isinstance(c, StuckOperandZero):
        ops = list(operands)
        if c.operand >= len(ops):
            return None
        ops[c.operand] = 0
        if evaluate is not None:
            return evaluate(ops)
        return semantics.evaluate(opcode, ops, ty, pred)
    raise FaultSpecError(f"unknown corruption {c!r}")


# -- JSON ------------------------------------------------------------------------


def _trigger_from_json(d) -> Trigger:
    if isinstance(d, str):
        d = {"kind": d}
    kind = d["kind"]
    if kind == "always":
        return Always()
    if kind == "input-equals":
        return InputEquals(tuple(int(v) for v in d["values"]))
    if kind == "port-equals":
        return PortEquals(int(d["unit"]))
    if kind == "history-contains":
        return HistoryContains(d["opcode"], int(d.get("window", HISTORY_DEFAULT)))
    if kind == "producer-in-flight":
        return ProducerInFlight(int(d.get("operand", 0)), int(d.get("window", INFLIGHT_DEFAULT)))
    if kind == "level-equals":
        return LevelEquals(Level(d["level"]))
    if kind == "min-gap":
        return MinGap(int(d["gap"]))
    raise FaultSpecError(f"unknown trigger kind {kind!r}")


def _corruption_from_json(d) -> Optional[Corruption]:
    if d is None:
        return None
    kind = d["kind"]
    if kind == "bitflip":
        return BitFlip(int(d["mask"]))
    if kind == "stuck-operand-zero":
        return StuckOperandZero(int(d.get("operand", 0)))
    if kind == "fixed-output":
        return FixedOutput(int(d["value"]))
    raise FaultSpecError(f"unknown corruption kind {kind!r}")


def fault_from_json(d: dict) -> FaultSpec:
    target = d.get("target", "*")
    if isinstance(target, str):
        target = {"opcode": target}
    level = target.get("level")
    trig = d.get("trigger", "always")
    trig = trig if isinstance(trig, list) else [trig]
    try:
        return FaultSpec(
            kind=FaultKind(d["kind"].lower()),
            target=Target(target.get("opcode", "*"), Level(level) if level else None),
            trigger=tuple(_trigger_from_json(t) for t in trig),
            corruption=_corruption_from_json(d.get("corruption")),
            probability=d.get("probability"),
            name=d.get("name", ""),
        )
    except (KeyError, TypeError) as e:
        raise FaultSpecError(f"malformed fault specification: {e}") from None


def load_faults(text: str) -> list[FaultSpec]:
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc["faults"] if "faults" in doc else [doc]
    return [fault_from_json(d) for d in doc]


def dump_faults(faults: Sequence[FaultSpec]) -> str:
    return json.dumps([f.to_json() for f in faults], indent=2, sort_keys=True) + "\n"
