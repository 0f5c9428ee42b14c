"""Core data structures of the small SSA IR.

Modules are immutable: every container is a tuple and every dataclass is
frozen, so a module can be shared read-only between concurrent runs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class Origin(enum.Enum):
    ORIGINAL = "original"
    VALIDATION = "validation"
    CHECK = "check"
    DIVERSITY = "diversity"
    REPORTING = "reporting"


VALUE_TYPES = ("i1", "i8", "i32", "i64", "ptr")
TYPE_BITS = {"i1": 1, "i8": 8, "i32": 32, "i64": 64, "ptr": 64}
# byte width used by load/store
TYPE_BYTES = {"i1": 1, "i8": 1, "i32": 4, "i64": 8, "ptr": 8}

BINARY_OPS = ("add", "sub", "mul", "udiv", "and", "or", "xor", "shl", "lshr")
CAST_OPS = ("trunc", "zext")
ICMP_PREDICATES = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")
TERMINATORS = ("br", "condbr", "ret")
OPCODES = BINARY_OPS + CAST_OPS + (
    "icmp",
    "select",
    "ptradd",
    "load",
    "store",
    "br",
    "condbr",
    "ret",
    "mfence",
    "clflush",
    "report_error",
)
# opcodes the Arith pass duplicates
ARITH_OPS = frozenset(BINARY_OPS + CAST_OPS + ("icmp", "select", "ptradd"))
MEMORY_OPS = frozenset(("load", "store"))
NO_RESULT_OPS = frozenset(("store", "br", "condbr", "ret", "mfence", "clflush", "report_error"))


def mask(ty: str) -> int:
    return (1 << TYPE_BITS[ty]) - 1


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class GlobalRef:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Var, Const, GlobalRef, Label]


@dataclass(frozen=True)
class Instruction:
    """One IR instruction.

    ``ty`` is the type annotation written in the text: the operation type
    for arithmetic, the compared type for ``icmp``, the destination type for
    casts (``src_ty`` holds the source), the accessed type for memory ops.
    Terminators and side-effect-only opcodes leave it ``None``.
    """

    opcode: str
    operands: tuple[Operand, ...] = ()
    result: Optional[str] = None
    ty: Optional[str] = None
    src_ty: Optional[str] = None
    pred: Optional[str] = None
    origin: Origin = Origin.ORIGINAL
    # source position (line, column); never part of structural equality
    loc: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def result_type(self) -> Optional[str]:
        if self.result is None:
            return None
        if self.opcode == "icmp":
            return "i1"
        if self.opcode == "ptradd":
            return "ptr"
        return self.ty

    def uses(self) -> Iterator[str]:
        for op in self.operands:
            if isinstance(op, Var):
                yield op.name

    def targets(self) -> tuple[str, ...]:
        return tuple(op.name for op in self.operands if isinstance(op, Label))


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    @property
    def body(self) -> tuple[Instruction, ...]:
        """Instructions before the terminator."""
        if self.terminator is not None:
            return self.instructions[:-1]
        return self.instructions

    def successors(self) -> tuple[str, ...]:
        term = self.terminator
        return term.targets() if term is not None else ()


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, str], ...]
    ret_type: str
    blocks: tuple[BasicBlock, ...]

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)


@dataclass(frozen=True)
class Global:
    name: str
    size: int
    init: bytes = b""

    def __post_init__(self) -> None:
        # normalize so that equal memory contents compare equal
        object.__setattr__(self, "init", bytes(self.init).ljust(self.size, b"\0")[: self.size])


# globals whose names start with this prefix belong to instrumentation
INSTRUMENTATION_PREFIX = "__ithica"


@dataclass(frozen=True)
class IRModule:
    functions: tuple[Function, ...]
    globals: tuple[Global, ...] = ()
    entry_function: str = "main"
    # passes already applied; a pass listed here instruments nothing
    instrumented: tuple[str, ...] = ()

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def entry(self) -> Function:
        return self.function(self.entry_function)

    def global_(self, name: str) -> Global:
        for g in self.globals:
            if g.name == name:
                return g
        raise KeyError(name)

    def instruction_count(self) -> int:
        return sum(f.instruction_count() for f in self.functions)

    def program_globals(self) -> tuple[Global, ...]:
        return tuple(g for g in self.globals if not g.name.startswith(INSTRUMENTATION_PREFIX))


@dataclass(frozen=True)
class ProgramInput:
    seed: int = 0
    arg_values: tuple[int, ...] = ()
    # global name -> bytes overriding the initializer
    memory_image: Optional[dict[str, bytes]] = None

    def __hash__(self) -> int:
        image = tuple(sorted((self.memory_image or {}).items()))
        return hash((self.seed, self.arg_values, image))


def original_pcs(m: IRModule) -> dict[tuple[str, str, int], int]:
    """Number Original instructions module-wide, keyed by (function, block, index).

    Instrumentation only inserts non-Original instructions and keeps
    Originals in order, so these numbers are stable across passes.
    """
    pcs: dict[tuple[str, str, int], int] = {}
    n = 0
    for fn in m.functions:
        for b in fn.blocks:
            for i, ins in enumerate(b.instructions):
                if ins.origin is Origin.ORIGINAL:
                    pcs[(fn.name, b.label, i)] = n
                    n += 1
    return pcs
