"""Micro-architectural simulator: interpreter, memory hierarchy and fault engine."""
from .detect import DetectionEvent, Wrongness, classify_wrongness, golden_value, input_digest
from .faults import (
    HANG,
    Always,
    BitFlip,
    ExecutionContext,
    FaultKind,
    FaultSpec,
    FaultSpecError,
    FixedOutput,
    HistoryContains,
    InputEquals,
    LevelEquals,
    MinGap,
    PortEquals,
    ProducerInFlight,
    StuckOperandZero,
    Target,
    apply_fault,
    dump_faults,
    fault_from_json,
    load_faults,
)
from .interp import BASE_ADDRESS, RunOutcome, RunStatus, SimConfig, layout, run
from .memory import Level, MemoryHierarchy, OutOfBounds

__all__ = [
    "BASE_ADDRESS",
    "HANG",
    "Always",
    "BitFlip",
    "DetectionEvent",
    "ExecutionContext",
    "FaultKind",
    "FaultSpec",
    "FaultSpecError",
    "FixedOutput",
    "HistoryContains",
    "InputEquals",
    "Level",
    "LevelEquals",
    "MemoryHierarchy",
    "MinGap",
    "OutOfBounds",
    "PortEquals",
    "ProducerInFlight",
    "RunOutcome",
    "RunStatus",
    "SimConfig",
    "StuckOperandZero",
    "Target",
    "Wrongness",
    "apply_fault",
    "classify_wrongness",
    "dump_faults",
    "fault_from_json",
    "golden_value",
    "input_digest",
    "layout",
    "load_faults",
    "run",
]
