"""Small single-threaded SSA IR: types, text format, validation, fuzzing."""
from .types import (
    ARITH_OPS,
    INSTRUMENTATION_PREFIX,
    OPCODES,
    BasicBlock,
    Const,
    Function,
    Global,
    GlobalRef,
    Instruction,
    IRModule,
    Label,
    Origin,
    ProgramInput,
    Var,
    original_pcs,
)
from .parser import ParseError, parse_module
from .printer import print_module
from .validate import IRValidationError, Violation, check_module, validate_module
from .fuzz import gen_random_program, step_bound

__all__ = [
    "ARITH_OPS",
    "INSTRUMENTATION_PREFIX",
    "OPCODES",
    "BasicBlock",
    "Const",
    "Function",
    "Global",
    "GlobalRef",
    "Instruction",
    "IRModule",
    "IRValidationError",
    "Label",
    "Origin",
    "ParseError",
    "ProgramInput",
    "Var",
    "Violation",
    "check_module",
    "gen_random_program",
    "original_pcs",
    "parse_module",
    "print_module",
    "step_bound",
    "validate_module",
]
