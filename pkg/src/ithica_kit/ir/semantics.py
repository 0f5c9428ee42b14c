"""Fault-free value semantics of the side-effect-free opcodes."""
from __future__ import annotations

from typing import Optional, Sequence

from .types import TYPE_BITS, mask


class DivideByZero(ArithmeticError):
    pass


def to_signed(value: int, ty: str) -> int:
    bits = TYPE_BITS[ty]
    value &= (1 << bits) - 1
    if bits > 1 and value >> (bits - 1):
        return value - (1 << bits)
    return value


def icmp(pred: str, a: int, b: int, ty: str) -> int:
    if pred in ("slt", "sle", "sgt", "sge"):
        a, b = to_signed(a, ty), to_signed(b, ty)
        pred = "u" + pred[1:]
    if pred == "eq":
        return int(a == b)
    if pred == "ne":
        return int(a != b)
    if pred == "ult":
        return int(a < b)
    if pred == "ule":
        return int(a <= b)
    if pred == "ugt":
        return int(a > b)
    if pred == "uge":
        return int(a >= b)
    raise ValueError(f"unknown icmp predicate {pred!r}")


def binary(opcode: str, a: int, b: int, ty: str) -> int:
    m = mask(ty)
    a &= m
    b &= m
    if opcode == "add":
        return (a + b) & m
    if opcode == "sub":
        return (a - b) & m
    if opcode == "mul":
        return (a * b) & m
    if opcode == "udiv":
        if b == 0:
            raise DivideByZero("udiv by zero")
        return a // b
    if opcode == "and":
        return a & b
    if opcode == "or":
        return a | b
    if opcode == "xor":
        return a ^ b
    # shift amounts at or beyond the width produce zero
    if opcode == "shl":
        return (a << b) & m if b < TYPE_BITS[ty] else 0
    if opcode == "lshr":
        return a >> b if b < TYPE_BITS[ty] else 0
    raise ValueError(f"not a binary opcode: {opcode!r}")


def evaluate(
    opcode: str,
    operands: Sequence[int],
    ty: Optional[str],
    pred: Optional[str] = None,
) -> int:
    """Result of a pure opcode given concrete operand values."""
    if opcode == "icmp":
        return icmp(pred or "eq", operands[0] & mask(ty), operands[1] & mask(ty), ty)
    if opcode == "select":
        return (operands[1] if operands[0] & 1 else operands[2]) & mask(ty)
    if opcode in ("trunc", "zext"):
        return operands[0] & mask(ty)
    if opcode == "ptradd":
        return (operands[0] + operands[1]) & mask("i64")
    return binary(opcode, operands[0], operands[1], ty)
