"""Detection events and original/validation/both wrongness classification."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

from ..ir import semantics
from ..sitemap import CheckSite


class Wrongness(enum.Enum):
    ORIGINAL_WRONG = "OriginalWrong"
    VALIDATION_WRONG = "ValidationWrong"
    BOTH_WRONG = "BothWrong"


def input_digest(opcode: str, operand_values: Sequence[int]) -> str:
    """Fixed 64-bit hash of the canonical byte form of an operand tuple."""
    h = hashlib.blake2b(digest_size=8)
    h.update(opcode.encode() + b"\0")
    for v in operand_values:
        h.update((v & ((1 << 64) - 1)).to_bytes(8, "little"))
    return h.hexdigest()


def golden_value(site: CheckSite, operand_values: Sequence[int]) -> Optional[int]:
    """Fault-free result of the checked original, or None when it needs memory state."""
    op = site.opcode
    if op == "store":
        return operand_values[0]
    if op == "condbr":
        if site.tokens is None:
            return None
        return site.tokens[0] if operand_values[0] & 1 else site.tokens[1]
    if op == "load":
        return None
    try:
        return semantics.evaluate(op, list(operand_values), site.ty, site.pred)
    except semantics.DivideByZero:
        return None


def classify_wrongness(
    original_value: int,
    validation_values: Sequence[int],
    golden: int,
) -> Wrongness:
    if original_value != golden:
        if all(v == golden for v in validation_values):
            return Wrongness.ORIGINAL_WRONG
        return Wrongness.BOTH_WRONG
    return Wrongness.VALIDATION_WRONG


@dataclass(frozen=True)
class DetectionEvent:
    check_site: int
    step: int
    origin: str  # "ithica" for inserted checks, "native" for checks already in the program
    original_value: int
    validation_values: tuple[int, ...]
    original_pc: Optional[int] = None
    opcode: Optional[str] = None
    block_id: Optional[str] = None
    pass_name: Optional[str] = None
    ordinal: Optional[int] = None
    wrongness: Optional[Wrongness] = None
    operand_values: tuple[int, ...] = ()
    input_digest: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "check_site": self.check_site,
            "step": self.step,
            "origin": self.origin,
            "original_value": self.original_value,
            "validation_values": list(self.validation_values),
            "original_pc": self.original_pc,
            "opcode": self.opcode,
            "block_id": self.block_id,
            "pass_name": self.pass_name,
            "ordinal": self.ordinal,
            "wrongness": self.wrongness.value if self.wrongness else None,
            "operand_values": list(self.operand_values),
            "input_digest": self.input_digest,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DetectionEvent":
        return cls(
            check_site=d["check_site"],
            step=d["step"],
            origin=d["origin"],
            original_value=d["original_value"],
            validation_values=tuple(d["validation_values"]),
            original_pc=d.get("original_pc"),
            opcode=d.get("opcode"),
            block_id=d.get("block_id"),
            pass_name=d.get("pass_name"),
            ordinal=d.get("ordinal"),
            wrongness=Wrongness(d["wrongness"]) if d.get("wrongness") else None,
            operand_values=tuple(d.get("operand_values", ())),
            input_digest=d.get("input_digest"),
        )
