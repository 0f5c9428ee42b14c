"""Pass selection, placement knobs and instrumentation statistics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

PASS_ORDER = ("Arith", "Mem", "MemDiv", "Br")
_BY_LOWER = {p.lower(): p for p in PASS_ORDER}

MAX = "max"
DEP = "dep"


class ConfigError(ValueError):
    pass


def canonical_pass(name: str) -> str:
    try:
        return _BY_LOWER[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown pass {name!r}; expected one of {', '.join(PASS_ORDER)}") from None


def parse_passes(text: str) -> tuple[str, ...]:
    """``"arith,memdiv"`` -> ``("Arith", "MemDiv")``."""
    return tuple(canonical_pass(p) for p in text.split(",") if p.strip())


def _setting(value, word: str) -> Union[int, str]:
    if isinstance(value, str):
        if value.strip().lower() == word:
            return word
        try:
            value = int(value)
        except ValueError:
            raise ConfigError(f"expected a positive integer or {word!r}, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"expected a positive integer or {word!r}, got {value!r}")
    return value


@dataclass(frozen=True)
class PassConfig:
    passes: tuple[str, ...] = ("Arith",)
    interleaving: Union[int, str] = 1
    block_size: Union[int, str] = 1

    def __post_init__(self) -> None:
        passes = self.passes
        if isinstance(passes, str):
            passes = parse_passes(passes)
        passes = tuple(canonical_pass(p) for p in passes)
        if not passes:
            raise ConfigError("no pass selected")
        if len(set(passes)) != len(passes):
            raise ConfigError("pass listed twice")
        if "Mem" in passes and "MemDiv" in passes:
            raise ConfigError("Mem and MemDiv are mutually exclusive")
        object.__setattr__(self, "passes", tuple(p for p in PASS_ORDER if p in passes))
        object.__setattr__(self, "interleaving", _setting(self.interleaving, MAX))
        object.__setattr__(self, "block_size", _setting(self.block_size, DEP))

    @property
    def suffix(self) -> str:
        """File-name suffix such as ``Arith+MemDiv``."""
        return "+".join(self.passes)


@dataclass
class InstrumentationStats:
    originals_targeted: dict[str, int] = field(default_factory=dict)
    validations_inserted: int = 0
    checks_inserted: int = 0
    diversity_inserted: int = 0
    reporting_blocks_added: int = 0
    trampolines_added: int = 0
    instructions_before: int = 0
    instructions_after: int = 0

    @property
    def size_ratio(self) -> float:
        if self.instructions_before == 0:
            return 1.0
        return self.instructions_after / self.instructions_before

    def absorb(self, other: "InstrumentationStats") -> None:
        for k, v in other.originals_targeted.items():
            self.originals_targeted[k] = self.originals_targeted.get(k, 0) + v
        self.validations_inserted += other.validations_inserted
        self.checks_inserted += other.checks_inserted
        self.diversity_inserted += other.diversity_inserted
        self.reporting_blocks_added += other.reporting_blocks_added
        self.trampolines_added += other.trampolines_added
        self.instructions_after = other.instructions_after

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "originals_targeted": dict(sorted(self.originals_targeted.items())),
            "validations_inserted": self.validations_inserted,
            "checks_inserted": self.checks_inserted,
            "diversity_inserted": self.diversity_inserted,
            "reporting_blocks_added": self.reporting_blocks_added,
            "trampolines_added": self.trampolines_added,
            "instructions_before": self.instructions_before,
            "instructions_after": self.instructions_after,
            "size_ratio": round(self.size_ratio, 6),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
