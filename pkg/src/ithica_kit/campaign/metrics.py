"""Campaign metrics as exact rationals.

Percentages are returned as ``Fraction`` values in percent units, so
``compute_edr(39, 100) == 39``. Metrics that are undefined for the data
(no PCs of an opcode, no detections) come back as ``None``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

PERCENT = "percent"
PER_RUN = "count-per-run"
STEPS = "steps"


def _percent(num: int, den: int) -> Fraction:
    if num < 0 or den < 0 or num > den:
        raise ValueError(f"bad ratio {num}/{den}")
    return Fraction(100 * num, den)


def compute_edr(runs_with_detection: int, runs_total: int) -> Fraction:
    """Share of runs with at least one detection."""
    if runs_total <= 0:
        raise ValueError("EDR of a campaign without runs")
    return _percent(runs_with_detection, runs_total)


def compute_ef(total_detections: int, runs_total: int) -> Fraction:
    """Detections per run."""
    if runs_total <= 0:
        raise ValueError("EF of a campaign without runs")
    return Fraction(total_detections, runs_total)


@dataclass(frozen=True)
class TTDSummary:
    min: int
    median: Fraction
    mean: Fraction
    max: int
    samples: int


def compute_ttd(first_steps: Sequence[Optional[int]]) -> Optional[TTDSummary]:
    """Summary of the first-detection step over the runs that detected at all."""
    xs = sorted(s for s in first_steps if s is not None)
    if not xs:
        return None
    n = len(xs)
    mid = n // 2
    median = Fraction(xs[mid]) if n % 2 else Fraction(xs[mid - 1] + xs[mid], 2)
    return TTDSummary(xs[0], median, Fraction(sum(xs), n), xs[-1], n)


def compute_pc_sensitivity(failing_pcs: int, total_pcs: int) -> Optional[Fraction]:
    if total_pcs == 0:
        return None
    return _percent(failing_pcs, total_pcs)


def compute_bb_sensitivity(failing_bbs: int, total_bbs: int) -> Optional[Fraction]:
    if total_bbs == 0:
        return None
    return _percent(failing_bbs, total_bbs)


def compute_input_breadth(failing_inputs: Sequence[str]) -> Optional[Fraction]:
    """Unique failing inputs over all failing inputs (a multiset of digests)."""
    if not failing_inputs:
        return None
    return _percent(len(set(failing_inputs)), len(failing_inputs))


@dataclass(frozen=True)
class MetricValue:
    name: str
    variant: str
    opcode: Optional[str]
    value: Optional[Fraction]
    units: str

    def to_json(self) -> dict:
        v = self.value
        return {
            "name": self.name,
            "variant": self.variant,
            "opcode": self.opcode,
            "units": self.units,
            "value": None if v is None else f"{v.numerator}/{v.denominator}",
            "approx": None if v is None else round(float(v), 6),
        }


def fraction_from_json(text: Optional[str]) -> Optional[Fraction]:
    return None if text is None else Fraction(text)
