"""Campaign reports: raw per-run records plus every metric derived from them."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..microsim.detect import DetectionEvent
from .metrics import (
    PER_RUN,
    PERCENT,
    STEPS,
    MetricValue,
    compute_bb_sensitivity,
    compute_edr,
    compute_ef,
    compute_input_breadth,
    compute_pc_sensitivity,
    compute_ttd,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunRecord:
    run: int
    status: str
    steps: int
    return_value: Optional[int]
    trap_reason: Optional[str]
    faults_fired: int
    events: tuple[DetectionEvent, ...]

    @property
    def ithica_events(self) -> list[DetectionEvent]:
        return [e for e in self.events if e.origin == "ithica"]

    @property
    def native_events(self) -> list[DetectionEvent]:
        return [e for e in self.events if e.origin == "native"]

    @property
    def first_detection_step(self) -> Optional[int]:
        steps = [e.step for e in self.ithica_events]
        return min(steps) if steps else None

    def to_json(self) -> dict:
        return {
            "run": self.run,
            "status": self.status,
            "steps": self.steps,
            "return_value": self.return_value,
            "trap_reason": self.trap_reason,
            "faults_fired": self.faults_fired,
            "first_detection_step": self.first_detection_step,
            "events": [e.to_json() for e in self.events],
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        return cls(
            run=d["run"],
            status=d["status"],
            steps=d["steps"],
            return_value=d["return_value"],
            trap_reason=d["trap_reason"],
            faults_fired=d["faults_fired"],
            events=tuple(DetectionEvent.from_json(e) for e in d["events"]),
        )


@dataclass(frozen=True)
class OpcodeSites:
    """Static population of one checked opcode in a variant: every original PC and its block."""

    pcs: tuple[int, ...]
    blocks: tuple[str, ...]

    def to_json(self) -> dict:
        return {"pcs": list(self.pcs), "blocks": list(self.blocks)}


@dataclass
class VariantReport:
    name: str
    opcodes: dict[str, OpcodeSites]
    runs: list[RunRecord] = field(default_factory=list)

    # -- aggregates (all derived from ``runs``) -------------------------------------
    @property
    def runs_total(self) -> int:
        return len(self.runs)

    @property
    def runs_with_detection(self) -> int:
        return sum(1 for r in self.runs if r.ithica_events)

    @property
    def total_detections(self) -> int:
        return sum(len(r.ithica_events) for r in self.runs)

    @property
    def native_detections(self) -> int:
        return sum(len(r.native_events) for r in self.runs)

    @property
    def runs_with_native_detection(self) -> int:
        return sum(1 for r in self.runs if r.native_events)

    def count_status(self, status: str) -> int:
        return sum(1 for r in self.runs if r.status == status)

    @property
    def crashes_after_detection(self) -> int:
        return sum(1 for r in self.runs if r.status == "Trapped" and r.ithica_events)

    def wrongness(self) -> dict[str, int]:
        c = Counter(e.wrongness.value for r in self.runs for e in r.ithica_events if e.wrongness is not None)
        return dict(sorted(c.items()))

    def opcode_failures(self, opcode: str) -> dict:
        events = [e for r in self.runs for e in r.ithica_events if e.opcode == opcode]
        sites = self.opcodes.get(opcode, OpcodeSites((), ()))
        return {
            "total_pcs": len(sites.pcs),
            "failing_pcs": sorted({e.original_pc for e in events}),
            "total_bbs": len(set(sites.blocks)),
            "failing_bbs": sorted({e.block_id for e in events}),
            "failing_inputs": [e.input_digest for e in events],
            "detections": len(events),
        }

    def metrics(self) -> list[MetricValue]:
        out = []
        if self.runs:
            out.append(MetricValue("EDR", self.name, None, compute_edr(self.runs_with_detection, self.runs_total), PERCENT))
            out.append(MetricValue("EF", self.name, None, compute_ef(self.total_detections, self.runs_total), PER_RUN))
            ttd = compute_ttd([r.first_detection_step for r in self.runs])
            out.append(MetricValue("TTD", self.name, None, ttd.median if ttd else None, STEPS))
        for op in sorted(self.opcodes):
            f = self.opcode_failures(op)
            out.append(
                MetricValue("PCSensitivity", self.name, op, compute_pc_sensitivity(len(f["failing_pcs"]), f["total_pcs"]), PERCENT)
            )
            out.append(
                MetricValue("BBSensitivity", self.name, op, compute_bb_sensitivity(len(f["failing_bbs"]), f["total_bbs"]), PERCENT)
            )
            out.append(MetricValue("InputBreadth", self.name, op, compute_input_breadth(f["failing_inputs"]), PERCENT))
        return out

    def to_json(self) -> dict:
        ttd = compute_ttd([r.first_detection_step for r in self.runs])
        return {
            "name": self.name,
            "runs_total": self.runs_total,
            "runs_with_detection": self.runs_with_detection,
            "total_detections": self.total_detections,
            "runs_with_native_detection": self.runs_with_native_detection,
            "native_detections": self.native_detections,
            "completed": self.count_status("Completed"),
            "crashes": self.count_status("Trapped"),
            "crashes_after_detection": self.crashes_after_detection,
            "hangs": self.count_status("HungAtBudget"),
            "halted": self.count_status("Halted"),
            "first_detection_steps": [r.first_detection_step for r in self.runs],
            "ttd": None
            if ttd is None
            else {
                "min": ttd.min,
                "median": str(ttd.median),
                "mean": str(ttd.mean),
                "max": ttd.max,
                "samples": ttd.samples,
            },
            "wrongness": self.wrongness(),
            "opcode_sites": {op: s.to_json() for op, s in sorted(self.opcodes.items())},
            "opcodes": {op: self.opcode_failures(op) for op in sorted(self.opcodes)},
            "metrics": [m.to_json() for m in self.metrics()],
            "runs": [r.to_json() for r in self.runs],
        }

    @classmethod
    def from_json(cls, d: dict) -> "VariantReport":
        sites = {
            op: OpcodeSites(tuple(s["pcs"]), tuple(s["blocks"])) for op, s in d["opcode_sites"].items()
        }
        return cls(d["name"], sites, [RunRecord.from_json(r) for r in d["runs"]])


@dataclass
class CampaignReport:
    config: dict
    variants: list[VariantReport]
    tool_version: str = ""

    def variant(self, name: str) -> VariantReport:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)

    def metrics(self) -> list[MetricValue]:
        return [m for v in self.variants for m in v.metrics()]

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "config": self.config,
            "variants": [v.to_json() for v in self.variants],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CampaignReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(d["config"], [VariantReport.from_json(v) for v in d["variants"]], d.get("tool_version", ""))


CSV_COLUMNS = (
    "variant",
    "opcode",
    "runs_total",
    "runs_with_detection",
    "edr_percent",
    "ef",
    "detections",
    "total_pcs",
    "failing_pcs",
    "pc_sensitivity_percent",
    "total_bbs",
    "failing_bbs",
    "bb_sensitivity_percent",
    "failing_inputs",
    "unique_failing_inputs",
    "input_breadth_percent",
)


def _fmt(v) -> str:
    return "" if v is None else f"{float(v):.6f}"


def serialize_report(r: CampaignReport, fmt: str = "json") -> bytes:
    """Canonical bytes of a report: sorted-key JSON, or CSV with one row per variant and checked opcode."""
    if fmt == "json":
        return (json.dumps(r.to_json(), indent=2, sort_keys=True) + "\n").encode()
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for v in r.variants:
        edr = compute_edr(v.runs_with_detection, v.runs_total) if v.runs else None
        ef = compute_ef(v.total_detections, v.runs_total) if v.runs else None
        for op in sorted(v.opcodes):
            f = v.opcode_failures(op)
            w.writerow(
                (
                    v.name,
                    op,
                    v.runs_total,
                    v.runs_with_detection,
                    _fmt(edr),
                    _fmt(ef),
                    f["detections"],
                    f["total_pcs"],
                    len(f["failing_pcs"]),
                    _fmt(compute_pc_sensitivity(len(f["failing_pcs"]), f["total_pcs"])),
                    f["total_bbs"],
                    len(f["failing_bbs"]),
                    _fmt(compute_bb_sensitivity(len(f["failing_bbs"]), f["total_bbs"])),
                    len(f["failing_inputs"]),
                    len(set(f["failing_inputs"])),
                    _fmt(compute_input_breadth(f["failing_inputs"])),
                )
            )
    return buf.getvalue().encode()


def parse_report(data) -> CampaignReport:
    if isinstance(data, bytes):
        data = data.decode()
    return CampaignReport.from_json(json.loads(data))
