"""Check-site map emitted next to every instrumented module.

Each entry ties one equality check to the original instruction it guards,
so detections can be localised while they are reported.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CheckSite:
    site_id: int
    pc: int  # Original-instruction number, see ir.original_pcs
    function: str
    block: str
    opcode: str
    pass_name: str
    # 1-based position of the validation value this check compares against;
    # for br, 1 = taken-true edge, 2 = taken-false edge
    ordinal: int = 1
    # br only: expected-target tokens for (true, false) successors
    tokens: Optional[tuple[int, int]] = None
    # type annotation and icmp predicate of the checked original
    ty: Optional[str] = None
    pred: Optional[str] = None


class CheckSiteMap:
    def __init__(self, sites: Optional[list[CheckSite]] = None):
        self._sites: dict[int, CheckSite] = {}
        for s in sites or ():
            self.add(s)

    def add(self, site: CheckSite) -> None:
        if site.site_id in self._sites:
            raise ValueError(f"duplicate check site id {site.site_id}")
        self._sites[site.site_id] = site

    def __getitem__(self, site_id: int) -> CheckSite:
        return self._sites[site_id]

    def get(self, site_id: int) -> Optional[CheckSite]:
        return self._sites.get(site_id)

    def __contains__(self, site_id: int) -> bool:
        return site_id in self._sites

    def __iter__(self) -> Iterator[CheckSite]:
        return iter(sorted(self._sites.values(), key=lambda s: s.site_id))

    def __len__(self) -> int:
        return len(self._sites)

    def __eq__(self, other) -> bool:
        return isinstance(other, CheckSiteMap) and list(self) == list(other)

    def merged(self, other: "CheckSiteMap") -> "CheckSiteMap":
        return CheckSiteMap(list(self) + list(other))

    def next_id(self, floor: int = 0) -> int:
        return max([floor - 1] + list(self._sites)) + 1

    def pcs(self) -> set[int]:
        return {s.pc for s in self._sites.values()}

    def to_json(self) -> str:
        rows = []
        for s in self:
            d = asdict(s)
            for key in ("tokens", "ty", "pred"):
                if d[key] is None:
                    del d[key]
            if "tokens" in d:
                d["tokens"] = list(d["tokens"])
            rows.append(d)
        return json.dumps({"schema_version": SCHEMA_VERSION, "sites": rows}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CheckSiteMap":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported check-site map schema {doc.get('schema_version')!r}")
        sites = []
        for d in doc["sites"]:
            tokens = d.get("tokens")
            sites.append(
                CheckSite(
                    site_id=d["site_id"],
                    pc=d["pc"],
                    function=d["function"],
                    block=d["block"],
                    opcode=d["opcode"],
                    pass_name=d["pass_name"],
                    ordinal=d.get("ordinal", 1),
                    tokens=tuple(tokens) if tokens is not None else None,
                    ty=d.get("ty"),
                    pred=d.get("pred"),
                )
            )
        return cls(sites)
