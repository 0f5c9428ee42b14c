"""Store buffer / direct-mapped L1 / main memory model.

Loads resolve youngest store-buffer entry first, then an L1 hit, then a
line fill from main memory. The L1 is write-back and write-allocate; the
store buffer drains oldest-first into the L1 on overflow or ``mfence``.
"""
from __future__ import annotations

import bisect
import enum
from collections import deque
from typing import Iterable, Optional


class Level(enum.Enum):
    STORE_BUFFER = "StoreBuffer"
    L1 = "L1"
    MAIN = "Main"



class OutOfBounds(Exception):
    pass


class _Line:
    __slots__ = ("tag", "data", "dirty")

    def __init__(self, tag: int, data: bytearray):
        self.tag = tag
        self.data = data
        self.dirty = False


class MemoryHierarchy:
    """Byte-addressed memory over a set of disjoint ``(base, size)`` regions."""

    def __init__(
        self,
        regions: Iterable[tuple[int, bytes]],
        *,
        sb_capacity: int = 8,
        line_size: int = 64,
        sets: int = 64,
    ):
        regions = sorted(regions)
        if not regions:
            regions = [(0, b"")]
        self.base = regions[0][0] - regions[0][0] % line_size
        end = max(start + len(data) for start, data in regions)
        end += -end % line_size
        self.main = bytearray(end - self.base)
        self._starts: list[int] = []
        self._ends: list[int] = []
        for start, data in regions:
            self.main[start - self.base : start - self.base + len(data)] = data
            self._starts.append(start)
            self._ends.append(start + len(data))
        self.sb_capacity = sb_capacity
        self.line_size = line_size
        self.sets = sets
        self.store_buffer: deque[list] = deque()  # [addr, bytearray] oldest first
        self.l1: dict[int, _Line] = {}

    # -- bounds ----------------------------------------------------------------
    def check_bounds(self, addr: int, width: int) -> None:
        k = bisect.bisect_right(self._starts, addr) - 1
        if k < 0 or addr + width > self._ends[k] or width <= 0:
            raise OutOfBounds(f"access of {width} bytes at {addr:#x}")

    # -- L1 helpers --------------------------------------------------------------
    def _split(self, line_addr: int) -> tuple[int, int]:
        n = line_addr // self.line_size
        return n % self.sets, n // self.sets

    def _lookup(self, line_addr: int) -> Optional[_Line]:
        idx, tag = self._split(line_addr)
        line = self.l1.get(idx)
        if line is not None and line.tag == tag:
            return line
        return None

    def _fill(self, line_addr: int) -> _Line:
        idx, tag = self._split(line_addr)
        victim = self.l1.get(idx)
        if victim is not None and victim.dirty:
            self._write_back(idx, victim)
        off = line_addr - self.base
        line = _Line(tag, bytearray(self.main[off : off + self.line_size]))
        self.l1[idx] = line
        return line

    def _write_back(self, idx: int, line: _Line) -> None:
        line_addr = (line.tag * self.sets + idx) * self.line_size
        off = line_addr - self.base
        self.main[off : off + self.line_size] = line.data
        line.dirty = False

    def _line_spans(self, addr: int, width: int):
        """Yield (line_addr, offset_in_line, position_in_access, length)."""
        pos = 0
        while pos < width:
            a = addr + pos
            line_addr = a - (a - self.base) % self.line_size
            off = a - line_addr
            n = min(width - pos, self.line_size - off)
            yield line_addr, off, pos, n
            pos += n

    # -- operations --------------------------------------------------------------
    def read(self, addr: int, width: int) -> tuple[bytes, Level]:
        """Load ``width`` bytes; returns the value and the level it resolved at."""
        self.check_bounds(addr, width)
        sb = self.store_buffer
        if sb:
            end = addr + width
            for eaddr, edata in reversed(sb):
                if eaddr < end and addr < eaddr + len(edata):
                    # youngest overlapping entry covers the whole access
                    if eaddr <= addr and end <= eaddr + len(edata):
                        return bytes(edata[addr - eaddr : end - eaddr]), Level.STORE_BUFFER
                    break
            out = bytearray(width)
            have = [False] * width
            pending = width
            for eaddr, edata in reversed(sb):
                lo = max(addr, eaddr)
                hi = min(addr + width, eaddr + len(edata))
                for a in range(lo, hi):
                    if not have[a - addr]:
                        have[a - addr] = True
                        out[a - addr] = edata[a - eaddr]
                        pending -= 1
                if not pending:
                    return bytes(out), Level.STORE_BUFFER
            if pending < width:
                level = Level.STORE_BUFFER
                for line_addr, off, pos, n in self._line_spans(addr, width):
                    line = self._lookup(line_addr)
                    if line is None:
                        line = self._fill(line_addr)
                        level = Level.MAIN
                    elif level is Level.STORE_BUFFER:
                        level = Level.L1
                    for k in range(n):
                        if not have[pos + k]:
                            out[pos + k] = line.data[off + k]
                return bytes(out), level
        level = Level.L1
        chunks = []
        for line_addr, off, pos, n in self._line_spans(addr, width):
            line = self._lookup(line_addr)
            if line is None:
                line = self._fill(line_addr)
                level = Level.MAIN
            chunks.append(line.data[off : off + n])
        return bytes(b"".join(chunks)), level

    def write(self, addr: int, data: bytes) -> Level:
        self.check_bounds(addr, len(data))
        self.store_buffer.append([addr, bytearray(data)])
        if len(self.store_buffer) > self.sb_capacity:
            self._drain_one()
        return Level.STORE_BUFFER

    def _drain_one(self) -> None:
        addr, data = self.store_buffer.popleft()
        for line_addr, off, pos, n in self._line_spans(addr, len(data)):
            line = self._lookup(line_addr) or self._fill(line_addr)
            line.data[off : off + n] = data[pos : pos + n]
            line.dirty = True

    def mfence(self) -> None:
        while self.store_buffer:
            self._drain_one()

    def clflush(self, addr: int) -> None:
        self.check_bounds(addr, 1)
        line_addr = addr - (addr - self.base) % self.line_size
        idx, _ = self._split(line_addr)
        line = self._lookup(line_addr)
        if line is not None:
            if line.dirty:
                self._write_back(idx, line)
            del self.l1[idx]

    def peek(self, addr: int, width: int) -> bytes:
        """Architectural view of memory, without touching cache state."""
        out = bytearray()
        for line_addr, off, pos, n in self._line_spans(addr, width):
            line = self._lookup(line_addr)
            if line is not None:
                out += line.data[off : off + n]
            else:
                o = line_addr - self.base + off
                out += self.main[o : o + n]
        for eaddr, edata in self.store_buffer:  # oldest first, so youngest wins
            lo = max(addr, eaddr)
            hi = min(addr + width, eaddr + len(edata))
            for a in range(lo, hi):
                out[a - addr] = edata[a - eaddr]
        return bytes(out)

    def corrupt(self, level: Level, addr: int, data: bytes) -> None:
        """Make a corrupted value sticky at ``level``.

        ``Main`` models corruption on the fill path: the bad bytes land in
        the freshly filled L1 line, while main memory itself stays intact.
        """
        if level is Level.STORE_BUFFER:
            for i, b in enumerate(data):
                a = addr + i
                for eaddr, edata in reversed(self.store_buffer):
                    if eaddr <= a < eaddr + len(edata):
                        edata[a - eaddr] = b
                        break
            return
        for line_addr, off, pos, n in self._line_spans(addr, len(data)):
            line = self._lookup(line_addr)
            if line is not None:
                line.data[off : off + n] = data[pos : pos + n]

