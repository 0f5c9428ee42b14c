"""Seeded random program generator.

Programs use two i64 parameters, a few 64-byte globals and one 8-byte
counter global per loop. Control flow is a DAG of diamonds plus top-level
counted loops whose trip counts are constants, so every run terminates.
"""
from __future__ import annotations

import random

from . import cfg
from .types import (
    BasicBlock,
    Const,
    Function,
    Global,
    GlobalRef,
    Instruction,
    IRModule,
    Label,
    Var,
)

MAX_TRIP = 64
_GLOBAL_SIZE = 64
_INT_BITS = {"i1": 1, "i8": 8, "i32": 32, "i64": 64}


class _Gen:
    def __init__(self, seed: int, budget: int):
        self.rng = random.Random(seed)
        self.left = budget
        self.nv = 0
        self.nb = 0
        self.blocks: list[BasicBlock] = []
        self.label = "entry"
        self.cur: list[Instruction] = []
        self.pool: dict[str, list[str]] = {"i1": [], "i8": [], "i32": [], "i64": ["a0", "a1"]}
        self.nglobals = self.rng.randint(1, 3)
        self.globals = [
            Global(f"g{k}", _GLOBAL_SIZE, bytes(self.rng.getrandbits(8) for _ in range(_GLOBAL_SIZE)))
            for k in range(self.nglobals)
        ]

    # -- plumbing ----------------------------------------------------------
    def fresh(self) -> str:
        self.nv += 1
        return f"v{self.nv}"

    def new_label(self) -> str:
        self.nb += 1
        return f"bb{self.nb}"

    def emit(self, ins: Instruction) -> None:
        self.cur.append(ins)
        self.left -= 1
        if ins.result is not None and ins.result_type in self.pool:
            self.pool[ins.result_type].append(ins.result)

    def close(self, term: Instruction, next_label: str | None) -> None:
        self.cur.append(term)
        self.left -= 1
        self.blocks.append(BasicBlock(self.label, tuple(self.cur)))
        self.cur = []
        if next_label is not None:
            self.label = next_label

    def scope(self) -> dict[str, int]:
        return {ty: len(v) for ty, v in self.pool.items()}

    def restore(self, snap: dict[str, int]) -> None:
        for ty, n in snap.items():
            del self.pool[ty][n:]

    def value(self, ty: str):
        vals = self.pool[ty]
        if vals and self.rng.random() < 0.85:
            return Var(self.rng.choice(vals[-12:]))
        return Const(self.rng.getrandbits(min(_INT_BITS[ty], 16)))

    def var(self, ty: str) -> Var:
        vals = self.pool[ty]
        return Var(self.rng.choice(vals[-12:]))

    def int_type(self) -> str:
        choices = ["i64"] * 6 + [t for t in ("i32", "i8") if self.pool[t]] * 2
        return self.rng.choice(choices)

    # -- instruction recipes; each returns False if it does not fit ----------
    def op_binary(self, room: int) -> bool:
        ty = self.int_type()
        if not self.pool[ty]:
            return False
        op = self.rng.choice(("add", "sub", "mul", "and", "or", "xor"))
        self.emit(Instruction(op, (self.var(ty), self.value(ty)), self.fresh(), ty))
        return True

    def op_udiv(self, room: int) -> bool:
        if room < 2:
            return False
        ty = self.int_type()
        if not self.pool[ty]:
            return False
        d = self.fresh()
        self.emit(Instruction("or", (self.value(ty), Const(1)), d, ty))
        self.emit(Instruction("udiv", (self.var(ty), Var(d)), self.fresh(), ty))
        return True

    def op_shift(self, room: int) -> bool:
        ty = self.int_type()
        if not self.pool[ty]:
            return False
        op = self.rng.choice(("shl", "lshr"))
        bits = _INT_BITS[ty]
        if room >= 2 and self.rng.random() < 0.5:
            amt = self.fresh()
            self.emit(Instruction("and", (self.var(ty), Const(bits - 1)), amt, ty))
            amount = Var(amt)
        else:
            amount = Const(self.rng.randrange(bits))
        self.emit(Instruction(op, (self.var(ty), amount), self.fresh(), ty))
        return True

    def op_cast(self, room: int) -> bool:
        src = self.rng.choice([t for t in ("i64", "i32", "i8") if self.pool[t]])
        if self.rng.random() < 0.5 and src != "i64":
            dst = self.rng.choice([t for t in ("i32", "i64") if _INT_BITS[t] > _INT_BITS[src]])
            op = "zext"
        else:
            narrower = [t for t in ("i32", "i8", "i1") if _INT_BITS[t] < _INT_BITS[src]]
            if not narrower:
                return False
            dst = self.rng.choice(narrower)
            op = "trunc"
        self.emit(Instruction(op, (self.var(src),), self.fresh(), dst, src_ty=src))
        return True

    def op_icmp(self, room: int) -> bool:
        ty = self.int_type()
        if not self.pool[ty]:
            return False
        pred = self.rng.choice(("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge"))
        self.emit(Instruction("icmp", (self.var(ty), self.value(ty)), self.fresh(), ty, pred=pred))
        return True

    def op_select(self, room: int) -> bool:
        if not self.pool["i1"]:
            return False
        ty = self.int_type()
        if not self.pool[ty]:
            return False
        self.emit(Instruction("select", (self.var("i1"), self.var(ty), self.value(ty)), self.fresh(), ty))
        return True

    def address(self, room: int, width: int):
        """Pointer into a data global; loop counters are never addressed."""
        g = GlobalRef(self.rng.choice(self.globals[: self.nglobals]).name)
        r = self.rng.random()
        if room >= 5 and r < 0.2:
            ix = self.fresh()
            self.emit(Instruction("and", (self.var("i64"), Const(_GLOBAL_SIZE // 8 - 1)), ix, "i64"))
            off = self.fresh()
            self.emit(Instruction("mul", (Var(ix), Const(8)), off, "i64"))
            p = self.fresh()
            self.emit(Instruction("ptradd", (g, Var(off)), p, "ptr"))
            return Var(p)
        if room >= 2 and r < 0.7:
            p = self.fresh()
            offset = self.rng.randrange(_GLOBAL_SIZE // 8) * 8
            if width < 8:
                offset += self.rng.randrange(8 // width) * width
            self.emit(Instruction("ptradd", (g, Const(offset)), p, "ptr"))
            return Var(p)
        return g

    def op_load(self, room: int) -> bool:
        ty = self.rng.choice(("i64", "i64", "i64", "i32", "i8"))
        width = {"i64": 8, "i32": 4, "i8": 1}[ty]
        ptr = self.address(room, width)
        self.emit(Instruction("load", (ptr,), self.fresh(), ty))
        return True

    def op_store(self, room: int) -> bool:
        ty = self.rng.choice([t for t in ("i64", "i64", "i32", "i8") if self.pool[t]])
        width = {"i64": 8, "i32": 4, "i8": 1}[ty]
        val = self.var(ty)
        ptr = self.address(room, width)
        self.emit(Instruction("store", (val, ptr), None, ty))
        return True

    # -- structure -----------------------------------------------------------
    def straight(self, room: int) -> None:
        """Emit one recipe using at most ``room`` instructions."""
        recipes = [
            (self.op_binary, 5),
            (self.op_udiv, 1),
            (self.op_shift, 1),
            (self.op_cast, 1),
            (self.op_icmp, 2),
            (self.op_select, 1),
            (self.op_load, 3),
            (self.op_store, 3),
        ]
        fns, weights = zip(*recipes)
        for _ in range(8):
            fn = self.rng.choices(fns, weights)[0]
            before = self.left
            if fn(room):
                assert before - self.left <= room
                return
        self.op_binary(room)

    def fill(self, n: int) -> None:
        """Emit straight-line code using exactly up to ``n`` instructions."""
        target = self.left - n
        while self.left > target:
            self.straight(self.left - target)

    def diamond(self, room: int) -> None:
        # icmp + condbr + (then ... br) + (else ... br)
        arms = room - 4
        triangle = self.rng.random() < 0.3
        then_n = self.rng.randint(0, arms)
        else_n = 0 if triangle else self.rng.randint(0, arms - then_n)
        if triangle:
            arms = then_n
        c = self.fresh()
        ty = "i64"
        self.emit(
            Instruction("icmp", (self.var(ty), self.value(ty)), c, ty, pred=self.rng.choice(("ult", "eq", "sgt", "ne")))
        )
        then_l, join_l = self.new_label(), self.new_label()
        else_l = join_l if triangle else self.new_label()
        self.close(Instruction("condbr", (Var(c), Label(then_l), Label(else_l))), then_l)
        snap = self.scope()
        self.fill(then_n)
        self.close(Instruction("br", (Label(join_l),)), else_l if not triangle else join_l)
        self.restore(snap)
        if not triangle:
            self.fill(else_n)
            self.close(Instruction("br", (Label(join_l),)), join_l)
            self.restore(snap)

    def loop(self, room: int) -> None:
        # pre: store, br | head: load, icmp, condbr | body: ..., add, store, br
        k = len(self.globals) - self.nglobals
        counter = Global(f"lc{k}", 8)
        self.globals.append(counter)
        ctr = GlobalRef(counter.name)
        trip = self.rng.randint(1, min(MAX_TRIP, 12))
        head, body, exit_ = self.new_label(), self.new_label(), self.new_label()
        self.emit(Instruction("store", (Const(0), ctr), None, "i64"))
        self.close(Instruction("br", (Label(head),)), head)
        i, c = self.fresh(), self.fresh()
        snap = self.scope()
        self.emit(Instruction("load", (ctr,), i, "i64"))
        self.emit(Instruction("icmp", (Var(i), Const(trip)), c, "i64", pred="ult"))
        self.close(Instruction("condbr", (Var(c), Label(body), Label(exit_))), body)
        inner = room - 8
        while inner > 0:
            if inner >= 6 and self.rng.random() < 0.25:
                n = self.rng.randint(6, inner)
                self.diamond(n)
                inner -= n
            else:
                before = self.left
                self.straight(inner)
                inner -= before - self.left
        nxt = self.fresh()
        self.emit(Instruction("add", (Var(i), Const(1)), nxt, "i64"))
        self.emit(Instruction("store", (Var(nxt), ctr), None, "i64"))
        self.close(Instruction("br", (Label(head),)), exit_)
        self.restore(snap)

    def program(self) -> IRModule:
        while self.left > 1:
            room = self.left - 1
            r = self.rng.random()
            if room >= 12 and r < 0.2:
                self.loop(self.rng.randint(10, min(room, 28)))
            elif room >= 6 and r < 0.45:
                self.diamond(self.rng.randint(5, min(room, 14)))
            else:
                self.straight(room)
        self.close(Instruction("ret", (self.var("i64"),)), None)
        fn = Function("main", (("a0", "i64"), ("a1", "i64")), "i64", tuple(self.blocks))
        return IRModule((fn,), tuple(self.globals), "main")


def gen_random_program(seed: int, size_budget: int) -> IRModule:
    """Generate a valid, always-terminating program of at most ``size_budget`` instructions."""
    if size_budget < 1:
        raise ValueError("size_budget must be >= 1")
    return _Gen(seed, size_budget).program()


def step_bound(m: IRModule) -> int:
    """Upper bound on dynamic steps for programs shaped like the generator's output.

    Loops are recognised by back edges; the trip count is read from the
    header's ``icmp ult %i, N`` (falling back to ``MAX_TRIP``).
    """
    fn = m.entry
    in_loop: set[str] = set()
    total = 0
    for src, header in cfg.back_edges(fn):
        body = cfg.natural_loop(fn, src, header)
        in_loop |= body
        trip = MAX_TRIP
        for ins in fn.block(header).instructions:
            if ins.opcode == "icmp" and ins.pred == "ult" and isinstance(ins.operands[1], Const):
                trip = ins.operands[1].value
        size = sum(len(fn.block(label).instructions) for label in body)
        total += (trip + 1) * size
    total += sum(len(b.instructions) for b in fn.blocks if b.label not in in_loop)
    return 4 * total
