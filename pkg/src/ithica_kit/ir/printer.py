"""Canonical text form of IR modules (``.sir``)."""
from __future__ import annotations

from .types import BasicBlock, Function, Instruction, IRModule, Origin


def _ops(ins: Instruction, start: int = 0) -> str:
    return ", ".join(str(op) for op in ins.operands[start:])


def format_instruction(ins: Instruction) -> str:
    op = ins.opcode
    if op == "icmp":
        body = f"icmp {ins.pred} {ins.ty} {_ops(ins)}"
    elif op in ("trunc", "zext"):
        body = f"{op} {ins.src_ty} {ins.operands[0]} to {ins.ty}"
    elif op in ("load", "store"):
        body = f"{op} {ins.ty} {_ops(ins)}"
    elif op in ("br", "condbr", "ret", "mfence", "clflush", "report_error"):
        body = f"{op} {_ops(ins)}".rstrip()
    else:
        body = f"{op} {ins.ty} {_ops(ins)}"
    if ins.result is not None:
        body = f"%{ins.result} = {body}"
    if ins.origin is not Origin.ORIGINAL:
        body += f" !{ins.origin.value}"
    return body


def format_block(b: BasicBlock) -> str:
    lines = [f"{b.label}:"]
    lines.extend(f"  {format_instruction(ins)}" for ins in b.instructions)
    return "\n".join(lines)


def format_function(fn: Function) -> str:
    params = ", ".join(f"{ty} %{name}" for name, ty in fn.params)
    blocks = "\n".join(format_block(b) for b in fn.blocks)
    return f"fn @{fn.name}({params}) -> {fn.ret_type} {{\n{blocks}\n}}"


def print_module(m: IRModule) -> str:
    lines = [f"entry @{m.entry_function}"]
    if m.instrumented:
        lines.append("instrumented " + ", ".join(m.instrumented))
    for g in m.globals:
        if any(g.init):
            lines.append(f'global @{g.name} {g.size} = x"{g.init.hex()}"')
        else:
            lines.append(f"global @{g.name} {g.size}")
    out = "\n".join(lines) + "\n"
    for fn in m.functions:
        out += "\n" + format_function(fn) + "\n"
    return out
