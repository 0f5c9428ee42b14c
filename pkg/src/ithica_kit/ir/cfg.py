"""Control-flow graph utilities over a single function."""
from __future__ import annotations

from .types import Function


def successors(fn: Function) -> dict[str, tuple[str, ...]]:
    return {b.label: b.successors() for b in fn.blocks}


def predecessors(fn: Function) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {b.label: [] for b in fn.blocks}
    for b in fn.blocks:
        for t in b.successors():
            if t in preds and b.label not in preds[t]:
                preds[t].append(b.label)
    return preds


def reachable(fn: Function) -> list[str]:
    """Labels reachable from the entry, in depth-first preorder."""
    succ = successors(fn)
    seen: set[str] = set()
    order: list[str] = []
    stack = [fn.entry.label]
    while stack:
        label = stack.pop()
        if label in seen or label not in succ:
            continue
        seen.add(label)
        order.append(label)
        stack.extend(reversed(succ[label]))
    return order


def dominators(fn: Function) -> dict[str, set[str]]:
    """Dominator sets of reachable blocks (iterative dataflow)."""
    order = reachable(fn)
    preds = predecessors(fn)
    live = set(order)
    entry = fn.entry.label
    dom = {label: set(live) for label in order}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for label in order:
            if label == entry:
                continue
            ps = [p for p in preds[label] if p in live]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new = new | {label}
            if new != dom[label]:
                dom[label] = new
                changed = True
    return dom


def back_edges(fn: Function) -> list[tuple[str, str]]:
    """Edges (src, header) where the header dominates the source."""
    dom = dominators(fn)
    edges = []
    for b in fn.blocks:
        if b.label not in dom:
            continue
        for t in b.successors():
            if t in dom[b.label]:
                edges.append((b.label, t))
    return edges


def natural_loop(fn: Function, src: str, header: str) -> set[str]:
    preds = predecessors(fn)
    body = {header, src}
    stack = [src]
    while stack:
        label = stack.pop()
        if label == header:
            continue
        for p in preds[label]:
            if p not in body:
                body.add(p)
                stack.append(p)
    return body
