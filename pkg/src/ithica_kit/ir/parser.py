"""Parser for the textual IR.

Grammar (whitespace-insensitive, ``//`` comments)::

    module   := item*
    item     := "entry" @name
              | "instrumented" pass ("," pass)*
              | "global" @name SIZE ("=" x"HEX")?
              | "fn" @name "(" (type %p ("," type %p)*)? ")" "->" type "{" block+ "}"
    block    := label ":" instr*
    instr    := (%r "=")? opcode operands ("!" origin)?

Per-opcode operand syntax is documented in README.md.
"""
from __future__ import annotations

import re
from typing import Optional

from .types import (
    BINARY_OPS,
    OPCODES,
    VALUE_TYPES,
    BasicBlock,
    Const,
    Function,
    Global,
    GlobalRef,
    Instruction,
    IRModule,
    Label,
    Origin,
    Var,
)
from .validate import validate_module


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<arrow>->)
  | (?P<bytes>x"[0-9a-fA-F]*")
  | (?P<var>%[A-Za-z0-9_.]+)
  | (?P<glob>@[A-Za-z0-9_.]+)
  | (?P<tag>![a-z]+)
  | (?P<num>-?0x[0-9a-fA-F]+|-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[(){},:=])
    """,
    re.VERBOSE,
)


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text!r}@{self.line}:{self.col}"


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


def _int(text: str) -> int:
    neg = text.startswith("-")
    body = text[1:] if neg else text
    value = int(body, 16) if body.lower().startswith("0x") else int(body)
    # negative literals wrap to 64-bit two's complement
    return (-value) & ((1 << 64) - 1) if neg else value


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    # -- token helpers -----------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[_Tok] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def advance(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("punct", "ident", "arrow"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> _Tok:
        if self.tok.kind != kind:
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def type_(self) -> str:
        t = self.tok
        if t.kind != "ident" or t.text not in VALUE_TYPES:
            raise self.error(f"expected a type, found {t.text!r}")
        self.i += 1
        return t.text

    # -- grammar -----------------------------------------------------------
    def module(self) -> IRModule:
        functions: list[Function] = []
        globals_: list[Global] = []
        entry: Optional[str] = None
        instrumented: list[str] = []
        while self.tok.kind != "eof":
            t = self.tok
            if t.text == "fn":
                functions.append(self.function())
            elif t.text == "global":
                self.advance()
                name = self.expect_kind("glob", "global name").text[1:]
                size = _int(self.expect_kind("num", "global size").text)
                init = b""
                if self.accept("="):
                    lit = self.expect_kind("bytes", 'x"..." initializer').text
                    hexdigits = lit[2:-1]
                    if len(hexdigits) % 2:
                        raise self.error("odd number of hex digits in initializer")
                    init = bytes.fromhex(hexdigits)
                    if len(init) > size:
                        raise self.error(f"initializer for @{name} longer than its size")
                globals_.append(Global(name, size, init))
            elif t.text == "entry":
                self.advance()
                entry = self.expect_kind("glob", "entry function name").text[1:]
            elif t.text == "instrumented":
                self.advance()
                instrumented.append(self.expect_kind("ident", "pass name").text)
                while self.accept(","):
                    instrumented.append(self.expect_kind("ident", "pass name").text)
            else:
                raise self.error(f"expected 'fn', 'global', 'entry' or 'instrumented', found {t.text!r}")
        if entry is None:
            names = [f.name for f in functions]
            entry = "main" if "main" in names or not names else names[0]
        return IRModule(tuple(functions), tuple(globals_), entry, tuple(instrumented))

    def function(self) -> Function:
        self.expect("fn")
        name = self.expect_kind("glob", "function name").text[1:]
        self.expect("(")
        params: list[tuple[str, str]] = []
        if self.tok.text != ")":
            while True:
                ty = self.type_()
                pname = self.expect_kind("var", "parameter name").text[1:]
                params.append((pname, ty))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("->")
        ret = self.type_()
        self.expect("{")
        blocks: list[BasicBlock] = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated function body")
            blocks.append(self.block())
        return Function(name, tuple(params), ret, tuple(blocks))

    def block(self) -> BasicBlock:
        t = self.tok
        if t.kind != "ident" or self.peek().text != ":":
            raise self.error(f"expected a block label, found {t.text!r}")
        self.i += 2
        instrs: list[Instruction] = []
        while True:
            nxt = self.tok
            if nxt.text == "}" or nxt.kind == "eof":
                break
            if nxt.kind == "ident" and self.peek().text == ":":
                break
            instrs.append(self.instruction())
        return BasicBlock(t.text, tuple(instrs))

    def operand(self):
        t = self.tok
        if t.kind == "var":
            self.i += 1
            return Var(t.text[1:])
        if t.kind == "glob":
            self.i += 1
            return GlobalRef(t.text[1:])
        if t.kind == "num":
            self.i += 1
            return Const(_int(t.text))
        raise self.error(f"expected an operand, found {t.text!r}")

    def label(self) -> Label:
        return Label(self.expect_kind("ident", "block label").text)

    def instruction(self) -> Instruction:
        start = self.tok
        result = None
        if start.kind == "var" and self.peek().text == "=":
            result = start.text[1:]
            self.i += 2
        optok = self.tok
        if optok.kind != "ident":
            raise self.error(f"expected an opcode, found {optok.text!r}")
        op = optok.text
        if op not in OPCODES:
            raise self.error(f"unknown opcode {op!r}")
        self.i += 1
        ty = src_ty = pred = None
        ops: list = []
        if op in BINARY_OPS or op == "ptradd":
            ty = self.type_()
            ops = [self.operand()]
            self.expect(",")
            ops.append(self.operand())
        elif op == "icmp":
            pred = self.expect_kind("ident", "icmp predicate").text
            ty = self.type_()
            ops = [self.operand()]
            self.expect(",")
            ops.append(self.operand())
        elif op == "select":
            ty = self.type_()
            ops = [self.operand()]
            for _ in range(2):
                self.expect(",")
                ops.append(self.operand())
        elif op in ("trunc", "zext"):
            src_ty = self.type_()
            ops = [self.operand()]
            self.expect("to")
            ty = self.type_()
        elif op == "load":
            ty = self.type_()
            ops = [self.operand()]
        elif op == "store":
            ty = self.type_()
            ops = [self.operand()]
            self.expect(",")
            ops.append(self.operand())
        elif op == "br":
            ops = [self.label()]
        elif op == "condbr":
            ops = [self.operand()]
            self.expect(",")
            ops.append(self.label())
            self.expect(",")
            ops.append(self.label())
        elif op == "ret":
            if self.tok.kind == "ident" and self.tok.text in VALUE_TYPES:
                self.type_()  # optional annotation; checked against the signature
            ops = [self.operand()]
        elif op == "clflush":
            ops = [self.operand()]
        elif op == "report_error":
            ops = [self.operand()]
            while self.accept(","):
                ops.append(self.operand())
        origin = Origin.ORIGINAL
        if self.tok.kind == "tag":
            tag = self.advance()
            try:
                origin = Origin(tag.text[1:])
            except ValueError:
                raise self.error(f"unknown origin tag {tag.text!r}", tag) from None
        return Instruction(op, tuple(ops), result, ty, src_ty, pred, origin, loc=(optok.line, optok.col))


def parse_module(text: str, *, validate: bool = True) -> IRModule:
    """Parse ``.sir`` text into a module.

    Raises :class:`ParseError` with a line/column for syntax errors and for
    the first semantic violation (type mismatch, duplicate definition, ...).
    """
    m = _Parser(text).module()
    if validate:
        violations = validate_module(m)
        if violations:
            first = next((v for v in violations if v.loc is not None), violations[0])
            line, col = first.loc or (0, 0)
            msg = "; ".join(str(v) for v in violations)
            err = ParseError(msg, line, col)
            err.violations = violations
            raise err
    return m
