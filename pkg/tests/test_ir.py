import re

import pytest
from hypothesis import given, strategies as st

from ithica_kit.ir import (
    ProgramInput,
    OPCODES,
    IRValidationError,
    Origin,
    ParseError,
    check_module,
    gen_random_program,
    parse_module,
    print_module,
    step_bound,
    validate_module,
)
from ithica_kit.ir.types import BasicBlock, Const, Function, Instruction, IRModule
from ithica_kit.microsim import RunStatus, run

MINIMAL = "fn @main() -> i64 { entry: ret 0 }"

LISTING = """
global @g1 8 = x"0700000000000000"
global @g2 8 = x"0500000000000000"
fn @main() -> i64 {
entry:
  %a = load i64 @g1
  %b = load i64 @g2
  %t = add i64 %a, 0
  %r0 = mul i64 %b, %a
  %r1 = mul i64 %b, %a
  ret %r0
}
"""


def rules(text):
    m = parse_module(text, validate=False)
    return {v.rule for v in validate_module(m)}


class TestParse:
    def test_minimal(self):
        m = parse_module(MINIMAL)
        assert len(m.functions) == 1
        assert len(m.entry.blocks) == 1
        assert m.entry.blocks[0].instructions == (Instruction("ret", (Const(0),)),)

    def test_two_mul_listing(self):
        m = parse_module(LISTING)
        (fn,) = m.functions
        (b,) = fn.blocks
        assert [i.opcode for i in b.instructions] == ["load", "load", "add", "mul", "mul", "ret"]
        assert all(i.origin is Origin.ORIGINAL for i in b.instructions)

    def test_undefined_value_is_named(self):
        with pytest.raises(ParseError) as exc:
            parse_module("fn @main() -> i64 { entry: %x = add i64 %nope, 1\n ret %x }")
        assert "%nope" in str(exc.value)
        assert exc.value.line == 1

    def test_syntax_error_position(self):
        with pytest.raises(ParseError) as exc:
            parse_module("fn @main() -> i64 {\nentry:\n  %x = add i64 1 2\n  ret %x\n}")
        assert exc.value.line == 3

    def test_unknown_opcode(self):
        with pytest.raises(ParseError, match="frobnicate"):
            parse_module("fn @main() -> i64 { entry: %x = frobnicate i64 1, 2\n ret %x }")

    def test_type_mismatch(self):
        with pytest.raises(ParseError, match="type"):
            parse_module("fn @main(i32 %a) -> i64 { entry: %x = add i64 %a, 1\n ret %x }")

    def test_duplicate_definition(self):
        with pytest.raises(ParseError, match="more than once"):
            parse_module("fn @main() -> i64 { entry: %x = add i64 1, 1\n %x = add i64 2, 2\n ret %x }")

    def test_constants_hex_and_negative(self):
        m = parse_module("fn @main() -> i64 { entry: %x = add i64 0x10, -1\n ret %x }")
        ops = m.entry.blocks[0].instructions[0].operands
        assert ops == (Const(16), Const((1 << 64) - 1))

    def test_origin_tags_round_trip(self):
        text = "fn @main() -> i64 {\nentry:\n  %x = add i64 1, 2\n  %y = add i64 1, 2 !validation\n  ret %x\n}"
        m = parse_module(text)
        assert m.entry.blocks[0].instructions[1].origin is Origin.VALIDATION
        assert "!validation" in print_module(m)


class TestPrint:
    def test_minimal_canonical(self):
        assert print_module(parse_module(MINIMAL)) == "entry @main\n\nfn @main() -> i64 {\nentry:\n  ret 0\n}\n"

    def test_all_opcodes_each_once(self, data_dir):
        text = print_module(parse_module((data_dir / "all_opcodes.sir").read_text()))
        for op in OPCODES:
            assert len(re.findall(rf"(?<![\w.%@]){op}(?![\w.])", text)) == 1, op

    def test_corpus_round_trip(self, data_dir):
        for path in sorted(data_dir.glob("*.sir")):
            m = parse_module(path.read_text())
            assert parse_module(print_module(m)) == m, path.name


class TestValidate:
    def test_missing_terminator(self):
        assert "missing-terminator" in rules("fn @main() -> i64 { entry: %x = add i64 1, 1 }")

    def test_unknown_target(self):
        assert "unknown-target" in rules("fn @main(i1 %c) -> i64 { entry: condbr %c, a, nowhere\na: ret 0 }")

    def test_violation_location(self):
        m = parse_module("fn @main(i1 %c) -> i64 { entry: condbr %c, a, nowhere\na: ret 0 }", validate=False)
        (v,) = validate_module(m)
        assert (v.function, v.block, v.index, v.rule) == ("main", "entry", 0, "unknown-target")

    def test_constant_zero_divisor(self):
        assert "udiv-by-zero" in rules("fn @main() -> i64 { entry: %x = udiv i64 4, 0\n ret %x }")

    def test_casts_must_change_width(self):
        assert "bad-cast" in rules("fn @main(i32 %a) -> i64 { entry: %x = zext i32 %a to i32\n ret 0 }")
        assert "bad-cast" in rules("fn @main(i32 %a) -> i64 { entry: %x = trunc i32 %a to i64\n ret 0 }")

    def test_no_result_for_side_effect_ops(self):
        m = IRModule(
            (Function("main", (), "i64", (BasicBlock("entry", (Instruction("mfence", (), "x"), Instruction("ret", (Const(0),)))),)),)
        )
        assert {v.rule for v in validate_module(m)} == {"unexpected-result"}

    def test_dominance(self):
        text = """
        fn @main(i1 %c) -> i64 {
        entry:
          condbr %c, a, b
        a:
          %x = add i64 1, 2
          br b
        b:
          ret %x
        }"""
        assert "use-not-dominated" in rules(text)

    def test_entry_function_must_exist(self):
        assert "missing-entry" in rules("entry @start\nfn @main() -> i64 { entry: ret 0 }")

    def test_check_module_raises(self):
        m = parse_module("fn @main() -> i64 { entry: %x = add i64 1, 1 }", validate=False)
        with pytest.raises(IRValidationError):
            check_module(m)

    def test_valid_module(self, data_dir):
        assert validate_module(parse_module((data_dir / "all_opcodes.sir").read_text())) == []


class TestFuzz:
    def test_budget_one_is_single_ret(self):
        m = gen_random_program(1, 1)
        assert [i.opcode for b in m.entry.blocks for i in b.instructions] == ["ret"]

    def test_deterministic(self):
        assert print_module(gen_random_program(77, 120)) == print_module(gen_random_program(77, 120))

    def test_budget_200_terminates(self):
        for seed in range(5):
            m = gen_random_program(seed, 200)
            out = run(m, ProgramInput(seed, (seed, 3 * seed)), budget=10**6)
            assert out.status is RunStatus.COMPLETED

    def test_mix(self):
        ops = set()
        for seed in range(20):
            m = gen_random_program(seed, 80)
            ops |= {i.opcode for b in m.entry.blocks for i in b.instructions}
        assert {"add", "load", "store", "condbr"} <= ops

    @given(st.integers(0, 2**64 - 1), st.integers(1, 150))
    def test_valid_round_trip_bounded(self, seed, budget):
        m = gen_random_program(seed, budget)
        assert validate_module(m) == []
        assert m.instruction_count() <= budget
        assert parse_module(print_module(m)) == m
        bound = step_bound(m)
        out = run(m, ProgramInput(seed, (seed & 0xFFFF, seed >> 48)), budget=bound)
        assert out.status is RunStatus.COMPLETED
        assert out.steps_executed <= bound

    @given(st.integers(0, 2**32))
    def test_loops_are_counted(self, seed):
        # every back edge is guarded by a compare against a constant trip count <= 64
        m = gen_random_program(seed, 100)
        from ithica_kit.ir.cfg import back_edges

        for src, dst in back_edges(m.entry):
            head = m.entry.block(dst)
            cmp = [i for i in head.instructions if i.opcode == "icmp"]
            assert cmp and isinstance(cmp[0].operands[1], Const) and cmp[0].operands[1].value <= 64
