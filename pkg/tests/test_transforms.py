import json
from collections import defaultdict

import pytest
from hypothesis import given, strategies as st

from ithica_kit.ir import Origin, ProgramInput, gen_random_program, parse_module, print_module, validate_module
from ithica_kit.ir.types import ARITH_OPS, Label
from ithica_kit.microsim import run
from ithica_kit.sitemap import CheckSiteMap
from ithica_kit.transforms import (
    TOKEN_BASE,
    ConfigError,
    PassConfig,
    count_checked,
    dep_chain_ends,
    instrument,
    instrument_arith,
    instrument_br,
    instrument_combined,
    instrument_mem,
    instrument_memdiv,
)

CONFIGS = [
    ("Arith",),
    ("Mem",),
    ("MemDiv",),
    ("Br",),
    ("Arith", "Mem"),
    ("Arith", "MemDiv"),
    ("Arith", "MemDiv", "Br"),
]

SHAPES = [
    ("arith", "Arith"),
    ("load", "Mem"),
    ("store", "Mem"),
    ("load", "MemDiv"),
    ("store", "MemDiv"),
    ("branch", "Br"),
]


def body(m, label="entry"):
    return m.entry.block(label).instructions


def originals(m):
    # branch targets may be redirected through trampolines, so labels are left out
    return [
        (ins.opcode, ins.result, ins.ty, tuple(o for o in ins.operands if not isinstance(o, Label)))
        for b in m.entry.blocks
        for ins in b.instructions
        if ins.origin is Origin.ORIGINAL
    ]


@pytest.mark.parametrize("src,pass_name", SHAPES)
def test_golden_shapes(data_dir, src, pass_name):
    d = data_dir / "shapes"
    im, sm, _ = instrument(parse_module((d / f"{src}.sir").read_text()), PassConfig((pass_name,)))
    assert print_module(im) == (d / f"{src}-{pass_name}.sir").read_text()
    assert sm == CheckSiteMap.from_json((d / f"{src}-{pass_name}.map.json").read_text())


class TestArith:
    SRC = "fn @main(i64 %a) -> i64 { entry: %r1 = add i64 %a, 1\n %r2 = add i64 %r1, 2\n %r3 = add i64 %r2, 3\n %r4 = add i64 %r3, 4\n %r5 = add i64 %r4, 5\n ret %r5 }"

    def test_duplicate_reads_duplicate_chain(self):
        im, _, _ = instrument_arith(parse_module(self.SRC))
        dup2 = next(i for i in body(im) if i.result == "r2.dup")
        assert [o.name for o in dup2.operands[:1]] == ["r1.dup"]

    def test_block_size_two(self):
        im, sm, st = instrument_arith(parse_module(self.SRC), PassConfig(("Arith",), 1, 2))
        assert st.validations_inserted == 5
        assert [s.pc for s in sm] == [1, 3]
        assert st.checks_inserted == 2
        branches = [i for b in im.entry.blocks for i in b.instructions if i.opcode == "condbr"]
        assert len(branches) == 1
        assert st.reporting_blocks_added == 1

    def test_no_targets_unchanged(self):
        m = parse_module('global @g 8 = x""\nfn @main() -> i64 { entry: %v = load i64 @g\n ret %v }')
        im, sm, st = instrument_arith(m)
        assert im.functions == m.functions and len(sm) == 0
        assert st.reporting_blocks_added == 0

    def test_interleaving_groups(self):
        im, _, _ = instrument_arith(parse_module(self.SRC), PassConfig(("Arith",), 2, 1))
        tags = [i.origin.value[0] for i in body(im) if i.opcode == "add"]
        assert "".join(tags) == "oovvoovvov"

    def test_interleaving_max(self):
        im, _, _ = instrument_arith(parse_module(self.SRC), PassConfig(("Arith",), "max", 1))
        tags = [i.origin.value[0] for i in body(im) if i.opcode == "add"]
        assert "".join(tags) == "ooooovvvvv"


class TestMemory:
    def test_load_store_interleaved(self):
        m = parse_module(
            'global @g 8 = x""\nglobal @h 8 = x""\n'
            "fn @main(i64 %a) -> i64 { entry: %x = load i64 @g\n store i64 %a, @h\n ret %x }"
        )
        im, sm, _ = instrument_mem(m, PassConfig(("Mem",), 2, 1))
        ops = [(i.opcode, i.origin) for i in body(im)]
        assert ops[:6] == [
            ("load", Origin.ORIGINAL),
            ("store", Origin.ORIGINAL),
            ("load", Origin.VALIDATION),
            ("load", Origin.VALIDATION),
            ("icmp", Origin.CHECK),
            ("icmp", Origin.CHECK),
        ]
        assert [s.opcode for s in sm] == ["load", "store"]

    def test_aliasing_store_flushes_group(self):
        m = parse_module(
            'global @g 8 = x""\nfn @main(i64 %a) -> i64 { entry: %x = load i64 @g\n store i64 %a, @g\n ret %x }'
        )
        im, _, _ = instrument_mem(m, PassConfig(("Mem",), 2, 1))
        ops = [(i.opcode, i.origin) for i in body(im)][:3]
        assert ops == [("load", Origin.ORIGINAL), ("load", Origin.VALIDATION), ("icmp", Origin.CHECK)]
        assert run(im, ProgramInput(0, (9,))).detections == ()

    def test_arith_only_unchanged(self):
        m = parse_module("fn @main(i64 %a) -> i64 { entry: %x = add i64 %a, 1\n ret %x }")
        for f in (instrument_mem, instrument_memdiv):
            im, sm, _ = f(m)
            assert im.functions == m.functions and len(sm) == 0

    def test_memdiv_ordinals(self, data_dir):
        m = parse_module((data_dir / "shapes" / "store.sir").read_text())
        _, sm, st = instrument_memdiv(m)
        assert [s.ordinal for s in sm] == [1, 2, 3]
        assert count_checked(sm) == 1
        assert st.diversity_inserted == 2


class TestBranch:
    DIAMOND = """
    fn @main(i64 %a) -> i64 {
    entry:
      %c = icmp ult i64 %a, 10
      condbr %c, left, right
    left:
      %x = add i64 %a, 1
      br join
    right:
      %y = add i64 %a, 2
      br join
    join:
      %z = select i64 %c, 1, 2
      ret %z
    }"""

    def test_diamond(self):
        m = parse_module(self.DIAMOND)
        im, sm, st = instrument_br(m)
        assert st.trampolines_added == 2
        assert im.entry.block("join") == m.entry.block("join")
        assert im.entry.block("left") == m.entry.block("left")
        assert [i.operands[1:] for i in im.entry.block("entry").instructions if i.opcode == "condbr"][0][0].name == "entry.to.left"
        assert all(s.tokens == (TOKEN_BASE + 1, TOKEN_BASE + 2) for s in sm)
        for a in (3, 30):
            out = run(im, ProgramInput(0, (a,)), site_map=sm)
            assert out.detections == () and out.return_value == (1 if a < 10 else 2)

    def test_flipped_branch_detected(self):
        from ithica_kit.microsim import BitFlip, FaultKind, FaultSpec, HistoryContains, Target

        im, sm, _ = instrument_br(parse_module(self.DIAMOND))
        f = FaultSpec(FaultKind.INCONSISTENT, Target("condbr"), (HistoryContains("store", 1),), BitFlip(1))
        out = run(im, ProgramInput(0, (3,)), [f], site_map=sm)
        (ev,) = out.detections
        assert ev.opcode == "condbr" and ev.original_value == TOKEN_BASE + 2
        assert ev.validation_values == (TOKEN_BASE + 1,)

    def test_unconditional_only_unchanged(self):
        m = parse_module("fn @main() -> i64 { entry: br next\nnext: ret 0 }")
        im, sm, _ = instrument_br(m)
        assert im.functions == m.functions and len(sm) == 0


class TestDep:
    def block(self, text):
        return parse_module(text).entry.blocks[0]

    def test_chain(self):
        b = self.block("fn @main(i64 %x) -> i64 { entry: %a = add i64 %x, 1\n %b = add i64 %a, 1\n %c = add i64 %b, 1\n ret %c }")
        assert dep_chain_ends(b) == {2}

    def test_independent(self):
        b = self.block("fn @main(i64 %x) -> i64 { entry: %a = add i64 %x, 1\n %b = add i64 %x, 2\n ret %a }")
        assert dep_chain_ends(b) == {0, 1}

    def test_diamond(self):
        b = self.block(
            "fn @main(i64 %x) -> i64 { entry: %a = add i64 %x, 1\n %b = mul i64 %a, 3\n"
            " %c = sub i64 %a, 2\n %d = xor i64 %b, %c\n ret %d }"
        )
        assert dep_chain_ends(b) == {3}

    @given(st.integers(0, 2**32))
    def test_maximal_elements_brute_force(self, seed):
        m = gen_random_program(seed, 60)
        for b in m.entry.blocks:
            ins = b.instructions
            targets = [i for i, x in enumerate(ins) if x.origin is Origin.ORIGINAL and x.opcode in ARITH_OPS]
            ends = {i for i in targets if not any(ins[i].result in ins[j].uses() for j in targets)}
            assert dep_chain_ends(b) == ends


class TestCombined:
    LSA = 'global @g 8 = x"0300000000000000"\nfn @main(i64 %a) -> i64 { entry: %x = load i64 @g\n %y = add i64 %x, %a\n store i64 %y, @g\n ret %y }'

    def test_origin_audit(self):
        im, sm, st = instrument(parse_module(self.LSA), PassConfig(("Arith", "MemDiv")))
        val = [i for b in im.entry.blocks for i in b.instructions if i.origin is Origin.VALIDATION]
        assert [i.opcode for i in val].count("add") == 1
        assert [i.opcode for i in val].count("load") == 5
        assert st.originals_targeted == {"Arith": 1, "MemDiv": 2}
        assert {s.pass_name for s in sm if s.opcode == "add"} == {"Arith"}
        for s in sm:
            assert s.opcode in ("add", "load", "store")

    def test_br_on_straight_line_is_noop(self):
        m = parse_module(self.LSA)
        a, sa, _ = instrument(m, PassConfig(("Arith", "Mem")))
        b, sb, _ = instrument(m, PassConfig(("Arith", "Mem", "Br")))
        assert a.functions == b.functions and a.globals == b.globals and sa == sb

    def test_empty_function_unchanged(self):
        m = parse_module("fn @main() -> i64 { entry: ret 0 }")
        for c in CONFIGS:
            im, sm, _ = instrument(m, PassConfig(c))
            assert im.functions == m.functions and len(sm) == 0

    def test_idempotent(self):
        m = parse_module(self.LSA)
        for c in CONFIGS:
            im, sm, _ = instrument(m, PassConfig(c))
            again, sm2, st2 = instrument(im, PassConfig(c))
            assert again == im and len(sm2) == 0 and st2.checks_inserted == 0

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            PassConfig(("Mem", "MemDiv"))
        with pytest.raises(ConfigError):
            PassConfig(("Arith",), 0)
        with pytest.raises(ConfigError):
            PassConfig(("Arith",), 1, "deep")
        with pytest.raises(ConfigError):
            instrument_combined(parse_module(self.LSA), PassConfig(("Arith",)))
        assert PassConfig(("br", "arith")).passes == ("Arith", "Br")
        assert PassConfig("memdiv,arith").suffix == "Arith+MemDiv"

    def test_stats_json(self):
        m = parse_module(self.LSA)
        im, _, st = instrument(m, PassConfig(("Arith", "Mem", "Br")))
        d = json.loads(st.to_json())
        assert d["instructions_before"] == m.instruction_count()
        assert d["instructions_after"] == im.instruction_count()


def _recount(m, sm, pass_name):
    by_block = defaultdict(set)
    for s in sm:
        if s.pass_name == pass_name:
            by_block[s.block].add(s.pc)
    return by_block


@given(st.integers(0, 2**32), st.sampled_from([1, 2, 3, 4, "dep"]), st.sampled_from([1, 2, 3, "max"]))
def test_check_frequency(seed, bs, il):
    m = gen_random_program(seed, 80)
    im, sm, _ = instrument(m, PassConfig(("Arith",), il, bs))
    got = _recount(im, sm, "Arith")
    for b in m.entry.blocks:
        k = sum(1 for i in b.instructions if i.origin is Origin.ORIGINAL and i.opcode in ARITH_OPS)
        want = len(dep_chain_ends(b)) if bs == "dep" else k // bs
        assert len(got.get(b.label, ())) == want


@given(st.integers(0, 2**32), st.sampled_from(CONFIGS), st.sampled_from([1, 2, "max"]), st.sampled_from([1, 2, "dep"]))
def test_outputs_validate_and_keep_originals(seed, passes, il, bs):
    m = gen_random_program(seed, 80)
    im, sm, st = instrument(m, PassConfig(passes, il, bs))
    assert validate_module(im) == []
    assert sorted(originals(im), key=repr) == sorted(originals(m), key=repr)
    assert st.instructions_after == im.instruction_count()
    # each check site is reported by exactly one report_error
    reported = [
        i.operands[0].value
        for b in im.entry.blocks
        for i in b.instructions
        if i.opcode == "report_error" and i.origin is Origin.REPORTING
    ]
    assert sorted(reported) == [s.site_id for s in sm]


@given(st.integers(0, 2**32), st.sampled_from([1, 2, 3, 5, "max"]))
def test_every_target_validated(seed, il):
    m = gen_random_program(seed, 80)
    im, _, st = instrument(m, PassConfig(("Arith",), il, 1))
    targets = sum(1 for o in originals(m) if o[0] in ARITH_OPS)
    assert st.validations_inserted == targets
    # validation i follows its original: originals never lag more than il targets behind
    for b in im.entry.blocks:
        pending = 0
        for i in b.instructions:
            if i.opcode in ARITH_OPS and i.origin is Origin.ORIGINAL:
                pending += 1
            elif i.opcode in ARITH_OPS and i.origin is Origin.VALIDATION:
                pending -= 1
            assert 0 <= pending <= (10**9 if il == "max" else il)
