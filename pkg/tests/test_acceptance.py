"""End-to-end acceptance scenarios; each prints one PASS/FAIL line."""
import contextlib
import functools
import json
import math
import random
import time

import numpy as np
import pytest

from ithica_kit import cli
from ithica_kit.campaign import CampaignConfig, InputPolicy, Variant, run_campaign, run_input, serialize_report
from ithica_kit.ir import ProgramInput, gen_random_program, parse_module, print_module, step_bound, validate_module
from ithica_kit.microsim import (
    BitFlip,
    FaultKind,
    FaultSpec,
    FixedOutput,
    InputEquals,
    Level,
    LevelEquals,
    MinGap,
    PortEquals,
    ProducerInFlight,
    RunStatus,
    StuckOperandZero,
    Target,
    Wrongness,
    dump_faults,
    run,
)
from ithica_kit.sitemap import CheckSiteMap
from ithica_kit.transforms import PassConfig, instrument

from conftest import DATA
from oracles import brute_force_metrics, reported_metrics

CONFIGS = [
    ("Arith",),
    ("Mem",),
    ("MemDiv",),
    ("Br",),
    ("Arith", "Mem"),
    ("Arith", "MemDiv"),
    ("Arith", "MemDiv", "Br"),
]


def load(name):
    return parse_module((DATA / name).read_text())


def variant(m, passes, name, **kw):
    im, sm, _ = instrument(m, PassConfig(passes, **kw))
    return Variant(name, im, sm)


@pytest.fixture
def verdict(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    @contextlib.contextmanager
    def check(label):
        try:
            yield
        except BaseException:
            emit(f"{label}: FAIL")
            raise
        emit(f"{label}: PASS")

    def emit(line):
        if tr is None:
            print(line)
        else:
            tr.ensure_newline()
            tr.write_line(line)

    return check


# -- shared campaigns ------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def consistent_campaign():
    m = load("consistent_loop.sir")
    f = FaultSpec(FaultKind.CONSISTENT, Target("add"), (InputEquals((3, 4)),), FixedOutput(0xDEAD))
    cfg = CampaignConfig(
        (variant(m, ("Arith",), "Arith"), Variant("native", m)), (f,), runs=100, seed=1, inputs=InputPolicy(arg_bound=8)
    )
    return cfg, run_campaign(cfg)


@functools.lru_cache(maxsize=None)
def gap_campaign(il):
    f = FaultSpec(FaultKind.INCONSISTENT, Target("add"), (MinGap(8),), BitFlip(1))
    v = variant(load("eight_adds.sir"), ("Arith",), f"il{il}", interleaving=il)
    return run_campaign(CampaignConfig((v,), (f,), runs=20, seed=2))


@functools.lru_cache(maxsize=None)
def fill_campaign():
    m = load("two_stores.sir")
    f = FaultSpec(FaultKind.INCONSISTENT, Target("load", Level.MAIN), (LevelEquals(Level.MAIN),), BitFlip(1))
    return run_campaign(CampaignConfig((variant(m, ("Mem",), "Mem"), variant(m, ("MemDiv",), "MemDiv")), (f,), runs=20, seed=3))


BLOCK_SIZES = (1, 2, 4, 8, "dep")


@functools.lru_cache(maxsize=None)
def block_size_campaign():
    m = load("mul_chain.sir")
    f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(1))
    vs = tuple(variant(m, ("Arith",), f"bs{bs}", block_size=bs) for bs in BLOCK_SIZES)
    return run_campaign(CampaignConfig(vs, (f,), runs=20, seed=4))


P = 1e-4


@functools.lru_cache(maxsize=None)
def stochastic_campaign():
    m = load("mul_loop.sir")
    f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(0),), BitFlip(1), probability=P)
    v = variant(m, ("Arith",), "Arith")
    cfg = CampaignConfig(
        (v,),
        (f,),
        runs=50,
        seed=5,
        budget=2_000_000,
        inputs=InputPolicy("fixed", ProgramInput(0, (12345,))),
        halt_on_error=True,
    )
    start = time.perf_counter()
    rep = run_campaign(cfg)
    return v, rep, time.perf_counter() - start


# -- criteria --------------------------------------------------------------------


def test_c01_semantic_preservation(verdict):
    with verdict("C1 semantic preservation"):
        start = time.perf_counter()
        bad = []
        for seed in range(500):
            m = gen_random_program(seed, 60)
            r = random.Random(seed)
            il = r.choice([1, 2, 3, "max"])
            bs = r.choice([1, 2, 3, "dep"])
            inputs = [ProgramInput(k, (r.getrandbits(64), r.getrandbits(64))[: len(m.entry.params)]) for k in range(3)]
            base = [run(m, i, budget=step_bound(m)) for i in inputs]
            assert all(b.status is RunStatus.COMPLETED for b in base)
            for passes in CONFIGS:
                im, sm, _ = instrument(m, PassConfig(passes, il, bs))
                assert validate_module(im) == []
                for i, b in zip(inputs, base):
                    o = run(im, i, site_map=sm)
                    if (o.status, o.return_value, o.memory, o.detections) != (b.status, b.return_value, b.memory, ()):
                        bad.append((seed, passes, il, bs))
        elapsed = time.perf_counter() - start
        assert bad == []
        assert elapsed < 120, elapsed


ROWS = [
    ("arith", "Arith"),
    ("load", "Mem"),
    ("store", "Mem"),
    ("load", "MemDiv"),
    ("store", "MemDiv"),
    ("branch", "Br"),
]


def test_c02_table_shapes(verdict):
    with verdict("C2 transformation shapes"):
        d = DATA / "shapes"
        for src, p in ROWS:
            im, sm, _ = instrument(parse_module((d / f"{src}.sir").read_text()), PassConfig((p,)))
            assert print_module(im) == (d / f"{src}-{p}.sir").read_text(), (src, p)
            assert sm == CheckSiteMap.from_json((d / f"{src}-{p}.map.json").read_text()), (src, p)


def test_c03_stale_forwarding(verdict):
    with verdict("C3 stale forwarding"):
        f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (ProducerInFlight(0, 2),), StuckOperandZero(0))
        im, sm, _ = instrument(load("stale_forwarding.sir"), PassConfig(("Arith",), "max"))
        out = run(im, ProgramInput(), [f], site_map=sm)
        (ev,) = out.detections
        assert ev.wrongness is Wrongness.ORIGINAL_WRONG
        assert (ev.original_value, ev.validation_values) == (0, (35,))
        native = run(load("stale_forwarding_native.sir"), ProgramInput(), [f])
        assert native.faults_fired == 1 and native.return_value == 0
        assert native.detections == ()


def _add_34_occurs(m, inp):
    out = run(m, inp, trace=True)
    return any(t["opcode"] == "add" and t["operands"] == [3, 4] for t in out.trace)


def test_c04_consistent_blindness(verdict):
    with verdict("C4 consistent-error blindness"):
        cfg, rep = consistent_campaign()
        ith, native = rep.variant("Arith"), rep.variant("native")
        assert ith.runs_total == 100 and ith.total_detections == 0
        m = cfg.variants[1].module
        triggering = [_add_34_occurs(m, run_input(cfg, m, k)) for k in range(100)]
        assert any(triggering)
        assert [bool(r.native_events) for r in native.runs] == triggering


def test_c05_interleaving_threshold(verdict):
    with verdict("C5 interleaving threshold"):
        assert gap_campaign(1).variants[0].runs_with_detection == 0
        v8 = gap_campaign(8).variants[0]
        assert v8.runs_total == 20 and v8.runs_with_detection == 20


def test_c06_memdiv_uniqueness(verdict):
    with verdict("C6 MemDiv uniqueness"):
        rep = fill_campaign()
        assert rep.variant("Mem").total_detections == 0
        events = [e for r in rep.variant("MemDiv").runs for e in r.ithica_events]
        assert events and {e.ordinal for e in events} == {3}
        assert {e.pass_name for e in events} == {"MemDiv"}


def test_c07_metrics_oracle(verdict):
    from ithica_kit.campaign import compute_bb_sensitivity, compute_input_breadth, compute_pc_sensitivity

    with verdict("C7 metrics oracle equivalence"):
        reports = [
            consistent_campaign()[1],
            gap_campaign(1),
            gap_campaign(8),
            fill_campaign(),
            block_size_campaign(),
            stochastic_campaign()[1],
        ]
        for r in reports:
            doc = json.loads(serialize_report(r))
            assert reported_metrics(doc) == brute_force_metrics(doc)
        assert abs(float(compute_pc_sensitivity(5, 1202)) - 0.42) <= 0.005
        assert abs(float(compute_bb_sensitivity(4, 664)) - 0.60) <= 0.005
        inputs = [f"in{k}" for k in range(7)] + ["in0"] * 15
        assert abs(float(compute_input_breadth(inputs)) - 31.82) <= 0.005


def test_c08_block_size_relaxation(verdict):
    with verdict("C8 block-size relaxation"):
        rep = block_size_campaign()
        counts = []
        for bs, v in zip(BLOCK_SIZES, rep.variants):
            assert v.runs_with_detection > 0, bs
        for bs in BLOCK_SIZES:
            _, sm, _ = instrument(load("mul_chain.sir"), PassConfig(("Arith",), 1, bs))
            counts.append(len(sm))
        assert counts[:4] == [16 // bs for bs in BLOCK_SIZES[:4]]
        assert all(a > b for a, b in zip(counts[:4], counts[1:4]))
        assert counts[4] == 1


def test_c09_determinism_parallelism(verdict, tmp_path):
    with verdict("C9 determinism and parallelism"):
        m = load("mul_chain.sir")
        f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(3), probability=0.25)
        cfg = CampaignConfig(
            tuple(variant(m, ("Arith",), f"bs{bs}", block_size=bs) for bs in (1, 4)), (f,), runs=24, seed=9
        )
        outs = {jobs: serialize_report(run_campaign(cfg, jobs=jobs)) for jobs in (1, 2, 4)}
        assert outs[1] == outs[2] == outs[4]
        assert serialize_report(run_campaign(cfg)) == outs[1]

        (tmp_path / "p.sir").write_text((DATA / "mul_chain.sir").read_text())
        (tmp_path / "f.json").write_text(dump_faults([f]))
        conf = {
            "seed": 9,
            "runs": 16,
            "faults": "f.json",
            "variants": [{"name": "a", "source": "p.sir", "passes": ["arith"], "block_size": 2}],
        }
        (tmp_path / "c.json").write_text(json.dumps(conf))
        files = []
        for jobs in ("1", "3", "1"):
            out = tmp_path / f"r{len(files)}.json"
            assert cli.main(["campaign", "--config", str(tmp_path / "c.json"), "-o", str(out), "--jobs", jobs]) == 0
            files.append(out.read_bytes())
        assert files[0] == files[1] == files[2]


def _trials_per_step(v):
    # measure how many port-0 mul executions occur per step on a short fault-free prefix
    out = run(v.module, ProgramInput(0, (12345,)), budget=50_000, trace=True)
    trials = sum(1 for t in out.trace if t["opcode"] == "mul" and t["ctx"]["port"] == 0)
    return trials / len(out.trace)


def test_c10_stochastic_ttd(verdict):
    with verdict("C10 stochastic TTD"):
        v, rep, elapsed = stochastic_campaign()
        ttd = [r.first_detection_step for r in rep.variants[0].runs]
        assert None not in ttd
        rate = _trials_per_step(v)
        for q in (0.25, 0.5, 0.75):
            trials = math.ceil(math.log(1 - q) / math.log(1 - P))
            expected = trials / rate
            got = float(np.quantile(ttd, q))
            assert expected / 3 <= got <= expected * 3, (q, got, expected)
        assert elapsed < 60, elapsed
