import csv
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from ithica_kit.campaign import (
    CampaignConfig,
    CampaignConfigError,
    InputPolicy,
    Variant,
    config_from_json,
    parse_report,
    run_campaign,
    run_input,
    serialize_report,
)
from ithica_kit.ir import ProgramInput, gen_random_program, parse_module
from ithica_kit.microsim import BitFlip, FaultKind, FaultSpec, PortEquals, Target
from ithica_kit.transforms import PassConfig, instrument

from oracles import brute_force_metrics, reported_metrics

PARITY = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(1))


def variant(m, passes=("Arith",), name=None, **kw):
    im, sm, _ = instrument(m, PassConfig(passes, **kw))
    return Variant(name or "-".join(passes), im, sm)


def assert_metrics_match(report):
    doc = json.loads(serialize_report(report))
    assert reported_metrics(doc) == brute_force_metrics(doc)
    return doc


@pytest.fixture
def chain(data_dir):
    return parse_module((data_dir / "mul_chain.sir").read_text())


def test_no_faults_no_detections(chain):
    r = run_campaign(CampaignConfig((variant(chain),), (), runs=10))
    v = r.variants[0]
    assert v.runs_with_detection == 0
    m = {x.name: x.value for x in v.metrics() if x.opcode is None}
    assert m["EDR"] == 0 and m["EF"] == 0 and m["TTD"] is None
    assert_metrics_match(r)


def test_port_parity_detects_every_run(chain):
    r = run_campaign(CampaignConfig((variant(chain),), (PARITY,), runs=10, seed=3))
    v = r.variants[0]
    assert v.runs_with_detection == 10
    assert all(e.wrongness is not None for run in v.runs for e in run.events)
    doc = assert_metrics_match(r)
    assert doc["variants"][0]["opcodes"]["mul"]["total_pcs"] == 16


def test_variants_share_inputs(chain):
    cfg = CampaignConfig((variant(chain), Variant("plain", chain)), (), runs=5, seed=11)
    r = run_campaign(cfg)
    a, b = r.variants
    assert [x.return_value for x in a.runs] == [x.return_value for x in b.runs]
    assert run_input(cfg, chain, 2) == run_input(cfg, chain, 2)
    assert run_input(cfg, chain, 2) != run_input(cfg, chain, 3)


def test_fixed_policy():
    pol = InputPolicy("fixed", ProgramInput(1, (7,)))
    m = parse_module("fn @main(i64 %a) -> i64 { entry: %x = mul i64 %a, 3\n ret %x }")
    r = run_campaign(CampaignConfig((Variant("p", m),), runs=4, inputs=pol))
    assert {x.return_value for x in r.variants[0].runs} == {21}


def test_deterministic_and_jobs_invariant(chain):
    f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(2), probability=0.3)
    cfg = CampaignConfig((variant(chain), variant(chain, name="bs4", block_size=4)), (f,), runs=12, seed=8)
    one = serialize_report(run_campaign(cfg))
    assert serialize_report(run_campaign(cfg)) == one
    assert serialize_report(run_campaign(cfg, jobs=3)) == one


def test_json_fixpoint(chain):
    r = run_campaign(CampaignConfig((variant(chain),), (PARITY,), runs=3))
    text = serialize_report(r)
    assert serialize_report(parse_report(text)) == text


def test_csv_rows(data_dir, chain):
    lsa = parse_module(
        'global @g 8 = x"0300000000000000"\n'
        "fn @main(i64 %a) -> i64 { entry: %x = load i64 @g\n %y = add i64 %x, %a\n store i64 %y, @g\n ret %y }"
    )
    cfg = CampaignConfig((variant(lsa, ("Arith", "Mem")), variant(chain), Variant("plain", chain)), runs=2)
    rows = list(csv.DictReader(io.StringIO(serialize_report(run_campaign(cfg), "csv").decode())))
    assert [(r["variant"], r["opcode"]) for r in rows] == [
        ("Arith-Mem", "add"),
        ("Arith-Mem", "load"),
        ("Arith-Mem", "store"),
        ("Arith", "mul"),
    ]


def test_empty_campaign():
    r = run_campaign(CampaignConfig((), runs=1))
    doc = json.loads(serialize_report(r))
    assert doc["schema_version"] == 1 and doc["variants"] == []
    assert serialize_report(r, "csv").decode().count("\n") == 1


def test_config_errors(chain):
    with pytest.raises(CampaignConfigError):
        CampaignConfig((Variant("a", chain), Variant("a", chain)))
    with pytest.raises(CampaignConfigError):
        CampaignConfig((), runs=0)
    with pytest.raises(CampaignConfigError):
        InputPolicy("fixed")


def test_config_from_json(data_dir, tmp_path):
    doc = {
        "seed": 4,
        "runs": 3,
        "faults": [PARITY.to_json()],
        "inputs": {"policy": "fresh", "arg_bound": 100},
        "variants": [
            {"name": "plain", "source": str(data_dir / "mul_chain.sir")},
            {"name": "ith", "source": str(data_dir / "mul_chain.sir"), "passes": ["arith"], "block_size": "dep"},
        ],
    }
    cfg = config_from_json(doc)
    assert [len(v.site_map or ()) for v in cfg.variants] == [0, 1]
    r = run_campaign(cfg)
    assert r.variant("ith").runs_with_detection == 3
    assert all(0 <= x < 100 for k in range(3) for x in run_input(cfg, cfg.variants[0].module, k).arg_values)


@settings(max_examples=15)
@given(st.integers(0, 2**16), st.sampled_from([("Arith",), ("Arith", "Mem"), ("MemDiv", "Br")]))
def test_random_campaign_metrics_match_oracle(seed, passes):
    m = gen_random_program(seed, 60)
    f = FaultSpec(FaultKind.INCONSISTENT, Target("*"), (PortEquals(1),), BitFlip(1), probability=0.2)
    r = run_campaign(CampaignConfig((variant(m, passes),), (f,), runs=6, seed=seed, budget=20_000))
    assert_metrics_match(r)


def test_edr_monotone_in_probability(chain):
    # paired seeds: every run sees the same uniform draws, so doubling p only adds firings
    def detected(p):
        f = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(1), probability=p)
        rep = run_campaign(CampaignConfig((variant(chain),), (f,), runs=60, seed=12))
        return [bool(r.ithica_events) for r in rep.variants[0].runs]

    for p in (0.005, 0.02, 0.1):
        lo, hi = detected(p), detected(2 * p)
        assert all(h or not l for l, h in zip(lo, hi))
        assert sum(lo) <= sum(hi)


@settings(max_examples=10)
@given(st.integers(0, 2**16), st.sampled_from([1, 2, "dep"]))
def test_failing_pcs_within_population(seed, bs):
    m = gen_random_program(seed, 60)
    f = FaultSpec(FaultKind.INCONSISTENT, Target("*"), (PortEquals(0),), BitFlip(2), probability=0.3)
    v = variant(m, ("Arith", "Mem"), block_size=bs)
    rep = run_campaign(CampaignConfig((v,), (f,), runs=5, seed=seed, budget=20_000)).variants[0]
    for op in rep.opcodes:
        got = rep.opcode_failures(op)
        assert set(got["failing_pcs"]) <= v.site_map.pcs()
        assert set(got["failing_pcs"]) <= set(rep.opcodes[op].pcs)
        assert len(got["failing_pcs"]) <= got["total_pcs"]
        assert len(got["failing_bbs"]) <= got["total_bbs"]
