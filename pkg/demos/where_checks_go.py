"""
Where the checks go
===================

Two knobs decide how much a protected program grows and which errors it
can still see: the interleaving (how many originals run before their
validations) and the block size (how often the comparisons are made).
"""
from ithica_kit.campaign import CampaignConfig, Variant, run_campaign
from ithica_kit.ir import parse_module
from ithica_kit.microsim import BitFlip, FaultKind, FaultSpec, Level, LevelEquals, MinGap, PortEquals, Target
from ithica_kit.transforms import PassConfig, instrument


def campaign(prog, fault, configs, runs=20, seed=0):
    variants = []
    for name, cfg in configs.items():
        m, sites, _ = instrument(prog, cfg)
        variants.append(Variant(name, m, sites))
    return run_campaign(CampaignConfig(tuple(variants), (fault,), runs=runs, seed=seed))


# %% A fault that needs distance
# The adder misbehaves only when it sees the same operands again at least
# eight steps after the first time. Back-to-back duplicates never trip it.
adds = parse_module(
    "fn @main(i64 %a) -> i64 {\nentry:\n"
    + "".join(f"  %r{k} = add i64 %a, {k}\n" for k in range(1, 9))
    + "".join(f"  %x{k} = xor i64 %{'r1' if k == 2 else f'x{k - 1}'}, %r{k}\n" for k in range(2, 9))
    + "  ret %x8\n}\n"
)
gap = FaultSpec(FaultKind.INCONSISTENT, Target("add"), (MinGap(8),), BitFlip(1))
rep = campaign(adds, gap, {f"il={il}": PassConfig(("Arith",), il) for il in (1, 2, 4, 8)})
for v in rep.variants:
    print(f"{v.name:6s} runs with detection: {v.runs_with_detection}/{v.runs_total}")

# %% A fault on the fill path
# Corruption on a line fill from main memory. Re-loading a just-stored value
# is served by the store buffer, so only the flush-then-load of the
# diversified pass reaches the broken path.
stores = parse_module(
    'global @g 8 = x""\nglobal @h 8 = x""\n'
    "fn @main(i64 %a, i64 %b) -> i64 {\nentry:\n  store i64 %a, @g\n  store i64 %b, @h\n  ret 0\n}\n"
)
fill = FaultSpec(FaultKind.INCONSISTENT, Target("load", Level.MAIN), (LevelEquals(Level.MAIN),), BitFlip(1))
rep = campaign(stores, fill, {"Mem": PassConfig(("Mem",)), "MemDiv": PassConfig(("MemDiv",))})
for v in rep.variants:
    ordinals = sorted({e.ordinal for r in v.runs for e in r.ithica_events})
    print(f"{v.name:6s} detections: {v.total_detections:3d} at validation ordinals {ordinals}")

# %% Fewer checks, same coverage
chain = parse_module(
    "fn @main(i64 %a) -> i64 {\nentry:\n  %m0 = add i64 %a, 0\n"
    + "".join(f"  %m{k} = mul i64 %m{k - 1}, {2 * k + 1}\n" for k in range(1, 17))
    + "  ret %m16\n}\n"
)
parity = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(1),), BitFlip(1))
configs = {f"bs={bs}": PassConfig(("Arith",), 1, bs) for bs in (1, 2, 4, 8, "dep")}
rep = campaign(chain, parity, configs, runs=10)
for (name, cfg), v in zip(configs.items(), rep.variants):
    _, sites, stats = instrument(chain, cfg)
    print(f"{name:6s} sites={len(sites):2d} size x{stats.size_ratio:.2f} EDR={v.runs_with_detection * 100 // v.runs_total}%")
