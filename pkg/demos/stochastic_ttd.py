"""
How long until the first detection?
===================================

A multiplier unit that flips a bit with small probability on every use.
With the input held fixed, the step of the first detection still varies
a lot from run to run: it follows the geometric waiting time of the
underlying coin flips.
"""
import math

import numpy as np

from ithica_kit.campaign import CampaignConfig, InputPolicy, Variant, run_campaign
from ithica_kit.ir import ProgramInput, parse_module
from ithica_kit.microsim import BitFlip, FaultKind, FaultSpec, PortEquals, Target, run
from ithica_kit.transforms import PassConfig, instrument

prog = parse_module("""
global @i 8

fn @main(i64 %a) -> i64 {
entry:
  store i64 0, @i
  br loop
loop:
  %iv = load i64 @i
  %more = icmp ult i64 %iv, 100000
  condbr %more, body, done
body:
  %x = mul i64 %iv, %a
  %y = mul i64 %x, 3
  %next = add i64 %iv, 1
  store i64 %next, @i
  br loop
done:
  ret %a
}
""")

p = 1e-3
flaky = FaultSpec(FaultKind.INCONSISTENT, Target("mul"), (PortEquals(0),), BitFlip(1), probability=p)
m, sites, _ = instrument(prog, PassConfig(("Arith",)))

cfg = CampaignConfig(
    (Variant("Arith", m, sites),),
    (flaky,),
    runs=40,
    seed=17,
    budget=2_000_000,
    inputs=InputPolicy("fixed", ProgramInput(0, (12345,))),
    halt_on_error=True,
)
rep = run_campaign(cfg, jobs=2)
ttd = np.array([r.first_detection_step for r in rep.variants[0].runs if r.first_detection_step is not None])
print(f"{len(ttd)} of {cfg.runs} runs detected; first detection between step {ttd.min()} and {ttd.max()}")

# measure how often the faulty port is exercised on a short clean prefix
trace = run(m, ProgramInput(0, (12345,)), budget=20_000, trace=True).trace
per_step = sum(t["opcode"] == "mul" and t["ctx"]["port"] == 0 for t in trace) / len(trace)
for q in (0.25, 0.5, 0.75):
    trials = math.ceil(math.log(1 - q) / math.log(1 - p))
    print(f"q={q:.2f} observed {np.quantile(ttd, q):9.0f}  geometric {trials / per_step:9.0f}")
