"""
A forwarding bug that only duplication catches
==============================================

A multiply reads its first operand from a load issued two steps earlier.
The fault model forwards zero instead of the real value whenever that
producer is still in flight. The original program's own sanity check
compares the result with itself and sees nothing wrong.
"""
from ithica_kit.ir import ProgramInput, parse_module, print_module
from ithica_kit.microsim import FaultKind, FaultSpec, ProducerInFlight, StuckOperandZero, Target, run
from ithica_kit.transforms import PassConfig, instrument

SOURCE = """
global @g1 8 = x"0700000000000000"
global @g2 8 = x"0500000000000000"

fn @main() -> i64 {
entry:
  %a = load i64 @g1
  %b = load i64 @g2
  %t = add i64 %a, 0
  %r0 = mul i64 %b, %a
  %same = icmp eq i64 %r0, %r0
  report_error 0, %same, %r0
  ret %r0
}
"""
prog = parse_module(SOURCE)

stale = FaultSpec(
    FaultKind.INCONSISTENT,
    Target("mul"),
    trigger=(ProducerInFlight(operand=0, window=2),),
    corruption=StuckOperandZero(0),
)

# fault-free the answer is 35; with the fault it silently becomes 0
print("clean:", run(prog, ProgramInput()).return_value)
out = run(prog, ProgramInput(), [stale])
print("faulty:", out.return_value, "events:", out.detections)

# duplicate the arithmetic; grouping all originals first keeps the
# multiply right behind its load, as in the uninstrumented program
inst, sites, stats = instrument(prog, PassConfig(("Arith",), interleaving="max"))
print(print_module(inst))

out = run(inst, ProgramInput(), [stale], site_map=sites)
for ev in out.detections:
    if ev.origin == "ithica":
        print(f"site {ev.check_site}: {ev.opcode} at step {ev.step}")
        print(f"  original={ev.original_value} duplicate={ev.validation_values} -> {ev.wrongness.value}")
