"""Intra-thread instruction-level error checking over a small SSA IR.

Subpackages: ``ir`` (the IR), ``transforms`` (instrumentation passes),
``microsim`` (fault-injecting interpreter) and ``campaign`` (test
campaigns and metrics). ``ithica_kit.cli`` is the command-line front end.
"""

__version__ = "0.1.0"
