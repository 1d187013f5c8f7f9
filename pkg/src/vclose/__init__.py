"""vclose: coverage-closure toolkit for subsystem-level RTL verification.

Pipeline stages: slice a design along signal dependency chains, patch the
slice back into compilable Verilog, decompose coverage reports into
actionable uncovered points, and drive an LLM-backed stimuli refinement
loop against a simulator.
"""

__version__ = "0.1.0"
