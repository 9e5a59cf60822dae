"""Temporal-property verification and repair for a small imperative language.

Programs are summarized into guarded effect expressions, abstracted into a
stratified Datalog program, and checked against a branching-time property.
Violations are repaired by a symbolic search over the extracted facts whose
solutions are mapped back to source-level patches.
"""

__version__ = "0.1.0"
