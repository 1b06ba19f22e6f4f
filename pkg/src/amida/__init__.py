"""Linear lambda calculus with paired communication channels.

Modules:
    syntax     terms, formulas, channels, substitution
    parser     concrete syntax for programs and derivation files
    typecheck  hypersequent derivations: checking, inference, splitting
    machine    small-step evaluator and the big-step reference oracle
    sessions   session types, their realizers, and process notation
    nets       polarized proof nets with crossing edges
    cli        command line entry points
"""

from __future__ import annotations

__version__ = "0.1.0"
