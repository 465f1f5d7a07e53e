"""WNetKAT: a weighted network programming language.

Parse and evaluate policies, compile weight-regular expressions to weighted
automata, and build reachability, capacity, service-chain, fairness and QoS
queries over weighted topologies.
"""

from .algebra import INF, NEG_INF, StructureKind, WeightStructure, make_structure, parse_weight, plus, times
from .ast import Expr, desugar_max, desugar_min, is_predicate, normalize
from .core import World, make_world
from .evaluator import EvalConfig, EvalResult, Mode, Outcome, Verdict, drop_check, evaluate, run_shared
from .parser import ParseError, parse_expr, parse_flows, parse_topology, render_expr

__all__ = [
    "INF",
    "NEG_INF",
    "StructureKind",
    "WeightStructure",
    "make_structure",
    "parse_weight",
    "plus",
    "times",
    "Expr",
    "desugar_min",
    "desugar_max",
    "is_predicate",
    "normalize",
    "World",
    "make_world",
    "EvalConfig",
    "EvalResult",
    "Mode",
    "Outcome",
    "Verdict",
    "drop_check",
    "evaluate",
    "run_shared",
    "ParseError",
    "parse_expr",
    "parse_flows",
    "parse_topology",
    "render_expr",
]
