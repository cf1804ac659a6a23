"""Layered rely/guarantee conditions for interfering processes and
error injectors: a small spec language, an interleaving runtime, a trace
checker with exhaustive exploration, and context/problem diagrams."""

from .checker import (
    Exhaustive,
    RandomRuns,
    Report,
    RoundRobinRun,
    SystemReport,
    active_layer,
    check_trace,
    detect_livelock,
    initial_states,
    verify_system,
)
from .diagrams import Diagram, refine_to_problem, to_dot, validate_diagram
from .dsl import load, parse, parse_predicate, pretty_print
from .errors import EnumerationCapExceeded, EvalError, ParseError, SourceSpan, SpecError, SpecTypeError
from .model import (
    ConditionLayer,
    FaultKind,
    InjectorSpec,
    ProcessSpec,
    SystemSpec,
    check_complementarity,
    check_layer_monotonicity,
    environment_guarantee,
    validate_system,
)
from .predicates import Decl, State, StatePair, eval_predicate, implies_on_domain
from .runtime import RandomScheduler, RoundRobin, Trace, enumerate_traces, make_injector, run, step

__version__ = "0.1.0"

__all__ = [
    "ConditionLayer",
    "Decl",
    "Diagram",
    "EnumerationCapExceeded",
    "EvalError",
    "Exhaustive",
    "FaultKind",
    "InjectorSpec",
    "ParseError",
    "ProcessSpec",
    "RandomRuns",
    "RandomScheduler",
    "Report",
    "RoundRobin",
    "RoundRobinRun",
    "SourceSpan",
    "SpecError",
    "SpecTypeError",
    "State",
    "StatePair",
    "SystemReport",
    "SystemSpec",
    "Trace",
    "active_layer",
    "check_complementarity",
    "check_layer_monotonicity",
    "check_trace",
    "detect_livelock",
    "enumerate_traces",
    "environment_guarantee",
    "eval_predicate",
    "implies_on_domain",
    "initial_states",
    "load",
    "make_injector",
    "parse",
    "parse_predicate",
    "pretty_print",
    "refine_to_problem",
    "run",
    "step",
    "to_dot",
    "validate_diagram",
    "validate_system",
    "verify_system",
]
