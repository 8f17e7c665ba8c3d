"""Truncated KAM normal forms for the 1-D quintic NLS with a Fourier-multiplier potential."""

from .algebra import (BracketCaps, LieDivergence, build_nls, evaluate, flow_guard, lie_transform,
                      poisson_bracket, vector_field)
from .backend import FLOAT64, RATIONAL, BackendMismatch
from .classify import ClassifiedPerturbation, class_norms, classify, plus_norm, reconstruct
from .divisors import (DiophantineReport, Schedule, diophantine_measure, diophantine_verify, divisor,
                       schedule)
from .engine import (ContractFailure, KamState, NormalForm, ResonanceError, RunConfig, StepReport,
                     kam_step, run, solve_homological)
from .hamiltonian import ActionVector, Hamiltonian, SequenceState, weighted_norm
from .keys import MonomialKey, multi_index
from .lemmas import SUITES, LemmaVerdict
from .weights import SigmaWeight, compute_c_sigma

__version__ = "0.1.0"

__all__ = [
    "ActionVector", "BackendMismatch", "BracketCaps", "ClassifiedPerturbation", "ContractFailure",
    "DiophantineReport", "FLOAT64", "Hamiltonian", "KamState", "LemmaVerdict", "LieDivergence",
    "MonomialKey", "NormalForm", "RATIONAL", "ResonanceError", "RunConfig", "SUITES", "Schedule",
    "SequenceState", "SigmaWeight", "StepReport", "build_nls", "class_norms", "classify",
    "compute_c_sigma", "diophantine_measure", "diophantine_verify", "divisor", "evaluate",
    "flow_guard", "kam_step", "lie_transform", "multi_index", "plus_norm", "poisson_bracket",
    "reconstruct", "run", "schedule", "solve_homological", "vector_field", "weighted_norm",
]
