"""Stability certificates, attraction-region estimates, and pointwise
solution envelopes for homogeneous time-delay systems with time-varying
perturbations, cross-validated against simulated trajectories."""

from .certificate import (Certificate, CertifyOptions, DerivedConstants,
                          InfeasibleError, WSplit, certify,
                          derive_aggregate_constants, envelope, find_delta,
                          lemma1_constants, lemma2_a1, lemma3_b)
from .ddesim import (InitialFunction, RhsSystem, SimConfig, SimulationAborted,
                     Trajectory, in_S_alpha, node_segment_sup_norms, sample,
                     segment_sup_norm, simulate)
from .functional import (FunctionalTrace, LState, SegmentGrid, advance_L,
                         check_derivative_bound, eval_v, initial_lstate,
                         trace_functional)
from .model import (CaseA, CaseB, LyapunovSpec, SystemSpec,
                    build_example_system, check_bound_constants,
                    example_omega, kappa_and_w)

__all__ = [
    "Certificate", "CertifyOptions", "DerivedConstants", "InfeasibleError",
    "WSplit", "certify", "derive_aggregate_constants", "envelope",
    "find_delta", "lemma1_constants", "lemma2_a1", "lemma3_b",
    "InitialFunction", "RhsSystem", "SimConfig", "SimulationAborted",
    "Trajectory", "in_S_alpha", "node_segment_sup_norms", "sample",
    "segment_sup_norm", "simulate",
    "FunctionalTrace", "LState", "SegmentGrid", "advance_L",
    "check_derivative_bound", "eval_v", "initial_lstate", "trace_functional",
    "CaseA", "CaseB", "LyapunovSpec", "SystemSpec", "build_example_system",
    "check_bound_constants", "example_omega", "kappa_and_w",
]

__version__ = "0.1.0"
