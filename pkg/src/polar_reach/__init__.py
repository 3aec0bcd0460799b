"""Reachability analysis for neural-network controlled polynomial systems with Taylor models."""

from .interval import Interval
from .modelfile import ModelSpec, format_model, parse_model, parse_model_text
from .neural_network import Activation, NeuralNetwork, nn_forward, nn_load
from .nn_abstraction import bernstein_approx, nn_output_tm, nn_output_tm_symbolic
from .ode_flowpipe import ContractionFailure, Flowpipe, PolynomialODE, integrate_control_step
from .polynomial import Domain, SparsePolynomial
from .taylor_model import TaylorModel, TMVector
from .verifier import (
    NNCSModel,
    ReachConfig,
    ReachResult,
    TargetSpec,
    Verdict,
    check_property,
    containment_check,
    run_reachability,
    simulate,
)

__all__ = [
    "Activation", "ContractionFailure", "Domain", "Flowpipe", "Interval", "ModelSpec", "NNCSModel",
    "NeuralNetwork", "PolynomialODE", "ReachConfig", "ReachResult", "SparsePolynomial", "TMVector",
    "TargetSpec", "TaylorModel", "Verdict", "bernstein_approx", "check_property", "containment_check",
    "format_model", "integrate_control_step", "nn_forward", "nn_load", "nn_output_tm",
    "nn_output_tm_symbolic", "parse_model", "parse_model_text", "run_reachability", "simulate",
]

__version__ = "0.1.0"
