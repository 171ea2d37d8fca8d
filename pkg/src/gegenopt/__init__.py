"""Adaptive Gegenbauer collocation for nonlinear optimal control."""
from .adaptive import AdaptParams, AdaptiveResult, run_adaptive
from .benchmarks import BENCHMARK_SETTINGS, registered_names, registry_get
from .config import RunConfig, load_config, parse_config
from .errors import CallbackError, ConfigurationError, DomainError, GegenoptError, NumericError
from .gegenbauer import Element, collocation_nodes, eval_gegenbauer, eval_shifted, gauss_nodes
from .io import read_solution, write_csv_samples, write_solution
from .nlp import NLPProblem, SolveOptions, SolveReport, register_external_solver, solve
from .problem import OCProblem
from .quadrature import IntegrationMatrix, QuadErrorBound, build_obgim, eval_error_bound
from .transcription import ElementConfig, Mesh, SpectralSolution, Transcription, assemble_nlp

__version__ = "0.1.0"

__all__ = [
    "AdaptParams", "AdaptiveResult", "run_adaptive",
    "BENCHMARK_SETTINGS", "registered_names", "registry_get",
    "RunConfig", "load_config", "parse_config",
    "CallbackError", "ConfigurationError", "DomainError", "GegenoptError", "NumericError",
    "Element", "collocation_nodes", "eval_gegenbauer", "eval_shifted", "gauss_nodes",
    "read_solution", "write_csv_samples", "write_solution",
    "NLPProblem", "SolveOptions", "SolveReport", "register_external_solver", "solve",
    "OCProblem",
    "IntegrationMatrix", "QuadErrorBound", "build_obgim", "eval_error_bound",
    "ElementConfig", "Mesh", "SpectralSolution", "Transcription", "assemble_nlp",
]
