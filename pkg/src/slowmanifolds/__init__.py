"""Random slow manifolds of slow-fast systems driven by alpha-stable Levy noise."""

from .convolution import (StationaryProcess, stationary_eta, stationary_xi, transform_forward,
                          transform_inverse)
from .errors import (AlignmentError, ConfigurationError, ContractionError, ConvergenceError,
                     DerivativeError, DivergenceError, DomainError, ExtrapolationError,
                     PartialResultError, ShapeError, SlowManifoldError, SpanError)
from .integrators import (Trajectory, integrate_reduced, integrate_scaled, integrate_sde,
                          integrate_transformed)
from .lyapunov_perron import (ExpansionResult, ManifoldGraph, WeightedPath, critical_h0, critical_y0,
                              expansion_h, first_order_x1, first_order_y1_h1, manifold_graph,
                              manifold_point, solve_backward_fixed_point)
from .stable_noise import LevyPath, StableSpec, generate_path, sample_standard_stable, shift_path
from .system_model import (HypothesisReport, SlowFastSystem, contraction_rate, epsilon_threshold,
                           lipschitz_bound_h, tracking_rate, validate_hypotheses)

__version__ = "0.1.0"

__all__ = [
    "StableSpec", "LevyPath", "generate_path", "sample_standard_stable", "shift_path",
    "SlowFastSystem", "HypothesisReport", "validate_hypotheses", "contraction_rate", "tracking_rate",
    "lipschitz_bound_h", "epsilon_threshold",
    "StationaryProcess", "stationary_xi", "stationary_eta", "transform_forward", "transform_inverse",
    "Trajectory", "integrate_sde", "integrate_transformed", "integrate_scaled", "integrate_reduced",
    "WeightedPath", "ManifoldGraph", "ExpansionResult", "solve_backward_fixed_point", "manifold_point",
    "manifold_graph", "critical_y0", "critical_h0", "first_order_x1", "first_order_y1_h1", "expansion_h",
    "SlowManifoldError", "DomainError", "ConfigurationError", "AlignmentError", "SpanError", "ShapeError",
    "ContractionError", "ConvergenceError", "DivergenceError", "ExtrapolationError", "DerivativeError",
    "PartialResultError",
]
