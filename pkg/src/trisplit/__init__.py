"""Full-splitting proximal ADMM-type solver for ``min F(Ax) + G(y) + H(x, y)``."""

from .bench import brute_force_oracle, make_instance
from .diagnostics import (DiagnosticsReport, RateEstimate, check_descent, check_recurrence,
                          check_subgradient_bound, diagnose, estimate_rate, iterate_rate_check,
                          psi_gaps)
from .errors import (AssumptionViolation, ConfigError, DimensionError, EmptyInterval,
                     GridTooLarge, NotConverged, NotSurjective, NumericalDivergence,
                     TooShort, TrisplitError)
from .functions import (L0, L1, BoxIndicator, CustomCoupling, ProxFunction, QuadraticCoupling,
                        SeparableCoupling, SmoothCoupling, SquaredL2, Zero, check_lipschitz,
                        make_function)
from .linop import DenseOperator, Spectrum, spectral_quantities
from .problem import AssumptionFlags, ProblemInstance
from .solver import (IterationRecord, IterationTrace, SolverState, StoppingRule,
                     augmented_lagrangian, evaluate_psi, kkt_residual, run, step,
                     subgradient_residual)
from .tuning import (AdmissibilityReport, DerivedConstants, SolverParams, derive_constants,
                     select_parameters, validate)

__version__ = "0.1.0"
