"""Yosida-derivative approximation of nonlinear functional differential equations.

Solves ``u'(t) in A(t, u_t) u(t) + omega u(t)`` with ``u_0 = phi`` on a
finite horizon or the half-line by a double limit: an outer fixed-point
recursion on frozen history inputs and a vanishing regularisation
parameter ``lambda``.  Verification routines certify the output against
the integral-inequality and mild-solution notions, and the asymptotics
module analyses decay and almost-periodic behaviour.
"""

from types import ModuleType as _ModuleType

from .asymptotics import (DecayReport, SplitResult, SubspaceSpec, aap_split,
                          almost_periodicity_defect, decay_report, functional_split_check,
                          subspace_invariance_probe)
from .config import RunConfig, bundled_scenarios, load_bundled, load_config, parse_config
from .errors import (ConditioningError, ConfigError, ConvergenceError, DomainError,
                     GridRangeError, ResolventError, StabilityMarginError, StageError,
                     StructuralError, YosidaError)
from .grid import DelayGeometry, HistorySegment, TimeGrid, Trajectory, state_norm
from .operators import (ControlData, OperatorSpec, ResolventMethod, bare_operator,
                        bracket_seminorm, cubic_delay, exp_memory, laplacian_reaction,
                        linear_delay, resolvent, resolvent_omega, resolvent_property_audit,
                        yosida_apply)
from .reports import ConvergenceReport, LevelRecord, VerificationReport
from .scheme import (LambdaSchedule, SolverConfig, double_limit_solve, halfline_solve,
                     inner_solve, outer_recursion, yosida_derivative)
from .timefunctions import MonotoneMap, TimeFunction
from .verify import (BracketSpec, bounded_recursion_check, bracket_plus,
                     convolution_monotonicity_check, gronwall_check,
                     integral_solution_residual, limsup_lipschitz_check, mild_solution_residual,
                     volterra_spectrum_check)

__version__ = "0.1.0"

__all__ = sorted(name for name, value in globals().items()
                 if not name.startswith("_") and not isinstance(value, _ModuleType))
