"""minmaxlab: a simulation and analysis laboratory for stochastic min-max optimization.

The package implements a generalized Robbins-Monro template over first-,
zeroth- and second-order schemes, integrates the shared mean dynamics
dz/dt = V(z), and measures the spurious limiting structures (limit cycles,
forsaken solutions, avoidance statistics) on a small zoo of planar games.
"""

from .core import (DivergenceError, NoiseModel, OracleSample, ScheduleReport,
                   StepSchedule, Trajectory, derive_rng, draw_noise,
                   schedule_value, validate_schedule)
from .problems import (PolynomialPerturbation, Problem, check_wac, get_problem,
                       make_almost_bilinear, make_bilinear, make_forsaken,
                       make_gradient_well, problem_labels, sfo_query, spsa_mean,
                       spsa_query)
from .algorithms import (Adam, AlternatingScheme, AveragedScheme, PEG, PPM,
                         SEG, SGDA, SPSA, Scheme, SchemeError, SecondOrder,
                         StepOutcome, make_scheme, run, second_order_field,
                         wrap_alternating, wrap_averaged)
from .dynamics import FlowPath, apt_deviation, flow_from, integrate_flow, interpolate
from .analysis import (CriticalPoint, CycleDescriptor, CyclePrediction,
                       CycleSearch, MonteCarloReport, TargetSet,
                       abelian_integral, abelian_integral_contour, detect_cycle,
                       find_critical_points, forsaken_annulus_check,
                       monte_carlo, predict_cycle_radius, radius_series,
                       sample_ball)

__version__ = "0.1.0"
