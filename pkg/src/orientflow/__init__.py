"""Orientation phase-field flows with a sphere-valued orientation field.

The state is a pair ``U = (eta, u)`` of an order field and an orientation
field with values near the unit sphere of ``R^M`` (unit quaternions for
``M = 4``) on a uniform Neumann grid.  The package provides the free
energy and its gradient flows (penalized and sphere-constrained), four
time steppers, a continuation driver for the vanishing regularizations,
and diagnostics for the properties these flows are known to satisfy.

Hot stencil loops run in a compiled extension when it is built and fall
back to NumPy otherwise; see :mod:`orientflow.kernels`.
"""
from .diagnostics import DiagnosticsReport, Thresholds, report
from .energy import EnergyBreakdown, energy_total, flow_rhs, grad_check
from .flow import (BlowUpError, CFLError, StagnationError, StepError, StepperConfig, Trajectory,
                   continuation, dt_max, evolve, step_explicit, step_minimizing_movement,
                   step_projected, step_semi_implicit)
from .grid import FieldPair, Grid, make_initial
from .model import ModelParams, ParameterError, default_model_functions, r_zero

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "CFLError", "DiagnosticsReport", "EnergyBreakdown", "FieldPair", "Grid",
    "ModelParams", "ParameterError", "StagnationError", "StepError", "StepperConfig", "Thresholds",
    "Trajectory", "continuation", "default_model_functions", "dt_max", "energy_total", "evolve",
    "flow_rhs", "grad_check", "make_initial", "r_zero", "report", "step_explicit",
    "step_minimizing_movement", "step_projected", "step_semi_implicit",
]
