"""Executable checks of the cloaking results: sweeps, decoupled solves and energy estimates."""

from .decoupled import DecoupledSolution, decoupled_cloak_solve, hidden_bc_report
from .energy import (
    CutoffField,
    InterfaceFlattened,
    PlaneWaveField,
    PulledForward,
    cutoff_constant,
    cutoff_decay_experiment,
    energy_functional,
    energy_refinement,
    form_invariance_check,
    interface_measure_check,
)
from .scenario import CloakReport, Scenario
from .sweep import general_cloak_experiment, interior_difference, near_cloak_sweep
