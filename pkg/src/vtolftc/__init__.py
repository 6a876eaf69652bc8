"""Fault-tolerant control allocation and flight simulation for a dual-system VTOL."""
from .allocator import AllocationResult, AllocatorConfig, WLSAllocator, active_set_bls, wls_allocate
from .config import ConfigError
from .control import BaselineController, BaselineGains, CascadeGains, PidGains, WeightingParams
from .dynamics import AeroModel, InfeasibleVehicleError, LinearModel, linearize_heave_attitude, step_rk4, trim_hover
from .effectors import SurfaceDerivatives, build_allocation_matrix
from .scenario import (
    Mission, Mode, Scenario, Trace, compare_runs, compute_metrics, export_csv, load_scenario,
    mission_mode, read_csv, run_scenario,
)
from .synthesis import (
    StructuredHinfTuner, default_loops, mixed_sensitivity_cost, robust_stability_grid,
    tune_fixed_structure,
)
from .vehicle import EffectivenessState, FaultEvent, RigidBodyState, VehicleParams

__version__ = "0.1.0"
