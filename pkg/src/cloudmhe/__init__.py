"""Moving horizon state estimation for a 7-DOF full-car suspension.

Builds the linear full-car model, discretizes it, and reconstructs the
unmeasured displacement states from velocity measurements by solving a
constrained horizon least-squares problem each step, with a Kalman
filter propagating the arrival cost.  The estimator can run in-process
or split across a vehicle/cloud pair joined by a simulated or real
loopback channel.
"""

from .suspension import (SuspensionParams, CornerState, FullCarModel,
                         build_model, corner_state, suspension_forces,
                         state_derivative, measure,
                         N_STATES, N_WHEELS, N_OUTPUTS,
                         POSITION_STATES, VELOCITY_STATES)
from .road import RoadSegment, RoadProfile, RoadDatabase
from .discretize import DiscreteModel, expm, zoh
from .qp import QpProblem, QpSolution, solve_qp
from .kalman import ArrivalCost, kf_step, KalmanFilter
from .mhe import (MheConfig, EstimateRecord, CondensedWindow, condense_window,
                  MovingHorizonEstimator, full_information_estimates,
                  write_estimates_csv)
from .simulate import SimConfig, Trajectory, run_plant, write_trajectory_csv
from .config import ConfigError, RunConfig, load_config, paper_scenario_path
from .metrics import (MetricsReport, compute_metrics, write_metrics_json,
                      write_fig_data)

__version__ = "0.1.0"

__all__ = [
    "SuspensionParams", "CornerState", "FullCarModel", "build_model",
    "corner_state", "suspension_forces", "state_derivative", "measure",
    "N_STATES", "N_WHEELS", "N_OUTPUTS", "POSITION_STATES", "VELOCITY_STATES",
    "RoadSegment", "RoadProfile", "RoadDatabase",
    "DiscreteModel", "expm", "zoh",
    "QpProblem", "QpSolution", "solve_qp",
    "ArrivalCost", "kf_step", "KalmanFilter",
    "MheConfig", "EstimateRecord", "CondensedWindow", "condense_window",
    "MovingHorizonEstimator", "full_information_estimates", "write_estimates_csv",
    "SimConfig", "Trajectory", "run_plant", "write_trajectory_csv",
    "ConfigError", "RunConfig", "load_config", "paper_scenario_path",
    "MetricsReport", "compute_metrics", "write_metrics_json", "write_fig_data",
    "__version__",
]
