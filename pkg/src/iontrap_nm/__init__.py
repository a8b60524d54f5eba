"""Strong-field trapped-ion dephasing dynamics and trace-distance non-Markovianity."""

from ._backend import BACKEND
from .dynamics import (
    InitialCondition,
    MotionalState,
    QubitTrajectory,
    TimeGrid,
    evolve,
    evolve_qubit,
    to_lab_frame,
)
from .errors import IntegrationError, InvalidDimensionError, TruncationWarning
from .hilbert import ModeSpec, ModelParams, build_hamiltonian
from .nmeasure import NMResult, error_chain, nm_for_pair, nm_from_trajectories, nm_maximized, trace_distance
from .noise import ShotConfig, sample_trajectory
from .sweep import Axis, SweepGrid, SweepResult, circle_scan, convergence_study, nm_vs_omega, run_sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Axis", "InitialCondition", "IntegrationError", "InvalidDimensionError", "ModeSpec",
    "ModelParams", "MotionalState", "NMResult", "QubitTrajectory", "ShotConfig", "SweepGrid",
    "SweepResult", "TimeGrid", "TruncationWarning", "build_hamiltonian", "circle_scan",
    "convergence_study", "error_chain", "evolve", "evolve_qubit", "nm_for_pair", "nm_from_trajectories",
    "nm_maximized", "nm_vs_omega", "run_sweep", "sample_trajectory", "to_lab_frame", "trace_distance",
]
