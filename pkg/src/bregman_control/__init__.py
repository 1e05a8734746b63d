"""Bregman iteration with a priori stopping for box-constrained Poisson control."""

__version__ = "0.1.0"

from .bench import BenchmarkCase, build_case, error_to_exact, get_case, verify_case
from .bregman import BregmanState, bregman_distance, bregman_step, iterate, recover_control
from .config import ConfigError, ExperimentConfig, preset
from .fem import FeFunction, FeSpace, Mesh, assemble_mass, assemble_stiffness, interpolate
from .problem import BoxConstraints, ControlProblem
from .ssn import SubproblemSpec, newton_solve
from .stopping import NoiseSpec, RegularizationSchedule, decide_stop, perturb

__all__ = [
    "BenchmarkCase", "BoxConstraints", "BregmanState", "ConfigError", "ControlProblem",
    "ExperimentConfig", "FeFunction", "FeSpace", "Mesh", "NoiseSpec",
    "RegularizationSchedule", "SubproblemSpec", "assemble_mass", "assemble_stiffness",
    "bregman_distance", "bregman_step", "build_case", "decide_stop", "error_to_exact",
    "get_case", "interpolate", "iterate", "newton_solve", "perturb", "preset",
    "recover_control", "verify_case",
]
