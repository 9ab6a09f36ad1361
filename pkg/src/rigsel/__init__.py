"""Certifiably near-optimal camera-mount selection for landmark SLAM.

Selects a K-subset of candidate sensor mountings by maximizing the smallest
eigenvalue of the pose-marginal Fisher information, and certifies the greedy
selection against a Frank-Wolfe bound on the box relaxation.
"""

from .fisher import InfoAssembly, SchurResult, assemble, build_candidate_infos, schur_complement
from .geometry import CameraIntrinsics, Pose3, compose, inverse, project, projection_jacobians
from .objective import RelaxedWeights, SelectionVector, concavity_probe, eval_f, supergradient
from .scenario import Scenario, ScenarioConfig, build_scenario, load_scenario_config
from .solvers import (
    Certificate,
    certify,
    exhaustive,
    frank_wolfe,
    fw_lmo,
    greedy_select,
    kmax_round,
    select_and_certify,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "Certificate",
    "InfoAssembly",
    "Pose3",
    "RelaxedWeights",
    "Scenario",
    "ScenarioConfig",
    "SchurResult",
    "SelectionVector",
    "assemble",
    "build_candidate_infos",
    "build_scenario",
    "certify",
    "compose",
    "concavity_probe",
    "eval_f",
    "exhaustive",
    "frank_wolfe",
    "fw_lmo",
    "greedy_select",
    "inverse",
    "kmax_round",
    "load_scenario_config",
    "project",
    "projection_jacobians",
    "schur_complement",
    "select_and_certify",
    "supergradient",
]
