import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        name, passed, detail = RESULTS[num]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[criterion {num:02d}] {status} {name}: {detail}")

from rigsel.fisher import build_candidate_infos
from rigsel.geometry import CameraIntrinsics, Pose3, exp_so3, rot_z
from rigsel.scenario import (
    CandidateMount,
    Landmark,
    Scenario,
    Trajectory,
    build_scenario,
    load_scenario_config,
    simulate_measurements,
)


def random_pose(rng) -> Pose3:
    return Pose3(exp_so3(rng.normal(0.0, 0.8, 3)), rng.normal(0.0, 2.0, 3))


def wide_intrinsics(pixel_sigma: float = 1.0, max_range: float = 50.0) -> CameraIntrinsics:
    return CameraIntrinsics(
        focal_px=300.0,
        principal_point=np.array([320.0, 240.0]),
        image_size=(640, 480),
        pixel_sigma=pixel_sigma,
        max_range=max_range,
    )


def make_small_scene(n_poses: int = 3, seed: int = 7, pixel_sigma: float = 4.0) -> Scenario:
    """Hand-sized scene (3 poses, 5 landmarks, 2 mounts) for dense oracles."""
    landmarks = [
        Landmark(0, np.array([4.0, 0.5, 0.3])),
        Landmark(1, np.array([4.2, -1.0, -0.4])),
        Landmark(2, np.array([3.8, 1.5, 0.1])),
        Landmark(3, np.array([4.5, 0.0, -0.8])),
        Landmark(4, np.array([3.5, -0.7, 0.9])),
    ]
    poses = tuple(
        Pose3(rot_z(0.15 * i), np.array([0.4 * i, 0.2 * i, 0.0])) for i in range(n_poses)
    )
    trajectory = Trajectory(poses, "random", step_bound=0.6)
    cam0 = rot_z(0.0) @ np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    cam1 = rot_z(0.3) @ np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    intr = wide_intrinsics(pixel_sigma)
    candidates = [
        CandidateMount(0, Pose3(cam0, np.array([0.1, 0.05, 0.0])), intr),
        CandidateMount(1, Pose3(cam1, np.array([-0.1, -0.05, 0.0])), intr),
    ]
    layout = simulate_measurements(landmarks, trajectory, candidates, seed)
    return Scenario(landmarks, trajectory, candidates, seed, layout)


@pytest.fixture(scope="session")
def tiny_scenario():
    return build_scenario(load_scenario_config("tiny-room"))


@pytest.fixture(scope="session")
def tiny_assembly(tiny_scenario):
    return build_candidate_infos(tiny_scenario)


@pytest.fixture(scope="session")
def small_scene():
    return make_small_scene()


@pytest.fixture(scope="session")
def small_assembly(small_scene):
    return build_candidate_infos(small_scene)
