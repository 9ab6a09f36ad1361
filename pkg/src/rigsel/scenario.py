"""Seedable synthetic scene generation: room, trajectories, candidate mounts,
and the measurement layout (which mount sees which landmark from which pose).

All generators are pure functions of (config, seed). Pixel noise is sampled
once when the layout is built and stored on each measurement, so the
information-matrix pipeline (noiseless linearization) and the estimator
evaluation (noisy data) consume one frozen scene.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .geometry import CameraIntrinsics, Pose3, compose, rot_z

TRAJECTORY_KINDS = ("circular", "forward", "lateral", "random")

# Base camera orientation in the body frame for yaw 0: optical axis along
# body +x, camera x along body -y (right), camera y along body -z (down).
CAM_FORWARD = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


@dataclass(frozen=True)
class Landmark:
    id: int
    position: np.ndarray  # (3,) meters


@dataclass(frozen=True)
class CandidateMount:
    """One candidate sensor mounting: camera pose in the body frame plus optics."""

    id: int
    extrinsic: Pose3
    intrinsics: CameraIntrinsics


@dataclass(frozen=True)
class Trajectory:
    poses: tuple[Pose3, ...]
    kind: str
    step_bound: float

    def __post_init__(self):
        if len(self.poses) < 2:
            raise ValueError("trajectory needs at least 2 poses")
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        for a, b in zip(self.poses, self.poses[1:]):
            gap = np.linalg.norm(b.translation - a.translation)
            if gap > self.step_bound + 1e-9:
                raise ValueError(f"pose gap {gap:.4f} exceeds step bound {self.step_bound:.4f}")

    def __len__(self) -> int:
        return len(self.poses)


@dataclass(frozen=True)
class Measurement:
    pose_idx: int
    landmark_idx: int
    candidate_id: int
    pixel: np.ndarray  # (2,) noiseless ground-truth projection
    noisy_pixel: np.ndarray  # (2,) pixel + sampled Gaussian noise


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class EnvironmentConfig:
    room_half_extent: float = 5.0
    landmarks_per_wall: int = 15
    jitter_sigma: float = 0.05
    wall_height: float = 3.0
    include_ceiling: bool = False
    placement: str = "walls"  # "walls" | "volume" (uniform scatter inside the room)
    volume_count: int = 60


@dataclass
class TrajectoryConfig:
    kind: str = "random"
    num_poses: int = 20
    radius: float = 2.0
    step: float = 0.3
    yaw_step_max: float = 0.5
    margin: float = 1.0
    height: float = 0.0


@dataclass
class CandidatesConfig:
    layout: str = "square-frame-68"
    side_length: float = 0.8
    positions_per_side: int = 18
    count: int = 10
    spacing: float = 0.1
    yaw_offsets_deg: list[float] = field(default_factory=lambda: [0.0])
    mount_height: float = 0.0
    focal_px: float = 320.0
    image_width: int = 640
    image_height: int = 480
    max_range: float = 15.0


@dataclass
class NoiseConfig:
    pixel_sigma: float = 1.0


@dataclass
class ScenarioConfig:
    name: str = "unnamed"
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    candidates: CandidatesConfig = field(default_factory=CandidatesConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        return ScenarioConfig(
            name=d.get("name", "unnamed"),
            environment=EnvironmentConfig(**d.get("environment", {})),
            trajectory=TrajectoryConfig(**d.get("trajectory", {})),
            candidates=CandidatesConfig(**d.get("candidates", {})),
            noise=NoiseConfig(**d.get("noise", {})),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        d = self.to_dict()
        d["seed"] = int(seed)
        return ScenarioConfig.from_dict(d)


PRESET_CONFIGS = {
    "tiny-room": "tiny_room.yaml",
    "default-room": "default_room.yaml",
}


def load_scenario_config(name_or_path: str | Path) -> ScenarioConfig:
    """Load a scenario config from a preset name or a YAML file path."""
    key = str(name_or_path)
    if key in PRESET_CONFIGS:
        text = resources.files("rigsel").joinpath("configs", PRESET_CONFIGS[key]).read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise FileNotFoundError(
                f"no scenario preset or file named {key!r} "
                f"(presets: {sorted(PRESET_CONFIGS)})"
            )
        text = path.read_text()
    return ScenarioConfig.from_dict(yaml.safe_load(text))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_environment(
    room_half_extent: float,
    landmarks_per_wall: int,
    jitter_sigma: float,
    seed,
    *,
    wall_height: float = 3.0,
    include_ceiling: bool = False,
    placement: str = "walls",
    volume_count: int = 60,
) -> list[Landmark]:
    """Landmarks grid-placed on the four walls of a room centered at origin.

    Walls are the planes x = +-e and y = +-e with z spanning the wall height;
    the optional ceiling is the plane z = +h/2. Grid points get 3D Gaussian
    jitter (clipped at 4 sigma so the scatter is hard-bounded).
    ``placement="volume"`` instead scatters ``volume_count`` landmarks
    uniformly inside the room.
    """
    if room_half_extent <= 0 or wall_height <= 0:
        raise ValueError("room extents must be positive")
    if placement == "volume":
        if volume_count <= 0:
            raise ValueError("volume_count must be positive")
        rng = np.random.default_rng(seed)
        e, h = room_half_extent, wall_height
        pts = np.column_stack([
            rng.uniform(-0.95 * e, 0.95 * e, volume_count),
            rng.uniform(-0.95 * e, 0.95 * e, volume_count),
            rng.uniform(-0.45 * h, 0.45 * h, volume_count),
        ])
        return [Landmark(i, p) for i, p in enumerate(pts)]
    if placement != "walls":
        raise ValueError(f"unknown landmark placement {placement!r}")
    if landmarks_per_wall <= 0:
        raise ValueError("landmarks_per_wall must be positive")
    rng = np.random.default_rng(seed)
    e, h = room_half_extent, wall_height

    cols = int(np.ceil(np.sqrt(landmarks_per_wall)))
    rows = int(np.ceil(landmarks_per_wall / cols))
    u = np.linspace(-0.9 * e, 0.9 * e, cols)
    zs = np.linspace(-0.45 * h, 0.45 * h, rows)
    uu, zz = np.meshgrid(u, zs)
    grid = np.column_stack([uu.ravel(), zz.ravel()])[:landmarks_per_wall]

    planes = [
        lambda g: np.column_stack([np.full(len(g), e), g[:, 0], g[:, 1]]),   # x = +e
        lambda g: np.column_stack([np.full(len(g), -e), g[:, 0], g[:, 1]]),  # x = -e
        lambda g: np.column_stack([g[:, 0], np.full(len(g), e), g[:, 1]]),   # y = +e
        lambda g: np.column_stack([g[:, 0], np.full(len(g), -e), g[:, 1]]),  # y = -e
    ]
    points = [make(grid) for make in planes]
    if include_ceiling:
        v = np.linspace(-0.9 * e, 0.9 * e, rows)
        xx, yy = np.meshgrid(u, v)
        ceiling = np.column_stack([xx.ravel(), yy.ravel()])[:landmarks_per_wall]
        points.append(np.column_stack([ceiling, np.full(len(ceiling), h / 2)]))
    pts = np.vstack(points)
    if jitter_sigma > 0:
        pts = pts + np.clip(
            rng.normal(0.0, jitter_sigma, pts.shape), -4 * jitter_sigma, 4 * jitter_sigma
        )
    return [Landmark(i, p) for i, p in enumerate(pts)]


def generate_trajectory(
    kind: str,
    num_poses: int,
    params: TrajectoryConfig,
    seed,
    *,
    walk_limit: float | None = None,
) -> Trajectory:
    """Body-to-world pose sequence of one of the four supported motion kinds.

    ``walk_limit`` caps |x| and |y| for the random walk; the other kinds are
    deterministic shapes validated against the room by the caller.
    """
    if num_poses < 2:
        raise ValueError("num_poses must be >= 2")
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    rng = np.random.default_rng(seed)
    zc = params.height

    if kind == "circular":
        if params.radius <= 0:
            raise ValueError("circular trajectory needs a positive radius")
        angles = 2.0 * np.pi * np.arange(num_poses) / num_poses
        poses = [
            Pose3(rot_z(a + np.pi / 2), np.array([params.radius * np.cos(a),
                                                  params.radius * np.sin(a), zc]))
            for a in angles
        ]
        step_bound = 2.0 * params.radius * np.sin(np.pi / num_poses)
    elif kind in ("forward", "lateral"):
        if params.step <= 0:
            raise ValueError("linear trajectory needs a positive step")
        half = 0.5 * (num_poses - 1) * params.step
        offsets = np.arange(num_poses) * params.step - half
        axis = np.array([1.0, 0.0, 0.0]) if kind == "forward" else np.array([0.0, 1.0, 0.0])
        poses = [Pose3(np.eye(3), axis * o + np.array([0.0, 0.0, zc])) for o in offsets]
        step_bound = params.step
    else:  # random walk, bounded in position and yaw step
        if params.step <= 0:
            raise ValueError("random trajectory needs a positive step")
        poses = [Pose3(rot_z(0.0), np.array([0.0, 0.0, zc]))]
        yaw = 0.0
        pos = np.array([0.0, 0.0, zc])
        for _ in range(num_poses - 1):
            for _attempt in range(100):
                trial_yaw = yaw + rng.uniform(-params.yaw_step_max, params.yaw_step_max)
                length = params.step * rng.uniform(0.5, 1.0)
                trial = pos + rot_z(trial_yaw) @ np.array([length, 0.0, 0.0])
                if walk_limit is None or np.max(np.abs(trial[:2])) <= walk_limit:
                    break
                yaw += np.pi / 2  # steer away from the boundary and retry
            else:
                raise ValueError("random walk could not stay inside the room")
            yaw = trial_yaw
            pos = trial
            poses.append(Pose3(rot_z(yaw), pos.copy()))
        step_bound = params.step

    return Trajectory(tuple(poses), kind, float(step_bound))


def _check_room_bound(trajectory: Trajectory, env: EnvironmentConfig, margin: float):
    reach = max(float(np.max(np.abs(p.translation[:2]))) for p in trajectory.poses)
    if reach > env.room_half_extent - margin + 1e-9:
        raise ValueError(
            f"trajectory reaches {reach:.3f} m from center, outside the room "
            f"(extent {env.room_half_extent}, margin {margin})"
        )


@dataclass(frozen=True)
class FrameSpec:
    """Candidate-pool geometry: a square frame or a linear array of mounts."""

    kind: str  # "square-frame" | "linear-array"
    intrinsics: CameraIntrinsics
    side_length: float = 0.8
    positions_per_side: int = 18
    count: int = 10
    spacing: float = 0.1
    yaw_offsets: tuple[float, ...] = (0.0,)
    mount_height: float = 0.0


def generate_candidate_grid(spec: FrameSpec) -> list[CandidateMount]:
    """Candidate mounts regularly spaced on the frame, replicated per yaw.

    Square frames walk the perimeter side by side (front +x, left +y,
    rear -x, right -y), each side claiming its starting corner, so
    ``positions_per_side`` n yields 4(n-1) distinct positions. The shipped
    ``square-frame-68`` preset uses n = 18. Linear arrays place ``count``
    mounts along body y, all forward-facing at yaw offset 0.
    """
    if not spec.yaw_offsets:
        raise ValueError("at least one yaw offset is required")
    placements: list[tuple[np.ndarray, float]] = []  # (position, base yaw)
    if spec.kind == "square-frame":
        n = spec.positions_per_side
        if n < 2:
            raise ValueError("positions_per_side must be >= 2")
        h = spec.side_length / 2.0
        corners = np.array([[h, -h], [h, h], [-h, h], [-h, -h]])
        outward = [0.0, np.pi / 2, np.pi, -np.pi / 2]
        for s in range(4):
            start, end = corners[s], corners[(s + 1) % 4]
            for p in range(n - 1):
                xy = start + (end - start) * p / (n - 1)
                placements.append((np.array([xy[0], xy[1], spec.mount_height]), outward[s]))
    elif spec.kind == "linear-array":
        if spec.count < 1:
            raise ValueError("linear array needs at least one mount")
        ys = (np.arange(spec.count) - (spec.count - 1) / 2.0) * spec.spacing
        for y in ys:
            placements.append((np.array([0.0, y, spec.mount_height]), 0.0))
    else:
        raise ValueError(f"unknown frame kind {spec.kind!r}")

    mounts = []
    for pos, base_yaw in placements:
        for yaw_off in spec.yaw_offsets:
            extrinsic = Pose3(rot_z(base_yaw + yaw_off) @ CAM_FORWARD, pos)
            mounts.append(CandidateMount(len(mounts), extrinsic, spec.intrinsics))
    return mounts


def frame_spec_from_config(cfg: CandidatesConfig) -> FrameSpec:
    intr = CameraIntrinsics(
        focal_px=cfg.focal_px,
        principal_point=np.array([cfg.image_width / 2.0, cfg.image_height / 2.0]),
        image_size=(cfg.image_width, cfg.image_height),
        pixel_sigma=1.0,  # overwritten by the noise section in build_scenario
        max_range=cfg.max_range,
    )
    yaws = tuple(np.deg2rad(cfg.yaw_offsets_deg))
    layout = cfg.layout
    if layout == "square-frame-68":
        return FrameSpec("square-frame", intr, side_length=cfg.side_length,
                         positions_per_side=18, yaw_offsets=(0.0,),
                         mount_height=cfg.mount_height)
    if layout == "linear-array-10":
        return FrameSpec("linear-array", intr, count=10, spacing=cfg.spacing,
                         yaw_offsets=(0.0,), mount_height=cfg.mount_height)
    if layout in ("square-frame", "linear-array"):
        return FrameSpec(layout, intr, side_length=cfg.side_length,
                         positions_per_side=cfg.positions_per_side, count=cfg.count,
                         spacing=cfg.spacing, yaw_offsets=yaws,
                         mount_height=cfg.mount_height)
    raise ValueError(f"unknown candidate layout {layout!r}")


def simulate_measurements(
    landmarks: list[Landmark],
    trajectory: Trajectory,
    candidates: list[CandidateMount],
    seed,
) -> list[Measurement]:
    """Every visible (pose, candidate, landmark) triple, in lexicographic
    (pose, candidate, landmark) order, with one Gaussian pixel-noise sample
    per measurement. An empty result signals an unobservable scene."""
    if not landmarks or not candidates:
        raise ValueError("landmarks and candidates must be nonempty")
    lms = np.array([l.position for l in landmarks])
    rows: list[tuple[int, int, int]] = []
    pixels: list[np.ndarray] = []
    sigmas: list[float] = []
    for i, pose in enumerate(trajectory.poses):
        for cand in candidates:
            cam = compose(pose, cand.extrinsic)
            intr = cand.intrinsics
            p_c = (lms - cam.translation) @ cam.rotation
            z = p_c[:, 2]
            with np.errstate(divide="ignore", invalid="ignore"):
                uv = intr.focal_px * p_c[:, :2] / z[:, None] + intr.principal_point
            w, h = intr.image_size
            vis = (
                (z > 0.0)
                & (np.linalg.norm(p_c, axis=1) <= intr.max_range)
                & (uv[:, 0] >= 0.0) & (uv[:, 0] <= w)
                & (uv[:, 1] >= 0.0) & (uv[:, 1] <= h)
            )
            for j in np.flatnonzero(vis):
                rows.append((i, int(j), cand.id))
                pixels.append(uv[j])
                sigmas.append(intr.pixel_sigma)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((len(rows), 2)) * np.asarray(sigmas)[:, None]
    return [
        Measurement(pose_idx=i, landmark_idx=j, candidate_id=k,
                    pixel=px, noisy_pixel=px + eta)
        for (i, j, k), px, eta in zip(rows, pixels, noise)
    ]


# ---------------------------------------------------------------------------
# the frozen scene
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Immutable-after-construction scene: landmarks, trajectory, candidate
    pool, and the frozen measurement layout."""

    landmarks: list[Landmark]
    trajectory: Trajectory
    candidates: list[CandidateMount]
    seed: int
    layout: list[Measurement]
    layout_name: str = "custom"
    _arrays: dict | None = field(default=None, repr=False, compare=False)

    @property
    def num_poses(self) -> int:
        return len(self.trajectory.poses)

    @property
    def num_landmarks(self) -> int:
        return len(self.landmarks)

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    def layout_arrays(self) -> dict:
        """Struct-of-arrays view of the layout, cached for the kernels."""
        if self._arrays is None:
            m = len(self.layout)
            arr = {
                "pose_idx": np.array([ms.pose_idx for ms in self.layout], dtype=np.int64),
                "landmark_idx": np.array([ms.landmark_idx for ms in self.layout], dtype=np.int64),
                "candidate_id": np.array([ms.candidate_id for ms in self.layout], dtype=np.int64),
                "pixel": np.array([ms.pixel for ms in self.layout]).reshape(m, 2),
                "noisy_pixel": np.array([ms.noisy_pixel for ms in self.layout]).reshape(m, 2),
            }
            arr["sigma"] = np.array(
                [self.candidates[k].intrinsics.pixel_sigma for k in arr["candidate_id"]]
            )
            self._arrays = arr
        return self._arrays

    def hash(self) -> str:
        """Stable content hash used to key derived artifacts and result rows."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_dict(self) -> dict:
        intr_d = lambda c: {
            "focal_px": c.intrinsics.focal_px,
            "principal_point": c.intrinsics.principal_point.tolist(),
            "image_size": list(c.intrinsics.image_size),
            "pixel_sigma": c.intrinsics.pixel_sigma,
            "max_range": c.intrinsics.max_range,
        }
        return {
            "format": "rigsel-scenario",
            "version": 1,
            "seed": self.seed,
            "layout_name": self.layout_name,
            "landmarks": [l.position.tolist() for l in self.landmarks],
            "trajectory": {
                "kind": self.trajectory.kind,
                "step_bound": self.trajectory.step_bound,
                "poses": [
                    {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}
                    for p in self.trajectory.poses
                ],
            },
            "candidates": [
                {
                    "id": c.id,
                    "rotation": c.extrinsic.rotation.tolist(),
                    "translation": c.extrinsic.translation.tolist(),
                    "intrinsics": intr_d(c),
                }
                for c in self.candidates
            ],
            "layout": [
                {
                    "pose_idx": m.pose_idx,
                    "landmark_idx": m.landmark_idx,
                    "candidate_id": m.candidate_id,
                    "pixel": m.pixel.tolist(),
                    "noisy_pixel": m.noisy_pixel.tolist(),
                }
                for m in self.layout
            ],
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        if d.get("format") != "rigsel-scenario":
            raise ValueError("not a scenario dump")
        landmarks = [Landmark(i, np.array(p)) for i, p in enumerate(d["landmarks"])]
        poses = tuple(
            Pose3(np.array(p["rotation"]), np.array(p["translation"]))
            for p in d["trajectory"]["poses"]
        )
        trajectory = Trajectory(poses, d["trajectory"]["kind"], d["trajectory"]["step_bound"])
        candidates = []
        for c in d["candidates"]:
            intr = CameraIntrinsics(
                focal_px=c["intrinsics"]["focal_px"],
                principal_point=np.array(c["intrinsics"]["principal_point"]),
                image_size=tuple(c["intrinsics"]["image_size"]),
                pixel_sigma=c["intrinsics"]["pixel_sigma"],
                max_range=c["intrinsics"]["max_range"],
            )
            candidates.append(
                CandidateMount(c["id"], Pose3(np.array(c["rotation"]), np.array(c["translation"])), intr)
            )
        layout = [
            Measurement(
                pose_idx=m["pose_idx"],
                landmark_idx=m["landmark_idx"],
                candidate_id=m["candidate_id"],
                pixel=np.array(m["pixel"]),
                noisy_pixel=np.array(m["noisy_pixel"]),
            )
            for m in d["layout"]
        ]
        return Scenario(landmarks, trajectory, candidates, d["seed"], layout,
                        layout_name=d.get("layout_name", "custom"))

    @staticmethod
    def load(path: str | Path) -> "Scenario":
        return Scenario.from_dict(json.loads(Path(path).read_text()))


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Deterministically build the full scene from one config.

    Sub-seeds for environment, trajectory, and measurement noise derive from
    the config seed via ``np.random.SeedSequence(seed).spawn(3)``.
    """
    env_seed, traj_seed, meas_seed = np.random.SeedSequence(config.seed).spawn(3)
    landmarks = generate_environment(
        config.environment.room_half_extent,
        config.environment.landmarks_per_wall,
        config.environment.jitter_sigma,
        env_seed,
        wall_height=config.environment.wall_height,
        include_ceiling=config.environment.include_ceiling,
        placement=config.environment.placement,
        volume_count=config.environment.volume_count,
    )
    walk_limit = config.environment.room_half_extent - config.trajectory.margin
    trajectory = generate_trajectory(
        config.trajectory.kind, config.trajectory.num_poses, config.trajectory, traj_seed,
        walk_limit=walk_limit,
    )
    _check_room_bound(trajectory, config.environment, config.trajectory.margin)

    spec = frame_spec_from_config(config.candidates)
    intr = CameraIntrinsics(
        focal_px=spec.intrinsics.focal_px,
        principal_point=spec.intrinsics.principal_point,
        image_size=spec.intrinsics.image_size,
        pixel_sigma=config.noise.pixel_sigma,
        max_range=spec.intrinsics.max_range,
    )
    spec = FrameSpec(spec.kind, intr, spec.side_length, spec.positions_per_side,
                     spec.count, spec.spacing, spec.yaw_offsets, spec.mount_height)
    candidates = generate_candidate_grid(spec)
    layout = simulate_measurements(landmarks, trajectory, candidates, meas_seed)
    return Scenario(landmarks, trajectory, candidates, config.seed, layout,
                    layout_name=config.candidates.layout)
