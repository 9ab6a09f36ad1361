"""SE(3) pose algebra, pinhole camera model, and analytic projection Jacobians.

Conventions used everywhere in this package:

* A ``Pose3`` maps local coordinates to world coordinates: ``p_w = R p + t``.
* Camera frame: +z is the optical axis (forward), +x right, +y down.
* Tangent perturbations are 6-vectors ``[rotation(3); translation(3)]``
  applied on the right: ``retract(X, xi) = (R exp(xi_rot^), t + R xi_trans)``.
  All Fisher-information blocks and MLE Jacobians use this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROT_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 skew-symmetric matrix such that skew(v) @ w == cross(v, w)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def exp_so3(theta: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map from a rotation 3-vector to SO(3)."""
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < 1e-10:
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / angle
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Inverse of exp_so3; returns the rotation vector of R."""
    cos_angle = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_angle)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-8:
        return w
    if np.pi - angle < 1e-6:
        # Near pi the vee part vanishes; recover the axis from R + I.
        A = R + np.eye(3)
        axis = A[:, np.argmax(np.diag(A))]
        axis = axis / np.linalg.norm(axis)
        return angle * axis * np.sign(axis @ w + 1e-300)
    return w * angle / np.sin(angle)


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    cos_angle = np.clip(0.5 * (np.trace(Ra.T @ Rb) - 1.0), -1.0, 1.0)
    return float(np.arccos(cos_angle))


@dataclass(frozen=True)
class Pose3:
    """Rigid transform in SE(3): ``p_world = rotation @ p_local + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("Pose3 expects a 3x3 rotation and a 3-vector translation")
        if np.abs(R.T @ R - np.eye(3)).max() > ROT_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ROT_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(3), np.zeros(3))

    def transform(self, p: np.ndarray) -> np.ndarray:
        """Map a local point (or (n,3) array of points) into world coordinates."""
        p = np.asarray(p, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def allclose(self, other: "Pose3", atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Pose composition: (a * b).transform(p) == a.transform(b.transform(p))."""
    return Pose3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose3) -> Pose3:
    return Pose3(p.rotation.T, -p.rotation.T @ p.translation)


def retract(p: Pose3, xi: np.ndarray) -> Pose3:
    """Right-perturbation by a tangent vector ``xi = [rot(3); trans(3)]``."""
    xi = np.asarray(xi, dtype=np.float64)
    R = p.rotation @ exp_so3(xi[:3])
    t = p.translation + p.rotation @ xi[3:]
    return Pose3(R, t)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with isotropic pixel noise and a hard range cap."""

    focal_px: float
    principal_point: np.ndarray  # (2,) pixels
    image_size: tuple[int, int]  # (width, height) pixels
    pixel_sigma: float
    max_range: float

    def __post_init__(self):
        pp = np.asarray(self.principal_point, dtype=np.float64)
        object.__setattr__(self, "principal_point", pp)
        w, h = self.image_size
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        if self.pixel_sigma <= 0:
            raise ValueError("pixel_sigma must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if w <= 0 or h <= 0:
            raise ValueError("image_size entries must be positive")
        if not (0.0 <= pp[0] <= w and 0.0 <= pp[1] <= h):
            raise ValueError("principal point must lie inside the image bounds")


@dataclass(frozen=True)
class ProjectionJacobians:
    """Analytic derivatives of one pixel observation.

    ``J_pose`` is with respect to the right-perturbation tangent of the robot
    pose (ordering [rotation; translation]); ``J_lm`` with respect to the
    landmark world position.
    """

    J_pose: np.ndarray  # (2, 6)
    J_lm: np.ndarray  # (2, 3)
    pixel: np.ndarray  # (2,)
    depth: float


def project(
    cam_world: Pose3, intr: CameraIntrinsics, lm: np.ndarray
) -> tuple[np.ndarray, float] | None:
    """Project a world landmark through a camera at a world pose.

    Returns ``(pixel, depth)`` when the landmark is visible (positive depth,
    pixel inside the image bounds, Euclidean range within ``max_range``),
    otherwise None.
    """
    p_c = cam_world.rotation.T @ (np.asarray(lm, dtype=np.float64) - cam_world.translation)
    z = p_c[2]
    if z <= 0.0:
        return None
    if np.linalg.norm(p_c) > intr.max_range:
        return None
    pixel = intr.focal_px * p_c[:2] / z + intr.principal_point
    w, h = intr.image_size
    if not (0.0 <= pixel[0] <= w and 0.0 <= pixel[1] <= h):
        return None
    return pixel, float(z)


def projection_jacobians(
    robot_pose: Pose3,
    extrinsic: Pose3,
    intr: CameraIntrinsics,
    lm: np.ndarray,
) -> ProjectionJacobians | None:
    """Pixel Jacobians for one (robot pose, mount, landmark) triple.

    The camera world pose is ``compose(robot_pose, extrinsic)``. Returns None
    when the landmark is not visible from that camera.
    """
    cam_world = compose(robot_pose, extrinsic)
    result = project(cam_world, intr, lm)
    if result is None:
        return None
    pixel, depth = result

    R_b, t_b = robot_pose.rotation, robot_pose.translation
    R_e = extrinsic.rotation
    p_b = R_b.T @ (np.asarray(lm, dtype=np.float64) - t_b)  # landmark in body frame
    p_c = R_e.T @ (p_b - extrinsic.translation)
    x, y, z = p_c
    J_pi = (intr.focal_px / z) * np.array([[1.0, 0.0, -x / z], [0.0, 1.0, -y / z]])

    dpc_drot = R_e.T @ skew(p_b)
    dpc_dtrans = -R_e.T
    J_pose = np.hstack([J_pi @ dpc_drot, J_pi @ dpc_dtrans])
    J_lm = J_pi @ (R_b @ R_e).T
    return ProjectionJacobians(J_pose=J_pose, J_lm=J_lm, pixel=pixel, depth=depth)


def projection_jacobians_batch(
    R_b: np.ndarray,
    t_b: np.ndarray,
    R_e: np.ndarray,
    t_e: np.ndarray,
    lms: np.ndarray,
    focal: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Jacobians for M measurements.

    All inputs are stacked per measurement: rotations (M,3,3), translations
    and landmarks (M,3), focal lengths (M,). Assumes every measurement is
    visible (callers filter beforehand). Returns ``(J_pose (M,2,6),
    J_lm (M,2,3))``, identical to per-measurement `projection_jacobians`.
    """
    p_b = np.einsum("mji,mj->mi", R_b, lms - t_b)
    p_c = np.einsum("mji,mj->mi", R_e, p_b - t_e)
    x, y, z = p_c[:, 0], p_c[:, 1], p_c[:, 2]

    M = len(z)
    J_pi = np.zeros((M, 2, 3))
    J_pi[:, 0, 0] = 1.0 / z
    J_pi[:, 0, 2] = -x / z**2
    J_pi[:, 1, 1] = 1.0 / z
    J_pi[:, 1, 2] = -y / z**2
    J_pi *= focal[:, None, None]

    pb_skew = np.zeros((M, 3, 3))
    pb_skew[:, 0, 1] = -p_b[:, 2]
    pb_skew[:, 0, 2] = p_b[:, 1]
    pb_skew[:, 1, 0] = p_b[:, 2]
    pb_skew[:, 1, 2] = -p_b[:, 0]
    pb_skew[:, 2, 0] = -p_b[:, 1]
    pb_skew[:, 2, 1] = p_b[:, 0]

    R_eT = R_e.transpose(0, 2, 1)
    J_pose = np.empty((M, 2, 6))
    J_pose[:, :, :3] = J_pi @ R_eT @ pb_skew
    J_pose[:, :, 3:] = -(J_pi @ R_eT)
    R_wc = R_b @ R_e
    J_lm = J_pi @ R_wc.transpose(0, 2, 1)
    return J_pose, J_lm
