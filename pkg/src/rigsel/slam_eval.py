"""Downstream validation: solve the landmark-SLAM maximum-likelihood problem
restricted to a selected set of mounts and report translational RMSE.

Pose 0 is anchored at ground truth (the same gauge fix the information
pipeline uses), so RMSE needs no trajectory alignment. Residuals and
Jacobians share the projection conventions of `geometry`, which keeps the
estimator consistent with the information-matrix linearization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose3, projection_jacobians_batch, retract
from .objective import SelectionVector
from .scenario import Scenario


class EmptyProblemError(ValueError):
    """Selected design produces no measurements (unusable, not a crash)."""


@dataclass
class NlsProblem:
    """Reprojection residuals of the measurements a selection keeps.

    Variables are poses 1..P-1 plus the landmarks observed by at least one
    selected measurement; each residual is weighted by 1/sigma.
    """

    scenario: Scenario
    selection: SelectionVector
    pose_idx: np.ndarray  # (M,)
    lm_idx: np.ndarray  # (M,) original landmark ids
    lm_local: np.ndarray  # (M,) columns into the observed-landmark table
    cand_id: np.ndarray  # (M,)
    pixels: np.ndarray  # (M, 2) measured pixels
    sigma: np.ndarray  # (M,)
    lm_ids: np.ndarray  # (L_obs,) observed landmark ids, ascending

    @property
    def residual_count(self) -> int:
        return len(self.pose_idx)

    @property
    def num_free_poses(self) -> int:
        return self.scenario.num_poses - 1

    @property
    def num_observed_landmarks(self) -> int:
        return len(self.lm_ids)


@dataclass
class MleSolution:
    pose_estimates: list[Pose3]  # length P; pose 0 is the anchor
    landmark_estimates: np.ndarray  # (L_obs, 3)
    lm_ids: np.ndarray
    final_cost: float
    initial_cost: float
    iterations: int
    converged: bool
    grad_norm: float


def build_problem(scenario: Scenario, selection: SelectionVector,
                  pixels: str = "noisy") -> NlsProblem:
    """Residuals are exactly the layout entries whose candidate is selected.

    ``pixels`` chooses the measured values: "noisy" (default) or "true"
    (the noiseless projections, for consistency checks).
    """
    if pixels not in ("noisy", "true"):
        raise ValueError("pixels must be 'noisy' or 'true'")
    arr = scenario.layout_arrays()
    keep = selection.s[arr["candidate_id"]] == 1
    if not np.any(keep):
        raise EmptyProblemError("no measurements selected; design is unusable")
    lm_idx = arr["landmark_idx"][keep]
    lm_ids = np.unique(lm_idx)
    lm_local = np.searchsorted(lm_ids, lm_idx)
    measured = arr["noisy_pixel"] if pixels == "noisy" else arr["pixel"]
    return NlsProblem(
        scenario=scenario,
        selection=selection,
        pose_idx=arr["pose_idx"][keep],
        lm_idx=lm_idx,
        lm_local=lm_local,
        cand_id=arr["candidate_id"][keep],
        pixels=measured[keep],
        sigma=arr["sigma"][keep],
        lm_ids=lm_ids,
    )


def _stack_extrinsics(problem: NlsProblem):
    cands = problem.scenario.candidates
    R_e = np.stack([cands[k].extrinsic.rotation for k in problem.cand_id])
    t_e = np.stack([cands[k].extrinsic.translation for k in problem.cand_id])
    focal = np.array([cands[k].intrinsics.focal_px for k in problem.cand_id])
    pp = np.stack([cands[k].intrinsics.principal_point for k in problem.cand_id])
    return R_e, t_e, focal, pp


def _residuals(problem, poses, lms_local, R_e, t_e, focal, pp):
    """Weighted reprojection residuals at the current estimate (M, 2)."""
    R_b = np.stack([poses[i].rotation for i in problem.pose_idx])
    t_b = np.stack([poses[i].translation for i in problem.pose_idx])
    lm = lms_local[problem.lm_local]
    p_b = np.einsum("mji,mj->mi", R_b, lm - t_b)
    p_c = np.einsum("mji,mj->mi", R_e, p_b - t_e)
    z = p_c[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = focal[:, None] * p_c[:, :2] / z[:, None] + pp
    return (uv - problem.pixels) / problem.sigma[:, None]


def _normal_equations(problem, poses, lms_local, r, R_e, t_e, focal):
    """Arrow-structured Gauss-Newton system: block-diagonal pose and landmark
    parts plus a dense (pose, landmark) coupling tensor."""
    P1 = problem.num_free_poses
    L = problem.num_observed_landmarks
    R_b = np.stack([poses[i].rotation for i in problem.pose_idx])
    t_b = np.stack([poses[i].translation for i in problem.pose_idx])
    lm = lms_local[problem.lm_local]
    J_pose, J_lm = projection_jacobians_batch(R_b, t_b, R_e, t_e, lm, focal)
    w = 1.0 / problem.sigma
    J_pose = J_pose * w[:, None, None]
    J_lm = J_lm * w[:, None, None]

    free = problem.pose_idx > 0
    fp = problem.pose_idx[free] - 1
    fl = problem.lm_local[free]

    Hpp = np.zeros((P1, 6, 6))
    np.add.at(Hpp, fp, np.einsum("mia,mib->mab", J_pose[free], J_pose[free]))
    Hll = np.zeros((L, 3, 3))
    np.add.at(Hll, problem.lm_local, np.einsum("mia,mib->mab", J_lm, J_lm))
    Hpl = np.zeros((P1, L, 6, 3))
    np.add.at(Hpl, (fp, fl), np.einsum("mia,mib->mab", J_pose[free], J_lm[free]))

    gp = np.zeros((P1, 6))
    np.add.at(gp, fp, np.einsum("mia,mi->ma", J_pose[free], r[free]))
    gl = np.zeros((L, 3))
    np.add.at(gl, problem.lm_local, np.einsum("mia,mi->ma", J_lm, r))
    return Hpp, Hll, Hpl, gp, gl


def _solve_damped(Hpp, Hll, Hpl, gp, gl, damping):
    """Landmark-eliminated solve of (H + damping*I) delta = -g."""
    P1, L = Hpp.shape[0], Hll.shape[0]
    Hll_d = Hll + damping * np.eye(3)
    Hll_inv = np.linalg.inv(Hll_d)
    # Reduced pose system.
    S = np.zeros((6 * P1, 6 * P1))
    view = S.reshape(P1, 6, P1, 6)
    view[np.arange(P1), :, np.arange(P1), :] = Hpp + damping * np.eye(6)
    X = np.einsum("plab,lbc->plac", Hpl, Hll_inv)
    view -= np.einsum("plac,qlbc->paqb", X, Hpl)
    rhs = -(gp - np.einsum("plac,lc->pa", X, gl)).ravel()
    dp = np.linalg.solve(S, rhs).reshape(P1, 6)
    dl = -np.einsum("lab,lb->la", Hll_inv,
                    gl + np.einsum("plab,pa->lb", Hpl, dp))
    return dp, dl


def solve_mle(
    problem: NlsProblem,
    init_trans_sigma: float = 0.05,
    init_rot_sigma: float = 0.02,
    seed=0,
    grad_tol: float = 1e-8,
    max_iter: int = 100,
) -> MleSolution:
    """Levenberg-damped Gauss-Newton from a perturbed-ground-truth start.

    Initialization draws Gaussian tangent perturbations (rotation and
    translation separately) around ground truth; landmark starts get the
    translation sigma. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    scen = problem.scenario
    gt_poses = list(scen.trajectory.poses)
    poses = [gt_poses[0]]
    for p in gt_poses[1:]:
        xi = np.concatenate([
            rng.normal(0.0, init_rot_sigma, 3),
            rng.normal(0.0, init_trans_sigma, 3),
        ])
        poses.append(retract(p, xi))
    lms = np.stack([scen.landmarks[j].position for j in problem.lm_ids])
    lms = lms + rng.normal(0.0, init_trans_sigma, lms.shape)

    R_e, t_e, focal, pp = _stack_extrinsics(problem)
    r = _residuals(problem, poses, lms, R_e, t_e, focal, pp)
    cost = 0.5 * float(np.sum(r * r))
    if not np.isfinite(cost):
        return MleSolution(poses, lms, problem.lm_ids, float("inf"), float("inf"),
                           0, False, float("inf"))
    initial_cost = cost

    damping = 1e-6
    converged = False
    grad_norm = float("inf")
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Hpp, Hll, Hpl, gp, gl = _normal_equations(problem, poses, lms, r, R_e, t_e, focal)
        grad_norm = max(
            float(np.abs(gp).max(initial=0.0)), float(np.abs(gl).max(initial=0.0))
        )
        if grad_norm <= grad_tol:
            converged = True
            break
        stepped = False
        for _ in range(12):
            try:
                dp, dl = _solve_damped(Hpp, Hll, Hpl, gp, gl, damping)
            except np.linalg.LinAlgError:
                damping = min(damping * 10.0, 1e10)
                continue
            trial_poses = [poses[0]] + [
                retract(poses[i + 1], dp[i]) for i in range(len(dp))
            ]
            trial_lms = lms + dl
            r_trial = _residuals(problem, trial_poses, trial_lms, R_e, t_e, focal, pp)
            trial_cost = 0.5 * float(np.sum(r_trial * r_trial))
            if np.isfinite(trial_cost) and trial_cost < cost:
                poses, lms, r, cost = trial_poses, trial_lms, r_trial, trial_cost
                damping = max(damping / 3.0, 1e-12)
                stepped = True
                break
            damping = min(damping * 10.0, 1e10)
        if not stepped:
            # No damped step reduces the cost: stationary to within floating
            # point resolution.
            converged = grad_norm <= 1e-4
            break
    return MleSolution(
        pose_estimates=poses,
        landmark_estimates=lms,
        lm_ids=problem.lm_ids,
        final_cost=cost,
        initial_cost=initial_cost,
        iterations=iterations,
        converged=converged,
        grad_norm=grad_norm,
    )


def rmse_translation(solution: MleSolution, scenario: Scenario) -> float:
    """Root-mean-square translation error over the non-anchored poses."""
    gt = scenario.trajectory.poses
    errs = [
        np.sum((solution.pose_estimates[i].translation - gt[i].translation) ** 2)
        for i in range(1, len(gt))
    ]
    return float(np.sqrt(np.mean(errs)))
