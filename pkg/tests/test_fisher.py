import numpy as np
import pytest
import scipy.linalg

from rigsel.fisher import (
    CandidateInfo,
    InfoAssembly,
    SchurFactorizationError,
    assemble,
    build_candidate_infos,
    load_candidate_infos,
    save_candidate_infos,
    schur_complement,
)
from rigsel.geometry import Pose3, retract, rot_z
from rigsel.scenario import (
    CandidateMount,
    Landmark,
    Scenario,
    Trajectory,
    simulate_measurements,
)

from conftest import make_small_scene, wide_intrinsics


def dense_schur_oracle(dense: np.ndarray, pose_dim: int, tol_obs: float = 1e-9):
    """Generalized Schur complement via an unstructured dense pseudoinverse,
    zeroing eigencomponents below the same observability threshold the
    implementation uses."""
    Ipp = dense[:pose_dim, :pose_dim]
    Ipl = dense[:pose_dim, pose_dim:]
    Ill = dense[pose_dim:, pose_dim:]
    return Ipp - Ipl @ scipy.linalg.pinvh(Ill, atol=tol_obs, rtol=0.0) @ Ipl.T


def negative_log_likelihood(scenario, candidate_id, xi):
    """Gaussian measurement NLL of one candidate at a tangent offset xi from
    ground truth, using the noiseless pixels (zero residual at xi = 0)."""
    P = scenario.num_poses
    L = scenario.num_landmarks
    poses = [scenario.trajectory.poses[0]]
    for i in range(1, P):
        poses.append(retract(scenario.trajectory.poses[i], xi[6 * (i - 1):6 * i]))
    lm_off = 6 * (P - 1)
    lms = np.stack([lm.position for lm in scenario.landmarks])
    lms = lms + xi[lm_off:].reshape(L, 3)
    total = 0.0
    for m in scenario.layout:
        if m.candidate_id != candidate_id:
            continue
        cand = scenario.candidates[m.candidate_id]
        cam_r = poses[m.pose_idx].rotation @ cand.extrinsic.rotation
        cam_t = poses[m.pose_idx].rotation @ cand.extrinsic.translation \
            + poses[m.pose_idx].translation
        p_c = cam_r.T @ (lms[m.landmark_idx] - cam_t)
        uv = cand.intrinsics.focal_px * p_c[:2] / p_c[2] + cand.intrinsics.principal_point
        r = (uv - m.pixel) / cand.intrinsics.pixel_sigma
        total += 0.5 * float(r @ r)
    return total


class TestBuildCandidateInfos:
    def test_blocks_are_symmetric_psd(self, small_assembly):
        for info in small_assembly.candidate_infos:
            dense = info.to_dense(small_assembly.num_free_poses,
                                  small_assembly.num_landmarks)
            np.testing.assert_allclose(dense, dense.T, atol=1e-12)
            eigs = np.linalg.eigvalsh(dense)
            assert eigs[0] >= -1e-9 * max(eigs[-1], 1.0)

    def test_measurement_counts(self, small_scene, small_assembly):
        arr = small_scene.layout_arrays()
        for info in small_assembly.candidate_infos:
            assert info.measurement_count == int(np.sum(arr["candidate_id"] == info.candidate_id))

    def test_zero_measurement_candidate_is_all_zero(self):
        scene = make_small_scene()
        # add a mount pointing straight up: it sees nothing in this scene
        up = Pose3(
            np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
            np.zeros(3),
        )
        candidates = scene.candidates + [CandidateMount(2, up, wide_intrinsics())]
        layout = simulate_measurements(scene.landmarks, scene.trajectory, candidates, 7)
        scen = Scenario(scene.landmarks, scene.trajectory, candidates, 7, layout)
        asm = build_candidate_infos(scen)
        blind = asm.candidate_infos[2]
        assert blind.measurement_count == 0
        assert len(blind.pose_idx) == 0 and len(blind.lm_idx) == 0
        assert not blind.to_dense(asm.num_free_poses, asm.num_landmarks).any()

    def test_single_measurement_rank_and_trace(self):
        # one landmark straight ahead of pose 1 only
        landmarks = [Landmark(0, np.array([6.0, 2.0, 0.0]))]
        poses = (
            Pose3(rot_z(-2.0), np.zeros(3)),  # looks away
            Pose3(np.eye(3), np.array([2.0, 2.0, 0.0])),
        )
        traj = Trajectory(poses, "random", step_bound=3.0)
        cam = Pose3(
            np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
            np.zeros(3),
        )
        sigma = 0.7
        cand = CandidateMount(0, cam, wide_intrinsics(pixel_sigma=sigma))
        layout = simulate_measurements(landmarks, traj, [cand], 0)
        assert len(layout) == 1
        scen = Scenario(landmarks, traj, [cand], 0, layout)
        asm = build_candidate_infos(scen)
        dense = asm.candidate_infos[0].to_dense(1, 1)
        assert np.linalg.matrix_rank(dense, tol=1e-9) <= 2
        from rigsel.geometry import projection_jacobians

        jac = projection_jacobians(poses[1], cam, cand.intrinsics, landmarks[0].position)
        J = np.hstack([jac.J_pose, jac.J_lm])
        assert np.trace(dense) == pytest.approx(np.sum(J**2) / sigma**2, rel=1e-12)

    def test_matches_numeric_hessian(self, small_scene, small_assembly):
        """Expected negative Hessian of each candidate's log-likelihood at
        ground truth, by Richardson-extrapolated central second differences."""
        D = small_assembly.dim

        def fd_hessian(candidate_id, h):
            H = np.zeros((D, D))
            for a in range(D):
                for b in range(a, D):
                    vals = []
                    for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                        xi = np.zeros(D)
                        xi[a] += sa * h
                        xi[b] += sb * h
                        vals.append(
                            negative_log_likelihood(small_scene, candidate_id, xi)
                        )
                    H[a, b] = H[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
            return H

        for info in small_assembly.candidate_infos:
            dense = info.to_dense(small_assembly.num_free_poses,
                                  small_assembly.num_landmarks)
            coarse = fd_hessian(info.candidate_id, 2e-3)
            fine = fd_hessian(info.candidate_id, 1e-3)
            H = (4.0 * fine - coarse) / 3.0  # cancels the O(h^2) term
            scale = np.abs(dense).max()
            assert np.abs(H - dense).max() <= 1e-6 * scale


class TestAssemble:
    def test_zero_weights_give_zero(self, small_assembly):
        info = assemble(small_assembly, np.zeros(2))
        assert not info.to_dense().any()

    def test_unit_vector_recovers_candidate(self, small_assembly):
        for k in range(2):
            info = assemble(small_assembly, np.eye(2)[k])
            expected = small_assembly.candidate_infos[k].to_dense(
                small_assembly.num_free_poses, small_assembly.num_landmarks
            )
            np.testing.assert_allclose(info.to_dense(), expected, atol=1e-12)

    def test_linearity(self, small_assembly):
        rng = np.random.default_rng(0)
        w = rng.uniform(0.0, 0.5, 2)
        v = rng.uniform(0.0, 0.5, 2)
        lhs = assemble(small_assembly, w).to_dense() + assemble(small_assembly, v).to_dense()
        rhs = assemble(small_assembly, w + v).to_dense()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_dimension_mismatch(self, small_assembly):
        with pytest.raises(ValueError):
            assemble(small_assembly, np.ones(5))


class TestSchurComplement:
    def test_matches_dense_pinv_oracle(self, small_assembly):
        rng = np.random.default_rng(1)
        for _ in range(5):
            w = rng.uniform(0.0, 1.0, 2)
            info = assemble(small_assembly, w)
            res = schur_complement(info)
            oracle = dense_schur_oracle(info.to_dense(), small_assembly.pose_dim)
            np.testing.assert_allclose(res.S, oracle, atol=1e-8)
            lam_oracle = scipy.linalg.eigvalsh(oracle)[0]
            assert res.lambda1 == pytest.approx(lam_oracle, abs=1e-8)

    def test_all_landmarks_dropped_leaves_pose_block(self, small_assembly):
        info = assemble(small_assembly, np.ones(2))
        res = schur_complement(info, tol_obs=1e30)
        assert not res.retained.any()
        dense = info.to_dense()
        np.testing.assert_allclose(res.S, dense[:small_assembly.pose_dim,
                                                :small_assembly.pose_dim])

    def test_zero_matrix(self, small_assembly):
        res = schur_complement(assemble(small_assembly, np.zeros(2)))
        assert res.lambda1 == pytest.approx(0.0, abs=1e-12)
        assert not res.retained.any()

    def test_psd_preserved(self, tiny_assembly):
        rng = np.random.default_rng(2)
        for _ in range(10):
            w = rng.uniform(0.0, 1.0, tiny_assembly.num_candidates)
            res = schur_complement(assemble(tiny_assembly, w))
            top = np.linalg.eigvalsh(res.S)[-1]
            assert res.lambda1 >= -1e-9 * max(top, 1.0)

    def test_loewner_monotone(self, tiny_assembly):
        rng = np.random.default_rng(3)
        for _ in range(10):
            lo = rng.uniform(0.0, 0.7, tiny_assembly.num_candidates)
            hi = np.minimum(lo + rng.uniform(0.0, 0.3, lo.shape), 1.0)
            f_lo = schur_complement(assemble(tiny_assembly, lo)).lambda1
            f_hi = schur_complement(assemble(tiny_assembly, hi)).lambda1
            assert f_hi >= f_lo - 1e-10

    def test_matrix_concavity_spot_check(self, tiny_assembly):
        rng = np.random.default_rng(4)
        N = tiny_assembly.num_candidates
        for _ in range(10):
            wa = rng.uniform(0.05, 1.0, N)
            wb = rng.uniform(0.05, 1.0, N)
            theta = rng.uniform(0.1, 0.9)
            Sa = schur_complement(assemble(tiny_assembly, wa)).S
            Sb = schur_complement(assemble(tiny_assembly, wb)).S
            Sm = schur_complement(assemble(tiny_assembly, theta * wa + (1 - theta) * wb)).S
            gap = Sm - theta * Sa - (1 - theta) * Sb
            assert np.linalg.eigvalsh(gap)[0] >= -1e-8 * max(1.0, np.abs(Sm).max())

    def test_nonfinite_block_raises_with_landmark_id(self, small_assembly):
        info = assemble(small_assembly, np.ones(2))
        info.lm_diag[3] = np.nan
        with pytest.raises(SchurFactorizationError) as err:
            schur_complement(info)
        assert err.value.landmark_id == 3


class TestIndexMaps:
    def test_offsets_cover_state(self, small_assembly):
        a = small_assembly
        offsets = [a.pose_offset(i) for i in range(1, a.num_free_poses + 1)]
        offsets += [a.landmark_offset(j) for j in range(a.num_landmarks)]
        spans = []
        for o in offsets[:a.num_free_poses]:
            spans.extend(range(o, o + 6))
        for o in offsets[a.num_free_poses:]:
            spans.extend(range(o, o + 3))
        assert sorted(spans) == list(range(a.dim))

    def test_anchored_pose_has_no_offset(self, small_assembly):
        with pytest.raises(ValueError):
            small_assembly.pose_offset(0)


class TestDump:
    def test_round_trip(self, small_scene, small_assembly, tmp_path):
        path = tmp_path / "infos.npz"
        save_candidate_infos(small_assembly, path, small_scene.hash())
        loaded = load_candidate_infos(path, expected_hash=small_scene.hash())
        assert loaded.num_free_poses == small_assembly.num_free_poses
        for a, b in zip(loaded.candidate_infos, small_assembly.candidate_infos):
            np.testing.assert_allclose(
                a.to_dense(loaded.num_free_poses, loaded.num_landmarks),
                b.to_dense(loaded.num_free_poses, loaded.num_landmarks),
            )

    def test_hash_mismatch_rejected(self, small_assembly, tmp_path):
        path = tmp_path / "infos.npz"
        save_candidate_infos(small_assembly, path, "abc123")
        with pytest.raises(ValueError):
            load_candidate_infos(path, expected_hash="different")
