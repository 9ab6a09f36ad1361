"""Per-candidate information matrices, their weighted assembly, and the
generalized Schur complement over landmarks.

Variable ordering and gauge: pose 0 is anchored (its 6 rows/columns are
deleted), so the free state is [pose 1 .. pose P-1 | landmark 0 .. L-1] with
dimension D = 6(P-1) + 3L. Because every measurement couples exactly one
pose and one landmark, every information matrix here has arrow structure:

* pose-pose part: block diagonal, one 6x6 block per free pose;
* landmark-landmark part: block diagonal, one 3x3 block per landmark;
* pose-landmark coupling: sparse 6x3 blocks on the (pose, landmark) pairs
  that appear in the measurement layout.

The coupling blocks of all candidates share one union sparsity pattern,
stored CSC-style grouped by landmark; that is what the Schur kernel in
`accel` consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import accel
from .geometry import projection_jacobians_batch
from .scenario import Scenario

DEFAULT_TOL_OBS = 1e-9
DENSE_EIG_MAX_DIM = 3000


class SchurFactorizationError(RuntimeError):
    """Raised when a retained landmark block cannot be factorized."""

    def __init__(self, landmark_id: int, message: str):
        super().__init__(f"landmark {landmark_id}: {message}")
        self.landmark_id = landmark_id


@dataclass
class CandidateInfo:
    """Block-sparse information matrix contributed by one candidate mount.

    Only the blocks the candidate actually touches are stored; indices are
    free-pose indices (pose p lives at p-1) and landmark indices.
    """

    candidate_id: int
    pose_idx: np.ndarray  # (n_pp,)
    pose_blocks: np.ndarray  # (n_pp, 6, 6)
    lm_idx: np.ndarray  # (n_ll,)
    lm_blocks: np.ndarray  # (n_ll, 3, 3)
    cross_pose: np.ndarray  # (n_pl,)
    cross_lm: np.ndarray  # (n_pl,)
    cross_blocks: np.ndarray  # (n_pl, 6, 3)
    measurement_count: int

    def to_dense(self, n_free_poses: int, n_landmarks: int) -> np.ndarray:
        D = 6 * n_free_poses + 3 * n_landmarks
        out = np.zeros((D, D))
        for i, B in zip(self.pose_idx, self.pose_blocks):
            out[6 * i:6 * i + 6, 6 * i:6 * i + 6] = B
        off = 6 * n_free_poses
        for j, B in zip(self.lm_idx, self.lm_blocks):
            out[off + 3 * j:off + 3 * j + 3, off + 3 * j:off + 3 * j + 3] = B
        for i, j, B in zip(self.cross_pose, self.cross_lm, self.cross_blocks):
            out[6 * i:6 * i + 6, off + 3 * j:off + 3 * j + 3] = B
            out[off + 3 * j:off + 3 * j + 3, 6 * i:6 * i + 6] = B.T
        return out


@dataclass
class InfoAssembly:
    """All candidate information matrices plus the flattened views and the
    union coupling pattern used by the assembly/Schur/gradient kernels."""

    num_free_poses: int
    num_landmarks: int
    candidate_infos: list[CandidateInfo]
    anchored_pose: int = 0

    # flattened per-candidate entries (concatenated in candidate-id order)
    pp_ptr: np.ndarray = field(init=False, repr=False)
    pp_cand: np.ndarray = field(init=False, repr=False)
    pp_idx: np.ndarray = field(init=False, repr=False)
    pp_blocks: np.ndarray = field(init=False, repr=False)
    ll_ptr: np.ndarray = field(init=False, repr=False)
    ll_cand: np.ndarray = field(init=False, repr=False)
    ll_idx: np.ndarray = field(init=False, repr=False)
    ll_blocks: np.ndarray = field(init=False, repr=False)
    pl_ptr: np.ndarray = field(init=False, repr=False)
    pl_cand: np.ndarray = field(init=False, repr=False)
    pl_pose: np.ndarray = field(init=False, repr=False)
    pl_lm: np.ndarray = field(init=False, repr=False)
    pl_slot: np.ndarray = field(init=False, repr=False)
    pl_blocks: np.ndarray = field(init=False, repr=False)
    # union coupling pattern, grouped by landmark
    lm_ptr: np.ndarray = field(init=False, repr=False)
    cross_rows: np.ndarray = field(init=False, repr=False)
    slot_lm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        infos = sorted(self.candidate_infos, key=lambda c: c.candidate_id)
        if not infos or [c.candidate_id for c in infos] != list(range(len(infos))):
            raise ValueError("candidate ids must be nonempty and contiguous from 0")
        self.candidate_infos = infos

        def concat(getter):
            parts = [getter(c) for c in infos]
            counts = np.array([len(p[0]) for p in parts], dtype=np.int64)
            ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            cand = np.repeat(np.arange(len(infos), dtype=np.int64), counts)
            arrays = [np.concatenate([p[slot] for p in parts]) for slot in range(len(parts[0]))]
            return ptr, cand, arrays

        self.pp_ptr, self.pp_cand, (self.pp_idx, self.pp_blocks) = concat(
            lambda c: (c.pose_idx, c.pose_blocks))
        self.ll_ptr, self.ll_cand, (self.ll_idx, self.ll_blocks) = concat(
            lambda c: (c.lm_idx, c.lm_blocks))
        self.pl_ptr, self.pl_cand, (self.pl_pose, self.pl_lm, self.pl_blocks) = concat(
            lambda c: (c.cross_pose, c.cross_lm, c.cross_blocks))

        # Union (landmark, pose) pairs in (lm, pose) order define the slots.
        key = self.pl_lm * self.num_free_poses + self.pl_pose
        uniq = np.unique(key)
        self.pl_slot = np.searchsorted(uniq, key).astype(np.int64)
        self.slot_lm = (uniq // self.num_free_poses).astype(np.int64)
        self.cross_rows = (uniq % self.num_free_poses).astype(np.int64)
        counts = np.bincount(self.slot_lm, minlength=self.num_landmarks)
        self.lm_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

        self.pp_idx = self.pp_idx.astype(np.int64)
        self.ll_idx = self.ll_idx.astype(np.int64)
        self.pl_pose = self.pl_pose.astype(np.int64)
        self.pl_lm = self.pl_lm.astype(np.int64)

    @property
    def num_candidates(self) -> int:
        return len(self.candidate_infos)

    @property
    def pose_dim(self) -> int:
        return 6 * self.num_free_poses

    @property
    def dim(self) -> int:
        return self.pose_dim + 3 * self.num_landmarks

    def pose_offset(self, pose_index: int) -> int:
        """Row offset of a (non-anchored) pose in the reduced state."""
        if pose_index == self.anchored_pose:
            raise ValueError("anchored pose has no rows in the reduced state")
        return 6 * (pose_index - 1)

    def landmark_offset(self, landmark_index: int) -> int:
        return self.pose_dim + 3 * landmark_index


@dataclass
class AssembledInfo:
    """Weighted block sum sum_k w_k I_k in the shared sparsity pattern."""

    assembly: InfoAssembly
    pose_diag: np.ndarray  # (P-1, 6, 6)
    lm_diag: np.ndarray  # (L, 3, 3)
    cross: np.ndarray  # (nnz, 6, 3) on the union slots

    def to_dense(self) -> np.ndarray:
        a = self.assembly
        D = a.dim
        out = np.zeros((D, D))
        for i in range(a.num_free_poses):
            out[6 * i:6 * i + 6, 6 * i:6 * i + 6] = self.pose_diag[i]
        off = a.pose_dim
        for j in range(a.num_landmarks):
            out[off + 3 * j:off + 3 * j + 3, off + 3 * j:off + 3 * j + 3] = self.lm_diag[j]
        for e in range(len(self.cross)):
            i, j = a.cross_rows[e], a.slot_lm[e]
            out[6 * i:6 * i + 6, off + 3 * j:off + 3 * j + 3] = self.cross[e]
            out[off + 3 * j:off + 3 * j + 3, 6 * i:6 * i + 6] = self.cross[e].T
        return out


@dataclass
class SchurResult:
    """Schur complement over landmarks plus its smallest eigenpair.

    ``ainv`` holds the (pseudo)inverted retained landmark blocks so callers
    can reuse the factorization (supergradient back-substitution) without
    refactorizing; ``info`` is the assembled matrix the complement was taken
    of.
    """

    S: np.ndarray  # (6(P-1), 6(P-1))
    lambda1: float
    eigvec: np.ndarray | None  # (6(P-1),) unit norm; None for value-only solves
    retained: np.ndarray  # (L,) bool
    ainv: np.ndarray  # (L, 3, 3); zero blocks for dropped landmarks
    info: "AssembledInfo"

    @property
    def retained_landmarks(self) -> np.ndarray:
        return np.flatnonzero(self.retained)


def build_candidate_infos(scenario: Scenario) -> InfoAssembly:
    """Accumulate J^T J / sigma^2 at the noiseless linearization point into
    per-candidate block-sparse information matrices (pose 0 anchored)."""
    arr = scenario.layout_arrays()
    if len(arr["pose_idx"]) == 0:
        raise ValueError("scenario layout is empty")
    P = scenario.num_poses
    L = scenario.num_landmarks
    N = scenario.num_candidates

    poses = scenario.trajectory.poses
    R_b = np.stack([poses[i].rotation for i in arr["pose_idx"]])
    t_b = np.stack([poses[i].translation for i in arr["pose_idx"]])
    cands = scenario.candidates
    R_e = np.stack([cands[k].extrinsic.rotation for k in arr["candidate_id"]])
    t_e = np.stack([cands[k].extrinsic.translation for k in arr["candidate_id"]])
    lms = np.stack([scenario.landmarks[j].position for j in arr["landmark_idx"]])
    focal = np.array([cands[k].intrinsics.focal_px for k in arr["candidate_id"]])

    J_pose, J_lm = projection_jacobians_batch(R_b, t_b, R_e, t_e, lms, focal)
    w = 1.0 / arr["sigma"] ** 2

    Hpp = np.einsum("mia,mib->mab", J_pose, J_pose) * w[:, None, None]
    Hpl = np.einsum("mia,mib->mab", J_pose, J_lm) * w[:, None, None]
    Hll = np.einsum("mia,mib->mab", J_lm, J_lm) * w[:, None, None]

    cand = arr["candidate_id"]
    pose = arr["pose_idx"]
    lm = arr["landmark_idx"]
    free = pose > 0  # measurements at the anchored pose keep only their landmark block

    def accumulate(keys, blocks, mask):
        """Sum blocks sharing a key; returns (sorted unique keys, sums)."""
        keys = keys[mask]
        if len(keys) == 0:
            return keys, blocks[:0]
        uniq, inv = np.unique(keys, return_inverse=True)
        out = np.zeros((len(uniq),) + blocks.shape[1:])
        np.add.at(out, inv, blocks[mask])
        return uniq, out

    all_mask = np.ones(len(cand), dtype=bool)
    pp_key, pp_sum = accumulate(cand * P + (pose - 1), Hpp, free)
    ll_key, ll_sum = accumulate(cand * L + lm, Hll, all_mask)
    pl_key, pl_sum = accumulate((cand * P + (pose - 1)) * L + lm, Hpl, free)

    counts = np.bincount(cand, minlength=N)
    infos = []
    empty = dict(
        pose_idx=np.zeros(0, dtype=np.int64), pose_blocks=np.zeros((0, 6, 6)),
        lm_idx=np.zeros(0, dtype=np.int64), lm_blocks=np.zeros((0, 3, 3)),
        cross_pose=np.zeros(0, dtype=np.int64), cross_lm=np.zeros(0, dtype=np.int64),
        cross_blocks=np.zeros((0, 6, 3)),
    )
    for k in range(N):
        fields = dict(empty)
        sel = (pp_key // P) == k
        fields["pose_idx"] = (pp_key[sel] % P).astype(np.int64)
        fields["pose_blocks"] = pp_sum[sel]
        sel = (ll_key // L) == k
        fields["lm_idx"] = (ll_key[sel] % L).astype(np.int64)
        fields["lm_blocks"] = ll_sum[sel]
        sel = (pl_key // (P * L)) == k
        fields["cross_pose"] = ((pl_key[sel] // L) % P).astype(np.int64)
        fields["cross_lm"] = (pl_key[sel] % L).astype(np.int64)
        fields["cross_blocks"] = pl_sum[sel]
        infos.append(CandidateInfo(candidate_id=k, measurement_count=int(counts[k]), **fields))

    return InfoAssembly(num_free_poses=P - 1, num_landmarks=L, candidate_infos=infos)


def assemble(assembly: InfoAssembly, weights: np.ndarray) -> AssembledInfo:
    """sum_k w_k I_k, linear in the weights."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (assembly.num_candidates,):
        raise ValueError(
            f"weight vector has shape {w.shape}, expected ({assembly.num_candidates},)"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    act = np.flatnonzero(w != 0.0).astype(np.int64)
    act_w = w[act]
    pose_diag = np.zeros((assembly.num_free_poses, 6, 6))
    lm_diag = np.zeros((assembly.num_landmarks, 3, 3))
    cross = np.zeros((len(assembly.cross_rows), 6, 3))
    accel.weighted_block_sum(pose_diag, act, act_w, assembly.pp_ptr,
                             assembly.pp_idx, assembly.pp_blocks)
    accel.weighted_block_sum(lm_diag, act, act_w, assembly.ll_ptr,
                             assembly.ll_idx, assembly.ll_blocks)
    accel.weighted_block_sum(cross, act, act_w, assembly.pl_ptr,
                             assembly.pl_slot, assembly.pl_blocks)
    return AssembledInfo(assembly, pose_diag, lm_diag, cross)


def _smallest_eigpair(S: np.ndarray) -> tuple[float, np.ndarray]:
    if S.shape[0] <= DENSE_EIG_MAX_DIM:
        vals, vecs = scipy.linalg.eigh(S, subset_by_index=[0, 0])
        return float(vals[0]), vecs[:, 0]
    vals, vecs = scipy.sparse.linalg.eigsh(S, k=1, which="SA")
    return float(vals[0]), vecs[:, 0]


def schur_complement(
    info: AssembledInfo, tol_obs: float = DEFAULT_TOL_OBS, compute_eigvec: bool = True
) -> SchurResult:
    """Generalized Schur complement of the assembled matrix over landmarks.

    Landmark blocks whose largest eigenvalue is below ``tol_obs`` are dropped
    (they contribute nothing); retained blocks are inverted by a symmetric
    eigendecomposition pseudoinverse, which handles the rank-2 blocks of
    landmarks observed by a single measurement exactly. Pass
    ``compute_eigvec=False`` to skip the eigenvector (value-only callers).
    """
    a = info.assembly
    L = a.num_landmarks
    ald = info.lm_diag
    if not np.all(np.isfinite(ald)):
        bad = int(np.flatnonzero(~np.isfinite(ald).all(axis=(1, 2)))[0])
        raise SchurFactorizationError(bad, "non-finite landmark block")

    ainv = np.zeros((L, 3, 3))
    if L > 0:
        try:
            eigvals, eigvecs = np.linalg.eigh(ald)
        except np.linalg.LinAlgError as err:
            for j in range(L):
                try:
                    np.linalg.eigh(ald[j])
                except np.linalg.LinAlgError:
                    raise SchurFactorizationError(j, str(err)) from err
            raise
        wmax = eigvals[:, -1]
        retained = wmax >= tol_obs
        # Eigencomponents below tol_obs carry no usable information; zeroing
        # them realizes the block pseudoinverse.
        inv_w = np.where(eigvals >= tol_obs, 1.0 / np.where(eigvals > 0, eigvals, 1.0), 0.0)
        inv_w[~retained] = 0.0
        ainv = np.einsum("jab,jb,jcb->jac", eigvecs, inv_w, eigvecs)
    else:
        retained = np.zeros(0, dtype=bool)

    n = a.num_free_poses
    S = np.zeros((6 * n, 6 * n))
    view = S.reshape(n, 6, n, 6)
    view[np.arange(n), :, np.arange(n), :] = info.pose_diag
    accel.schur_reduce(S, ainv, info.cross, a.lm_ptr, a.cross_rows, retained)
    S = 0.5 * (S + S.T)
    if not np.all(np.isfinite(S)):
        raise SchurFactorizationError(-1, "non-finite Schur complement")

    if compute_eigvec:
        lam, vec = _smallest_eigpair(S)
    else:
        lam = float(np.linalg.eigvalsh(S)[0]) if S.shape[0] <= DENSE_EIG_MAX_DIM \
            else _smallest_eigpair(S)[0]
        vec = None
    return SchurResult(S=S, lambda1=lam, eigvec=vec, retained=retained, ainv=ainv, info=info)


# ---------------------------------------------------------------------------
# binary dump of the candidate information matrices
# ---------------------------------------------------------------------------

def save_candidate_infos(assembly: InfoAssembly, path: str | Path, scenario_hash: str) -> None:
    np.savez_compressed(
        Path(path),
        scenario_hash=np.array(scenario_hash),
        dims=np.array([assembly.num_free_poses, assembly.num_landmarks,
                       assembly.num_candidates], dtype=np.int64),
        meas_counts=np.array([c.measurement_count for c in assembly.candidate_infos],
                             dtype=np.int64),
        pp_ptr=assembly.pp_ptr, pp_idx=assembly.pp_idx, pp_blocks=assembly.pp_blocks,
        ll_ptr=assembly.ll_ptr, ll_idx=assembly.ll_idx, ll_blocks=assembly.ll_blocks,
        pl_ptr=assembly.pl_ptr, pl_pose=assembly.pl_pose, pl_lm=assembly.pl_lm,
        pl_blocks=assembly.pl_blocks,
    )


def load_candidate_infos(path: str | Path, expected_hash: str | None = None) -> InfoAssembly:
    with np.load(Path(path)) as z:
        stored = str(z["scenario_hash"])
        if expected_hash is not None and stored != expected_hash:
            raise ValueError(f"dump keyed by scenario {stored}, expected {expected_hash}")
        n_free, n_lm, n_cand = z["dims"]
        infos = []
        for k in range(n_cand):
            s0, e0 = z["pp_ptr"][k], z["pp_ptr"][k + 1]
            s1, e1 = z["ll_ptr"][k], z["ll_ptr"][k + 1]
            s2, e2 = z["pl_ptr"][k], z["pl_ptr"][k + 1]
            infos.append(CandidateInfo(
                candidate_id=k,
                pose_idx=z["pp_idx"][s0:e0], pose_blocks=z["pp_blocks"][s0:e0],
                lm_idx=z["ll_idx"][s1:e1], lm_blocks=z["ll_blocks"][s1:e1],
                cross_pose=z["pl_pose"][s2:e2], cross_lm=z["pl_lm"][s2:e2],
                cross_blocks=z["pl_blocks"][s2:e2],
                measurement_count=int(z["meas_counts"][k]),
            ))
    return InfoAssembly(num_free_poses=int(n_free), num_landmarks=int(n_lm),
                        candidate_infos=infos)
