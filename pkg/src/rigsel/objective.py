"""The design objective f(w) = lambda_min(Schur(I(w))) and its supergradient.

f is concave, normalized (f(0) = 0), and nondecreasing in the weights, which
is what makes the relaxation-based certificates in `solvers` valid. The
supergradient at w is g_k = u^T I_k u where u extends the smallest
eigenvector v of the Schur complement back to the full state:
u = [v; -A^+ I_lp v] with A the retained landmark block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .fisher import DEFAULT_TOL_OBS, InfoAssembly, SchurResult, assemble, schur_complement

BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class SelectionVector:
    """Binary selection with exactly `budget` ones."""

    s: np.ndarray
    budget: int

    def __post_init__(self):
        s = np.asarray(self.s)
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("selection entries must be 0 or 1")
        s = s.astype(np.int8)
        if int(s.sum()) != self.budget:
            raise ValueError(f"selection has {int(s.sum())} ones, budget is {self.budget}")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @staticmethod
    def from_ids(ids, n: int) -> "SelectionVector":
        ids = list(ids)
        s = np.zeros(n, dtype=np.int8)
        s[ids] = 1
        return SelectionVector(s, len(set(ids)))

    def ids(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.s)]

    def as_weights(self) -> np.ndarray:
        return self.s.astype(np.float64)


@dataclass(frozen=True)
class RelaxedWeights:
    """Box-relaxed selection: entries in [0,1] summing to the budget."""

    w: np.ndarray
    budget: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.min() < -BUDGET_TOL or w.max() > 1.0 + BUDGET_TOL:
            raise ValueError("relaxed weights must lie in [0, 1]")
        if abs(w.sum() - self.budget) > max(BUDGET_TOL, 1e-12 * len(w)) * 10:
            raise ValueError(f"weights sum to {w.sum():.12f}, budget is {self.budget}")
        w = np.clip(w, 0.0, 1.0)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def as_weight_array(weights) -> np.ndarray:
    """Accept SelectionVector, RelaxedWeights, or a plain array of weights."""
    if isinstance(weights, SelectionVector):
        return weights.as_weights()
    if isinstance(weights, RelaxedWeights):
        return np.asarray(weights.w, dtype=np.float64)
    return np.asarray(weights, dtype=np.float64)


def eval_with_schur(
    assembly: InfoAssembly, weights, tol_obs: float = DEFAULT_TOL_OBS,
    compute_eigvec: bool = True,
) -> tuple[float, SchurResult]:
    res = schur_complement(assemble(assembly, as_weight_array(weights)), tol_obs,
                           compute_eigvec=compute_eigvec)
    return max(res.lambda1, 0.0), res


def eval_f(assembly: InfoAssembly, weights, tol_obs: float = DEFAULT_TOL_OBS) -> float:
    """Objective value; accepts binary selections as a special case."""
    value, _ = eval_with_schur(assembly, weights, tol_obs, compute_eigvec=False)
    return value


def value_and_supergradient(
    assembly: InfoAssembly, weights, tol_obs: float = DEFAULT_TOL_OBS
) -> tuple[float, np.ndarray]:
    """One Schur solve serving both the value and the supergradient.

    The landmark segment of u reuses the factorization from the Schur step;
    dropped landmarks contribute zero coordinates.
    """
    value, res = eval_with_schur(assembly, weights, tol_obs)
    a = assembly
    v6 = res.eigvec.reshape(a.num_free_poses, 6)

    t = np.zeros((a.num_landmarks, 3))
    if len(a.cross_rows):
        contrib = np.einsum("eab,ea->eb", res.info.cross, v6[a.cross_rows])
        np.add.at(t, a.slot_lm, contrib)
    u_lm = -np.einsum("jab,jb->ja", res.ainv, t)

    g = accel.quadratic_forms(
        a.num_candidates,
        v6,
        u_lm,
        (a.pp_cand, a.pp_idx, a.pp_blocks),
        (a.ll_cand, a.ll_idx, a.ll_blocks),
        (a.pl_cand, a.pl_pose, a.pl_lm, a.pl_blocks),
    )
    return value, g


def supergradient(assembly: InfoAssembly, weights, tol_obs: float = DEFAULT_TOL_OBS) -> np.ndarray:
    _, g = value_and_supergradient(assembly, weights, tol_obs)
    return g


def concavity_probe(assembly: InfoAssembly, w, v, theta: float,
                    tol_obs: float = DEFAULT_TOL_OBS) -> float:
    """f(theta*w + (1-theta)*v) - theta*f(w) - (1-theta)*f(v); concavity of f
    makes this nonnegative up to solver noise."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    ww = as_weight_array(w)
    vv = as_weight_array(v)
    mixed = eval_f(assembly, theta * ww + (1.0 - theta) * vv, tol_obs)
    return mixed - theta * eval_f(assembly, ww, tol_obs) - (1.0 - theta) * eval_f(assembly, vv, tol_obs)
