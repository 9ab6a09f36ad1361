"""Hot numeric kernels: numba @njit with a pure-numpy fallback.

The greedy and Frank-Wolfe solvers evaluate the information objective
hundreds of times per run; each evaluation is a weighted block sum followed
by a Schur reduction over landmark blocks. Those inner loops live here.

Path selection: numba is used when importable unless the environment
variable ``RIGSEL_NUMBA`` is set to ``0``/``false``/``no``. Both paths are
exposed explicitly (``*_numpy`` / ``*_numba``) for tests and for
``benchmarks/bench_accel.py``.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_enabled() -> bool:
    flag = os.environ.get("RIGSEL_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_enabled()


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def weighted_block_sum_numpy(out, act_ids, act_w, ptr, idx, blocks):
    """out[idx[e]] += w_k * blocks[e] over the entries of each active candidate."""
    for k, w in zip(act_ids, act_w):
        lo, hi = ptr[k], ptr[k + 1]
        if lo == hi:
            continue
        np.add.at(out, idx[lo:hi], w * blocks[lo:hi])
    return out


def schur_reduce_numpy(S, ainv, cross, lm_ptr, cross_rows, retained):
    """S -= sum_j B_j ainv_j B_j^T over retained landmarks j.

    ``cross`` holds the assembled pose-landmark 6x3 blocks grouped by
    landmark (CSC-style via ``lm_ptr``); ``cross_rows`` gives each block's
    pose index. ``S`` arrives with the pose-pose part already in place.
    """
    n_pose = S.shape[0] // 6
    n_lm = len(lm_ptr) - 1
    # Dense (6P, L, 3) view of the pose-landmark coupling.
    dense = np.zeros((n_pose, 6, n_lm, 3))
    slot_lm = np.repeat(np.arange(n_lm), np.diff(lm_ptr))
    keep = retained[slot_lm]
    dense[cross_rows[keep], :, slot_lm[keep], :] = cross[keep]
    X = dense.reshape(6 * n_pose, n_lm, 3)
    Y = np.einsum("pjc,jcd->pjd", X, ainv)
    S -= np.einsum("pjd,qjd->pq", Y, X)
    return S


def quadratic_forms_numpy(
    n_cands,
    v6,
    ulm,
    pp_cand, pp_idx, pp_blocks,
    ll_cand, ll_idx, ll_blocks,
    pl_cand, pl_pose, pl_lm, pl_blocks,
):
    """Per-candidate quadratic form u^T I_k u for u = [v6; ulm]."""
    g = np.zeros(n_cands)
    if len(pp_cand):
        vi = v6[pp_idx]
        g += np.bincount(pp_cand, weights=np.einsum("ea,eab,eb->e", vi, pp_blocks, vi),
                         minlength=n_cands)
    if len(ll_cand):
        uj = ulm[ll_idx]
        g += np.bincount(ll_cand, weights=np.einsum("ea,eab,eb->e", uj, ll_blocks, uj),
                         minlength=n_cands)
    if len(pl_cand):
        vals = 2.0 * np.einsum("ea,eab,eb->e", v6[pl_pose], pl_blocks, ulm[pl_lm])
        g += np.bincount(pl_cand, weights=vals, minlength=n_cands)
    return g


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _weighted_block_sum_numba(out, act_ids, act_w, ptr, idx, blocks):
        r, c = blocks.shape[1], blocks.shape[2]
        for a in range(len(act_ids)):
            k = act_ids[a]
            w = act_w[a]
            for e in range(ptr[k], ptr[k + 1]):
                tgt = idx[e]
                for i in range(r):
                    for j in range(c):
                        out[tgt, i, j] += w * blocks[e, i, j]
        return out

    @njit(cache=True)
    def _schur_reduce_numba(S, ainv, cross, lm_ptr, cross_rows, retained):
        n_lm = len(lm_ptr) - 1
        T = np.empty((6, 3))
        blk = np.empty((6, 6))
        for j in range(n_lm):
            if not retained[j]:
                continue
            a = ainv[j]
            for e1 in range(lm_ptr[j], lm_ptr[j + 1]):
                i1 = cross_rows[e1]
                B1 = cross[e1]
                for r in range(6):
                    for c in range(3):
                        acc = 0.0
                        for m in range(3):
                            acc += B1[r, m] * a[m, c]
                        T[r, c] = acc
                for e2 in range(e1, lm_ptr[j + 1]):
                    i2 = cross_rows[e2]
                    B2 = cross[e2]
                    for r in range(6):
                        for c in range(6):
                            acc = 0.0
                            for m in range(3):
                                acc += T[r, m] * B2[c, m]
                            blk[r, c] = acc
                    r0, c0 = 6 * i1, 6 * i2
                    for r in range(6):
                        for c in range(6):
                            S[r0 + r, c0 + c] -= blk[r, c]
                    if e2 != e1:
                        for r in range(6):
                            for c in range(6):
                                S[c0 + c, r0 + r] -= blk[r, c]
        return S

    @njit(cache=True)
    def _quadratic_forms_numba(
        n_cands,
        v6,
        ulm,
        pp_cand, pp_idx, pp_blocks,
        ll_cand, ll_idx, ll_blocks,
        pl_cand, pl_pose, pl_lm, pl_blocks,
    ):
        g = np.zeros(n_cands)
        for e in range(len(pp_cand)):
            vi = v6[pp_idx[e]]
            B = pp_blocks[e]
            acc = 0.0
            for i in range(6):
                for j in range(6):
                    acc += vi[i] * B[i, j] * vi[j]
            g[pp_cand[e]] += acc
        for e in range(len(ll_cand)):
            uj = ulm[ll_idx[e]]
            B = ll_blocks[e]
            acc = 0.0
            for i in range(3):
                for j in range(3):
                    acc += uj[i] * B[i, j] * uj[j]
            g[ll_cand[e]] += acc
        for e in range(len(pl_cand)):
            vi = v6[pl_pose[e]]
            uj = ulm[pl_lm[e]]
            B = pl_blocks[e]
            acc = 0.0
            for i in range(6):
                for j in range(3):
                    acc += vi[i] * B[i, j] * uj[j]
            g[pl_cand[e]] += 2.0 * acc
        return g

    weighted_block_sum_numba = _weighted_block_sum_numba
    schur_reduce_numba = _schur_reduce_numba
    quadratic_forms_numba = _quadratic_forms_numba
else:
    weighted_block_sum_numba = None
    schur_reduce_numba = None
    quadratic_forms_numba = None


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def weighted_block_sum(out, act_ids, act_w, ptr, idx, blocks):
    if USE_NUMBA:
        return weighted_block_sum_numba(out, act_ids, act_w, ptr, idx, blocks)
    return weighted_block_sum_numpy(out, act_ids, act_w, ptr, idx, blocks)


def schur_reduce(S, ainv, cross, lm_ptr, cross_rows, retained):
    if USE_NUMBA:
        return schur_reduce_numba(S, ainv, cross, lm_ptr, cross_rows, retained)
    return schur_reduce_numpy(S, ainv, cross, lm_ptr, cross_rows, retained)


def quadratic_forms(n_cands, v6, ulm, pp, ll, pl):
    """Dispatching wrapper; pp/ll/pl are (cand, idx..., blocks) tuples."""
    if USE_NUMBA:
        return quadratic_forms_numba(n_cands, v6, ulm, *pp, *ll, *pl)
    return quadratic_forms_numpy(n_cands, v6, ulm, *pp, *ll, *pl)
