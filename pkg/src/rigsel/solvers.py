"""Greedy selection, Frank-Wolfe on the box relaxation, K-max rounding, an
exhaustive oracle, and the post-hoc suboptimality certificate.

The certificate chain: for any feasible binary selection s,
f(s) <= f* <= mu* <= mu_hat, where mu* is the relaxation optimum and mu_hat
is the computable Frank-Wolfe bound f(w_t) + g_t^T(v_t - w_t). The reported
relative gap (mu_hat - f(s_g)) / f(s_g) therefore never understates the true
suboptimality of the greedy selection s_g.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .fisher import DEFAULT_TOL_OBS, InfoAssembly
from .objective import RelaxedWeights, SelectionVector, eval_f, value_and_supergradient

EXHAUSTIVE_GUARD = 1_000_000


@dataclass(frozen=True)
class Certificate:
    """Post-hoc optimality certificate for a greedy selection."""

    greedy_value: float
    upper_bound: float  # certified bound mu_hat >= mu* >= f*
    relative_gap: float  # (upper_bound - greedy_value) / greedy_value
    fw_iterations: int
    fw_gap: float
    rounded_value: float
    gap_defined: bool = True  # False when greedy_value == 0


@dataclass
class FwDiagnostics:
    iterations: int = 0
    final_gap: float = float("inf")
    converged: bool = False
    value_trace: list[float] = field(default_factory=list)
    bound_trace: list[float] = field(default_factory=list)


def greedy_select(
    assembly: InfoAssembly,
    K: int,
    tol_obs: float = DEFAULT_TOL_OBS,
    return_trace: bool = False,
    timer: list | None = None,
):
    """K rounds of marginal-gain maximization; ties go to the lowest id.

    Every remaining candidate is re-evaluated each round (the objective is
    not submodular, so lazy pruning would be unsound). ``timer``, when given,
    collects per-round wall times.
    """
    N = assembly.num_candidates
    if not 1 <= K <= N:
        raise ValueError(f"K must be in [1, {N}]")
    s = np.zeros(N, dtype=np.int8)
    trace: list[float] = []
    for _round in range(K):
        t0 = time.perf_counter()
        best_val, best_x = -np.inf, -1
        for x in range(N):
            if s[x]:
                continue
            s[x] = 1
            val = eval_f(assembly, s, tol_obs)
            s[x] = 0
            if val > best_val:
                best_val, best_x = val, x
        s[best_x] = 1
        trace.append(best_val)
        if timer is not None:
            timer.append(time.perf_counter() - t0)
    selection = SelectionVector(s, K)
    if return_trace:
        return selection, trace
    return selection


def fw_lmo(g: np.ndarray, K: int) -> SelectionVector:
    """Exact maximizer of g^T w over {w in [0,1]^N : sum w = K}: the
    indicator of the K largest entries (ties to the lowest id)."""
    g = np.asarray(g, dtype=np.float64)
    if K > len(g):
        raise ValueError("K exceeds the number of candidates")
    order = np.argsort(-g, kind="stable")
    s = np.zeros(len(g), dtype=np.int8)
    s[order[:K]] = 1
    return SelectionVector(s, K)


def frank_wolfe(
    assembly: InfoAssembly,
    K: int,
    w0: np.ndarray | RelaxedWeights | None = None,
    gap_tol: float = 1e-4,
    max_iter: int = 500,
    tol_obs: float = DEFAULT_TOL_OBS,
    ls_shrink: float = 0.5,
    ls_slope: float = 1e-4,
    ls_max_steps: int = 20,
) -> tuple[RelaxedWeights, float, FwDiagnostics]:
    """Maximize f over the box relaxation; returns a certified upper bound.

    Steps use backtracking line search on f with a 2/(t+2) fallback. The
    bound mu_hat is the best (smallest) per-iteration value of
    f(w) + g^T(v - w); each such value dominates the relaxation optimum, so
    the bound is valid whether or not the gap tolerance was reached.
    """
    N = assembly.num_candidates
    if not 1 <= K <= N:
        raise ValueError(f"K must be in [1, {N}]")
    if w0 is None:
        w = np.full(N, K / N)
    else:
        w = np.asarray(w0.w if isinstance(w0, RelaxedWeights) else w0, dtype=np.float64).copy()
        RelaxedWeights(w, K)  # feasibility check
    diag = FwDiagnostics()
    upper = np.inf
    gap = np.inf
    for t in range(max_iter):
        f_w, g = value_and_supergradient(assembly, w, tol_obs)
        if not np.isfinite(f_w) or not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite objective or gradient in Frank-Wolfe")
        v = fw_lmo(g, K).as_weights()
        d = v - w
        gap = max(float(g @ d), 0.0)
        upper = min(upper, f_w + gap)
        diag.iterations = t + 1
        diag.final_gap = gap
        diag.value_trace.append(f_w)
        diag.bound_trace.append(upper)
        if gap <= gap_tol * max(1.0, f_w):
            diag.converged = True
            break
        gamma, accepted = 1.0, False
        for _ in range(ls_max_steps):
            if eval_f(assembly, np.clip(w + gamma * d, 0.0, 1.0), tol_obs) \
                    >= f_w + ls_slope * gamma * gap:
                accepted = True
                break
            gamma *= ls_shrink
        if not accepted:
            gamma = 2.0 / (t + 2.0)
        w = np.clip(w + gamma * d, 0.0, 1.0)
    return RelaxedWeights(w, K), float(upper), diag


def kmax_round(w, K: int) -> SelectionVector:
    """Project relaxed weights to the feasible binary set by keeping the K
    largest entries (idempotent on binary vectors)."""
    arr = np.asarray(w.w if isinstance(w, RelaxedWeights) else w, dtype=np.float64)
    return fw_lmo(arr, K)


def exhaustive(
    assembly: InfoAssembly, K: int, tol_obs: float = DEFAULT_TOL_OBS
) -> tuple[SelectionVector, float]:
    """Brute-force optimum over all K-subsets; guarded against blowup."""
    N = assembly.num_candidates
    if not 1 <= K <= N:
        raise ValueError(f"K must be in [1, {N}]")
    n_subsets = math.comb(N, K)
    if n_subsets > EXHAUSTIVE_GUARD:
        raise ValueError(f"C({N},{K}) = {n_subsets} exceeds the exhaustive guard")
    best_val, best_ids = -np.inf, None
    s = np.zeros(N, dtype=np.int8)
    for ids in combinations(range(N), K):
        s[:] = 0
        s[list(ids)] = 1
        val = eval_f(assembly, s, tol_obs)
        if val > best_val:
            best_val, best_ids = val, ids
    return SelectionVector.from_ids(best_ids, N), float(best_val)


def certify(
    greedy_value: float,
    fw_result: tuple[RelaxedWeights, float, FwDiagnostics],
    rounded_value: float,
) -> Certificate:
    """Assemble the certificate; the relative gap is the headline number."""
    _, upper, diag = fw_result
    if greedy_value > 0.0:
        gap = (upper - greedy_value) / greedy_value
        defined = True
    else:
        gap = float("inf")
        defined = False
    return Certificate(
        greedy_value=float(greedy_value),
        upper_bound=float(upper),
        relative_gap=float(gap),
        fw_iterations=diag.iterations,
        fw_gap=diag.final_gap,
        rounded_value=float(rounded_value),
        gap_defined=defined,
    )


@dataclass
class CertifiedDesign:
    """Greedy selection together with its relaxation-certified gap."""

    selection: SelectionVector
    certificate: Certificate
    relaxed: RelaxedWeights
    rounded: SelectionVector
    greedy_trace: list[float]


def select_and_certify(
    assembly: InfoAssembly,
    K: int,
    gap_tol: float = 1e-4,
    max_iter: int = 500,
    tol_obs: float = DEFAULT_TOL_OBS,
    ls_shrink: float = 0.5,
    ls_slope: float = 1e-4,
    ls_max_steps: int = 20,
) -> CertifiedDesign:
    """Full pipeline: greedy selection, relaxation bound, rounding, certificate."""
    selection, trace = greedy_select(assembly, K, tol_obs, return_trace=True)
    fw = frank_wolfe(assembly, K, gap_tol=gap_tol, max_iter=max_iter, tol_obs=tol_obs,
                     ls_shrink=ls_shrink, ls_slope=ls_slope, ls_max_steps=ls_max_steps)
    rounded = kmax_round(fw[0], K)
    rounded_value = eval_f(assembly, rounded, tol_obs)
    cert = certify(trace[-1], fw, rounded_value)
    return CertifiedDesign(selection, cert, fw[0], rounded, trace)
