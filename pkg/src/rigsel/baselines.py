"""Benchmark selectors: uniform random, even spatial coverage, and the
hand-declared manual presets."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np
import yaml

from .objective import SelectionVector
from .scenario import CandidateMount


def random_select(N: int, K: int, seed) -> SelectionVector:
    """Uniform K-subset of the candidate pool."""
    if K > N:
        raise ValueError("K exceeds the candidate pool size")
    rng = np.random.default_rng(seed)
    ids = rng.choice(N, size=K, replace=False)
    return SelectionVector.from_ids(ids.tolist(), N)


def _pairwise_metric(candidates: list[CandidateMount],
                     translation_weight: float, rotation_weight: float) -> np.ndarray:
    pos = np.stack([c.extrinsic.translation for c in candidates])
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    scale = dist.max()
    if scale <= 0:
        scale = 1.0
    R = np.stack([c.extrinsic.rotation for c in candidates]).reshape(len(candidates), 9)
    cos_angle = np.clip(0.5 * (R @ R.T - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_angle)
    return translation_weight * dist / scale + rotation_weight * angle / np.pi


def even_select(
    candidates: list[CandidateMount],
    K: int,
    translation_weight: float = 1.0,
    rotation_weight: float = 1.0,
) -> SelectionVector:
    """Greedy farthest-point selection under a mixed translation/viewing-
    direction metric, seeded from the candidate nearest the front-center of
    the frame. Deterministic; ties go to the lowest id."""
    N = len(candidates)
    if K > N:
        raise ValueError("K exceeds the candidate pool size")
    D = _pairwise_metric(candidates, translation_weight, rotation_weight)
    pos = np.stack([c.extrinsic.translation for c in candidates])
    front_center = np.array([pos[:, 0].max(), 0.0, np.mean(pos[:, 2])])
    # quantize so that sub-ulp ties resolve to the lowest id
    seed_dist = np.round(np.linalg.norm(pos - front_center, axis=1), 9)
    chosen = [int(np.argmin(seed_dist))]
    while len(chosen) < K:
        min_d = np.round(D[:, chosen].min(axis=1), 9)
        min_d[chosen] = -np.inf
        chosen.append(int(np.argmax(min_d)))
    return SelectionVector.from_ids(chosen, N)


@lru_cache(maxsize=1)
def _manual_presets() -> dict:
    text = resources.files("rigsel").joinpath("data", "manual_presets.yaml").read_text()
    return yaml.safe_load(text)


def manual_select(candidates: list[CandidateMount], K: int, layout_name: str) -> SelectionVector:
    """Look up the shipped preset for (layout, K); ids are validated against
    the candidate pool at load time."""
    presets = _manual_presets()
    if layout_name not in presets:
        raise KeyError(f"no manual presets for layout {layout_name!r}")
    by_k = presets[layout_name]
    if K not in by_k:
        raise KeyError(f"no manual preset for layout {layout_name!r} with K={K}")
    ids = by_k[K]
    N = len(candidates)
    if any(i < 0 or i >= N for i in ids):
        raise ValueError(f"preset ids {ids} fall outside the {N}-candidate pool")
    if len(set(ids)) != K:
        raise ValueError(f"preset for K={K} does not contain {K} distinct ids")
    return SelectionVector.from_ids(ids, N)
