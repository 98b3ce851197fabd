"""Unsupervised segmentation: K-means and Fuzzy C-means on voxel intensities.

Clustering runs on the distinct intensity values (weighted by their voxel
counts) rather than on every voxel; for scalar features this is exactly
equivalent to clustering the voxels and makes full-volume runs cheap. It
also makes results independent of masked voxels by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleClusterCountError, ParameterError
from .volume import LabelVolume, VoxelVolume

_DISTANCES = ("sq_euclidean", "manhattan", "chebyshev")

# CLI/paper aliases for the distance menu. "link" is a network-layer
# distance with no meaning for scalar pixel values and is rejected.
DISTANCE_ALIASES = {
    "sqeuclidean": "sq_euclidean",
    "sq_euclidean": "sq_euclidean",
    "cityblock": "manhattan",
    "mandist": "manhattan",
    "manhattan": "manhattan",
    "box": "chebyshev",
    "chebyshev": "chebyshev",
}


def resolve_distance(name: str) -> str:
    key = name.lower()
    if key == "link":
        raise ParameterError(
            "link distance is defined for network layers, not scalar pixel values; "
            "use sq_euclidean, manhattan, or chebyshev"
        )
    if key not in DISTANCE_ALIASES:
        raise ParameterError(f"unknown distance {name!r}; expected one of {_DISTANCES}")
    return DISTANCE_ALIASES[key]


@dataclass(frozen=True)
class KmeansConfig:
    k: int
    distance: str = "sq_euclidean"
    restarts: int = 5
    centers: tuple[float, ...] | None = None  # provided-centers init; forces a single run
    max_iters: int = 100
    tol: float = 0.5
    mask_threshold: float = 0.0
    seed: int = 42

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ParameterError(f"restarts must be >= 1, got {self.restarts}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        object.__setattr__(self, "distance", resolve_distance(self.distance))
        if self.centers is not None:
            if len(self.centers) != self.k:
                raise ParameterError(
                    f"provided centers must have length k={self.k}, got {len(self.centers)}"
                )
            object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))


@dataclass(frozen=True)
class FcmConfig:
    c: int
    m: float = 2.0
    max_iters: int = 100
    tol: float = 1e-8  # relative change of the objective
    mask_threshold: float = 0.0
    seed: int = 42

    def __post_init__(self):
        if self.c < 1:
            raise ParameterError(f"c must be >= 1, got {self.c}")
        if not (1.0 < self.m <= 2.0):
            raise ParameterError(f"membership exponent m must lie in (1, 2], got {self.m}")


@dataclass(frozen=True)
class ClusterResult:
    """labels: 0 = masked, 1..k ordered by ascending center intensity."""

    labels: LabelVolume
    centers: np.ndarray
    objective: float
    iterations_used: int
    memberships: np.ndarray | None = None  # FCM only, shape (c, nz, ny, nx)


def _as_array(vol) -> tuple[np.ndarray, float]:
    if isinstance(vol, VoxelVolume):
        return vol.data, vol.voxel_size
    arr = np.asarray(vol)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ParameterError(f"expected a volume or a single slice, got ndim={arr.ndim}")
    return arr, 1.0


def _unique_unmasked(data: np.ndarray, mask_threshold: float):
    mask = data > mask_threshold
    vals, inv = np.unique(data[mask], return_inverse=True)
    counts = np.bincount(inv, minlength=len(vals)).astype(np.float64)
    return mask, vals.astype(np.float64), counts, inv


def _weighted_median(vals: np.ndarray, weights: np.ndarray) -> float:
    # lower weighted median; vals assumed sorted ascending
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, 0.5 * cum[-1]))
    return float(vals[min(idx, len(vals) - 1)])


def _assign(vals: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ties resolve to the lower center index (argmin convention)
    return np.argmin(np.abs(vals[:, None] - centers[None, :]), axis=1)


def _point_cost(vals: np.ndarray, centers: np.ndarray, assign: np.ndarray, distance: str):
    d = np.abs(vals - centers[assign])
    return d * d if distance == "sq_euclidean" else d


def _update_centers(
    vals: np.ndarray, counts: np.ndarray, assign: np.ndarray, k: int, distance: str
) -> np.ndarray:
    centers = np.empty(k, dtype=np.float64)
    for j in range(k):
        sel = assign == j
        if not sel.any():
            centers[j] = np.nan  # caller reseeds
            continue
        v, w = vals[sel], counts[sel]
        if distance == "sq_euclidean":
            centers[j] = float(np.dot(v, w) / w.sum())
        else:
            # manhattan and chebyshev both reduce to |x - c| on scalars,
            # minimized by the weighted median
            centers[j] = _weighted_median(v, w)
    return centers


def _dp_optimal_centers(vals: np.ndarray, counts: np.ndarray, k: int) -> np.ndarray:
    """Exact weighted 1-D k-means (squared Euclidean) by dynamic programming.

    Optimal clusters of sorted scalar data are contiguous runs, so the
    optimum is a shortest-path problem over split points. Used to seed one
    extra Lloyd run when the distinct-value count is small; random restarts
    alone can miss narrow basins (e.g. a lone extreme value).
    """
    u = len(vals)
    W = np.concatenate(([0.0], np.cumsum(counts)))
    S = np.concatenate(([0.0], np.cumsum(counts * vals)))
    Q = np.concatenate(([0.0], np.cumsum(counts * vals * vals)))

    def run_cost(l, r):  # cost of segment l..r inclusive; l may be an array
        ww = W[r + 1] - W[l]
        ss = S[r + 1] - S[l]
        return (Q[r + 1] - Q[l]) - ss * ss / ww

    D = np.full((k, u), np.inf)
    B = np.zeros((k, u), dtype=np.int64)
    D[0] = run_cost(np.zeros(u, dtype=np.int64), np.arange(u))
    for j in range(1, k):
        for i in range(j, u):
            m = np.arange(j, i + 1)
            cand = D[j - 1][m - 1] + run_cost(m, i)
            best = int(np.argmin(cand))
            D[j, i] = cand[best]
            B[j, i] = m[best]
    centers = np.empty(k, dtype=np.float64)
    r = u - 1
    for j in range(k - 1, -1, -1):
        l = B[j, r] if j > 0 else 0
        centers[j] = (S[r + 1] - S[l]) / (W[r + 1] - W[l])
        r = l - 1
    return centers


_DP_SEED_MAX_VALUES = 4096


def _lloyd(vals, counts, centers0, cfg: KmeansConfig):
    centers = np.asarray(centers0, dtype=np.float64).copy()
    k = cfg.k
    assign = _assign(vals, centers)
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        new_centers = _update_centers(vals, counts, assign, k, cfg.distance)
        empty = np.isnan(new_centers)
        if empty.any():
            # reseed each empty cluster at the value farthest from its center
            cost = np.abs(vals - new_centers[assign])
            cost[np.isnan(cost)] = 0.0
            taken = set(new_centers[~empty].tolist())
            order = np.argsort(cost, kind="stable")[::-1]
            for j in np.flatnonzero(empty):
                for idx in order:
                    cand = float(vals[idx])
                    if cand not in taken:
                        new_centers[j] = cand
                        taken.add(cand)
                        break
        moved = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        assign = _assign(vals, centers)
        if moved < cfg.tol and not np.isnan(centers).any():
            break
    objective = float(np.dot(_point_cost(vals, centers, assign, cfg.distance), counts))
    return centers, assign, objective, iters


def kmeans_segment(vol, cfg: KmeansConfig, progress: Callable[[float], None] | None = None) -> ClusterResult:
    """Lloyd K-means on unmasked scalar intensities.

    Voxels at or below the mask threshold get label 0 and never influence
    the centers. Of `restarts` seeded runs the lowest-objective one wins;
    labels are renumbered so class 1 has the lowest center. With provided
    centers a single deterministic run is performed.
    """
    data, voxel_size = _as_array(vol)
    mask, vals, counts, inv = _unique_unmasked(data, cfg.mask_threshold)
    if len(vals) < cfg.k:
        raise InfeasibleClusterCountError(
            f"need at least k={cfg.k} distinct unmasked intensities, found {len(vals)}"
        )
    if cfg.centers is not None:
        runs = [np.asarray(cfg.centers, dtype=np.float64)]
    else:
        rng = np.random.default_rng(cfg.seed)
        runs = [rng.choice(vals, size=cfg.k, replace=False) for _ in range(cfg.restarts)]
        if cfg.distance == "sq_euclidean" and len(vals) <= _DP_SEED_MAX_VALUES:
            runs.append(_dp_optimal_centers(vals, counts, cfg.k))
    best = None
    for i, c0 in enumerate(runs):
        centers, assign, objective, iters = _lloyd(vals, counts, c0, cfg)
        if best is None or objective < best[2]:
            best = (centers, assign, objective, iters)
        if progress:
            progress((i + 1) / len(runs))
    centers, assign, objective, iters = best
    order = np.argsort(centers, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(cfg.k)
    labels_flat = np.zeros(data.shape, dtype=np.uint8 if cfg.k <= 255 else np.uint16)
    labels_flat[mask] = (rank[assign[inv]] + 1).astype(labels_flat.dtype)
    lab = LabelVolume(labels=labels_flat, k=cfg.k, voxel_size=voxel_size)
    return ClusterResult(
        labels=lab,
        centers=centers[order],
        objective=objective,
        iterations_used=iters,
    )


def fcm_segment(vol, cfg: FcmConfig, progress: Callable[[float], None] | None = None) -> ClusterResult:
    """Fuzzy C-means with membership exponent m in (1, 2].

    Alternates membership and center updates until the objective change
    falls below tol (relative). A value sitting exactly on a center takes
    membership 1 there. Hard labels are the argmax memberships, renumbered
    by ascending center.
    """
    data, voxel_size = _as_array(vol)
    mask, vals, counts, inv = _unique_unmasked(data, cfg.mask_threshold)
    if len(vals) < cfg.c:
        raise InfeasibleClusterCountError(
            f"need at least c={cfg.c} distinct unmasked intensities, found {len(vals)}"
        )
    rng = np.random.default_rng(cfg.seed)
    centers = np.sort(rng.choice(vals, size=cfg.c, replace=False))
    expo = 1.0 / (cfg.m - 1.0)
    prev_obj = None
    objective = 0.0
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        d2 = (vals[None, :] - centers[:, None]) ** 2  # (c, n)
        u = _fcm_memberships(d2, expo)
        um = u**cfg.m
        wum = um * counts[None, :]
        centers = (wum @ vals) / wum.sum(axis=1)
        objective = float((wum * d2).sum())
        if progress:
            progress(iters / cfg.max_iters)
        if prev_obj is not None and abs(prev_obj - objective) <= cfg.tol * max(1.0, abs(prev_obj)):
            break
        prev_obj = objective
    # final membership pass against the converged centers
    d2 = (vals[None, :] - centers[:, None]) ** 2
    u = _fcm_memberships(d2, expo)
    objective = float((u**cfg.m * counts[None, :] * d2).sum())
    order = np.argsort(centers, kind="stable")
    centers = centers[order]
    u = u[order]
    hard = np.argmax(u, axis=0)  # ties -> lower (ascending-center) index
    labels_flat = np.zeros(data.shape, dtype=np.uint8 if cfg.c <= 255 else np.uint16)
    labels_flat[mask] = (hard[inv] + 1).astype(labels_flat.dtype)
    memberships = np.zeros((cfg.c,) + data.shape, dtype=np.float64)
    for j in range(cfg.c):
        memberships[j][mask] = u[j][inv]
    lab = LabelVolume(labels=labels_flat, k=cfg.c, voxel_size=voxel_size)
    return ClusterResult(
        labels=lab,
        centers=centers,
        objective=objective,
        iterations_used=iters,
        memberships=memberships,
    )


def _fcm_memberships(d2: np.ndarray, expo: float) -> np.ndarray:
    """u_ij = 1 / sum_l (d2_ij/d2_lj)^expo, one-hot on exact center hits.

    The ratio form stays finite for large expo (m near 1): off-minimum
    rows overflow to inf and their memberships collapse to 0.
    """
    zero = d2 == 0.0
    hit = zero.any(axis=0)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ratios = (d2[:, None, :] / d2[None, :, :]) ** expo  # (c, c, n)
        denom = ratios.sum(axis=1)
        u = 1.0 / denom
    if hit.any():
        u[:, hit] = 0.0
        first = np.argmax(zero[:, hit], axis=0)
        u[first, np.flatnonzero(hit)] = 1.0
    return u
