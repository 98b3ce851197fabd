"""Quantitative analysis of segmented volumes.

Porosity here is always relative to the unmasked region: label 0 voxels
count in no denominator. The pore-size distribution follows the
morphological recipe: distance transform of the pore phase, Gaussian
smoothing, marker-based watershed, equivalent spherical diameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.segmentation import watershed

from .errors import BoundsError, EmptyRegionError, ParameterError
from .volume import LabelVolume


def porosity(labels: LabelVolume, pore_class: int) -> float:
    """Pore fraction of the unmasked region."""
    if not (1 <= pore_class <= labels.k):
        raise ParameterError(f"pore_class must be in 1..{labels.k}, got {pore_class}")
    unmasked = int((labels.labels != 0).sum())
    if unmasked == 0:
        raise EmptyRegionError("porosity undefined: every voxel is masked")
    return int((labels.labels == pore_class).sum()) / unmasked


@dataclass(frozen=True)
class PorosityTrend:
    per_slice: np.ndarray  # porosity per z index
    slope: float
    intercept: float
    r_squared: float
    mean: float
    std: float


def porosity_trend(labels: LabelVolume, pore_class: int) -> PorosityTrend:
    """Per-slice porosity with an ordinary least-squares line over z.

    R^2 = 1 - SS_res/SS_tot; a constant trend (SS_tot == 0) reports 0 by
    convention.
    """
    if labels.nz < 2:
        raise ParameterError(f"trend needs at least 2 slices, got nz={labels.nz}")
    if not (1 <= pore_class <= labels.k):
        raise ParameterError(f"pore_class must be in 1..{labels.k}, got {pore_class}")
    phi = np.empty(labels.nz, dtype=np.float64)
    for z in range(labels.nz):
        sl = labels.labels[z]
        unmasked = int((sl != 0).sum())
        if unmasked == 0:
            raise EmptyRegionError(f"slice {z} is fully masked; per-slice porosity undefined")
        phi[z] = int((sl == pore_class).sum()) / unmasked
    x = np.arange(labels.nz, dtype=np.float64)
    ss_tot = float(((phi - phi.mean()) ** 2).sum())
    if ss_tot == 0.0:
        slope, intercept, r2 = 0.0, float(phi.mean()), 0.0
    else:
        slope, intercept = np.polyfit(x, phi, 1)
        fitted = slope * x + intercept
        ss_res = float(((phi - fitted) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot
    return PorosityTrend(
        per_slice=phi,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(np.clip(r2, 0.0, 1.0)),
        mean=float(phi.mean()),
        std=float(phi.std()),
    )


def volume_fractions(labels: LabelVolume) -> dict[int, float]:
    """Fraction of each class 1..k over the unmasked region; sums to 1."""
    unmasked = labels.labels[labels.labels != 0]
    if unmasked.size == 0:
        raise EmptyRegionError("volume fractions undefined: every voxel is masked")
    counts = np.bincount(unmasked.ravel(), minlength=labels.k + 1)
    return {c: counts[c] / unmasked.size for c in range(1, labels.k + 1)}


@dataclass(frozen=True)
class PsdResult:
    diameters: np.ndarray  # equivalent spherical diameters, micrometers
    hist_counts: np.ndarray
    hist_centers: np.ndarray
    mean: float
    std: float
    region_count: int
    regions: np.ndarray  # watershed partition of the pore phase (0 outside)


def pore_size_distribution(
    labels: LabelVolume,
    pore_class: int,
    voxel_size: float | None = None,
    smoothing_sigma: float = 1.0,
    hist_bins: int = 20,
) -> PsdResult:
    """Morphological pore-size distribution.

    Euclidean distance transform of the pore mask, Gaussian smoothing to
    suppress spurious maxima, watershed from the local maxima (26-connected
    markers, 6-connected flooding), then per region the equivalent
    spherical diameter d = 2*(3V/(4*pi))^(1/3).
    """
    if not (1 <= pore_class <= labels.k):
        raise ParameterError(f"pore_class must be in 1..{labels.k}, got {pore_class}")
    vs = float(voxel_size if voxel_size is not None else labels.voxel_size)
    if not vs > 0:
        raise ParameterError(f"voxel_size must be > 0, got {vs}")
    mask = labels.labels == pore_class
    if not mask.any():
        raise EmptyRegionError(f"pore class {pore_class} has no voxels")
    dt = ndimage.distance_transform_edt(mask)
    sm = ndimage.gaussian_filter(dt, sigma=smoothing_sigma, mode="nearest") if smoothing_sigma > 0 else dt
    peaks = (sm == ndimage.maximum_filter(sm, footprint=np.ones((3, 3, 3)), mode="nearest")) & mask
    markers, n_markers = ndimage.label(peaks, structure=np.ones((3, 3, 3), dtype=bool))
    regions = watershed(-sm, markers=markers, mask=mask, connectivity=1)
    counts = np.bincount(regions.ravel())[1:]  # skip background
    counts = counts[counts > 0]
    volumes = counts.astype(np.float64) * vs**3
    diameters = 2.0 * (3.0 * volumes / (4.0 * np.pi)) ** (1.0 / 3.0)
    hist_counts, edges = np.histogram(diameters, bins=hist_bins)
    return PsdResult(
        diameters=diameters,
        hist_counts=hist_counts,
        hist_centers=(edges[:-1] + edges[1:]) / 2.0,
        mean=float(diameters.mean()),
        std=float(diameters.std()),
        region_count=int(len(diameters)),
        regions=regions,
    )


@dataclass(frozen=True)
class RevCurve:
    edges: tuple[int, ...]
    porosities: tuple[float, ...]
    full_porosity: float
    band: float
    onset_edge: int | None  # smallest edge from which porosity stays in band
    hints: tuple[str, ...]  # "I" before stabilization, "II" after


def rev_curve(
    labels: LabelVolume,
    pore_class: int,
    edge_lengths: list[int] | tuple[int, ...],
    band: float = 0.01,
) -> RevCurve:
    """Porosity of concentric centered cubes of growing edge length.

    The onset edge is the smallest sampled edge from which every larger
    sample stays within +-band of the full-volume porosity (the plateau
    onset of a porosity-volume curve); samples before it are flagged
    region "I", from it on region "II".
    """
    edges = tuple(int(e) for e in edge_lengths)
    if not edges:
        raise ParameterError("need at least one edge length")
    if any(e < 1 for e in edges):
        raise ParameterError(f"edge lengths must be >= 1, got {edges}")
    if list(edges) != sorted(set(edges)):
        raise ParameterError("edge lengths must be strictly increasing")
    min_dim = min(labels.shape)
    if edges[-1] > min_dim:
        raise BoundsError(f"edge length {edges[-1]} exceeds smallest volume dim {min_dim}")
    full = porosity(labels, pore_class)
    phis = []
    for e in edges:
        starts = [(d - e) // 2 for d in labels.shape]
        cube = labels.labels[
            starts[0] : starts[0] + e, starts[1] : starts[1] + e, starts[2] : starts[2] + e
        ]
        unmasked = int((cube != 0).sum())
        if unmasked == 0:
            raise EmptyRegionError(f"centered cube of edge {e} is fully masked")
        phis.append(int((cube == pore_class).sum()) / unmasked)
    within = [abs(p - full) <= band for p in phis]
    onset = None
    for i in range(len(edges)):
        if all(within[i:]):
            onset = edges[i]
            break
    hints = tuple("II" if onset is not None and e >= onset else "I" for e in edges)
    return RevCurve(
        edges=edges,
        porosities=tuple(phis),
        full_porosity=full,
        band=band,
        onset_edge=onset,
        hints=hints,
    )
