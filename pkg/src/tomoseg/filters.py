"""Denoising and contrast pre-processing applied before segmentation.

All filters work in float64 internally and round back to the input dtype at
the end, so repeated integer quantization never accumulates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogramError, ParameterError
from .volume import VoxelVolume

ProgressFn = Callable[[float], None]
CancelFn = Callable[[], bool]


@dataclass(frozen=True)
class NlmParams:
    """Non-local means configuration.

    search_window is the odd side length of the candidate region.
    neighborhood is the side of the patch compared for similarity; even
    values are rounded up to the next odd side so patches stay centered
    (6 becomes 7). similarity scales the weight kernel width:
    h = similarity * std(input).
    """

    search_window: int = 21
    neighborhood: int = 6
    similarity: float = 0.71
    three_d: bool = False

    def __post_init__(self):
        if self.search_window < 1 or self.search_window % 2 == 0:
            raise ParameterError(f"search_window must be odd and >= 1, got {self.search_window}")
        if self.neighborhood < 1:
            raise ParameterError(f"neighborhood must be >= 1, got {self.neighborhood}")
        if self.search_window < self.neighborhood:
            raise ParameterError("search_window must be >= neighborhood")
        if not self.similarity > 0:
            raise ParameterError(f"similarity must be > 0, got {self.similarity}")

    @property
    def patch_side(self) -> int:
        return self.neighborhood if self.neighborhood % 2 == 1 else self.neighborhood + 1


@dataclass(frozen=True)
class AdParams:
    """Anisotropic diffusion configuration.

    threshold is the hard stop criterion on neighbor differences (raw
    intensity units): at or above it no flux crosses that voxel pair.
    smoothing_sigma, when positive, gates the flux on differences of a
    Gaussian-smoothed copy instead of the raw differences.
    """

    threshold: float
    iterations: int = 5
    smoothing_sigma: float = 0.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ParameterError(f"threshold must be > 0, got {self.threshold}")
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.smoothing_sigma < 0:
            raise ParameterError(f"smoothing_sigma must be >= 0, got {self.smoothing_sigma}")


def _round_back(out: np.ndarray, dtype: np.dtype) -> np.ndarray:
    info = np.iinfo(dtype)
    return np.clip(np.rint(out), info.min, info.max).astype(dtype)


def _nlm_nd(img: np.ndarray, side: int, search_window: int, h: float) -> np.ndarray:
    """Patch-weighted average over the search window, any rank.

    Candidate positions and patch reads are clamped to the image bounds
    (edge replication), so border voxels see a full window of replicated
    candidates. Weight: exp(-mean-squared patch difference / h^2).
    """
    r = side // 2
    s = search_window // 2
    pad = s + r
    ext = np.pad(img, pad, mode="edge")
    n = img.shape
    ndim = img.ndim
    # region with an r margin around the true volume; patch means computed
    # on it never touch invalid data for any offset |d| <= s
    base = ext[tuple(slice(pad - r, pad + n[ax] + r) for ax in range(ndim))]
    num = np.zeros(img.shape, dtype=np.float64)
    den = np.zeros(img.shape, dtype=np.float64)
    inner = tuple(slice(r, r + n[ax]) for ax in range(ndim))
    offsets = np.stack(
        np.meshgrid(*([np.arange(-s, s + 1)] * ndim), indexing="ij"), -1
    ).reshape(-1, ndim)
    for d in offsets:
        cand = ext[tuple(slice(pad - r + d[ax], pad + n[ax] + r + d[ax]) for ax in range(ndim))]
        dist = ndimage.uniform_filter((base - cand) ** 2, size=side)
        w = np.exp(-dist[inner] / (h * h))
        num += w * cand[inner]
        den += w
    return num / den


def nlm_filter(
    vol: VoxelVolume,
    params: NlmParams | None = None,
    progress: ProgressFn | None = None,
    cancelled: CancelFn | None = None,
) -> VoxelVolume:
    """Non-local means denoising, per slice or fully volumetric.

    Each output voxel is the similarity-weighted average of the candidates
    in its search window; weights fall off as exp(-d2/h^2) where d2 is the
    mean squared difference of the centered patches and h = similarity *
    std(input). Constant inputs pass through unchanged.
    """
    p = params or NlmParams()
    data = vol.data.astype(np.float64)
    h = p.similarity * float(data.std())
    if h == 0.0:
        return VoxelVolume(data=vol.data.copy(), voxel_size=vol.voxel_size)
    if p.three_d:
        out = _nlm_nd(data, p.patch_side, p.search_window, h)
        if progress:
            progress(1.0)
    else:
        out = np.empty_like(data)
        for z in range(vol.nz):
            if cancelled and cancelled():
                break
            out[z] = _nlm_nd(data[z], p.patch_side, p.search_window, h)
            if progress:
                progress((z + 1) / vol.nz)
    return VoxelVolume(data=_round_back(out, vol.data.dtype), voxel_size=vol.voxel_size)


def anisotropic_diffusion(
    vol: VoxelVolume,
    params: AdParams,
    progress: ProgressFn | None = None,
    cancelled: CancelFn | None = None,
) -> VoxelVolume:
    """Threshold-gated 6-neighbor diffusion with a hard stop criterion.

    For every face-neighbor pair the intensity difference diffuses only
    when its magnitude is below the threshold; at or above it the edge is
    preserved exactly. The explicit step weight is 1/7 (below the 1/6
    stability bound). Flux form: what leaves one voxel enters its
    neighbor, so the global mean is conserved up to final rounding.
    """
    a = vol.data.astype(np.float64)
    lam = 1.0 / 7.0
    for it in range(params.iterations):
        if cancelled and cancelled():
            break
        gate_src = (
            ndimage.gaussian_filter(a, params.smoothing_sigma, mode="nearest")
            if params.smoothing_sigma > 0
            else a
        )
        delta = np.zeros_like(a)
        for ax in range(3):
            d = np.diff(a, axis=ax)
            g = d if gate_src is a else np.diff(gate_src, axis=ax)
            flux = np.where(np.abs(g) < params.threshold, d, 0.0)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            delta[tuple(lo)] += flux
            delta[tuple(hi)] -= flux
        a = a + lam * delta
        if progress:
            progress((it + 1) / params.iterations)
    return VoxelVolume(data=_round_back(a, vol.data.dtype), voxel_size=vol.voxel_size)


def smooth(
    vol: VoxelVolume,
    method: str = "median",
    radius: int = 1,
    sigma: float | None = None,
    progress: ProgressFn | None = None,
    cancelled: CancelFn | None = None,
) -> VoxelVolume:
    """Per-slice windowed median / mean / gaussian smoothing.

    Window side is 2*radius+1 with edge replication. For gaussian, sigma
    defaults to radius/2 and the kernel is truncated at the radius.
    """
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    if method not in ("median", "mean", "gaussian"):
        raise ParameterError(f"unknown smoothing method {method!r}")
    size = 2 * radius + 1
    out = np.empty_like(vol.data)
    for z in range(vol.nz):
        if cancelled and cancelled():
            break
        sl = vol.data[z]
        if method == "median":
            out[z] = ndimage.median_filter(sl, size=size, mode="nearest")
        elif method == "mean":
            sm = ndimage.uniform_filter(sl.astype(np.float64), size=size, mode="nearest")
            out[z] = _round_back(sm, vol.data.dtype)
        else:
            sg = sigma if sigma is not None else radius / 2.0
            if not sg > 0:
                raise ParameterError(f"gaussian sigma must be > 0, got {sg}")
            sm = ndimage.gaussian_filter(
                sl.astype(np.float64), sigma=sg, radius=radius, mode="nearest"
            )
            out[z] = _round_back(sm, vol.data.dtype)
        if progress:
            progress((z + 1) / vol.nz)
    return VoxelVolume(data=out, voxel_size=vol.voxel_size)


def contrast_stretch(vol: VoxelVolume, low_pct: float = 0.0, high_pct: float = 100.0) -> VoxelVolume:
    """Map the [P_low, P_high] intensity percentiles to the full dtype range.

    Values outside the window clamp; the mapping is monotone.
    """
    if not (0 <= low_pct < high_pct <= 100):
        raise ParameterError(f"need 0 <= low_pct < high_pct <= 100, got ({low_pct}, {high_pct})")
    data = vol.data.astype(np.float64)
    p_lo, p_hi = np.percentile(data, [low_pct, high_pct])
    if p_lo == p_hi:
        raise DegenerateHistogramError(
            f"percentiles {low_pct} and {high_pct} both map to intensity {p_lo}; no spread to stretch"
        )
    top = float(np.iinfo(vol.data.dtype).max)
    out = (np.clip(data, p_lo, p_hi) - p_lo) * (top / (p_hi - p_lo))
    return VoxelVolume(data=_round_back(out, vol.data.dtype), voxel_size=vol.voxel_size)
