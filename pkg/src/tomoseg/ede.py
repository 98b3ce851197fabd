"""Edge-enhancement removal by dual clustering.

High-contrast propagation imaging leaves bright (EDH) and dark (EDL) halos
at grain boundaries. The workflow here: over-cluster a few slices, read the
raw-intensity statistics of each phase out of that segmentation, replace
whole intensity bands of the full stack by their phase means (the bright
halo band maps onto the quartz mean), then re-cluster into the three real
phases starting from those means. Runs on the already dual-filtered stack.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .clustering import ClusterResult, KmeansConfig, kmeans_segment
from .errors import ParameterError, RangeOverlapError
from .volume import LabelVolume, VoxelVolume

# phases replaced by their substitution means, in application order
REPLACED_PHASES = ("brine", "quartz", "edh", "hydrate")


@dataclass(frozen=True)
class Phase:
    """A named phase and its inclusive label interval in the k1 segmentation."""

    name: str
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ParameterError(f"phase {self.name}: lo {self.lo} > hi {self.hi}")


@dataclass(frozen=True)
class PhaseMap:
    phases: tuple[Phase, ...]

    def __post_init__(self):
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise ParameterError(f"duplicate phase names in {names}")
        overlaps = []
        for i in range(len(self.phases)):
            for j in range(i + 1, len(self.phases)):
                a, b = self.phases[i], self.phases[j]
                if a.lo <= b.hi and b.lo <= a.hi:
                    overlaps.append((a.name, b.name))
        if overlaps:
            # the source workflow overlaps indexing ranges on purpose
            warnings.warn(f"phase label ranges overlap: {overlaps}", stacklevel=2)

    def __getitem__(self, name: str) -> Phase:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.phases)


def default_phase_map() -> PhaseMap:
    """Label assignment used by the reference gas-hydrate workflow (k1=7)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return PhaseMap(
            phases=(
                Phase("noise", 0, 0),
                Phase("edl", 1, 2),
                Phase("brine", 1, 3),
                Phase("quartz", 4, 4),
                Phase("edh", 5, 5),
                Phase("hydrate", 6, 7),
            )
        )


# histogram bin defaults follow the reference workflow: coarse for the
# sparse noise/EDH phases, fine elsewhere
_DEFAULT_BINS = {"noise": 10, "edh": 10}
_FALLBACK_BINS = 100


@dataclass(frozen=True)
class PhaseStats:
    name: str
    count: int
    min: float
    max: float
    mean: float
    std: float
    skewness: float
    hist_counts: np.ndarray
    hist_centers: np.ndarray

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class PhaseStatsReport:
    stats: Mapping[str, PhaseStats]
    overlaps: tuple[tuple[str, str], ...]  # phase pairs with intersecting [min, max]

    def __getitem__(self, name: str) -> PhaseStats:
        return self.stats[name]


def phase_index_stats(
    raw: VoxelVolume,
    seg: LabelVolume,
    phase_map: PhaseMap,
    bins_per_phase: Mapping[str, int] | None = None,
) -> PhaseStatsReport:
    """Raw-intensity statistics per phase of a label segmentation.

    For each phase, collects the raw intensities at voxels whose label
    falls in the phase's range and reports min/max/mean/std, skewness
    (third standardized moment), and a histogram. Pairs of phases whose
    intensity ranges intersect are reported so the operator can re-inspect.
    """
    if raw.shape != seg.shape:
        raise ParameterError(f"raw {raw.shape} and segmentation {seg.shape} dims differ")
    bins_cfg = dict(_DEFAULT_BINS)
    if bins_per_phase:
        bins_cfg.update(bins_per_phase)
    out: dict[str, PhaseStats] = {}
    for phase in phase_map.phases:
        sel = (seg.labels >= phase.lo) & (seg.labels <= phase.hi)
        values = raw.data[sel].astype(np.float64)
        nbins = bins_cfg.get(phase.name, _FALLBACK_BINS)
        if values.size == 0:
            warnings.warn(f"phase {phase.name!r} has no voxels; stats undefined", stacklevel=2)
            out[phase.name] = PhaseStats(
                name=phase.name, count=0, min=np.nan, max=np.nan, mean=np.nan,
                std=np.nan, skewness=np.nan,
                hist_counts=np.zeros(nbins), hist_centers=np.zeros(nbins),
            )
            continue
        counts, edges = np.histogram(values, bins=nbins)
        std = float(values.std())
        skew = float((((values - values.mean()) / std) ** 3).mean()) if std > 0 else 0.0
        out[phase.name] = PhaseStats(
            name=phase.name,
            count=int(values.size),
            min=float(values.min()),
            max=float(values.max()),
            mean=float(values.mean()),
            std=std,
            skewness=skew,
            hist_counts=counts,
            hist_centers=(edges[:-1] + edges[1:]) / 2.0,
        )
    overlaps = []
    names = list(out)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = out[names[i]], out[names[j]]
            if a.empty or b.empty:
                continue
            if a.min <= b.max and b.min <= a.max:
                overlaps.append((a.name, b.name))
    return PhaseStatsReport(stats=out, overlaps=tuple(overlaps))


def rescale_phases(
    raw: VoxelVolume,
    stats: PhaseStatsReport,
    substitution: Mapping[str, float] | None = None,
) -> VoxelVolume:
    """Replace whole intensity bands by phase means over the full stack.

    Every voxel whose intensity lies in a replaced phase's [min, max] takes
    that phase's substitution value; by default brine/quartz/hydrate map to
    their own means and EDH maps to the quartz mean. Noise and EDL are left
    untouched. The replaced bands must be pairwise disjoint. A stack free
    of bright halos may omit the EDH phase entirely; the three real phases
    are mandatory.
    """
    repl = {}
    for name in REPLACED_PHASES:
        if name == "edh" and (name not in stats.stats or stats.stats[name].empty):
            continue  # halo-free data has no EDH band to substitute
        st = stats[name]
        if st.empty:
            raise ParameterError(f"cannot rescale: phase {name!r} is empty")
        repl[name] = st
    order = tuple(n for n in REPLACED_PHASES if n in repl)
    default_sub = {
        "brine": repl["brine"].mean,
        "quartz": repl["quartz"].mean,
        "hydrate": repl["hydrate"].mean,
    }
    if "edh" in repl:
        default_sub["edh"] = repl["quartz"].mean  # bright halos hug quartz grains
    if substitution:
        default_sub.update(substitution)
    colliding = []
    for i, a in enumerate(order):
        for b in order[i + 1 :]:
            if repl[a].min <= repl[b].max and repl[b].min <= repl[a].max:
                colliding.append((a, b))
    if colliding:
        raise RangeOverlapError(
            f"replacement intensity ranges overlap between phases: {colliding}; "
            "re-run the indexing step with a cleaner over-segmentation"
        )
    data = raw.data.astype(np.float64)
    out = data.copy()
    # masks come from the input volume; with disjoint bands this equals the
    # sequential in-place replacement of the reference workflow
    for name in order:
        st = repl[name]
        sel = (data >= st.min) & (data <= st.max)
        out[sel] = default_sub[name]
    return VoxelVolume(
        data=np.clip(np.rint(out), 0, np.iinfo(raw.data.dtype).max).astype(raw.data.dtype),
        voxel_size=raw.voxel_size,
    )


@dataclass(frozen=True)
class EdeConfig:
    k1: int = 7
    final_k: int = 3
    mask_threshold: float = 0.0
    seg_slices: tuple[int, ...] = (0, 1)
    phase_map: PhaseMap = field(default_factory=default_phase_map)
    bins_per_phase: Mapping[str, int] | None = None
    substitution: Mapping[str, float] | None = None
    seed: int = 42
    restarts: int = 5

    def __post_init__(self):
        if self.final_k != 3:
            raise ParameterError("the dual-clustering workflow resolves exactly 3 phases")
        if not self.seg_slices:
            raise ParameterError("need at least one slice for the over-clustering step")


@dataclass(frozen=True)
class EdeResult:
    final: LabelVolume  # 0 masked, 1 brine, 2 quartz, 3 hydrate
    stats: PhaseStatsReport
    rescaled: VoxelVolume
    step2: ClusterResult
    advisories: tuple[str, ...]


def dual_cluster_pipeline(
    raw: VoxelVolume,
    cfg: EdeConfig | None = None,
    progress: Callable[[float], None] | None = None,
    cancelled: Callable[[], bool] | None = None,
) -> EdeResult:
    """Run the six-step halo-removal workflow on a dual-filtered stack.

    Over-clusters the configured slices into k1 classes, indexes raw
    intensities per phase, replaces the brine/quartz/EDH/hydrate bands of
    the whole stack by their substitution means, then re-clusters into
    three classes seeded at the brine/quartz/hydrate means (single
    deterministic run). Final labels: 1=brine, 2=quartz, 3=hydrate.
    """
    cfg = cfg or EdeConfig()
    for s in cfg.seg_slices:
        if not (0 <= s < raw.nz):
            raise ParameterError(f"seg slice {s} outside stack (nz={raw.nz})")
    advisories: list[str] = []

    # step 2: over-cluster the selected slices jointly
    sub = VoxelVolume(
        data=np.ascontiguousarray(raw.data[list(cfg.seg_slices)]), voxel_size=raw.voxel_size
    )
    step2 = kmeans_segment(
        sub,
        KmeansConfig(
            k=cfg.k1,
            distance="sq_euclidean",
            restarts=cfg.restarts,
            mask_threshold=cfg.mask_threshold,
            seed=cfg.seed,
        ),
    )
    if progress:
        progress(0.3)
    if cancelled and cancelled():
        raise RuntimeError("cancelled")

    # step 3: index raw intensities per phase and inspect overlap
    stats = phase_index_stats(sub, step2.labels, cfg.phase_map, cfg.bins_per_phase)
    for a, b in stats.overlaps:
        advisories.append(
            f"histograms of phases {a!r} and {b!r} overlap in intensity; "
            "repeat the indexing step with adjusted label ranges before trusting the rescale"
        )
    if progress:
        progress(0.4)

    # steps 4-5: band replacement over the whole stack
    rescaled = rescale_phases(raw, stats, cfg.substitution)
    if progress:
        progress(0.7)
    if cancelled and cancelled():
        raise RuntimeError("cancelled")

    # step 6: final clustering seeded at the three phase means
    centers = (stats["brine"].mean, stats["quartz"].mean, stats["hydrate"].mean)
    final = kmeans_segment(
        rescaled,
        KmeansConfig(
            k=cfg.final_k,
            distance="sq_euclidean",
            restarts=1,
            centers=centers,
            mask_threshold=cfg.mask_threshold,
            seed=cfg.seed,
        ),
    )
    labels = LabelVolume(
        labels=final.labels.labels,
        k=cfg.final_k,
        voxel_size=raw.voxel_size,
        class_names=("brine", "quartz", "hydrate"),
    )
    if progress:
        progress(1.0)
    return EdeResult(
        final=labels,
        stats=stats,
        rescaled=rescaled,
        step2=step2,
        advisories=tuple(advisories),
    )
