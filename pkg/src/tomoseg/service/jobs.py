"""Sessions, jobs, and the per-session worker.

Each session owns one FIFO worker thread (mirroring a single progress bar);
jobs from different sessions run in parallel. Job outputs are staged
locally and published into the session only on success, so cancellation or
failure never corrupts session state. Cancellation is cooperative and
honored at slice/iteration boundaries.
"""

from __future__ import annotations

import queue
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import clustering, ede, filters, petro, supervised
from ..errors import TomosegError
from ..runner import hash_artifact
from ..volume import LabelVolume, Roi, VoxelVolume, crop

JOB_KINDS = ("filter", "segment", "ede", "analyze", "classify")


class JobCancelled(Exception):
    pass


class Job:
    def __init__(self, kind: str, params: dict):
        self.id = secrets.token_hex(8)
        self.kind = kind
        self.params = params
        self._lock = threading.Lock()
        self._state = "queued"
        self._progress = 0.0
        self._history: list[dict] = []
        self._error: str | None = None
        self._results: list[str] = []
        self._manifest: dict | None = None
        self.cancel_event = threading.Event()
        self.log(f"queued {kind} job")

    def log(self, line: str) -> None:
        with self._lock:
            self._history.append({"t": time.time(), "line": line})

    def set_state(self, state: str, error: str | None = None) -> None:
        with self._lock:
            self._state = state
            if error:
                self._error = error
        self.log(f"state -> {state}" + (f": {error}" if error else ""))

    def set_progress(self, p: float) -> None:
        with self._lock:
            # progress is monotone while running
            self._progress = max(self._progress, min(1.0, float(p)))

    def set_results(self, names: list[str], manifest: dict) -> None:
        with self._lock:
            self._results = names
            self._manifest = manifest

    def check_cancel(self) -> None:
        if self.cancel_event.is_set():
            raise JobCancelled()

    def progress_hook(self) -> Callable[[float], None]:
        def hook(p: float) -> None:
            self.check_cancel()
            self.set_progress(p)

        return hook

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "id": self.id,
                "kind": self.kind,
                "params": self.params,
                "state": self._state,
                "progress": self._progress,
                "history": list(self._history),
                "error": self._error,
                "results": list(self._results),
                "manifest": self._manifest,
            }

    @property
    def state(self) -> str:
        with self._lock:
            return self._state


class Session:
    def __init__(self, sid: str):
        self.id = sid
        self.lock = threading.RLock()
        self.volumes: dict[str, VoxelVolume] = {}
        self.labels: dict[str, LabelVolume] = {}
        self.tables: dict[str, dict] = {}
        self.roi: Roi | None = None
        self.training_table: supervised.TrainingTable | None = None
        self.jobs: dict[str, Job] = {}
        self._queue: "queue.Queue[Job]" = queue.Queue()
        self._worker: threading.Thread | None = None

    def submit(self, job: Job) -> None:
        with self.lock:
            self.jobs[job.id] = job
            self._queue.put(job)
            if self._worker is None or not self._worker.is_alive():
                self._worker = threading.Thread(target=self._run_loop, daemon=True)
                self._worker.start()

    def _run_loop(self) -> None:
        while True:
            try:
                job = self._queue.get(timeout=5.0)
            except queue.Empty:
                return
            if job.cancel_event.is_set():
                job.set_state("cancelled")
                continue
            job.set_state("running")
            t0 = time.time()
            try:
                outputs, summary = execute_job(self, job)
            except JobCancelled:
                job.set_state("cancelled")
                job.log("stopped after the current slice iteration")
                continue
            except TomosegError as exc:
                job.set_state("failed", error=str(exc))
                continue
            except Exception as exc:  # noqa: BLE001 - surface everything to the poller
                job.set_state("failed", error=f"{type(exc).__name__}: {exc}")
                continue
            # publish atomically on success only
            with self.lock:
                for name, art in outputs.items():
                    if isinstance(art, VoxelVolume):
                        self.volumes[name] = art
                    elif isinstance(art, LabelVolume):
                        self.labels[name] = art
                    else:
                        self.tables[name] = art
            manifest = {
                "kind": job.kind,
                "params": job.params,
                "outputs": {name: hash_artifact(a) for name, a in outputs.items()},
                "elapsed_s": time.time() - t0,
            }
            job.set_results(sorted(outputs), manifest)
            job.set_progress(1.0)
            job.set_state("done")
            job.log(f"produced: {', '.join(sorted(outputs)) or 'nothing'}")

    def source_volume(self, name: str, apply_roi: bool = True) -> VoxelVolume:
        with self.lock:
            if name not in self.volumes:
                raise TomosegError(f"no volume named {name!r} in session")
            vol = self.volumes[name]
            roi = self.roi
        if apply_roi and roi is not None:
            vol = crop(vol, roi)
        return vol


def execute_job(session: Session, job: Job) -> tuple[dict[str, Any], str]:
    p = dict(job.params)
    hook = job.progress_hook()
    kind = job.kind
    if kind == "filter":
        src = session.source_volume(p.get("source", "raw"))
        method = p.get("method", "nlm")
        job.log(f"filter {method} on {src.nx}x{src.ny}x{src.nz}")
        if method == "nlm":
            out = filters.nlm_filter(
                src,
                filters.NlmParams(
                    search_window=int(p.get("search_window", 21)),
                    neighborhood=int(p.get("neighborhood", 6)),
                    similarity=float(p.get("similarity", 0.71)),
                    three_d=bool(p.get("three_d", False)),
                ),
                progress=hook,
            )
        elif method == "anisotropic_diffusion":
            out = filters.anisotropic_diffusion(
                src,
                filters.AdParams(
                    threshold=float(p["threshold"]),
                    iterations=int(p.get("iterations", 5)),
                    smoothing_sigma=float(p.get("smoothing_sigma", 0.0)),
                ),
                progress=hook,
            )
        elif method in ("median", "mean", "gaussian"):
            out = filters.smooth(
                src, method=method, radius=int(p.get("radius", 1)),
                sigma=float(p["sigma"]) if "sigma" in p else None, progress=hook,
            )
        elif method == "contrast_stretch":
            out = filters.contrast_stretch(
                src, float(p.get("low_pct", 0.0)), float(p.get("high_pct", 100.0))
            )
        else:
            raise TomosegError(f"unknown filter method {p.get('method')!r}")
        return {p.get("target", "filtered"): out}, "filtered"
    if kind == "segment":
        src = session.source_volume(p.get("source", "raw"))
        method = p.get("method", "kmeans")
        job.log(f"segment {method} k={p.get('k', p.get('c'))}")
        if method == "kmeans":
            cfg = clustering.KmeansConfig(
                k=int(p["k"]),
                distance=p.get("distance", "sq_euclidean"),
                restarts=int(p.get("restarts", 5)),
                mask_threshold=float(p.get("mask_threshold", 0.0)),
                seed=int(p.get("seed", 42)),
            )
            res = clustering.kmeans_segment(src, cfg, progress=hook)
        elif method == "fcm":
            cfg = clustering.FcmConfig(
                c=int(p["c" if "c" in p else "k"]),
                m=float(p.get("m", 2.0)),
                mask_threshold=float(p.get("mask_threshold", 0.0)),
                seed=int(p.get("seed", 42)),
            )
            res = clustering.fcm_segment(src, cfg, progress=hook)
        else:
            raise TomosegError(f"unknown segmentation method {method!r}")
        job.log(f"centers: {np.round(res.centers, 2).tolist()}")
        return {p.get("target", "labels"): res.labels}, "segmented"
    if kind == "ede":
        src = session.source_volume(p.get("source", "raw"))
        phase_map = ede.default_phase_map()
        if isinstance(p.get("map"), list):
            phase_map = ede.PhaseMap(
                phases=tuple(ede.Phase(m["name"], int(m["lo"]), int(m["hi"])) for m in p["map"])
            )
        cfg = ede.EdeConfig(
            k1=int(p.get("k1", 7)),
            final_k=int(p.get("final_k", 3)),
            mask_threshold=float(p.get("mask_threshold", 0.0)),
            seg_slices=tuple(int(s) for s in p.get("seg_slices", (0, 1))),
            phase_map=phase_map,
            seed=int(p.get("seed", 42)),
            restarts=int(p.get("restarts", 5)),
        )
        res = ede.dual_cluster_pipeline(src, cfg, progress=hook)
        for adv in res.advisories:
            job.log(f"advisory: {adv}")
        stats_table = {
            "phase": [s.name for s in res.stats.stats.values()],
            "count": [s.count for s in res.stats.stats.values()],
            "mean": [s.mean for s in res.stats.stats.values()],
            "std": [s.std for s in res.stats.stats.values()],
            "min": [s.min for s in res.stats.stats.values()],
            "max": [s.max for s in res.stats.stats.values()],
            "skewness": [s.skewness for s in res.stats.stats.values()],
        }
        target = p.get("target", "ede")
        return {
            target: res.final,
            f"{target}_rescaled": res.rescaled,
            f"{target}_stats": stats_table,
        }, "ede complete"
    if kind == "classify":
        with session.lock:
            table = session.training_table
        if table is None:
            raise TomosegError("no training table in session; PUT /training-table first")
        train_src = session.source_volume(p.get("train_source", "raw"), apply_roi=False)
        feats = supervised.extract_features(train_src, table)
        model_kind = p.get("model", "lssvm")
        job.log(f"training {model_kind} on {len(feats.y)} samples")
        if model_kind == "lssvm":
            model = supervised.train_lssvm(
                feats, gamma=float(p.get("gamma", 1.0)), sigma2=float(p.get("sigma2", 1000.0)),
                kernel=p.get("kernel", "rbf"),
            )
        else:
            model = supervised.train_ensemble(
                feats, method=p.get("method", "bagging"),
                n_learners=int(p.get("n_learners", 50)),
                max_depth=int(p.get("max_depth", 3)), seed=int(p.get("seed", 42)),
            )
        src = session.source_volume(p.get("source", "raw"))
        job.check_cancel()
        out = supervised.classify_volume(model, src, progress=hook)
        extras: dict[str, Any] = {}
        if bool(p.get("cross_validate", False)):
            folds = int(p.get("folds", 10))
            cv = supervised.cross_validate(
                feats, folds=min(folds, len(feats.y)),
                trainer=(lambda fm: supervised.train_lssvm(
                    fm, gamma=float(p.get("gamma", 1.0)), sigma2=float(p.get("sigma2", 1000.0))
                )) if model_kind == "lssvm" else (lambda fm: supervised.train_ensemble(
                    fm, method=p.get("method", "bagging"),
                    n_learners=int(p.get("n_learners", 50)),
                    max_depth=int(p.get("max_depth", 3)), seed=int(p.get("seed", 42)),
                )),
            )
            extras["cv"] = {
                "fold_accuracies": list(cv.fold_accuracies), "mean": cv.mean, "std": cv.std,
            }
            job.log(f"10-fold CV mean accuracy {cv.mean:.3f}")
        target = p.get("target", "classified")
        outputs = {target: out}
        if extras:
            outputs[f"{target}_validation"] = extras
        return outputs, "classified"
    if kind == "analyze":
        name = p.get("labels", "labels")
        with session.lock:
            if name not in session.labels:
                raise TomosegError(f"no label volume named {name!r} in session")
            lab = session.labels[name]
        op = p.get("op", "porosity")
        job.log(f"analyze {op} on {name!r}")
        result = compute_metric(lab, op, p)
        return {f"{name}_{op}": result}, "analyzed"
    raise TomosegError(f"unknown job kind {kind!r}")


def compute_metric(lab: LabelVolume, op: str, p: dict) -> dict:
    if op == "porosity":
        return {"porosity": petro.porosity(lab, int(p.get("pore_class", 1)))}
    if op == "trend":
        t = petro.porosity_trend(lab, int(p.get("pore_class", 1)))
        return {
            "slice": list(range(len(t.per_slice))),
            "porosity": t.per_slice.tolist(),
            "slope": t.slope, "intercept": t.intercept,
            "r_squared": t.r_squared, "mean": t.mean, "std": t.std,
        }
    if op == "fractions":
        return {str(k): v for k, v in petro.volume_fractions(lab).items()}
    if op == "psd":
        r = petro.pore_size_distribution(
            lab, int(p.get("pore_class", 1)),
            voxel_size=float(p["voxel_size"]) if "voxel_size" in p else None,
            smoothing_sigma=float(p.get("smoothing_sigma", 1.0)),
        )
        return {
            "diameters": r.diameters.tolist(), "mean": r.mean, "std": r.std,
            "region_count": r.region_count,
            "hist_counts": r.hist_counts.tolist(),
            "hist_centers": r.hist_centers.tolist(),
        }
    if op == "rev":
        c = petro.rev_curve(
            lab, int(p.get("pore_class", 1)),
            [int(e) for e in p["edge_lengths"]], band=float(p.get("band", 0.01)),
        )
        return {
            "edge": list(c.edges), "porosity": list(c.porosities),
            "full_porosity": c.full_porosity, "onset_edge": c.onset_edge,
            "hints": list(c.hints),
        }
    if op == "entropy":
        return {"entropy_bits": supervised.segmentation_entropy(lab)}
    raise TomosegError(f"unknown metric op {op!r}")


class SessionStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def create(self) -> Session:
        sid = secrets.token_hex(8)
        s = Session(sid)
        with self._lock:
            self._sessions[sid] = s
        return s

    def get(self, sid: str) -> Session | None:
        with self._lock:
            return self._sessions.get(sid)

    def find_job(self, job_id: str) -> tuple[Session, Job] | None:
        with self._lock:
            for s in self._sessions.values():
                if job_id in s.jobs:
                    return s, s.jobs[job_id]
        return None
