"""Declarative stage chains with reproducibility manifests.

A run config lists named stages; each stage applies one operation to the
artifacts of earlier stages. Every run emits a manifest with content
hashes of all inputs, parameters (seeds included), and outputs, so any run
can be replayed and checked bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import clustering, ede, filters, petro, supervised, volume
from .errors import ConfigError, TomosegError


def load_config(path: str | os.PathLike) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        cfg = yaml.safe_load(text)
    else:
        cfg = json.loads(text)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return cfg


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_artifact(obj: Any) -> str:
    """Stable content hash for any artifact a stage can produce."""
    if isinstance(obj, volume.VoxelVolume):
        meta = f"voxel:{obj.shape}:{obj.data.dtype}:{obj.voxel_size!r}".encode()
        return _sha256(meta + np.ascontiguousarray(obj.data).tobytes())
    if isinstance(obj, volume.LabelVolume):
        meta = f"label:{obj.shape}:{obj.k}:{obj.voxel_size!r}:{obj.class_names!r}".encode()
        return _sha256(meta + np.ascontiguousarray(obj.labels).tobytes())
    if isinstance(obj, clustering.ClusterResult):
        return _sha256(
            (hash_artifact(obj.labels) + np.asarray(obj.centers).tobytes().hex()).encode()
        )
    if isinstance(obj, (dict, list, tuple, str, int, float, bool)) or obj is None:
        return _sha256(json.dumps(obj, sort_keys=True, default=_json_fallback).encode())
    if isinstance(obj, np.ndarray):
        return _sha256(obj.tobytes() + str(obj.shape).encode())
    return _sha256(repr(obj).encode())


def _json_fallback(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _roi_from(params: dict) -> volume.Roi:
    return volume.Roi(
        x0=int(params["x0"]), y0=int(params["y0"]), z0=int(params["z0"]),
        dx=int(params["dx"]), dy=int(params["dy"]), dz=int(params["dz"]),
    )


def _phase_map_from(spec) -> ede.PhaseMap:
    if spec in (None, "default"):
        return ede.default_phase_map()
    phases = tuple(ede.Phase(p["name"], int(p["lo"]), int(p["hi"])) for p in spec)
    return ede.PhaseMap(phases=phases)


def _as_labels(obj) -> volume.LabelVolume:
    if isinstance(obj, clustering.ClusterResult):
        return obj.labels
    if isinstance(obj, ede.EdeResult):
        return obj.final
    if isinstance(obj, volume.LabelVolume):
        return obj
    raise ConfigError(f"stage input is {type(obj).__name__}, expected labels")


def _as_volume(obj) -> volume.VoxelVolume:
    if isinstance(obj, volume.VoxelVolume):
        return obj
    raise ConfigError(f"stage input is {type(obj).__name__}, expected a volume")


# each op: (n_inputs, handler(inputs, params) -> artifact)
_OPS: dict[str, tuple[int, Callable]] = {}


def _op(name: str, n_inputs: int):
    def deco(fn):
        _OPS[name] = (n_inputs, fn)
        return fn

    return deco


@_op("load_raw", 0)
def _load_raw(_, p):
    return volume.load_raw(
        p["path"], nx=int(p["nx"]), ny=int(p["ny"]), nz=int(p["nz"]),
        bit_depth=int(p.get("bit_depth", 16)), byte_order=p.get("byte_order", "little"),
        voxel_size=float(p.get("voxel_size", 1.0)),
        transpose_xy=bool(p.get("transpose_xy", False)),
    )


@_op("load_tiff", 0)
def _load_tiff(_, p):
    return volume.load_tiff_stack(p["paths"], voxel_size=float(p.get("voxel_size", 1.0)))


@_op("crop", 1)
def _crop(inputs, p):
    src = inputs[0]
    if isinstance(src, volume.LabelVolume):
        return volume.crop_labels(src, _roi_from(p))
    return volume.crop(_as_volume(src), _roi_from(p))


@_op("downsample", 1)
def _downsample(inputs, p):
    return volume.downsample(_as_volume(inputs[0]), int(p["factor"]))


@_op("nlm", 1)
def _nlm(inputs, p):
    params = filters.NlmParams(
        search_window=int(p.get("search_window", 21)),
        neighborhood=int(p.get("neighborhood", 6)),
        similarity=float(p.get("similarity", 0.71)),
        three_d=bool(p.get("three_d", False)),
    )
    return filters.nlm_filter(_as_volume(inputs[0]), params)


@_op("anisotropic_diffusion", 1)
def _ad(inputs, p):
    params = filters.AdParams(
        threshold=float(p["threshold"]),
        iterations=int(p.get("iterations", 5)),
        smoothing_sigma=float(p.get("smoothing_sigma", 0.0)),
    )
    return filters.anisotropic_diffusion(_as_volume(inputs[0]), params)


@_op("smooth", 1)
def _smooth(inputs, p):
    return filters.smooth(
        _as_volume(inputs[0]), method=p.get("method", "median"),
        radius=int(p.get("radius", 1)),
        sigma=float(p["sigma"]) if "sigma" in p else None,
    )


@_op("contrast_stretch", 1)
def _contrast(inputs, p):
    return filters.contrast_stretch(
        _as_volume(inputs[0]), float(p.get("low_pct", 0.0)), float(p.get("high_pct", 100.0))
    )


@_op("kmeans", 1)
def _kmeans(inputs, p):
    cfg = clustering.KmeansConfig(
        k=int(p["k"]),
        distance=p.get("distance", "sq_euclidean"),
        restarts=int(p.get("restarts", 5)),
        centers=tuple(p["centers"]) if p.get("centers") else None,
        max_iters=int(p.get("max_iters", 100)),
        tol=float(p.get("tol", 0.5)),
        mask_threshold=float(p.get("mask_threshold", 0.0)),
        seed=int(p.get("seed", 42)),
    )
    return clustering.kmeans_segment(_as_volume(inputs[0]), cfg)


@_op("fcm", 1)
def _fcm(inputs, p):
    cfg = clustering.FcmConfig(
        c=int(p["c"]),
        m=float(p.get("m", 2.0)),
        max_iters=int(p.get("max_iters", 100)),
        tol=float(p.get("tol", 1e-8)),
        mask_threshold=float(p.get("mask_threshold", 0.0)),
        seed=int(p.get("seed", 42)),
    )
    return clustering.fcm_segment(_as_volume(inputs[0]), cfg)


@_op("ede_pipeline", 1)
def _ede(inputs, p):
    cfg = ede.EdeConfig(
        k1=int(p.get("k1", 7)),
        final_k=int(p.get("final_k", 3)),
        mask_threshold=float(p.get("mask_threshold", 0.0)),
        seg_slices=tuple(int(s) for s in p.get("seg_slices", (0, 1))),
        phase_map=_phase_map_from(p.get("map", "default")),
        seed=int(p.get("seed", 42)),
        restarts=int(p.get("restarts", 5)),
    )
    return ede.dual_cluster_pipeline(_as_volume(inputs[0]), cfg)


@_op("extract_features", 1)
def _features(inputs, p):
    table = supervised.TrainingTable.from_csv(p["table"])
    return supervised.extract_features(_as_volume(inputs[0]), table)


@_op("train_lssvm", 1)
def _train_lssvm(inputs, p):
    f = inputs[0]
    return supervised.train_lssvm(
        f, gamma=float(p.get("gamma", 1.0)), sigma2=float(p.get("sigma2", 1000.0)),
        kernel=p.get("kernel", "rbf"), standardize=bool(p.get("standardize", True)),
    )


@_op("train_ensemble", 1)
def _train_ensemble(inputs, p):
    return supervised.train_ensemble(
        inputs[0], method=p.get("method", "bagging"),
        n_learners=int(p.get("n_learners", 50)), max_depth=int(p.get("max_depth", 3)),
        seed=int(p.get("seed", 42)),
    )


@_op("classify", 2)
def _classify(inputs, p):
    model, vol = inputs
    return supervised.classify_volume(model, _as_volume(vol))


@_op("porosity", 1)
def _porosity(inputs, p):
    return {"porosity": petro.porosity(_as_labels(inputs[0]), int(p["pore_class"]))}


@_op("porosity_trend", 1)
def _trend(inputs, p):
    t = petro.porosity_trend(_as_labels(inputs[0]), int(p["pore_class"]))
    return {
        "slice": list(range(len(t.per_slice))),
        "porosity": t.per_slice.tolist(),
        "slope": t.slope, "intercept": t.intercept, "r_squared": t.r_squared,
        "mean": t.mean, "std": t.std,
    }


@_op("volume_fractions", 1)
def _fractions(inputs, p):
    fr = petro.volume_fractions(_as_labels(inputs[0]))
    return {str(k): v for k, v in fr.items()}


@_op("psd", 1)
def _psd(inputs, p):
    labels = _as_labels(inputs[0])
    r = petro.pore_size_distribution(
        labels, int(p["pore_class"]),
        voxel_size=float(p["voxel_size"]) if "voxel_size" in p else None,
        smoothing_sigma=float(p.get("smoothing_sigma", 1.0)),
    )
    return {
        "diameters": r.diameters.tolist(),
        "mean": r.mean, "std": r.std, "region_count": r.region_count,
    }


@_op("rev", 1)
def _rev(inputs, p):
    c = petro.rev_curve(
        _as_labels(inputs[0]), int(p["pore_class"]),
        [int(e) for e in p["edge_lengths"]], band=float(p.get("band", 0.01)),
    )
    return {
        "edge": list(c.edges), "porosity": list(c.porosities),
        "full_porosity": c.full_porosity, "onset_edge": c.onset_edge,
        "hints": list(c.hints),
    }


@_op("entropy", 1)
def _entropy(inputs, p):
    return {"entropy_bits": supervised.segmentation_entropy(_as_labels(inputs[0]))}


@_op("export_vtk", 1)
def _export_vtk(inputs, p):
    src = inputs[0]
    if isinstance(src, (clustering.ClusterResult, ede.EdeResult)):
        src = _as_labels(src)
    volume.export_vtk(src, p["path"], ascii=bool(p.get("ascii", False)))
    return {"file": str(p["path"]), "sha256": hash_file(p["path"])}


@_op("export_raw", 1)
def _export_raw(inputs, p):
    src = inputs[0]
    if isinstance(src, (clustering.ClusterResult, ede.EdeResult, volume.LabelVolume)):
        lab = _as_labels(src)
        src = volume.VoxelVolume(lab.labels.astype(np.uint8), voxel_size=lab.voxel_size)
    volume.export_raw(src, p["path"], byte_order=p.get("byte_order", "little"))
    return {"file": str(p["path"]), "sha256": hash_file(p["path"])}


@_op("export_csv", 1)
def _export_csv(inputs, p):
    table = inputs[0]
    if not isinstance(table, dict):
        raise ConfigError("export_csv expects a table-producing input stage")
    cols = {k: v for k, v in table.items() if isinstance(v, (list, tuple))}
    if not cols:
        cols = {k: [v] for k, v in table.items()}
    volume.export_csv(cols, p["path"])
    return {"file": str(p["path"]), "sha256": hash_file(p["path"])}


def validate_config(cfg: dict) -> list[dict]:
    stages = cfg.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError("stages: must be a non-empty list")
    seen = set()
    normalized = []
    for i, st in enumerate(stages):
        where = f"stages[{i}]"
        if not isinstance(st, dict):
            raise ConfigError(f"{where}: must be a mapping")
        op = st.get("op")
        if op not in _OPS:
            raise ConfigError(f"{where}.op: unknown operation {op!r}")
        name = st.get("name", op if op not in seen else f"{op}_{i}")
        if name in seen:
            raise ConfigError(f"{where}.name: duplicate stage name {name!r}")
        n_inputs, _ = _OPS[op]
        inputs = st.get("inputs")
        if inputs is None:
            single = st.get("input")
            inputs = [single] if single is not None else []
        if n_inputs and not inputs:
            if not normalized:
                raise ConfigError(f"{where}.input: first stage cannot consume a previous one")
            inputs = [normalized[-1]["name"]]  # default: previous stage
        if len(inputs) != n_inputs:
            raise ConfigError(
                f"{where}.inputs: op {op!r} takes {n_inputs} input(s), got {len(inputs)}"
            )
        for ref in inputs:
            if ref not in seen:
                raise ConfigError(f"{where}.inputs: unknown stage reference {ref!r}")
        params = st.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{where}.params: must be a mapping")
        seen.add(name)
        normalized.append({"name": name, "op": op, "inputs": list(inputs), "params": params})
    return normalized


def run_config(cfg: dict, base_dir: str | os.PathLike = ".") -> dict:
    """Execute a validated stage chain; returns (manifest with artifacts).

    The manifest records the config digest, per-stage parameters and output
    hashes, and hashes of every file read or written.
    """
    base = Path(base_dir)
    stages = validate_config(cfg)
    seed = cfg.get("seed")
    artifacts: dict[str, Any] = {}
    records = []
    file_inputs: dict[str, str] = {}
    file_outputs: dict[str, str] = {}
    for st in stages:
        params = dict(st["params"])
        if seed is not None and st["op"] in ("kmeans", "fcm", "ede_pipeline", "train_ensemble"):
            params.setdefault("seed", int(seed))
        for key in ("path", "table"):
            if key in params and st["op"].startswith(("load", "extract")):
                params[key] = str(base / params[key])
                file_inputs[params[key]] = hash_file(params[key])
        if "paths" in params:
            params["paths"] = [str(base / p) for p in params["paths"]]
            for p in params["paths"]:
                file_inputs[p] = hash_file(p)
        if "path" in params and st["op"].startswith("export"):
            params["path"] = str(base / params["path"])
            Path(params["path"]).parent.mkdir(parents=True, exist_ok=True)
        n_inputs, handler = _OPS[st["op"]]
        inputs = [artifacts[r] for r in st["inputs"]]
        try:
            out = handler(inputs, params)
        except Exception as exc:
            raise TomosegError(f"stage {st['name']!r} ({st['op']}) failed: {exc}") from exc
        artifacts[st["name"]] = out
        if isinstance(out, dict) and "file" in out and "sha256" in out:
            file_outputs[out["file"]] = out["sha256"]
        records.append(
            {
                "name": st["name"],
                "op": st["op"],
                "inputs": st["inputs"],
                "params": params,
                "output_hash": hash_artifact(out),
            }
        )
    manifest = {
        "config_digest": _sha256(json.dumps(cfg, sort_keys=True, default=_json_fallback).encode()),
        "seed": seed,
        "stages": records,
        "file_inputs": file_inputs,
        "file_outputs": file_outputs,
    }
    manifest["_artifacts"] = artifacts  # in-memory handles, not serialized
    return manifest


def write_manifest(manifest: dict, path: str | os.PathLike) -> None:
    clean = {k: v for k, v in manifest.items() if not k.startswith("_")}
    Path(path).write_text(json.dumps(clean, indent=2, sort_keys=True), encoding="utf-8")
