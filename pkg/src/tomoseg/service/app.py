"""HTTP job API driven by the browser UI.

JSON over HTTP/1.1; slices are delivered as 8-bit PNGs with server-side
display windowing so the client never recomputes science. Jobs run
asynchronously with pollable progress and append-only history.
"""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field

from .. import supervised
from ..errors import TomosegError
from ..volume import (
    LabelVolume,
    Roi,
    VoxelVolume,
    export_csv,
    export_raw,
    export_vtk,
    load_raw,
    load_tiff_stack,
)
from .jobs import JOB_KINDS, Job, Session, SessionStore, compute_metric

# fixed categorical palette for label rendering (RGB)
LABEL_PALETTE = np.array(
    [
        (0, 0, 0),        # 0: masked
        (31, 119, 180),   # 1
        (44, 160, 44),    # 2
        (214, 39, 40),    # 3
        (255, 127, 14),   # 4
        (148, 103, 189),  # 5
        (140, 86, 75),    # 6
        (227, 119, 194),  # 7
        (188, 189, 34),   # 8
    ],
    dtype=np.uint8,
)


class VolumeSource(BaseModel):
    format: Literal["raw", "tiff"]
    path: str | None = None
    paths: list[str] | None = None
    nx: int | None = Field(default=None, ge=1)
    ny: int | None = Field(default=None, ge=1)
    nz: int | None = Field(default=None, ge=1)
    bit_depth: Literal[8, 16] = 16
    byte_order: Literal["little", "big"] = "little"
    voxel_size: float = Field(default=1.0, gt=0)
    transpose_xy: bool = False


class RoiBody(BaseModel):
    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    z0: int = Field(ge=0)
    dx: int = Field(ge=1)
    dy: int = Field(ge=1)
    dz: int = Field(ge=1)


class TrainingRowBody(BaseModel):
    class_id: int = Field(ge=1)
    feature_name: str
    x: int
    y: int
    slice: int


class TrainingTableBody(BaseModel):
    rows: list[TrainingRowBody]


class JobRequest(BaseModel):
    kind: Literal["filter", "segment", "ede", "analyze", "classify"]
    params: dict = Field(default_factory=dict)


def _png_bytes(arr: np.ndarray, mode: str) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def render_slice(
    vol: VoxelVolume | LabelVolume, z: int, window: tuple[float, float] | None
) -> bytes:
    """Pure function of (volume, z, window, palette) returning PNG bytes."""
    if not (0 <= z < vol.shape[0]):
        raise HTTPException(404, f"slice {z} outside stack (nz={vol.shape[0]})")
    if isinstance(vol, LabelVolume):
        sl = vol.labels[z]
        rgb = LABEL_PALETTE[sl % len(LABEL_PALETTE)]
        return _png_bytes(rgb, "RGB")
    sl = vol.data[z].astype(np.float64)
    if window is None:
        lo, hi = float(vol.data.min()), float(vol.data.max())
    else:
        lo, hi = window
    if hi <= lo:
        raise HTTPException(400, f"display window must satisfy lo < hi, got ({lo}, {hi})")
    norm = np.clip((sl - lo) / (hi - lo), 0.0, 1.0)
    return _png_bytes(np.rint(norm * 255).astype(np.uint8), "L")


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="tomoseg service", version="0.1.0")
    store = SessionStore()
    app.state.store = store
    app.state.data_dir = Path(data_dir) if data_dir else None

    def get_session(session: str) -> Session:
        s = store.get(session)
        if s is None:
            raise HTTPException(404, f"unknown session {session!r}")
        return s

    @app.post("/volume")
    def register_volume(body: VolumeSource):
        base = app.state.data_dir or Path(".")
        try:
            if body.format == "raw":
                if not (body.path and body.nx and body.ny and body.nz):
                    raise HTTPException(400, "raw sources need path, nx, ny, nz")
                vol = load_raw(
                    base / body.path, nx=body.nx, ny=body.ny, nz=body.nz,
                    bit_depth=body.bit_depth, byte_order=body.byte_order,
                    voxel_size=body.voxel_size, transpose_xy=body.transpose_xy,
                )
            else:
                if not body.paths:
                    raise HTTPException(400, "tiff sources need paths")
                vol = load_tiff_stack([base / p for p in body.paths], voxel_size=body.voxel_size)
        except TomosegError as exc:
            raise HTTPException(400, str(exc)) from exc
        except OSError as exc:
            raise HTTPException(400, f"cannot read source: {exc}") from exc
        s = store.create()
        with s.lock:
            s.volumes["raw"] = vol
        return {
            "session": s.id,
            "geometry": {"nx": vol.nx, "ny": vol.ny, "nz": vol.nz,
                         "bit_depth": vol.bit_depth, "voxel_size": vol.voxel_size},
        }

    @app.get("/slice/{z}")
    def get_slice(
        z: int,
        session: str,
        layer: str = "raw",
        window: str | None = Query(default=None, pattern=r"^-?[\d.]+,-?[\d.]+$"),
    ):
        s = get_session(session)
        with s.lock:
            target = s.volumes.get(layer) or s.labels.get(layer)
        if target is None:
            raise HTTPException(404, f"no layer named {layer!r}")
        win = None
        if window is not None:
            lo, hi = (float(v) for v in window.split(","))
            win = (lo, hi)
        png = render_slice(target, z, win)
        headers = {"X-Volume-Dims": f"{target.shape[2]},{target.shape[1]},{target.shape[0]}"}
        return Response(content=png, media_type="image/png", headers=headers)

    @app.put("/roi")
    def put_roi(body: RoiBody, session: str):
        s = get_session(session)
        with s.lock:
            vol = s.volumes.get("raw")
            if vol is None:
                raise HTTPException(400, "no volume loaded")
            roi = Roi(**body.model_dump())
            try:
                roi.check_within(vol.shape)
            except TomosegError as exc:
                raise HTTPException(400, str(exc)) from exc
            s.roi = roi
        return {"roi": body.model_dump()}

    @app.get("/roi")
    def get_roi(session: str):
        s = get_session(session)
        with s.lock:
            if s.roi is None:
                return {"roi": None}
            r = s.roi
            return {"roi": {"x0": r.x0, "y0": r.y0, "z0": r.z0,
                            "dx": r.dx, "dy": r.dy, "dz": r.dz}}

    @app.put("/training-table")
    def put_training_table(body: TrainingTableBody, session: str):
        s = get_session(session)
        if not body.rows:
            raise HTTPException(400, "training table needs at least one row")
        table = supervised.TrainingTable(
            rows=tuple(
                supervised.TrainingRow(
                    class_id=r.class_id, feature_name=r.feature_name,
                    x=r.x, y=r.y, slice=r.slice,
                )
                for r in body.rows
            )
        )
        with s.lock:
            vol = s.volumes.get("raw")
            if vol is None:
                raise HTTPException(400, "no volume loaded")
            try:
                table.validate_against(vol)
            except TomosegError as exc:
                raise HTTPException(400, str(exc)) from exc
            s.training_table = table
        return {"rows": len(body.rows), "classes": sorted(table.classes)}

    @app.get("/training-table")
    def get_training_table(session: str):
        s = get_session(session)
        with s.lock:
            t = s.training_table
        if t is None:
            return {"rows": []}
        return {
            "rows": [
                {"class_id": r.class_id, "feature_name": r.feature_name,
                 "x": r.x, "y": r.y, "slice": r.slice}
                for r in t.rows
            ]
        }

    @app.post("/jobs", status_code=202)
    def post_job(body: JobRequest, session: str):
        s = get_session(session)
        if body.kind not in JOB_KINDS:
            raise HTTPException(422, f"unknown job kind {body.kind!r}")
        job = Job(kind=body.kind, params=body.params)
        s.submit(job)  # a second concurrent job queues behind the first
        return {"job": job.id, "state": job.state}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        found = store.find_job(job_id)
        if found is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        _, job = found
        return job.snapshot()

    @app.delete("/jobs/{job_id}")
    def cancel_job(job_id: str):
        found = store.find_job(job_id)
        if found is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        _, job = found
        job.cancel_event.set()
        job.log("cancellation requested")
        return {"job": job_id, "state": job.state}

    @app.get("/metrics/{label_volume}")
    def get_metrics(
        label_volume: str,
        session: str,
        op: Literal["porosity", "psd", "fractions", "trend", "rev", "entropy"] = "porosity",
        pore_class: int = 1,
        voxel_size: float | None = None,
        edge_lengths: str | None = None,
        band: float = 0.01,
    ):
        s = get_session(session)
        with s.lock:
            lab = s.labels.get(label_volume)
        if lab is None:
            raise HTTPException(404, f"no label volume named {label_volume!r}")
        params: dict = {"pore_class": pore_class, "band": band}
        if voxel_size is not None:
            params["voxel_size"] = voxel_size
        if edge_lengths:
            params["edge_lengths"] = [int(e) for e in edge_lengths.split(",")]
        elif op == "rev":
            raise HTTPException(422, "rev needs edge_lengths=e1,e2,...")
        try:
            return compute_metric(lab, op, params)
        except TomosegError as exc:
            raise HTTPException(422, str(exc)) from exc

    @app.get("/export/{artifact}")
    def export_artifact(
        artifact: str, session: str, format: Literal["vtk", "raw", "csv", "json"] = "vtk",
        ascii: bool = False,
    ):
        s = get_session(session)
        with s.lock:
            obj = (
                s.volumes.get(artifact)
                or s.labels.get(artifact)
                or s.tables.get(artifact)
            )
        if obj is None:
            raise HTTPException(404, f"no artifact named {artifact!r}")
        buf_path = io.BytesIO()
        if isinstance(obj, (VoxelVolume, LabelVolume)):
            import tempfile

            with tempfile.NamedTemporaryFile(suffix=f".{format}") as tmp:
                if format == "vtk":
                    export_vtk(obj, tmp.name, ascii=ascii)
                    media = "application/octet-stream"
                elif format == "raw":
                    if isinstance(obj, LabelVolume):
                        export_raw(
                            VoxelVolume(obj.labels.astype(np.uint8), voxel_size=obj.voxel_size),
                            tmp.name,
                        )
                    else:
                        export_raw(obj, tmp.name)
                    media = "application/octet-stream"
                else:
                    raise HTTPException(422, f"volumes export as vtk or raw, not {format}")
                payload = Path(tmp.name).read_bytes()
            return Response(
                content=payload, media_type=media,
                headers={"Content-Disposition": f'attachment; filename="{artifact}.{format}"'},
            )
        # table artifacts
        if format == "json":
            return obj
        if format != "csv":
            raise HTTPException(422, f"tables export as csv or json, not {format}")
        cols = {k: v for k, v in obj.items() if isinstance(v, (list, tuple))}
        if not cols:
            cols = {k: [v] for k, v in obj.items()}
        n = max(len(v) for v in cols.values())
        cols = {k: list(v) + [""] * (n - len(v)) for k, v in cols.items()}
        import csv as _csv

        sio = io.StringIO()
        w = _csv.writer(sio)
        w.writerow(cols.keys())
        for i in range(n):
            w.writerow([cols[k][i] for k in cols])
        return Response(
            content=sio.getvalue(), media_type="text/csv",
            headers={"Content-Disposition": f'attachment; filename="{artifact}.csv"'},
        )

    return app
