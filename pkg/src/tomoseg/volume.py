"""Voxel volumes: ingest, crop, downsample, and export.

Arrays are stored slice-major: ``data[z, y, x]`` with x the fastest axis,
matching the raw-file layout (slices written sequentially, x fastest within
a slice).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BoundsError,
    DimensionMismatchError,
    ParameterError,
    UnsupportedFormatError,
)

_DTYPES = {8: np.uint8, 16: np.uint16}


@dataclass(frozen=True)
class VoxelVolume:
    """3D grid of scalar intensities.

    Parameters
    ----------
    data : ndarray, shape (nz, ny, nx), uint8 or uint16
        Intensities, slice-major with x fastest.
    voxel_size : float
        Edge length of one (isotropic) voxel in micrometers.
    """

    data: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ParameterError(f"volume data must be 3D, got ndim={self.data.ndim}")
        if self.data.dtype not in (np.uint8, np.uint16):
            raise ParameterError(f"volume dtype must be uint8/uint16, got {self.data.dtype}")
        if not self.voxel_size > 0:
            raise ParameterError(f"voxel_size must be positive, got {self.voxel_size}")

    @property
    def nz(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nx(self) -> int:
        return self.data.shape[2]

    @property
    def bit_depth(self) -> int:
        return 8 if self.data.dtype == np.uint8 else 16

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box: start voxel (inclusive) plus extents."""

    x0: int
    y0: int
    z0: int
    dx: int
    dy: int
    dz: int

    def __post_init__(self):
        if min(self.dx, self.dy, self.dz) < 1:
            raise ParameterError(f"ROI extents must be >= 1, got {(self.dx, self.dy, self.dz)}")
        if min(self.x0, self.y0, self.z0) < 0:
            raise ParameterError(f"ROI origin must be >= 0, got {(self.x0, self.y0, self.z0)}")

    def check_within(self, shape: tuple[int, int, int]) -> None:
        nz, ny, nx = shape
        if self.x0 + self.dx > nx or self.y0 + self.dy > ny or self.z0 + self.dz > nz:
            raise BoundsError(
                f"ROI origin=({self.x0},{self.y0},{self.z0}) extents=({self.dx},{self.dy},{self.dz}) "
                f"exceeds volume dims (nx={nx}, ny={ny}, nz={nz})"
            )


@dataclass(frozen=True)
class LabelVolume:
    """3D grid of class labels; 0 is reserved for masked/background voxels."""

    labels: np.ndarray
    k: int
    voxel_size: float = 1.0
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.labels.ndim != 3:
            raise ParameterError(f"label data must be 3D, got ndim={self.labels.ndim}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ParameterError(f"labels must be integer, got {self.labels.dtype}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        lmax = int(self.labels.max(initial=0))
        if lmax > self.k or int(self.labels.min(initial=0)) < 0:
            raise ParameterError(f"labels must lie in 0..{self.k}, found max {lmax}")
        if self.class_names is not None and len(self.class_names) != self.k:
            raise ParameterError("class_names length must equal k")

    @property
    def nz(self) -> int:
        return self.labels.shape[0]

    @property
    def ny(self) -> int:
        return self.labels.shape[1]

    @property
    def nx(self) -> int:
        return self.labels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape


def load_raw(
    path: str | os.PathLike,
    nx: int,
    ny: int,
    nz: int,
    bit_depth: int = 16,
    byte_order: str = "little",
    voxel_size: float = 1.0,
    transpose_xy: bool = False,
) -> VoxelVolume:
    """Read a headerless raw volume.

    Slices are stored sequentially, x fastest within each slice. Set
    ``transpose_xy`` for files written y-fastest.
    """
    if min(nx, ny, nz) < 1:
        raise ParameterError(f"dims must be positive, got ({nx},{ny},{nz})")
    if bit_depth not in _DTYPES:
        raise ParameterError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if byte_order not in ("little", "big"):
        raise ParameterError(f"byte_order must be 'little' or 'big', got {byte_order!r}")
    n = nx * ny * nz
    expected = n * (bit_depth // 8)
    actual = os.path.getsize(path)
    if actual < expected:
        raise DimensionMismatchError(
            f"{path}: need at least {expected} bytes for {nx}x{ny}x{nz} at {bit_depth}-bit, "
            f"file has {actual}"
        )
    dtype = np.dtype(f"{'<' if byte_order == 'little' else '>'}u{bit_depth // 8}")
    flat = np.fromfile(path, dtype=dtype, count=n)
    if transpose_xy:
        data = flat.reshape(nz, nx, ny).swapaxes(1, 2)
    else:
        data = flat.reshape(nz, ny, nx)
    # normalize to native byte order in memory
    data = np.ascontiguousarray(data).astype(_DTYPES[bit_depth], copy=False)
    return VoxelVolume(data=data, voxel_size=voxel_size)


def export_raw(vol: VoxelVolume, path: str | os.PathLike, byte_order: str = "little") -> None:
    """Write the byte inverse of :func:`load_raw` (same geometry, same order)."""
    if byte_order not in ("little", "big"):
        raise ParameterError(f"byte_order must be 'little' or 'big', got {byte_order!r}")
    dtype = np.dtype(f"{'<' if byte_order == 'little' else '>'}u{vol.bit_depth // 8}")
    np.ascontiguousarray(vol.data).astype(dtype).tofile(path)


def load_tiff_stack(paths: Sequence[str | os.PathLike], voxel_size: float = 1.0) -> VoxelVolume:
    """Stack grayscale TIFF slices in the given order.

    Only single-channel 8/16-bit images are accepted; all slices must share
    shape and dtype.
    """
    import tifffile

    if not paths:
        raise ParameterError("need at least one TIFF path")
    slices = []
    ref_shape = None
    ref_dtype = None
    for p in paths:
        img = tifffile.imread(p)
        if img.ndim != 2:
            raise UnsupportedFormatError(
                f"{p}: expected single-channel grayscale TIFF, got shape {img.shape}"
            )
        if img.dtype not in (np.uint8, np.uint16):
            raise UnsupportedFormatError(f"{p}: expected 8/16-bit samples, got {img.dtype}")
        if ref_shape is None:
            ref_shape, ref_dtype = img.shape, img.dtype
        elif img.shape != ref_shape or img.dtype != ref_dtype:
            raise DimensionMismatchError(
                f"{p}: slice is {img.shape} {img.dtype}, first slice was {ref_shape} {ref_dtype}"
            )
        slices.append(img)
    return VoxelVolume(data=np.stack(slices, axis=0), voxel_size=voxel_size)


def crop(vol: VoxelVolume, roi: Roi) -> VoxelVolume:
    """Extract the ROI; voxel size is preserved."""
    roi.check_within(vol.shape)
    sub = vol.data[
        roi.z0 : roi.z0 + roi.dz, roi.y0 : roi.y0 + roi.dy, roi.x0 : roi.x0 + roi.dx
    ].copy()
    return VoxelVolume(data=sub, voxel_size=vol.voxel_size)


def crop_labels(lab: LabelVolume, roi: Roi) -> LabelVolume:
    roi.check_within(lab.shape)
    sub = lab.labels[
        roi.z0 : roi.z0 + roi.dz, roi.y0 : roi.y0 + roi.dy, roi.x0 : roi.x0 + roi.dx
    ].copy()
    return LabelVolume(labels=sub, k=lab.k, voxel_size=lab.voxel_size, class_names=lab.class_names)


def downsample(vol: VoxelVolume, factor: int) -> VoxelVolume:
    """Block-mean reduction by an integer factor.

    Output dims are ceil(dim/factor); border blocks smaller than factor are
    averaged over the voxels present, so no data is dropped. Voxel size is
    multiplied by factor.
    """
    if factor < 1:
        raise ParameterError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return VoxelVolume(data=vol.data.copy(), voxel_size=vol.voxel_size)
    acc = vol.data.astype(np.float64)
    counts = []
    for ax in range(3):
        n = acc.shape[ax]
        starts = np.arange(0, n, factor)
        acc = np.add.reduceat(acc, starts, axis=ax)
        counts.append(np.diff(np.append(starts, n)).astype(np.float64))
    denom = counts[0][:, None, None] * counts[1][None, :, None] * counts[2][None, None, :]
    out = np.rint(acc / denom).astype(vol.data.dtype)
    return VoxelVolume(data=out, voxel_size=vol.voxel_size * factor)


_VTK_TYPE = {np.dtype(np.uint8): "unsigned_char", np.dtype(np.uint16): "unsigned_short"}


def export_vtk(
    vol: VoxelVolume | LabelVolume,
    path: str | os.PathLike,
    ascii: bool = False,
    scalar_name: str | None = None,
) -> None:
    """Write a legacy VTK STRUCTURED_POINTS file.

    Labels are written as unsigned_char (class counts here never exceed 255);
    intensities keep their sample width. Binary payloads are big-endian per
    the legacy VTK convention; point order is x fastest, then y, then z.
    """
    if isinstance(vol, LabelVolume):
        data = vol.labels.astype(np.uint8)
        name = scalar_name or "labels"
    else:
        data = vol.data
        name = scalar_name or "intensity"
    if data.size == 0:
        raise ParameterError("refusing to export an empty volume")
    nz, ny, nx = data.shape
    s = vol.voxel_size
    header = (
        "# vtk DataFile Version 3.0\n"
        "tomoseg volume\n"
        f"{'ASCII' if ascii else 'BINARY'}\n"
        "DATASET STRUCTURED_POINTS\n"
        f"DIMENSIONS {nx} {ny} {nz}\n"
        f"SPACING {s:g} {s:g} {s:g}\n"
        "ORIGIN 0 0 0\n"
        f"POINT_DATA {nx * ny * nz}\n"
        f"SCALARS {name} {_VTK_TYPE[data.dtype]}\n"
        "LOOKUP_TABLE default\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        flat = data.ravel()  # C order over (z, y, x) == x fastest
        if ascii:
            lines = []
            for i in range(0, flat.size, 9):
                lines.append(" ".join(str(int(v)) for v in flat[i : i + 9]))
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
        else:
            fh.write(flat.astype(flat.dtype.newbyteorder(">")).tobytes())


def export_csv(table: Mapping[str, Sequence], path: str | os.PathLike) -> None:
    """Write named numeric columns as a UTF-8 CSV (header row first)."""
    cols = list(table.keys())
    lengths = {len(table[c]) for c in cols}
    if len(lengths) > 1:
        raise ParameterError(f"columns have unequal lengths: { {c: len(table[c]) for c in cols} }")
    nrows = lengths.pop() if lengths else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(nrows):
            writer.writerow([table[c][i] for c in cols])
