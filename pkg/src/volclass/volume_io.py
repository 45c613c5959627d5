"""Raw volume loading with a flat key/value sidecar descriptor.

A volume on disk is a headerless binary file of ``nx*ny*nz`` voxels in
x-fastest order, plus a text sidecar such as::

    dims = 64 64 64
    type = u16
    endian = little
    spacing = 1 1 1

Every voxel type is widened to float64 on load.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMeta, IoFailure, SizeMismatch

VOXEL_TYPES = {
    "u8": np.dtype("u1"),
    "u16": np.dtype("u2"),
    "i16": np.dtype("i2"),
    "f32": np.dtype("f4"),
}

_TYPE_ALIASES = {
    "uint8": "u8",
    "unsigned-8-bit": "u8",
    "uint16": "u16",
    "unsigned-16-bit": "u16",
    "int16": "i16",
    "signed-16-bit": "i16",
    "float32": "f32",
    "float-32": "f32",
    "float": "f32",
}

SIDECAR_SUFFIX = ".meta"


def canonical_voxel_type(name: str) -> str:
    key = name.strip().lower()
    key = _TYPE_ALIASES.get(key, key)
    if key not in VOXEL_TYPES:
        raise BadMeta(f"unknown voxel type {name!r}; expected one of {sorted(VOXEL_TYPES)}")
    return key


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple[int, int, int]
    voxel_type: str = "u8"
    endianness: str = "little"
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise BadMeta(f"dims must be three positive integers, got {self.dims!r}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise BadMeta(f"spacing must be three positive numbers, got {self.spacing!r}")
        endian = self.endianness.strip().lower()
        if endian not in ("little", "big"):
            raise BadMeta(f"endianness must be 'little' or 'big', got {self.endianness!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "voxel_type", canonical_voxel_type(self.voxel_type))
        object.__setattr__(self, "endianness", endian)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def dtype(self) -> np.dtype:
        dt = VOXEL_TYPES[self.voxel_type]
        return dt.newbyteorder("<" if self.endianness == "little" else ">")

    @property
    def nbytes(self) -> int:
        return self.n_voxels * self.dtype.itemsize


@dataclass(frozen=True)
class Volume:
    """Immutable scalar grid; ``voxels`` is flat, x varies fastest."""

    meta: VolumeMeta
    voxels: np.ndarray = field(repr=False)

    def __post_init__(self):
        vox = np.array(self.voxels, dtype=np.float64, copy=True, order="C").reshape(-1)
        if vox.size != self.meta.n_voxels:
            raise SizeMismatch(f"expected {self.meta.n_voxels} voxels, got {vox.size}")
        if not np.all(np.isfinite(vox)):
            raise BadMeta("volume contains non-finite voxel values")
        vox.setflags(write=False)
        object.__setattr__(self, "voxels", vox)

    @classmethod
    def from_array(cls, array, spacing=(1.0, 1.0, 1.0), voxel_type="f32") -> "Volume":
        """Wrap a 3D array indexed ``[z, y, x]``."""
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 3:
            raise BadMeta(f"expected a 3D array, got shape {arr.shape}")
        nz, ny, nx = arr.shape
        meta = VolumeMeta((nx, ny, nz), voxel_type, "little", spacing)
        return cls(meta, arr.reshape(-1))

    @property
    def array(self) -> np.ndarray:
        """Read-only view shaped ``(nz, ny, nx)``."""
        nx, ny, nz = self.meta.dims
        return self.voxels.reshape(nz, ny, nx)


def load_volume(data_path, meta: VolumeMeta) -> Volume:
    path = Path(data_path)
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if size != meta.nbytes:
        raise SizeMismatch(
            f"{path}: file has {size} bytes, dims {meta.dims} of type {meta.voxel_type} need {meta.nbytes}"
        )
    try:
        raw = np.fromfile(path, dtype=meta.dtype)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return Volume(meta, raw.astype(np.float64))


def save_volume(volume: Volume, data_path, voxel_type: str | None = None, endianness: str = "little") -> VolumeMeta:
    """Write raw voxels plus sidecar; returns the metadata that was written."""
    vtype = canonical_voxel_type(voxel_type or volume.meta.voxel_type)
    meta = VolumeMeta(volume.meta.dims, vtype, endianness, volume.meta.spacing)
    path = Path(data_path)
    data = volume.voxels
    if meta.dtype.kind in "ui":
        info = np.iinfo(meta.dtype)
        data = np.clip(np.rint(data), info.min, info.max)
    try:
        data.astype(meta.dtype).tofile(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    write_meta(meta, sidecar_path(path))
    return meta


def intensity_range(v: Volume) -> tuple[float, float]:
    return float(v.voxels.min()), float(v.voxels.max())


def sidecar_path(data_path) -> Path:
    return Path(data_path).with_suffix(SIDECAR_SUFFIX)


def parse_meta(text: str, **overrides) -> VolumeMeta:
    """Parse sidecar text; keyword overrides (dims, type, endian, spacing) win."""
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise BadMeta(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        fields[key.lower()] = value
    for key, value in overrides.items():
        if value is not None:
            fields[key] = value
    unknown = set(fields) - {"dims", "type", "endian", "spacing"}
    if unknown:
        raise BadMeta(f"unknown sidecar keys: {sorted(unknown)}")
    if "dims" not in fields:
        raise BadMeta("missing 'dims'")
    if "type" not in fields:
        raise BadMeta("missing 'type'")
    return VolumeMeta(
        dims=_triple(fields["dims"], int, "dims"),
        voxel_type=fields["type"],
        endianness=fields.get("endian", "little"),
        spacing=_triple(fields.get("spacing", "1 1 1"), float, "spacing"),
    )


def _triple(value, conv, name):
    if isinstance(value, str):
        parts = value.replace(",", " ").replace("x", " ").split()
    else:
        parts = list(value)
    try:
        out = tuple(conv(p) for p in parts)
    except ValueError as exc:
        raise BadMeta(f"bad {name} value {value!r}") from exc
    if len(out) != 3:
        raise BadMeta(f"{name} needs three components, got {value!r}")
    return out


def read_meta(path, **overrides) -> VolumeMeta:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        text = ""
        if not any(v is not None for v in overrides.values()):
            raise IoFailure(f"sidecar {path} not found")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_meta(text, **overrides)


def write_meta(meta: VolumeMeta, path) -> None:
    nx, ny, nz = meta.dims
    sx, sy, sz = meta.spacing
    text = (
        f"dims = {nx} {ny} {nz}\n"
        f"type = {meta.voxel_type}\n"
        f"endian = {meta.endianness}\n"
        f"spacing = {sx!r} {sy!r} {sz!r}\n"
    )
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def open_volume(data_path, **overrides) -> Volume:
    """Load ``data_path`` using its sidecar, with optional field overrides."""
    meta = read_meta(sidecar_path(data_path), **overrides)
    return load_volume(data_path, meta)

