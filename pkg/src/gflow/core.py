"""Point-cloud types, label conventions, and file I/O.

Coordinates are stored in double precision throughout: survey-scale XY
values do not fit single-precision ULPs. Labels use the fixed encoding
Outlier=0, NonGround=1, Ground=2; on ingestion outliers are relabeled to
non-ground by default so the codes 1/2 line up with the two classes every
downstream metric expects.

Two file formats are supported:

* ``.xyzl`` text: optional header line ``#xyzl:channel,...``, then one
  whitespace-separated record ``x y z label [channel values...]`` per line.
* ``.gfb`` binary: magic ``GFB1``, little-endian, u64 point count, a channel
  directory, f64 coordinates, u8 labels, then channel payloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import CloudIOError, CloudParseError, ValidationError

GFB_MAGIC = b"GFB1"

# Channel payload codes used by the .gfb directory.
_DTYPE_F64 = 0
_DTYPE_I64 = 1


class ClassLabel(IntEnum):
    OUTLIER = 0
    NON_GROUND = 1
    GROUND = 2


class Point3(NamedTuple):
    """A single point; x/y/z in meters, z is elevation."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Bounds2:
    """Axis-aligned XY bounding box in meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x <= self.max_x and self.min_y <= self.max_y):
            raise ValidationError(
                f"bounds min must not exceed max: {self}"
            )


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LabeledCloud:
    """Immutable point cloud with per-point class labels and optional channels.

    ``xyz`` is an (N, 3) float64 array, ``labels`` an (N,) uint8 array of
    :class:`ClassLabel` codes. Channels are named (N,) arrays; the known
    ones are ``hag_meters`` (float, >= 0), ``hag_bin`` (int) and
    ``ground_prob`` (float in [0, 1]).
    """

    xyz: np.ndarray
    labels: np.ndarray
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValidationError(f"xyz must be (N, 3), got {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise ValidationError("coordinates must be finite")
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.shape != (xyz.shape[0],):
            raise ValidationError(
                f"labels length {labels.shape} does not match {xyz.shape[0]} points"
            )
        valid = {int(v) for v in ClassLabel}
        present = set(np.unique(labels).tolist())
        if not present <= valid:
            raise ValidationError(f"unknown label codes: {sorted(present - valid)}")
        channels = {}
        for name, values in dict(self.channels).items():
            values = np.ascontiguousarray(values)
            if values.shape != (xyz.shape[0],):
                raise ValidationError(
                    f"channel {name!r} length {values.shape} does not match point count"
                )
            if values.dtype.kind == "f":
                values = values.astype(np.float64, copy=False)
            elif values.dtype.kind in "iu":
                values = values.astype(np.int64, copy=False)
            else:
                raise ValidationError(f"channel {name!r} has unsupported dtype {values.dtype}")
            channels[name] = _as_readonly(values)
        self._validate_known_channels(channels)
        object.__setattr__(self, "xyz", _as_readonly(xyz))
        object.__setattr__(self, "labels", _as_readonly(labels))
        object.__setattr__(self, "channels", channels)

    @staticmethod
    def _validate_known_channels(channels: Mapping[str, np.ndarray]) -> None:
        if "ground_prob" in channels:
            p = channels["ground_prob"]
            if p.size and (p.min() < 0.0 or p.max() > 1.0):
                raise ValidationError("ground_prob values must lie in [0, 1]")
        if "hag_meters" in channels:
            h = channels["hag_meters"]
            if h.size and h.min() < 0.0:
                raise ValidationError("hag_meters values must be nonnegative")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def point(self, i: int) -> Point3:
        x, y, z = self.xyz[i]
        return Point3(float(x), float(y), float(z))

    def take(self, indices: np.ndarray) -> "LabeledCloud":
        """New cloud containing the given points, channels sliced alongside."""
        indices = np.asarray(indices)
        return LabeledCloud(
            self.xyz[indices],
            self.labels[indices],
            {name: values[indices] for name, values in self.channels.items()},
        )

    def with_channel(self, name: str, values: np.ndarray) -> "LabeledCloud":
        """New cloud with one channel added or replaced."""
        channels = dict(self.channels)
        channels[name] = np.asarray(values)
        return LabeledCloud(self.xyz, self.labels, channels)


def relabel_outliers(cloud: LabeledCloud) -> LabeledCloud:
    """Map Outlier (0) to NonGround (1), leaving everything else untouched."""
    labels = cloud.labels.copy()
    labels[labels == ClassLabel.OUTLIER] = ClassLabel.NON_GROUND
    return LabeledCloud(cloud.xyz, labels, dict(cloud.channels))


def bounds(cloud: LabeledCloud) -> Bounds2:
    """Tight XY bounding box of a non-empty cloud."""
    if len(cloud) == 0:
        raise ValidationError("cannot compute bounds of an empty cloud")
    mins = cloud.xyz[:, :2].min(axis=0)
    maxs = cloud.xyz[:, :2].max(axis=0)
    return Bounds2(float(mins[0]), float(mins[1]), float(maxs[0]), float(maxs[1]))


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("xyzl-text", "packed-binary"):
            raise CloudIOError(f"unknown cloud format {fmt!r}")
        return fmt
    if path.suffix == ".gfb":
        return "packed-binary"
    return "xyzl-text"


def read_cloud(path, fmt: str | None = None, relabel: bool = True) -> LabeledCloud:
    """Read a labeled cloud from ``path``.

    Format is inferred from the extension unless given explicitly
    (``xyzl-text`` or ``packed-binary``). With ``relabel`` on (the default),
    Outlier labels are rewritten to NonGround on ingestion.
    """
    path = Path(path)
    if not path.exists():
        raise CloudIOError(f"no such file: {path}")
    fmt = _infer_format(path, fmt)
    if fmt == "packed-binary":
        cloud = _read_gfb(path)
    else:
        cloud = _read_xyzl(path)
    if relabel:
        cloud = relabel_outliers(cloud)
    return cloud


def write_cloud(cloud: LabeledCloud, path, fmt: str | None = None) -> None:
    """Write a cloud; the format round-trips with :func:`read_cloud`."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "packed-binary":
        _write_gfb(cloud, path)
    else:
        _write_xyzl(cloud, path)


def _read_xyzl(path: Path) -> LabeledCloud:
    channel_names: list[str] = []
    xs, ys, zs, labels = [], [], [], []
    channel_cols: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = True
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if first:
                first = False
                if line.startswith("#xyzl"):
                    rest = line[len("#xyzl"):]
                    if rest.startswith(":"):
                        channel_names = [c for c in rest[1:].split(",") if c]
                    channel_cols = [[] for _ in channel_names]
                    continue
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            expected = 4 + len(channel_names)
            if len(parts) != expected:
                raise CloudParseError(
                    f"expected {expected} fields, got {len(parts)}", str(path), lineno
                )
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise CloudParseError("bad coordinate value", str(path), lineno)
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                raise CloudParseError("non-finite coordinate", str(path), lineno)
            try:
                label = int(parts[3])
            except ValueError:
                raise CloudParseError("bad label value", str(path), lineno)
            if label not in (0, 1, 2):
                raise ValidationError(
                    f"{path}:{lineno}: unknown label code {label}"
                )
            for k in range(len(channel_names)):
                try:
                    channel_cols[k].append(float(parts[4 + k]))
                except ValueError:
                    raise CloudParseError(
                        f"bad value for channel {channel_names[k]!r}", str(path), lineno
                    )
            xs.append(x)
            ys.append(y)
            zs.append(z)
            labels.append(label)
    xyz = np.column_stack([xs, ys, zs]) if xs else np.empty((0, 3))
    channels = {}
    for name, col in zip(channel_names, channel_cols):
        values = np.asarray(col, dtype=np.float64)
        if name == "hag_bin":
            values = values.astype(np.int64)
        channels[name] = values
    return LabeledCloud(xyz, np.asarray(labels, dtype=np.uint8), channels)


def _write_xyzl(cloud: LabeledCloud, path: Path) -> None:
    names = sorted(cloud.channels)
    header = "#xyzl"
    if names:
        header += ":" + ",".join(names)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            cols = [cloud.channels[n] for n in names]
            for i in range(len(cloud)):
                x, y, z = cloud.xyz[i]
                fields = [f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", str(int(cloud.labels[i]))]
                # Channels keep full precision so write->read is identity.
                for col in cols:
                    v = col[i]
                    fields.append(str(int(v)) if col.dtype.kind == "i" else repr(float(v)))
                fh.write(" ".join(fields) + "\n")
    except OSError as exc:
        raise CloudIOError(f"cannot write {path}: {exc}")


def _read_gfb(path: Path) -> LabeledCloud:
    data = path.read_bytes()
    if len(data) < 14 or data[:4] != GFB_MAGIC:
        raise CloudParseError("not a GFB1 file", str(path))
    offset = 4
    (count,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    (n_channels,) = struct.unpack_from("<H", data, offset)
    offset += 2
    directory: list[tuple[str, int]] = []
    for _ in range(n_channels):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (code,) = struct.unpack_from("<B", data, offset)
        offset += 1
        if code not in (_DTYPE_F64, _DTYPE_I64):
            raise CloudParseError(f"unknown channel dtype code {code}", str(path))
        directory.append((name, code))
    need = count * 3 * 8 + count
    for _, code in directory:
        need += count * 8
    if len(data) - offset != need:
        raise CloudParseError(
            f"payload size mismatch: expected {need} bytes, found {len(data) - offset}",
            str(path),
        )
    xyz = np.frombuffer(data, dtype="<f8", count=count * 3, offset=offset).reshape(count, 3)
    offset += count * 3 * 8
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)
    offset += count
    channels = {}
    for name, code in directory:
        dtype = "<f8" if code == _DTYPE_F64 else "<i8"
        channels[name] = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += count * 8
    return LabeledCloud(xyz.copy(), labels.copy(), {k: v.copy() for k, v in channels.items()})


def _write_gfb(cloud: LabeledCloud, path: Path) -> None:
    names = sorted(cloud.channels)
    parts = [GFB_MAGIC, struct.pack("<QH", len(cloud), len(names))]
    for name in names:
        encoded = name.encode("utf-8")
        code = _DTYPE_I64 if cloud.channels[name].dtype.kind == "i" else _DTYPE_F64
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", code))
    parts.append(np.ascontiguousarray(cloud.xyz, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(cloud.labels, dtype=np.uint8).tobytes())
    for name in names:
        values = cloud.channels[name]
        dtype = "<i8" if values.dtype.kind == "i" else "<f8"
        parts.append(np.ascontiguousarray(values, dtype=dtype).tobytes())
    try:
        path.write_bytes(b"".join(parts))
    except OSError as exc:
        raise CloudIOError(f"cannot write {path}: {exc}")


def cloud_from_points(points: Iterable[Point3], labels: Iterable[int],
                      channels: Mapping[str, np.ndarray] | None = None) -> LabeledCloud:
    """Convenience constructor from scalar points."""
    pts = list(points)
    xyz = np.asarray([[p.x, p.y, p.z] for p in pts], dtype=np.float64).reshape(len(pts), 3)
    return LabeledCloud(xyz, np.asarray(list(labels), dtype=np.uint8), channels or {})
