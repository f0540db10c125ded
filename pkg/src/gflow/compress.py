"""Radial context compression of cylindrical patches, and its exact inverse.

Points inside the inner invariant radius pass through unchanged. Points in
the annulus between the inner radius and the outer original radius are moved
along their ray from the patch center so that radial offsets beyond the
inner boundary shrink linearly:

    r' = R_in + (r - R_in) * (R_oc - R_in) / (R_oo - R_in)

Elevation is never touched, so the squeezed periphery keeps its value as a
source of large-scale elevation context. The implementation rescales the
direction vector rather than evaluating the closed-form X'/Y' expressions
directly; the two agree to floating-point noise and the ray form is stabler
near the center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledCloud, Point3
from .errors import ConfigError, OutOfDomainError
from .partition import DEFAULT_INNER_RADIUS, Patch

DEFAULT_OUTER_COMPRESSED_RADIUS = 44.0

# Patch membership is decided on squared distances, so recomputed radii may
# exceed the nominal boundary by rounding noise; domain checks honor the
# same slack as the membership contract.
DOMAIN_SLACK = 1e-9


@dataclass(frozen=True)
class CompressConfig:
    """Radii of the original, compressed, and invariant boundaries (meters)."""

    outer_radius: float
    outer_compressed_radius: float = DEFAULT_OUTER_COMPRESSED_RADIUS
    inner_radius: float = DEFAULT_INNER_RADIUS

    def __post_init__(self):
        if not (0.0 < self.inner_radius < self.outer_compressed_radius < self.outer_radius):
            raise ConfigError(
                "need 0 < inner_radius < outer_compressed_radius < outer_radius, got "
                f"{self.inner_radius} / {self.outer_compressed_radius} / {self.outer_radius}"
            )

    @property
    def ratio(self) -> float:
        """Radial shrink factor applied beyond the invariant boundary."""
        return (self.outer_compressed_radius - self.inner_radius) / (
            self.outer_radius - self.inner_radius
        )


@dataclass(frozen=True)
class CompressedPatch:
    """A patch after compression: transformed coordinates plus everything
    carried over by member index (labels, channels, central mask, global ids)."""

    xyz: np.ndarray
    labels: np.ndarray
    channels: dict[str, np.ndarray]
    center: tuple[float, float]
    member_indices: np.ndarray
    central_mask: np.ndarray
    source: Patch | None = None

    def __len__(self) -> int:
        return int(self.xyz.shape[0])

    @property
    def central_indices(self) -> np.ndarray:
        """Global cloud indices of the central-region members."""
        return self.member_indices[self.central_mask]


def _radial_map(r: np.ndarray, cfg: CompressConfig) -> np.ndarray:
    return cfg.inner_radius + (r - cfg.inner_radius) * cfg.ratio


def _radial_unmap(rp: np.ndarray, cfg: CompressConfig) -> np.ndarray:
    return cfg.inner_radius + (rp - cfg.inner_radius) / cfg.ratio


def compress_points(xyz: np.ndarray, center: tuple[float, float],
                    cfg: CompressConfig) -> np.ndarray:
    """Vectorized compression of an (N, 3) array. Z columns are copied bitwise."""
    xyz = np.asarray(xyz, dtype=np.float64)
    dx = xyz[:, 0] - center[0]
    dy = xyz[:, 1] - center[1]
    r = np.hypot(dx, dy)
    if np.any(r > cfg.outer_radius + DOMAIN_SLACK):
        worst = float(r.max())
        raise OutOfDomainError(
            f"point at radius {worst} outside outer radius {cfg.outer_radius}"
        )
    out = xyz.copy()
    move = r > cfg.inner_radius
    if np.any(move):
        scale = _radial_map(r[move], cfg) / r[move]
        out[move, 0] = center[0] + dx[move] * scale
        out[move, 1] = center[1] + dy[move] * scale
    return out


def decompress_points(xyz: np.ndarray, center: tuple[float, float],
                      cfg: CompressConfig) -> np.ndarray:
    """Exact inverse of :func:`compress_points` on the compressed disk."""
    xyz = np.asarray(xyz, dtype=np.float64)
    dx = xyz[:, 0] - center[0]
    dy = xyz[:, 1] - center[1]
    rp = np.hypot(dx, dy)
    if np.any(rp > cfg.outer_compressed_radius + DOMAIN_SLACK):
        worst = float(rp.max())
        raise OutOfDomainError(
            f"point at radius {worst} outside compressed radius "
            f"{cfg.outer_compressed_radius}"
        )
    out = xyz.copy()
    move = rp > cfg.inner_radius
    if np.any(move):
        scale = _radial_unmap(rp[move], cfg) / rp[move]
        out[move, 0] = center[0] + dx[move] * scale
        out[move, 1] = center[1] + dy[move] * scale
    return out


def compress_point(p: Point3, center: tuple[float, float], cfg: CompressConfig) -> Point3:
    """Compress a single point; identity inside the invariant zone."""
    out = compress_points(np.array([[p.x, p.y, p.z]]), center, cfg)
    return Point3(float(out[0, 0]), float(out[0, 1]), float(out[0, 2]))


def decompress_point(p: Point3, center: tuple[float, float], cfg: CompressConfig) -> Point3:
    out = decompress_points(np.array([[p.x, p.y, p.z]]), center, cfg)
    return Point3(float(out[0, 0]), float(out[0, 1]), float(out[0, 2]))


def compress_patch(patch: Patch, cloud: LabeledCloud, cfg: CompressConfig) -> CompressedPatch:
    """Apply the transform to every patch member.

    Labels, channels, and the central mask are copied through by member
    index; the patch must have been built with the same outer and inner
    radii as ``cfg``.
    """
    if patch.outer_radius != cfg.outer_radius or patch.inner_radius != cfg.inner_radius:
        raise ConfigError(
            f"patch radii ({patch.outer_radius}, {patch.inner_radius}) do not match "
            f"compression config ({cfg.outer_radius}, {cfg.inner_radius})"
        )
    member_xyz = cloud.xyz[patch.member_indices]
    return CompressedPatch(
        xyz=compress_points(member_xyz, patch.center, cfg),
        labels=cloud.labels[patch.member_indices].copy(),
        channels={k: v[patch.member_indices].copy() for k, v in cloud.channels.items()},
        center=patch.center,
        member_indices=patch.member_indices,
        central_mask=patch.central_mask,
        source=patch,
    )
