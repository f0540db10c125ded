"""Tiling a cloud into overlapping cylindrical patches.

Patch centers sit on a regular grid anchored at the bounding-box minimum;
the grid is extended so the last center along each axis is the first grid
multiple at or beyond the maximum. Together with the coverage condition
``R_in >= step * sqrt(2) / 2`` this puts every bounding-box point within
``R_in`` of at least one center, so every point lands in the central region
of at least one patch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Bounds2, LabeledCloud
from .errors import ConfigError

DEFAULT_OUTER_RADIUS = 150.0
DEFAULT_STEP = 50.0
DEFAULT_INNER_RADIUS = 25.0 * math.sqrt(2.0)


class CoverageWarning(UserWarning):
    """Coverage condition violated in non-strict mode."""


@dataclass(frozen=True)
class PartitionConfig:
    """Cylindrical tiling parameters (radii and center spacing, in meters)."""

    outer_radius: float = DEFAULT_OUTER_RADIUS
    step: float = DEFAULT_STEP
    inner_radius: float = DEFAULT_INNER_RADIUS
    strict: bool = True

    def __post_init__(self):
        if not (0.0 < self.inner_radius < self.outer_radius):
            raise ConfigError(
                f"need 0 < inner_radius < outer_radius, got "
                f"{self.inner_radius} / {self.outer_radius}"
            )
        if self.step <= 0.0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if self.inner_radius < self.step * math.sqrt(2.0) / 2.0:
            msg = (
                f"inner_radius {self.inner_radius} < step*sqrt(2)/2 = "
                f"{self.step * math.sqrt(2.0) / 2.0}: central regions will not "
                f"cover the bounding box"
            )
            if self.strict:
                raise ConfigError(msg)
            warnings.warn(msg, CoverageWarning)


@dataclass(frozen=True)
class Patch:
    """One cylindrical tile.

    ``member_indices`` point into the source cloud; ``central_mask`` marks
    members whose XY distance to the center is <= the inner radius. The
    radii the patch was built with are recorded for downstream consistency
    checks.
    """

    center: tuple[float, float]
    member_indices: np.ndarray
    central_mask: np.ndarray
    outer_radius: float
    inner_radius: float

    def __post_init__(self):
        object.__setattr__(self, "member_indices",
                           np.ascontiguousarray(self.member_indices, dtype=np.int64))
        object.__setattr__(self, "central_mask",
                           np.ascontiguousarray(self.central_mask, dtype=bool))
        if self.central_mask.shape != self.member_indices.shape:
            raise ConfigError("central_mask length must match member count")

    def __len__(self) -> int:
        return int(self.member_indices.shape[0])


def _axis_centers(lo: float, hi: float, step: float) -> np.ndarray:
    # Last center = first grid multiple at or beyond hi; degenerate extent
    # yields the single origin center.
    n = int(math.ceil((hi - lo) / step)) if hi > lo else 0
    return lo + step * np.arange(n + 1, dtype=np.float64)


def make_centers(bnds: Bounds2, cfg: PartitionConfig) -> np.ndarray:
    """Grid of patch centers as an (M, 2) array, y-major then x order."""
    xs = _axis_centers(bnds.min_x, bnds.max_x, cfg.step)
    ys = _axis_centers(bnds.min_y, bnds.max_y, cfg.step)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def partition(cloud: LabeledCloud, cfg: PartitionConfig,
              bnds: Bounds2 | None = None) -> list[Patch]:
    """Split a cloud into cylindrical patches; empty patches are dropped.

    Distance comparisons are exact ``<=`` on stored doubles, so membership
    and centrality are deterministic for identical inputs.
    """
    from .core import bounds as cloud_bounds

    if len(cloud) == 0:
        raise ConfigError("cannot partition an empty cloud")
    if bnds is None:
        bnds = cloud_bounds(cloud)
    centers = make_centers(bnds, cfg)
    xy = cloud.xyz[:, :2]
    patches: list[Patch] = []
    for cx, cy in centers:
        d2 = (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2
        members = np.flatnonzero(d2 <= cfg.outer_radius * cfg.outer_radius)
        if members.size == 0:
            continue
        central = d2[members] <= cfg.inner_radius * cfg.inner_radius
        patches.append(Patch(
            center=(float(cx), float(cy)),
            member_indices=members,
            central_mask=central,
            outer_radius=cfg.outer_radius,
            inner_radius=cfg.inner_radius,
        ))
    return patches
