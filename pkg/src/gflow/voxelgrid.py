"""Sparse voxelization of patches and voxel-to-point feature projection.

Cells are cubic, keyed by ``floor((coord - origin) / voxel_size)`` per axis.
The origin is the patch's min corner snapped down to the voxel lattice, so
keys do not depend on point ordering. Each occupied cell stores elevation
statistics over its members; projection hands every central point its
containing cell's statistics and drops everything else, keeping the
squeezed periphery out of the classification path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError

DEFAULT_VOXEL_SIZE = 0.5
# Uncompressed-baseline runs use a coarser grid to stay tractable.
BASELINE_VOXEL_SIZE = 1.0

# Column order of projected feature rows.
FEATURE_COLUMNS = ("count", "mean_z", "min_z", "max_z")


@dataclass(frozen=True)
class VoxelFeatures:
    count: int
    mean_z: float
    min_z: float
    max_z: float


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Occupied-cell statistics plus point-to-cell index maps.

    ``cell_keys`` is (M, 3) int64 in lexicographic order; ``point_cell``
    maps each input point to its row in the cell arrays. ``point_to_voxel``
    gives the raw (N, 3) integer key per point.
    """

    voxel_size: float
    origin: np.ndarray
    cell_keys: np.ndarray
    cell_count: np.ndarray
    cell_mean_z: np.ndarray
    cell_min_z: np.ndarray
    cell_max_z: np.ndarray
    point_cell: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.cell_keys.shape[0])

    @property
    def point_to_voxel(self) -> np.ndarray:
        return self.cell_keys[self.point_cell]

    @cached_property
    def cells(self) -> dict[tuple[int, int, int], VoxelFeatures]:
        """Key -> features association (built on demand)."""
        return {
            tuple(int(v) for v in key): VoxelFeatures(
                int(self.cell_count[i]),
                float(self.cell_mean_z[i]),
                float(self.cell_min_z[i]),
                float(self.cell_max_z[i]),
            )
            for i, key in enumerate(self.cell_keys)
        }


def snap_origin(xyz: np.ndarray, voxel_size: float) -> np.ndarray:
    """Min corner of the points snapped down to the voxel lattice."""
    mins = np.floor(xyz.min(axis=0) / voxel_size) * voxel_size
    return mins


def voxelize(points: np.ndarray, voxel_size: float,
             origin: np.ndarray | None = None) -> SparseVoxelGrid:
    """Bucket (N, 3) points into a sparse cubic grid with exact statistics."""
    if voxel_size <= 0.0:
        raise ConfigError(f"voxel_size must be positive, got {voxel_size}")
    xyz = np.ascontiguousarray(points, dtype=np.float64)
    if xyz.ndim != 2 or xyz.shape[1] != 3 or xyz.shape[0] == 0:
        raise ConfigError(f"points must be a non-empty (N, 3) array, got {xyz.shape}")
    if not np.all(np.isfinite(xyz)):
        raise ConfigError("points must be finite")
    if origin is None:
        origin = snap_origin(xyz, voxel_size)
    origin = np.asarray(origin, dtype=np.float64)
    keys = np.floor((xyz - origin) / voxel_size).astype(np.int64)
    cell_keys, point_cell = np.unique(keys, axis=0, return_inverse=True)
    point_cell = point_cell.ravel()
    order = np.argsort(point_cell, kind="stable")
    sorted_cells = point_cell[order]
    sorted_z = xyz[order, 2]
    starts = np.searchsorted(sorted_cells, np.arange(cell_keys.shape[0]))
    count = np.diff(np.append(starts, sorted_cells.size))
    sum_z = np.add.reduceat(sorted_z, starts)
    min_z = np.minimum.reduceat(sorted_z, starts)
    max_z = np.maximum.reduceat(sorted_z, starts)
    return SparseVoxelGrid(
        voxel_size=float(voxel_size),
        origin=origin,
        cell_keys=cell_keys,
        cell_count=count.astype(np.int64),
        cell_mean_z=sum_z / count,
        cell_min_z=min_z,
        cell_max_z=max_z,
        point_cell=point_cell,
    )


def project_to_central(grid: SparseVoxelGrid, central_mask: np.ndarray) -> np.ndarray:
    """Per-central-point feature rows ``[count, mean_z, min_z, max_z]``.

    Only mask-true points appear in the output (one row each, in index
    order); each point receives the statistics of the cell that contains
    it, which may also aggregate peripheral neighbors sharing the cell.
    """
    central_mask = np.asarray(central_mask, dtype=bool)
    if central_mask.shape[0] != grid.point_cell.shape[0]:
        raise ConfigError(
            f"mask length {central_mask.shape[0]} does not match "
            f"{grid.point_cell.shape[0]} points"
        )
    cells = grid.point_cell[central_mask]
    return np.column_stack([
        grid.cell_count[cells].astype(np.float64),
        grid.cell_mean_z[cells],
        grid.cell_min_z[cells],
        grid.cell_max_z[cells],
    ])
