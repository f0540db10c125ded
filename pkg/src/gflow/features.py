"""Per-point feature extraction for the toy classifier.

Features are computed on the compressed patch so the squeezed periphery
contributes exactly what it is meant to: large-scale elevation context.
Each central point gets local elevation offsets against its containing
voxel at the primary size, the offset against the whole patch minimum, its
voxel occupancy and vertical extent, a fixed-radius neighbor count, and the
same voxel statistics at a ladder of coarser sizes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .compress import CompressedPatch
from .voxelgrid import DEFAULT_VOXEL_SIZE, project_to_central, voxelize

DEFAULT_EXTRA_VOXEL_SIZES = (2.0, 8.0, 32.0)
DEFAULT_NEIGHBOR_RADIUS = 2.0


@dataclass(frozen=True)
class FeatureRecipe:
    """Which geometric features are extracted, and at which scales."""

    primary_voxel_size: float = DEFAULT_VOXEL_SIZE
    extra_voxel_sizes: tuple[float, ...] = DEFAULT_EXTRA_VOXEL_SIZES
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS

    def feature_names(self) -> list[str]:
        names = [
            f"z_minus_voxel_min_{self.primary_voxel_size:g}",
            "z_minus_patch_min",
            f"voxel_count_{self.primary_voxel_size:g}",
            f"voxel_z_range_{self.primary_voxel_size:g}",
            f"neighbor_count_r{self.neighbor_radius:g}",
        ]
        for s in self.extra_voxel_sizes:
            names += [
                f"z_minus_voxel_min_{s:g}",
                f"voxel_z_range_{s:g}",
                f"voxel_count_{s:g}",
            ]
        return names

    @property
    def n_features(self) -> int:
        return 5 + 3 * len(self.extra_voxel_sizes)

    def to_dict(self) -> dict:
        return {
            "primary_voxel_size": self.primary_voxel_size,
            "extra_voxel_sizes": list(self.extra_voxel_sizes),
            "neighbor_radius": self.neighbor_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureRecipe":
        return cls(
            primary_voxel_size=float(d["primary_voxel_size"]),
            extra_voxel_sizes=tuple(float(s) for s in d["extra_voxel_sizes"]),
            neighbor_radius=float(d["neighbor_radius"]),
        )

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()


def build_patch_features(patch: CompressedPatch,
                         recipe: FeatureRecipe) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix for the central points of one compressed patch.

    Returns ``(features, global_ids)`` with one row per mask-true member,
    rows ordered by member index.
    """
    xyz = patch.xyz
    mask = patch.central_mask
    central = xyz[mask]
    ids = patch.member_indices[mask]
    if central.shape[0] == 0:
        return np.empty((0, recipe.n_features)), ids

    z = central[:, 2]
    cols = []
    primary = project_to_central(voxelize(xyz, recipe.primary_voxel_size), mask)
    cols.append(z - primary[:, 2])                 # z - voxel min_z
    cols.append(z - xyz[:, 2].min())               # z - patch min z
    cols.append(primary[:, 0])                     # voxel count
    cols.append(primary[:, 3] - primary[:, 2])     # voxel max_z - min_z
    tree = cKDTree(xyz)
    cols.append(tree.query_ball_point(
        central, r=recipe.neighbor_radius, return_length=True
    ).astype(np.float64))
    for s in recipe.extra_voxel_sizes:
        proj = project_to_central(voxelize(xyz, s), mask)
        cols.append(z - proj[:, 2])
        cols.append(proj[:, 3] - proj[:, 2])
        cols.append(proj[:, 0])
    return np.column_stack(cols), ids


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-column standardization fitted on the training set and stored in
    the checkpoint, so prediction sees the same scaling."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureNormalizer":
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNormalizer":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
        )
