"""Height-above-ground computation and discretization into bins.

The reference surface is a Delaunay TIN over the ground-labeled points with
linear interpolation inside the hull; outside the hull the nearest ground
vertex's elevation is used. HAG is the (clamped, nonnegative) vertical
offset from that surface. Heights within ``SURFACE_TOLERANCE`` of the
surface count as exactly zero so interpolation noise cannot empty the
ground bin.

Bins follow the convention: bin 0 holds exactly zero, every other bin is a
left-open right-closed interval between consecutive boundaries, and the
last bin is unbounded above. Per-bin penalty weights grow with height.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .core import ClassLabel, LabeledCloud
from .errors import ConfigError, DegenerateSurfaceError, ValidationError

# Half-open-left interval edges shared by bin 0 / bin 1 and defaults beyond.
DEFAULT_BOUNDARIES = (0.0, 0.2, 0.5, 1.0, 3.0)
DEFAULT_WEIGHTS = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)

SURFACE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class HagBinning:
    """Ascending bin boundaries (first must be 0) and per-bin weights."""

    boundaries: tuple[float, ...] = DEFAULT_BOUNDARIES
    weights: tuple[float, ...] = DEFAULT_WEIGHTS

    def __post_init__(self):
        bnd = tuple(float(b) for b in self.boundaries)
        if len(bnd) < 1 or bnd[0] != 0.0:
            raise ConfigError(f"first bin boundary must be 0, got {bnd}")
        if any(b2 <= b1 for b1, b2 in zip(bnd, bnd[1:])):
            raise ConfigError(f"boundaries must be strictly ascending: {bnd}")
        wts = tuple(float(w) for w in self.weights)
        if len(wts) != len(bnd) + 1:
            raise ConfigError(
                f"need {len(bnd) + 1} weights for {len(bnd) + 1} bins, got {len(wts)}"
            )
        if any(w <= 0.0 for w in wts):
            raise ConfigError(f"weights must be positive: {wts}")
        if any(w2 < w1 for w1, w2 in zip(wts, wts[1:])):
            raise ConfigError(f"weights must be nondecreasing: {wts}")
        object.__setattr__(self, "boundaries", bnd)
        object.__setattr__(self, "weights", wts)

    @property
    def bin_count(self) -> int:
        return len(self.boundaries) + 1

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


def binning_with_bins(n_bins: int) -> HagBinning:
    """Binning variant with ``n_bins`` bins, boundaries scaled over the
    default height profile (geometric spacing between the default first and
    last nonzero boundaries), linear weights 1..n_bins."""
    if n_bins < 2:
        raise ConfigError(f"need at least 2 bins, got {n_bins}")
    if n_bins == 2:
        boundaries = (0.0,)
    else:
        inner = np.geomspace(DEFAULT_BOUNDARIES[1], DEFAULT_BOUNDARIES[-1], n_bins - 2)
        boundaries = (0.0, *(float(b) for b in inner))
    weights = tuple(float(w) for w in range(1, n_bins + 1))
    return HagBinning(boundaries=boundaries, weights=weights)


class GroundSurface:
    """Linear TIN over ground points with nearest-vertex fallback outside
    the hull. Immutable after construction."""

    def __init__(self, vertices: np.ndarray):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise DegenerateSurfaceError(f"vertices must be (N, 3), got {vertices.shape}")
        if vertices.shape[0] < 3:
            raise DegenerateSurfaceError(
                f"need >= 3 ground points, got {vertices.shape[0]}"
            )
        self.vertices = vertices
        try:
            self._tri = Delaunay(vertices[:, :2])
        except QhullError as exc:
            raise DegenerateSurfaceError(
                f"ground points are collinear or otherwise degenerate: {exc}"
            ) from exc
        if self._tri.simplices.shape[0] == 0:
            raise DegenerateSurfaceError("triangulation produced no triangles")
        self._kdtree = cKDTree(vertices[:, :2])

    @property
    def n_triangles(self) -> int:
        return int(self._tri.simplices.shape[0])

    def interpolate(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Surface elevation at (N, 2) positions.

        Returns ``(z, inside)`` where ``inside`` flags hull membership;
        outside positions get the nearest vertex's elevation.
        """
        xy = np.ascontiguousarray(xy, dtype=np.float64)
        simplex = self._tri.find_simplex(xy)
        inside = simplex >= 0
        z = np.empty(xy.shape[0], dtype=np.float64)
        if np.any(inside):
            s = simplex[inside]
            transform = self._tri.transform[s]
            bary2 = np.einsum("nij,nj->ni", transform[:, :2, :],
                              xy[inside] - transform[:, 2, :])
            bary = np.column_stack([bary2, 1.0 - bary2.sum(axis=1)])
            corner_z = self.vertices[self._tri.simplices[s], 2]
            z[inside] = np.einsum("ni,ni->n", bary, corner_z)
        if np.any(~inside):
            _, nearest = self._kdtree.query(xy[~inside])
            z[~inside] = self.vertices[nearest, 2]
        return z, inside


def build_ground_surface(cloud: LabeledCloud) -> GroundSurface:
    """TIN whose vertices are exactly the ground-labeled points."""
    ground = cloud.labels == ClassLabel.GROUND
    return GroundSurface(cloud.xyz[ground])


def hag_of_points(xyz: np.ndarray, surface: GroundSurface) -> np.ndarray:
    """Nonnegative height above the ground surface for (N, 3) points."""
    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    surf_z, _ = surface.interpolate(xyz[:, :2])
    d = xyz[:, 2] - surf_z
    return np.where(d <= SURFACE_TOLERANCE, 0.0, d)


def hag_of(p, surface: GroundSurface) -> float:
    """Scalar form of :func:`hag_of_points`."""
    return float(hag_of_points(np.array([[p.x, p.y, p.z]]), surface)[0])


def bins_of(hag: np.ndarray, binning: HagBinning) -> np.ndarray:
    """Bin index per HAG value; exact zeros land in bin 0."""
    hag = np.asarray(hag, dtype=np.float64)
    if hag.size and hag.min() < 0.0:
        raise ValidationError("negative HAG value; clamp happens upstream")
    edges = np.asarray(binning.boundaries, dtype=np.float64)
    return np.searchsorted(edges, hag, side="left").astype(np.int64)


def bin_of(hag: float, binning: HagBinning) -> int:
    return int(bins_of(np.asarray([hag]), binning)[0])


def attach_hag_channels(cloud: LabeledCloud, binning: HagBinning | None = None) -> LabeledCloud:
    """Return the cloud with ``hag_meters`` and ``hag_bin`` channels computed
    from its own ground-labeled points."""
    binning = binning or HagBinning()
    surface = build_ground_surface(cloud)
    hag = hag_of_points(cloud.xyz, surface)
    return (cloud
            .with_channel("hag_meters", hag)
            .with_channel("hag_bin", bins_of(hag, binning)))
