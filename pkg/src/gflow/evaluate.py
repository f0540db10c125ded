"""Classification metrics and DTM rasterization/RMSE.

Confusion counts follow the two-class convention where class 1 is
non-ground and class 2 is ground:

    IoU_1 = TP1 / (TP1 + FP1 + FP2)      IoU_2 = TP2 / (TP2 + FP2 + FP1)
    OA    = (TP1 + TP2) / total          RMSE  = sqrt(mean((P_i - R_i)^2))

RMSE compares two rasters on identical grids over the cells valid in both.
DTM rasters come from linear TIN interpolation of ground points at cell
centers; cells outside the hull are invalid. A 0/0 IoU is reported as NaN
and excluded from aggregate reports rather than silently zeroed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClassLabel
from .errors import NumericError, ValidationError
from .hag import GroundSurface

DEFAULT_CELL_SIZE = 1.0
NODATA = -9999.0


@dataclass(frozen=True)
class ConfusionCounts:
    """tp1/fp1 count non-ground predictions (correct/incorrect), tp2/fp2
    ground predictions likewise."""

    tp1: int
    fp1: int
    tp2: int
    fp2: int

    @property
    def total(self) -> int:
        return self.tp1 + self.fp1 + self.tp2 + self.fp2

    def to_dict(self) -> dict:
        return {"tp1": self.tp1, "fp1": self.fp1, "tp2": self.tp2, "fp2": self.fp2}


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Exact confusion counts; outlier labels are not allowed here."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(
            f"prediction length {pred.shape} != truth length {truth.shape}"
        )
    for name, arr in (("pred", pred), ("truth", truth)):
        if np.any(arr == ClassLabel.OUTLIER):
            raise ValidationError(f"{name} labels contain outliers; relabel first")
    pred_ng = pred == ClassLabel.NON_GROUND
    truth_ng = truth == ClassLabel.NON_GROUND
    return ConfusionCounts(
        tp1=int(np.count_nonzero(pred_ng & truth_ng)),
        fp1=int(np.count_nonzero(pred_ng & ~truth_ng)),
        tp2=int(np.count_nonzero(~pred_ng & ~truth_ng)),
        fp2=int(np.count_nonzero(~pred_ng & truth_ng)),
    )


def metrics(c: ConfusionCounts) -> dict:
    """Per-class IoU and overall accuracy; 0/0 IoU comes back as NaN."""
    if c.total == 0:
        raise ValidationError("cannot compute metrics over zero points")

    def iou(tp: int) -> float:
        denom = tp + c.fp1 + c.fp2
        return tp / denom if denom > 0 else math.nan

    return {
        "iou_nonground": iou(c.tp1),
        "iou_ground": iou(c.tp2),
        "overall_accuracy": (c.tp1 + c.tp2) / c.total,
    }


@dataclass(frozen=True)
class GridSpec:
    """Regular raster layout; cell (col i, row j) has its center at
    ``(origin_x + (i + 0.5) * cell_size, origin_y + (j + 0.5) * cell_size)``."""

    origin_x: float
    origin_y: float
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if self.cell_size <= 0 or self.width < 1 or self.height < 1:
            raise ValidationError(f"invalid grid spec: {self}")

    def cell_centers(self) -> np.ndarray:
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin_y + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


def grid_from_bounds(min_x: float, min_y: float, max_x: float, max_y: float,
                     cell_size: float = DEFAULT_CELL_SIZE) -> GridSpec:
    width = max(1, int(math.ceil((max_x - min_x) / cell_size)))
    height = max(1, int(math.ceil((max_y - min_y) / cell_size)))
    return GridSpec(min_x, min_y, cell_size, width, height)


@dataclass(frozen=True)
class DtmRaster:
    """Elevation grid with a validity mask; invalid cells hold NaN."""

    grid: GridSpec
    elevation: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shape = (self.grid.height, self.grid.width)
        if self.elevation.shape != shape or self.valid.shape != shape:
            raise ValidationError(
                f"raster arrays must have shape {shape}, got "
                f"{self.elevation.shape} / {self.valid.shape}"
            )
        if np.any(~np.isfinite(self.elevation[self.valid])):
            raise ValidationError("valid cells must carry finite elevations")

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))


def rasterize_dtm(ground_xyz: np.ndarray, grid: GridSpec) -> DtmRaster:
    """TIN-interpolate ground points at cell centers; hull-exterior cells
    are invalid."""
    surface = GroundSurface(np.asarray(ground_xyz, dtype=np.float64))
    z, inside = surface.interpolate(grid.cell_centers())
    elevation = np.where(inside, z, np.nan).reshape(grid.height, grid.width)
    return DtmRaster(grid=grid, elevation=elevation,
                     valid=inside.reshape(grid.height, grid.width))


def rasterize_function(fn, grid: GridSpec) -> DtmRaster:
    """Raster of an analytic elevation function ``fn(x, y)``; every cell valid."""
    centers = grid.cell_centers()
    z = np.asarray(fn(centers[:, 0], centers[:, 1]), dtype=np.float64)
    return DtmRaster(
        grid=grid,
        elevation=z.reshape(grid.height, grid.width),
        valid=np.ones((grid.height, grid.width), dtype=bool),
    )


def dtm_rmse(pred: DtmRaster, reference: DtmRaster) -> float:
    """RMSE over cells valid in both rasters."""
    if pred.grid != reference.grid:
        raise ValidationError(
            f"raster grids differ: {pred.grid} vs {reference.grid}"
        )
    both = pred.valid & reference.valid
    n = int(np.count_nonzero(both))
    if n == 0:
        raise NumericError("no cells valid in both rasters")
    diff = pred.elevation[both] - reference.elevation[both]
    return float(np.sqrt(np.mean(diff * diff)))


def misclassified_nonground_by_bin(pred: np.ndarray, truth: np.ndarray,
                                   truth_bins: np.ndarray, n_bins: int) -> list[int]:
    """Count truth-non-ground points predicted ground, grouped by height bin.

    This is the per-bin error table that shows whether tall objects leak
    into the ground class."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    truth_bins = np.asarray(truth_bins, dtype=np.int64)
    if not (pred.shape == truth.shape == truth_bins.shape):
        raise ValidationError("pred, truth, and bins must have equal length")
    leak = (truth == ClassLabel.NON_GROUND) & (pred == ClassLabel.GROUND)
    return np.bincount(truth_bins[leak], minlength=n_bins).tolist()


# -- ESRI ASCII grid interchange ---------------------------------------------


def write_esri_ascii(raster: DtmRaster, path) -> None:
    """Plain-text grid readable by standard GIS tools; rows top-down."""
    lines = [
        f"ncols {raster.grid.width}",
        f"nrows {raster.grid.height}",
        f"xllcorner {raster.grid.origin_x!r}",
        f"yllcorner {raster.grid.origin_y!r}",
        f"cellsize {raster.grid.cell_size!r}",
        f"NODATA_value {NODATA:g}",
    ]
    elev = np.where(raster.valid, raster.elevation, NODATA)
    for j in range(raster.grid.height - 1, -1, -1):
        lines.append(" ".join(repr(float(v)) for v in elev[j]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_esri_ascii(path) -> DtmRaster:
    from .errors import CloudIOError, CloudParseError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise CloudIOError(f"cannot read raster {path}: {exc}")
    header = {}
    pos = 0
    for _ in range(6):
        header[tokens[pos].lower()] = tokens[pos + 1]
        pos += 2
    try:
        width = int(header["ncols"])
        height = int(header["nrows"])
        grid = GridSpec(
            float(header["xllcorner"]), float(header["yllcorner"]),
            float(header["cellsize"]), width, height,
        )
        nodata = float(header["nodata_value"])
        values = np.asarray([float(t) for t in tokens[pos:]], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise CloudParseError(f"bad ESRI ASCII header or payload: {exc}", str(path))
    if values.size != width * height:
        raise CloudParseError(
            f"expected {width * height} cells, found {values.size}", str(path)
        )
    top_down = values.reshape(height, width)
    elevation = top_down[::-1].copy()
    valid = elevation != nodata
    elevation[~valid] = np.nan
    return DtmRaster(grid=grid, elevation=elevation, valid=valid)
