"""Grid containers and raster primitives shared by all pipeline stages.

A GridSpec anchors a raster to the ground: origin is the lower-left corner,
cell (r, c) covers the half-open square
[origin_x + c*gsd, origin_x + (c+1)*gsd) x [origin_y + r*gsd, origin_y + (r+1)*gsd),
and a point on a shared edge belongs to the cell with the larger index.
Arrays are (height, width) with row 0 the southernmost row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BadKernel, NoPointsInGrid, ShapeMismatch, SpecMismatch

DEFAULT_NODATA = -9999.0


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a raster: lower-left origin, cell size, and dimensions."""

    origin_x: float
    origin_y: float
    gsd: float
    width: int
    height: int

    def __post_init__(self):
        if self.gsd <= 0:
            raise ValueError(f"gsd must be positive, got {self.gsd}")
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"grid must be at least 1x1, got {self.width}x{self.height}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def x_max(self) -> float:
        return self.origin_x + self.width * self.gsd

    @property
    def y_max(self) -> float:
        return self.origin_y + self.height * self.gsd

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.gsd,
            self.origin_y + (row + 0.5) * self.gsd,
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Row/col of the cell containing (x, y); may fall outside the grid."""
        col = int(np.floor((x - self.origin_x) / self.gsd))
        row = int(np.floor((y - self.origin_y) / self.gsd))
        return row, col


def grid_from_bounds(
    min_x: float, min_y: float, max_x: float, max_y: float, gsd: float
) -> GridSpec:
    """Smallest grid anchored at (min_x, min_y) containing both corners.

    A point exactly on the max edge still lands in the last cell.
    """
    width = int(np.floor((max_x - min_x) / gsd)) + 1
    height = int(np.floor((max_y - min_y) / gsd)) + 1
    return GridSpec(min_x, min_y, gsd, width, height)


@dataclass
class Raster:
    """A 2-D value grid bound to a GridSpec.

    values dtype decides the semantics: float64 for elevations (NaN marks
    nodata internally), bool for masks, integer for labels.
    """

    spec: GridSpec
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise ShapeMismatch(
                f"array shape {self.values.shape} does not match "
                f"grid {self.spec.shape}"
            )

    def with_values(self, values: np.ndarray) -> "Raster":
        return Raster(self.spec, values, self.nodata)


@dataclass
class OccupancyCount:
    """Per-cell point tallies from rasterization."""

    counts: Raster
    out_of_bounds: int = 0


def require_same_spec(a: Raster, b: Raster, what: str = "rasters") -> None:
    if a.spec != b.spec:
        raise SpecMismatch(f"{what} are on different grids: {a.spec} vs {b.spec}")


def _check_kernel(k: int) -> int:
    if not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
        raise BadKernel(f"kernel size must be a positive odd integer, got {k!r}")
    return int(k)


def _check_shape_name(shape: str) -> str:
    if shape not in ("square", "diamond"):
        raise BadKernel(f"kernel shape must be 'square' or 'diamond', got {shape!r}")
    return shape


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to the nearest integer with halves away from zero."""
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# rasterization and void filling
# ---------------------------------------------------------------------------


def rasterize_min(
    points: np.ndarray, spec: GridSpec
) -> tuple[Raster, OccupancyCount]:
    """Grid the cloud keeping the minimum z per cell.

    The lowest return per cell suppresses vegetation over penetrable canopy
    while solid surfaces keep their own elevation.  Cells with no points
    come back NaN; points outside the grid are ignored but tallied.
    """
    xs = np.ascontiguousarray(points[:, 0], np.float64)
    ys = np.ascontiguousarray(points[:, 1], np.float64)
    zs = np.ascontiguousarray(points[:, 2], np.float64)
    zmin, counts, oob = _kernels.rasterize_min(
        xs, ys, zs,
        spec.origin_x, spec.origin_y, spec.gsd,
        0, 0, spec.width, spec.height,
    )
    if int(counts.sum()) == 0:
        raise NoPointsInGrid("no point fell inside the grid")
    dsm = np.where(counts > 0, zmin, np.nan)
    return (
        Raster(spec, dsm),
        OccupancyCount(Raster(spec, counts), int(oob)),
    )


def rasterize_min_window(
    points: np.ndarray, spec: GridSpec, col0: int, row0: int, width: int, height: int
) -> tuple[Raster, OccupancyCount]:
    """rasterize_min restricted to a cell window of a larger grid.

    Cell assignment uses the full grid's origin, so a point lands in the
    same global cell whether gridded whole or window by window; that makes
    mosaicked windows bit-identical to a single-pass run.
    """
    xs = np.ascontiguousarray(points[:, 0], np.float64)
    ys = np.ascontiguousarray(points[:, 1], np.float64)
    zs = np.ascontiguousarray(points[:, 2], np.float64)
    zmin, counts, oob = _kernels.rasterize_min(
        xs, ys, zs,
        spec.origin_x, spec.origin_y, spec.gsd,
        col0, row0, width, height,
    )
    if int(counts.sum()) == 0:
        raise NoPointsInGrid("no point fell inside the window")
    sub = GridSpec(
        spec.origin_x + col0 * spec.gsd,
        spec.origin_y + row0 * spec.gsd,
        spec.gsd,
        width,
        height,
    )
    dsm = np.where(counts > 0, zmin, np.nan)
    return (
        Raster(sub, dsm),
        OccupancyCount(Raster(sub, counts), int(oob)),
    )


def interpolate_nearest(raster: Raster) -> Raster:
    """Fill every NaN cell with the value of its nearest valued cell.

    Distance is Euclidean between cell centers; among equidistant sources
    the one earliest in row-major order wins, so the result is unique.
    """
    valid = np.isfinite(raster.values)
    if not valid.any():
        raise NoPointsInGrid("cannot interpolate a raster with no valued cell")
    filled = _kernels.nearest_fill(
        np.ascontiguousarray(raster.values, np.float64),
        np.ascontiguousarray(valid),
    )
    return raster.with_values(filled)


def nearest_fill_from(values: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Fill cells outside `sources` from their nearest source cell.

    Same metric and tie rule as interpolate_nearest; `sources` must have at
    least one true cell.
    """
    return _kernels.nearest_fill(
        np.ascontiguousarray(values, np.float64),
        np.ascontiguousarray(sources),
    )


# ---------------------------------------------------------------------------
# binary morphology
# ---------------------------------------------------------------------------


def erode(mask: Raster, k: int, shape: str = "square") -> Raster:
    """Binary erosion by an odd k x k square (or inscribed diamond).

    Cells outside the raster count as false, so shapes touching the border
    erode away.
    """
    k = _check_kernel(k)
    m = np.ascontiguousarray(mask.values, bool)
    if _check_shape_name(shape) == "square":
        out = _kernels.erode_square(m, k // 2)
    else:
        out = _kernels.erode_diamond(m, k // 2)
    return mask.with_values(out)


def dilate(mask: Raster, k: int, shape: str = "square") -> Raster:
    """Binary dilation by an odd k x k square (or inscribed diamond).

    The window clips at the border; outside cells contribute nothing.
    """
    k = _check_kernel(k)
    m = np.ascontiguousarray(mask.values, bool)
    if _check_shape_name(shape) == "square":
        out = _kernels.dilate_square(m, k // 2)
    else:
        out = _kernels.dilate_diamond(m, k // 2)
    return mask.with_values(out)


def opening(mask: Raster, k: int, shape: str = "square") -> Raster:
    """Erosion followed by dilation; removes blobs narrower than k cells."""
    return dilate(erode(mask, k, shape), k, shape)


# ---------------------------------------------------------------------------
# connected components
# ---------------------------------------------------------------------------


def connected_components(mask: Raster, connectivity: int = 8) -> tuple[Raster, int]:
    """Label true regions 1..n in row-major first-encounter order."""
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = _kernels.label_components(
        np.ascontiguousarray(mask.values, bool), connectivity == 8
    )
    return mask.with_values(labels), count


def component_sizes(labels: Raster, count: int) -> np.ndarray:
    """Cell count per label; index 0 holds the background count."""
    return np.bincount(labels.values.reshape(-1), minlength=count + 1)
