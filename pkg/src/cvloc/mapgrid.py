"""Tessellated geo-referenced map grid and the local metric frame.

The map is a regular lattice of cells in a local east/north frame anchored
at a geographic origin. Geographic coordinates are projected with an
equirectangular approximation about the origin, which is exact to well
under the grid interval for maps up to a few kilometres across.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_M = 6371008.8  # WGS-84 mean radius

# Relative slack when counting lattice points, so that an extent computed as
# 99.999999999 m at a 10 m interval still yields 11 columns.
_COUNT_EPS = 1e-9


class OutOfMapError(ValueError):
    """A point falls outside the lattice hull of the grid."""


class LocalPoint(NamedTuple):
    x: float
    y: float


class GeoRect(NamedTuple):
    """Geographic bounding rectangle in degrees."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float


@dataclass(frozen=True)
class GridCell:
    """One lattice cell: metric location plus optional payloads."""

    location: LocalPoint
    descriptor: np.ndarray | None = None
    probability: float | None = None


@dataclass(frozen=True)
class GridMap:
    """Immutable lattice of width x height cells, ``cell_interval`` metres apart.

    Cells are stored row-major: index = row * width + col, col increasing
    east, row increasing north. Cell (0, 0) sits at the geographic origin.
    Descriptor and probability payloads are kept as dense arrays aligned
    with the cell index.
    """

    origin: tuple[float, float]  # (lat, lon) degrees of cell index 0
    cell_interval: float
    width: int
    height: int
    descriptors: np.ndarray | None = None  # (num_cells, R) float32
    probabilities: np.ndarray | None = None  # (num_cells,) float64

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not (math.isfinite(self.cell_interval) and self.cell_interval > 0):
            raise ValueError(f"cell_interval must be positive, got {self.cell_interval}")
        n = self.num_cells
        if self.descriptors is not None:
            if self.descriptors.ndim != 2 or self.descriptors.shape[0] != n:
                raise ValueError("descriptor array must be (num_cells, R)")
        if self.probabilities is not None:
            p = self.probabilities
            if p.shape != (n,):
                raise ValueError("probability array must be (num_cells,)")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ValueError("probabilities must be finite and non-negative")

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    def __len__(self) -> int:
        return self.num_cells

    def cell_location(self, index: int) -> LocalPoint:
        if not 0 <= index < self.num_cells:
            raise IndexError(f"cell index {index} out of range")
        col = index % self.width
        row = index // self.width
        return LocalPoint(col * self.cell_interval, row * self.cell_interval)

    def cell(self, index: int) -> GridCell:
        desc = None if self.descriptors is None else self.descriptors[index]
        prob = None if self.probabilities is None else float(self.probabilities[index])
        return GridCell(self.cell_location(index), desc, prob)

    @property
    def cells(self) -> list[GridCell]:
        return [self.cell(i) for i in range(self.num_cells)]

    def locations(self) -> np.ndarray:
        """All cell locations as an (num_cells, 2) array, row-major order."""
        cols = np.arange(self.num_cells) % self.width
        rows = np.arange(self.num_cells) // self.width
        return np.stack([cols, rows], axis=1) * self.cell_interval

    @property
    def extent(self) -> tuple[float, float]:
        """Metric size of the lattice hull (east, north)."""
        return ((self.width - 1) * self.cell_interval, (self.height - 1) * self.cell_interval)

    def contains(self, p: LocalPoint) -> bool:
        ex, ey = self.extent
        return 0.0 <= p.x <= ex and 0.0 <= p.y <= ey

    def with_descriptors(self, descriptors: np.ndarray) -> "GridMap":
        return replace(self, descriptors=descriptors)

    def with_probabilities(self, probabilities: np.ndarray) -> "GridMap":
        return replace(self, probabilities=probabilities)


def _check_geo(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ValueError(f"non-finite geographic coordinate ({lat}, {lon})")
    if abs(lat) > 90.0 or abs(lon) > 180.0:
        raise ValueError(f"geographic coordinate out of range ({lat}, {lon})")


def geo_to_local(grid: GridMap, lat: float, lon: float) -> LocalPoint:
    """Project (lat, lon) into the map's local east/north frame in metres."""
    _check_geo(lat, lon)
    lat0, lon0 = grid.origin
    x = math.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    y = math.radians(lat - lat0) * EARTH_RADIUS_M
    return LocalPoint(x, y)


def local_to_geo(grid: GridMap, p: LocalPoint) -> tuple[float, float]:
    """Inverse of :func:`geo_to_local`."""
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise ValueError(f"non-finite local point {p}")
    lat0, lon0 = grid.origin
    lat = lat0 + math.degrees(p.y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(p.x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def geo_distance_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres (haversine, mean Earth radius)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def surrounding_corners(grid: GridMap, p: LocalPoint) -> tuple[int, int, int, int]:
    """Indices of the four lattice corners of the cell containing ``p``.

    Returned in (SW, SE, NW, NE) order. Points on the far east/north edge
    belong to the last interior cell. Raises OutOfMapError outside the hull.
    """
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise ValueError(f"non-finite local point {p}")
    if not grid.contains(p):
        raise OutOfMapError(f"point {p} outside grid hull {grid.extent}")
    s = grid.cell_interval
    i = min(int(p.x // s), grid.width - 2)
    j = min(int(p.y // s), grid.height - 2)
    sw = j * grid.width + i
    return (sw, sw + 1, sw + grid.width, sw + grid.width + 1)


def corner_weights(grid: GridMap, p: LocalPoint) -> tuple[tuple[int, int, int, int], np.ndarray]:
    """Surrounding corners plus their bilinear area weights (sum to 1)."""
    corners = surrounding_corners(grid, p)
    s = grid.cell_interval
    i = corners[0] % grid.width
    j = corners[0] // grid.width
    tx = p.x / s - i
    ty = p.y / s - j
    w = np.array([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty])
    return corners, w


def tessellate(bounds: GeoRect, interval: float) -> GridMap:
    """Lay a lattice of cells over ``bounds`` at ``interval`` metres.

    Cell (0, 0) sits on the south-west corner; counts per axis are
    floor(extent / interval) + 1, covering both edges.
    """
    _check_geo(bounds.lat_min, bounds.lon_min)
    _check_geo(bounds.lat_max, bounds.lon_max)
    if not (math.isfinite(interval) and interval > 0):
        raise ValueError(f"interval must be positive, got {interval}")
    if bounds.lat_max <= bounds.lat_min or bounds.lon_max <= bounds.lon_min:
        raise ValueError(f"degenerate bounds {bounds}")
    probe = GridMap((bounds.lat_min, bounds.lon_min), interval, 2, 2)
    ext = geo_to_local(probe, bounds.lat_max, bounds.lon_max)
    width = int(ext.x / interval + _COUNT_EPS) + 1
    height = int(ext.y / interval + _COUNT_EPS) + 1
    if width < 2 or height < 2:
        raise ValueError(
            f"bounds span {ext.x:.1f}x{ext.y:.1f} m: fewer than 2x2 cells at interval {interval}"
        )
    return GridMap((bounds.lat_min, bounds.lon_min), interval, width, height)
