"""Descriptor-distance measurement model over the map grid.

A ground-view query descriptor is turned into a probability field by a
softmax of negated Euclidean distances to every cell's stored descriptor.
Per-state measurement probabilities are then read off the four lattice
corners around the state, either as their literal sum (``corner-sum``,
the default) or as their bilinearly interpolated value (``bilinear``).
The two modes differ by a state-dependent factor that resampling
normalises away; both are kept selectable because the published model is
stated both ways.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptor import GlobalDescriptor
from .mapgrid import GridMap, LocalPoint

MODES = ("corner-sum", "bilinear")

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class ProbabilityField:
    """Normalised location probabilities over a grid, plus the off-map floor."""

    grid: GridMap
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        p = self.grid.probabilities
        if p is None:
            raise ValueError("field grid must carry probabilities")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
        if not (math.isfinite(self.floor) and self.floor > 0):
            raise ValueError("floor must be a small positive real")

    @property
    def probabilities(self) -> np.ndarray:
        return self.grid.probabilities


def uniform_field(grid: GridMap, floor: float = DEFAULT_FLOOR) -> ProbabilityField:
    p = np.full(grid.num_cells, 1.0 / grid.num_cells)
    return ProbabilityField(grid.with_probabilities(p), floor)


def location_probabilities(
    db_map: GridMap, q: GlobalDescriptor | np.ndarray, floor: float = DEFAULT_FLOOR
) -> ProbabilityField:
    """Softmax of negated descriptor distances over all cells.

    Computed with max-subtraction so the normalisation is stable for any
    distance scale; smaller distance always means strictly larger
    probability.
    """
    if db_map.descriptors is None:
        raise ValueError("map has no stored descriptors")
    values = q.values if isinstance(q, GlobalDescriptor) else np.asarray(q)
    values = values.astype(np.float64)
    if values.shape != (db_map.descriptors.shape[1],):
        raise ValueError(
            f"query dimension {values.shape} != map descriptor dimension {db_map.descriptors.shape[1]}"
        )
    diff = db_map.descriptors.astype(np.float64) - values[None, :]
    dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    logits = -dists
    logits -= logits.max()
    e = np.exp(logits)
    return ProbabilityField(db_map.with_probabilities(e / e.sum()), floor)


def measurement_probability(field: ProbabilityField, state, mode: str = "corner-sum") -> float:
    """Measurement probability of one state (Pose or LocalPoint)."""
    x = float(state.x)
    y = float(state.y)
    return float(measurement_probabilities(field, np.array([[x, y]]), mode)[0])


def measurement_probabilities(
    field: ProbabilityField, states: np.ndarray, mode: str = "corner-sum"
) -> np.ndarray:
    """Vectorised measurement probabilities for an (M, >=2) state array.

    Off-map states get the configured floor instead of an error, so the
    filter stays well-defined when particles drift past the map edge.
    """
    if mode not in MODES:
        raise ValueError(f"unknown measurement mode {mode!r}; expected one of {MODES}")
    grid = field.grid
    p = field.probabilities
    xs = np.asarray(states, dtype=np.float64)[:, 0]
    ys = np.asarray(states, dtype=np.float64)[:, 1]
    ex, ey = grid.extent
    inside = (xs >= 0) & (xs <= ex) & (ys >= 0) & (ys <= ey)

    out = np.full(xs.shape, field.floor)
    if not inside.any():
        return out
    s = grid.cell_interval
    gx = xs[inside] / s
    gy = ys[inside] / s
    i = np.minimum(gx.astype(np.int64), grid.width - 2)
    j = np.minimum(gy.astype(np.int64), grid.height - 2)
    sw = j * grid.width + i
    corners = np.stack([p[sw], p[sw + 1], p[sw + grid.width], p[sw + grid.width + 1]])
    if mode == "corner-sum":
        out[inside] = corners.sum(axis=0)
    else:
        tx = gx - i
        ty = gy - j
        w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty])
        out[inside] = (w * corners).sum(axis=0)
    return out


def _contrast_grid(field: ProbabilityField, contrast: str) -> np.ndarray:
    values = field.probabilities.reshape(field.grid.height, field.grid.width)
    if contrast == "exponential":
        values = np.exp(values)
    elif contrast != "linear":
        raise ValueError(f"unknown contrast {contrast!r}")
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-300:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def emit_heatmap(
    field: ProbabilityField,
    contrast: str = "linear",
    csv_path: str | None = None,
    pgm_path: str | None = None,
) -> np.ndarray:
    """Render the field to [0, 1] and optionally write CSV / 16-bit PGM.

    The CSV carries one ``x,y,p`` row per cell in local metres. The PGM is
    binary (P5, maxval 65535) with the northernmost row first so the image
    reads like a map.
    """
    grid = _contrast_grid(field, contrast)
    g = field.grid
    if csv_path is not None:
        with open(csv_path, "w", encoding="ascii") as fh:
            fh.write("x,y,p\n")
            for row in range(g.height):
                for col in range(g.width):
                    x = col * g.cell_interval
                    y = row * g.cell_interval
                    fh.write(f"{x:.9g},{y:.9g},{grid[row, col]:.9g}\n")
    if pgm_path is not None:
        samples = np.rint(grid[::-1, :] * 65535).astype(">u2")
        with open(pgm_path, "wb") as fh:
            fh.write(f"P5\n{g.width} {g.height}\n65535\n".encode("ascii"))
            fh.write(samples.tobytes())
    return grid


def read_heatmap_csv(path: str) -> np.ndarray:
    """Parse a heatmap CSV back into its (height, width) value grid."""
    xs, ys, ps = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "x,y,p":
            raise ValueError(f"unexpected heatmap header {header!r}")
        for line in fh:
            a, b, c = line.strip().split(",")
            xs.append(float(a))
            ys.append(float(b))
            ps.append(float(c))
    width = len(set(xs))
    height = len(set(ys))
    if width * height != len(ps):
        raise ValueError("heatmap CSV is not a full grid")
    return np.array(ps).reshape(height, width)
