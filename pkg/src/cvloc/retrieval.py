"""Geo-tagged descriptor database: exact nearest-neighbour search and the
retrieval metrics (top-K / top-percent recall, distance-threshold recall).

Search is a brute-force linear scan over plain Euclidean distances, which
keeps results exact and oracle-comparable at the database sizes this
package targets (<= 1e5 entries).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .mapgrid import geo_distance_m

_MAGIC = b"CVLOCDB1"
_VERSION = 1


@dataclass(frozen=True)
class DescriptorDatabase:
    ids: np.ndarray  # (N,) uint64
    geos: np.ndarray  # (N, 2) float64 (lat, lon) degrees
    descriptors: np.ndarray  # (N, R) float32

    def __post_init__(self):
        n = self.ids.shape[0]
        if self.geos.shape != (n, 2) or self.descriptors.shape[0] != n or self.descriptors.ndim != 2:
            raise ValueError("inconsistent database arrays")
        if len(np.unique(self.ids)) != n:
            raise ValueError("duplicate ids in database")

    @property
    def dimension(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]

    def entry(self, id_: int) -> tuple[tuple[float, float], np.ndarray]:
        idx = np.nonzero(self.ids == id_)[0]
        if idx.size == 0:
            raise KeyError(f"id {id_} not in database")
        i = int(idx[0])
        return (float(self.geos[i, 0]), float(self.geos[i, 1])), self.descriptors[i]


@dataclass(frozen=True)
class RetrievalResult:
    ids: np.ndarray
    distances: np.ndarray  # ascending Euclidean distances


def build_db(items: Iterable[tuple[int, tuple[float, float], np.ndarray]]) -> DescriptorDatabase:
    """Assemble a database from (id, (lat, lon), descriptor) entries."""
    items = list(items)
    if not items:
        return DescriptorDatabase(
            np.empty(0, dtype=np.uint64), np.empty((0, 2)), np.empty((0, 0), dtype=np.float32)
        )
    dim = np.asarray(items[0][2]).shape[0]
    ids = np.array([it[0] for it in items], dtype=np.uint64)
    geos = np.array([it[1] for it in items], dtype=np.float64)
    descs = np.empty((len(items), dim), dtype=np.float32)
    for row, (_, _, d) in enumerate(items):
        d = np.asarray(d, dtype=np.float32)
        if d.shape != (dim,):
            raise ValueError(f"descriptor {row} has dimension {d.shape}, expected ({dim},)")
        descs[row] = d
    return DescriptorDatabase(ids, geos, descs)


def query(db: DescriptorDatabase, q: np.ndarray, k: int) -> RetrievalResult:
    """Exact k nearest entries by Euclidean distance, ties broken by id."""
    if len(db) == 0:
        raise ValueError("cannot query an empty database")
    if not 1 <= k <= len(db):
        raise ValueError(f"k must be in [1, {len(db)}], got {k}")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (db.dimension,):
        raise ValueError(f"query dimension {q.shape} != database dimension {db.dimension}")
    diff = db.descriptors.astype(np.float64) - q[None, :]
    dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((db.ids, dists))[:k]
    return RetrievalResult(db.ids[order].copy(), dists[order].copy())


def recall_at_top_percent(
    db: DescriptorDatabase,
    queries: Sequence[tuple[int, np.ndarray]],
    percent: float,
) -> float:
    """Fraction of queries whose true id lands in the closest ``percent``
    of the database (set size rounded up, so at least 1)."""
    if not 0 < percent <= 100:
        raise ValueError(f"percent must be in (0, 100], got {percent}")
    k = max(1, math.ceil(percent / 100.0 * len(db)))
    return recall_at_k(db, queries, k)


def recall_at_k(db: DescriptorDatabase, queries: Sequence[tuple[int, np.ndarray]], k: int) -> float:
    hits = 0
    for true_id, desc in queries:
        result = query(db, desc, k)
        if np.uint64(true_id) in result.ids:
            hits += 1
    return hits / len(queries)


def recall_vs_distance(
    db: DescriptorDatabase,
    queries: Sequence[tuple[tuple[float, float], np.ndarray]],
    thresholds: Sequence[float],
) -> list[tuple[float, float]]:
    """Recall curve over metric thresholds: a query counts as localized at
    threshold T when its top-1 entry lies within T metres of the true geo."""
    errors = []
    for (lat, lon), desc in queries:
        top = query(db, desc, 1)
        (glat, glon), _ = db.entry(int(top.ids[0]))
        errors.append(geo_distance_m(lat, lon, glat, glon))
    errors_arr = np.array(errors)
    return [(float(t), float(np.mean(errors_arr <= t))) for t in thresholds]


def add_distractors(
    db: DescriptorDatabase, distractors: Iterable[tuple[int, tuple[float, float], np.ndarray]]
) -> DescriptorDatabase:
    """New database with extra entries merged in; id collisions are errors."""
    extra = build_db(distractors)
    if len(extra) == 0:
        return db
    if extra.dimension != db.dimension:
        raise ValueError("distractor dimension mismatch")
    if np.intersect1d(db.ids, extra.ids).size:
        raise ValueError("distractor ids collide with existing entries")
    return DescriptorDatabase(
        np.concatenate([db.ids, extra.ids]),
        np.concatenate([db.geos, extra.geos]),
        np.concatenate([db.descriptors, extra.descriptors]),
    )


def save_db(db: DescriptorDatabase, path: str) -> None:
    """Binary layout: magic, u32 version, u64 count, u32 dimension, then per
    entry u64 id, f64 lat, f64 lon, f32 descriptor; all little-endian."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQI", _VERSION, len(db), db.dimension))
        for i in range(len(db)):
            fh.write(struct.pack("<Qdd", int(db.ids[i]), db.geos[i, 0], db.geos[i, 1]))
            fh.write(np.ascontiguousarray(db.descriptors[i], dtype="<f4").tobytes())


def load_db(path: str) -> DescriptorDatabase:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a descriptor database file")
        version, count, dim = struct.unpack("<IQI", fh.read(16))
        if version != _VERSION:
            raise ValueError(f"unsupported database version {version}")
        ids = np.empty(count, dtype=np.uint64)
        geos = np.empty((count, 2), dtype=np.float64)
        descs = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            ids[i], geos[i, 0], geos[i, 1] = struct.unpack("<Qdd", fh.read(24))
            buf = fh.read(4 * dim)
            if len(buf) != 4 * dim:
                raise ValueError("database file truncated")
            descs[i] = np.frombuffer(buf, dtype="<f4")
        return DescriptorDatabase(ids, geos, descs)
