"""Synthetic worlds: deterministic local-feature fields over the map.

A world stands in for real imagery. Its feature field is a bank of random
sinusoids of the local position, so features vary smoothly and descriptors
at nearby places stay close while distant places decorrelate. Ground-view
feature sets are the satellite set at the same location with the feature
order rotated by heading (the aggregation is order-invariant, so a correct
pipeline is unaffected) plus a small view-specific offset field that keeps
cross-view matching realistic rather than exact.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .descriptor import GROUND, SATELLITE, LocalFeatureSet, PipelineConfig, forward_batch
from .mapgrid import GridMap, LocalPoint, OutOfMapError
from .motion import Pose

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AliasRegion:
    """Positions within ``radius`` of (dst_x, dst_y) take their features
    from the same offset around (src_x, src_y), producing two distinct
    places with identical descriptors."""

    src_x: float
    src_y: float
    dst_x: float
    dst_y: float
    radius: float


@dataclass(frozen=True)
class Corridor:
    """Ring-shaped feature bias emulating road-like appearance: cells near
    the corridor share a channel with on-road queries, so similarity
    heatmaps light up along it."""

    center_x: float
    center_y: float
    radius: float
    width: float
    gain: float


@dataclass(frozen=True)
class SyntheticWorld:
    grid: GridMap
    seed: int
    n_features: int = 24
    feature_dim: int = 16
    length_scale: float = 25.0
    view_noise: float = 0.05
    flat: bool = False
    corridor: Corridor | None = None
    aliases: tuple[AliasRegion, ...] = ()

    def __post_init__(self):
        if self.n_features < 1 or self.feature_dim < 1:
            raise ValueError("need at least one feature and one dimension")
        if self.length_scale <= 0:
            raise ValueError("length scale must be positive")


@lru_cache(maxsize=32)
def _field_params(seed: int, n: int, d: int, scale: float, spawn: int):
    """Sinusoid bank parameters: wavevectors, phases. Cached per seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(spawn,))
    rng = np.random.Generator(np.random.Philox(ss))
    angles = rng.uniform(0.0, TWO_PI, (n, d))
    wavelength = scale * rng.uniform(0.5, 2.0, (n, d))
    mag = TWO_PI / wavelength
    wave = np.stack([mag * np.cos(angles), mag * np.sin(angles)], axis=-1)  # (n, d, 2)
    phase = rng.uniform(0.0, TWO_PI, (n, d))
    return wave, phase


def _eval_field(world: SyntheticWorld, positions: np.ndarray, seed: int, spawn: int) -> np.ndarray:
    """(P, 2) positions -> (P, n_features, feature_dim) sinusoid features."""
    wave, phase = _field_params(seed, world.n_features, world.feature_dim, world.length_scale, spawn)
    if world.flat:
        return np.broadcast_to(np.cos(phase), (positions.shape[0],) + phase.shape).copy()
    arg = np.einsum("pc,ndc->pnd", positions, wave) + phase
    return np.cos(arg)


def _remap_aliases(world: SyntheticWorld, positions: np.ndarray) -> np.ndarray:
    if not world.aliases:
        return positions
    out = positions.copy()
    for region in world.aliases:
        delta = out - np.array([region.dst_x, region.dst_y])
        mask = np.einsum("ij,ij->i", delta, delta) <= region.radius**2
        out[mask] = np.array([region.src_x, region.src_y]) + delta[mask]
    return out


def _apply_corridor(world: SyntheticWorld, feats: np.ndarray, positions: np.ndarray) -> None:
    c = world.corridor
    if c is None:
        return
    r = np.hypot(positions[:, 0] - c.center_x, positions[:, 1] - c.center_y)
    bias = c.gain * np.exp(-((r - c.radius) ** 2) / (2.0 * c.width**2))
    feats[:, :, 0] += bias[:, None]


def _features_at(world: SyntheticWorld, positions: np.ndarray, seed: int, view: str) -> np.ndarray:
    positions = _remap_aliases(world, np.asarray(positions, dtype=np.float64))
    feats = _eval_field(world, positions, seed, spawn=0)
    if view == GROUND and world.view_noise > 0:
        feats = feats + world.view_noise * _eval_field(world, positions, seed, spawn=1)
    _apply_corridor(world, feats, positions)
    return feats


def synth_features(world: SyntheticWorld, pose: Pose, rng_seed: int, view: str = GROUND) -> LocalFeatureSet:
    """Deterministic local features for one pose.

    The seed selects the field realisation; the same (pose, seed) always
    produces the same output. Ground-view sets are additionally rolled by
    heading, exercising the order-invariance of the aggregation stage.
    """
    p = LocalPoint(pose.x, pose.y)
    if not world.grid.contains(p):
        raise OutOfMapError(f"pose ({pose.x}, {pose.y}) outside world bounds")
    feats = _features_at(world, np.array([[pose.x, pose.y]]), rng_seed, view)[0]
    if view == GROUND:
        shift = int(round((pose.theta % TWO_PI) / TWO_PI * world.n_features)) % world.n_features
        feats = np.roll(feats, shift, axis=0)
    return LocalFeatureSet(feats, view)


def satellite_cell_features(world: SyntheticWorld, rng_seed: int) -> np.ndarray:
    """Features for every grid cell at once: (num_cells, N, D)."""
    return _features_at(world, world.grid.locations(), rng_seed, SATELLITE)


def build_descriptor_map(world: SyntheticWorld, pipeline: PipelineConfig, rng_seed: int) -> GridMap:
    """Run every cell's satellite features through the pipeline and store
    the descriptors on the grid (float32, matching the database format)."""
    feats = satellite_cell_features(world, rng_seed)
    descs = forward_batch(pipeline, feats, SATELLITE)
    return world.grid.with_descriptors(descs.astype(np.float32))


def world_fingerprint(world: SyntheticWorld, rng_seed: int) -> str:
    """Hash of the realised field parameters and grid geometry, for
    asserting reproducibility across processes."""
    wave, phase = _field_params(
        rng_seed, world.n_features, world.feature_dim, world.length_scale, 0
    )
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(wave).tobytes())
    h.update(np.ascontiguousarray(phase).tobytes())
    h.update(
        f"{world.grid.origin}|{world.grid.cell_interval}|{world.grid.width}x{world.grid.height}|{world.flat}".encode()
    )
    return h.hexdigest()
