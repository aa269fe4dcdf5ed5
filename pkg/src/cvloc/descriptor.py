"""Global descriptors from sets of local features.

Local features are aggregated into a fixed-length vector by summing their
soft-assigned residuals to a bank of cluster centroids. Because the sum
runs over an unordered set, the descriptor is invariant to any reordering
of the input features, which is what makes ground and overhead views
comparable after the branches are aligned.

Two pipeline shapes are provided:

* ``DualPipeline``   - one independent aggregator (and reduction) per view.
* ``SharedPipeline`` - a per-view affine layer, a shared affine layer, then
  one aggregator shared by both views.

Parameters are plain arrays loaded from a binary container or randomly
initialised from a seed; there is no training here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SATELLITE = "satellite"
GROUND = "ground"
VIEWS = (SATELLITE, GROUND)

DEFAULT_FEATURE_DIM = 16
DEFAULT_CLUSTERS = 8
DEFAULT_REDUCED_DIM = 32

_MAGIC = b"CVLDESC1"
_VERSION = 1


@dataclass(frozen=True)
class LocalFeatureSet:
    """An unordered set of N local feature vectors of dimension D."""

    features: np.ndarray  # (N, D)
    view: str

    def __post_init__(self):
        f = self.features
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"features must be (N, D) with N >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features must be finite")
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}")


@dataclass(frozen=True)
class GlobalDescriptor:
    values: np.ndarray
    view: str


@dataclass(frozen=True)
class VladParams:
    """Centroids plus the affine soft-assignment parameters, one row per cluster."""

    centroids: np.ndarray  # (K, D)
    assign_weights: np.ndarray  # (K, D)
    assign_bias: np.ndarray  # (K,)

    def __post_init__(self):
        k, d = self.centroids.shape
        if k < 1:
            raise ValueError("need at least one cluster")
        if self.assign_weights.shape != (k, d) or self.assign_bias.shape != (k,):
            raise ValueError("assignment parameter shapes must match centroids")
        for a in (self.centroids, self.assign_weights, self.assign_bias):
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")

    @property
    def clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class AffineMap:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("affine map shapes inconsistent")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.astype(np.float64).T + self.bias.astype(np.float64)


@dataclass(frozen=True)
class TransformParams:
    """Per-view first layer plus the shared second layer of the shared pipeline."""

    satellite: AffineMap
    ground: AffineMap
    shared: AffineMap

    def __post_init__(self):
        if self.satellite.in_dim != self.ground.in_dim:
            raise ValueError("per-view transforms must share the input dimension")
        if not (self.satellite.out_dim == self.ground.out_dim == self.shared.in_dim):
            raise ValueError("transform dimensions must chain")

    def for_view(self, view: str) -> AffineMap:
        return self.satellite if view == SATELLITE else self.ground


@dataclass(frozen=True)
class ReductionParams:
    projection: AffineMap  # (R, K*D)

    @property
    def out_dim(self) -> int:
        return self.projection.out_dim


@dataclass(frozen=True)
class BranchParams:
    vlad: VladParams
    reduction: ReductionParams


@dataclass(frozen=True)
class DualPipeline:
    """Independent aggregator and reduction per view; cluster counts must match."""

    satellite: BranchParams
    ground: BranchParams
    normalize_output: bool = True

    def __post_init__(self):
        if self.satellite.vlad.clusters != self.ground.vlad.clusters:
            raise ValueError("both aggregators must use the same cluster count")

    def branch(self, view: str) -> BranchParams:
        return self.satellite if view == SATELLITE else self.ground


@dataclass(frozen=True)
class SharedPipeline:
    """Per-view transform into a common space, then one shared aggregator."""

    transform: TransformParams
    vlad: VladParams
    reduction: ReductionParams
    normalize_output: bool = True

    def __post_init__(self):
        if self.transform.shared.out_dim != self.vlad.dim:
            raise ValueError("shared transform output must match aggregator dimension")


PipelineConfig = DualPipeline | SharedPipeline


def soft_assign(params: VladParams, u: np.ndarray) -> np.ndarray:
    """Soft cluster assignment of one feature: softmax over w_k . u + b_k."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (params.dim,):
        raise ValueError(f"feature dim {u.shape} does not match clusters of dim {params.dim}")
    return _assign_batch(params, u[None, :])[0]


def _assign_batch(params: VladParams, feats: np.ndarray) -> np.ndarray:
    """(..., D) features -> (..., K) simplex rows, numerically stable."""
    logits = feats @ params.assign_weights.astype(np.float64).T + params.assign_bias.astype(np.float64)
    logits -= logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def vlad_aggregate(params: VladParams, feats: LocalFeatureSet) -> GlobalDescriptor:
    """Sum of soft-assigned residuals to each centroid, concatenated per cluster.

    Block k of the output is sum_j a_k(u_j) * (u_j - c_k), so the result has
    dimension K*D and does not depend on the order of the features.
    """
    u = feats.features.astype(np.float64)
    if u.shape[1] != params.dim:
        raise ValueError(f"feature dim {u.shape[1]} != aggregator dim {params.dim}")
    v = _vlad_batch(params, u[None, :, :])[0]
    return GlobalDescriptor(v, feats.view)


def _vlad_batch(params: VladParams, feats: np.ndarray) -> np.ndarray:
    """(B, N, D) feature batches -> (B, K*D) aggregated residuals."""
    c = params.centroids.astype(np.float64)
    a = _assign_batch(params, feats)  # (B, N, K)
    weighted = np.einsum("bnk,bnd->bkd", a, feats)
    totals = a.sum(axis=1)  # (B, K)
    v = weighted - totals[:, :, None] * c[None, :, :]
    return v.reshape(feats.shape[0], -1)


def _finish(values: np.ndarray, reduction: ReductionParams, normalize: bool) -> np.ndarray:
    out = reduction.projection.apply(values)
    if normalize:
        norms = np.linalg.norm(out, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("cannot normalise a zero descriptor")
        out = out / norms
    return out


def forward(config: PipelineConfig, feats: LocalFeatureSet) -> GlobalDescriptor:
    """Full descriptor pipeline for one feature set."""
    values = forward_batch(config, feats.features.astype(np.float64)[None, :, :], feats.view)[0]
    return GlobalDescriptor(values, feats.view)


def forward_batch(config: PipelineConfig, feats: np.ndarray, view: str) -> np.ndarray:
    """Pipeline over a (B, N, D) batch of feature sets, returning (B, R)."""
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}")
    feats = np.asarray(feats, dtype=np.float64)
    if isinstance(config, DualPipeline):
        branch = config.branch(view)
        v = _vlad_batch(branch.vlad, feats)
        return _finish(v, branch.reduction, config.normalize_output)
    first = config.transform.for_view(view)
    transformed = config.transform.shared.apply(first.apply(feats))
    v = _vlad_batch(config.vlad, transformed)
    return _finish(v, config.reduction, config.normalize_output)


# ---------------------------------------------------------------------------
# Seeded initialisation and the binary parameter container.
# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, shape).astype(np.float32)


def _random_vlad(rng, k: int, d: int) -> VladParams:
    return VladParams(_uniform(rng, k, d), _uniform(rng, k, d), _uniform(rng, k))


def _random_affine(rng, out_dim: int, in_dim: int) -> AffineMap:
    return AffineMap(_uniform(rng, out_dim, in_dim), _uniform(rng, out_dim))


def random_dual_pipeline(
    seed: int,
    dim: int = DEFAULT_FEATURE_DIM,
    clusters: int = DEFAULT_CLUSTERS,
    reduced_dim: int = DEFAULT_REDUCED_DIM,
    normalize_output: bool = True,
    tie_views: bool = False,
) -> DualPipeline:
    """Seeded random dual pipeline. ``tie_views`` reuses the satellite branch
    for the ground view, emulating a converged, aligned pair of branches."""
    rng = np.random.Generator(np.random.Philox(seed))
    sat = BranchParams(_random_vlad(rng, clusters, dim), ReductionParams(_random_affine(rng, reduced_dim, clusters * dim)))
    grd = sat if tie_views else BranchParams(
        _random_vlad(rng, clusters, dim), ReductionParams(_random_affine(rng, reduced_dim, clusters * dim))
    )
    return DualPipeline(sat, grd, normalize_output)


def random_shared_pipeline(
    seed: int,
    dim: int = DEFAULT_FEATURE_DIM,
    clusters: int = DEFAULT_CLUSTERS,
    reduced_dim: int = DEFAULT_REDUCED_DIM,
    hidden_dim: int | None = None,
    normalize_output: bool = True,
    tie_views: bool = False,
) -> SharedPipeline:
    rng = np.random.Generator(np.random.Philox(seed))
    h = dim if hidden_dim is None else hidden_dim
    sat = _random_affine(rng, h, dim)
    grd = sat if tie_views else _random_affine(rng, h, dim)
    shared = _random_affine(rng, h, h)
    vlad = _random_vlad(rng, clusters, h)
    red = ReductionParams(_random_affine(rng, reduced_dim, clusters * h))
    return SharedPipeline(TransformParams(sat, grd, shared), vlad, red, normalize_output)


def _write_array(fh, a: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _read_array(fh, *shape: int) -> np.ndarray:
    n = int(np.prod(shape))
    buf = fh.read(4 * n)
    if len(buf) != 4 * n:
        raise ValueError("parameter file truncated")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).copy()


def _write_vlad(fh, p: VladParams) -> None:
    _write_array(fh, p.centroids)
    _write_array(fh, p.assign_weights)
    _write_array(fh, p.assign_bias)


def _read_vlad(fh, k: int, d: int) -> VladParams:
    return VladParams(_read_array(fh, k, d), _read_array(fh, k, d), _read_array(fh, k))


def _write_affine(fh, m: AffineMap) -> None:
    _write_array(fh, m.weight)
    _write_array(fh, m.bias)


def _read_affine(fh, out_dim: int, in_dim: int) -> AffineMap:
    return AffineMap(_read_array(fh, out_dim, in_dim), _read_array(fh, out_dim))


def save_pipeline(config: PipelineConfig, path: str) -> None:
    """Write the parameter container; see README for the exact byte layout."""
    variant = 1 if isinstance(config, DualPipeline) else 2
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, variant))
        if isinstance(config, DualPipeline):
            k, d = config.satellite.vlad.clusters, config.satellite.vlad.dim
            r = config.satellite.reduction.out_dim
            fh.write(struct.pack("<IIIIII", k, d, r, 0, 0, int(config.normalize_output)))
            for branch in (config.satellite, config.ground):
                _write_vlad(fh, branch.vlad)
            for branch in (config.satellite, config.ground):
                _write_affine(fh, branch.reduction.projection)
        else:
            k = config.vlad.clusters
            d = config.transform.satellite.in_dim
            r = config.reduction.out_dim
            h1 = config.transform.satellite.out_dim
            h2 = config.transform.shared.out_dim
            fh.write(struct.pack("<IIIIII", k, d, r, h1, h2, int(config.normalize_output)))
            _write_vlad(fh, config.vlad)
            _write_affine(fh, config.transform.satellite)
            _write_affine(fh, config.transform.ground)
            _write_affine(fh, config.transform.shared)
            _write_affine(fh, config.reduction.projection)


def load_pipeline(path: str) -> PipelineConfig:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a descriptor parameter file: bad magic {magic!r}")
        version, variant = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
        k, d, r, h1, h2, norm = struct.unpack("<IIIIII", fh.read(24))
        if variant == 1:
            sat_vlad = _read_vlad(fh, k, d)
            grd_vlad = _read_vlad(fh, k, d)
            sat_red = ReductionParams(_read_affine(fh, r, k * d))
            grd_red = ReductionParams(_read_affine(fh, r, k * d))
            return DualPipeline(BranchParams(sat_vlad, sat_red), BranchParams(grd_vlad, grd_red), bool(norm))
        if variant == 2:
            vlad = _read_vlad(fh, k, h2)
            sat = _read_affine(fh, h1, d)
            grd = _read_affine(fh, h1, d)
            shared = _read_affine(fh, h2, h1)
            red = ReductionParams(_read_affine(fh, r, k * h2))
            return SharedPipeline(TransformParams(sat, grd, shared), vlad, red, bool(norm))
        raise ValueError(f"unknown pipeline variant {variant}")
