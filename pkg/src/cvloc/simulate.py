"""Scenario-driven simulation: replay a trajectory through the full
localization loop, log per-step estimates, and compute summary metrics.

Everything downstream of the scenario config is deterministic in the
master seed: the filter noise, the simulated odometry corruption, and the
world realisation, so two runs of the same scenario produce byte-identical
step logs.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .config import ScenarioConfig
from .descriptor import (
    GROUND,
    PipelineConfig,
    forward,
    load_pipeline,
    random_dual_pipeline,
    random_shared_pipeline,
)
from .mapgrid import GridMap, LocalPoint, local_to_geo, tessellate
from .measurement import location_probabilities, emit_heatmap
from .motion import MotionNoise, Pose
from .pfilter import init_particles, localize_step
from .retrieval import DescriptorDatabase, build_db, recall_at_k, recall_at_top_percent, recall_vs_distance
from .world import AliasRegion, Corridor, SyntheticWorld, build_descriptor_map, synth_features


def position_error(est: Pose, gt: Pose) -> float:
    """Euclidean distance between estimated and true position, metres."""
    return math.hypot(est.x - gt.x, est.y - gt.y)


def heading_error(est_theta: float, gt_theta: float) -> float:
    """Signed angle from the true heading vector to the estimated one.

    Computed as atan2 of the cross and dot products of the two heading
    unit vectors, so the result lives in (-pi, pi] with no wrap-around.
    """
    cross = math.cos(gt_theta) * math.sin(est_theta) - math.sin(gt_theta) * math.cos(est_theta)
    dot = math.cos(gt_theta) * math.cos(est_theta) + math.sin(gt_theta) * math.sin(est_theta)
    return math.atan2(cross, dot)


@dataclass
class StepRecord:
    t: int
    est_x: float
    est_y: float
    est_theta: float
    gt_x: float
    gt_y: float
    gt_theta: float
    err_pos: float
    err_theta: float
    ess: float
    degenerate_flag: int

    _COLUMNS = ("t", "est_x", "est_y", "est_theta", "gt_x", "gt_y", "gt_theta",
                "err_pos", "err_theta", "ess", "degenerate_flag")

    def csv_row(self) -> str:
        vals = [getattr(self, c) for c in self._COLUMNS]
        return ",".join(_fmt(v) for v in vals)

    def json_line(self) -> str:
        return json.dumps({c: getattr(self, c) for c in self._COLUMNS}, sort_keys=False)


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return format(v, ".17g")


@dataclass
class RunSummary:
    mean_position_error: float
    median_position_error: float
    max_position_error: float
    mean_heading_error_deg: float
    steps: int
    wall_time_s: float
    steps_per_second: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------


def build_grid(cfg: ScenarioConfig) -> GridMap:
    return tessellate(cfg.geo_bounds(), cfg.cell_interval)


def build_world(cfg: ScenarioConfig) -> SyntheticWorld:
    grid = build_grid(cfg)
    ex, ey = grid.extent
    corridor = None
    if cfg.corridor:
        corridor = Corridor(ex / 2, ey / 2, _loop_radius(cfg), cfg.corridor_width, cfg.corridor_gain)
    aliases = tuple(AliasRegion(*vals) for vals in cfg.parsed_aliases())
    return SyntheticWorld(
        grid=grid,
        seed=cfg.world_seed,
        n_features=cfg.world_features,
        feature_dim=cfg.world_feature_dim,
        length_scale=cfg.world_length_scale,
        view_noise=cfg.world_view_noise,
        flat=cfg.world_kind == "flat",
        corridor=corridor,
        aliases=aliases,
    )


def build_pipeline(cfg: ScenarioConfig) -> PipelineConfig:
    if cfg.params_file:
        return load_pipeline(cfg.params_file)
    # Both views share one parameter set, standing in for a trained,
    # aligned pair of branches.
    if cfg.pipeline_variant == "dual":
        return random_dual_pipeline(
            cfg.params_seed,
            dim=cfg.world_feature_dim,
            clusters=cfg.clusters,
            reduced_dim=cfg.reduced_dim,
            normalize_output=cfg.normalize_descriptors,
            tie_views=True,
        )
    return random_shared_pipeline(
        cfg.params_seed,
        dim=cfg.world_feature_dim,
        clusters=cfg.clusters,
        reduced_dim=cfg.reduced_dim,
        hidden_dim=cfg.hidden_dim,
        normalize_output=cfg.normalize_descriptors,
        tie_views=True,
    )


def filter_noise(cfg: ScenarioConfig) -> MotionNoise:
    return MotionNoise(
        cfg.sigma_trans, math.radians(cfg.sigma_rot_deg), cfg.sigma_trans_rate, cfg.sigma_rot_rate
    )


def sensor_noise(cfg: ScenarioConfig) -> MotionNoise:
    return MotionNoise(
        cfg.odom_sigma_trans,
        math.radians(cfg.odom_sigma_rot_deg),
        cfg.odom_sigma_trans_rate,
        cfg.odom_sigma_rot_rate,
    )


def _loop_radius(cfg: ScenarioConfig) -> float:
    return cfg.traj_length / (2.0 * math.pi)


def generate_trajectory(cfg: ScenarioConfig, grid: GridMap) -> list[Pose]:
    """Ground-truth poses (traj_steps + 1 of them) in local metres.

    ``loop`` follows a circle of circumference traj_length around the map
    centre, heading tangent; ``line`` runs east through the centre.
    """
    ex, ey = grid.extent
    cx, cy = ex / 2.0, ey / 2.0
    n = cfg.traj_steps
    poses = []
    if cfg.traj_kind == "loop":
        r = _loop_radius(cfg)
        for t in range(n + 1):
            phi = 2.0 * math.pi * t / n
            poses.append(Pose(cx + r * math.cos(phi), cy + r * math.sin(phi), phi + math.pi / 2.0))
    else:
        step = cfg.traj_length / n
        x0 = cx - cfg.traj_length / 2.0
        for t in range(n + 1):
            poses.append(Pose(x0 + t * step, cy, 0.0))
    for p in poses:
        if not grid.contains(LocalPoint(p.x, p.y)):
            raise ValueError(
                f"trajectory leaves the map at ({p.x:.1f}, {p.y:.1f}); "
                "enlarge the bounds or shorten traj_length"
            )
    return poses


def load_trajectory(path: str) -> list[Pose]:
    """CSV trajectory with header t,x,y,theta."""
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,x,y,theta":
            raise ValueError(f"{path}: expected header 't,x,y,theta', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns")
            _, x, y, theta = parts
            poses.append(Pose(float(x), float(y), float(theta)))
    if len(poses) < 2:
        raise ValueError(f"{path}: trajectory needs at least 2 poses")
    return poses


def save_trajectory(poses: list[Pose], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y,theta\n")
        for t, p in enumerate(poses):
            fh.write(f"{t},{_fmt(p.x)},{_fmt(p.y)},{_fmt(p.theta)}\n")


def scenario_trajectory(cfg: ScenarioConfig, grid: GridMap) -> list[Pose]:
    if cfg.trajectory_file:
        return load_trajectory(cfg.trajectory_file)
    return generate_trajectory(cfg, grid)


# ---------------------------------------------------------------------------
# The simulation loop
# ---------------------------------------------------------------------------


def run_simulation(cfg: ScenarioConfig, out_dir: str | None = None) -> tuple[RunSummary, list[StepRecord]]:
    """Replay the scenario through the full localization loop.

    Returns the summary plus per-step records; when ``out_dir`` (or
    cfg.out_dir) is set, writes the step log, the summary JSON, and any
    requested heatmaps there.
    """
    cfg.validate()
    world = build_world(cfg)
    pipeline = build_pipeline(cfg)
    db_map = build_descriptor_map(world, pipeline, cfg.world_seed)
    poses = scenario_trajectory(cfg, world.grid)

    master = np.random.SeedSequence(cfg.master_seed)
    filter_ss, sensor_ss = master.spawn(2)
    filter_rng = np.random.Generator(np.random.Philox(filter_ss))
    sensor_rng = np.random.Generator(np.random.Philox(sensor_ss))

    noise = filter_noise(cfg)
    odo_noise = sensor_noise(cfg)
    spread = MotionNoise(cfg.init_spread_xy, math.radians(cfg.init_spread_theta_deg), 0.0, 0.0)
    pset = init_particles(poses[0], spread, cfg.particles, filter_rng)
    est_heading = poses[0].theta

    target = out_dir if out_dir is not None else (cfg.out_dir or None)
    heat_dir = None
    if target:
        os.makedirs(target, exist_ok=True)
        if cfg.heatmap_every > 0:
            heat_dir = os.path.join(target, "heatmaps")
            os.makedirs(heat_dir, exist_ok=True)

    ess_gate = cfg.ess_threshold if cfg.ess_threshold > 0 else None
    records: list[StepRecord] = []
    t0 = time.perf_counter()
    for t in range(1, len(poses)):
        gt_prev, gt = poses[t - 1], poses[t]
        ground = synth_features(world, gt, cfg.world_seed, view=GROUND)
        desc = forward(pipeline, ground)
        field = location_probabilities(db_map, desc, floor=cfg.probability_floor)

        est, pset = localize_step(
            db_map, desc, gt_prev, gt, pset, noise, filter_rng,
            sensor_noise=odo_noise, sensor_rng=sensor_rng,
            mode=cfg.measurement_mode, prev_heading=est_heading,
            field=field, ess_threshold=ess_gate,
        )
        est_heading = est.theta

        records.append(
            StepRecord(
                t=t,
                est_x=est.x, est_y=est.y, est_theta=est.theta,
                gt_x=gt.x, gt_y=gt.y, gt_theta=gt.theta,
                err_pos=position_error(est, gt),
                err_theta=heading_error(est.theta, gt.theta),
                ess=pset.ess if pset.ess is not None else float(len(pset)),
                degenerate_flag=int(pset.degenerate),
            )
        )
        if heat_dir and t % cfg.heatmap_every == 0:
            stem = os.path.join(heat_dir, f"field_{t:05d}")
            emit_heatmap(field, cfg.heatmap_contrast, csv_path=stem + ".csv", pgm_path=stem + ".pgm")
    wall = time.perf_counter() - t0

    errs = np.array([r.err_pos for r in records])
    headings = np.array([abs(r.err_theta) for r in records])
    summary = RunSummary(
        mean_position_error=float(errs.mean()),
        median_position_error=float(np.median(errs)),
        max_position_error=float(errs.max()),
        mean_heading_error_deg=float(np.degrees(headings.mean())),
        steps=len(records),
        wall_time_s=wall,
        steps_per_second=len(records) / wall if wall > 0 else float("inf"),
    )

    if target:
        write_step_log(records, os.path.join(target, f"steps.{cfg.log_format}"), cfg.log_format)
        with open(os.path.join(target, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(summary.to_json() + "\n")
    return summary, records


def write_step_log(records: list[StepRecord], path: str, log_format: str = "csv") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if log_format == "csv":
            fh.write(",".join(StepRecord._COLUMNS) + "\n")
            for r in records:
                fh.write(r.csv_row() + "\n")
        else:
            for r in records:
                fh.write(r.json_line() + "\n")


# ---------------------------------------------------------------------------
# Retrieval evaluation
# ---------------------------------------------------------------------------


def database_from_map(db_map: GridMap) -> DescriptorDatabase:
    """One database entry per cell: id = cell index, geo = cell location."""
    if db_map.descriptors is None:
        raise ValueError("map has no descriptors")
    items = []
    for i in range(db_map.num_cells):
        geo = local_to_geo(db_map, db_map.cell_location(i))
        items.append((i, geo, db_map.descriptors[i]))
    return build_db(items)


def _nearest_cell(grid: GridMap, x: float, y: float) -> int:
    s = grid.cell_interval
    col = min(max(int(round(x / s)), 0), grid.width - 1)
    row = min(max(int(round(y / s)), 0), grid.height - 1)
    return row * grid.width + col


def eval_retrieval(cfg: ScenarioConfig, out_dir: str | None = None) -> dict:
    """Retrieval metrics on the scenario world.

    Queries are ground-view descriptors at seeded random in-map poses; the
    true match is the nearest cell. Emits the recall@K curve, the
    distance-threshold recall curve, and recall at the configured top
    percent, as plot-ready CSVs when an output directory is given.
    """
    cfg.validate()
    world = build_world(cfg)
    pipeline = build_pipeline(cfg)
    db_map = build_descriptor_map(world, pipeline, cfg.world_seed)
    db = database_from_map(db_map)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.master_seed, spawn_key=(99,))))
    ex, ey = world.grid.extent
    id_queries = []
    geo_queries = []
    for _ in range(cfg.eval_queries):
        x = rng.uniform(0.0, ex)
        y = rng.uniform(0.0, ey)
        theta = rng.uniform(-math.pi, math.pi)
        desc = forward(pipeline, synth_features(world, Pose(x, y, theta), cfg.world_seed, view=GROUND))
        id_queries.append((_nearest_cell(world.grid, x, y), desc.values))
        geo_queries.append((local_to_geo(world.grid, LocalPoint(x, y)), desc.values))

    ks = list(range(1, cfg.eval_top_k + 1))
    topk_curve = [(k, recall_at_k(db, id_queries, k)) for k in ks]
    top_percent = recall_at_top_percent(db, id_queries, cfg.eval_percent)
    threshold_curve = recall_vs_distance(db, geo_queries, cfg.parsed_thresholds())

    result = {
        "database_size": len(db),
        "queries": cfg.eval_queries,
        "recall_top_k": topk_curve,
        "recall_top_percent": {"percent": cfg.eval_percent, "recall": top_percent},
        "recall_vs_distance": threshold_curve,
    }
    target = out_dir if out_dir is not None else (cfg.out_dir or None)
    if target:
        os.makedirs(target, exist_ok=True)
        with open(os.path.join(target, "recall_topk.csv"), "w", encoding="utf-8") as fh:
            fh.write("k,recall\n")
            for k, r in topk_curve:
                fh.write(f"{k},{_fmt(r)}\n")
        with open(os.path.join(target, "recall_threshold.csv"), "w", encoding="utf-8") as fh:
            fh.write("threshold_m,recall\n")
            for thr, r in threshold_curve:
                fh.write(f"{_fmt(thr)},{_fmt(r)}\n")
        with open(os.path.join(target, "recall_percent.csv"), "w", encoding="utf-8") as fh:
            fh.write("percent,recall\n")
            fh.write(f"{_fmt(cfg.eval_percent)},{_fmt(top_percent)}\n")
        with open(os.path.join(target, "retrieval_summary.json"), "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
    return result


def dump_loss_surface(path: str, alpha: float = 10.0, margin: float = 1.0) -> None:
    """Loss-vs-distance-gap CSV for the triplet loss family."""
    from .losses import TripletDistances, max_margin_triplet, weighted_soft_margin

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("d,max_margin,soft_margin,weighted\n")
        for d in np.linspace(-3.0, 3.0, 121):
            pos, neg = (d, 0.0) if d >= 0 else (0.0, -d)
            t = TripletDistances(pos, neg)
            mm, _ = max_margin_triplet(t, margin)
            sm, _ = weighted_soft_margin(t, 1.0)
            wm, _ = weighted_soft_margin(t, alpha)
            fh.write(f"{_fmt(float(d))},{_fmt(mm)},{_fmt(sm)},{_fmt(wm)}\n")
