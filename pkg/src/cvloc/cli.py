"""Command-line front end.

Subcommands: build-db, query, localize, simulate, eval. Every scenario key
can be overridden with ``--set key=value``; see config.py for the schema.
Exit codes: 0 success, 2 configuration/input errors, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, ScenarioConfig, apply_overrides, load_config
from .descriptor import GROUND, forward
from .mapgrid import OutOfMapError, local_to_geo
from .measurement import emit_heatmap, location_probabilities, measurement_probability
from .motion import Pose
from .retrieval import load_db, query as db_query, save_db
from .simulate import (
    build_descriptor_map,
    build_pipeline,
    build_world,
    database_from_map,
    dump_loss_surface,
    eval_retrieval,
    run_simulation,
)
from .world import synth_features


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario config file (key = value lines)")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario key (repeatable)",
    )
    p.add_argument("--out-dir", help="output directory (overrides out_dir)")


def _scenario(args) -> ScenarioConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.config:
        return load_config(args.config, overrides)
    cfg = apply_overrides(ScenarioConfig(), overrides)
    cfg.validate()
    return cfg


def _parse_pose(text: str) -> Pose:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--pose expects 'x,y,theta', got {text!r}")
    return Pose(float(parts[0]), float(parts[1]), float(parts[2]))


def cmd_build_db(args) -> int:
    cfg = _scenario(args)
    world = build_world(cfg)
    pipeline = build_pipeline(cfg)
    db_map = build_descriptor_map(world, pipeline, cfg.world_seed)
    db = database_from_map(db_map)
    save_db(db, args.out)
    print(f"wrote {len(db)} descriptors of dimension {db.dimension} to {args.out}")
    return 0


def cmd_query(args) -> int:
    cfg = _scenario(args)
    world = build_world(cfg)
    pipeline = build_pipeline(cfg)
    if args.db:
        db = load_db(args.db)
    else:
        db = database_from_map(build_descriptor_map(world, pipeline, cfg.world_seed))
    pose = _parse_pose(args.pose)
    desc = forward(pipeline, synth_features(world, pose, cfg.world_seed, view=GROUND))
    result = db_query(db, desc.values, args.k)
    print("rank,id,distance,lat,lon")
    for rank, (id_, dist) in enumerate(zip(result.ids, result.distances), start=1):
        (lat, lon), _ = db.entry(int(id_))
        print(f"{rank},{int(id_)},{dist:.6f},{lat:.8f},{lon:.8f}")
    return 0


def cmd_localize(args) -> int:
    cfg = _scenario(args)
    world = build_world(cfg)
    pipeline = build_pipeline(cfg)
    db_map = build_descriptor_map(world, pipeline, cfg.world_seed)
    pose = _parse_pose(args.pose)
    desc = forward(pipeline, synth_features(world, pose, cfg.world_seed, view=GROUND))
    field = location_probabilities(db_map, desc, floor=cfg.probability_floor)
    if args.heatmap_csv or args.heatmap_pgm:
        emit_heatmap(field, cfg.heatmap_contrast, csv_path=args.heatmap_csv, pgm_path=args.heatmap_pgm)
    best = int(np.argmax(field.probabilities))
    loc = db_map.cell_location(best)
    lat, lon = local_to_geo(db_map, loc)
    prob = measurement_probability(field, pose, cfg.measurement_mode)
    print(json.dumps({
        "query_pose": {"x": pose.x, "y": pose.y, "theta": pose.theta},
        "best_cell": {"index": best, "x": loc.x, "y": loc.y, "lat": lat, "lon": lon,
                      "probability": float(field.probabilities[best])},
        "measurement_probability_at_query": prob,
        "mode": cfg.measurement_mode,
    }, indent=2))
    return 0


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    if args.heatmap_every is not None:
        cfg.heatmap_every = args.heatmap_every
    summary, _ = run_simulation(cfg)
    print(summary.to_json())
    return 0


def cmd_eval(args) -> int:
    cfg = _scenario(args)
    result = eval_retrieval(cfg)
    if args.loss_surface:
        dump_loss_surface(args.loss_surface, alpha=cfg.loss_alpha)
    print(json.dumps({
        "database_size": result["database_size"],
        "recall_top_percent": result["recall_top_percent"],
        "recall_top_1": result["recall_top_k"][0][1],
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="build and save the satellite descriptor database")
    _add_common(p)
    p.add_argument("--out", required=True, help="database file to write")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("query", help="k nearest database entries for a ground view at a pose")
    _add_common(p)
    p.add_argument("--db", help="database file (built on the fly when omitted)")
    p.add_argument("--pose", required=True, help="query pose 'x,y,theta' in local metres/radians")
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("localize", help="single-frame measurement field for a pose")
    _add_common(p)
    p.add_argument("--pose", required=True, help="query pose 'x,y,theta'")
    p.add_argument("--heatmap-csv", help="write the field as CSV")
    p.add_argument("--heatmap-pgm", help="write the field as a 16-bit graymap")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate", help="run the full tracking loop over the scenario trajectory")
    _add_common(p)
    p.add_argument("--heatmap-every", type=int, metavar="N",
                   help="emit the measurement field every N steps (0 disables)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="retrieval metrics and loss-surface dumps")
    _add_common(p)
    p.add_argument("--loss-surface", help="also write a loss-vs-distance CSV here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OutOfMapError) as e:
        print(f"error[config]: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as e:
        print(f"error[input]: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - last-resort reporting
        print(f"error[internal]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
