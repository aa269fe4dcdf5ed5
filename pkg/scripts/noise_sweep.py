#!/usr/bin/env python3
"""Sweep odometry corruption levels and report tracking error.

Shows the measurement model's contribution: with the descriptor field
enabled the error stays near the cell interval across the sweep, while
dead reckoning degrades roughly linearly with the noise.
"""

import argparse

import numpy as np

from cvloc.config import ScenarioConfig
from cvloc.simulate import run_simulation


def mean_error(kind: str, rot_noise_deg: float, seeds) -> float:
    errors = []
    for seed in seeds:
        cfg = ScenarioConfig(
            master_seed=seed,
            world_kind=kind,
            odom_sigma_rot_deg=rot_noise_deg,
            out_dir="",
        )
        summary, _ = run_simulation(cfg)
        errors.append(summary.mean_position_error)
    return float(np.mean(errors))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.1, 0.3, 0.6, 1.0])
    args = ap.parse_args()

    print("odom_sigma_rot_deg,tracked_mean_err_m,dead_reckoning_mean_err_m")
    for level in args.levels:
        tracked = mean_error("smooth", level, args.seeds)
        drifted = mean_error("flat", level, args.seeds)
        print(f"{level},{tracked:.2f},{drifted:.2f}")


if __name__ == "__main__":
    main()
