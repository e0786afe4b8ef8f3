#!/usr/bin/env python3
"""End-to-end desk experiment: generate data, train, evaluate, render panels.

    python scripts/run_desk_experiment.py --workdir runs/desk_experiment
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
DESK_CFG = REPO / "configs" / "desk.cfg"

from s3mnet.cli import run as s3m


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="runs/desk_experiment")
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    run_dir = work / "train"
    overrides = [
        "--set", f"train.iterations={args.steps}",
        "--set", f"train.seed={args.seed}",
    ]

    steps = [
        ["gen-data", "--config", str(DESK_CFG), "--out", str(data)],
        ["train", "--config", str(DESK_CFG), "--data", str(data), "--out", str(run_dir), *overrides],
        ["eval", "--ckpt", str(run_dir / "checkpoint.pt"), "--data", str(data), "--split", "train"],
        ["infer", "--ckpt", str(run_dir / "checkpoint.pt"),
         "--left", str(data / "000000" / "left.png"),
         "--right", str(data / "000000" / "right.png"),
         "--out", str(run_dir / "infer")],
        ["plot", "--kind", "disparity", "--in", str(run_dir / "infer" / "disp.png"),
         "--out", str(run_dir / "disp_vis.png"), "--data", str(data)],
        ["plot", "--kind", "labels", "--in", str(run_dir / "infer" / "labels.png"),
         "--out", str(run_dir / "labels_vis.png"), "--data", str(data)],
        ["plot", "--kind", "scg-weight", "--in", str(data / "000000" / "labels.png"),
         "--out", str(run_dir / "weight_vis.png"), "--data", str(data)],
    ]
    for argv in steps:
        print(f"\n== s3m {' '.join(argv)}")
        code = s3m(argv)
        if code != 0:
            return code
    print(f"\nall artifacts under {work}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
