#!/usr/bin/env python3
"""Loss-weight ablation: train the desk preset across a grid of alpha values
and tabulate the metric suite on the training split.

    python scripts/sweep_alpha.py --alphas 0.0 0.1 0.2 0.4 --steps 2000
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from s3mnet.config import load_config
from s3mnet.synthgen import generate_dataset
from s3mnet.training import evaluate, train

REPO = Path(__file__).resolve().parent.parent
DESK_CFG = REPO / "configs" / "desk.cfg"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="runs/alpha_sweep")
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.4])
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    if not (data / "manifest.json").is_file():
        config = load_config(DESK_CFG)
        generate_dataset(config.dataset_config(), data)

    rows = []
    for alpha in args.alphas:
        config = load_config(DESK_CFG, overrides=[
            f"loss.alpha={alpha}",
            f"train.iterations={args.steps}",
            f"train.seed={args.seed}",
            "train.checkpoint_every=0",
        ])
        out = work / f"alpha_{alpha:g}"
        print(f"== training alpha={alpha:g} -> {out}")
        result = train(config, data, out)
        report = evaluate(result.checkpoint_path, data, "train")
        rows.append((alpha, report))

    keys = [f.name for f in dataclasses.fields(rows[0][1])]
    print("\nalpha  " + "  ".join(f"{k:>9}" for k in keys))
    for alpha, report in rows:
        vals = "  ".join(f"{getattr(report, k):9.4f}" for k in keys)
        print(f"{alpha:5.2f}  {vals}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
