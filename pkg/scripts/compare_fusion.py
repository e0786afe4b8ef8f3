#!/usr/bin/env python3
"""Fusion-strategy ablation: addition vs concatenation in the fusion adapter.

    python scripts/compare_fusion.py --steps 2000
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
    parser.add_argument("--workdir", default="runs/fusion_compare")
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    if not (data / "manifest.json").is_file():
        generate_dataset(load_config(DESK_CFG).dataset_config(), data)

    rows = []
    for strategy in ("addition", "concatenation"):
        config = load_config(DESK_CFG, overrides=[
            f"train.fusion={strategy}",
            f"train.iterations={args.steps}",
            f"train.seed={args.seed}",
            "train.checkpoint_every=0",
        ])
        out = work / strategy
        print(f"== training fusion={strategy} -> {out}")
        result = train(config, data, out)
        rows.append((strategy, evaluate(result.checkpoint_path, data, "train")))

    keys = [f.name for f in dataclasses.fields(rows[0][1])]
    print("\nstrategy       " + "  ".join(f"{k:>9}" for k in keys))
    for strategy, report in rows:
        vals = "  ".join(f"{getattr(report, k):9.4f}" for k in keys)
        print(f"{strategy:13}  {vals}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
