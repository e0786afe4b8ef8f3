"""Command-line entry point: gen-data, train, eval, infer, plot.

Exit codes: 0 success, 1 categorized runtime failure, 2 usage error.
Set S3M_DETERMINISTIC=1 to force deterministic mode regardless of config.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import plotting, training
from .config import load_config
from .dataio import decode_disparity_16bit, load_manifest
from .errors import S3MError
from .losses import scg_weight_map
from .synthgen import generate_dataset


def _build_parser():
    parser = argparse.ArgumentParser(prog="s3m", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic stereo dataset")
    gen.add_argument("--config", default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, default=None, help="override dataset.n_samples")
    gen.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    tr = sub.add_parser("train", help="train on a generated dataset")
    tr.add_argument("--config", default=None)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--resume", default=None, help="checkpoint to continue from")
    tr.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="val")
    ev.add_argument("--out", default=None, help="report file (default: next to the checkpoint)")
    ev.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    inf = sub.add_parser("infer", help="run one stereo pair through a checkpoint")
    inf.add_argument("--ckpt", required=True)
    inf.add_argument("--left", required=True)
    inf.add_argument("--right", required=True)
    inf.add_argument("--out", required=True)
    inf.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    pl = sub.add_parser("plot", help="render a map to a raster image")
    pl.add_argument("--kind", required=True, choices=["disparity", "labels", "scg-weight"])
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--data", default=None, help="dataset root for palette/range metadata")
    pl.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _cmd_gen_data(args):
    config = load_config(args.config, args.overrides)
    if args.n is not None:
        config.dataset.n_samples = args.n
    manifest = generate_dataset(config.dataset_config(), args.out)
    print(f"wrote {sum(len(v) for v in manifest.splits.values())} samples to {args.out}")
    return 0


def _cmd_train(args):
    config = load_config(args.config, args.overrides)
    result = training.train(config, args.data, args.out, resume_from=args.resume)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    print(f"final: l_ss={result.final_l_ss:.6f} l_sm={result.final_l_sm:.6f}")
    return 0


def _cmd_eval(args):
    report = training.evaluate(args.ckpt, args.data, args.split, overrides=args.overrides)
    text = report.to_text()
    out = Path(args.out) if args.out else Path(args.ckpt).parent / f"metrics_{args.split}.txt"
    out.write_text(text)
    print(text, end="")
    print(f"report written to {out}")
    return 0


def _cmd_infer(args):
    disp_path, labels_path = training.infer(
        args.ckpt, args.left, args.right, args.out, overrides=args.overrides
    )
    print(f"disparity: {disp_path}")
    print(f"labels: {labels_path}")
    return 0


def _cmd_plot(args):
    import torch

    config = load_config(None, args.overrides)
    manifest = load_manifest(args.data) if args.data else None
    if args.kind == "disparity":
        raw = np.asarray(Image.open(args.input))
        disparity, _ = decode_disparity_16bit(raw.astype(np.uint16))
        max_disp = manifest.max_disparity if manifest else 192.0
        rgb = plotting.render_disparity(disparity, max_disp)
    elif args.kind == "labels":
        labels = np.asarray(Image.open(args.input)).astype(np.int64)
        rgb = plotting.render_labels(labels)
    else:
        labels = np.asarray(Image.open(args.input)).astype(np.int64)
        class_count = manifest.class_count if manifest else int(labels.max()) + 1
        weights = scg_weight_map(
            torch.from_numpy(labels).unsqueeze(0),
            max(class_count, 2),
            config.train.loss.pool_kernel,
            config.train.loss.ignore_label,
        )[0].numpy()
        rgb = plotting.render_scg_weight(weights)
    plotting.save_render(rgb, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "plot": _cmd_plot,
}


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except S3MError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: NotFound: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
