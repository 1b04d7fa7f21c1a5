"""Command-line surface: synthesize data, train, infer, evaluate."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import crf, evaluate, io, model, pairwise, training

logger = logging.getLogger(__name__)


def _add_train_flags(sub, joint):
    sub.add_argument("--data", required=True, help="manifest of left/right/gt triples")
    sub.add_argument("--out", required=True, help="checkpoint to write")
    sub.add_argument("--labels", type=int, default=8)
    sub.add_argument("--val-data", help="validation manifest; keeps the best-epoch checkpoint")
    sub.add_argument("--config", help="key=value training config file")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float, help="overrides lr_unary / lr_joint")
    sub.add_argument("--momentum", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--sign", type=int, choices=(1, -1), default=None)
    if joint:
        sub.add_argument("--init", required=True, help="checkpoint to start from")
        sub.add_argument("--pairwise", choices=("contrast", "learned"), default="contrast")
        sub.add_argument("--gamma", type=float)
        sub.add_argument("--tau", type=float)
        sub.add_argument("--crf-iters", type=int)
        sub.add_argument("--alpha", type=float)
        sub.add_argument("--beta", type=float)
        sub.add_argument("--pairwise-filters", type=int, default=16)
        sub.add_argument("--log-csv", help="per-step training log")
    else:
        sub.add_argument("--depth", type=int, default=3)
        sub.add_argument("--filters", type=int, default=100)
        sub.add_argument("--coord-features", action="store_true")


def _build_config(args, joint):
    overrides = {}
    for key in ("epochs", "momentum", "seed", "gamma", "tau"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "crf_iters", None) is not None:
        overrides["crf_iterations"] = args.crf_iters
    if args.lr is not None:
        overrides["lr_joint" if joint else "lr_unary"] = args.lr
    if args.config:
        return training.config_from_file(args.config, **overrides)
    return training.TrainConfig(**overrides)


def _load_dataset(manifest, labels, sign):
    triples = io.read_manifest(manifest)
    return [io.load_sample(t, labels, sign) for t in triples]


class _EpochCheckpointer:
    """End-of-epoch cadence: persist every epoch, remember the best
    validation score when a validation set is supplied."""

    def __init__(self, out, val_dataset, iterations, mode):
        self.out = out
        self.val = val_dataset
        self.iterations = iterations
        self.mode = mode
        self.best_score = np.inf
        self.best_params = None

    def __call__(self, epoch, params):
        model.save_checkpoint(params, self.out)
        if self.val:
            score = training.validation_score(
                self.val, params, iterations=self.iterations, mode=self.mode
            )
            logger.info("epoch %d: validation bad1 %.4f%%", epoch, score)
            if score < self.best_score:
                self.best_score = score
                self.best_params = params.copy()

    def finalize(self, params):
        if self.best_params is not None:
            print(f"keeping best-validation checkpoint (bad1 {self.best_score:.4f}%)")
            params = self.best_params
        model.save_checkpoint(params, self.out)
        return params


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    manifests = {"train": (args.count, "train.txt"), "test": (args.test_count, "test.txt")}
    for split, (count, name) in manifests.items():
        triples = []
        for idx in range(count):
            sample = io.synth_random_dot(
                int(rng.integers(0, 2**31)), args.height, args.width,
                args.labels, args.shapes, sign=args.sign,
            )
            stem = f"{split}_{idx:03d}"
            paths = (out / f"{stem}_left.pgm", out / f"{stem}_right.pgm",
                     out / f"{stem}_gt.pfm")
            paths[0].write_bytes(io.write_pgm(sample.left))
            paths[1].write_bytes(io.write_pgm(sample.right))
            paths[2].write_bytes(io.write_pfm(sample.gt.disparity))
            triples.append(tuple(str(p) for p in paths))
        io.write_manifest(out / name, triples)
    print(f"wrote {manifests['train'][0]} train / {manifests['test'][0]} test pairs to {out}")
    return 0


def cmd_train_unary(args):
    config = _build_config(args, joint=False)
    sign = args.sign if args.sign is not None else 1
    dataset = _load_dataset(args.data, args.labels, sign)
    channels = dataset[0].left.shape[2]
    params = model.init_params(
        config.seed, channels, depth=args.depth, filters=args.filters,
        pairwise_mode="off", sign=sign, coord_features=args.coord_features,
    )
    val = _load_dataset(args.val_data, args.labels, sign) if args.val_data else None
    saver = _EpochCheckpointer(args.out, val, iterations=1, mode="off")
    params, history = training.train_unary(dataset, config, params, on_epoch=saver)
    saver.finalize(params)
    print(f"train-unary: {config.epochs} epochs, final cross-entropy {history[-1]:.6f}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_train_joint(args):
    config = _build_config(args, joint=True)
    params = model.load_checkpoint(args.init)
    if args.sign is not None:
        params.sign = args.sign
    if args.alpha is not None:
        params.alpha = args.alpha
    if args.beta is not None:
        params.beta = args.beta
    params.pairwise_mode = args.pairwise
    if args.pairwise == "learned" and not params.pairwise_layers:
        rng = np.random.default_rng(config.seed)
        channels = params.unary_layers[0].in_channels
        params.pairwise_layers = pairwise.default_pairwise_layers(
            rng, channels, filters=args.pairwise_filters
        )
    dataset = _load_dataset(args.data, args.labels, params.sign)
    val = _load_dataset(args.val_data, args.labels, params.sign) if args.val_data else None
    saver = _EpochCheckpointer(args.out, val, iterations=config.crf_iterations,
                               mode=args.pairwise)
    rows = []
    params = training.train_joint(dataset, config, params, log_rows=rows, on_epoch=saver)
    params = saver.finalize(params)
    if args.log_csv:
        Path(args.log_csv).write_text(training.joint_step_csv(rows))
    print(f"train-joint ({args.pairwise}): {config.epochs} epochs, "
          f"P1={params.penalty.P1:.4f} P2={params.penalty.P2:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_infer(args):
    params = model.load_checkpoint(args.checkpoint)
    if args.sign is not None:
        params.sign = args.sign
    if args.coord_features:
        params.coord_features = True
    with open(args.left, "rb") as fh:
        left = io.read_pgm(fh.read())
    with open(args.right, "rb") as fh:
        right = io.read_pgm(fh.read())
    disparity, info = model.infer_disparity(
        left, right, params, args.labels, iterations=args.crf_iters,
        mode=args.pairwise, sublabel=args.sublabel,
    )
    Path(args.out_disparity).write_bytes(io.write_pfm(disparity))
    if args.out_color:
        Path(args.out_color).write_bytes(
            io.write_ppm(evaluate.colorize(disparity, args.labels - 1))
        )
    if args.trace_csv and "result" in info:
        Path(args.trace_csv).write_text(crf.trace_csv(info["result"]))
    print(f"disparity written to {args.out_disparity}")
    return 0


def cmd_eval(args):
    pairs = []
    with open(args.pairs) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise io.FormatError(f"eval manifest line needs 2 paths: {line!r}")
            pairs.append(parts)
    thresholds = [float(t) for t in args.thresholds]
    reports = []
    for pred_path, gt_path in pairs:
        with open(pred_path, "rb") as fh:
            pred = io.read_pfm(fh.read())
        with open(gt_path, "rb") as fh:
            gt_map = io.read_pfm(fh.read())
        gt = io.ground_truth_from_disparity(gt_map)
        if args.all_pixels:
            gt = io.GroundTruth(gt.disparity, np.isfinite(gt.disparity) & (gt.disparity >= 0))
        reports.append(evaluate.evaluate_pair(
            pred, gt, thresholds, occluded_excluded=not args.all_pixels
        ))
    total_valid = sum(r.valid_pixel_count for r in reports)
    combined = evaluate.EvalReport(
        badx={t: sum(r.badx[t] * r.valid_pixel_count for r in reports) / total_valid
              for t in thresholds},
        rms=float(np.sqrt(sum(r.rms**2 * r.valid_pixel_count for r in reports) / total_valid)),
        valid_pixel_count=total_valid,
        occluded_excluded=not args.all_pixels,
    )
    print(combined.table())
    if args.csv:
        Path(args.csv).write_text(combined.to_csv())
    if args.json:
        Path(args.json).write_text(combined.to_json())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crfstereo",
        description="Hybrid CNN+CRF stereo matching: train, infer, evaluate.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a synthetic random-dot dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--count", type=int, default=20)
    synth.add_argument("--test-count", type=int, default=5)
    synth.add_argument("--height", type=int, default=32)
    synth.add_argument("--width", type=int, default=48)
    synth.add_argument("--labels", type=int, default=8)
    synth.add_argument("--shapes", type=int, default=4)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--sign", type=int, choices=(1, -1), default=1)
    synth.set_defaults(func=cmd_synth)

    tu = subs.add_parser("train-unary", help="cross-entropy pretraining of the matcher")
    _add_train_flags(tu, joint=False)
    tu.set_defaults(func=cmd_train_unary)

    tj = subs.add_parser("train-joint", help="SSVM training of the joint model")
    _add_train_flags(tj, joint=True)
    tj.set_defaults(func=cmd_train_joint)

    inf = subs.add_parser("infer", help="disparity from an image pair")
    inf.add_argument("--left", required=True)
    inf.add_argument("--right", required=True)
    inf.add_argument("--checkpoint", required=True)
    inf.add_argument("--out-disparity", required=True)
    inf.add_argument("--out-color")
    inf.add_argument("--trace-csv", help="dual bound trace diagnostics")
    inf.add_argument("--labels", type=int, default=8)
    inf.add_argument("--crf-iters", type=int, default=5)
    inf.add_argument("--pairwise", choices=model.PAIRWISE_MODES, default=None,
                     help="override the checkpoint's pairwise mode")
    inf.add_argument("--sublabel", action="store_true")
    inf.add_argument("--coord-features", action="store_true")
    inf.add_argument("--sign", type=int, choices=(1, -1), default=None)
    inf.set_defaults(func=cmd_infer)

    ev = subs.add_parser("eval", help="metrics for predicted vs ground-truth maps")
    ev.add_argument("--pairs", required=True, help="manifest of 'pred gt' PFM path pairs")
    ev.add_argument("--thresholds", nargs="+", default=["1", "2", "3", "4"])
    ev.add_argument("--all-pixels", action="store_true",
                    help="include every finite ground-truth pixel")
    ev.add_argument("--csv")
    ev.add_argument("--json")
    ev.set_defaults(func=cmd_eval)
    return parser


def cli_main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (io.FormatError, model.CheckpointError, evaluate.MetricError,
            training.TrainingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
