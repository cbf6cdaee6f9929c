"""Command-line surface.

Subcommands: synth, augment, train, eval, predict, compare.  Exit
codes: 0 success, 2 usage, 3 configuration, 4 data, 5 numeric.  Set
CFTALIGN_LOG=DEBUG|INFO|WARNING|ERROR for verbosity (default WARNING).
"""

import argparse
import json
import logging
import os
import sys

from . import checkpoint
from . import data as D
from . import evaluate as E
from . import network as N
from . import synthetic as S
from . import trainer as TR
from .errors import ConfigurationError, DataError, NumericError, UsageError

log = logging.getLogger("cftalign.cli")


def _read_train_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError("cannot read config %s: %s" % (path, exc))
    if not isinstance(raw, dict):
        raise ConfigurationError("config %s must be a JSON object" % path)
    unknown = set(raw) - {"network", "schedule"}
    if unknown:
        raise ConfigurationError("config %s has unknown sections: %s"
                                 % (path, ", ".join(sorted(unknown))))
    return raw.get("network", {}), raw.get("schedule", {})


def _merge_network_config(net_cfg, scheme, seed):
    """Fill landmark info from the dataset scheme; explicit values must
    agree with it."""
    cfg = dict(net_cfg)
    if "n_landmarks" in cfg and cfg["n_landmarks"] != scheme.n_landmarks:
        raise ConfigurationError("config says %d landmarks but the dataset scheme %s has %d"
                                 % (cfg["n_landmarks"], scheme.name, scheme.n_landmarks))
    if "principal_indices" in cfg and tuple(sorted(cfg["principal_indices"])) != scheme.principal:
        raise ConfigurationError("config principal_indices disagree with the dataset scheme")
    cfg["n_landmarks"] = scheme.n_landmarks
    cfg["principal_indices"] = list(scheme.principal)
    if seed is not None:
        cfg["seed"] = seed
    return N.config_from_dict(cfg)


def cmd_synth(args):
    params = S.SyntheticFaceParams(canvas=args.canvas, n_elaborate=args.elaborate)
    samples = S.generate_synthetic_dataset(args.count, args.seed, params)
    scheme = S.make_synthetic_scheme(args.elaborate)
    rows = [(s.name, args.seed, i) for i, s in enumerate(samples)]
    D.save_dataset(samples, args.out, scheme,
                   extra_manifest=(("name", "master_seed", "index"), rows))
    print("wrote %d synthetic faces to %s" % (len(samples), args.out))
    return 0


def cmd_augment(args):
    samples = D.load_dataset(args.dataset)
    if not samples:
        raise DataError("dataset %s is empty" % args.dataset)
    spec = D.AugmentationSpec(
        rotation_angles=tuple(args.angles) if args.angles else
        D.AugmentationSpec.rotation_angles,
        compression_qualities=tuple(args.qualities) if args.qualities else
        D.AugmentationSpec.compression_qualities,
        do_flip=not args.no_flip)
    emitted, manifest, skips = D.augment_dataset(samples, spec)
    scheme = samples[0].landmarks.scheme
    D.save_dataset(emitted, args.out, scheme,
                   extra_manifest=(("index", "source", "angle", "tx", "ty", "flip", "quality"),
                                   manifest))
    if skips:
        import csv as _csv
        with open(os.path.join(args.out, "skips.csv"), "w", newline="") as f:
            w = _csv.writer(f)
            w.writerow(["source", "angle", "tx", "ty", "flip", "reason"])
            w.writerows(skips)
    print("wrote %d augmented samples to %s (%d skipped)"
          % (len(emitted), args.out, len(skips)))
    return 0


def _load_train_inputs(args):
    samples = D.load_dataset(args.dataset)
    if not samples:
        raise DataError("dataset %s is empty" % args.dataset)
    scheme = samples[0].landmarks.scheme
    net_cfg_raw, sched_raw = _read_train_config(args.config) if args.config else ({}, {})
    if args.seed is not None:
        sched_raw = dict(sched_raw, seed=args.seed)
    schedule = TR.schedule_from_dict(sched_raw)
    config = _merge_network_config(net_cfg_raw, scheme, args.seed)
    return samples, scheme, config, schedule


def cmd_train(args):
    samples, scheme, config, schedule = _load_train_inputs(args)
    encoded = D.encode_dataset(samples, config.input_size[:2])
    net = N.build_network(config)
    N.init_parameters(net, config.seed)
    os.makedirs(args.out, exist_ok=True)
    train_fn = TR.train_cft if args.algo == "cft" else TR.train_dt
    net, history = train_fn(net, encoded, schedule, checkpoint_dir=args.out)
    history.write_csv(os.path.join(args.out, "history.csv"))
    checkpoint.save_network(net, os.path.join(args.out, "final.ckpt"))
    N.save_config(config, os.path.join(args.out, "network_config.json"))
    with open(os.path.join(args.out, "schedule.json"), "w") as f:
        json.dump(schedule.to_dict(), f, indent=2)
        f.write("\n")
    D.save_scheme(scheme, os.path.join(args.out, "partition.json"))
    report = E.evaluate(net, encoded)
    report.write_csv(os.path.join(args.out, "train_eval.csv"))
    print("trained %s for %d epochs; training-set mean error %.2f%%"
          % (args.algo, sum(s.epochs_run for s in history.stages), report.aggregate_pct))
    return 0


def _net_from_checkpoint(args):
    cfg_path = args.config or os.path.join(os.path.dirname(args.checkpoint) or ".",
                                           "network_config.json")
    if not os.path.exists(cfg_path):
        raise ConfigurationError("no network config found at %s (pass --config)" % cfg_path)
    config = N.load_config(cfg_path)
    net = N.build_network(config)
    checkpoint.load_network(net, args.checkpoint)
    return net


def cmd_eval(args):
    net = _net_from_checkpoint(args)
    samples = D.load_dataset(args.dataset)
    if not samples:
        raise DataError("dataset %s is empty" % args.dataset)
    report = E.evaluate(net, samples)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "eval.csv")
    report.write_csv(out_path)
    print(report.summary())
    print("report written to %s" % out_path)
    return 0


def cmd_predict(args):
    net = _net_from_checkpoint(args)
    samples = D.load_dataset(args.dataset)
    if not samples:
        raise DataError("dataset %s is empty" % args.dataset)
    encoded = D.encode_dataset(samples, net.config.input_size[:2])
    preds = E.predict_landmarks(net, encoded)
    out_dir = os.path.join(args.out, "predictions")
    os.makedirs(out_dir, exist_ok=True)
    for name, pts in zip(encoded.names, preds):
        D.write_pts(pts, os.path.join(out_dir, name + ".pts"))
    print("wrote %d prediction files to %s" % (len(preds), out_dir))
    return 0


def cmd_compare(args):
    ra = E.EvalReport.read_csv(args.a)
    rb = E.EvalReport.read_csv(args.b)
    table = E.compare_runs(ra, rb, label_a=args.label_a, label_b=args.label_b)
    print(table.render())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        table.write_csv(os.path.join(args.out, "comparison.csv"))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cftalign",
        description="Coarse-to-fine facial landmark training and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic face dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--canvas", type=int, default=112)
    p.add_argument("--elaborate", type=int, default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="materialize the augmentation sweep")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--angles", type=float, nargs="*", default=None)
    p.add_argument("--qualities", type=int, nargs="*", default=None)
    p.add_argument("--no-flip", action="store_true")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train with the staged or direct algorithm")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=("cft", "dt"), default="cft")
    p.add_argument("--config", default=None, help="JSON with network/schedule sections")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write per-image landmark predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="compare two evaluation reports")
    p.add_argument("--a", required=True, help="first eval.csv (baseline)")
    p.add_argument("--b", required=True, help="second eval.csv")
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CFTALIGN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, DataError, NumericError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
