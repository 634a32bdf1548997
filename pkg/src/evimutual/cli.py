"""Command-line entry point.

Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure,
3 I/O failure.
"""
import argparse
import json
import logging
import os
import sys

from .config import RunConfig, config_from_dict, dump_config, load_config, parse_value
from .errors import CheckpointError, ConfigurationError, InvalidInputError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _run_config(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
        overrides["data.master_seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "md_only", False):
        overrides.update(md_only=True, use_un=False, use_ui=False)
    if getattr(args, "no_un", False):
        overrides["use_un"] = False
    if getattr(args, "no_ui", False):
        overrides["use_ui"] = False
    if getattr(args, "sigma", None):
        overrides["eval_sigmas"] = tuple(args.sigma)
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value.strip())
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict(overrides, base=RunConfig())


def _add_run_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="master seed (model init and data)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-un", action="store_true", help="disable the uncertainty navigator")
    p.add_argument("--no-ui", action="store_true", help="disable the uncertainty instructor")
    p.add_argument("--md-only", action="store_true", help="mutual decoder only (both off)")
    p.add_argument("--sigma", type=float, nargs="+", help="noise levels for the final evaluation")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser():
    parser = argparse.ArgumentParser(prog="evimutual", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and evaluate its best checkpoint")
    _add_run_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split at one noise level")
    p.add_argument("checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--out", help="write the report as JSON here")

    p = sub.add_parser("noise-sweep", help="evaluate a checkpoint over several noise levels")
    p.add_argument("checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--sigma", type=float, nargs="+", default=[0.0, 0.03, 0.05])
    p.add_argument("--out", default="noise_sweep.csv")

    p = sub.add_parser("ablate", help="train and compare the four MD/UN/UI variants")
    _add_run_flags(p)

    p = sub.add_parser("export-maps", help="write prediction and uncertainty maps as PGM")
    p.add_argument("checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--out", default="maps")
    p.add_argument("--limit", type=int)
    p.add_argument("--channels", action="store_true", help="also dump three channels of f_c4 and r_c")

    p = sub.add_parser("gen-data", help="export the synthetic dataset as PGM + CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="data")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("selftest", help="run the built-in invariant and oracle checks")
    p.add_argument("--quick", action="store_true")
    return parser


def _dispatch(args):
    from . import harness

    if args.command == "train":
        cfg = _run_config(args)
        record = harness.train(cfg)
        print(json.dumps({"checkpoint": record.checkpoint, "best_epoch": record.best_epoch,
                          "test": record.metrics.get("test", {})}, indent=2))
    elif args.command == "eval":
        report = harness.evaluate(args.checkpoint, args.split, args.sigma)
        text = json.dumps(report.to_dict(), indent=2)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        print(text)
    elif args.command == "noise-sweep":
        rows = harness.noise_sweep(args.checkpoint, args.sigma, args.split, args.out)
        for row in rows:
            print(row)
    elif args.command == "ablate":
        cfg = _run_config(args)
        for row in harness.ablate(cfg):
            print(row)
    elif args.command == "export-maps":
        files = harness.export_maps(args.checkpoint, args.split, args.sigma, args.out,
                                    limit=args.limit, dump_channels=args.channels)
        print(f"wrote {len(files)} files to {args.out}")
    elif args.command == "gen-data":
        from .synthdata import export_dataset, make_dataset

        cfg = _run_config(args)
        splits = make_dataset(cfg.data, cfg.data_workers)
        export_dataset(splits, args.out, cfg.data)
        with open(os.path.join(args.out, "run_config.txt"), "w", encoding="utf-8") as fh:
            fh.write(dump_config(cfg))
        print(f"wrote {sum(map(len, splits))} samples to {args.out}")
    elif args.command == "selftest":
        from .selfcheck import run_all

        return EXIT_OK if run_all(quick=args.quick) else EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return _dispatch(args)
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointError, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
