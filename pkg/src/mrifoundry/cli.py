"""Command-line interface.

Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, ManifestError, MetadataError, MriFoundryError, OrientationError
from .experiment import load_experiment_config, preprocess_manifest, run_experiment
from .preprocess import PreprocessConfig

_VALIDATION_ERRORS = (ConfigError, ManifestError, MetadataError, OrientationError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="mrifoundry",
        description=(
            "Desk-scale lab for text-constrained 3D MRI autoencoder pre-training "
            "and its segmentation / classification / registration adapters."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p):
        p.add_argument("--config", required=True, help="experiment config file (INI sections)")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the experiment seed")

    common(sub.add_parser("phantom-gen", help="generate the synthetic phantom datasets"))

    p_pre = sub.add_parser("preprocess", help="standardize the volumes listed in a manifest")
    p_pre.add_argument("--manifest", required=True, help="input manifest (ndjson)")
    p_pre.add_argument("--out", required=True, help="output directory")
    p_pre.add_argument("--grid", default="256,256,128", help="target grid, e.g. 256,256,128")
    p_pre.add_argument("--spacing", type=float, default=1.0, help="isotropic spacing in mm")
    p_pre.add_argument("--orientation", default="RAS", help="target axis code")
    p_pre.add_argument("--no-quantize", action="store_true", help="keep float32 output")

    common(sub.add_parser("pretrain", help="run stages up to and including pre-training"))

    p_fin = sub.add_parser("finetune", help="fine-tune one downstream task")
    p_fin.add_argument("--task", required=True, choices=("seg", "cls", "reg"))
    p_fin.add_argument(
        "--init", default=None,
        help="'scratch', 'pretrain', or a checkpoint path (default: config value)",
    )
    common(p_fin)

    common(sub.add_parser("eval", help="aggregate stage reports into the summary"))
    common(sub.add_parser("run", help="run the full experiment end to end"))
    return parser


_STAGE_PLAN = {
    "phantom-gen": ("generate",),
    "pretrain": ("generate", "preprocess", "pretrain"),
    "eval": None,  # whatever the config requests
    "run": None,
}


def _run_configured(args, only_stages) -> int:
    cfg = load_experiment_config(args.config, out_override=args.out, seed_override=args.seed)
    run_experiment(cfg, only_stages=only_stages)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    try:
        if args.command == "preprocess":
            grid = tuple(int(tok) for tok in args.grid.replace(",", " ").split())
            pre_cfg = PreprocessConfig(
                target_orientation=args.orientation,
                target_spacing_mm=args.spacing,
                target_grid=grid,
                quantize=not args.no_quantize,
            )
            report = preprocess_manifest(args.manifest, args.out, pre_cfg)
            print(f"processed {report['processed']} volume(s), skipped {report['skipped']}")
            return 0
        if args.command == "finetune":
            cfg = load_experiment_config(
                args.config, out_override=args.out, seed_override=args.seed
            )
            fincfg = {"seg": cfg.seg, "cls": cfg.cls, "reg": cfg.reg}[args.task]
            if args.init is not None:
                fincfg.init = args.init
            prereq = ("generate",) if fincfg.init == "scratch" else (
                "generate", "preprocess", "pretrain"
            )
            run_experiment(cfg, only_stages=prereq + (f"finetune_{args.task}",))
            return 0
        return _run_configured(args, _STAGE_PLAN.get(args.command))
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MriFoundryError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def cli(argv) -> int:
    """Programmatic entry point mirroring the console script."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
