"""Command-line entry point: generate, mask, train, evaluate, sweep, verify."""
import argparse
import logging
import os
import sys

from pydantic import ValidationError

from config import (
    BFTS_LOG_LEVEL,
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFY,
    load_config_file,
    merge_overrides,
    worker_limit,
)
from core.graph import generate_sbm, label_assortativity
from core.metrics import evaluate
from core.missingness import apply_missingness
from core.sweep import run_sweep, write_outputs
from core.trainer import merged_hard, predict, train
from core.verify import CHECKS, run_verification
from errors import BftsError, ConfigError
from schemas import METRICS_HEADER, ExperimentPlan, MissingnessSpec, SbmConfig, TrainConfig
from utils.graph_io import format_float, load_graph_dir, save_graph
from utils.run_io import load_params, write_train_outputs

logger = logging.getLogger("bfts")


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """Usage errors exit 1 so that 2 stays reserved for bad data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _resolve(model, args, fields):
    """Build a pydantic model from ``--config`` values overridden by CLI flags."""
    file_values = load_config_file(args.config, allowed_keys=model.model_fields) if args.config else {}
    cli_values = {name: getattr(args, name, None) for name in fields}
    return model(**merge_overrides(file_values, cli_values))


SBM_FIELDS = ("block_sizes", "p_in", "p_out", "p_bias", "n_features", "n_noise", "gamma", "seed",
              "train_frac", "val_frac")
MASK_FIELDS = ("kind", "k_observed", "observed_frac", "seed", "radius")
TRAIN_FIELDS = ("mode", "alpha", "beta", "ldam_C", "imputer_loss", "lr_classifier", "lr_imputer",
                "lr_adversary", "epochs", "imputer_epochs", "seed", "sensitive_mode", "dropout",
                "hidden_classifier", "hidden_imputer", "hidden_adversary", "oracle_sensitive")


def cmd_generate(args) -> int:
    cfg = _resolve(SbmConfig, args, SBM_FIELDS)
    g = generate_sbm(cfg)
    save_graph(g, args.out)
    print(f"wrote {g.n_nodes} nodes and {g.n_edges} edges to {args.out}")
    return EXIT_OK


def cmd_mask(args) -> int:
    spec = _resolve(MissingnessSpec, args, MASK_FIELDS)
    g = apply_missingness(load_graph_dir(args.graph), spec)
    out = args.out or args.graph
    save_graph(g, out)
    print(f"{spec.kind}: {int(g.observed_mask.sum())} of {g.n_nodes} sensitive values observed -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(TrainConfig, args, TRAIN_FIELDS)
    g = load_graph_dir(args.graph)
    if cfg.sensitive_mode == "observed" and not g.observed_mask.any() and cfg.mode in ("bfts", "indep"):
        logger.info("no observed sensitive values; switching to label-proxy imputation")
        cfg = cfg.model_copy(update={"sensitive_mode": "label-proxy"})
    report = train(g, cfg)
    logger.info("%s finished in %.1fs, selected epoch %d", cfg.mode, report.wall_time, report.selected_epoch)
    paths = write_train_outputs(args.out, report, cfg)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"selected epoch {report.selected_epoch}; wrote {', '.join(sorted(paths))} to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    g = load_graph_dir(args.graph)
    if args.metric == "assortativity":
        print(format_float(label_assortativity(g)))
        return EXIT_OK
    if not args.checkpoint:
        raise UsageError(f"--metric {args.metric} needs --checkpoint")
    params = load_params(args.checkpoint)
    prediction = predict(params, g)
    s_hat = merged_hard(prediction.si_soft, g)
    record = evaluate(g, prediction.y_soft, s_hat, args.mode, args.alpha, args.beta,
                      float(g.observed_mask.mean()), args.seed)
    if args.metric == "all":
        print(",".join(METRICS_HEADER))
        print(record.csv_row())
    else:
        print(format_float(getattr(record, args.metric)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        with open(args.plan, encoding="utf-8") as handle:
            plan = ExperimentPlan.model_validate_json(handle.read())
    except OSError as e:
        raise ConfigError(f"cannot read plan {args.plan}: {e}") from e
    workers = args.workers or worker_limit()
    result = run_sweep(plan, workers=workers)
    paths = write_outputs(plan, result, args.out)
    print(f"{len(result.records)} rows, {len(result.failures)} failed cells -> {os.path.dirname(paths['metrics.csv'])}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_verification(inject=args.inject)
    for result in results:
        status = "PASS" if result["passed"] else "FAIL"
        print(f"{status}  {result['name']}: {result['detail']}")
    failed = [r["name"] for r in results if not r["passed"]]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="bfts", description="Fair node classification with adversarially missing sensitive values")
    parser.add_argument("--log-level", default=BFTS_LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    gen = sub.add_parser("generate", help="sample an SBM benchmark graph")
    gen.add_argument("--out", required=True)
    gen.add_argument("--config")
    gen.add_argument("--blocks", dest="block_sizes", type=_int_list)
    gen.add_argument("--p-in", dest="p_in", type=float)
    gen.add_argument("--p-out", dest="p_out", type=float)
    gen.add_argument("--p-bias", dest="p_bias", type=float)
    gen.add_argument("--n-features", dest="n_features", type=int)
    gen.add_argument("--n-noise", dest="n_noise", type=int)
    gen.add_argument("--gamma", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--train-frac", dest="train_frac", type=float)
    gen.add_argument("--val-frac", dest="val_frac", type=float)
    gen.set_defaults(handler=cmd_generate)

    mask = sub.add_parser("mask", help="hide sensitive values with a missingness process")
    mask.add_argument("--graph", required=True)
    mask.add_argument("--out")
    mask.add_argument("--config")
    mask.add_argument("--kind", choices=["mcar", "degree", "coverage-greedy", "coverage-exact"])
    mask.add_argument("--observed-frac", dest="observed_frac", type=float)
    mask.add_argument("--k", dest="k_observed", type=int)
    mask.add_argument("--seed", type=int)
    mask.add_argument("--radius", type=int)
    mask.set_defaults(handler=cmd_mask)

    tr = sub.add_parser("train", help="train one model and write its checkpoint and losses")
    tr.add_argument("--graph", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config")
    tr.add_argument("--mode", choices=["bfts", "vanilla", "two-player", "indep", "independent-imputation"])
    tr.add_argument("--alpha", type=float)
    tr.add_argument("--beta", type=float)
    tr.add_argument("--ldam-c", dest="ldam_C", type=float)
    tr.add_argument("--imputer-loss", dest="imputer_loss", choices=["ldam", "ce"])
    tr.add_argument("--lr", dest="lr_classifier", type=float)
    tr.add_argument("--lr-imputer", dest="lr_imputer", type=float)
    tr.add_argument("--lr-adversary", dest="lr_adversary", type=float)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--imputer-epochs", dest="imputer_epochs", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--sensitive-mode", dest="sensitive_mode", choices=["observed", "label-proxy"])
    tr.add_argument("--dropout", type=float)
    tr.add_argument("--hidden-classifier", dest="hidden_classifier", type=int)
    tr.add_argument("--hidden-imputer", dest="hidden_imputer", type=int)
    tr.add_argument("--hidden-adversary", dest="hidden_adversary", type=int)
    tr.add_argument("--oracle-sensitive", dest="oracle_sensitive", action="store_true", default=None)
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("evaluate", help="report a metric for a graph or a trained checkpoint")
    ev.add_argument("--graph", required=True)
    ev.add_argument("--metric", default="all",
                    choices=["assortativity", "all", "f1", "avpr", "ddp", "deqop", "corr_true", "corr_imputed"])
    ev.add_argument("--checkpoint")
    ev.add_argument("--mode", default="bfts")
    ev.add_argument("--alpha", type=float, default=0.0)
    ev.add_argument("--beta", type=float, default=0.0)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(handler=cmd_evaluate)

    sw = sub.add_parser("sweep", help="run an experiment plan and write plot-ready CSVs")
    sw.add_argument("--plan", required=True)
    sw.add_argument("--out")
    sw.add_argument("--workers", type=int)
    sw.set_defaults(handler=cmd_sweep)

    ver = sub.add_parser("verify", help="run the property-oracle suite")
    ver.add_argument("--inject", choices=sorted(CHECKS), help="flip the verdict of one check")
    ver.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (UsageError, ConfigError, ValidationError) as e:
        logger.error("%s", e)
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BftsError, OSError, ValueError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
