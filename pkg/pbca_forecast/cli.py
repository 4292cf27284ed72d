"""Command line entry point: ``python -m pbca_forecast <command>``."""
from __future__ import annotations

import argparse
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from . import checkpoint
from .analysis import autocorrelation, average_attention, significance_table, write_columns
from .config import ForecastConfig, Variant, load_config, load_synth_spec
from .const import DEFAULT_MISSING_TOKEN, EXIT_OK, SIGNIFICANCE_MARKER, VERSION
from .data import (
    SynthSpec,
    WindowedDataset,
    interpolate_missing,
    load_csv,
    load_dataset,
    synth_periodic,
    write_csv,
)
from .exceptions import ContractError, ForecastError
from .log import setup_logging
from .metrics import evaluate_predictions, paired_ttest
from .model import DecoderMode, ForecastModel, predict_many
from .trainer import TrainReport, sweep, train, train_and_select

_LOGGER = logging.getLogger(__name__)


def _print_report(report: TrainReport) -> None:
    for line in report.lines():
        print(line)


def _overrides(args: argparse.Namespace) -> dict[str, str | None]:
    return {
        "variant": getattr(args, "variant", None),
        "seed": getattr(args, "seed", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "threads": getattr(args, "threads", None),
    }


def _load_config(args: argparse.Namespace) -> ForecastConfig:
    overrides = {key: str(value) for key, value in _overrides(args).items() if value is not None}
    return load_config(args.config, **overrides)


def _test_predictions(
    model: ForecastModel, data: Path, mode: DecoderMode = DecoderMode.FREE_RUNNING
) -> tuple[WindowedDataset, np.ndarray]:
    dataset = load_dataset(data, model.config)
    test = dataset.test
    predictions, _ = predict_many(model, test.inputs, mode, test.targets)
    return dataset, predictions


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic series, checked against a forecaster window if one is given."""
    spec = SynthSpec.from_mapping(load_synth_spec(args.spec))
    if args.config is not None:
        config = load_config(args.config)
        spec.check_window(config.T, config.T_prime)
    write_csv(synth_periodic(spec), args.out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train one model."""
    config = _load_config(args)
    dataset = load_dataset(args.data, config)
    model, report = train(config, dataset)
    _print_report(report)
    checkpoint.save(model, args.out)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    """Train several variants and keep the best on validation."""
    config = _load_config(args)
    variants = [Variant.parse(name) for name in args.variants.split(",") if name.strip()]
    if not variants:
        raise ContractError("--variants names no variant")
    dataset = load_dataset(args.data, config)
    selection, reports = train_and_select(config, dataset, variants)
    for variant, report in reports.items():
        print(f"# {variant}")
        _print_report(report)

    validation = dataset.validation
    errors = {}
    for model in selection.candidates:
        predictions, _ = predict_many(model, validation.inputs)
        errors[str(model.config.variant)] = evaluate_predictions(predictions, validation.targets).squared_errors
    for row in significance_table(errors):
        print(f"{row.method}\t{row.mean_error:.10g}\t{row.marker}")
    print(f"selected\t{selection.model.config.variant}")
    checkpoint.save(selection.model, args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Train a grid of (n, m) pairs for one variant."""
    config = _load_config(args)
    dataset = load_dataset(args.data, config)
    hidden = [int(value) for value in args.hidden.split(",")]
    units = [int(value) for value in args.units.split(",")]
    result = sweep(config, dataset, hidden, units)
    for n, m, val in result.table:
        print(f"n={n}\tm={m}\t{val:.10g}")
    _print_report(result.report)
    checkpoint.save(result.model, args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Score a checkpoint on the test split."""
    model = checkpoint.load(args.model)
    dataset, predictions = _test_predictions(model, args.data, DecoderMode.parse(args.mode))
    report = evaluate_predictions(predictions, dataset.test.targets)
    print(f"mse\t{report.mse:.10g}")
    print(f"smape\t{report.smape:.10g}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    """Paired t-test between two checkpoints on the test split."""
    model_a = checkpoint.load(args.model_a)
    model_b = checkpoint.load(args.model_b)
    dataset_a, pred_a = _test_predictions(model_a, args.data)
    dataset_b, pred_b = _test_predictions(model_b, args.data)
    targets = dataset_a.test.targets
    if not np.array_equal(targets, dataset_b.test.targets):
        raise ContractError("The two models do not see the same test targets")
    if args.per_point:
        errors_a, errors_b = ((pred_a - targets) ** 2).ravel(), ((pred_b - targets) ** 2).ravel()
    else:
        errors_a = evaluate_predictions(pred_a, targets).squared_errors
        errors_b = evaluate_predictions(pred_b, targets).squared_errors
    result = paired_ttest(errors_a, errors_b)
    print(f"t\t{result.t:.10g}")
    print(f"df\t{result.df}")
    print(f"p\t{result.p:.10g}")
    print(f"significant\t{str(result.significant).lower()}")
    mse_a, mse_b = float(np.mean(errors_a)), float(np.mean(errors_b))
    worse = "a" if mse_a > mse_b else "b"
    for name, value in (("a", mse_a), ("b", mse_b)):
        marker = SIGNIFICANCE_MARKER if result.significant and name == worse else ""
        print(f"mse_{name}\t{value:.10g}{marker}")
    return EXIT_OK


def cmd_attention(args: argparse.Namespace) -> int:
    """Export the averaged attention profile of a checkpoint."""
    model = checkpoint.load(args.model)
    dataset = load_dataset(args.data, model.config)
    profile = average_attention(model, dataset.test.inputs)
    write_columns(args.out, profile.to_frame())
    print(f"peak_lag\t{profile.peak_lag}")
    return EXIT_OK


def cmd_acf(args: argparse.Namespace) -> int:
    """Export the autocorrelation of one column."""
    raw = load_csv(
        args.data,
        columns=[args.column] if args.column else None,
        missing_token=args.missing_token,
        timestamp_column=args.timestamp_column,
    )
    series = interpolate_missing(raw)
    values = autocorrelation(series.values[:, 0], args.max_lag)
    write_columns(args.out, pd.DataFrame({"lag": np.arange(len(values)), "acf": values}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="pbca_forecast", description="Position-based content attention forecaster"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a synthetic periodic series")
    synth.add_argument("--spec", required=True, type=Path)
    synth.add_argument("--out", required=True, type=Path)
    synth.add_argument("--config", type=Path, help="forecaster config whose window the series must fit")
    synth.set_defaults(handler=cmd_synth)

    def training(name: str, help_text: str):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--data", required=True, type=Path)
        sub.add_argument("--config", required=True, type=Path)
        sub.add_argument("--out", required=True, type=Path)
        sub.add_argument("--seed", type=int)
        sub.add_argument("--max-epochs", dest="max_epochs", type=int)
        sub.add_argument("--threads", type=int)
        return sub

    variants = [variant.value for variant in Variant]
    train_cmd = training("train", "train one model")
    train_cmd.add_argument("--variant", choices=variants)
    train_cmd.set_defaults(handler=cmd_train)

    select = training("select", "train several variants and select on validation")
    select.add_argument("--variants", default="pi1,pi2,pi3")
    select.set_defaults(handler=cmd_select)

    sweep_cmd = training("sweep", "train a grid of hidden sizes and attention units")
    sweep_cmd.add_argument("--variant", choices=variants)
    sweep_cmd.add_argument("--hidden", default="128,256")
    sweep_cmd.add_argument("--units", default="256,512")
    sweep_cmd.set_defaults(handler=cmd_sweep)

    evaluate = commands.add_parser("eval", help="score a checkpoint on the test split")
    evaluate.add_argument("--model", required=True, type=Path)
    evaluate.add_argument("--data", required=True, type=Path)
    evaluate.add_argument(
        "--mode", choices=[mode.value for mode in DecoderMode], default=DecoderMode.FREE_RUNNING.value
    )
    evaluate.set_defaults(handler=cmd_eval)

    compare = commands.add_parser("compare", help="paired t-test between two checkpoints")
    compare.add_argument("--model-a", dest="model_a", required=True, type=Path)
    compare.add_argument("--model-b", dest="model_b", required=True, type=Path)
    compare.add_argument("--data", required=True, type=Path)
    compare.add_argument("--per-point", dest="per_point", action="store_true")
    compare.set_defaults(handler=cmd_compare)

    attention = commands.add_parser("attention", help="export the averaged attention profile")
    attention.add_argument("--model", required=True, type=Path)
    attention.add_argument("--data", required=True, type=Path)
    attention.add_argument("--out", required=True, type=Path)
    attention.set_defaults(handler=cmd_attention)

    acf = commands.add_parser("acf", help="export the autocorrelation of a column")
    acf.add_argument("--data", required=True, type=Path)
    acf.add_argument("--max-lag", dest="max_lag", required=True, type=int)
    acf.add_argument("--out", required=True, type=Path)
    acf.add_argument("--column")
    acf.add_argument("--timestamp-column", dest="timestamp_column")
    acf.add_argument("--missing-token", dest="missing_token", default=DEFAULT_MISSING_TOKEN)
    acf.set_defaults(handler=cmd_acf)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run one command.

    Returns:
        0 on success, 2 for usage or configuration errors, 3 for data
        errors and 4 for numeric failures

    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except ForecastError as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return err.exit_code
    except ValueError as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return ContractError.exit_code
