"""Command-line front-end: ``goldcorrect <command> [options] [--dotted.key=value ...]``.

Commands:

* ``cmat build`` / ``cmat show``: build or inspect a corruption matrix file.
* ``corrupt``: corrupt the training labels of a dataset with a matrix, or replace them
  with weak-classifier labels, and write them as an IDX label file.
* ``train``: run one method on one cell of the sweep grid.
* ``sweep``: run the whole grid (resumable).
* ``report``: render a stored report.

The dataset, corruption, methods and hyperparameters come from a JSON config
(``--config``) whose keys can all be overridden with ``--key=value`` flags, e.g.
``--train.epochs=3`` or ``--dataset.kind=idx``.

Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors and 3 when
training or a solver diverges.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import attr
import numpy as np

from goldcorrect.corruption import (
    FlipMode,
    SuperclassPartition,
    corrupt_labels,
    load_matrix,
    make_flip,
    make_hierarchical,
    make_uniform,
    save_matrix,
    weak_classifier_labels,
)
from goldcorrect.data import load_idx_labels, write_idx_labels
from goldcorrect.errors import (
    DivergenceError,
    FormatError,
    GoldCorrectError,
    InsufficientDataError,
    InvalidInputError,
    LabelOutOfRangeError,
    MethodError,
    MissingClassError,
    RegularizationRequiredError,
    SolverError,
)
from goldcorrect.harness import (
    Cell,
    SweepConfig,
    execute_cell,
    load_report,
    run_sweep,
    strength_index,
)
from goldcorrect.model import save_model
from goldcorrect.parser import apply_overrides, parse_override
from goldcorrect.report import render_report
from goldcorrect.rng import derive_seed
from goldcorrect.training import MethodSpec, train_weak_labeler

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Raised instead of printing usage and exiting."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def exit_code(error):
    """Return the exit code reporting `error`."""
    if isinstance(error, MethodError):
        return exit_code(error.cause)
    if isinstance(error, (DivergenceError, SolverError, RegularizationRequiredError)):
        return EXIT_DIVERGENCE
    if isinstance(
        error,
        (
            FormatError,
            MissingClassError,
            InsufficientDataError,
            LabelOutOfRangeError,
            InvalidInputError,
            OSError,
        ),
    ):
        return EXIT_DATA
    return EXIT_USAGE


def _common_parser():
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON sweep config")
    common.add_argument("--seed", type=int, help="run seed every other seed derives from")
    common.add_argument("--jobs", type=int, help="parallel cells, 0 for every core")
    common.add_argument("--out", help="output directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    return common


def build_parser():
    """Return the argument parser of the ``goldcorrect`` command."""
    common = _common_parser()
    parser = _ArgumentParser(prog="goldcorrect", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    cmat = commands.add_parser("cmat", help="build or inspect a corruption matrix")
    cmat_commands = cmat.add_subparsers(dest="cmat_command", required=True)
    build = cmat_commands.add_parser("build", parents=[common], allow_abbrev=False)
    build.add_argument("--kind", choices=["uniform", "flip", "hierarchical"], required=True)
    build.add_argument("--k", type=int, required=True, help="number of classes")
    build.add_argument("--strength", type=float, required=True)
    build.add_argument("--flip-mode", choices=[m.value for m in FlipMode], default="random")
    build.add_argument("--flip-seed", type=int, help="seed of random flip targets")
    build.add_argument("--group-size", type=int, help="hierarchical superclass size")
    build.add_argument("--groups", help="comma-separated superclass id of each class")
    build.add_argument("--output", type=Path, help="matrix file to write")
    show = cmat_commands.add_parser("show", parents=[common], allow_abbrev=False)
    show.add_argument("path", type=Path)

    corrupt = commands.add_parser(
        "corrupt", parents=[common], allow_abbrev=False, help="write corrupted labels"
    )
    source = corrupt.add_mutually_exclusive_group(required=True)
    source.add_argument("--cmat", type=Path, help="corruption matrix file")
    source.add_argument("--weak", action="store_true", help="use weak-classifier labels")
    corrupt.add_argument("--temperature", type=float, default=5.0)
    corrupt.add_argument("--weak-epochs", type=int, default=1)
    corrupt.add_argument("--output", type=Path, help="IDX label file to write")

    train = commands.add_parser(
        "train", parents=[common], allow_abbrev=False, help="run one method"
    )
    train.add_argument("--method", default="glc")
    train.add_argument(
        "--param", action="append", default=[], metavar="KEY=VALUE", help="method parameter"
    )
    train.add_argument("--fraction", type=float, help="trusted fraction")
    train.add_argument("--strength", type=float, default=0.0)
    train.add_argument("--repeat", type=int, help="repeat seed, defaults to the first seed")
    train.add_argument("--noisy-labels", type=Path, help="IDX labels written by corrupt")

    sweep = commands.add_parser(
        "sweep", parents=[common], allow_abbrev=False, help="run the full grid"
    )
    sweep.add_argument("--quick", action="store_true", help="10k examples and 5 epochs")
    sweep.add_argument("--no-resume", action="store_true", help="recompute every cell")

    report = commands.add_parser(
        "report", parents=[common], allow_abbrev=False, help="render a stored report"
    )
    report.add_argument("report", type=Path, help="report JSON written by sweep")
    return parser


def parse_args(argv):
    """Return the parsed arguments and the ``--key=value`` overrides."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    unknown = [flag for flag in extra if not (flag.startswith("--") and "=" in flag)]
    if unknown:
        parser.error(f"unrecognized arguments: {' '.join(unknown)}")
    return args, extra


def configure_logging(args):
    """Configure the root logger for the verbosity flags."""
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)


def load_config(args, overrides):
    """Build the sweep config from ``--config``, the overrides and the global flags.

    Raises:
        InvalidInputError: on an unknown key or an invalid value.
        FormatError: if the config file is not JSON.
    """
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except ValueError as e:
            raise FormatError(args.config, f"not JSON: {e}") from e
    data = apply_overrides(SweepConfig.from_dict(data).to_dict(), overrides)
    for flag in ("seed", "jobs", "out"):
        value = getattr(args, flag)
        if value is not None:
            data[flag] = value
    return SweepConfig.from_dict(data)


def _print_matrix(matrix):
    for row in matrix.entries:
        print(" ".join(f"{value:.4f}" for value in row))
    for note in matrix.notes:
        print(f"note: {note}")


def cmd_cmat(args, config):
    if args.cmat_command == "show":
        matrix = load_matrix(args.path)
        print(f"k={matrix.k} identity={matrix.is_identity()}")
        _print_matrix(matrix)
        return EXIT_OK
    if args.kind == "uniform":
        matrix = make_uniform(args.k, args.strength)
    elif args.kind == "flip":
        seed = args.flip_seed if args.flip_seed is not None else derive_seed(config.seed, "flip")
        matrix = make_flip(args.k, args.strength, seed, args.flip_mode)
    else:
        if (args.group_size is None) == (args.groups is None):
            raise UsageError("hierarchical needs one of --group-size or --groups")
        if args.groups is not None:
            partition = SuperclassPartition([int(group) for group in args.groups.split(",")])
        else:
            partition = SuperclassPartition.contiguous(args.k, args.group_size)
        matrix = make_hierarchical(args.k, args.strength, partition)
    if args.output is not None:
        save_matrix(matrix, args.output)
        log.info("Wrote %s", args.output)
    _print_matrix(matrix)
    return EXIT_OK


def cmd_corrupt(args, config):
    train_set, _ = config.dataset.load(config.seed)
    if args.weak:
        weak_config = attr.evolve(
            config.train, seed=derive_seed(config.seed, "weak"), epochs=args.weak_epochs
        )
        model = train_weak_labeler(train_set, config.model, weak_config)
        labels = weak_classifier_labels(
            model, train_set.features, args.temperature, derive_seed(config.seed, "weak-labels")
        )
    else:
        matrix = load_matrix(args.cmat)
        labels = corrupt_labels(train_set.labels, matrix, derive_seed(config.seed, "corrupt"))
    output = args.output or Path(config.out) / "noisy-labels-idx1-ubyte"
    output.parent.mkdir(parents=True, exist_ok=True)
    write_idx_labels(labels, output)
    changed = float(np.mean(labels != train_set.labels)) * 100
    log.info("Wrote %d labels to %s, %.2f%% changed", labels.size, output, changed)
    print(f"{changed:.2f}% of labels changed")
    return EXIT_OK


def _method_spec(args):
    parameters = {}
    for pair in args.param:
        key, value = parse_override(f"--{pair}")
        parameters[key] = value
    return MethodSpec(args.method, parameters)


def cmd_train(args, config):
    cell = Cell(
        _method_spec(args),
        config.fractions[0] if args.fraction is None else args.fraction,
        strength_index(args.strength),
        config.seeds[0] if args.repeat is None else args.repeat,
    )
    noisy_labels = None if args.noisy_labels is None else load_idx_labels(args.noisy_labels)
    result, percent_error = execute_cell(config, cell, noisy_labels)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / f"{cell.cell_id}.model.json")
    (out / f"{cell.cell_id}.run.json").write_text(
        json.dumps(result.metadata(percent_error), indent=2, sort_keys=True)
    )
    print(f"{cell.method.name}: {percent_error:.2f}% test error")
    return EXIT_OK


def cmd_sweep(args, config):
    if args.quick:
        config = config.quick()
    report = run_sweep(config, resume=not args.no_resume)
    rendered = render_report(report, config.out)
    print(rendered.table, end="")
    if report.failures:
        log.error("%d of %d cells failed", len(report.failures), len(report.cells))
    return EXIT_OK


def cmd_report(args, config):
    report = load_report(args.report)
    out = args.out if args.out is not None else args.report.parent
    rendered = render_report(report, out)
    print(rendered.table, end="")
    return EXIT_OK


COMMANDS = {
    "cmat": cmd_cmat,
    "corrupt": cmd_corrupt,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None):
    """Run the command line and return its exit code."""
    argv = sys.argv[1:] if argv is None else argv
    try:
        args, overrides = parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args)
    try:
        config = load_config(args, overrides)
    except InvalidInputError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (GoldCorrectError, OSError) as e:
        log.error("%s", e)
        return exit_code(e)
    try:
        return COMMANDS[args.command](args, config)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (GoldCorrectError, OSError) as e:
        log.error("%s", e)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
