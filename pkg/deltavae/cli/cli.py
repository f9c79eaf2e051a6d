# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import pathlib
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

import deltavae
from deltavae import ar1_prior, cli_helper, helper
from deltavae.mc_oracle import numeric_min_kl
from deltavae.nets.aux_prior import AuxPrior
from deltavae.nets.model import load_model, load_model_extra, sample_from_prior
from deltavae.training import run_config
from deltavae.training.record import RunRecord
from deltavae.training.sweep import TABLE_COLUMNS, Sweep, SweepGrid, ThreadMode
from deltavae.training.trainer import train
from deltavae.verify import Suite, run_suite

argparse.ArgumentError = cli_helper.DeltaVaeArgumentError

EXIT_FAILURE: int = 1

RATE_TABLE_COLUMNS = ("alpha", "n", "d", "delta_nats", "delta_bits")
TOY2D_COLUMNS = ("distribution", "mean_1", "mean_2", "var_1", "var_2",
                 "covariance", "major_std", "minor_std", "angle_deg",
                 "min_kl_nats", "min_kl_bits", "closed_form_nats")


def default_out_dir(cwd: pathlib.Path, suffix: str = "") -> pathlib.Path:
  """results/<timestamp>[_suffix] below cwd."""
  name = dt.datetime.now().strftime("%Y-%m-%d_%H%M%S")
  if suffix:
    name = f"{name}_{suffix}"
  return cwd / "results" / name


def ellipse_row(name: str, mean: np.ndarray, cov: np.ndarray) -> List[Any]:
  """Contour parameters of a 2d Gaussian: axis stds and major-axis angle."""
  eigenvalues, eigenvectors = np.linalg.eigh(cov)
  major = eigenvectors[:, 1]
  angle = math.degrees(math.atan2(major[1], major[0])) % 180.0
  if math.isclose(eigenvalues[0], eigenvalues[1]):
    angle = 0.0
  return [
      name,
      float(mean[0]),
      float(mean[1]),
      float(cov[0, 0]),
      float(cov[1, 1]),
      float(cov[0, 1]),
      math.sqrt(eigenvalues[1]),
      math.sqrt(eigenvalues[0]),
      angle,
  ]


class DeltaVaeCLI:

  def __init__(self) -> None:
    self.parser = cli_helper.DeltaVaeArgumentParser(
        prog="dvae",
        description=("Committed-rate sequential VAEs: rate tables, "
                     "verification oracles and training experiments."))
    self.args = argparse.Namespace()
    self._subparsers: Dict[str, cli_helper.DeltaVaeArgumentParser] = {}
    self._setup_parser()
    self._setup_subparser()

  def _setup_parser(self) -> None:
    self.parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {deltavae.__version__}")
    self._add_verbosity_argument(self.parser)

  def _add_verbosity_argument(self, parser: argparse.ArgumentParser) -> None:
    is_top_level = parser is self.parser
    group = parser.add_argument_group("Output and debugging")
    levels = group.add_mutually_exclusive_group()
    levels.add_argument(
        "-q",
        "--quiet",
        dest="verbosity",
        action="store_const",
        const=-1,
        default=argparse.SUPPRESS,
        help="Only log errors.")
    levels.add_argument(
        "-v",
        "--verbose",
        dest="verbosity",
        action="count",
        default=argparse.SUPPRESS,
        help="Log debug messages, repeatable.")
    group.add_argument(
        "--throw",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Raise the first exception instead of logging a summary.")
    tty = bool(getattr(sys.stdout, "isatty", lambda: False)())
    group.add_argument(
        "--no-color",
        dest="color",
        action="store_false",
        default=tty if is_top_level else argparse.SUPPRESS,
        help="Plain log output, the default when stdout is not a terminal.")

  def _add_subparser(self, name: str, help_text: str, subcommand_fn,
                     **kwargs) -> cli_helper.DeltaVaeArgumentParser:
    parser = self.subparsers.add_parser(name, help=help_text, **kwargs)
    assert isinstance(parser, cli_helper.DeltaVaeArgumentParser)
    parser.set_defaults(subcommand_fn=subcommand_fn)
    self._add_verbosity_argument(parser)
    self._subparsers[name] = parser
    return parser

  def _setup_subparser(self) -> None:
    self.subparsers = self.parser.add_subparsers(
        title="Subcommands",
        dest="subcommand",
        required=True,
        parser_class=cli_helper.DeltaVaeArgumentParser)
    self._setup_rate_table_subparser()
    self._setup_toy2d_subparser()
    self._setup_verify_subparser()
    self._setup_train_subparser()
    self._setup_sweep_subparser()
    self._setup_sample_subparser()
    self._setup_describe_subparser()
    help_parser = self.subparsers.add_parser(
        "help", help="Print the top-level --help")
    help_parser.set_defaults(subcommand_fn=self.help_subcommand)

  def _setup_rate_table_subparser(self) -> None:
    parser = self._add_subparser(
        "rate-table", "Committed rate over a grid of alpha, n and d.",
        self.rate_table_subcommand)
    parser.add_argument(
        "--alpha-grid",
        type=cli_helper.parse_float_list,
        default=[0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99],
        help="Prior correlations, 'a,b,c' or 'start:stop:count'.")
    parser.add_argument(
        "--n-grid",
        type=cli_helper.parse_int_list,
        default=[2, 4, 8, 16, 32, 64],
        help="Sequence lengths, comma-separated, each >= 2.")
    parser.add_argument(
        "--dims",
        type=cli_helper.parse_int_list,
        default=[1],
        help="Latent dimensions sharing one alpha, comma-separated.")
    parser.add_argument("--out", type=pathlib.Path,
                        help="CSV output file, prints a table otherwise.")

  def _setup_toy2d_subparser(self) -> None:
    parser = self._add_subparser(
        "toy2d",
        "Optimal mean-field posterior vs prior contours for n=2, d=1.",
        self.toy2d_subcommand)
    parser.add_argument("--alpha", type=cli_helper.parse_finite_float,
                        default=0.9, help="Prior correlation in [0, 1).")
    parser.add_argument("--seed", type=int, default=0,
                        help="Seed of the minimizer restarts.")
    parser.add_argument("--out", type=pathlib.Path,
                        help="CSV output file, prints a table otherwise.")

  def _setup_verify_subparser(self) -> None:
    parser = self._add_subparser("verify", "Run oracle and property suites.",
                                 self.verify_subcommand)
    parser.add_argument(
        "--suite",
        type=Suite,
        action="append",
        help="Suite to run, repeatable, defaults to all.\n" +
        Suite.help_text(indent=2))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--quick",
        action="store_true",
        default=False,
        help="Smaller fuzz counts, skips the slow bound minimization grid.")
    parser.add_argument("--out", type=pathlib.Path,
                        help="JSON report file, printed to stdout otherwise.")

  def _setup_train_subparser(self) -> None:
    parser = self._add_subparser("train", "Train one model from a config.",
                                 self.train_subcommand)
    parser.add_argument(
        "--config",
        required=True,
        help="hjson run config file or preset name, see `describe presets`.")
    parser.add_argument("--seed", type=int, help="Override the config seed.")
    parser.add_argument(
        "--out-dir",
        type=pathlib.Path,
        help="Output directory, defaults to results/<timestamp>_<name>.")

  def _setup_sweep_subparser(self) -> None:
    parser = self._add_subparser(
        "sweep", "Train a grid of methods and knobs, write rate-distortion "
        "tables.", self.sweep_subcommand)
    parser.add_argument(
        "--grid",
        required=True,
        help="hjson sweep grid file or grid name, see `describe grids`.")
    parser.add_argument(
        "--parallel",
        default=ThreadMode.NONE,
        type=ThreadMode,
        help=("Change how cells are executed.\n" +
              ThreadMode.help_text(indent=2)))
    parser.add_argument(
        "--out-dir",
        type=pathlib.Path,
        help="Output directory, defaults to results/<timestamp>_sweep.")

  def _setup_sample_subparser(self) -> None:
    parser = self._add_subparser("sample",
                                 "Decode sequences from a trained model.",
                                 self.sample_subcommand)
    parser.add_argument(
        "--model",
        type=cli_helper.parse_existing_file_path,
        required=True,
        help="model.json written by train.")
    parser.add_argument("--prior", choices=["ar1", "aux"], default="ar1",
                        help="Prior the latents are drawn from.")
    parser.add_argument("--count", type=cli_helper.parse_positive_int,
                        default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mean-only", action="store_true", default=False,
                        help="Feed back decoder means instead of samples.")
    parser.add_argument("--out", type=pathlib.Path,
                        help="CSV output file, prints a table otherwise.")

  def _setup_describe_subparser(self) -> None:
    parser = self._add_subparser(
        "describe", "Print config keys, presets and sweep grids.",
        self.describe_subcommand, aliases=["desc"])
    parser.add_argument(
        "category",
        nargs="?",
        choices=["all", "config", "presets", "grids"],
        default="all",
        help="Limit output to the given category, defaults to 'all'")
    parser.add_argument(
        "--json",
        default=False,
        action="store_true",
        help="Print the data as json data")

  def rate_table_subcommand(self, args: argparse.Namespace) -> None:
    with cli_helper.late_argument_type_error_wrapper("--alpha-grid"):
      for alpha in args.alpha_grid:
        if not 0 <= alpha <= ar1_prior.ALPHA_MAX:
          raise ValueError(
              f"alpha must be in [0, {ar1_prior.ALPHA_MAX}], got {alpha}")
    with cli_helper.late_argument_type_error_wrapper("--n-grid"):
      if min(args.n_grid) < 2:
        raise ValueError(f"n must be >= 2, got {args.n_grid}")
    with cli_helper.late_argument_type_error_wrapper("--dims"):
      if min(args.dims) < 1:
        raise ValueError(f"d must be >= 1, got {args.dims}")
    rows = []
    for alpha in args.alpha_grid:
      for n in args.n_grid:
        for d in args.dims:
          nats = ar1_prior.committed_rate(
              ar1_prior.make_prior([alpha] * d), n)
          rows.append([alpha, n, d, nats, helper.nats_to_bits(nats)])
    config = {
        "alpha_grid": args.alpha_grid,
        "n_grid": args.n_grid,
        "dims": args.dims
    }
    self._emit_table(args.out, config, None, RATE_TABLE_COLUMNS, rows)

  def toy2d_subcommand(self, args: argparse.Namespace) -> None:
    with cli_helper.late_argument_type_error_wrapper("--alpha"):
      prior = ar1_prior.make_prior([args.alpha])
    alpha = args.alpha
    min_kl, argmin = numeric_min_kl(prior, 2, seed=args.seed)
    closed_form = -0.5 * math.log1p(-alpha * alpha)
    prior_cov = np.array([[1.0, alpha], [alpha, 1.0]])
    posterior_cov = np.diag(argmin.stds[:, 0]**2)
    rows = [
        ellipse_row("prior", np.zeros(2), prior_cov),
        ellipse_row("posterior", argmin.means[:, 0], posterior_cov),
    ]
    for row in rows:
      row.extend([min_kl, helper.nats_to_bits(min_kl), closed_form])
    self._emit_table(args.out, {"alpha": alpha}, args.seed, TOY2D_COLUMNS, rows)

  def verify_subcommand(self, args: argparse.Namespace) -> None:
    suites = args.suite or list(Suite)
    reports = [run_suite(suite, args.seed, args.quick) for suite in suites]
    passed = all(report.passed for report in reports)
    config = {"suites": [str(suite) for suite in suites], "quick": args.quick}
    body = {
        "passed": passed,
        "suites": [report.to_json() for report in reports],
    }
    header = helper.output_header(config, args.seed)
    if args.out:
      helper.write_json(args.out, header, body)
    else:
      print(helper.to_json_str({"header": header, **body}))
    if not passed:
      failed = [str(report.suite) for report in reports if not report.passed]
      logging.error("verify FAILED: %s", ", ".join(failed))
      sys.exit(EXIT_FAILURE)

  def train_subcommand(self, args: argparse.Namespace) -> None:
    with cli_helper.late_argument_type_error_wrapper("--config"):
      cfg = run_config.load_run_config(args.config, args.seed)
    out_dir = args.out_dir or default_out_dir(pathlib.Path.cwd(), cfg.name)
    try:
      record = train(cfg, out_dir=out_dir)
    except Exception as e:  # pylint: disable=broad-except
      if args.throw:
        raise
      self._log_subcommand_failure(e)
      sys.exit(EXIT_FAILURE)
    self._print_record(record)
    logging.info("Results: %s", out_dir)

  def sweep_subcommand(self, args: argparse.Namespace) -> None:
    out_dir = args.out_dir or default_out_dir(pathlib.Path.cwd(), "sweep")
    with cli_helper.late_argument_type_error_wrapper("--grid"):
      grid = SweepGrid.from_config(
          run_config.load_config_data(args.grid, run_config.GRID_DIR))
      sweep = Sweep(grid, out_dir, thread_mode=args.parallel, throw=args.throw)
    try:
      sweep.run()
    except Exception as e:  # pylint: disable=broad-except
      if args.throw:
        raise
      self._log_subcommand_failure(e)
      sys.exit(EXIT_FAILURE)
    print(tabulate(sweep.table("test"), headers=TABLE_COLUMNS))
    logging.info("Results: %s", out_dir)
    if not sweep.is_success:
      sweep.exceptions.log()
      sys.exit(EXIT_FAILURE)

  def sample_subcommand(self, args: argparse.Namespace) -> None:
    model = load_model(args.model)
    prior: Any = model.prior
    if args.prior == "aux":
      data = load_model_extra(args.model, "aux_prior")
      if data is None:
        raise cli_helper.LateArgumentError(
            "--prior", f"{args.model} has no fitted aux prior")
      prior = AuxPrior.from_json(data)
    z, x = sample_from_prior(model, prior, args.count, args.seed,
                             args.mean_only)
    columns = (["sample", "t"] + [f"z_{k}" for k in range(z.shape[-1])] +
               [f"x_{k}" for k in range(x.shape[-1])])
    rows = [[i, t] + z[i, t].tolist() + x[i, t].tolist()
            for i in range(args.count)
            for t in range(model.n)]
    config = {
        "model": model.config.to_json(),
        "prior": args.prior,
        "mean_only": args.mean_only
    }
    self._emit_table(args.out, config, args.seed, columns, rows)

  def describe_subcommand(self, args: argparse.Namespace) -> None:
    data: Dict[str, Any] = {
        "config": {
            parser.title: str(parser)
            for parser in run_config.RunConfig.section_parsers()
        },
        "presets": {
            name: str(run_config.resolve_config_path(name))
            for name in run_config.list_presets()
        },
        "grids": {
            name: str(run_config.resolve_config_path(name, run_config.GRID_DIR))
            for name in run_config.list_presets(run_config.GRID_DIR)
        },
    }
    if args.category != "all":
      data = {args.category: data[args.category]}
    if args.json:
      print(json.dumps(data, indent=2))
      return
    if "config" in data:
      for text in data["config"].values():
        print(text)
    for category in ("presets", "grids"):
      if category in data:
        print(
            tabulate(
                sorted(data[category].items()),
                headers=[category.capitalize(), "Path"],
                tablefmt="grid"))

  def help_subcommand(self, args: argparse.Namespace) -> None:
    del args
    self.parser.print_help()
    sys.exit(0)

  def _emit_table(self, out: Optional[pathlib.Path], config: Dict[str, Any],
                  seed: Optional[int], columns: Sequence[str],
                  rows: List[List[Any]]) -> None:
    header = helper.output_header(config, seed)
    if out:
      helper.write_csv(out, header, columns, rows)
      logging.info("Wrote %d rows to %s", len(rows), out)
      return
    print("# " + " ".join(f"{key}={value}" for key, value in header.items()))
    print(tabulate(rows, headers=columns, floatfmt=".6g"))

  def _print_record(self, record: RunRecord) -> None:
    table = [["split", "elbo_bound", "rate_nats", "rate_bits", "aux_rate_nats",
              "distortion_nats", "probe_acc"]]
    for split, evaluation in sorted(record.evaluations.items()):
      table.append([
          split, evaluation.elbo_bound, evaluation.rate_nats,
          evaluation.rate_bits, evaluation.aux_rate_nats,
          evaluation.distortion_nats, evaluation.probe_accuracy
      ])
    print(f"committed rate: {record.committed_rate:.6g} nats, "
          f"likelihood bound: {record.is_likelihood_bound}")
    print(tabulate(table, headers="firstrow", floatfmt=".6g"))

  def _log_subcommand_failure(self, e: Exception) -> None:
    logging.debug("Subcommand failure", exc_info=e)
    rule = "-" * 80
    logging.error(rule)
    logging.error("%s failed with %s:", self.args.subcommand,
                  helper.type_name(type(e)))
    logging.error(str(e) or repr(e))
    logging.error(rule)
    logging.error("Rerun with --throw for the traceback, -v for debug logs.")

  def run(self, argv: Sequence[str]) -> None:
    try:
      self.args, extra = self.parser.parse_known_args(argv)
    except argparse.ArgumentError as e:
      # --throw has not been parsed at this point.
      if "--throw" in argv:
        raise
      self.error(str(e))
      return
    if extra:
      self.error(f"unrecognized arguments: {extra}\n"
                 f"See `{self.parser.prog} {self.args.subcommand} --help`.")
    self.args.verbosity = getattr(self.args, "verbosity", 0)
    self.args.throw = getattr(self.args, "throw", False)
    self._initialize_logging()
    try:
      self.args.subcommand_fn(self.args)
    except cli_helper.LateArgumentError as e:
      if self.args.throw:
        raise
      self.error(f"argument {e.flag}: {e.message}")
    except KeyboardInterrupt:
      sys.exit(2)

  def error(self, message: str) -> None:
    """Prints the usage of the active subcommand and exits with 2."""
    subcommand = getattr(self.args, "subcommand", None)
    if not subcommand:
      self.parser.fail(message)
      return
    parser = self._subparsers.get(subcommand, self.parser)
    parser.fail(f"{subcommand}: {message}")

  def _initialize_logging(self) -> None:
    verbosity = self.args.verbosity
    if verbosity < 0:
      handler_level = logging.ERROR
    elif verbosity == 0:
      handler_level = logging.INFO
    else:
      handler_level = logging.DEBUG
    root = logging.getLogger()
    root.setLevel(min(handler_level, logging.INFO))
    handler = logging.StreamHandler()
    handler.setLevel(handler_level)
    # Records of named loggers are dropped.
    handler.addFilter(logging.Filter("root"))
    if self.args.color:
      handler.setFormatter(helper.ColoredLogFormatter())
    root.addHandler(handler)
