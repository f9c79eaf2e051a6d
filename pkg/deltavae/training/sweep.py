# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Rate-distortion sweep over anti-collapse methods.

A grid file names a base run config, the seeds, and for every method the
knob values to try. Each (method, knob, encoder_mode, seed) cell is one
training run. Failed cells are recorded and the sweep continues.
"""

from __future__ import annotations

import dataclasses
import logging
import pathlib
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from deltavae import helper
from deltavae.config import ConfigParser
from deltavae.data import Dataset
from deltavae.exception import ConfigurationError, ExceptionAnnotator
from deltavae.nets.model import ConstraintMode, EncoderMode
from deltavae.training.objective import ObjectiveMode
from deltavae.training.record import RunRecord
from deltavae.training.run_config import (GRID_DIR, RunConfig,
                                          load_config_data,
                                          resolve_config_path)
from deltavae.training.trainer import train

Knob = Optional[float]

TABLE_COLUMNS = ("method", "knob", "encoder_mode", "seed", "status",
                 "rate_nats", "rate_bits", "aux_rate_nats", "aux_rate_bits",
                 "committed_rate_nats", "distortion_nats", "probe_acc",
                 "elbo_bound")


def _with_delta(cfg: RunConfig, knob: Knob) -> RunConfig:
  model = dataclasses.replace(
      cfg.model,
      constraint=ConstraintMode.TEMPORAL_DELTA,
      alpha_range=None,
      target_rate=knob)
  objective = dataclasses.replace(
      cfg.objective, mode=ObjectiveMode.DELTA_STRUCTURAL)
  return dataclasses.replace(cfg, model=model, objective=objective)


def _with_independent_delta(cfg: RunConfig, knob: Knob) -> RunConfig:
  assert knob is not None
  cells = cfg.data.n * cfg.model.latent_dim
  model = dataclasses.replace(
      cfg.model,
      constraint=ConstraintMode.INDEPENDENT_DELTA,
      alpha_range=None,
      target_rate=None,
      independent_delta=knob / cells)
  objective = dataclasses.replace(
      cfg.objective, mode=ObjectiveMode.DELTA_STRUCTURAL)
  return dataclasses.replace(cfg, model=model, objective=objective)


def _unconstrained(cfg: RunConfig, mode: ObjectiveMode,
                   **objective_kwargs: Any) -> RunConfig:
  model = dataclasses.replace(
      cfg.model,
      constraint=ConstraintMode.NONE,
      alpha_range=None,
      target_rate=None,
      independent_delta=0.0)
  objective = dataclasses.replace(cfg.objective, mode=mode, **objective_kwargs)
  return dataclasses.replace(cfg, model=model, objective=objective)


class SweepMethod(helper.StrEnumWithHelp):
  DELTA = ("delta", "Temporal delta-VAE, knob = committed nats per sequence.")
  INDEPENDENT_DELTA = (
      "independent_delta",
      "Independent delta-VAE, knob = committed nats per sequence, split "
      "evenly over cells.")
  BETA = ("beta", "beta-VAE, knob = beta.")
  FREE_BITS = ("free_bits", "Free bits, knob = nats per cell.")
  ANNEAL = ("anneal", "KL annealing, knob = anneal_end_step.")
  VANILLA = ("vanilla", "Plain ELBO, no knob.")

  @property
  def has_knob(self) -> bool:
    return self != SweepMethod.VANILLA

  def apply(self, cfg: RunConfig, knob: Knob) -> RunConfig:
    if self.has_knob and knob is None:
      raise ConfigurationError(f"Method {self} needs a knob value")
    transforms: Dict[SweepMethod, Callable[[RunConfig, Knob], RunConfig]] = {
        SweepMethod.DELTA:
            _with_delta,
        SweepMethod.INDEPENDENT_DELTA:
            _with_independent_delta,
        SweepMethod.BETA:
            lambda cfg, knob: _unconstrained(cfg, ObjectiveMode.BETA, beta=knob),
        SweepMethod.FREE_BITS:
            lambda cfg, knob: _unconstrained(
                cfg, ObjectiveMode.FREE_BITS, free_bits_per_cell=knob),
        SweepMethod.ANNEAL:
            lambda cfg, knob: _unconstrained(
                cfg, ObjectiveMode.ANNEAL, anneal_end_step=int(knob)),
        SweepMethod.VANILLA:
            lambda cfg, knob: _unconstrained(cfg, ObjectiveMode.VANILLA),
    }
    return transforms[self](cfg, knob)


@dataclasses.dataclass(frozen=True)
class SweepCell:
  method: SweepMethod
  knob: Knob
  encoder_mode: EncoderMode
  seed: int
  config: RunConfig

  @property
  def name(self) -> str:
    knob = "none" if self.knob is None else f"{self.knob:g}"
    return f"{self.method}_{knob}_{self.encoder_mode}_seed{self.seed}"


def _parse_methods(data: Dict[str, Any]) -> Dict[SweepMethod, List[Knob]]:
  methods: Dict[SweepMethod, List[Knob]] = {}
  for name, entry in data.items():
    method = SweepMethod(name)
    values = list((entry or {}).get("values", []))
    if method.has_knob and not values:
      raise ConfigurationError(f"Method {method} needs a non-empty 'values'")
    if not method.has_knob and values:
      raise ConfigurationError(f"Method {method} takes no 'values'")
    methods[method] = [float(value) for value in values] or [None]
  if not methods:
    raise ConfigurationError("A sweep grid needs at least one method")
  return methods


def _parse_base(data: Union[str, Dict[str, Any]]) -> RunConfig:
  if isinstance(data, str):
    data = load_config_data(data)
  return RunConfig.from_config(dict(data))


@dataclasses.dataclass(frozen=True)
class SweepGrid:
  """Base config crossed with methods, knobs, encoder modes and seeds."""
  base: RunConfig
  seeds: Sequence[int] = (0,)
  methods: Dict[SweepMethod, List[Knob]] = dataclasses.field(
      default_factory=lambda: {SweepMethod.VANILLA: [None]})
  encoder_modes: Sequence[EncoderMode] = ()

  @classmethod
  def config_parser(cls) -> ConfigParser[SweepGrid]:
    parser = ConfigParser("SweepGrid", cls)
    parser.add_argument(
        "base",
        type=_parse_base,
        required=True,
        help="Run config applied to every cell, inline or a preset name.")
    parser.add_argument("seeds", type=int, is_list=True, default=[0])
    parser.add_argument(
        "methods",
        type=_parse_methods,
        required=True,
        help="Method name to {values: [...]}. Methods: " +
        ", ".join(str(method) for method in SweepMethod))
    parser.add_argument(
        "encoder_modes",
        type=EncoderMode,
        is_list=True,
        default=[],
        help="Encoder modes to cross with every cell, defaults to the "
        "base config's mode.")
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> SweepGrid:
    return cls.config_parser().parse(config_data, throw)

  @classmethod
  def load(cls, name_or_path: Union[str, pathlib.Path]) -> SweepGrid:
    return cls.from_config(load_config_data(name_or_path, GRID_DIR))

  def cells(self) -> List[SweepCell]:
    encoder_modes = list(self.encoder_modes) or [self.base.model.encoder_mode]
    cells = []
    for method, knobs in self.methods.items():
      for knob in knobs:
        for encoder_mode in encoder_modes:
          for seed in self.seeds:
            cfg = method.apply(self.base, knob)
            cfg = dataclasses.replace(
                cfg,
                seed=seed,
                model=dataclasses.replace(cfg.model, encoder_mode=encoder_mode))
            cell = SweepCell(method, knob, encoder_mode, seed, cfg)
            cells.append(
                dataclasses.replace(
                    cell, config=dataclasses.replace(cfg, name=cell.name)))
    return cells

  def to_json(self) -> Dict[str, Any]:
    return {
        "base": self.base.to_json(),
        "seeds": list(self.seeds),
        "methods": {str(method): knobs for method, knobs in self.methods.items()},
        "encoder_modes": [str(mode) for mode in self.encoder_modes],
    }


def grid_path(name_or_path: Union[str, pathlib.Path]) -> pathlib.Path:
  return resolve_config_path(name_or_path, GRID_DIR)


class ThreadMode(helper.StrEnumWithHelp):
  NONE = ("none", "Train all cells sequentially, default.")
  METHOD = ("method", "Train the cells of each method in a parallel thread.")
  RUN = ("run", "Train each cell in a parallel thread.")

  def group(self, sweep: Sweep, cells: List[SweepCell]) -> List[CellThreadGroup]:
    if self == ThreadMode.NONE:
      return [CellThreadGroup(sweep, cells)]
    if self == ThreadMode.RUN:
      return [CellThreadGroup(sweep, [cell]) for cell in cells]
    if self == ThreadMode.METHOD:
      groups = helper.group_by(cells, lambda cell: cell.method)
      return [CellThreadGroup(sweep, group) for group in groups.values()]
    raise ValueError(f"Unexpected thread mode: {self}")


class CellThreadGroup(threading.Thread):

  def __init__(self, sweep: Sweep, cells: List[SweepCell]):
    super().__init__()
    assert cells, "Got unexpected empty cells list"
    self._sweep = sweep
    self._cells = cells

  def run(self) -> None:
    for cell in self._cells:
      self._sweep.run_cell(cell)


class Sweep:
  """Trains every cell of a grid and writes the rate-distortion tables."""

  def __init__(self,
               grid: SweepGrid,
               out_dir: pathlib.Path,
               dataset: Optional[Dataset] = None,
               thread_mode: ThreadMode = ThreadMode.NONE,
               throw: bool = False) -> None:
    self.grid = grid
    self.out_dir = out_dir
    self.thread_mode = thread_mode
    self._dataset = dataset
    self._cells = grid.cells()
    self._records: Dict[str, RunRecord] = {}
    self._exceptions = ExceptionAnnotator(throw)
    self._lock = threading.Lock()

  @property
  def cells(self) -> List[SweepCell]:
    return self._cells

  @property
  def records(self) -> Dict[str, RunRecord]:
    return self._records

  @property
  def exceptions(self) -> ExceptionAnnotator:
    return self._exceptions

  @property
  def is_success(self) -> bool:
    return self._exceptions.is_success

  def _load_dataset(self) -> Dataset:
    if self._dataset is None:
      self._dataset = self.grid.base.data.load()
    return self._dataset

  def run_cell(self, cell: SweepCell) -> None:
    index = self._cells.index(cell)
    logging.info("=" * 80)
    logging.info("CELL %s/%s: %s", index + 1, len(self._cells), cell.name)
    logging.info("=" * 80)
    annotator = ExceptionAnnotator(self._exceptions.throw)
    with annotator.capture(f"cell {cell.name}"):
      record = train(cell.config, self._dataset,
                     self.out_dir / "runs" / cell.name)
      with self._lock:
        self._records[cell.name] = record
    if not annotator.is_success:
      with self._lock:
        self._exceptions.extend(annotator)

  def run(self) -> None:
    self._load_dataset()
    groups = self.thread_mode.group(self, self._cells)
    with helper.TimeScope(f"Sweep of {len(self._cells)} cells"):
      if len(groups) == 1:
        groups[0].run()
      else:
        for group in groups:
          group.start()
        for group in groups:
          group.join()
    self.write_results()

  def _row(self, cell: SweepCell, split: str) -> List[Any]:
    record = self._records.get(cell.name)
    knob = "" if cell.knob is None else cell.knob
    prefix = [str(cell.method), knob, str(cell.encoder_mode), cell.seed]
    if record is None:
      return prefix + ["failed"] + [""] * (len(TABLE_COLUMNS) - 5)
    evaluation = record.evaluations[split]
    probe = evaluation.probe_accuracy
    return prefix + [
        record.status,
        evaluation.rate_nats,
        evaluation.rate_bits,
        evaluation.aux_rate_nats,
        evaluation.aux_rate_bits,
        evaluation.committed_rate_nats,
        evaluation.distortion_nats,
        "" if probe is None else probe,
        evaluation.elbo_bound,
    ]

  def table(self, split: str) -> List[List[Any]]:
    return [self._row(cell, split) for cell in self._cells]

  @property
  def header(self) -> Dict[str, Any]:
    return helper.output_header(self.grid.to_json(), None)

  def write_results(self) -> None:
    for split in ("test", "train"):
      helper.write_csv(self.out_dir / f"rate_distortion_{split}.csv",
                       self.header, TABLE_COLUMNS, self.table(split))
    failures = self._exceptions.to_json()
    helper.write_json(
        self.out_dir / "sweep.json", self.header, {
            "grid": self.grid.to_json(),
            "cells": [cell.name for cell in self._cells],
            "completed": sorted(self._records),
            "failures": failures,
        })
    logging.info("Wrote sweep results to %s", self.out_dir)
    if failures:
      logging.error("%d of %d cells failed", len(failures), len(self._cells))


def rate_distortion_sweep(grid: SweepGrid,
                          out_dir: pathlib.Path,
                          dataset: Optional[Dataset] = None,
                          thread_mode: ThreadMode = ThreadMode.NONE) -> Sweep:
  sweep = Sweep(grid, out_dir, dataset, thread_mode)
  sweep.run()
  return sweep
