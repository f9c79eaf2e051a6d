# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
ELBO with an analytic rate, and the loss transforms of the anti-collapse
objectives. All values are nats per sequence, averaged over the batch.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from deltavae import helper
from deltavae.autodiff import Node, ops
from deltavae.config import ConfigParser
from deltavae.exception import ConfigurationError, DomainError
from deltavae.gauss_kl import kl_seq_cells_graph
from deltavae.nets.model import (ToyModel, encode_graph, reconstruction_log_prob,
                                 reparameterize_graph)

SeedLike = Union[int, Sequence[int]]


class ObjectiveMode(helper.StrEnumWithHelp):
  DELTA_STRUCTURAL = ("delta_structural",
                      "Negative ELBO; the committed rate comes from the model.")
  BETA = ("beta", "Reconstruction + beta * rate.")
  FREE_BITS = ("free_bits",
               "Reconstruction + sum over groups of max(group KL, threshold).")
  ANNEAL = ("anneal",
            "Reconstruction + w * rate, w rising linearly from 0 to 1.")
  VANILLA = ("vanilla", "Negative ELBO.")


class FreeBitsGranularity(helper.StrEnumWithHelp):
  CELL = ("cell", "One group per timestep and latent dimension.")
  TIMESTEP = ("timestep", "One group per timestep.")
  DIMENSION = ("dimension", "One group per latent dimension.")
  SEQUENCE = ("sequence", "A single group for the whole sequence.")

  def group_axes(self) -> Optional[tuple]:
    """Axes of the (n, d) cell grid summed into one group."""
    if self == FreeBitsGranularity.CELL:
      return None
    if self == FreeBitsGranularity.TIMESTEP:
      return (1,)
    if self == FreeBitsGranularity.DIMENSION:
      return (0,)
    return (0, 1)

  def cells_per_group(self, n: int, d: int) -> int:
    return {
        FreeBitsGranularity.CELL: 1,
        FreeBitsGranularity.TIMESTEP: d,
        FreeBitsGranularity.DIMENSION: n,
        FreeBitsGranularity.SEQUENCE: n * d,
    }[self]


@dataclasses.dataclass(frozen=True)
class ObjectiveCfg:
  """Training objective. Fields a mode does not use are ignored."""
  mode: ObjectiveMode = ObjectiveMode.VANILLA
  beta: float = 1.0
  free_bits_per_cell: float = 0.0
  free_bits_granularity: FreeBitsGranularity = FreeBitsGranularity.CELL
  anneal_end_step: int = 1000

  def __post_init__(self) -> None:
    if self.beta < 0:
      raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
    if self.free_bits_per_cell < 0:
      raise ConfigurationError(
          f"free_bits_per_cell must be >= 0, got {self.free_bits_per_cell}")
    if self.anneal_end_step < 1:
      raise ConfigurationError(
          f"anneal_end_step must be >= 1, got {self.anneal_end_step}")

  @classmethod
  def config_parser(cls) -> ConfigParser[ObjectiveCfg]:
    parser = ConfigParser("ObjectiveCfg", cls)
    parser.add_argument("mode", type=ObjectiveMode, default=ObjectiveMode.VANILLA)
    parser.add_argument("beta", type=float, default=1.0,
                        help="Rate weight in beta mode.")
    parser.add_argument("free_bits_per_cell", type=float, default=0.0,
                        help="Free-bits threshold per cell, in nats.")
    parser.add_argument(
        "free_bits_granularity",
        type=FreeBitsGranularity,
        default=FreeBitsGranularity.CELL,
        help="Cells sharing one threshold; a group's threshold is "
        "free_bits_per_cell times its cell count.")
    parser.add_argument("anneal_end_step", type=int, default=1000,
                        help="Step at which the annealed rate weight hits 1.")
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> ObjectiveCfg:
    return cls.config_parser().parse(config_data, throw)

  def to_json(self) -> Dict[str, Any]:
    data = dataclasses.asdict(self)
    data["mode"] = str(self.mode)
    data["free_bits_granularity"] = str(self.free_bits_granularity)
    return data

  def rate_weight(self, step: int) -> float:
    if self.mode == ObjectiveMode.BETA:
      return self.beta
    if self.mode == ObjectiveMode.ANNEAL:
      return min(1.0, step / self.anneal_end_step)
    return 1.0

  def is_likelihood_bound(self, step: int) -> bool:
    if self.mode == ObjectiveMode.FREE_BITS:
      return self.free_bits_per_cell == 0
    return self.rate_weight(step) == 1.0


@dataclasses.dataclass(frozen=True, eq=False)
class ElboBreakdown:
  reconstruction: float
  rate: float
  objective_value: float
  per_cell_kl: np.ndarray
  rate_per_sequence: np.ndarray
  is_likelihood_bound: bool
  loss: Node

  @property
  def distortion(self) -> float:
    return -self.reconstruction

  @property
  def elbo(self) -> float:
    return self.reconstruction - self.rate

  @property
  def per_timestep_kl(self) -> np.ndarray:
    return self.per_cell_kl.sum(axis=1)

  @property
  def per_dimension_kl(self) -> np.ndarray:
    return self.per_cell_kl.sum(axis=0)


def _rate_penalty(rate: Node, cells: Node, objective: ObjectiveCfg,
                  step: int) -> Node:
  """Rate part of the loss; cells is the batch-averaged per-cell KL (n, d)."""
  if objective.mode == ObjectiveMode.FREE_BITS and objective.free_bits_per_cell:
    granularity = objective.free_bits_granularity
    axes = granularity.group_axes()
    groups = cells if axes is None else ops.sum(cells, axis=axes)
    n, d = cells.shape
    threshold = objective.free_bits_per_cell * granularity.cells_per_group(n, d)
    return ops.sum(ops.maximum(groups, threshold))
  weight = objective.rate_weight(step)
  if weight == 1.0:
    return rate
  return weight * rate


def elbo(model: ToyModel,
         batch: np.ndarray,
         objective: ObjectiveCfg,
         mc_samples: int,
         seed: SeedLike,
         step: int = 0,
         params: Optional[Dict[str, Node]] = None) -> ElboBreakdown:
  """Batch ELBO terms and the mode-transformed loss node.

  The rate is the closed-form KL against the model prior. The
  reconstruction term averages mc_samples reparameterized draws.
  """
  if mc_samples < 1:
    raise DomainError(f"mc_samples must be >= 1, got {mc_samples}")
  batch = np.asarray(batch, dtype=np.float64)
  if batch.ndim != 3 or batch.shape[1:] != (model.n, model.obs_dim):
    raise ConfigurationError(
        f"Expected batch of shape (B, {model.n}, {model.obs_dim}), "
        f"got {batch.shape}")
  if params is None:
    params = model.leaves()
  x = Node.constant(batch)
  means, stds = encode_graph(model, params, x)
  cells = kl_seq_cells_graph(means, stds, model.prior)
  rate_per_sequence = ops.sum(cells, axis=(-2, -1))
  rate = ops.mean(rate_per_sequence)
  mean_cells = ops.mean(cells, axis=0)

  rng = np.random.default_rng(seed)
  noise = rng.standard_normal((mc_samples,) + means.shape)
  log_probs = None
  for sample in range(mc_samples):
    z = reparameterize_graph(means, stds, noise[sample])
    log_prob = reconstruction_log_prob(model, params, x, z)
    log_probs = log_prob if log_probs is None else log_probs + log_prob
  assert log_probs is not None
  reconstruction = ops.mean(log_probs) * (1.0 / mc_samples)

  loss = _rate_penalty(rate, mean_cells, objective, step) - reconstruction
  return ElboBreakdown(
      reconstruction=reconstruction.item(),
      rate=rate.item(),
      objective_value=loss.item(),
      per_cell_kl=mean_cells.value,
      rate_per_sequence=rate_per_sequence.value,
      is_likelihood_bound=objective.is_likelihood_bound(step),
      loss=loss)
