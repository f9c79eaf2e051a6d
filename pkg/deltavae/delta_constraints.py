# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Posterior parameterizations with a committed rate.

Independent: each cell of q is pushed into the region where
KL(q || N(0, 1)) >= delta. The defining inequality is
  mu^2 >= 2 delta + 1 + ln sigma^2 - sigma^2,
so sigma is squashed into the feasible interval and mu is offset by the
square root of the right hand side. The learned part max(0, raw_mu) is
added after the square root. The other reading, adding it inside the
root, also satisfies the inequality but is not implemented.

Temporal: a plain mean-field posterior. The committed rate comes from the
AR(1) prior structure, not from the parameterization.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Tuple, Union

import numpy as np

from deltavae import root_finding
from deltavae.autodiff import Node, ops
from deltavae.exception import DomainError
from deltavae.gauss_kl import SIGMA_FLOOR, GaussianSeqPosterior

ArrayOrFloat = Union[float, np.ndarray]


def _gap(sigma: float, delta: float) -> float:
  return math.log(sigma * sigma) - sigma * sigma + 2.0 * delta + 1.0


@dataclasses.dataclass(frozen=True)
class IndependentDeltaConstraint:
  delta: float
  sigma_low: float
  sigma_high: float

  def __post_init__(self) -> None:
    if not self.sigma_low <= 1.0 <= self.sigma_high:
      raise DomainError(
          f"Invalid interval [{self.sigma_low}, {self.sigma_high}]")

  @classmethod
  def for_delta(cls, delta: float) -> IndependentDeltaConstraint:
    sigma_low, sigma_high = feasible_sigma_interval(delta)
    return cls(float(delta), sigma_low, sigma_high)


def feasible_sigma_interval(delta: float) -> Tuple[float, float]:
  """Endpoints of {sigma > 0: ln sigma^2 - sigma^2 + 2 delta + 1 >= 0}."""
  if not math.isfinite(delta) or delta < 0:
    raise DomainError(f"delta must be finite and >= 0, got {delta}")
  if delta == 0:
    return (1.0, 1.0)
  # The gap is increasing on (0, 1] and decreasing on [1, inf).
  low = math.exp(-delta - 1.5)
  sigma_low = root_finding.bisect_increasing(
      lambda s: _gap(s, delta), low, 1.0, keep="hi")
  high = 2.0
  while _gap(high, delta) > 0:
    high *= 2.0
  sigma_high = root_finding.bisect_increasing(
      lambda s: -_gap(s, delta), 1.0, high, keep="lo")
  return (sigma_low, sigma_high)


def _sigmoid(x: np.ndarray) -> np.ndarray:
  e = np.exp(-np.abs(x))
  return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def constrain_independent(
    raw_mu: ArrayOrFloat, raw_sigma: ArrayOrFloat,
    c: IndependentDeltaConstraint) -> Tuple[ArrayOrFloat, ArrayOrFloat]:
  raw_mu = np.asarray(raw_mu, dtype=np.float64)
  raw_sigma = np.asarray(raw_sigma, dtype=np.float64)
  sigma = c.sigma_low + (c.sigma_high - c.sigma_low) * _sigmoid(raw_sigma)
  floor = 2.0 * c.delta + 1.0 + np.log(sigma * sigma) - sigma * sigma
  mu = np.sqrt(np.maximum(floor, 0.0)) + np.maximum(raw_mu, 0.0)
  if mu.ndim == 0:
    return float(mu), float(sigma)
  return mu, sigma


def constrain_independent_graph(raw_mu: Node, raw_sigma: Node,
                                c: IndependentDeltaConstraint
                               ) -> Tuple[Node, Node]:
  sigma = c.sigma_low + (c.sigma_high - c.sigma_low) * ops.sigmoid(raw_sigma)
  floor = (2.0 * c.delta + 1.0) + 2.0 * ops.log(sigma) - ops.square(sigma)
  mu = ops.sqrt(ops.relu(floor)) + ops.relu(raw_mu)
  return mu, sigma


def temporal_posterior(raw_mus: np.ndarray,
                       raw_sigmas: np.ndarray) -> GaussianSeqPosterior:
  stds = np.logaddexp(0.0, np.asarray(raw_sigmas, dtype=np.float64))
  return GaussianSeqPosterior(raw_mus, stds + SIGMA_FLOOR)


def temporal_posterior_graph(raw_mus: Node,
                             raw_sigmas: Node) -> Tuple[Node, Node]:
  return raw_mus, ops.softplus(raw_sigmas) + SIGMA_FLOOR
