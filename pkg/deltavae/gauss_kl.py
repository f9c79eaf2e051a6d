# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Closed-form KL divergences between mean-field Gaussian sequence posteriors
and first-order linear-Gaussian priors.

A prior here is any object exposing per-dimension arrays
  slopes a, offsets b, noise_stds s, init_means m1, init_stds sqrt(v1)
describing z_1 ~ N(m1, v1) and z_t | z_{t-1} ~ N(a z_{t-1} + b, s^2).
The AR(1) prior is a = alpha, b = 0, s = sqrt(1 - alpha^2), m1 = 0, v1 = 1.
All values are in nats.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Protocol, Tuple, Union

import numpy as np

from deltavae.autodiff import Node, ops
from deltavae.exception import ConfigurationError, DomainError

SIGMA_FLOOR: float = 1e-4


class LinearGaussianPrior(Protocol):

  @property
  def dim(self) -> int:
    ...

  @property
  def slopes(self) -> np.ndarray:
    ...

  @property
  def offsets(self) -> np.ndarray:
    ...

  @property
  def noise_stds(self) -> np.ndarray:
    ...

  @property
  def init_means(self) -> np.ndarray:
    ...

  @property
  def init_stds(self) -> np.ndarray:
    ...


def _readonly(value: Any) -> np.ndarray:
  array = np.array(value, dtype=np.float64)
  array.flags.writeable = False
  return array


@dataclasses.dataclass(frozen=True, eq=False)
class GaussianSeqPosterior:
  """Mean-field posterior with per-timestep, per-dimension means and stds."""
  means: np.ndarray
  stds: np.ndarray

  def __post_init__(self) -> None:
    means = _readonly(self.means)
    stds = _readonly(self.stds)
    if means.ndim != 2 or means.shape != stds.shape:
      raise ConfigurationError(
          "Expected means and stds of equal shape (n, d), "
          f"got {means.shape} and {stds.shape}")
    if means.shape[0] < 1 or means.shape[1] < 1:
      raise ConfigurationError(f"Empty posterior of shape {means.shape}")
    if not np.all(np.isfinite(means)) or not np.all(np.isfinite(stds)):
      raise DomainError("Posterior parameters must be finite")
    if np.any(stds < SIGMA_FLOOR):
      raise DomainError(
          f"Posterior stds must be >= {SIGMA_FLOOR}, got min {stds.min()}")
    object.__setattr__(self, "means", means)
    object.__setattr__(self, "stds", stds)

  @property
  def n(self) -> int:
    return self.means.shape[0]

  @property
  def d(self) -> int:
    return self.means.shape[1]

  @property
  def shape(self) -> Tuple[int, int]:
    return (self.n, self.d)


@dataclasses.dataclass(frozen=True, eq=False)
class KlBreakdown:
  total: float
  per_cell: np.ndarray

  @property
  def per_dimension(self) -> np.ndarray:
    return self.per_cell.sum(axis=0)

  @property
  def per_timestep(self) -> np.ndarray:
    return self.per_cell.sum(axis=1)


ArrayOrFloat = Union[float, np.ndarray]


def kl_univariate(mu_q: ArrayOrFloat, sigma_q: ArrayOrFloat,
                  mu_p: ArrayOrFloat, sigma_p: ArrayOrFloat) -> ArrayOrFloat:
  """KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)), elementwise for arrays."""
  sigma_q = np.asarray(sigma_q, dtype=np.float64)
  sigma_p = np.asarray(sigma_p, dtype=np.float64)
  if np.any(~(sigma_q > 0)) or np.any(~(sigma_p > 0)):
    raise DomainError(
        f"Standard deviations must be positive: {sigma_q}, {sigma_p}")
  diff = np.asarray(mu_p, dtype=np.float64) - mu_q
  value = (np.log(sigma_p) - np.log(sigma_q) +
           (sigma_q * sigma_q + diff * diff) / (2.0 * sigma_p * sigma_p) - 0.5)
  value = np.maximum(value, 0.0)
  if value.ndim == 0:
    return float(value)
  return value


def _check_shapes(q: GaussianSeqPosterior, p: LinearGaussianPrior) -> None:
  if q.d != p.dim:
    raise ConfigurationError(
        f"Posterior has d={q.d} dimensions but prior has d={p.dim}")


class _NumpyMath:

  @staticmethod
  def log(x: np.ndarray) -> np.ndarray:
    return np.log(x)

  @staticmethod
  def shift_time(x: np.ndarray) -> np.ndarray:
    shifted = np.zeros_like(x)
    shifted[..., 1:, :] = x[..., :-1, :]
    return shifted


class _GraphMath:
  log = staticmethod(ops.log)
  shift_time = staticmethod(ops.shift_time)


def _prior_coefficients(p: LinearGaussianPrior,
                        n: int) -> Tuple[np.ndarray, ...]:
  """Per-cell prior variance, offset and carried-over coefficient (n, d)."""
  slopes = np.asarray(p.slopes, dtype=np.float64)
  noise_var = np.asarray(p.noise_stds, dtype=np.float64)**2
  init_var = np.asarray(p.init_stds, dtype=np.float64)**2
  var = np.empty((n, p.dim))
  var[0] = init_var
  var[1:] = noise_var
  offset = np.empty((n, p.dim))
  offset[0] = p.init_means
  offset[1:] = p.offsets
  # a^2 sigma_i^2 / s^2 from the next conditional is credited to cell i.
  carried = np.zeros((n, p.dim))
  carried[:-1] = slopes * slopes / noise_var
  return var, offset, carried + 1.0 / var


def _kl_cells(means, stds, p: LinearGaussianPrior, n: int, math_ops):
  var, offset, sigma_coef = _prior_coefficients(p, n)
  slopes = np.asarray(p.slopes, dtype=np.float64)
  mean_diff = means - (math_ops.shift_time(means) * slopes + offset)
  return 0.5 * (sigma_coef * (stds * stds) - 2.0 * math_ops.log(stds) +
                np.log(var) - 1.0 + (mean_diff * mean_diff) / var)


def kl_seq_closed_form(q: GaussianSeqPosterior,
                       p: LinearGaussianPrior) -> KlBreakdown:
  """Exact KL(q || p) with a per-cell attribution that depends on one std."""
  _check_shapes(q, p)
  cells = _kl_cells(q.means, q.stds, p, q.n, _NumpyMath)
  per_cell = np.maximum(cells, 0.0)
  per_cell.flags.writeable = False
  return KlBreakdown(total=float(per_cell.sum()), per_cell=per_cell)


def kl_seq_decomposed(q: GaussianSeqPosterior, p: LinearGaussianPrior) -> float:
  """KL(q || p) as KL of the first step plus expected conditional KLs.

  Uses E[(mu_i - a z_{i-1} - b)^2] = (mu_i - a mu_{i-1} - b)^2
  + a^2 sigma_{i-1}^2 under q.
  """
  _check_shapes(q, p)
  slopes = np.asarray(p.slopes, dtype=np.float64)
  noise = np.asarray(p.noise_stds, dtype=np.float64)
  total = float(
      np.sum(kl_univariate(q.means[0], q.stds[0], p.init_means, p.init_stds)))
  for t in range(1, q.n):
    conditional_mean = slopes * q.means[t - 1] + p.offsets
    expected = kl_univariate(q.means[t], q.stds[t], conditional_mean, noise)
    spread = slopes * slopes * q.stds[t - 1]**2 / (2.0 * noise * noise)
    total += float(np.sum(expected + spread))
  return total


def kl_seq_cells_graph(means: Node, stds: Node, p: LinearGaussianPrior) -> Node:
  """Per-cell KL as a graph node; inputs are (n, d) or (batch, n, d)."""
  if means.shape != stds.shape or means.ndim < 2:
    raise ConfigurationError(
        f"Expected equal (…, n, d) shapes, got {means.shape} and {stds.shape}")
  if means.shape[-1] != p.dim:
    raise ConfigurationError(
        f"Posterior has d={means.shape[-1]} dimensions but prior has "
        f"d={p.dim}")
  return _kl_cells(means, stds, p, means.shape[-2], _GraphMath)


def kl_cells_array(means: np.ndarray, stds: np.ndarray,
                   p: LinearGaussianPrior) -> np.ndarray:
  """Unvalidated per-cell KL for (..., n, d) arrays."""
  return _kl_cells(means, stds, p, means.shape[-2], _NumpyMath)
