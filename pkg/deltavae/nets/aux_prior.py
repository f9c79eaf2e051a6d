# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Auxiliary linear-Gaussian prior fitted to the aggregate posterior.

The fit never touches the encoder or decoder. Per dimension it is the
maximum-likelihood first-order model
  z_1 ~ N(m1, v1), z_t | z_{t-1} ~ N(a z_{t-1} + b, s^2),
computed in closed form from first and second moments: either of posterior
samples (least squares) or, with fit_aux_prior_moments, the exact moments of
mean-field posteriors. The AR(1) prior is a member of this family.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Any, Dict

import numpy as np

from deltavae.ar1_prior import ALPHA_MAX, Ar1Prior, linear_gaussian_log_prob
from deltavae.exception import ConfigurationError, DomainError
from deltavae.gauss_kl import SIGMA_FLOOR

_VARIANCE_EPS: float = 1e-12


def _readonly(value: Any) -> np.ndarray:
  array = np.array(value, dtype=np.float64)
  array.flags.writeable = False
  return array


@dataclasses.dataclass(frozen=True, eq=False)
class AuxPrior:
  slopes: np.ndarray
  offsets: np.ndarray
  noise_stds: np.ndarray
  init_means: np.ndarray
  init_stds: np.ndarray
  degenerate: np.ndarray

  def __post_init__(self) -> None:
    for field in dataclasses.fields(self):
      value = getattr(self, field.name)
      if field.name == "degenerate":
        array = np.array(value, dtype=bool)
        array.flags.writeable = False
      else:
        array = _readonly(value)
      object.__setattr__(self, field.name, array)
    shapes = {getattr(self, field.name).shape
              for field in dataclasses.fields(self)}
    if len(shapes) != 1 or self.slopes.ndim != 1:
      raise ConfigurationError(f"AuxPrior fields differ in shape: {shapes}")
    if np.any(np.abs(self.slopes) >= 1.0):
      raise DomainError(f"Aux slopes must satisfy |a| < 1, got {self.slopes}")
    if np.any(self.noise_stds <= 0) or np.any(self.init_stds <= 0):
      raise DomainError("Aux noise and initial stds must be > 0")

  @classmethod
  def from_ar1(cls, prior: Ar1Prior) -> AuxPrior:
    return cls(prior.slopes, prior.offsets, prior.noise_stds, prior.init_means,
               prior.init_stds, np.zeros(prior.dim, dtype=bool))

  @property
  def dim(self) -> int:
    return self.slopes.size

  @property
  def any_degenerate(self) -> bool:
    return bool(np.any(self.degenerate))

  def to_json(self) -> Dict[str, Any]:
    return {
        field.name: getattr(self, field.name).tolist()
        for field in dataclasses.fields(self)
    }

  @classmethod
  def from_json(cls, data: Dict[str, Any]) -> AuxPrior:
    return cls(**{
        field.name: data[field.name] for field in dataclasses.fields(cls)
    })


def _fit(means: np.ndarray, squares: np.ndarray,
         cross: np.ndarray) -> AuxPrior:
  """Fits from E[z_t], E[z_t^2] (runs, n, d) and E[z_{t-1} z_t] (runs, n-1, d)."""
  if means.ndim != 3:
    raise ConfigurationError(
        f"Expected (runs, n, d) posterior samples, got shape {means.shape}")
  if means.shape[1] < 2:
    raise DomainError(
        f"Fitting an aux prior needs >= 2 timesteps, got {means.shape[1]}")
  init_mean = means[:, 0].mean(axis=0)
  init_var = squares[:, 0].mean(axis=0) - init_mean**2
  prev_mean = means[:, :-1].mean(axis=(0, 1))
  next_mean = means[:, 1:].mean(axis=(0, 1))
  prev_var = squares[:, :-1].mean(axis=(0, 1)) - prev_mean**2
  next_var = squares[:, 1:].mean(axis=(0, 1)) - next_mean**2
  covariance = cross.mean(axis=(0, 1)) - prev_mean * next_mean

  flat = prev_var <= _VARIANCE_EPS
  slopes = np.where(flat, 0.0, covariance / np.where(flat, 1.0, prev_var))
  slopes = np.clip(slopes, -ALPHA_MAX, ALPHA_MAX)
  offsets = next_mean - slopes * prev_mean
  residual_var = (next_var - 2.0 * slopes * covariance +
                  slopes * slopes * prev_var)
  noise_stds = np.sqrt(np.maximum(residual_var, 0.0))
  init_stds = np.sqrt(np.maximum(init_var, 0.0))
  degenerate = (flat | (noise_stds < SIGMA_FLOOR) | (init_stds < SIGMA_FLOOR))
  if np.any(degenerate):
    logging.warning("Aux prior: degenerate dimensions %s, stds floored at %s",
                    np.flatnonzero(degenerate).tolist(), SIGMA_FLOOR)
  return AuxPrior(slopes, offsets, np.maximum(noise_stds, SIGMA_FLOOR),
                  init_mean, np.maximum(init_stds, SIGMA_FLOOR), degenerate)


def fit_aux_prior(samples: np.ndarray) -> AuxPrior:
  """Least-squares fit to posterior samples of shape (runs, n, d)."""
  samples = np.asarray(samples, dtype=np.float64)
  if samples.ndim != 3:
    raise ConfigurationError(
        f"Expected (runs, n, d) posterior samples, got shape {samples.shape}")
  return _fit(samples, samples * samples, samples[:, :-1] * samples[:, 1:])


def fit_aux_prior_moments(means: np.ndarray, stds: np.ndarray) -> AuxPrior:
  """Fit to the exact moments of mean-field posteriors (runs, n, d).

  This minimizes the average analytic KL from the posteriors to the family.
  """
  means = np.asarray(means, dtype=np.float64)
  stds = np.asarray(stds, dtype=np.float64)
  if means.shape != stds.shape or means.ndim != 3:
    raise ConfigurationError(
        f"Expected equal (runs, n, d) shapes, got {means.shape}, {stds.shape}")
  return _fit(means, means * means + stds * stds, means[:, :-1] * means[:, 1:])


def aux_log_prob(p: AuxPrior, z: np.ndarray) -> Any:
  return linear_gaussian_log_prob(p, z)
