# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Any, Optional, Sequence, Union

import numpy as np

from deltavae import root_finding
from deltavae.exception import (ConfigurationError, DomainError,
                                InfeasibleRateError)
from deltavae.gauss_kl import LinearGaussianPrior

ALPHA_MAX: float = 1.0 - 1e-6
_HALF_LOG_2PI: float = 0.5 * math.log(2.0 * math.pi)


def _readonly(value: Any) -> np.ndarray:
  array = np.array(value, dtype=np.float64)
  array.flags.writeable = False
  return array


@dataclasses.dataclass(frozen=True, eq=False)
class Ar1Prior:
  """Stationary AR(1) latent prior with unit marginal variance:
  z_1 ~ N(0, 1), z_t = alpha z_{t-1} + sqrt(1 - alpha^2) eps_t."""
  alphas: np.ndarray
  noise_stds: np.ndarray

  def __post_init__(self) -> None:
    alphas = _readonly(self.alphas)
    noise_stds = _readonly(self.noise_stds)
    if alphas.ndim != 1 or alphas.size < 1:
      raise ConfigurationError(f"Expected a 1d alpha array, got {alphas.shape}")
    if np.any(alphas < 0) or np.any(alphas > ALPHA_MAX):
      raise DomainError(f"alphas must lie in [0, {ALPHA_MAX}], got {alphas}")
    if not np.array_equal(noise_stds, np.sqrt(1.0 - alphas * alphas)):
      raise ConfigurationError("noise_stds must equal sqrt(1 - alpha^2)")
    object.__setattr__(self, "alphas", alphas)
    object.__setattr__(self, "noise_stds", noise_stds)

  @property
  def dim(self) -> int:
    return self.alphas.size

  @property
  def slopes(self) -> np.ndarray:
    return self.alphas

  @property
  def offsets(self) -> np.ndarray:
    return np.zeros(self.dim)

  @property
  def init_means(self) -> np.ndarray:
    return np.zeros(self.dim)

  @property
  def init_stds(self) -> np.ndarray:
    return np.ones(self.dim)

  def to_json(self) -> dict:
    return {"alphas": self.alphas.tolist()}


def make_prior(alphas: Union[Sequence[float], np.ndarray],
               clamp: bool = False) -> Ar1Prior:
  values = np.array(alphas, dtype=np.float64).reshape(-1)
  if not np.all(np.isfinite(values)):
    raise DomainError(f"alphas must be finite, got {values}")
  if np.any(values < 0):
    raise DomainError(f"alphas must be >= 0, got {values}")
  if np.any(values > ALPHA_MAX):
    if not clamp:
      raise DomainError(
          f"alphas must be <= {ALPHA_MAX}, got {values} (use clamp=True)")
    logging.debug("Clamping alphas %s to %s", values, ALPHA_MAX)
    values = np.minimum(values, ALPHA_MAX)
  return Ar1Prior(values, np.sqrt(1.0 - values * values))


def linspace_alphas(a_min: float, a_max: float, d: int) -> np.ndarray:
  if d < 1:
    raise DomainError(f"Need d >= 1, got {d}")
  if not 0.0 <= a_min <= a_max < 1.0:
    raise DomainError(
        f"Expected 0 <= a_min <= a_max < 1, got [{a_min}, {a_max}]")
  if d == 1:
    return np.array([float(a_min)])
  return np.linspace(a_min, a_max, d)


def sample_prior(p: LinearGaussianPrior,
                 n: int,
                 seed: int,
                 batch: Optional[int] = None) -> np.ndarray:
  """Draws (n, d), or (batch, n, d), sequences from the prior."""
  if n < 1:
    raise DomainError(f"Need n >= 1, got {n}")
  rng = np.random.default_rng(seed)
  shape = (n, p.dim) if batch is None else (batch, n, p.dim)
  eps = rng.standard_normal(shape)
  z = np.empty(shape)
  z[..., 0, :] = p.init_means + p.init_stds * eps[..., 0, :]
  for t in range(1, n):
    z[..., t, :] = (p.slopes * z[..., t - 1, :] + p.offsets +
                    p.noise_stds * eps[..., t, :])
  return z


def _normal_log_pdf(x: np.ndarray, mean: np.ndarray,
                    std: np.ndarray) -> np.ndarray:
  scaled = (x - mean) / std
  return -0.5 * scaled * scaled - np.log(std) - _HALF_LOG_2PI


def linear_gaussian_log_prob(p: LinearGaussianPrior, z: np.ndarray) -> Any:
  """Joint log density of (..., n, d) sequences, one value per sequence."""
  z = np.asarray(z, dtype=np.float64)
  if z.ndim < 2 or z.shape[-1] != p.dim:
    raise ConfigurationError(
        f"Expected (…, n, {p.dim}) latents, got shape {z.shape}")
  first = _normal_log_pdf(z[..., 0, :], p.init_means, p.init_stds)
  rest = _normal_log_pdf(z[..., 1:, :], p.slopes * z[..., :-1, :] + p.offsets,
                         p.noise_stds)
  value = first.sum(axis=-1) + rest.sum(axis=(-2, -1))
  if np.ndim(value) == 0:
    return float(value)
  return value


def log_prob(p: Ar1Prior, z: np.ndarray) -> Any:
  return linear_gaussian_log_prob(p, z)


def _bound_per_dim(alpha: Union[float, np.ndarray], n: int) -> Any:
  a2 = alpha * alpha
  return 0.5 * ((n - 2) * np.log1p(a2) - np.log1p(-a2))


def committed_rate(p: Ar1Prior, n: int) -> float:
  """Minimum KL between any mean-field Gaussian posterior and the prior:
  1/2 sum_k [(n - 2) ln(1 + alpha_k^2) - ln(1 - alpha_k^2)]."""
  if n < 2:
    raise DomainError(
        f"committed_rate needs n >= 2, got n={n}: a single timestep can "
        "match N(0, 1) exactly")
  return float(np.sum(_bound_per_dim(p.alphas, n)))


def solve_alpha_for_rate(delta: float, n: int, d: int) -> np.ndarray:
  """d equal alphas whose committed rate over n steps is delta nats."""
  if not math.isfinite(delta) or delta < 0:
    raise DomainError(f"delta must be finite and >= 0, got {delta}")
  if n < 3:
    raise DomainError(f"solve_alpha_for_rate needs n >= 3, got n={n}")
  if d < 1:
    raise DomainError(f"Need d >= 1, got {d}")
  target = delta / d
  if target == 0:
    return np.zeros(d)
  max_rate = float(_bound_per_dim(ALPHA_MAX, n))
  if target > max_rate:
    raise InfeasibleRateError(
        f"delta={delta} nats exceeds the largest committed rate "
        f"{max_rate * d:.6g} nats reachable with alpha <= {ALPHA_MAX} "
        f"(n={n}, d={d})")
  alpha = root_finding.bisect_increasing(
      lambda a: float(_bound_per_dim(a, n)) - target, 0.0, ALPHA_MAX)
  return np.full(d, alpha)


def alphas_for_config(d: int,
                      n: int,
                      alpha_range: Optional[Sequence[float]] = None,
                      target_rate: Optional[float] = None) -> np.ndarray:
  if alpha_range is not None and target_rate is not None:
    raise ConfigurationError("Use either alpha_range or target_rate, not both")
  if target_rate is not None:
    return solve_alpha_for_rate(target_rate, n, d)
  if alpha_range is not None:
    if len(alpha_range) != 2:
      raise ConfigurationError(
          f"alpha_range needs [min, max], got {alpha_range}")
    return linspace_alphas(alpha_range[0], alpha_range[1], d)
  return np.zeros(d)
