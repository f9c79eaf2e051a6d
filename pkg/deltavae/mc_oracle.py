# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Reference oracles for the closed-form KL and the committed-rate bound.

Nothing here uses the committed-rate formula: the Monte-Carlo estimator only
evaluates log densities and the minimizer only descends the closed-form KL.

Monte-Carlo sampling is split into chunks of CHUNK_SIZE samples. Chunk c
draws from numpy's default_rng([seed, c]), so the estimate depends only on
(seed, n_samples) whichever way chunks are scheduled; chunk statistics are
merged in chunk order.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import List, Tuple

import numpy as np

from deltavae.ar1_prior import linear_gaussian_log_prob
from deltavae.autodiff import Node, backward, ops
from deltavae.exception import ConvergenceError, DomainError
from deltavae.gauss_kl import (GaussianSeqPosterior, LinearGaussianPrior,
                               kl_cells_array, kl_seq_cells_graph)

CHUNK_SIZE: int = 4096
MIN_SAMPLES: int = 1000
_HALF_LOG_2PI: float = 0.5 * math.log(2.0 * math.pi)


@dataclasses.dataclass
class _RunningStats:
  count: int = 0
  mean: float = 0.0
  m2: float = 0.0

  def merge(self, values: np.ndarray) -> None:
    count = values.size
    if not count:
      return
    chunk_mean = float(values.mean())
    chunk_m2 = float(((values - chunk_mean)**2).sum())
    total = self.count + count
    delta = chunk_mean - self.mean
    self.mean += delta * count / total
    self.m2 += chunk_m2 + delta * delta * self.count * count / total
    self.count = total

  @property
  def stderr(self) -> float:
    if self.count < 2:
      return math.inf
    return math.sqrt(self.m2 / (self.count - 1) / self.count)


def _log_ratio(q: GaussianSeqPosterior, p: LinearGaussianPrior,
               z: np.ndarray) -> np.ndarray:
  scaled = (z - q.means) / q.stds
  log_q = (-0.5 * scaled * scaled - np.log(q.stds) - _HALF_LOG_2PI).sum(
      axis=(-2, -1))
  return log_q - linear_gaussian_log_prob(p, z)


def mc_kl_estimate(q: GaussianSeqPosterior,
                   p: LinearGaussianPrior,
                   n_samples: int,
                   seed: int,
                   antithetic: bool = True) -> Tuple[float, float]:
  """Monte-Carlo estimate of E_q[log q(z) - log p(z)] and its standard error.

  With antithetic sampling each unit is the average over the pair
  (mu + sigma eps, mu - sigma eps); ceil(n_samples / 2) pairs are drawn, so
  an odd n_samples evaluates one extra draw.
  """
  if n_samples < MIN_SAMPLES:
    raise DomainError(f"Need at least {MIN_SAMPLES} samples, got {n_samples}")
  stats = _RunningStats()
  if antithetic:
    units, chunk_units = -(-n_samples // 2), CHUNK_SIZE // 2
  else:
    units, chunk_units = n_samples, CHUNK_SIZE
  chunk = 0
  while units > 0:
    size = min(chunk_units, units)
    units -= size
    rng = np.random.default_rng([seed, chunk])
    chunk += 1
    eps = rng.standard_normal((size, q.n, q.d))
    values = _log_ratio(q, p, q.means + q.stds * eps)
    if antithetic:
      values = 0.5 * (values + _log_ratio(q, p, q.means - q.stds * eps))
    stats.merge(values)
  return stats.mean, stats.stderr


def _kl_value(theta: np.ndarray, p: LinearGaussianPrior, n: int) -> float:
  means, log_stds = np.split(theta.reshape(2 * n, p.dim), 2)
  return float(np.sum(kl_cells_array(means, np.exp(log_stds), p)))


def _kl_value_and_grad(theta: np.ndarray, p: LinearGaussianPrior,
                       n: int) -> Tuple[float, np.ndarray]:
  means_value, log_stds_value = np.split(theta.reshape(2 * n, p.dim), 2)
  means = Node.leaf(means_value, "means")
  log_stds = Node.leaf(log_stds_value, "log_stds")
  total = ops.sum(kl_seq_cells_graph(means, ops.exp(log_stds), p))
  grads = backward(total)
  grad = np.concatenate([grads[means], grads[log_stds]]).reshape(-1)
  return total.item(), grad


@dataclasses.dataclass(frozen=True)
class Descent:
  value: float
  theta: np.ndarray
  grad_norm: float
  iterations: int
  converged: bool


def _accelerated_descent(theta: np.ndarray, p: LinearGaussianPrior, n: int,
                         grad_tol: float, max_iterations: int) -> Descent:
  """Nesterov descent with backtracking and function-value restarts."""
  lipschitz = 1.0
  x = theta
  f_x = _kl_value(x, p, n)
  y = x
  momentum = 1.0
  grad_norm = math.inf
  f_y = f_x
  for iteration in range(max_iterations):
    f_y, grad = _kl_value_and_grad(y, p, n)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm <= grad_tol:
      return Descent(f_y, y, grad_norm, iteration, True)
    slack = 8.0 * np.finfo(np.float64).eps * max(1.0, abs(f_y))
    while True:
      x_next = y - grad / lipschitz
      f_next = _kl_value(x_next, p, n)
      if math.isfinite(f_next) and (
          f_next <= f_y - 0.5 * grad_norm * grad_norm / lipschitz + slack):
        break
      lipschitz *= 2.0
    momentum_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
    if f_next > f_x:
      momentum_next = 1.0
      y = x_next
    else:
      y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x)
    x, f_x, momentum = x_next, f_next, momentum_next
    lipschitz *= 0.9
  return Descent(f_y, y, grad_norm, max_iterations, False)


def restart_minima(p: LinearGaussianPrior,
                   n: int,
                   restarts: int = 5,
                   seed: int = 0,
                   grad_tol: float = 1e-10,
                   max_iterations: int = 100_000) -> List[Descent]:
  if n < 2:
    raise DomainError(f"numeric_min_kl needs n >= 2, got {n}")
  rng = np.random.default_rng(seed)
  results = []
  for restart in range(restarts):
    means = rng.standard_normal((n, p.dim))
    log_stds = rng.uniform(-1.0, 1.0, (n, p.dim))
    theta = np.concatenate([means, log_stds]).reshape(-1)
    result = _accelerated_descent(theta, p, n, grad_tol, max_iterations)
    logging.debug("restart %d: kl=%.12g |grad|=%.3g iterations=%d", restart,
                  result.value, result.grad_norm, result.iterations)
    results.append(result)
  return results


def numeric_min_kl(p: LinearGaussianPrior,
                   n: int,
                   restarts: int = 5,
                   seed: int = 0,
                   grad_tol: float = 1e-10,
                   max_iterations: int = 100_000
                  ) -> Tuple[float, GaussianSeqPosterior]:
  """Minimizes the closed-form KL over (mu, log sigma) from random starts."""
  results = restart_minima(p, n, restarts, seed, grad_tol, max_iterations)
  converged = [result for result in results if result.converged]
  best = min(results, key=lambda result: result.value)
  if not converged:
    raise ConvergenceError(
        f"No restart reached |grad| <= {grad_tol} within {max_iterations} "
        "iterations", best.value)
  best = min(converged, key=lambda result: result.value)
  spread = max(result.value for result in converged) - best.value
  if spread > 1e-8:
    logging.warning("numeric_min_kl: restarts disagree by %.3g nats", spread)
  means, log_stds = np.split(best.theta.reshape(2 * n, p.dim), 2)
  return best.value, GaussianSeqPosterior(means, np.exp(log_stds))
