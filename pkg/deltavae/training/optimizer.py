# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import logging
import math
from typing import Dict, Optional

import numpy as np

from deltavae.exception import ConfigurationError


class Adam:
  """Adam with bias correction over a dict of named numpy parameters.

  step() stores the updated arrays into the `params` dict itself, so a model
  sharing that dict sees every update.
  """

  def __init__(self,
               params: Dict[str, np.ndarray],
               lr: float = 1e-3,
               beta1: float = 0.9,
               beta2: float = 0.999,
               eps: float = 1e-8,
               max_grad_norm: Optional[float] = None) -> None:
    if lr <= 0:
      raise ConfigurationError(f"Learning rate must be > 0, got {lr}")
    if max_grad_norm is not None and max_grad_norm <= 0:
      raise ConfigurationError(
          f"max_grad_norm must be > 0, got {max_grad_norm}")
    self.params = params
    self.lr = lr
    self.beta1 = beta1
    self.beta2 = beta2
    self.eps = eps
    self.max_grad_norm = max_grad_norm
    self.t = 0
    self._m = {name: np.zeros_like(value) for name, value in params.items()}
    self._v = {name: np.zeros_like(value) for name, value in params.items()}

  @staticmethod
  def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return math.sqrt(
        sum(float(np.sum(grad * grad)) for _, grad in sorted(grads.items())))

  def step(self, grads: Dict[str, np.ndarray]) -> float:
    """Applies one update and returns the gradient norm before clipping.

    Parameters without a gradient count as zero gradient.
    """
    self.t += 1
    norm = self.global_norm(grads)
    scale = 1.0
    if self.max_grad_norm is not None and norm > self.max_grad_norm:
      scale = self.max_grad_norm / norm
      logging.debug("Clipping gradient norm %.4g to %.4g", norm,
                    self.max_grad_norm)
    correction1 = 1.0 - self.beta1**self.t
    correction2 = 1.0 - self.beta2**self.t
    for name, value in self.params.items():
      grad = grads.get(name)
      grad = np.zeros_like(value) if grad is None else grad * scale
      self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * grad
      self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * (
          grad * grad)
      m_hat = self._m[name] / correction1
      v_hat = self._v[name] / correction2
      self.params[name] = value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
    return norm
