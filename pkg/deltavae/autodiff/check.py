# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import logging
from typing import Callable, Dict, Optional

import numpy as np

from deltavae.autodiff.node import Node, backward

GraphFn = Callable[[Dict[str, Node]], Node]


def grad_check(f: GraphFn,
               params: Dict[str, np.ndarray],
               h: float = 1e-5,
               abs_floor: float = 1e-12,
               max_entries: Optional[int] = None,
               seed: int = 0) -> float:
  """Max relative error between backward() and central differences.

  The error per entry is |analytic - cd| / (|analytic| + |cd| + abs_floor).
  With max_entries set, that many entries per parameter are drawn at random
  (deterministic given seed) instead of checking all of them.
  """
  leaves = {name: Node.leaf(value, name=name) for name, value in params.items()}
  root = f(leaves)
  grads = backward(root)
  rng = np.random.default_rng(seed)
  worst = 0.0
  for name, value in params.items():
    analytic = grads.get(leaves[name], np.zeros_like(value)).reshape(-1)
    flat = np.array(value, dtype=np.float64).reshape(-1)
    indices = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
      indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
    for index in indices:
      central = _central_difference(f, params, name, int(index), h)
      error = abs(analytic[index] - central) / (
          abs(analytic[index]) + abs(central) + abs_floor)
      if error > worst:
        worst = error
        logging.debug("grad_check %s[%d]: analytic=%r cd=%r error=%.3g", name,
                      index, analytic[index], central, error)
  return float(worst)


def _central_difference(f: GraphFn, params: Dict[str, np.ndarray], name: str,
                        index: int, h: float) -> float:
  values = []
  for step in (h, -h):
    shifted = np.array(params[name], dtype=np.float64)
    shifted.reshape(-1)[index] += step
    inputs = {key: Node.constant(value) for key, value in params.items()}
    inputs[name] = Node.constant(shifted)
    values.append(f(inputs).item())
  return (values[0] - values[1]) / (2.0 * h)
