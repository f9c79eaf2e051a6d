# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Gated recurrent and affine layers on autodiff nodes.

Parameters live in flat dicts keyed "<prefix>.<name>". A GRU layer holds
  w: (in, 3h)  input projections for the reset, update and candidate gates
  u: (h, 3h)   recurrent projections
  b: (3h,)
Sequences are (batch, n, features) and run strictly causally in time.
"""

from __future__ import annotations

import math
from typing import Dict, Tuple

import numpy as np

from deltavae.autodiff import Node, ops

Params = Dict[str, np.ndarray]
NodeParams = Dict[str, Node]


def _uniform(rng: np.random.Generator, bound: float,
             shape: Tuple[int, ...]) -> np.ndarray:
  return rng.uniform(-bound, bound, shape)


def init_linear(rng: np.random.Generator, prefix: str, in_dim: int,
                out_dim: int) -> Params:
  bound = 1.0 / math.sqrt(in_dim)
  return {
      f"{prefix}.w": _uniform(rng, bound, (in_dim, out_dim)),
      f"{prefix}.b": _uniform(rng, bound, (out_dim,)),
  }


def init_gru(rng: np.random.Generator, prefix: str, in_dim: int,
             hidden: int) -> Params:
  bound = 1.0 / math.sqrt(hidden)
  return {
      f"{prefix}.w": _uniform(rng, bound, (in_dim, 3 * hidden)),
      f"{prefix}.u": _uniform(rng, bound, (hidden, 3 * hidden)),
      f"{prefix}.b": _uniform(rng, bound, (3 * hidden,)),
  }


def linear(params: NodeParams, prefix: str, x: Node) -> Node:
  return x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]


def _gates(projection: Node, hidden: int) -> Tuple[Node, Node, Node]:
  return (projection[..., :hidden], projection[..., hidden:2 * hidden],
          projection[..., 2 * hidden:])


def gru_step(params: NodeParams, prefix: str, x_projection: Node, h: Node,
             hidden: int) -> Node:
  """One GRU update from a precomputed input projection (batch, 3h)."""
  x_reset, x_update, x_candidate = _gates(x_projection, hidden)
  h_reset, h_update, h_candidate = _gates(h @ params[f"{prefix}.u"], hidden)
  reset = ops.sigmoid(x_reset + h_reset)
  update = ops.sigmoid(x_update + h_update)
  candidate = ops.tanh(x_candidate + reset * h_candidate)
  return candidate + update * (h - candidate)


def initial_state(batch: int, hidden: int) -> Node:
  return Node.constant(np.zeros((batch, hidden)))


def gru_sequence(params: NodeParams, prefix: str, x: Node) -> Node:
  """Hidden states (batch, n, h); state t only sees inputs 0..t."""
  hidden = params[f"{prefix}.u"].shape[0]
  projection = linear(params, prefix, x)
  h = initial_state(x.shape[0], hidden)
  states = []
  for t in range(x.shape[-2]):
    h = gru_step(params, prefix, ops.index_time(projection, t), h, hidden)
    states.append(h)
  return ops.stack_time(states)


def gru_stack(params: NodeParams, prefix: str, x: Node, layers: int) -> Node:
  for layer in range(layers):
    x = gru_sequence(params, f"{prefix}{layer}", x)
  return x


def reversed_gru_stack(params: NodeParams, prefix: str, x: Node,
                       layers: int) -> Node:
  """Anti-causal stack: state t only sees inputs t..n-1."""
  return ops.reverse_time(gru_stack(params, prefix, ops.reverse_time(x),
                                    layers))


def count_parameters(params: Params) -> int:
  return sum(value.size for value in params.values())
