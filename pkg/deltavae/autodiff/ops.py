# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Forward operations of the autodiff graph.

Every op computes its value eagerly with numpy and registers a backward
rule. Binary ops follow numpy broadcasting; the backward rule sums the
gradient back to each operand's shape. The time axis of sequence tensors
is the second to last one: (n, d) or (batch, n, d).
"""

from __future__ import annotations

import math
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from deltavae.autodiff.node import Node, NodeLike, as_node
from deltavae.exception import ConfigurationError

TIME_AXIS: int = -2
_HALF_LOG_2PI: float = 0.5 * math.log(2.0 * math.pi)

Axis = Optional[Union[int, Tuple[int, ...]]]


def _make(value: np.ndarray, parents: Tuple[Node, ...], backward_fn,
          op: str) -> Node:
  requires_grad = any(parent.requires_grad for parent in parents)
  if not requires_grad:
    return Node(value, op=op)
  return Node(value, parents, backward_fn, op=op, requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
  while grad.ndim > len(shape):
    grad = grad.sum(axis=0)
  for axis, size in enumerate(shape):
    if size == 1 and grad.shape[axis] != 1:
      grad = grad.sum(axis=axis, keepdims=True)
  return grad


def _check_broadcast(op: str, a: Node, b: Node) -> None:
  try:
    np.broadcast_shapes(a.shape, b.shape)
  except ValueError as e:
    raise ConfigurationError(
        f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


def add(a: NodeLike, b: NodeLike) -> Node:
  a, b = as_node(a), as_node(b)
  _check_broadcast("add", a, b)

  def backward_fn(g):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

  return _make(a.value + b.value, (a, b), backward_fn, "add")


def sub(a: NodeLike, b: NodeLike) -> Node:
  a, b = as_node(a), as_node(b)
  _check_broadcast("sub", a, b)

  def backward_fn(g):
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

  return _make(a.value - b.value, (a, b), backward_fn, "sub")


def mul(a: NodeLike, b: NodeLike) -> Node:
  a, b = as_node(a), as_node(b)
  _check_broadcast("mul", a, b)

  def backward_fn(g):
    return (_unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape))

  return _make(a.value * b.value, (a, b), backward_fn, "mul")


def div(a: NodeLike, b: NodeLike) -> Node:
  a, b = as_node(a), as_node(b)
  _check_broadcast("div", a, b)
  value = a.value / b.value

  def backward_fn(g):
    return (_unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * value / b.value, b.shape))

  return _make(value, (a, b), backward_fn, "div")


def neg(a: NodeLike) -> Node:
  a = as_node(a)
  return _make(-a.value, (a,), lambda g: (-g,), "neg")


def matmul(a: NodeLike, b: NodeLike) -> Node:
  """(..., k) @ (k, m) -> (..., m). The right operand must be 2d."""
  a, b = as_node(a), as_node(b)
  if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
    raise ConfigurationError(
        f"matmul: incompatible shapes {a.shape} and {b.shape}")
  k, m = b.shape

  def backward_fn(g):
    grad_a = g @ b.value.T
    if a.ndim == 1:
      grad_b = np.outer(a.value, g)
    else:
      grad_b = a.value.reshape(-1, k).T @ g.reshape(-1, m)
    return grad_a, grad_b

  return _make(a.value @ b.value, (a, b), backward_fn, "matmul")


def tanh(a: NodeLike) -> Node:
  a = as_node(a)
  value = np.tanh(a.value)
  return _make(value, (a,), lambda g: (g * (1.0 - value * value),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
  e = np.exp(-np.abs(x))
  return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: NodeLike) -> Node:
  a = as_node(a)
  value = _sigmoid(a.value)
  return _make(value, (a,), lambda g: (g * value * (1.0 - value),), "sigmoid")


def softplus(a: NodeLike) -> Node:
  a = as_node(a)
  slope = _sigmoid(a.value)
  return _make(
      np.logaddexp(0.0, a.value), (a,), lambda g: (g * slope,), "softplus")


def exp(a: NodeLike) -> Node:
  a = as_node(a)
  value = np.exp(a.value)
  return _make(value, (a,), lambda g: (g * value,), "exp")


def log(a: NodeLike) -> Node:
  a = as_node(a)
  return _make(np.log(a.value), (a,), lambda g: (g / a.value,), "log")


def square(a: NodeLike) -> Node:
  a = as_node(a)
  return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,),
               "square")


def sqrt(a: NodeLike) -> Node:
  """Square root with a zero gradient at 0 instead of +inf."""
  a = as_node(a)
  value = np.sqrt(a.value)

  def backward_fn(g):
    safe = np.where(value > 0, value, 1.0)
    return (np.where(value > 0, 0.5 * g / safe, 0.0),)

  return _make(value, (a,), backward_fn, "sqrt")


def relu(a: NodeLike) -> Node:
  a = as_node(a)
  mask = a.value > 0
  return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,),
               "relu")


def maximum(a: NodeLike, threshold: float) -> Node:
  """Hard max against a constant; the gradient flows where a > threshold."""
  a = as_node(a)
  mask = a.value > threshold
  return _make(
      np.where(mask, a.value, threshold), (a,), lambda g: (g * mask,),
      "maximum")


def sum(a: NodeLike, axis: Axis = None, keepdims: bool = False) -> Node:  # pylint: disable=redefined-builtin
  a = as_node(a)
  value = a.value.sum(axis=axis, keepdims=keepdims)

  def backward_fn(g):
    if axis is not None and not keepdims:
      g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)

  return _make(value, (a,), backward_fn, "sum")


def mean(a: NodeLike, axis: Axis = None, keepdims: bool = False) -> Node:
  a = as_node(a)
  if axis is None:
    count = a.value.size
  else:
    axes = (axis,) if isinstance(axis, int) else axis
    count = int(np.prod([a.shape[ax] for ax in axes]))
  return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: NodeLike, shape: Tuple[int, ...]) -> Node:
  a = as_node(a)
  try:
    value = a.value.reshape(shape)
  except ValueError as e:
    raise ConfigurationError(f"reshape: {a.shape} to {shape}: {e}") from e
  return _make(value, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast(a: NodeLike, shape: Tuple[int, ...]) -> Node:
  a = as_node(a)
  try:
    value = np.broadcast_to(a.value, shape)
  except ValueError as e:
    raise ConfigurationError(f"broadcast: {a.shape} to {shape}: {e}") from e
  return _make(value, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast")


def _is_basic_index(index: Any) -> bool:
  items = index if isinstance(index, tuple) else (index,)
  return all(
      item is Ellipsis or isinstance(item, (int, slice)) for item in items)


def getitem(a: NodeLike, index: Any) -> Node:
  a = as_node(a)
  value = a.value[index]
  # Basic indices select each element at most once.
  basic = _is_basic_index(index)

  def backward_fn(g):
    grad = np.zeros_like(a.value)
    if basic:
      grad[index] = g
    else:
      np.add.at(grad, index, g)
    return (grad,)

  return _make(value, (a,), backward_fn, "getitem")


def _time_index(a: Node, axis: int, key: Any) -> Tuple[Any, ...]:
  index = [slice(None)] * a.ndim
  index[axis] = key
  return tuple(index)


def slice_time(a: NodeLike, start: int, stop: int,
               axis: int = TIME_AXIS) -> Node:
  a = as_node(a)
  return getitem(a, _time_index(a, axis, slice(start, stop)))


def index_time(a: NodeLike, t: int, axis: int = TIME_AXIS) -> Node:
  """Selects one timestep and drops the time axis."""
  a = as_node(a)
  return getitem(a, _time_index(a, axis, t))


def concat(parts: Sequence[NodeLike], axis: int = -1) -> Node:
  nodes = [as_node(part) for part in parts]
  if not nodes:
    raise ConfigurationError("concat: no inputs")
  try:
    value = np.concatenate([node.value for node in nodes], axis=axis)
  except ValueError as e:
    raise ConfigurationError(f"concat: {e}") from e
  boundaries = np.cumsum([node.shape[axis] for node in nodes])[:-1]

  def backward_fn(g):
    return tuple(np.split(g, boundaries, axis=axis))

  return _make(value, tuple(nodes), backward_fn, "concat")


def concat_time(parts: Sequence[NodeLike], axis: int = TIME_AXIS) -> Node:
  return concat(parts, axis=axis)


def stack_time(parts: Sequence[NodeLike], axis: int = TIME_AXIS) -> Node:
  """Stacks per-timestep (..., d) tensors into (..., n, d)."""
  nodes = [as_node(part) for part in parts]
  if not nodes:
    raise ConfigurationError("stack_time: no inputs")
  try:
    value = np.stack([node.value for node in nodes], axis=axis)
  except ValueError as e:
    raise ConfigurationError(f"stack_time: {e}") from e

  def backward_fn(g):
    return tuple(np.take(g, t, axis=axis) for t in range(len(nodes)))

  return _make(value, tuple(nodes), backward_fn, "stack_time")


def reverse_time(a: NodeLike, axis: int = TIME_AXIS) -> Node:
  a = as_node(a)
  return _make(
      np.flip(a.value, axis=axis), (a,), lambda g:
      (np.flip(g, axis=axis).copy(),), "reverse_time")


def shift_time(a: NodeLike, axis: int = TIME_AXIS) -> Node:
  """Shifts right by one timestep, filling the first step with zeros."""
  a = as_node(a)
  n = a.shape[axis]
  value = np.zeros_like(a.value)
  value[_time_index(a, axis, slice(1, None))] = a.value[_time_index(
      a, axis, slice(0, n - 1))]

  def backward_fn(g):
    grad = np.zeros_like(g)
    grad[_time_index(a, axis, slice(0, n - 1))] = g[_time_index(
        a, axis, slice(1, None))]
    return (grad,)

  return _make(value, (a,), backward_fn, "shift_time")


def logsumexp(a: NodeLike, axis: int = -1) -> Node:
  a = as_node(a)
  peak = np.max(a.value, axis=axis, keepdims=True)
  shifted = np.exp(a.value - peak)
  total = shifted.sum(axis=axis, keepdims=True)
  value = np.squeeze(np.log(total) + peak, axis=axis)
  weights = shifted / total

  def backward_fn(g):
    return (np.expand_dims(g, axis) * weights,)

  return _make(value, (a,), backward_fn, "logsumexp")


def log_softmax(a: NodeLike, axis: int = -1) -> Node:
  a = as_node(a)
  return a - reshape(logsumexp(a, axis), _keepdims_shape(a.shape, axis))


def _keepdims_shape(shape: Tuple[int, ...], axis: int) -> Tuple[int, ...]:
  result = list(shape)
  result[axis] = 1
  return tuple(result)


def gaussian_log_prob(x: NodeLike, mean: NodeLike, std: NodeLike) -> Node:
  """Elementwise log N(x; mean, std^2) in nats."""
  z = (as_node(x) - mean) / std
  return -0.5 * square(z) - log(std) - _HALF_LOG_2PI


def standard_normal_log_prob(x: NodeLike) -> Node:
  return -0.5 * square(x) - _HALF_LOG_2PI
