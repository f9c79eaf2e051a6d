# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

from typing import (Any, Callable, Dict, List, Optional, Sequence, Tuple,
                    Union)

import numpy as np

from deltavae.exception import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
NodeLike = Union["Node", np.ndarray, float, int]


def _frozen(value: Any) -> np.ndarray:
  array = np.array(value, dtype=np.float64)
  array.flags.writeable = False
  return array


class Node:
  """A value in the differentiation graph.

  Values are float64 and read-only. `parents` and `backward_fn` record the
  operation that produced the node: backward_fn maps the gradient of this
  node to one gradient per parent (None for parents that need none).
  """
  __slots__ = ("value", "grad", "parents", "backward_fn", "op", "name",
               "requires_grad")
  # Makes `ndarray <op> Node` dispatch to the Node reflected operators.
  __array_ufunc__ = None

  def __init__(self,
               value: Any,
               parents: Tuple[Node, ...] = (),
               backward_fn: Optional[BackwardFn] = None,
               op: str = "",
               name: str = "",
               requires_grad: bool = False) -> None:
    self.value: np.ndarray = _frozen(value)
    self.grad: Optional[np.ndarray] = None
    self.parents = parents
    self.backward_fn = backward_fn
    self.op = op
    self.name = name
    self.requires_grad = requires_grad

  @classmethod
  def leaf(cls, value: Any, name: str = "") -> Node:
    return cls(value, name=name, op="leaf", requires_grad=True)

  @classmethod
  def constant(cls, value: Any) -> Node:
    return cls(value, op="const")

  @property
  def is_leaf(self) -> bool:
    return not self.parents

  @property
  def shape(self) -> Tuple[int, ...]:
    return self.value.shape

  @property
  def ndim(self) -> int:
    return self.value.ndim

  def item(self) -> float:
    return float(self.value.reshape(()))

  def __repr__(self) -> str:
    label = self.name or self.op
    return f"Node({label}, shape={self.shape})"

  def __add__(self, other: NodeLike) -> Node:
    return ops.add(self, other)

  def __radd__(self, other: NodeLike) -> Node:
    return ops.add(other, self)

  def __sub__(self, other: NodeLike) -> Node:
    return ops.sub(self, other)

  def __rsub__(self, other: NodeLike) -> Node:
    return ops.sub(other, self)

  def __mul__(self, other: NodeLike) -> Node:
    return ops.mul(self, other)

  def __rmul__(self, other: NodeLike) -> Node:
    return ops.mul(other, self)

  def __truediv__(self, other: NodeLike) -> Node:
    return ops.div(self, other)

  def __rtruediv__(self, other: NodeLike) -> Node:
    return ops.div(other, self)

  def __neg__(self) -> Node:
    return ops.neg(self)

  def __matmul__(self, other: NodeLike) -> Node:
    return ops.matmul(self, other)

  def __rmatmul__(self, other: NodeLike) -> Node:
    return ops.matmul(other, self)

  def __getitem__(self, index: Any) -> Node:
    return ops.getitem(self, index)


def as_node(value: NodeLike) -> Node:
  if isinstance(value, Node):
    return value
  return Node.constant(value)


def topological_order(root: Node) -> List[Node]:
  """Nodes reachable from root that require a gradient, parents first.

  Iterative so deep recurrent graphs do not hit the recursion limit.
  """
  order: List[Node] = []
  visited = set()
  stack: List[Tuple[Node, bool]] = [(root, False)]
  while stack:
    node, expanded = stack.pop()
    if expanded:
      order.append(node)
      continue
    if id(node) in visited:
      continue
    visited.add(id(node))
    stack.append((node, True))
    for parent in reversed(node.parents):
      if parent.requires_grad and id(parent) not in visited:
        stack.append((parent, False))
  return order


def backward(root: Node) -> Dict[Node, np.ndarray]:
  """Reverse-mode pass from a scalar root.

  Sets `grad` on every reachable node and returns the gradients of the
  reachable leaves.
  """
  if root.value.size != 1:
    raise ContractError(
        f"backward() needs a scalar root, got shape {root.shape}")
  if not root.requires_grad:
    return {}
  order = topological_order(root)
  pending: Dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
  leaf_grads: Dict[Node, np.ndarray] = {}
  for node in reversed(order):
    grad = pending.pop(id(node), None)
    if grad is None:
      grad = np.zeros_like(node.value)
    node.grad = grad
    if node.is_leaf:
      leaf_grads[node] = grad
      continue
    assert node.backward_fn is not None, f"No backward rule for {node}"
    parent_grads = node.backward_fn(grad)
    for parent, parent_grad in zip(node.parents, parent_grads):
      if parent_grad is None or not parent.requires_grad:
        continue
      assert parent_grad.shape == parent.shape, (
          f"{node.op}: gradient shape {parent_grad.shape} "
          f"does not match {parent.shape}")
      previous = pending.get(id(parent))
      pending[id(parent)] = (
          parent_grad if previous is None else previous + parent_grad)
  return leaf_grads


from deltavae.autodiff import ops  # pylint: disable=wrong-import-position
