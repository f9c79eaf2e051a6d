# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import math
import sys
import unittest

import numpy as np
import pytest

from deltavae.autodiff import Node, backward, grad_check, ops
from deltavae.exception import ConfigurationError, ContractError

RTOL = 1e-6


class NodeTestCase(unittest.TestCase):

  def test_readonly_value(self):
    node = Node.leaf(np.ones(3))
    with self.assertRaises(ValueError):
      node.value[0] = 2.0

  def test_constant_has_no_gradient(self):
    constant = Node.constant(np.ones(2))
    self.assertEqual(backward(ops.sum(constant * 2.0)), {})

  def test_non_scalar_root(self):
    with self.assertRaises(ContractError):
      backward(Node.leaf(np.ones(2)) * 2.0)

  def test_operators(self):
    a = Node.leaf(np.array([1.0, 2.0]))
    b = Node.leaf(np.array([3.0, 5.0]))
    total = ops.sum((a + b) * (a - b) / b + (-a) + 1.0 - 2.0 * a)
    grads = backward(total)
    # d/da: 2a/b - 3, d/db: -a^2/b^2 - 1
    np.testing.assert_allclose(grads[a], 2 * a.value / b.value - 3)
    np.testing.assert_allclose(grads[b], -(a.value / b.value)**2 - 1)

  def test_ndarray_on_the_left(self):
    a = Node.leaf(np.array([1.0, 2.0]))
    result = np.array([2.0, 3.0]) * a
    self.assertIsInstance(result, Node)
    np.testing.assert_allclose(backward(ops.sum(result))[a], [2.0, 3.0])

  def test_shared_subgraph_accumulates(self):
    a = Node.leaf(np.array(3.0))
    b = a * a
    grads = backward(b + b)
    self.assertAlmostEqual(float(grads[a]), 12.0)

  def test_broadcast_gradient(self):
    a = Node.leaf(np.ones((3, 2)))
    b = Node.leaf(np.array([1.0, 2.0]))
    grads = backward(ops.sum(a * b))
    np.testing.assert_allclose(grads[b], [3.0, 3.0])
    np.testing.assert_allclose(grads[a], np.tile([1.0, 2.0], (3, 1)))

  def test_incompatible_shapes(self):
    with self.assertRaises(ConfigurationError):
      ops.add(np.ones(3), np.ones(2))
    with self.assertRaises(ConfigurationError):
      ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with self.assertRaises(ConfigurationError):
      ops.reshape(np.ones(6), (4,))
    with self.assertRaises(ConfigurationError):
      ops.concat([])


class ElementwiseGradientTestCase(unittest.TestCase):

  def setUp(self):
    self.rng = np.random.default_rng(0)
    self.x = self.rng.normal(size=(3, 4))
    self.positive = self.rng.uniform(0.5, 2.0, size=(3, 4))

  def check(self, fn, value):
    error = grad_check(lambda p: ops.sum(fn(p["x"]) * self.positive),
                       {"x": value})
    self.assertLess(error, RTOL)

  def test_smooth_ops(self):
    for fn in (ops.tanh, ops.sigmoid, ops.softplus, ops.exp, ops.square):
      with self.subTest(op=fn.__name__):
        self.check(fn, self.x)

  def test_positive_domain_ops(self):
    for fn in (ops.log, ops.sqrt):
      with self.subTest(op=fn.__name__):
        self.check(fn, self.positive)

  def test_relu_and_maximum(self):
    x = np.array([-1.0, -0.3, 0.4, 2.0])
    leaf = Node.leaf(x)
    grads = backward(ops.sum(ops.relu(leaf)))
    np.testing.assert_array_equal(grads[leaf], [0, 0, 1, 1])
    leaf = Node.leaf(x)
    total = ops.sum(ops.maximum(leaf, 0.5))
    self.assertAlmostEqual(total.item(), 0.5 + 0.5 + 0.5 + 2.0)
    np.testing.assert_array_equal(backward(total)[leaf], [0, 0, 0, 1])

  def test_sqrt_at_zero(self):
    leaf = Node.leaf(np.array([0.0, 4.0]))
    grads = backward(ops.sum(ops.sqrt(leaf)))
    np.testing.assert_allclose(grads[leaf], [0.0, 0.25])

  def test_stable_extremes(self):
    values = np.array([-800.0, 0.0, 800.0])
    np.testing.assert_allclose(ops.sigmoid(values).value, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(ops.softplus(values).value, [0.0, math.log(2),
                                                             800.0])


class StructureGradientTestCase(unittest.TestCase):

  def setUp(self):
    rng = np.random.default_rng(1)
    self.x = rng.normal(size=(2, 5, 3))
    self.weights = rng.normal(size=(2, 5, 3))

  def check(self, fn, params):
    error = grad_check(fn, params)
    self.assertLess(error, RTOL)

  def test_matmul(self):
    rng = np.random.default_rng(2)
    w = rng.normal(size=(3, 4))
    self.check(lambda p: ops.sum(ops.tanh(p["x"] @ p["w"])), {
        "x": self.x,
        "w": w
    })
    self.check(lambda p: ops.sum(p["v"] @ p["w"]), {
        "v": self.x[0, 0],
        "w": w
    })

  def test_reductions(self):
    self.check(lambda p: ops.sum(ops.square(ops.sum(p["x"], axis=1))),
               {"x": self.x})
    self.check(
        lambda p: ops.sum(ops.square(ops.mean(p["x"], axis=(0, 2)))),
        {"x": self.x})
    self.check(lambda p: ops.sum(ops.logsumexp(p["x"]) * 2.0), {"x": self.x})
    self.check(lambda p: ops.sum(ops.log_softmax(p["x"]) * self.weights),
               {"x": self.x})

  def test_time_ops(self):
    weighted = lambda node: ops.sum(node * self.weights)
    self.check(lambda p: weighted(ops.shift_time(p["x"])), {"x": self.x})
    self.check(lambda p: weighted(ops.reverse_time(p["x"])), {"x": self.x})
    self.check(
        lambda p: weighted(
            ops.stack_time(
                [ops.index_time(p["x"], t) for t in range(self.x.shape[1])])),
        {"x": self.x})
    self.check(
        lambda p: weighted(
            ops.concat_time([
                ops.slice_time(p["x"], 0, 2),
                ops.slice_time(p["x"], 2, 5)
            ])), {"x": self.x})

  def test_indexing(self):
    self.check(lambda p: ops.sum(ops.square(p["x"][..., 1:])), {"x": self.x})
    self.check(lambda p: ops.sum(ops.square(p["x"][:, [0, 0, 2]])),
               {"x": self.x})
    self.check(lambda p: ops.sum(ops.reshape(p["x"], (10, 3)) * 2.0),
               {"x": self.x})
    self.check(lambda p: ops.sum(ops.broadcast(p["b"], (4, 3)) * p["b"]),
               {"b": self.x[0, 0]})

  def test_concat(self):
    self.check(
        lambda p: ops.sum(ops.concat([p["a"], p["b"]]) * self.weights[..., :2]),
        {
            "a": self.x[..., :1],
            "b": self.x[..., 1:2]
        })


class TimeOpsTestCase(unittest.TestCase):

  def test_shift_time(self):
    x = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(
        ops.shift_time(x).value, [[0, 0], [0, 1], [2, 3]])

  def test_reverse_time(self):
    x = np.arange(6.0).reshape(1, 3, 2)
    np.testing.assert_array_equal(ops.reverse_time(x).value[0, 0], [4, 5])

  def test_index_and_stack(self):
    x = np.arange(12.0).reshape(2, 3, 2)
    self.assertEqual(ops.index_time(x, 1).shape, (2, 2))
    stacked = ops.stack_time([ops.index_time(x, t) for t in range(3)])
    np.testing.assert_array_equal(stacked.value, x)


class GaussianLogProbTestCase(unittest.TestCase):

  def test_values(self):
    value = ops.gaussian_log_prob(1.0, 0.0, 2.0).item()
    self.assertAlmostEqual(
        value, -0.125 - math.log(2.0) - 0.5 * math.log(2 * math.pi))
    self.assertAlmostEqual(
        ops.standard_normal_log_prob(0.0).item(), -0.5 * math.log(2 * math.pi))

  def test_gradient(self):
    rng = np.random.default_rng(3)
    params = {
        "x": rng.normal(size=(4, 2)),
        "mean": rng.normal(size=(4, 2)),
        "std": rng.uniform(0.5, 1.5, size=(4, 2))
    }
    error = grad_check(
        lambda p: ops.sum(ops.gaussian_log_prob(p["x"], p["mean"], p["std"])),
        params)
    self.assertLess(error, RTOL)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
