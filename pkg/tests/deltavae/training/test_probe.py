# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import sys
import unittest

import numpy as np
import pytest

from deltavae.exception import ConfigurationError, DomainError
from deltavae.training.probe import MIN_PER_CLASS, linear_probe


def blobs(seed, separation, count=300, classes=3, dim=4):
  rng = np.random.default_rng(seed)
  labels = np.arange(count) % classes
  centers = separation * rng.normal(size=(classes, dim))
  features = centers[labels] + rng.normal(size=(count, dim))
  return features, labels


class LinearProbeTestCase(unittest.TestCase):

  def test_separable(self):
    features, labels = blobs(0, separation=10.0)
    self.assertGreater(linear_probe(features, labels, epochs=30), 0.95)

  def test_linearly_separable(self):
    rng = np.random.default_rng(7)
    features = rng.normal(size=(400, 1))
    labels = (features[:, 0] > 0).astype(int)
    features[:, 0] += np.where(labels == 1, 2.0, -2.0)
    self.assertGreaterEqual(linear_probe(features, labels), 0.99)

  def test_uninformative(self):
    rng = np.random.default_rng(1)
    features = rng.normal(size=(400, 4))
    labels = np.arange(400) % 2
    self.assertLess(linear_probe(features, labels, epochs=20), 0.7)

  def test_deterministic(self):
    features, labels = blobs(2, separation=0.7)
    first = linear_probe(features, labels, seed=3, epochs=10)
    self.assertEqual(first, linear_probe(features, labels, seed=3, epochs=10))

  def test_label_values(self):
    features, labels = blobs(4, separation=10.0, classes=2)
    shifted = np.where(labels == 0, 7, 42)
    self.assertEqual(
        linear_probe(features, labels, epochs=10),
        linear_probe(features, shifted, epochs=10))

  def test_constant_feature(self):
    features, labels = blobs(5, separation=10.0)
    features[:, 0] = 3.0
    self.assertGreater(linear_probe(features, labels, epochs=30), 0.9)

  def test_invalid(self):
    features, labels = blobs(6, separation=1.0)
    with self.assertRaises(DomainError):
      linear_probe(features, np.zeros_like(labels))
    few = np.concatenate([labels[:MIN_PER_CLASS * 3], [7]])
    with self.assertRaises(DomainError):
      linear_probe(features[:few.size], few)
    with self.assertRaises(ConfigurationError):
      linear_probe(features, labels[:-1])
    with self.assertRaises(ConfigurationError):
      linear_probe(features, labels, holdout_fraction=1.0)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
