# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import pathlib
import sys
import unittest

import numpy as np
import pytest
from pyfakefs import fake_filesystem_unittest

from deltavae import data
from deltavae.exception import ConfigurationError, DomainError


class GenSyntheticTestCase(unittest.TestCase):

  def test_shapes(self):
    dataset = data.gen_synthetic(3, 7, 2, 30, 12, seed=0)
    self.assertEqual(dataset.train_x.shape, (30, 7, 2))
    self.assertEqual(dataset.train_y.shape, (30,))
    self.assertEqual(dataset.test_x.shape, (12, 7, 2))
    self.assertEqual(dataset.test_y.shape, (12,))
    self.assertEqual(len(dataset.generator.regimes), 3)

  def test_balanced_labels(self):
    dataset = data.gen_synthetic(4, 5, 2, 40, 20, seed=1)
    _, counts = np.unique(dataset.train_y, return_counts=True)
    np.testing.assert_array_equal(counts, [10, 10, 10, 10])

  def test_deterministic(self):
    first = data.gen_synthetic(2, 5, 3, 10, 10, seed=5)
    second = data.gen_synthetic(2, 5, 3, 10, 10, seed=5)
    np.testing.assert_array_equal(first.train_x, second.train_x)
    self.assertEqual(data.dataset_hash(first), data.dataset_hash(second))
    other = data.gen_synthetic(2, 5, 3, 10, 10, seed=6)
    self.assertNotEqual(data.dataset_hash(first), data.dataset_hash(other))

  def test_invalid(self):
    with self.assertRaises(DomainError):
      data.gen_synthetic(1, 5, 2, 10, 10, seed=0)
    with self.assertRaises(DomainError):
      data.gen_synthetic(2, 0, 2, 10, 10, seed=0)
    with self.assertRaises(DomainError):
      data.gen_synthetic(2, 5, 2, 10, 10, seed=0, emission_std=0.0)

  def test_split(self):
    dataset = data.gen_synthetic(2, 4, 2, 10, 6, seed=0)
    x, y = dataset.split("test")
    self.assertIs(x, dataset.test_x)
    self.assertIs(y, dataset.test_y)
    with self.assertRaises(ConfigurationError):
      dataset.split("valid")


class BayesClassifierTestCase(unittest.TestCase):

  def test_posterior_rows_normalized(self):
    dataset = data.gen_synthetic(3, 6, 2, 10, 30, seed=2)
    posterior = data.bayes_classify(dataset)
    self.assertEqual(posterior.shape, (30, 3))
    np.testing.assert_allclose(posterior.sum(axis=1), 1.0)

  def test_better_than_chance(self):
    dataset = data.gen_synthetic(2, 24, 4, 10, 400, seed=3)
    self.assertGreater(data.bayes_accuracy(dataset), 0.6)


class DataConfigTestCase(unittest.TestCase):

  def test_defaults(self):
    config = data.DataConfig.from_config({})
    self.assertEqual(config, data.DataConfig())
    self.assertIsNone(config.path)

  def test_parse(self):
    config = data.DataConfig.from_config({"n": 8, "seed": 4})
    self.assertEqual(config.n, 8)
    self.assertEqual(config.seed, 4)
    with self.assertRaises(ConfigurationError):
      data.DataConfig.from_config({"n": "eight"})
    with self.assertRaises(ConfigurationError):
      data.DataConfig.from_config({"regimes": 4})


class DatasetFileTestCase(fake_filesystem_unittest.TestCase):

  def setUp(self):
    self.setUpPyfakefs()

  def test_save_load(self):
    dataset = data.gen_synthetic(2, 4, 2, 10, 6, seed=0)
    path = pathlib.Path("/data/toy.npz")
    data.save_dataset(dataset, path)
    loaded = data.load_dataset(path)
    np.testing.assert_array_equal(loaded.train_x, dataset.train_x)
    np.testing.assert_array_equal(loaded.test_y, dataset.test_y)
    self.assertEqual(loaded.generator.k_regimes, 2)
    self.assertEqual(data.dataset_hash(loaded), data.dataset_hash(dataset))

  def test_config_path(self):
    dataset = data.gen_synthetic(2, 4, 2, 10, 6, seed=0)
    path = pathlib.Path("/data/toy.npz")
    data.save_dataset(dataset, path)
    config = data.DataConfig.from_config({"path": str(path)})
    self.assertEqual(config.path, path)
    np.testing.assert_array_equal(config.load().test_x, dataset.test_x)

  def test_load_wrong_format(self):
    path = pathlib.Path("/data/other.npz")
    path.parent.mkdir(parents=True)
    with path.open("wb") as f:
      np.savez(
          f,
          header=np.array('{"format": "other"}'),
          train_x=np.zeros(1),
          train_y=np.zeros(1),
          test_x=np.zeros(1),
          test_y=np.zeros(1))
    with self.assertRaises(ConfigurationError):
      data.load_dataset(path)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
