# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import math
import sys
import unittest

import numpy as np
import pytest

from deltavae import gauss_kl
from deltavae.ar1_prior import committed_rate, make_prior
from deltavae.autodiff import Node, backward, ops
from deltavae.exception import ConfigurationError, DomainError
from deltavae.gauss_kl import GaussianSeqPosterior
from deltavae.mc_oracle import mc_kl_estimate
from deltavae.nets.aux_prior import AuxPrior


def random_posterior(rng, n, d):
  return GaussianSeqPosterior(
      rng.normal(size=(n, d)), rng.uniform(0.2, 1.5, size=(n, d)))


def wide_posterior(rng, n, d):
  return GaussianSeqPosterior(
      rng.uniform(-3.0, 3.0, size=(n, d)), rng.uniform(0.1, 3.0, size=(n, d)))


class KlUnivariateTestCase(unittest.TestCase):

  def test_zero_for_identical(self):
    self.assertEqual(gauss_kl.kl_univariate(0.3, 1.2, 0.3, 1.2), 0.0)

  def test_standard_normal(self):
    # KL(N(1, 1) || N(0, 1)) = 1/2
    self.assertAlmostEqual(gauss_kl.kl_univariate(1.0, 1.0, 0.0, 1.0), 0.5)
    expected = 0.5 * (0.25 - 1.0 - math.log(0.25))
    self.assertAlmostEqual(
        gauss_kl.kl_univariate(0.0, 0.5, 0.0, 1.0), expected, places=12)

  def test_arrays(self):
    value = gauss_kl.kl_univariate(
        np.array([0.0, 1.0]), np.ones(2), np.zeros(2), np.ones(2))
    np.testing.assert_allclose(value, [0.0, 0.5])

  def test_invalid_std(self):
    with self.assertRaises(DomainError):
      gauss_kl.kl_univariate(0.0, 0.0, 0.0, 1.0)
    with self.assertRaises(DomainError):
      gauss_kl.kl_univariate(0.0, 1.0, 0.0, -1.0)
    with self.assertRaises(DomainError):
      gauss_kl.kl_univariate(0.0, float("nan"), 0.0, 1.0)

  def test_wider_posterior(self):
    value = gauss_kl.kl_univariate(0.0, 2.0, 0.0, 1.0)
    self.assertAlmostEqual(value, 0.5 * (3.0 - math.log(4.0)), places=12)
    self.assertAlmostEqual(value, 0.80685, places=5)
    q = GaussianSeqPosterior(np.zeros((1, 1)), np.full((1, 1), 2.0))
    estimate, stderr = mc_kl_estimate(q, make_prior([0.0]), 1_000_000, seed=0)
    self.assertLess(abs(estimate - value), 4 * stderr)


class GaussianSeqPosteriorTestCase(unittest.TestCase):

  def test_shape(self):
    q = GaussianSeqPosterior(np.zeros((4, 2)), np.ones((4, 2)))
    self.assertEqual(q.n, 4)
    self.assertEqual(q.d, 2)
    self.assertEqual(q.shape, (4, 2))

  def test_readonly(self):
    q = GaussianSeqPosterior(np.zeros((3, 1)), np.ones((3, 1)))
    with self.assertRaises(ValueError):
      q.means[0, 0] = 1.0

  def test_invalid(self):
    with self.assertRaises(ConfigurationError):
      GaussianSeqPosterior(np.zeros((3, 2)), np.ones((3, 1)))
    with self.assertRaises(ConfigurationError):
      GaussianSeqPosterior(np.zeros(3), np.ones(3))
    with self.assertRaises(DomainError):
      GaussianSeqPosterior(np.zeros((3, 1)), np.full((3, 1), 1e-6))
    with self.assertRaises(DomainError):
      GaussianSeqPosterior(np.full((3, 1), np.inf), np.ones((3, 1)))


class KlSeqTestCase(unittest.TestCase):

  def test_independent_prior_matches_sum_of_univariates(self):
    rng = np.random.default_rng(0)
    q = random_posterior(rng, 5, 3)
    prior = make_prior([0.0, 0.0, 0.0])
    expected = np.sum(gauss_kl.kl_univariate(q.means, q.stds, 0.0, 1.0))
    breakdown = gauss_kl.kl_seq_closed_form(q, prior)
    self.assertAlmostEqual(breakdown.total, expected, places=12)

  def test_paths_agree(self):
    rng = np.random.default_rng(1)
    for _ in range(200):
      n = int(rng.integers(1, 17))
      d = int(rng.integers(1, 5))
      q = wide_posterior(rng, n, d)
      prior = make_prior(rng.uniform(0.0, 0.99, d))
      closed = gauss_kl.kl_seq_closed_form(q, prior).total
      decomposed = gauss_kl.kl_seq_decomposed(q, prior)
      self.assertLessEqual(abs(closed - decomposed) / abs(closed), 1e-10)

  def test_worked_sequence_against_sampling(self):
    q = GaussianSeqPosterior(
        np.array([[0.3], [-0.1], [0.2], [0.0]]),
        np.array([[0.9], [1.1], [0.8], [1.0]]))
    prior = make_prior([0.5])
    exact = gauss_kl.kl_seq_closed_form(q, prior).total
    estimate, stderr = mc_kl_estimate(q, prior, 1_000_000, seed=1)
    self.assertLess(abs(estimate - exact), 4 * stderr)

  def test_bounded_below_by_committed_rate(self):
    rng = np.random.default_rng(3)
    for _ in range(500):
      n = int(rng.integers(2, 17))
      d = int(rng.integers(1, 5))
      q = wide_posterior(rng, n, d)
      prior = make_prior(rng.uniform(0.0, 0.99, d))
      self.assertGreaterEqual(
          gauss_kl.kl_seq_closed_form(q, prior).total,
          committed_rate(prior, n) - 1e-9)

  def test_per_cell_breakdown(self):
    rng = np.random.default_rng(2)
    q = random_posterior(rng, 7, 2)
    breakdown = gauss_kl.kl_seq_closed_form(q, make_prior([0.5, 0.9]))
    self.assertEqual(breakdown.per_cell.shape, (7, 2))
    self.assertTrue(np.all(breakdown.per_cell >= 0))
    self.assertAlmostEqual(breakdown.per_cell.sum(), breakdown.total)
    self.assertEqual(breakdown.per_timestep.shape, (7,))
    self.assertEqual(breakdown.per_dimension.shape, (2,))

  def test_zero_at_prior_marginal_for_single_step(self):
    q = GaussianSeqPosterior(np.zeros((1, 2)), np.ones((1, 2)))
    breakdown = gauss_kl.kl_seq_closed_form(q, make_prior([0.9, 0.3]))
    self.assertEqual(breakdown.total, 0.0)

  def test_dimension_mismatch(self):
    q = GaussianSeqPosterior(np.zeros((3, 2)), np.ones((3, 2)))
    with self.assertRaises(ConfigurationError):
      gauss_kl.kl_seq_closed_form(q, make_prior([0.5]))
    with self.assertRaises(ConfigurationError):
      gauss_kl.kl_seq_decomposed(q, make_prior([0.5]))

  def test_generic_linear_gaussian_prior(self):
    rng = np.random.default_rng(3)
    q = random_posterior(rng, 6, 2)
    prior = AuxPrior(
        slopes=[0.4, -0.2],
        offsets=[0.1, 0.3],
        noise_stds=[0.7, 1.3],
        init_means=[0.5, -0.5],
        init_stds=[2.0, 0.5],
        degenerate=[False, False])
    closed = gauss_kl.kl_seq_closed_form(q, prior).total
    self.assertAlmostEqual(
        closed, gauss_kl.kl_seq_decomposed(q, prior), places=10)


class KlGraphTestCase(unittest.TestCase):

  def test_graph_matches_closed_form(self):
    rng = np.random.default_rng(4)
    q = random_posterior(rng, 5, 2)
    prior = make_prior([0.3, 0.8])
    cells = gauss_kl.kl_seq_cells_graph(
        Node.constant(q.means), Node.constant(q.stds), prior)
    np.testing.assert_allclose(
        cells.value,
        gauss_kl.kl_seq_closed_form(q, prior).per_cell,
        atol=1e-12)

  def test_batched_array(self):
    rng = np.random.default_rng(5)
    means = rng.normal(size=(3, 4, 2))
    stds = rng.uniform(0.5, 1.0, size=(3, 4, 2))
    prior = make_prior([0.5, 0.5])
    cells = gauss_kl.kl_cells_array(means, stds, prior)
    for b in range(3):
      q = GaussianSeqPosterior(means[b], stds[b])
      self.assertAlmostEqual(
          cells[b].sum(), gauss_kl.kl_seq_closed_form(q, prior).total)

  def test_gradient_of_sigma_vanishes_at_optimum(self):
    alpha, n = 0.5, 4
    stds = np.full((n, 1), math.sqrt((1 - alpha**2) / (1 + alpha**2)))
    stds[0] = stds[-1] = math.sqrt(1 - alpha**2)
    std_leaf = Node.leaf(stds)
    total = ops.sum(
        gauss_kl.kl_seq_cells_graph(
            Node.constant(np.zeros((n, 1))), std_leaf, make_prior([alpha])))
    grads = backward(total)
    np.testing.assert_allclose(grads[std_leaf], 0.0, atol=1e-12)

  def test_graph_shape_errors(self):
    with self.assertRaises(ConfigurationError):
      gauss_kl.kl_seq_cells_graph(
          Node.constant(np.zeros((3, 2))), Node.constant(np.ones((3, 1))),
          make_prior([0.5]))
    with self.assertRaises(ConfigurationError):
      gauss_kl.kl_seq_cells_graph(
          Node.constant(np.zeros((3, 2))), Node.constant(np.ones((3, 2))),
          make_prior([0.5]))


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
