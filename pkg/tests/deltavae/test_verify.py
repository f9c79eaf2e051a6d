# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import sys
import unittest
from unittest import mock

import numpy as np
import pytest

from deltavae import ar1_prior, verify
from deltavae.gauss_kl import GaussianSeqPosterior, kl_seq_closed_form
from deltavae.mc_oracle import numeric_min_kl


class OptimalStdsTestCase(unittest.TestCase):

  def test_values(self):
    stds = verify.optimal_stds(0.5, 4)
    np.testing.assert_allclose(stds**2, [0.75, 0.6, 0.6, 0.75])

  def test_matches_numeric_minimum(self):
    prior = ar1_prior.make_prior([0.7])
    value, argmin = numeric_min_kl(prior, 5, restarts=2)
    self.assertAlmostEqual(value, ar1_prior.committed_rate(prior, 5), places=6)
    np.testing.assert_allclose(argmin.stds[:, 0], verify.optimal_stds(0.7, 5),
                               atol=1e-4)


class ChecksTestCase(unittest.TestCase):

  def test_mc_agreement(self):
    result = verify.check_mc_agreement(0, cases=5, n_samples=5000)
    self.assertTrue(result.passed, result.details)
    self.assertEqual(result.details["cases"], 5)

  def test_path_equivalence(self):
    result = verify.check_path_equivalence(1, cases=200)
    self.assertTrue(result.passed, result.details)
    self.assertLessEqual(result.details["max_relative_error"],
                         verify.PATH_RTOL)

  def test_path_equivalence_is_relative(self):
    q = GaussianSeqPosterior(np.zeros((3, 1)), np.full((3, 1), 0.99))
    prior = ar1_prior.make_prior([0.0])
    closed = kl_seq_closed_form(q, prior).total
    self.assertLess(closed, 1e-3)
    with mock.patch.object(verify, "_fuzz_case", return_value=(q, prior)):
      with mock.patch.object(
          verify, "kl_seq_decomposed", return_value=closed + 1e-12):
        result = verify.check_path_equivalence(0, cases=1)
    self.assertFalse(result.passed, result.details)

  def test_bound_domination(self):
    result = verify.check_bound_domination(3, cases=300)
    self.assertTrue(result.passed, result.details)
    self.assertGreaterEqual(result.details["min_kl_minus_committed_rate"],
                            -verify.GUARANTEE_ATOL)

  def test_fuzz_domain(self):
    rng = np.random.default_rng(0)
    ns, ds, alphas, means, stds = [], [], [], [], []
    for _ in range(2000):
      q, prior = verify._fuzz_case(rng)
      ns.append(q.n)
      ds.append(q.d)
      alphas.extend(prior.alphas)
      means.extend(q.means.ravel())
      stds.extend(q.stds.ravel())
    self.assertEqual((min(ns), max(ns)), (verify.FUZZ_MIN_N, verify.FUZZ_MAX_N))
    self.assertEqual((min(ds), max(ds)), (1, verify.FUZZ_MAX_D))
    self.assertGreater(max(alphas), 0.98)
    self.assertLessEqual(max(alphas), verify.FUZZ_MAX_ALPHA)
    self.assertGreater(max(np.abs(means)), 2.9)
    self.assertLessEqual(max(np.abs(means)), verify.FUZZ_MAX_ABS_MEAN)
    self.assertLess(min(stds), 0.15)
    self.assertGreater(max(stds), 2.9)

  def test_solver_round_trip(self):
    self.assertTrue(verify.check_solver_round_trip().passed)

  def test_independent_guarantee(self):
    result = verify.check_independent_guarantee(2, cases=500)
    self.assertTrue(result.passed, result.details)
    self.assertSetEqual(
        set(result.details["min_kl_minus_delta"]),
        {str(delta) for delta in verify.GUARANTEE_DELTAS})

  def test_elbo_gradients(self):
    result = verify.check_elbo_gradients(0, max_entries=3)
    self.assertTrue(result.passed, result.details)
    self.assertSetEqual(
        set(result.details["max_relative_error"]), set(verify.GRAD_MODELS))

  def test_masks(self):
    encoder = verify.check_encoder_mask(0)
    self.assertTrue(encoder.passed, encoder.details)
    self.assertGreater(encoder.details["past_gradient_abs_sum"]["non_causal"],
                       0)
    decoder = verify.check_decoder_mask(0)
    self.assertTrue(decoder.passed, decoder.details)

  def test_to_json(self):
    result = verify.CheckResult("x", False, {"value": 1})
    self.assertDictEqual(result.to_json(), {
        "name": "x",
        "passed": False,
        "value": 1
    })


class RunSuiteTestCase(unittest.TestCase):

  def test_quick_suites(self):
    for suite in (verify.Suite.BOUND, verify.Suite.MASKS):
      with self.subTest(suite=suite):
        report = verify.run_suite(suite, seed=0, quick=True)
        self.assertTrue(report.passed)
        self.assertGreater(len(report.checks), 0)
        data = report.to_json()
        self.assertEqual(data["suite"], str(suite))
        self.assertTrue(data["passed"])
        self.assertGreaterEqual(data["seconds"], 0.0)

  def test_failed_check_fails_report(self):
    report = verify.SuiteReport(verify.Suite.KL, 0)
    report.checks.append(verify.CheckResult("ok", True, {}))
    self.assertTrue(report.passed)
    report.checks.append(verify.CheckResult("bad", False, {}))
    self.assertFalse(report.passed)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
