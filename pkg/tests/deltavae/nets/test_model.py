# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import pathlib
import sys
import unittest

import numpy as np
import pytest
from pyfakefs import fake_filesystem_unittest

from deltavae import ar1_prior
from deltavae.autodiff import Node, backward, ops
from deltavae.exception import ConfigurationError, DomainError
from deltavae.gauss_kl import SIGMA_FLOOR, kl_univariate
from deltavae.nets import model as model_lib
from deltavae.nets.model import (ConstraintMode, EncoderMode, ModelConfig,
                                 init_model)
from tests.deltavae.mock_helper import (delta_model_config,
                                        independent_model_config,
                                        tiny_model_config)

OBS_DIM = 2
N = 6


class ModelConfigTestCase(unittest.TestCase):

  def test_defaults(self):
    config = ModelConfig.from_config({})
    self.assertEqual(config, ModelConfig())
    self.assertIs(config.constraint, ConstraintMode.NONE)
    self.assertIs(config.encoder_mode, EncoderMode.ANTI_CAUSAL)
    self.assertEqual(config.obs_std, 0.1)
    self.assertFalse(config.learned_obs_std)

  def test_parse(self):
    config = ModelConfig.from_config({
        "latent_dim": 3,
        "encoder_mode": "non_causal",
        "constraint": "temporal_delta",
        "alpha_range": [0.1, 0.9],
        "obs_std": "learned",
    })
    self.assertIs(config.encoder_mode, EncoderMode.NON_CAUSAL)
    self.assertEqual(config.alpha_range, (0.1, 0.9))
    self.assertTrue(config.learned_obs_std)
    self.assertEqual(ModelConfig.from_config(config.to_json()), config)

  def test_invalid(self):
    invalid = (
        {"latent_dim": 0},
        {"constraint": "temporal_delta"},
        {"target_rate": 1.0},
        {"independent_delta": -1.0},
        {"obs_std": 0},
        {"obs_std": "fixed"},
        {"encoder_mode": "causal"},
    )
    for data in invalid:
      with self.subTest(data=data):
        with self.assertRaises(ConfigurationError):
          ModelConfig.from_config(data)


class ToyModelTestCase(unittest.TestCase):

  def setUp(self):
    self.x = np.random.default_rng(0).normal(size=(3, N, OBS_DIM))

  def test_init_deterministic(self):
    first = init_model(tiny_model_config(), OBS_DIM, N, seed=1)
    second = init_model(tiny_model_config(), OBS_DIM, N, seed=1)
    self.assertEqual(sorted(first.params), sorted(second.params))
    for name, value in first.params.items():
      np.testing.assert_array_equal(value, second.params[name])
    with self.assertRaises(DomainError):
      init_model(tiny_model_config(), 0, N, seed=1)

  def test_parameters(self):
    anti = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    non = init_model(
        tiny_model_config(encoder_mode=EncoderMode.NON_CAUSAL), OBS_DIM, N,
        seed=0)
    self.assertNotIn("enc_fwd0.w", anti.params)
    self.assertIn("enc_fwd0.w", non.params)
    self.assertGreater(non.parameter_count, anti.parameter_count)
    learned = init_model(
        tiny_model_config(obs_std="learned"), OBS_DIM, N, seed=0)
    self.assertIn("dec_std.w", learned.params)

  def test_committed_rate(self):
    plain = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    self.assertEqual(plain.committed_rate, 0.0)
    temporal = init_model(delta_model_config(1.5), OBS_DIM, N, seed=0)
    self.assertGreaterEqual(temporal.committed_rate, 1.5)
    self.assertAlmostEqual(temporal.committed_rate, 1.5, places=6)
    self.assertAlmostEqual(
        temporal.committed_rate,
        ar1_prior.committed_rate(temporal.prior, N))
    independent = init_model(independent_model_config(0.1), OBS_DIM, N, seed=0)
    self.assertAlmostEqual(independent.committed_rate, 0.1 * N * 2)

  def test_encode(self):
    model = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    q = model_lib.encode(model, self.x[0])
    self.assertEqual(q.shape, (N, 2))
    self.assertTrue(np.all(q.stds >= SIGMA_FLOOR))
    means, stds = model_lib.encode_arrays(model, self.x)
    np.testing.assert_allclose(means[0], q.means)
    np.testing.assert_allclose(stds[0], q.stds)
    with self.assertRaises(ConfigurationError):
      model_lib.encode(model, self.x)
    with self.assertRaises(ConfigurationError):
      model_lib.encode(model, self.x[0], mode=EncoderMode.NON_CAUSAL)

  def test_independent_encoder_commits_rate(self):
    model = init_model(independent_model_config(0.2), OBS_DIM, N, seed=0)
    for sequence in 3 * self.x:
      q = model_lib.encode(model, sequence)
      kl = kl_univariate(q.means, q.stds, 0.0, 1.0)
      self.assertGreaterEqual(kl.min(), 0.2 - 1e-9)

  def test_reparameterize(self):
    model = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    q = model_lib.encode(model, self.x[0])
    np.testing.assert_allclose(
        model_lib.reparameterize(q, np.zeros(q.shape)), q.means)
    with self.assertRaises(ConfigurationError):
      model_lib.reparameterize(q, np.zeros((N, 5)))

  def test_decode(self):
    model = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    z = np.zeros((N, 2))
    mean, std = model_lib.decode(model, self.x[0], z)
    self.assertEqual(mean.shape, (N, OBS_DIM))
    np.testing.assert_array_equal(std, 0.1)
    means, _ = model_lib.decode(model, self.x, np.zeros((3, N, 2)))
    np.testing.assert_allclose(means[0], mean)
    with self.assertRaises(ConfigurationError):
      model_lib.decode(model, self.x, np.zeros((2, N, 2)))

  def test_learned_obs_std(self):
    model = init_model(tiny_model_config(obs_std="learned"), OBS_DIM, N, seed=0)
    _, std = model_lib.decode(model, self.x[0], np.zeros((N, 2)))
    self.assertTrue(np.all(std >= model_lib.OBS_STD_FLOOR))
    self.assertGreater(np.ptp(std), 0.0)

  def test_decoder_is_autoregressive(self):
    model = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    params = model.constants()
    x = Node.leaf(self.x[:1])
    z = Node.constant(np.zeros((1, N, 2)))
    mean, _ = model_lib.decode_graph(model, params,
                                     model_lib.shift_observations(x), z)
    grads = backward(ops.sum(ops.index_time(mean, 3)))
    per_step = np.abs(grads[x]).sum(axis=(0, 2))
    np.testing.assert_array_equal(per_step[3:], 0.0)
    self.assertTrue(np.all(per_step[:3] > 0))

  def test_sample_from_prior(self):
    model = init_model(delta_model_config(1.0), OBS_DIM, N, seed=0)
    z, x = model_lib.sample_from_prior(model, model.prior, 4, seed=2)
    self.assertEqual(z.shape, (4, N, 2))
    self.assertEqual(x.shape, (4, N, OBS_DIM))
    z_again, x_again = model_lib.sample_from_prior(model, model.prior, 4, 2)
    np.testing.assert_array_equal(x, x_again)
    np.testing.assert_array_equal(z, z_again)
    _, x_mean = model_lib.sample_from_prior(
        model, model.prior, 4, seed=2, mean_only=True)
    self.assertFalse(np.array_equal(x, x_mean))
    with self.assertRaises(DomainError):
      model_lib.sample_from_prior(model, model.prior, 0, seed=2)

  def test_mean_only_matches_decoder_on_own_outputs(self):
    model = init_model(tiny_model_config(), OBS_DIM, N, seed=0)
    z, x = model_lib.sample_from_prior(
        model, model.prior, 2, seed=3, mean_only=True)
    x_prev = np.zeros_like(x)
    x_prev[:, 1:] = x[:, :-1]
    mean, _ = model_lib.decode(model, x_prev, z)
    np.testing.assert_allclose(mean, x, atol=1e-12)


class ModelFileTestCase(fake_filesystem_unittest.TestCase):

  def setUp(self):
    self.setUpPyfakefs()

  def test_save_load(self):
    model = init_model(delta_model_config(1.0), OBS_DIM, N, seed=4)
    path = pathlib.Path("/models/model.json")
    model_lib.save_model(model, path, extra={"aux_prior": {"x": 1}})
    loaded = model_lib.load_model(path)
    self.assertEqual(loaded.config, model.config)
    self.assertEqual(loaded.n, N)
    self.assertEqual(loaded.committed_rate, model.committed_rate)
    for name, value in model.params.items():
      np.testing.assert_array_equal(loaded.params[name], value)
    self.assertEqual(model_lib.load_model_extra(path, "aux_prior"), {"x": 1})
    self.assertIsNone(model_lib.load_model_extra(path, "missing"))

  def test_wrong_format(self):
    path = pathlib.Path("/models/other.json")
    self.fs.create_file(path, contents='{"format": "other"}')
    with self.assertRaises(ConfigurationError):
      model_lib.load_model(path)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
