# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Final evaluation of a trained model on both data splits.

The auxiliary prior is fitted to the exact moments of the training-set
posteriors, then used to re-evaluate the rate on each split.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from deltavae.autodiff import Node
from deltavae.data import Dataset
from deltavae.gauss_kl import LinearGaussianPrior, kl_cells_array
from deltavae.nets.aux_prior import AuxPrior, fit_aux_prior_moments
from deltavae.nets.model import (ToyModel, encode_arrays,
                                 reconstruction_log_prob)
from deltavae.training.probe import linear_probe
from deltavae.training.record import SplitEvaluation


def posterior_arrays(model: ToyModel, x: np.ndarray,
                     chunk: int = 500) -> Tuple[np.ndarray, np.ndarray]:
  means, stds = [], []
  for start in range(0, x.shape[0], chunk):
    chunk_means, chunk_stds = encode_arrays(model, x[start:start + chunk])
    means.append(chunk_means)
    stds.append(chunk_stds)
  return np.concatenate(means), np.concatenate(stds)


def sequence_rates(means: np.ndarray, stds: np.ndarray,
                   prior: LinearGaussianPrior) -> np.ndarray:
  return kl_cells_array(means, stds, prior).sum(axis=(-2, -1))


def _distortion(model: ToyModel, x: np.ndarray, means: np.ndarray,
                stds: np.ndarray, seed: int, chunk: int) -> float:
  rng = np.random.default_rng([seed, 2])
  params = model.constants()
  total = 0.0
  for start in range(0, x.shape[0], chunk):
    stop = start + chunk
    z = means[start:stop] + stds[start:stop] * rng.standard_normal(
        means[start:stop].shape)
    log_prob = reconstruction_log_prob(model, params,
                                       Node.constant(x[start:stop]),
                                       Node.constant(z))
    total += float(log_prob.value.sum())
  return -total / x.shape[0]


def evaluate_split(model: ToyModel,
                   dataset: Dataset,
                   split: str,
                   aux_prior: AuxPrior,
                   seed: int,
                   chunk: int = 500,
                   probe_epochs: int = 0,
                   posteriors: Optional[Tuple[np.ndarray, np.ndarray]] = None
                  ) -> SplitEvaluation:
  x, labels = dataset.split(split)
  means, stds = posteriors or posterior_arrays(model, x, chunk)
  rate = float(sequence_rates(means, stds, model.prior).mean())
  aux_rate = float(sequence_rates(means, stds, aux_prior).mean())
  distortion = _distortion(model, x, means, stds, seed, chunk)
  probe_accuracy = None
  if probe_epochs:
    probe_accuracy = linear_probe(
        means.reshape(means.shape[0], -1), labels, seed=seed,
        epochs=probe_epochs)
  evaluation = SplitEvaluation(
      split=split,
      elbo_bound=-(distortion + rate),
      rate_nats=rate,
      distortion_nats=distortion,
      aux_rate_nats=aux_rate,
      committed_rate_nats=model.committed_rate,
      probe_accuracy=probe_accuracy)
  logging.info(
      "%s: elbo=%.4f rate=%.4f nats (%.4f bits) aux_rate=%.4f nats "
      "distortion=%.4f probe=%s", split, evaluation.elbo_bound, rate,
      evaluation.rate_bits, aux_rate, distortion,
      "-" if probe_accuracy is None else f"{probe_accuracy:.4f}")
  return evaluation


def evaluate(model: ToyModel,
             dataset: Dataset,
             seed: int,
             chunk: int = 500,
             probe_epochs: int = 100
            ) -> Tuple[Dict[str, SplitEvaluation], AuxPrior]:
  """Evaluates test and train; the probe runs on the test split only."""
  train_posteriors = posterior_arrays(model, dataset.train_x, chunk)
  aux_prior = fit_aux_prior_moments(*train_posteriors)
  evaluations = {
      "test":
          evaluate_split(model, dataset, "test", aux_prior, seed, chunk,
                         probe_epochs),
      "train":
          evaluate_split(model, dataset, "train", aux_prior, seed, chunk,
                         posteriors=train_posteriors),
  }
  return evaluations, aux_prior
