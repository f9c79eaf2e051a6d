# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import logging

import numpy as np

from deltavae.autodiff import Node, backward, ops
from deltavae.exception import ConfigurationError, DomainError
from deltavae.training.optimizer import Adam

MIN_PER_CLASS: int = 10


def linear_probe(features: np.ndarray,
                 labels: np.ndarray,
                 seed: int = 0,
                 holdout_fraction: float = 0.2,
                 epochs: int = 100,
                 lr: float = 3e-3,
                 decay_every: int = 30,
                 decay: float = 0.3,
                 batch_size: int = 128) -> float:
  """Held-out accuracy of multinomial logistic regression on features.

  The split and minibatch order are fixed by seed. Features are
  standardized with the statistics of the training part.
  """
  features = np.asarray(features, dtype=np.float64)
  labels = np.asarray(labels)
  if features.ndim != 2 or labels.shape != (features.shape[0],):
    raise ConfigurationError(
        f"Expected (N, F) features and (N,) labels, got {features.shape} "
        f"and {labels.shape}")
  classes, counts = np.unique(labels, return_counts=True)
  if classes.size < 2:
    raise DomainError("linear_probe needs at least two classes")
  if counts.min() < MIN_PER_CLASS:
    raise DomainError(
        f"linear_probe needs >= {MIN_PER_CLASS} examples per class, "
        f"got {dict(zip(classes.tolist(), counts.tolist()))}")
  if not 0 < holdout_fraction < 1:
    raise ConfigurationError(
        f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
  targets = np.searchsorted(classes, labels)

  rng = np.random.default_rng(seed)
  order = rng.permutation(features.shape[0])
  holdout = max(1, int(round(holdout_fraction * features.shape[0])))
  test_index, train_index = order[:holdout], order[holdout:]
  center = features[train_index].mean(axis=0)
  scale = features[train_index].std(axis=0)
  scale = np.where(scale > 1e-8, scale, 1.0)
  standardized = (features - center) / scale
  one_hot = np.eye(classes.size)[targets]

  params = {
      "w": np.zeros((features.shape[1], classes.size)),
      "b": np.zeros(classes.size),
  }
  optimizer = Adam(params, lr=lr)
  for epoch in range(epochs):
    if epoch and epoch % decay_every == 0:
      optimizer.lr *= decay
    shuffled = rng.permutation(train_index)
    for start in range(0, shuffled.size, batch_size):
      batch = shuffled[start:start + batch_size]
      w = Node.leaf(params["w"], "w")
      b = Node.leaf(params["b"], "b")
      logits = Node.constant(standardized[batch]) @ w + b
      loss = -ops.sum(ops.log_softmax(logits) * one_hot[batch]) * (
          1.0 / batch.size)
      grads = backward(loss)
      optimizer.step({"w": grads[w], "b": grads[b]})

  logits = standardized[test_index] @ params["w"] + params["b"]
  accuracy = float(np.mean(np.argmax(logits, axis=1) == targets[test_index]))
  logging.debug("linear_probe: %d classes, %d features, accuracy=%.4f",
                classes.size, features.shape[1], accuracy)
  return accuracy
