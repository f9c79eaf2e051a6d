# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import logging
import math
import pathlib
from typing import Optional, Tuple

import numpy as np

from deltavae import helper
from deltavae.autodiff import backward
from deltavae.data import Dataset, dataset_hash
from deltavae.exception import ContractError, DivergenceError
from deltavae.nets.model import ToyModel, init_model, save_model
from deltavae.training.evaluate import evaluate
from deltavae.training.objective import elbo
from deltavae.training.optimizer import Adam
from deltavae.training.record import RunRecord, StepMetrics
from deltavae.training.run_config import RunConfig

RATE_TOLERANCE: float = 1e-9


def _check_committed_rate(model: ToyModel, rates: np.ndarray,
                          step: int) -> float:
  min_rate = float(rates.min())
  committed = model.committed_rate
  logging.debug("step %d: min rate %.12g >= committed %.12g", step, min_rate,
                committed)
  if min_rate < committed - RATE_TOLERANCE:
    raise ContractError(
        f"Step {step}: rate {min_rate!r} nats is below the committed rate "
        f"{committed!r} nats")
  return min_rate


def _diverged(record: RunRecord, out_dir: Optional[pathlib.Path],
              message: str) -> DivergenceError:
  record.status = "diverged"
  record.error = message
  logging.error("%s: %s", record.name, message)
  if out_dir is not None:
    record.save(out_dir / "run_record.json")
  return DivergenceError(message, record)


def _checkpoint(model: ToyModel, out_dir: Optional[pathlib.Path],
                step: int) -> None:
  if out_dir is None:
    return
  path = out_dir / "checkpoints" / f"step_{step:06d}.json"
  save_model(model, path, extra={"step": step})
  logging.debug("Saved checkpoint %s", path)


def train_model(cfg: RunConfig,
                dataset: Optional[Dataset] = None,
                out_dir: Optional[pathlib.Path] = None
               ) -> Tuple[ToyModel, RunRecord]:
  """Trains one model. Deterministic given cfg (including cfg.seed)."""
  record = RunRecord(cfg.name, cfg.to_json(), cfg.seed)
  with helper.TimeScope(f"Run {cfg.name} seed={cfg.seed}"):
    with record.durations.measure("data"):
      if dataset is None:
        dataset = cfg.data.load()
      record.dataset_hash = dataset_hash(dataset)
    _, n, obs_dim = dataset.train_x.shape
    model = init_model(cfg.model, obs_dim, n, cfg.seed)
    record.parameter_count = model.parameter_count
    record.committed_rate = model.committed_rate
    logging.info("=" * 80)
    logging.info("RUN %s: %d parameters, committed rate %.6f nats",
                 cfg.name, model.parameter_count, model.committed_rate)
    logging.info("=" * 80)
    with record.durations.measure("train"):
      _train_loop(cfg, model, dataset, record, out_dir)
    with record.durations.measure("evaluate"):
      evaluations, aux_prior = evaluate(model, dataset, cfg.seed,
                                        cfg.train.eval_chunk,
                                        cfg.train.probe_epochs)
    record.evaluations = evaluations
    record.aux_prior = aux_prior.to_json()
    record.status = "ok"
  if out_dir is not None:
    record.save(out_dir / "run_record.json")
    save_model(model, out_dir / "model.json",
               extra={"aux_prior": record.aux_prior})
  return model, record


def train(cfg: RunConfig,
          dataset: Optional[Dataset] = None,
          out_dir: Optional[pathlib.Path] = None) -> RunRecord:
  return train_model(cfg, dataset, out_dir)[1]


def _train_loop(cfg: RunConfig, model: ToyModel, dataset: Dataset,
                record: RunRecord, out_dir: Optional[pathlib.Path]) -> None:
  settings = cfg.train
  optimizer = Adam(model.params, lr=settings.lr,
                   max_grad_norm=settings.max_grad_norm)
  batch_rng = np.random.default_rng([cfg.seed, 0])
  train_x = dataset.train_x
  batch_size = min(settings.batch_size, train_x.shape[0])
  for step in range(settings.steps):
    index = batch_rng.choice(train_x.shape[0], batch_size, replace=False)
    params = model.leaves()
    breakdown = elbo(model, train_x[index], cfg.objective, settings.mc_samples,
                     seed=[cfg.seed, 1, step], step=step, params=params)
    if not math.isfinite(breakdown.objective_value):
      raise _diverged(record, out_dir,
                      f"Loss is {breakdown.objective_value} at step {step}")
    min_rate = _check_committed_rate(model, breakdown.rate_per_sequence, step)
    grads = backward(breakdown.loss)
    named_grads = {name: grads[leaf] for name, leaf in params.items()
                   if leaf in grads}
    grad_norm = optimizer.step(named_grads)
    if not math.isfinite(grad_norm):
      raise _diverged(record, out_dir, f"Gradient norm is {grad_norm} at "
                      f"step {step}")
    record.is_likelihood_bound &= breakdown.is_likelihood_bound
    record.add_metrics(
        StepMetrics(
            step=step,
            reconstruction=breakdown.reconstruction,
            rate=breakdown.rate,
            objective=breakdown.objective_value,
            min_rate=min_rate,
            rate_weight=cfg.objective.rate_weight(step),
            grad_norm=grad_norm))
    if step % settings.log_every == 0 or step == settings.steps - 1:
      logging.info("step %5d: objective=%.4f reconstruction=%.4f rate=%.4f",
                   step, breakdown.objective_value, breakdown.reconstruction,
                   breakdown.rate)
    if settings.checkpoint_every and (step + 1) % settings.checkpoint_every == 0:
      _checkpoint(model, out_dir, step + 1)
