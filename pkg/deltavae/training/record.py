# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import dataclasses
import json
import pathlib
from typing import Any, Dict, List, Optional

from deltavae import helper
from deltavae.exception import ContractError

RECORD_FORMAT: str = "deltavae-run-record"


@dataclasses.dataclass(frozen=True)
class StepMetrics:
  step: int
  reconstruction: float
  rate: float
  objective: float
  min_rate: float
  rate_weight: float
  grad_norm: float

  def to_json(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class SplitEvaluation:
  """Final evaluation of one data split, in nats per sequence."""
  split: str
  elbo_bound: float
  rate_nats: float
  distortion_nats: float
  aux_rate_nats: float
  committed_rate_nats: float
  probe_accuracy: Optional[float] = None

  @property
  def rate_bits(self) -> float:
    return helper.nats_to_bits(self.rate_nats)

  @property
  def aux_rate_bits(self) -> float:
    return helper.nats_to_bits(self.aux_rate_nats)

  def to_json(self) -> Dict[str, Any]:
    data = dataclasses.asdict(self)
    data["rate_bits"] = self.rate_bits
    data["aux_rate_bits"] = self.aux_rate_bits
    return data

  @classmethod
  def from_json(cls, data: Dict[str, Any]) -> SplitEvaluation:
    names = {field.name for field in dataclasses.fields(cls)}
    return cls(**{key: value for key, value in data.items() if key in names})


class RunRecord:
  """Configuration, seed, per-step metrics and final evaluation of a run."""

  def __init__(self, name: str, config: Dict[str, Any], seed: int) -> None:
    self.name = name
    self.config = config
    self.seed = seed
    self.metrics: List[StepMetrics] = []
    self.evaluations: Dict[str, SplitEvaluation] = {}
    self.status: str = "running"
    self.committed_rate: float = 0.0
    self.is_likelihood_bound: bool = True
    self.dataset_hash: str = ""
    self.parameter_count: int = 0
    self.aux_prior: Optional[Dict[str, Any]] = None
    self.durations = helper.Durations()
    self.error: Optional[str] = None

  def add_metrics(self, metrics: StepMetrics) -> None:
    if self.metrics and metrics.step <= self.metrics[-1].step:
      raise ContractError(
          f"Metrics must increase in step, got {metrics.step} after "
          f"{self.metrics[-1].step}")
    self.metrics.append(metrics)

  @property
  def last(self) -> Optional[StepMetrics]:
    return self.metrics[-1] if self.metrics else None

  @property
  def min_rate(self) -> float:
    return min(metrics.min_rate for metrics in self.metrics)

  @property
  def test(self) -> SplitEvaluation:
    return self.evaluations["test"]

  @property
  def train(self) -> SplitEvaluation:
    return self.evaluations["train"]

  @property
  def header(self) -> Dict[str, Any]:
    return helper.output_header(self.config, self.seed)

  def metrics_json(self) -> List[Dict[str, Any]]:
    return [metrics.to_json() for metrics in self.metrics]

  def to_json(self) -> Dict[str, Any]:
    return {
        "format": RECORD_FORMAT,
        "name": self.name,
        "seed": self.seed,
        "status": self.status,
        "error": self.error,
        "config": self.config,
        "dataset_hash": self.dataset_hash,
        "parameter_count": self.parameter_count,
        "committed_rate_nats": self.committed_rate,
        "is_likelihood_bound": self.is_likelihood_bound,
        "metrics": self.metrics_json(),
        "evaluation": {
            split: evaluation.to_json()
            for split, evaluation in self.evaluations.items()
        },
        "aux_prior": self.aux_prior,
        "durations": self.durations.to_json(),
    }

  def save(self, path: pathlib.Path) -> None:
    helper.write_json(path, self.header, self.to_json())

  @classmethod
  def load(cls, path: pathlib.Path) -> RunRecord:
    with path.open(encoding="utf-8") as f:
      data = json.load(f)
    if data.get("format") != RECORD_FORMAT:
      raise ContractError(f"{path}: not a {RECORD_FORMAT} file")
    record = cls(data["name"], data["config"], data["seed"])
    record.status = data["status"]
    record.error = data.get("error")
    record.dataset_hash = data["dataset_hash"]
    record.parameter_count = data["parameter_count"]
    record.committed_rate = data["committed_rate_nats"]
    record.is_likelihood_bound = data["is_likelihood_bound"]
    record.metrics = [StepMetrics(**metrics) for metrics in data["metrics"]]
    record.evaluations = {
        split: SplitEvaluation.from_json(evaluation)
        for split, evaluation in data["evaluation"].items()
    }
    record.aux_prior = data.get("aux_prior")
    return record
