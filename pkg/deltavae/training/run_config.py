# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import dataclasses
import pathlib
from typing import Any, Dict, List, Optional, Union

from deltavae import helper
from deltavae.config import ConfigParser, load_hjson
from deltavae.data import DataConfig
from deltavae.exception import ConfigurationError
from deltavae.nets.model import ModelConfig
from deltavae.training.objective import ObjectiveCfg

PRESET_DIR: pathlib.Path = pathlib.Path(__file__).parents[1] / "configs"
GRID_DIR: pathlib.Path = PRESET_DIR / "grids"


@dataclasses.dataclass(frozen=True)
class TrainConfig:
  """Optimizer, schedule and evaluation settings of one run."""
  steps: int = 2000
  batch_size: int = 64
  lr: float = 1e-3
  mc_samples: int = 1
  max_grad_norm: Optional[float] = None
  log_every: int = 100
  checkpoint_every: int = 0
  eval_chunk: int = 500
  probe_epochs: int = 100

  def __post_init__(self) -> None:
    for name in ("steps", "batch_size", "mc_samples", "log_every",
                 "eval_chunk"):
      if getattr(self, name) < 1:
        raise ConfigurationError(
            f"TrainConfig.{name} must be >= 1, got {getattr(self, name)}")
    if self.checkpoint_every < 0 or self.probe_epochs < 0:
      raise ConfigurationError(
          "checkpoint_every and probe_epochs must be >= 0")
    if self.lr <= 0:
      raise ConfigurationError(f"TrainConfig.lr must be > 0, got {self.lr}")

  @classmethod
  def config_parser(cls) -> ConfigParser[TrainConfig]:
    parser = ConfigParser("TrainConfig", cls)
    parser.add_argument("steps", type=int, default=2000)
    parser.add_argument("batch_size", type=int, default=64)
    parser.add_argument("lr", type=float, default=1e-3,
                        help="Fixed Adam step size.")
    parser.add_argument(
        "mc_samples",
        type=int,
        default=1,
        help="Reparameterized samples for the reconstruction term.")
    parser.add_argument("max_grad_norm", type=float,
                        help="Clip the global gradient norm to this value.")
    parser.add_argument("log_every", type=int, default=100)
    parser.add_argument(
        "checkpoint_every",
        type=int,
        default=0,
        help="Save a model checkpoint every this many steps, 0 disables.")
    parser.add_argument("eval_chunk", type=int, default=500,
                        help="Sequences per forward pass in evaluation.")
    parser.add_argument("probe_epochs", type=int, default=100,
                        help="Linear probe epochs, 0 skips the probe.")
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> TrainConfig:
    return cls.config_parser().parse(config_data, throw)

  def to_json(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class RunConfig:
  """A complete training run: seed, data, model, objective and schedule."""
  name: str = "run"
  seed: int = 0
  data: DataConfig = DataConfig()
  model: ModelConfig = ModelConfig()
  objective: ObjectiveCfg = ObjectiveCfg()
  train: TrainConfig = TrainConfig()

  @classmethod
  def config_parser(cls) -> ConfigParser[RunConfig]:
    parser = ConfigParser("RunConfig", cls)
    parser.add_argument("name", type=str, default="run")
    parser.add_argument("seed", type=int, default=0,
                        help="Seeds initialization, batches and noise.")
    parser.add_argument("data", type=DataConfig.from_config, default={})
    parser.add_argument("model", type=ModelConfig.from_config, default={})
    parser.add_argument("objective", type=ObjectiveCfg.from_config, default={})
    parser.add_argument("train", type=TrainConfig.from_config, default={})
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> RunConfig:
    return cls.config_parser().parse(config_data, throw)

  @classmethod
  def section_parsers(cls) -> List[ConfigParser]:
    return [
        cls.config_parser(),
        DataConfig.config_parser(),
        ModelConfig.config_parser(),
        ObjectiveCfg.config_parser(),
        TrainConfig.config_parser(),
    ]

  def to_json(self) -> Dict[str, Any]:
    return {
        "name": self.name,
        "seed": self.seed,
        "data": self.data.to_json(),
        "model": self.model.to_json(),
        "objective": self.objective.to_json(),
        "train": self.train.to_json(),
    }

  @property
  def config_hash(self) -> str:
    return helper.config_hash(self.to_json())


def list_presets(directory: pathlib.Path = PRESET_DIR) -> List[str]:
  return sorted(path.stem for path in directory.glob("*.hjson"))


def resolve_config_path(name_or_path: Union[str, pathlib.Path],
                        directory: pathlib.Path = PRESET_DIR) -> pathlib.Path:
  """An existing file path, or the name of a shipped preset."""
  path = pathlib.Path(name_or_path)
  if path.is_file():
    return path
  preset = directory / f"{name_or_path}.hjson"
  if preset.is_file():
    return preset
  raise ConfigurationError(
      f"No config file or preset named '{name_or_path}', presets are "
      f"{list_presets(directory)}")


def load_config_data(name_or_path: Union[str, pathlib.Path],
                     directory: pathlib.Path = PRESET_DIR) -> Dict[str, Any]:
  return load_hjson(resolve_config_path(name_or_path, directory))


def load_run_config(name_or_path: Union[str, pathlib.Path],
                    seed: Optional[int] = None) -> RunConfig:
  config = RunConfig.from_config(load_config_data(name_or_path))
  if seed is not None:
    config = dataclasses.replace(config, seed=seed)
  return config
