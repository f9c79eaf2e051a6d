# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Synthetic regime-switching sequences.

Each sequence belongs to one of K regimes. Within regime k a latent
trajectory u follows a stationary AR(1) process with correlation rho_k and
unit marginal variance, and observations are
  x_t = C_k u_t + m_k + emission_std * eps_t.
The regime is a global property of the whole sequence: a latent-free
autoregressive decoder can predict x_t well from x_{t-1}, but identifying
the regime needs information about the whole sequence.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import pathlib
from typing import Any, Dict, Optional, Tuple

import numpy as np

from deltavae import helper
from deltavae.config import ConfigParser
from deltavae.exception import ConfigurationError, DomainError

FORMAT_NAME: str = "deltavae-dataset"
FORMAT_VERSION: int = 1
_ARRAYS: Tuple[str, ...] = ("train_x", "train_y", "test_x", "test_y")


@dataclasses.dataclass(frozen=True, eq=False)
class RegimeParams:
  rho: float
  emission: np.ndarray
  offset: np.ndarray

  def to_json(self) -> Dict[str, Any]:
    return {
        "rho": self.rho,
        "emission": self.emission.tolist(),
        "offset": self.offset.tolist(),
    }

  @classmethod
  def from_json(cls, data: Dict[str, Any]) -> RegimeParams:
    return cls(
        float(data["rho"]), np.array(data["emission"], dtype=np.float64),
        np.array(data["offset"], dtype=np.float64))


@dataclasses.dataclass(frozen=True, eq=False)
class GeneratorParams:
  k_regimes: int
  n: int
  obs_dim: int
  latent_dim: int
  emission_std: float
  n_train: int
  n_test: int
  seed: int
  regimes: Tuple[RegimeParams, ...]

  def to_json(self) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        field.name: getattr(self, field.name)
        for field in dataclasses.fields(self)
        if field.name != "regimes"
    }
    data["regimes"] = [regime.to_json() for regime in self.regimes]
    return data

  @classmethod
  def from_json(cls, data: Dict[str, Any]) -> GeneratorParams:
    kwargs = dict(data)
    kwargs["regimes"] = tuple(
        RegimeParams.from_json(regime) for regime in data["regimes"])
    return cls(**kwargs)


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
  train_x: np.ndarray
  train_y: np.ndarray
  test_x: np.ndarray
  test_y: np.ndarray
  generator: GeneratorParams

  def split(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
    if name == "train":
      return self.train_x, self.train_y
    if name == "test":
      return self.test_x, self.test_y
    raise ConfigurationError(f"Unknown split '{name}', use 'train' or 'test'")

  @property
  def header(self) -> Dict[str, Any]:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "generator": self.generator.to_json(),
        "shapes": {name: list(getattr(self, name).shape) for name in _ARRAYS},
    }


@dataclasses.dataclass(frozen=True)
class DataConfig:
  """Synthetic regime dataset, or a dataset file written by save_dataset."""
  k_regimes: int = 4
  n: int = 24
  obs_dim: int = 4
  latent_dim: int = 2
  emission_std: float = 0.1
  n_train: int = 8000
  n_test: int = 2000
  seed: int = 0
  path: Optional[pathlib.Path] = None

  @classmethod
  def config_parser(cls) -> ConfigParser[DataConfig]:
    parser = ConfigParser("DataConfig", cls)
    parser.add_argument("k_regimes", type=int, default=4,
                        help="Number of regimes, the probe's class count.")
    parser.add_argument("n", type=int, default=24, help="Timesteps.")
    parser.add_argument("obs_dim", type=int, default=4)
    parser.add_argument("latent_dim", type=int, default=2,
                        help="Dimension of the generator's hidden trajectory.")
    parser.add_argument("emission_std", type=float, default=0.1)
    parser.add_argument("n_train", type=int, default=8000)
    parser.add_argument("n_test", type=int, default=2000)
    parser.add_argument("seed", type=int, default=0,
                        help="Generator seed, independent of the run seed.")
    parser.add_argument(
        "path", type=pathlib.Path,
        help="Load this dataset file instead of generating one.")
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> DataConfig:
    return cls.config_parser().parse(config_data, throw)

  def to_json(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)

  def load(self) -> Dataset:
    if self.path is not None:
      return load_dataset(self.path)
    return gen_synthetic(self.k_regimes, self.n, self.obs_dim, self.n_train,
                         self.n_test, self.seed, self.latent_dim,
                         self.emission_std)


def _make_regimes(rng: np.random.Generator, k_regimes: int, obs_dim: int,
                  latent_dim: int) -> Tuple[RegimeParams, ...]:
  rhos = np.linspace(0.6, 0.95, k_regimes)
  regimes = []
  for rho in rhos:
    emission = 0.5 * rng.standard_normal((obs_dim, latent_dim))
    offset = 0.5 * rng.standard_normal(obs_dim)
    regimes.append(RegimeParams(float(rho), emission, offset))
  return tuple(regimes)


def _balanced_labels(rng: np.random.Generator, count: int,
                     k_regimes: int) -> np.ndarray:
  return rng.permutation(np.arange(count) % k_regimes)


def _sample_sequences(rng: np.random.Generator, labels: np.ndarray,
                      generator: GeneratorParams) -> np.ndarray:
  count = labels.size
  rhos = np.array([generator.regimes[k].rho for k in labels])[:, None]
  noise_stds = np.sqrt(1.0 - rhos * rhos)
  eps = rng.standard_normal((count, generator.n, generator.latent_dim))
  latents = np.empty_like(eps)
  latents[:, 0] = eps[:, 0]
  for t in range(1, generator.n):
    latents[:, t] = rhos * latents[:, t - 1] + noise_stds * eps[:, t]
  emissions = np.stack([generator.regimes[k].emission for k in labels])
  offsets = np.stack([generator.regimes[k].offset for k in labels])
  x = np.einsum("bod,btd->bto", emissions, latents) + offsets[:, None, :]
  noise = rng.standard_normal(x.shape)
  return x + generator.emission_std * noise


def gen_synthetic(k_regimes: int,
                  n: int,
                  obs_dim: int,
                  n_train: int,
                  n_test: int,
                  seed: int,
                  latent_dim: int = 2,
                  emission_std: float = 0.1) -> Dataset:
  if k_regimes < 2:
    raise DomainError(f"Need at least 2 regimes, got k_regimes={k_regimes}")
  if min(n, obs_dim, latent_dim, n_train, n_test) < 1:
    raise DomainError(
        f"Sizes must be positive: n={n}, obs_dim={obs_dim}, "
        f"latent_dim={latent_dim}, n_train={n_train}, n_test={n_test}")
  if emission_std <= 0:
    raise DomainError(f"emission_std must be > 0, got {emission_std}")
  rng = np.random.default_rng(seed)
  regimes = _make_regimes(rng, k_regimes, obs_dim, latent_dim)
  generator = GeneratorParams(k_regimes, n, obs_dim, latent_dim,
                              float(emission_std), n_train, n_test, seed,
                              regimes)
  train_y = _balanced_labels(rng, n_train, k_regimes)
  test_y = _balanced_labels(rng, n_test, k_regimes)
  train_x = _sample_sequences(rng, train_y, generator)
  test_x = _sample_sequences(rng, test_y, generator)
  logging.debug("Generated %d/%d sequences of shape (%d, %d), %d regimes",
                n_train, n_test, n, obs_dim, k_regimes)
  return Dataset(train_x, train_y, test_x, test_y, generator)


def _regime_log_likelihoods(x: np.ndarray,
                            generator: GeneratorParams) -> np.ndarray:
  count = x.shape[0]
  flat = x.reshape(count, -1)
  lags = np.abs(np.subtract.outer(np.arange(generator.n),
                                  np.arange(generator.n)))
  result = np.empty((count, generator.k_regimes))
  for k, regime in enumerate(generator.regimes):
    covariance = np.kron(regime.rho**lags, regime.emission @ regime.emission.T)
    covariance += generator.emission_std**2 * np.eye(covariance.shape[0])
    cholesky = np.linalg.cholesky(covariance)
    diff = flat - np.tile(regime.offset, generator.n)
    solved = np.linalg.solve(cholesky, diff.T)
    log_det = 2.0 * np.sum(np.log(np.diag(cholesky)))
    result[:, k] = -0.5 * (np.sum(solved * solved, axis=0) + log_det +
                           flat.shape[1] * np.log(2.0 * np.pi))
  return result


def bayes_classify(dataset: Dataset, split: str = "test") -> np.ndarray:
  """Posterior over regimes (N, K) under a uniform regime prior, computed
  from the exact Gaussian likelihood of each whole sequence."""
  x, _ = dataset.split(split)
  log_likelihoods = _regime_log_likelihoods(x, dataset.generator)
  log_norm = np.logaddexp.reduce(log_likelihoods, axis=1, keepdims=True)
  return np.exp(log_likelihoods - log_norm)


def bayes_accuracy(dataset: Dataset, split: str = "test") -> float:
  _, labels = dataset.split(split)
  predictions = np.argmax(bayes_classify(dataset, split), axis=1)
  return float(np.mean(predictions == labels))


def save_dataset(dataset: Dataset, path: pathlib.Path) -> None:
  path.parent.mkdir(parents=True, exist_ok=True)
  arrays = {name: getattr(dataset, name) for name in _ARRAYS}
  with path.open("wb") as f:
    np.savez(f, header=np.array(helper.to_json_str(dataset.header)), **arrays)


def load_dataset(path: pathlib.Path) -> Dataset:
  with path.open("rb") as f:
    with np.load(f, allow_pickle=False) as archive:
      try:
        header = json.loads(str(archive["header"]))
        arrays = {name: np.array(archive[name]) for name in _ARRAYS}
      except KeyError as e:
        raise ConfigurationError(f"{path}: missing dataset entry {e}") from e
  if header.get("format") != FORMAT_NAME:
    raise ConfigurationError(f"{path}: not a {FORMAT_NAME} file")
  if header.get("version") != FORMAT_VERSION:
    raise ConfigurationError(
        f"{path}: unsupported dataset version {header.get('version')}")
  return Dataset(generator=GeneratorParams.from_json(header["generator"]),
                 **arrays)


def dataset_hash(dataset: Dataset) -> str:
  digest = hashlib.sha256()
  digest.update(
      json.dumps(dataset.header, sort_keys=True).encode("utf-8"))
  for name in _ARRAYS:
    array = np.ascontiguousarray(getattr(dataset, name))
    digest.update(name.encode("utf-8"))
    digest.update(str(array.dtype).encode("utf-8"))
    digest.update(array.tobytes())
  return digest.hexdigest()
