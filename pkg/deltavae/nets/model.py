# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Toy sequential VAE.

Encoder: a GRU stack over x producing raw posterior parameters per
timestep. anti_causal runs the stack on the time-reversed sequence and
reverses the states back, so timestep t sees x_t..x_n. non_causal
concatenates a forward and an anti-causal stack.

Decoder: p(x_t | x_<t, z) with a causal GRU stack whose input at t is
[x_{t-1}, z_t] (x_0 = 0), followed by a mean head and, for a learned
observation std, a std head.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import pathlib
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from deltavae import ar1_prior, helper
from deltavae.autodiff import Node, ops
from deltavae.config import ConfigParser
from deltavae.delta_constraints import (IndependentDeltaConstraint,
                                        constrain_independent_graph,
                                        temporal_posterior_graph)
from deltavae.exception import ConfigurationError, DomainError
from deltavae.gauss_kl import GaussianSeqPosterior, LinearGaussianPrior
from deltavae.nets import layers

FORMAT_NAME: str = "deltavae-model"
FORMAT_VERSION: int = 1
OBS_STD_FLOOR: float = 1e-2
LEARNED: str = "learned"

ObsStd = Union[float, str]


class EncoderMode(helper.StrEnumWithHelp):
  ANTI_CAUSAL = ("anti_causal",
                 "Posterior parameters at t depend on x_t, ..., x_n only.")
  NON_CAUSAL = ("non_causal",
                "Bidirectional: posterior parameters depend on all of x.")


class ConstraintMode(helper.StrEnumWithHelp):
  TEMPORAL_DELTA = ("temporal_delta",
                    "Mean-field posterior against a correlated AR(1) prior.")
  INDEPENDENT_DELTA = (
      "independent_delta",
      "Per-cell constrained posterior against a standard normal prior.")
  NONE = ("none", "Unconstrained posterior against a standard normal prior.")


def parse_obs_std(value: Any) -> ObsStd:
  if value == LEARNED:
    return LEARNED
  if isinstance(value, bool) or not isinstance(value, (int, float)):
    raise ConfigurationError(
        f"obs_std must be a positive number or '{LEARNED}', got {value!r}")
  if not value > 0:
    raise ConfigurationError(f"obs_std must be > 0, got {value}")
  return float(value)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
  """Encoder, decoder and prior of the toy sequential VAE."""
  latent_dim: int = 2
  encoder_mode: EncoderMode = EncoderMode.ANTI_CAUSAL
  encoder_hidden: int = 32
  encoder_layers: int = 1
  decoder_hidden: int = 32
  decoder_layers: int = 1
  constraint: ConstraintMode = ConstraintMode.NONE
  alpha_range: Optional[Tuple[float, ...]] = None
  target_rate: Optional[float] = None
  independent_delta: float = 0.0
  obs_std: ObsStd = 0.1

  def __post_init__(self) -> None:
    for name in ("latent_dim", "encoder_hidden", "encoder_layers",
                 "decoder_hidden", "decoder_layers"):
      if getattr(self, name) < 1:
        raise ConfigurationError(
            f"ModelConfig.{name} must be >= 1, got {getattr(self, name)}")
    uses_alpha = self.alpha_range is not None or self.target_rate is not None
    if self.constraint == ConstraintMode.TEMPORAL_DELTA:
      if not uses_alpha:
        raise ConfigurationError(
            "temporal_delta needs either alpha_range or target_rate")
    elif uses_alpha:
      raise ConfigurationError(
          f"constraint={self.constraint} uses a standard normal prior, "
          "alpha_range and target_rate do not apply")
    if self.independent_delta < 0:
      raise ConfigurationError(
          f"independent_delta must be >= 0, got {self.independent_delta}")
    object.__setattr__(self, "obs_std", parse_obs_std(self.obs_std))

  @classmethod
  def config_parser(cls) -> ConfigParser[ModelConfig]:
    parser = ConfigParser("ModelConfig", cls)
    parser.add_argument("latent_dim", type=int, default=2)
    parser.add_argument(
        "encoder_mode", type=EncoderMode, default=EncoderMode.ANTI_CAUSAL)
    parser.add_argument("encoder_hidden", type=int, default=32)
    parser.add_argument("encoder_layers", type=int, default=1)
    parser.add_argument(
        "decoder_hidden",
        type=int,
        default=32,
        help="Decoder GRU width, the main decoder capacity knob.")
    parser.add_argument("decoder_layers", type=int, default=1)
    parser.add_argument(
        "constraint",
        type=ConstraintMode,
        default=ConstraintMode.NONE)
    parser.add_argument(
        "alpha_range",
        type=float,
        is_list=True,
        help="[alpha_min, alpha_max], linearly spaced over latent dimensions.")
    parser.add_argument(
        "target_rate",
        type=float,
        help="Committed rate in nats per sequence, solved for equal alphas.")
    parser.add_argument(
        "independent_delta",
        type=float,
        default=0.0,
        help="Committed KL per timestep and dimension, in nats.")
    parser.add_argument(
        "obs_std",
        type=parse_obs_std,
        default=0.1,
        help=f"Fixed observation std, or '{LEARNED}' for a per-timestep "
        "std predicted by the decoder.")
    return parser

  @classmethod
  def from_config(cls, config_data: Optional[Dict[str, Any]],
                  throw: bool = False) -> ModelConfig:
    return cls.config_parser().parse(config_data, throw)

  def to_json(self) -> Dict[str, Any]:
    data = dataclasses.asdict(self)
    data["encoder_mode"] = str(self.encoder_mode)
    data["constraint"] = str(self.constraint)
    if self.alpha_range is not None:
      data["alpha_range"] = list(self.alpha_range)
    return data

  @property
  def learned_obs_std(self) -> bool:
    return self.obs_std == LEARNED


def make_model_prior(config: ModelConfig, n: int) -> ar1_prior.Ar1Prior:
  alphas = ar1_prior.alphas_for_config(config.latent_dim, n, config.alpha_range,
                                       config.target_rate)
  return ar1_prior.make_prior(alphas)


class ToyModel:

  def __init__(self, config: ModelConfig, obs_dim: int, n: int,
               params: Dict[str, np.ndarray]) -> None:
    self.config = config
    self.obs_dim = obs_dim
    self.n = n
    self.params = params
    self.prior = make_model_prior(config, n)
    self.constraint: Optional[IndependentDeltaConstraint] = None
    if config.constraint == ConstraintMode.INDEPENDENT_DELTA:
      self.constraint = IndependentDeltaConstraint.for_delta(
          config.independent_delta)

  @property
  def latent_dim(self) -> int:
    return self.config.latent_dim

  @property
  def parameter_count(self) -> int:
    return layers.count_parameters(self.params)

  @property
  def committed_rate(self) -> float:
    """Structural lower bound on the rate of every sequence, in nats."""
    mode = self.config.constraint
    if mode == ConstraintMode.TEMPORAL_DELTA:
      if self.n < 2:
        return 0.0
      return ar1_prior.committed_rate(self.prior, self.n)
    if mode == ConstraintMode.INDEPENDENT_DELTA:
      assert self.constraint
      return self.constraint.delta * self.n * self.latent_dim
    return 0.0

  def leaves(self) -> Dict[str, Node]:
    return {name: Node.leaf(value, name) for name, value in self.params.items()}

  def constants(self) -> Dict[str, Node]:
    return {name: Node.constant(value) for name, value in self.params.items()}


def init_model(config: ModelConfig, obs_dim: int, n: int, seed: int) -> ToyModel:
  if obs_dim < 1 or n < 1:
    raise DomainError(f"Need obs_dim >= 1 and n >= 1, got {obs_dim}, {n}")
  rng = np.random.default_rng(seed)
  params: Dict[str, np.ndarray] = {}
  directions = ["enc_bwd"]
  if config.encoder_mode == EncoderMode.NON_CAUSAL:
    directions.append("enc_fwd")
  for direction in directions:
    in_dim = obs_dim
    for layer in range(config.encoder_layers):
      params.update(
          layers.init_gru(rng, f"{direction}{layer}", in_dim,
                          config.encoder_hidden))
      in_dim = config.encoder_hidden
  params.update(
      layers.init_linear(rng, "enc_head",
                         config.encoder_hidden * len(directions),
                         2 * config.latent_dim))
  in_dim = obs_dim + config.latent_dim
  for layer in range(config.decoder_layers):
    params.update(
        layers.init_gru(rng, f"dec{layer}", in_dim, config.decoder_hidden))
    in_dim = config.decoder_hidden
  params.update(
      layers.init_linear(rng, "dec_mean", config.decoder_hidden, obs_dim))
  if config.learned_obs_std:
    params.update(
        layers.init_linear(rng, "dec_std", config.decoder_hidden, obs_dim))
  model = ToyModel(config, obs_dim, n, params)
  logging.debug("Initialized model with %d parameters", model.parameter_count)
  return model


def _as_batch(x: Any) -> Tuple[np.ndarray, bool]:
  array = np.asarray(x, dtype=np.float64)
  if array.ndim == 2:
    return array[None], True
  if array.ndim != 3:
    raise ConfigurationError(
        f"Expected (n, obs_dim) or (batch, n, obs_dim), got {array.shape}")
  return array, False


def encode_graph(model: ToyModel, params: Dict[str, Node],
                 x: Node) -> Tuple[Node, Node]:
  """Posterior (means, stds) nodes of shape (batch, n, d)."""
  config = model.config
  features = layers.reversed_gru_stack(params, "enc_bwd", x,
                                       config.encoder_layers)
  if config.encoder_mode == EncoderMode.NON_CAUSAL:
    forward = layers.gru_stack(params, "enc_fwd", x, config.encoder_layers)
    features = ops.concat([features, forward])
  raw = layers.linear(params, "enc_head", features)
  d = config.latent_dim
  raw_mu, raw_sigma = raw[..., :d], raw[..., d:]
  if model.constraint is not None:
    return constrain_independent_graph(raw_mu, raw_sigma, model.constraint)
  return temporal_posterior_graph(raw_mu, raw_sigma)


def encode_arrays(model: ToyModel, x: Any) -> Tuple[np.ndarray, np.ndarray]:
  batch, _ = _as_batch(x)
  means, stds = encode_graph(model, model.constants(), Node.constant(batch))
  return means.value, stds.value


def encode(model: ToyModel,
           x: Any,
           mode: Optional[EncoderMode] = None) -> GaussianSeqPosterior:
  """Posterior of a single (n, obs_dim) sequence."""
  if mode is not None and mode != model.config.encoder_mode:
    raise ConfigurationError(
        f"Model was built with encoder_mode={model.config.encoder_mode}, "
        f"got {mode}")
  batch, single = _as_batch(x)
  if not single:
    raise ConfigurationError(
        f"encode() takes one (n, obs_dim) sequence, got {batch.shape}")
  means, stds = encode_arrays(model, batch)
  return GaussianSeqPosterior(means[0], stds[0])


def reparameterize_graph(means: Node, stds: Node, noise: np.ndarray) -> Node:
  return means + stds * noise


def reparameterize(q: GaussianSeqPosterior, noise: np.ndarray) -> np.ndarray:
  noise = np.asarray(noise, dtype=np.float64)
  if noise.shape != q.shape:
    raise ConfigurationError(
        f"Noise shape {noise.shape} does not match posterior {q.shape}")
  return q.means + q.stds * noise


def _obs_std_node(model: ToyModel, params: Dict[str, Node],
                  hidden: Node) -> Node:
  if model.config.learned_obs_std:
    return ops.softplus(layers.linear(params, "dec_std", hidden)) + OBS_STD_FLOOR
  return Node.constant(np.full(model.obs_dim, model.config.obs_std))


def decode_graph(model: ToyModel, params: Dict[str, Node], x_prev: Node,
                 z: Node) -> Tuple[Node, Node]:
  """Likelihood (mean, std) of x_t given x_prev_<=t = x_<t and z_<=t."""
  hidden = layers.gru_stack(params, "dec", ops.concat([x_prev, z]),
                            model.config.decoder_layers)
  mean = layers.linear(params, "dec_mean", hidden)
  return mean, _obs_std_node(model, params, hidden)


def shift_observations(x: Node) -> Node:
  return ops.shift_time(x)


def decode(model: ToyModel, x_prev: Any,
           z: Any) -> Tuple[np.ndarray, np.ndarray]:
  x_batch, single = _as_batch(x_prev)
  z_batch, _ = _as_batch(z)
  if x_batch.shape[:2] != z_batch.shape[:2]:
    raise ConfigurationError(
        f"x_prev {x_batch.shape} and z {z_batch.shape} differ in batch or n")
  mean, std = decode_graph(model, model.constants(), Node.constant(x_batch),
                           Node.constant(z_batch))
  mean_value = mean.value
  std_value = np.broadcast_to(std.value, mean_value.shape).copy()
  if single:
    return mean_value[0], std_value[0]
  return mean_value, std_value


def reconstruction_log_prob(model: ToyModel, params: Dict[str, Node], x: Node,
                            z: Node) -> Node:
  """log p(x | z) per sequence, shape (batch,)."""
  mean, std = decode_graph(model, params, shift_observations(x), z)
  return ops.sum(ops.gaussian_log_prob(x, mean, std), axis=(-2, -1))


def sample_from_prior(model: ToyModel,
                      prior: LinearGaussianPrior,
                      count: int,
                      seed: int,
                      mean_only: bool = False) -> Tuple[np.ndarray, np.ndarray]:
  """Ancestral samples: z from the prior, then x_t step by step.

  Returns (z, x) of shapes (count, n, d) and (count, n, obs_dim).
  """
  if count < 1:
    raise DomainError(f"Need count >= 1, got {count}")
  rng = np.random.default_rng(seed)
  z = ar1_prior.sample_prior(prior, model.n, int(rng.integers(2**31)), count)
  params = model.constants()
  config = model.config
  states = [
      layers.initial_state(count, config.decoder_hidden)
      for _ in range(config.decoder_layers)
  ]
  x_prev = np.zeros((count, model.obs_dim))
  outputs = []
  for t in range(model.n):
    layer_input = Node.constant(np.concatenate([x_prev, z[:, t]], axis=-1))
    for layer in range(config.decoder_layers):
      prefix = f"dec{layer}"
      projection = layers.linear(params, prefix, layer_input)
      states[layer] = layers.gru_step(params, prefix, projection, states[layer],
                                      config.decoder_hidden)
      layer_input = states[layer]
    mean = layers.linear(params, "dec_mean", layer_input).value
    if mean_only:
      x_t = mean
    else:
      std = np.broadcast_to(
          _obs_std_node(model, params, layer_input).value, mean.shape)
      x_t = mean + std * rng.standard_normal(mean.shape)
    outputs.append(x_t)
    x_prev = x_t
  return z, np.stack(outputs, axis=1)


def save_model(model: ToyModel, path: pathlib.Path,
               extra: Optional[Dict[str, Any]] = None) -> None:
  data: Dict[str, Any] = {
      "format": FORMAT_NAME,
      "version": FORMAT_VERSION,
      "config": model.config.to_json(),
      "obs_dim": model.obs_dim,
      "n": model.n,
      "params": {
          name: {
              "shape": list(value.shape),
              "data": value.reshape(-1).tolist()
          } for name, value in sorted(model.params.items())
      },
  }
  if extra:
    data.update(extra)
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open("w", encoding="utf-8") as f:
    json.dump(data, f)


def load_model(path: pathlib.Path) -> ToyModel:
  with path.open(encoding="utf-8") as f:
    data = json.load(f)
  if data.get("format") != FORMAT_NAME:
    raise ConfigurationError(f"{path}: not a {FORMAT_NAME} file")
  if data.get("version") != FORMAT_VERSION:
    raise ConfigurationError(
        f"{path}: unsupported model version {data.get('version')}")
  config = ModelConfig.from_config(dict(data["config"]))
  params = {
      name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
      for name, entry in data["params"].items()
  }
  return ToyModel(config, int(data["obs_dim"]), int(data["n"]), params)


def load_model_extra(path: pathlib.Path, key: str) -> Optional[Any]:
  with path.open(encoding="utf-8") as f:
    return json.load(f).get(key)

