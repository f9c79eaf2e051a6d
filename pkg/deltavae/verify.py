# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Oracle and property suites behind `dvae verify`.

kl     closed form vs Monte-Carlo, closed form vs decomposition,
       closed form vs committed rate.
bound  committed rate vs numeric minimization, solver round trip,
       independent delta guarantee.
grad   backward() vs central differences on the full ELBO graph.
masks  exact zero gradients for the encoder and decoder causality masks.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from deltavae import ar1_prior, helper
from deltavae.autodiff import Node, backward, grad_check, ops
from deltavae.delta_constraints import (IndependentDeltaConstraint,
                                        constrain_independent)
from deltavae.gauss_kl import (GaussianSeqPosterior, kl_seq_closed_form,
                               kl_seq_decomposed, kl_univariate)
from deltavae.mc_oracle import mc_kl_estimate, numeric_min_kl
from deltavae.nets.model import (ConstraintMode, EncoderMode, ModelConfig,
                                 ToyModel, decode_graph, encode_graph,
                                 init_model, shift_observations)
from deltavae.training.objective import ObjectiveCfg, elbo

MC_STDERRS: float = 4.0
PATH_RTOL: float = 1e-10
BOUND_ATOL: float = 1e-6
SIGMA_ATOL: float = 1e-4
ROUND_TRIP_ATOL: float = 1e-6
GUARANTEE_ATOL: float = 1e-9
GRAD_RTOL: float = 1e-5

BOUND_ALPHAS = (0.1, 0.5, 0.9)
BOUND_NS = (3, 8, 32)
BOUND_DIMS = (1, 3)
GUARANTEE_DELTAS = (0.01, 0.1, 1.0)

# Fuzz domain of the kl suite.
FUZZ_MIN_N: int = 2
FUZZ_MAX_N: int = 16
FUZZ_MAX_D: int = 4
FUZZ_MAX_ALPHA: float = 0.99
FUZZ_MAX_ABS_MEAN: float = 3.0
FUZZ_MIN_STD: float = 0.1
FUZZ_MAX_STD: float = 3.0


class Suite(helper.StrEnumWithHelp):
  KL = ("kl", "Closed-form KL against Monte-Carlo, the decomposition and "
        "the committed rate.")
  BOUND = ("bound",
           "Committed rate against numeric minimization, solver round trip "
           "and the independent delta guarantee.")
  GRAD = ("grad", "Autodiff gradients of the ELBO against central differences.")
  MASKS = ("masks", "Exact causality masks of encoder and decoder.")


@dataclasses.dataclass(frozen=True)
class CheckResult:
  name: str
  passed: bool
  details: Dict[str, Any]

  def to_json(self) -> Dict[str, Any]:
    return {"name": self.name, "passed": self.passed, **self.details}


@dataclasses.dataclass
class SuiteReport:
  suite: Suite
  seed: int
  checks: List[CheckResult] = dataclasses.field(default_factory=list)
  seconds: float = 0.0

  @property
  def passed(self) -> bool:
    return all(check.passed for check in self.checks)

  def to_json(self) -> Dict[str, Any]:
    return {
        "suite": str(self.suite),
        "seed": self.seed,
        "passed": self.passed,
        "seconds": self.seconds,
        "checks": [check.to_json() for check in self.checks],
    }


def _case_seed(*keys: int) -> int:
  return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def _fuzz_case(rng: np.random.Generator) -> Tuple[GaussianSeqPosterior,
                                                  ar1_prior.Ar1Prior]:
  n = int(rng.integers(FUZZ_MIN_N, FUZZ_MAX_N + 1))
  d = int(rng.integers(1, FUZZ_MAX_D + 1))
  prior = ar1_prior.make_prior(rng.uniform(0.0, FUZZ_MAX_ALPHA, d))
  q = GaussianSeqPosterior(
      rng.uniform(-FUZZ_MAX_ABS_MEAN, FUZZ_MAX_ABS_MEAN, (n, d)),
      rng.uniform(FUZZ_MIN_STD, FUZZ_MAX_STD, (n, d)))
  return q, prior


def check_mc_agreement(seed: int, cases: int = 200,
                       n_samples: int = 100_000) -> CheckResult:
  """A case fails only if both the first and the rerun estimate disagree."""
  rng = np.random.default_rng([seed, 0])
  failures: List[Dict[str, Any]] = []
  reruns = 0
  worst = 0.0
  for case in range(cases):
    q, prior = _fuzz_case(rng)
    closed = kl_seq_closed_form(q, prior).total
    z_score = math.inf
    for attempt in range(2):
      mean, stderr = mc_kl_estimate(q, prior, n_samples,
                                    _case_seed(seed, case, attempt))
      z_score = abs(mean - closed) / max(stderr, 1e-300)
      if z_score <= MC_STDERRS:
        break
      reruns += 1
      logging.debug("kl case %d attempt %d: closed=%.6g mc=%.6g z=%.2f", case,
                    attempt, closed, mean, z_score)
    worst = max(worst, min(z_score, 1e9))
    if z_score > MC_STDERRS:
      failures.append({"case": case, "closed_form": closed, "z": z_score})
  return CheckResult(
      "mc_agreement", not failures, {
          "cases": cases,
          "n_samples": n_samples,
          "reruns": reruns,
          "worst_z": worst,
          "failures": failures,
      })


def check_path_equivalence(seed: int, cases: int = 10_000) -> CheckResult:
  rng = np.random.default_rng([seed, 1])
  worst = 0.0
  for _ in range(cases):
    q, prior = _fuzz_case(rng)
    closed = kl_seq_closed_form(q, prior).total
    decomposed = kl_seq_decomposed(q, prior)
    worst = max(worst, abs(closed - decomposed) / abs(closed))
  return CheckResult("path_equivalence", worst <= PATH_RTOL, {
      "cases": cases,
      "max_relative_error": worst,
  })


def check_bound_domination(seed: int, cases: int = 10_000) -> CheckResult:
  """No fuzzed posterior goes below the committed rate of its prior."""
  rng = np.random.default_rng([seed, 7])
  worst = math.inf
  for _ in range(cases):
    q, prior = _fuzz_case(rng)
    margin = (kl_seq_closed_form(q, prior).total -
              ar1_prior.committed_rate(prior, q.n))
    worst = min(worst, margin)
  return CheckResult("bound_domination", worst >= -GUARANTEE_ATOL, {
      "cases": cases,
      "min_kl_minus_committed_rate": worst,
  })


def optimal_stds(alpha: float, n: int) -> np.ndarray:
  """Std of the KL-optimal mean-field posterior for one AR(1) dimension."""
  a2 = alpha * alpha
  variances = np.full(n, (1.0 - a2) / (1.0 + a2))
  variances[[0, -1]] = 1.0 - a2
  return np.sqrt(variances)


def check_bound_tightness(seed: int) -> CheckResult:
  rows = []
  for alpha in BOUND_ALPHAS:
    for n in BOUND_NS:
      for d in BOUND_DIMS:
        prior = ar1_prior.make_prior([alpha] * d)
        committed = ar1_prior.committed_rate(prior, n)
        min_kl, argmin = numeric_min_kl(prior, n, seed=seed)
        expected = np.repeat(optimal_stds(alpha, n)[:, None], d, axis=1)
        rows.append({
            "alpha": alpha,
            "n": n,
            "d": d,
            "committed_rate": committed,
            "numeric_min_kl": min_kl,
            "rate_error": abs(committed - min_kl),
            "sigma_error": float(np.max(np.abs(argmin.stds - expected))),
            "mu_error": float(np.max(np.abs(argmin.means))),
        })
  passed = all(row["rate_error"] <= BOUND_ATOL and
               row["sigma_error"] <= SIGMA_ATOL and
               row["mu_error"] <= SIGMA_ATOL for row in rows)
  return CheckResult("bound_tightness", passed, {"grid": rows})


def check_solver_round_trip() -> CheckResult:
  worst = 0.0
  for alpha in BOUND_ALPHAS:
    for n in BOUND_NS:
      for d in BOUND_DIMS:
        prior = ar1_prior.make_prior([alpha] * d)
        solved = ar1_prior.solve_alpha_for_rate(
            ar1_prior.committed_rate(prior, n), n, d)
        worst = max(worst, float(np.max(np.abs(solved - alpha))))
  return CheckResult("solver_round_trip", worst <= ROUND_TRIP_ATOL,
                     {"max_alpha_error": worst})


def check_independent_guarantee(seed: int, cases: int = 10_000) -> CheckResult:
  rng = np.random.default_rng([seed, 2])
  margins = {}
  for delta in GUARANTEE_DELTAS:
    constraint = IndependentDeltaConstraint.for_delta(delta)
    raw_mu = rng.normal(0.0, 3.0, cases)
    raw_sigma = rng.normal(0.0, 3.0, cases)
    mu, sigma = constrain_independent(raw_mu, raw_sigma, constraint)
    kl = kl_univariate(mu, sigma, 0.0, 1.0)
    margins[str(delta)] = float(np.min(kl) - delta)
  passed = all(margin >= -GUARANTEE_ATOL for margin in margins.values())
  return CheckResult("independent_delta_guarantee", passed, {
      "cases_per_delta": cases,
      "min_kl_minus_delta": margins,
  })


GRAD_MODELS = {
    "temporal_anti_causal":
        ModelConfig(
            latent_dim=2,
            encoder_hidden=5,
            decoder_hidden=5,
            constraint=ConstraintMode.TEMPORAL_DELTA,
            alpha_range=(0.3, 0.8),
            obs_std="learned"),
    "independent_non_causal":
        ModelConfig(
            latent_dim=2,
            encoder_mode=EncoderMode.NON_CAUSAL,
            encoder_hidden=5,
            decoder_hidden=5,
            constraint=ConstraintMode.INDEPENDENT_DELTA,
            independent_delta=0.05),
}


def check_elbo_gradients(seed: int, n: int = 6,
                         max_entries: int = 24) -> CheckResult:
  errors = {}
  for name, config in GRAD_MODELS.items():
    model = init_model(config, obs_dim=2, n=n, seed=seed)
    batch = np.random.default_rng([seed, 3]).normal(size=(3, n, 2))

    def loss(params: Dict[str, Node], model: ToyModel = model,
             batch: np.ndarray = batch) -> Node:
      return elbo(model, batch, ObjectiveCfg(), 2, seed=[seed, 4],
                  params=params).loss

    errors[name] = grad_check(
        loss, model.params, h=1e-5, abs_floor=1e-6, max_entries=max_entries,
        seed=seed)
  passed = all(error <= GRAD_RTOL for error in errors.values())
  return CheckResult("elbo_gradients", passed, {"max_relative_error": errors})


def _input_gradient(output: Callable[[Node], Node], x: np.ndarray) -> np.ndarray:
  x_leaf = Node.leaf(x, "x")
  grads = backward(output(x_leaf))
  return grads.get(x_leaf, np.zeros_like(x))


def check_encoder_mask(seed: int, n: int = 6) -> CheckResult:
  """Posterior parameters at t must not depend on x_<t."""
  leaks = {}
  sees_future = True
  for mode in EncoderMode:
    config = ModelConfig(latent_dim=2, encoder_mode=mode, encoder_hidden=4)
    model = init_model(config, obs_dim=3, n=n, seed=seed)
    x = np.random.default_rng([seed, 5]).normal(size=(1, n, 3))
    params = model.constants()
    past_gradient = 0.0
    for t in range(n):

      def output(x_leaf: Node, t: int = t) -> Node:
        means, stds = encode_graph(model, params, x_leaf)
        return ops.sum(means[:, t]) + ops.sum(stds[:, t])

      grad = _input_gradient(output, x)
      past_gradient += float(np.abs(grad[:, :t]).sum())
      if mode == EncoderMode.ANTI_CAUSAL:
        sees_future &= bool(np.any(grad[:, t:] != 0))
    leaks[str(mode)] = past_gradient
  # Negative control: the non-causal encoder sees the past.
  passed = (leaks[str(EncoderMode.ANTI_CAUSAL)] == 0.0 and
            leaks[str(EncoderMode.NON_CAUSAL)] > 0.0 and sees_future)
  return CheckResult("encoder_anti_causal", passed, {
      "past_gradient_abs_sum": leaks,
      "sees_current_and_future": sees_future,
  })


def check_decoder_mask(seed: int, n: int = 6) -> CheckResult:
  """The likelihood of x_t must not depend on x_>=t through x_prev."""
  config = ModelConfig(latent_dim=2, decoder_hidden=4, obs_std="learned")
  model = init_model(config, obs_dim=3, n=n, seed=seed)
  rng = np.random.default_rng([seed, 6])
  x = rng.normal(size=(1, n, 3))
  z = Node.constant(rng.normal(size=(1, n, 2)))
  params = model.constants()
  leak = 0.0
  sees_past = True
  for t in range(n):

    def output(x_leaf: Node, t: int = t) -> Node:
      mean, std = decode_graph(model, params, shift_observations(x_leaf), z)
      return ops.sum(mean[:, t]) + ops.sum(std[:, t])

    grad = _input_gradient(output, x)
    leak += float(np.abs(grad[:, t:]).sum())
    if t:
      sees_past &= bool(np.any(grad[:, :t] != 0))
  return CheckResult("decoder_causal", leak == 0.0 and sees_past, {
      "current_and_future_gradient_abs_sum": leak,
      "sees_past": sees_past,
  })


def run_suite(suite: Suite, seed: int = 0, quick: bool = False) -> SuiteReport:
  """Runs one suite. quick shrinks the fuzz counts for smoke testing."""
  report = SuiteReport(suite, seed)
  scope = helper.TimeScope(f"verify {suite}")
  with scope:
    if suite == Suite.KL:
      report.checks.append(
          check_mc_agreement(seed, cases=20 if quick else 200,
                             n_samples=10_000 if quick else 100_000))
      report.checks.append(
          check_path_equivalence(seed, cases=500 if quick else 10_000))
      report.checks.append(
          check_bound_domination(seed, cases=500 if quick else 10_000))
    elif suite == Suite.BOUND:
      if not quick:
        report.checks.append(check_bound_tightness(seed))
      report.checks.append(check_solver_round_trip())
      report.checks.append(
          check_independent_guarantee(seed, cases=1000 if quick else 10_000))
    elif suite == Suite.GRAD:
      report.checks.append(
          check_elbo_gradients(seed, max_entries=4 if quick else 24))
    elif suite == Suite.MASKS:
      report.checks.append(check_encoder_mask(seed))
      report.checks.append(check_decoder_mask(seed))
    else:
      raise ValueError(f"Unexpected suite: {suite}")
  report.seconds = scope.elapsed.total_seconds()
  for check in report.checks:
    log = logging.info if check.passed else logging.error
    log("%s %s: %s", suite, check.name, "PASS" if check.passed else "FAIL")
  return report
