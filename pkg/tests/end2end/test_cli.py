# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import contextlib
import io
import json
import sys
from typing import Tuple
from unittest import mock

import pytest

from deltavae import helper
from deltavae.cli import DeltaVaeCLI
from tests.end2end.helper import End2EndTestCase


class SysExitException(Exception):

  def __init__(self, exit_code=0):
    super().__init__("sys.exit")
    self.exit_code = exit_code


class CLIEnd2EndTestCase(End2EndTestCase):
  """Full verification suites and the ablation sweep through the CLI.
  These cover what the quick unit-test variants skip."""

  __test__ = True

  def run_cli(self, *args: str) -> Tuple[DeltaVaeCLI, io.StringIO]:
    cli = DeltaVaeCLI()
    with contextlib.redirect_stdout(io.StringIO()) as stdout:
      with mock.patch("sys.exit", side_effect=SysExitException):
        cli.run(args)
    return cli, stdout

  def test_verify_all_suites(self) -> None:
    report = self.output_dir / "verify.json"
    self.run_cli("verify", f"--out={report}")
    with report.open(encoding="utf-8") as f:
      data = json.load(f)
    self.assertTrue(data["passed"])
    checks = {
        check["name"]: check
        for suite in data["suites"]
        for check in suite["checks"]
    }
    self.assertEqual(len(checks["bound_tightness"]["grid"]), 18)
    self.assertEqual(checks["mc_agreement"]["cases"], 200)
    self.assertEqual(checks["path_equivalence"]["cases"], 10_000)

  def test_ablation_sweep(self) -> None:
    sweep_dir = self.output_dir / "ablation"
    self.run_cli("sweep", "--grid=ablation", f"--out-dir={sweep_dir}")
    _, rows = helper.read_csv(sweep_dir / "rate_distortion_test.csv")
    self.assertGreaterEqual(len(rows), 15)
    for row in rows:
      self.assertEqual(row["status"], "ok", row)
      if row["method"] == "delta":
        self.assertGreaterEqual(
            float(row["rate_nats"]),
            float(row["knob"]) - 1e-9, row)

  def test_rate_table(self) -> None:
    out = self.output_dir / "rates.csv"
    self.run_cli("rate-table", f"--out={out}")
    _, rows = helper.read_csv(out)
    self.assertEqual(len(rows), 8 * 6)
    for row in rows:
      self.assertGreaterEqual(float(row["delta_nats"]), 0.0)


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
