# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""
Base class for the end-to-end experiment tests
"""

import argparse
import logging
import pathlib
import shutil
import tempfile
import unittest
from abc import ABCMeta
from typing import Dict, Tuple

from deltavae.training import run_config
from deltavae.training.record import RunRecord
from deltavae.training.trainer import train


class End2EndTestCase(unittest.TestCase, metaclass=ABCMeta):
  """
  Full-size training runs on the shipped presets.
  These take minutes per run and are not part of the default test run.
  """

  __test__ = False

  output_dir: pathlib.Path
  seeds: Tuple[int, ...]

  # Records are shared between the tests of one class, keyed by
  # (preset, seed).
  _records: Dict[Tuple[str, int], RunRecord] = {}

  def setUp(self) -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "--test-seeds",
        default="0,1,2",
        help="Comma-separated seeds for the multi-seed experiments.")
    # Use parse_known_args to allow for other custom arguments.
    args, _ = parser.parse_known_args()
    self.seeds = tuple(int(seed) for seed in args.test_seeds.split(","))
    logging.info("end2end seeds: %s", self.seeds)
    self.output_dir = pathlib.Path(tempfile.mkdtemp(suffix=type(self).__name__))

  def tearDown(self) -> None:
    shutil.rmtree(self.output_dir, True)

  def run_preset(self, preset: str, seed: int = 0) -> RunRecord:
    key = (preset, seed)
    if key not in self._records:
      cfg = run_config.load_run_config(preset, seed)
      self._records[key] = train(
          cfg, out_dir=self.output_dir / f"{preset}_seed{seed}")
    return self._records[key]
