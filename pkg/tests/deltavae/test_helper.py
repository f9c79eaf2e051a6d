# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import datetime as dt
import enum
import json
import math
import pathlib
import sys
import unittest
from unittest import mock

import numpy as np
import pytest
from pyfakefs import fake_filesystem_unittest

import deltavae
from deltavae import helper


class GroupByTestCase(unittest.TestCase):

  def test_empty(self):
    self.assertDictEqual(helper.group_by([], key=str), {})

  def test_basic(self):
    grouped = helper.group_by([1, 2, 3, 4], key=lambda x: x % 2)
    self.assertDictEqual(grouped, {0: [2, 4], 1: [1, 3]})

  def test_value(self):
    grouped = helper.group_by(["a1", "b2", "a3"],
                              key=lambda x: x[0],
                              value=lambda x: int(x[1]))
    self.assertDictEqual(grouped, {"a": [1, 3], "b": [2]})

  def test_unsorted(self):
    grouped = helper.group_by([3, 1, 2], key=lambda x: x, sort_key=None)
    self.assertListEqual(list(grouped), [3, 1, 2])


class UnitsTestCase(unittest.TestCase):

  def test_nats_to_bits(self):
    self.assertAlmostEqual(helper.nats_to_bits(math.log(2.0)), 1.0)
    self.assertEqual(helper.nats_to_bits(0.0), 0.0)


class DurationsTestCase(unittest.TestCase):

  def test_single(self):
    durations = helper.Durations()
    self.assertEqual(len(durations), 0)
    with durations.measure("train"):
      pass
    self.assertEqual(len(durations), 1)
    self.assertGreaterEqual(durations["train"], dt.timedelta())
    self.assertListEqual(list(durations.to_json()), ["train"])

  def test_measure_twice(self):
    durations = helper.Durations()
    with durations.measure("train"):
      pass
    with self.assertRaises(AssertionError):
      with durations.measure("train"):
        pass

  def test_time_scope(self):
    with mock.patch("logging.log") as logging_mock:
      with helper.TimeScope("Run x") as scope:
        pass
    self.assertEqual(scope.message, "Run x")
    self.assertGreaterEqual(scope.elapsed, dt.timedelta())
    logging_mock.assert_called_once()


class EnumWithHelpTestCase(unittest.TestCase):

  def test_help(self):

    class Mode(helper.StrEnumWithHelp):
      FAST = ("fast", "Go fast")
      SLOW = ("slow", "Go slow")

    self.assertEqual(str(Mode.FAST), "fast")
    self.assertEqual(Mode("slow"), Mode.SLOW)
    self.assertEqual(Mode.SLOW.help, "Go slow")
    self.assertListEqual(Mode.help_text_items(), [("'fast'", "Go fast"),
                                                  ("'slow'", "Go slow")])
    self.assertIn("Go fast", Mode.help_text(indent=2))


class JsonTestCase(unittest.TestCase):

  def test_numpy_and_enum(self):

    class Kind(enum.Enum):
      A = "a"

    text = helper.to_json_str(
        {
            "array": np.arange(3),
            "float": np.float64(0.5),
            "kind": Kind.A,
            "path": pathlib.Path("/x")
        },
        indent=None)
    self.assertDictEqual(
        json.loads(text), {
            "array": [0, 1, 2],
            "float": 0.5,
            "kind": "a",
            "path": "/x"
        })

  def test_unserializable(self):
    with self.assertRaises(TypeError):
      helper.to_json_str({"x": object()})

  def test_config_hash(self):
    first = helper.config_hash({"a": 1, "b": [1, 2]})
    self.assertEqual(len(first), 12)
    self.assertEqual(first, helper.config_hash({"b": [1, 2], "a": 1}))
    self.assertNotEqual(first, helper.config_hash({"a": 2, "b": [1, 2]}))

  def test_output_header(self):
    header = helper.output_header({"a": 1}, seed=3)
    self.assertEqual(header["tool"], "deltavae")
    self.assertEqual(header["version"], deltavae.__version__)
    self.assertEqual(header["seed"], 3)
    self.assertEqual(header["config_hash"], helper.config_hash({"a": 1}))


class OutputFilesTestCase(fake_filesystem_unittest.TestCase):

  def setUp(self):
    self.setUpPyfakefs()

  def test_write_json(self):
    path = pathlib.Path("/out/sub/result.json")
    helper.write_json(path, {"seed": 1}, {"value": 2.5})
    with path.open(encoding="utf-8") as f:
      self.assertDictEqual(json.load(f), {"header": {"seed": 1}, "value": 2.5})

  def test_csv_round_trip(self):
    path = pathlib.Path("/out/table.csv")
    helper.write_csv(path, {"tool": "deltavae", "seed": 0}, ("a", "b"),
                     [(1, 2.5), (3, "x")])
    with path.open(encoding="utf-8") as f:
      self.assertEqual(f.readline(), "# tool=deltavae seed=0\n")
    header, rows = helper.read_csv(path)
    self.assertDictEqual(header, {"tool": "deltavae", "seed": "0"})
    self.assertListEqual(rows, [{"a": "1", "b": "2.5"}, {"a": "3", "b": "x"}])


if __name__ == "__main__":
  sys.exit(pytest.main([__file__]))
