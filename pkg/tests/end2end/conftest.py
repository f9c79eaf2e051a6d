# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.


def pytest_addoption(parser):
  # Read back from sys.argv by End2EndTestCase.setUp.
  parser.addoption(
      "--test-seeds",
      default="0,1,2",
      help="Comma-separated seeds for the multi-seed experiments.")
