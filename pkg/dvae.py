#!/usr/bin/env python3
# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

import sys

from deltavae.cli import DeltaVaeCLI

if __name__ == "__main__":
  argv = sys.argv
  cli = DeltaVaeCLI()
  cli.run(argv[1:])
