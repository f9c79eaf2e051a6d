# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from .cli import DeltaVaeCLI

__all__ = [
    "DeltaVaeCLI",
]
