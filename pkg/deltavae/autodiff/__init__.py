# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from deltavae.autodiff import ops
from deltavae.autodiff.check import grad_check
from deltavae.autodiff.node import Node, as_node, backward

__all__ = [
    "Node",
    "as_node",
    "backward",
    "grad_check",
    "ops",
]
