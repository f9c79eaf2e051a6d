# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import logging
from typing import Callable

MAX_ITERATIONS: int = 400


def bisect_increasing(fn: Callable[[float], float],
                      lo: float,
                      hi: float,
                      x_tol: float = 0.0,
                      keep: str = "hi") -> float:
  """Root of a continuous increasing fn on [lo, hi] with fn(lo) <= 0 <= fn(hi).

  Iterates until the bracket stops shrinking in floating point (or x_tol is
  reached). keep selects which bracket end is returned: "hi" yields a point
  with fn >= 0, "lo" one with fn <= 0.
  """
  assert keep in ("lo", "hi"), f"Invalid keep={keep}"
  f_lo = fn(lo)
  f_hi = fn(hi)
  if f_lo > 0 or f_hi < 0:
    raise ValueError(f"Root is not bracketed: f({lo})={f_lo}, f({hi})={f_hi}")
  if f_lo == 0:
    return lo
  if f_hi == 0:
    return hi
  for iteration in range(MAX_ITERATIONS):
    mid = 0.5 * (lo + hi)
    if mid <= lo or mid >= hi or hi - lo <= x_tol:
      logging.debug("bisect converged after %d iterations", iteration)
      break
    f_mid = fn(mid)
    if f_mid == 0:
      return mid
    if f_mid < 0:
      lo = mid
    else:
      hi = mid
  return hi if keep == "hi" else lo
