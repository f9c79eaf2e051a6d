# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""argparse value types and error plumbing for the dvae CLI."""

from __future__ import annotations

import argparse
import contextlib
import math
import pathlib
import sys
from typing import Any, Callable, Iterator, List, TypeVar

ItemT = TypeVar("ItemT")


def parse_existing_file_path(value: str) -> pathlib.Path:
  try:
    path = pathlib.Path(value).expanduser()
  except RuntimeError as e:
    raise argparse.ArgumentTypeError(f"Invalid path '{value}': {e}") from e
  if not path.exists():
    raise argparse.ArgumentTypeError(f"Path '{path}' does not exist.")
  if not path.is_file():
    raise argparse.ArgumentTypeError(f"Path '{path}' is not a file.")
  return path


def parse_finite_float(value: str) -> float:
  number = float(value)
  if not math.isfinite(number):
    raise argparse.ArgumentTypeError(f"Expected a finite number, got: {value}")
  return number


def parse_positive_int(value: str) -> int:
  number = int(value)
  if number < 1:
    raise argparse.ArgumentTypeError(f"Expected an int >= 1, got: {number}")
  return number


def _split_items(value: str, item_type: Callable[[str], ItemT]) -> List[ItemT]:
  items = [item.strip() for item in value.split(",")]
  items = [item for item in items if item]
  if not items:
    raise argparse.ArgumentTypeError(
        f"Expected comma-separated values, got '{value}'")
  try:
    return [item_type(item) for item in items]
  except ValueError as e:
    raise argparse.ArgumentTypeError(f"Invalid item in '{value}': {e}") from e


def parse_float_list(value: str) -> List[float]:
  """'a,b,c' or an inclusive linspace 'start:stop:count'."""
  if ":" not in value:
    return _split_items(value, parse_finite_float)
  bounds = value.split(":")
  if len(bounds) != 3:
    raise argparse.ArgumentTypeError(
        f"Expected 'start:stop:count', got '{value}'")
  try:
    start = parse_finite_float(bounds[0])
    stop = parse_finite_float(bounds[1])
    count = parse_positive_int(bounds[2])
  except ValueError as e:
    raise argparse.ArgumentTypeError(f"Invalid range '{value}': {e}") from e
  if count == 1:
    return [start]
  step = (stop - start) / (count - 1)
  # The last value is exactly stop, independent of rounding in step.
  return [start + i * step for i in range(count - 1)] + [stop]


def parse_int_list(value: str) -> List[int]:
  return _split_items(value, int)


class DeltaVaeArgumentError(argparse.ArgumentError):
  """ArgumentError that repeats the help of the offending argument."""

  def __init__(self, argument: Any, message: str) -> None:
    super().__init__(argument, message)
    self.help: str = ""
    if self.argument_name:
      self.help = getattr(argument, "help", None) or ""

  def __str__(self) -> str:
    message = super().__str__()
    if not self.help:
      return message
    return (f"argument error {self.argument_name}:\n\n"
            f"Help {self.argument_name}:\n{self.help}\n\n{message}")


class DeltaVaeArgumentParser(argparse.ArgumentParser):
  """Raises ArgumentError instead of exiting, DeltaVaeCLI.run reports it.

  fail() is the exiting variant used for the final usage message.
  """

  def __init__(self, *args, **kwargs) -> None:
    if sys.version_info >= (3, 9):
      kwargs["exit_on_error"] = False
    super().__init__(*args, **kwargs)

  def fail(self, message: str) -> None:
    super().error(message)

  if sys.version_info < (3, 9):

    def error(self, message: str):
      pending = sys.exc_info()[1]
      if isinstance(pending, BaseException):
        raise pending
      raise argparse.ArgumentError(None, message)


class LateArgumentError(argparse.ArgumentTypeError):
  """A flag value rejected after parsing, while running a subcommand."""

  def __init__(self, flag: str, message: str):
    super().__init__(message)
    self.flag = flag
    self.message = message


@contextlib.contextmanager
def late_argument_type_error_wrapper(flag: str) -> Iterator[None]:
  """Reports ValueErrors raised in the scope as bad values of flag."""
  try:
    yield
  except (ValueError, argparse.ArgumentTypeError) as e:
    raise LateArgumentError(flag, str(e)) from e
