# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""Logging, timing, units and the header-carrying output files."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
import json
import logging
import math
import pathlib
import textwrap
from typing import (Any, Callable, Dict, Iterable, List, Optional, Sequence,
                    Tuple, Type, TypeVar)

import numpy as np
import tabulate

import deltavae

LN2: float = math.log(2.0)


class TTYColor:
  GREEN = "\033[38;5;2m"
  YELLOW = "\033[38;5;3m"
  RED = "\033[38;5;1m"
  BOLD = "\033[1m"
  RESET = "\033[0m"


class ColoredLogFormatter(logging.Formatter):
  """Colors the message by level, debug records also get their source."""

  _COLORS = {
      logging.INFO: TTYColor.GREEN,
      logging.WARNING: TTYColor.YELLOW,
      logging.ERROR: TTYColor.RED,
      logging.CRITICAL: TTYColor.BOLD,
  }

  def __init__(self) -> None:
    super().__init__("%(message)s")
    self._debug = logging.Formatter("%(message)s (%(filename)s:%(lineno)d)")

  def format(self, record: logging.LogRecord) -> str:
    if record.levelno <= logging.DEBUG:
      return self._debug.format(record)
    color = self._COLORS.get(record.levelno)
    text = super().format(record)
    if color is None:
      return text
    return f"{color}{text}{TTYColor.RESET}"


ItemT = TypeVar("ItemT")
KeyT = TypeVar("KeyT")


def group_by(items: Iterable[ItemT],
             key: Callable[[ItemT], KeyT],
             value: Optional[Callable[[ItemT], Any]] = None,
             sort_key: Optional[Callable[[Tuple[KeyT, Any]], Any]] = str
            ) -> Dict[KeyT, List[Any]]:
  """Groups all items by key, not only consecutive runs like
  itertools.groupby. sort_key=None keeps first-seen key order."""
  groups: Dict[KeyT, List[Any]] = {}
  for item in items:
    groups.setdefault(key(item), []).append(
        item if value is None else value(item))
  if sort_key is None:
    return groups
  return dict(sorted(groups.items(), key=sort_key))


def nats_to_bits(nats: float) -> float:
  return nats / LN2


def type_name(cls: Type) -> str:
  if not cls.__module__:
    return cls.__qualname__
  return f"{cls.__module__}.{cls.__qualname__}"


def wrap_lines(body: str, width: int = 80, indent: str = "") -> Iterable[str]:
  for line in body.splitlines():
    yield from (indent + part for part in textwrap.wrap(line, width))


class TimeScope:
  """Logs the wall-clock time spent in a with-block."""

  def __init__(self, message: str, level: int = logging.INFO) -> None:
    self._message = message
    self._level = level
    self._start = dt.datetime.now()
    self._elapsed = dt.timedelta()

  @property
  def message(self) -> str:
    return self._message

  @property
  def elapsed(self) -> dt.timedelta:
    return self._elapsed

  def __enter__(self) -> TimeScope:
    self._start = dt.datetime.now()
    return self

  def __exit__(self, exc_type, exc_value, exc_traceback) -> None:
    self._elapsed = dt.datetime.now() - self._start
    logging.log(self._level, "%s duration=%s", self._message, self._elapsed)


class Durations:
  """Wall-clock durations of the named phases of a run."""

  def __init__(self) -> None:
    self._durations: Dict[str, dt.timedelta] = {}

  def __getitem__(self, name: str) -> dt.timedelta:
    return self._durations[name]

  def __len__(self) -> int:
    return len(self._durations)

  def measure(self, name: str) -> _PhaseScope:
    assert name not in self._durations, f"Phase '{name}' was already measured"
    return _PhaseScope(self, name)

  def record(self, name: str, duration: dt.timedelta) -> None:
    self._durations[name] = duration

  def to_json(self) -> Dict[str, float]:
    return {
        name: duration.total_seconds()
        for name, duration in sorted(self._durations.items())
    }


class _PhaseScope:

  def __init__(self, durations: Durations, name: str) -> None:
    self._durations = durations
    self._name = name
    self._start = dt.datetime.now()

  def __enter__(self) -> _PhaseScope:
    self._start = dt.datetime.now()
    return self

  def __exit__(self, exc_type, exc_value, exc_traceback) -> None:
    self._durations.record(self._name, dt.datetime.now() - self._start)


class EnumWithHelp(enum.Enum):
  """Enum members declared as (value, help text) pairs."""

  def __new__(cls, value, help_text: str = ""):
    del help_text
    member = object.__new__(cls)
    member._value_ = value
    return member

  def __init__(self, value, help_text: str = "") -> None:
    del value
    assert help_text, f"{type(self).__name__}: missing help text"
    self._help = help_text

  @property
  def help(self) -> str:
    return self._help

  @classmethod
  def help_text_items(cls) -> List[Tuple[str, str]]:
    return [(repr(member.value), member.help) for member in cls]

  @classmethod
  def help_text(cls, indent: int = 0) -> str:
    text = tabulate.tabulate(cls.help_text_items(), tablefmt="plain")
    return textwrap.indent(text, " " * indent) if indent else text


class StrEnumWithHelp(EnumWithHelp):

  def __str__(self) -> str:
    return str(self.value)


def _json_default(value: Any) -> Any:
  if isinstance(value, enum.Enum):
    return value.value
  if isinstance(value, np.ndarray):
    return value.tolist()
  if isinstance(value, (np.floating, np.integer)):
    return value.item()
  if isinstance(value, pathlib.Path):
    return str(value)
  raise TypeError(f"Cannot serialize {type(value)}")


def to_json_str(data: Any, indent: Optional[int] = 2) -> str:
  return json.dumps(data, indent=indent, default=_json_default)


def config_hash(config: Any) -> str:
  canonical = json.dumps(config, sort_keys=True, default=_json_default)
  return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def output_header(config: Any, seed: Optional[int]) -> Dict[str, Any]:
  return {
      "tool": "deltavae",
      "version": deltavae.__version__,
      "config_hash": config_hash(config),
      "seed": seed,
  }


def write_json(path: pathlib.Path, header: Dict[str, Any], body: Any) -> None:
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open("w", encoding="utf-8") as f:
    f.write(to_json_str({"header": header, **body}))


def write_csv(path: pathlib.Path, header: Dict[str, Any],
              columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
  """CSV with one leading '# key=value' comment line for the header."""
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open("w", encoding="utf-8", newline="") as f:
    f.write("# " + " ".join(f"{key}={value}" for key, value in header.items())
            + "\n")
    writer = csv.writer(f)
    writer.writerow(columns)
    for row in rows:
      writer.writerow(row)


def read_csv(path: pathlib.Path) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
  header: Dict[str, str] = {}
  with path.open(encoding="utf-8", newline="") as f:
    lines = f.read().splitlines()
  body = []
  for line in lines:
    if line.startswith("#"):
      for item in line[1:].split():
        key, _, value = item.partition("=")
        header[key] = value
    else:
      body.append(line)
  return header, list(csv.DictReader(body))
