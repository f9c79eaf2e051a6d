# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.
"""Typed parsing of hjson config sections into frozen dataclasses."""

from __future__ import annotations

import dataclasses
import enum
import inspect
import pathlib
import textwrap
from typing import (Any, Callable, Dict, FrozenSet, Generic, Iterable, List,
                    Optional, Tuple, Type, TypeVar, Union)

import hjson
import tabulate

from deltavae import helper
from deltavae.exception import ConfigurationError, ExceptionAnnotator

ValueType = Union[Callable[[Any], Any], Type]
ResultT = TypeVar("ResultT")


def _is_enum_type(value_type: Optional[ValueType]) -> bool:
  return inspect.isclass(value_type) and issubclass(value_type, enum.Enum)


def _check_number(value: Any, value_type: Type) -> None:
  # bool is an int subclass.
  if isinstance(value, bool) or not isinstance(value, (int, float)):
    raise ValueError(f"Expected number, got {value!r}")
  if value_type is int and int(value) != value:
    raise ValueError(f"Expected integer, got {value!r}")


@dataclasses.dataclass(frozen=True)
class _Option:
  section: str
  name: str
  value_type: Optional[ValueType]
  default: Any
  choices: Optional[FrozenSet[Any]]
  help: str
  is_list: bool
  required: bool

  @property
  def label(self) -> str:
    return f"{self.section}.{self.name}"

  def describe(self) -> str:
    rows: List[Tuple[str, str]] = []
    if self.value_type is not None:
      type_name = getattr(self.value_type, "__qualname__", str(self.value_type))
      rows.append(("type", f"List[{type_name}]" if self.is_list else type_name))
    if self.default is None:
      rows.append(("default", "required" if self.required else "not set"))
    elif self.is_list:
      rows.append(("default", ",".join(str(v) for v in self.default) or "[]"))
    else:
      rows.append(("default", str(self.default)))
    if _is_enum_type(self.value_type):
      rows.append(("choices", ""))
      rows.extend(self.value_type.help_text_items())  # type: ignore
    elif self.choices:
      rows.append(("choices", ", ".join(sorted(str(c) for c in self.choices))))
    table = tabulate.tabulate(rows, tablefmt="presto")
    return f"{self.help}\n{table}" if self.help else table

  def take(self, data: Dict[str, Any]) -> Any:
    """Pops this option from data and returns the converted value."""
    raw = data.pop(self.name, None)
    if raw is None:
      if self.required and self.default is None:
        raise ConfigurationError(
            f"{self.section}: "
            f"No value provided for required config option '{self.name}'")
      raw = self.default
    if raw is None:
      return None
    if not self.is_list:
      return self.convert(raw)
    if not isinstance(raw, (list, tuple)):
      raise ConfigurationError(
          f"{self.label}: Expected sequence got {type(raw)}")
    return tuple(self.convert(item) for item in raw)

  def convert(self, raw: Any) -> Any:
    if _is_enum_type(self.value_type):
      return self._convert_enum(raw)
    if self.choices is not None and raw not in self.choices:
      raise ConfigurationError(f"{self.label}: Invalid choice '{raw}', "
                               f"choices are {sorted(self.choices)}")
    if self.value_type is None:
      return raw
    try:
      if self.value_type is bool and not isinstance(raw, bool):
        raise ValueError(f"Expected bool, but got {raw}")
      if self.value_type in (int, float):
        _check_number(raw, self.value_type)
      return self.value_type(raw)
    except (ValueError, TypeError) as e:
      raise ConfigurationError(f"{self.label}: {e}") from e

  def _convert_enum(self, raw: Any) -> enum.Enum:
    members = self.choices or frozenset(self.value_type)  # type: ignore
    for member in members:
      if raw == member or raw == member.value:
        return member
    valid = sorted(str(member.value) for member in members)
    raise ConfigurationError(
        f"{self.label}: Expected one of {valid}, but got {raw!r}")


class ConfigParser(Generic[ResultT]):
  """Parses one config section into an instance of cls.

  Each option is taken out of a copy of the input dict. Keys left over
  afterwards are unknown and rejected. All option errors of a section are
  reported together.
  """

  def __init__(self, title: str, cls: Type[ResultT]):
    assert title, "No title provided"
    self.title = title
    self._cls = cls
    self._options: Dict[str, _Option] = {}

  def add_argument(  # pylint: disable=redefined-builtin
      self,
      name: str,
      type: Optional[ValueType],
      default: Any = None,
      choices: Optional[Iterable[Any]] = None,
      help: Optional[str] = None,
      is_list: bool = False,
      required: bool = False) -> None:
    assert name not in self._options, f"Duplicate argument: {name}"
    assert type is None or callable(type), f"Invalid type for {name}: {type}"
    frozen_choices = None
    if choices is not None:
      frozen_choices = frozenset(choices)
      assert frozen_choices, f"Got empty choices for {name}"
    self._options[name] = _Option(self.title, name, type, default,
                                  frozen_choices, help or "", is_list, required)

  @property
  def arg_names(self) -> Tuple[str, ...]:
    return tuple(self._options)

  @property
  def cls(self) -> Type[ResultT]:
    return self._cls

  @property
  def doc(self) -> str:
    return inspect.cleandoc(self._cls.__doc__ or "")

  def _parse_kwargs(self, config_data: Any, throw: bool) -> Dict[str, Any]:
    if config_data is None:
      config_data = {}
    if not isinstance(config_data, dict):
      raise ConfigurationError(
          f"{self.title}: Expected a dict, but got {type(config_data)}")
    remaining = dict(config_data)
    kwargs: Dict[str, Any] = {}
    errors = ExceptionAnnotator(throw=throw)
    for name, option in self._options.items():
      with errors.capture(f"Parsing {self.title}['{name}']"):
        kwargs[name] = option.take(remaining)
    if remaining:
      with errors.capture(f"Parsing {self.title}"):
        raise ConfigurationError(
            f"{self.title}: unknown keys {sorted(remaining)}, "
            f"valid keys are {sorted(self._options)}")
    errors.assert_success(
        f"Failed to parse {self.title} config: {{}}",
        exception_cls=ConfigurationError,
        log=False)
    return kwargs

  def parse(self, config_data: Optional[Dict[str, Any]],
            throw: bool = False) -> ResultT:
    kwargs = self._parse_kwargs(config_data, throw)
    try:
      return self._cls(**kwargs)
    except ConfigurationError:
      raise
    except (ValueError, TypeError) as e:
      raise ConfigurationError(f"{self.title}: {e}") from e

  def __str__(self) -> str:
    lines: List[str] = []
    if self.doc:
      lines += textwrap.wrap(self.doc, width=80) + [""]
    lines += [f"{self.title} Configuration:", ""]
    for name, option in self._options.items():
      lines.append(f"{name}:")
      lines.extend(helper.wrap_lines(option.describe(), width=80, indent="  "))
      lines.append("")
    return "\n".join(lines)


def load_hjson(path: pathlib.Path) -> Dict[str, Any]:
  try:
    with path.open(encoding="utf-8") as f:
      data = hjson.load(f, object_pairs_hook=dict)
  except ValueError as e:
    raise ConfigurationError(f"Invalid hjson file {path}: {e}") from e
  if not isinstance(data, dict):
    raise ConfigurationError(f"{path}: expected a top-level dict")
  return data
