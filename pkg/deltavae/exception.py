# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from __future__ import annotations

import dataclasses
import logging
import traceback
from types import TracebackType
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple, Type

from deltavae import helper

if TYPE_CHECKING:
  from deltavae.training.record import RunRecord

InfoStack = Tuple[str, ...]
ExceptionTypes = Tuple[Type[BaseException], ...]


class DomainError(ValueError):
  """An argument lies outside the mathematical domain of an operation."""


class InfeasibleRateError(DomainError):
  pass


class ConfigurationError(ValueError):
  """Shape mismatches, invalid settings and unknown config keys."""


class ContractError(RuntimeError):
  """A structural guarantee did not hold at runtime."""


class DivergenceError(RuntimeError):

  def __init__(self, message: str, record: Optional[RunRecord] = None):
    super().__init__(message)
    self.record = record


class ConvergenceError(RuntimeError):

  def __init__(self, message: str, best_value: float):
    super().__init__(f"{message} (best value found: {best_value!r})")
    self.best_value = best_value


@dataclasses.dataclass
class Entry:
  traceback: List[str]
  exception: BaseException
  info_stack: InfoStack


class MultiException(ValueError):
  """Raised by ExceptionAnnotator.assert_success.

  Carries the annotator, an enclosing annotator that captures it merges
  the entries instead of nesting the exception.
  """

  def __init__(self, message: str, exceptions: ExceptionAnnotator):
    super().__init__(message)
    self.exceptions = exceptions


class AnnotationScope:
  """Pushes info entries for the duration of a with-block.

  Exceptions matching exception_types are recorded in the annotator and
  swallowed, unless rethrow is set.
  """

  def __init__(self,
               annotator: ExceptionAnnotator,
               exception_types: ExceptionTypes,
               entries: InfoStack,
               rethrow: bool = False) -> None:
    self._annotator = annotator
    self._exception_types = exception_types
    self._entries = entries
    self.rethrow = rethrow
    self._outer_stack: InfoStack = ()

  def __enter__(self) -> AnnotationScope:
    self._outer_stack = self._annotator.info_stack
    self._annotator._info_stack = self._outer_stack + self._entries
    return self

  def _matches(self, exception: BaseException) -> bool:
    return isinstance(exception, (MultiException,) + self._exception_types)

  def __exit__(self, exception_type: Optional[Type[BaseException]],
               exception: Optional[BaseException],
               tb: Optional[TracebackType]) -> bool:
    try:
      if exception is None:
        return False
      if not self._matches(exception):
        # Remember the innermost stack for an outer scope that captures it.
        self._annotator._escaped.setdefault(
            id(exception), self._annotator.info_stack)
        return False
      self._annotator.append(exception)
    finally:
      self._annotator._info_stack = self._outer_stack
    if self.rethrow:
      self._annotator.assert_success(log=False)
    return True


class ExceptionAnnotator:
  """Collects exceptions with their traceback and the info stack that was
  active when they were raised, so that one failure does not stop a batch
  of independent tasks.
  """

  def __init__(self, throw: bool = False):
    self.throw: bool = throw
    self._entries: List[Entry] = []
    self._info_stack: InfoStack = ()
    self._escaped: Dict[int, InfoStack] = {}

  @property
  def is_success(self) -> bool:
    return not self._entries

  @property
  def info_stack(self) -> InfoStack:
    return self._info_stack

  @property
  def exceptions(self) -> List[Entry]:
    return self._entries

  def capture(self,
              *entries: str,
              exceptions: ExceptionTypes = (Exception,),
              rethrow: bool = False) -> AnnotationScope:
    return AnnotationScope(self, exceptions, entries, rethrow)

  def append(self, exception: BaseException) -> None:
    logging.debug("Captured %s: %s", helper.type_name(type(exception)),
                  exception)
    if isinstance(exception, MultiException):
      for entry in exception.exceptions.exceptions:
        self._entries.append(
            Entry(entry.traceback, entry.exception,
                  self._info_stack + entry.info_stack))
    else:
      stack = self._escaped.pop(id(exception), self._info_stack)
      self._entries.append(
          Entry(traceback.format_exc().splitlines(), exception, stack))
    if self.throw:
      raise exception

  def extend(self, annotator: ExceptionAnnotator) -> None:
    self._entries.extend(annotator.exceptions)

  def assert_success(self,
                     message: Optional[str] = None,
                     exception_cls: Type[BaseException] = MultiException,
                     log: bool = True) -> None:
    """Raises exception_cls if anything was captured.

    message may contain one '{}', replaced by the formatted entries.
    """
    if self.is_success:
      return
    if log:
      self.log()
    text = (message or "Got Exceptions: {}").format(self)
    if issubclass(exception_cls, MultiException):
      raise exception_cls(text, self)
    raise exception_cls(text)

  def log(self) -> None:
    if self.is_success:
      return
    logging.error("=" * 80)
    logging.error("ERRORS occurred (%d):", len(self._entries))
    logging.error("=" * 80)
    by_stack = helper.group_by(
        self._entries, key=lambda entry: entry.info_stack, sort_key=None)
    for stack, entries in by_stack.items():
      if stack:
        logging.error("Info: %s", " > ".join(stack))
      for entry in entries:
        logging.error("- %s: %s", helper.type_name(type(entry.exception)),
                      self.format_exception(entry))
        logging.debug("\n".join(entry.traceback))
    logging.error("-" * 80)

  def format_exception(self, entry: Entry) -> str:
    message = str(entry.exception).strip()
    if message:
      return message
    # Bare asserts: the source line of the failed assert.
    if isinstance(entry.exception, AssertionError) and len(entry.traceback) > 1:
      return entry.traceback[-2].strip()
    return repr(entry.exception)

  def to_json(self) -> List[Dict[str, Any]]:
    return [{
        "info_stack": list(entry.info_stack),
        "type": helper.type_name(type(entry.exception)),
        "title": self.format_exception(entry),
        "trace": entry.traceback,
    } for entry in self._entries]

  def __str__(self) -> str:
    return "\n".join(f"{' > '.join(entry.info_stack)}: {entry.exception}"
                     for entry in self._entries)
