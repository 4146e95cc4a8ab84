"""Conjunctive predicates over rows: comparison atoms and IN-lists.

The predicate language is deliberately small; it is the filter language of
population views, sample definitions, and query WHERE clauses alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .errors import TypeMismatchError, UnknownAttributeError

COMPARISON_OPS = ("=", "<", ">", "<=", ">=")

Value = Union[float, str]


@dataclass(frozen=True)
class Comparison:
    attr: str
    op: str  # one of COMPARISON_OPS
    value: Value


@dataclass(frozen=True)
class InList:
    attr: str
    values: tuple[Value, ...]


Atom = Union[Comparison, InList]


@dataclass(frozen=True)
class Predicate:
    """Conjunction of atoms; an empty conjunction is always true."""

    atoms: tuple[Atom, ...] = field(default_factory=tuple)

    def attributes(self) -> set[str]:
        return {a.attr for a in self.atoms}

    def __bool__(self) -> bool:
        return bool(self.atoms)


def _atom_holds(atom: Atom, value: Value) -> bool:
    if isinstance(atom, InList):
        return value in atom.values
    other = atom.value
    if atom.op == "=":
        return value == other
    if atom.op == "<":
        return value < other
    if atom.op == ">":
        return value > other
    if atom.op == "<=":
        return value <= other
    return value >= other


def evaluate(pred: Predicate | None, row: tuple, index: dict[str, int]) -> bool:
    """True when every atom holds for the row (attribute -> position in `index`)."""
    if pred is None:
        return True
    for atom in pred.atoms:
        if not _atom_holds(atom, row[index[atom.attr]]):
            return False
    return True


def filter_rows(pred, rows, index):
    if pred is None or not pred.atoms:
        return list(range(len(rows)))
    return [i for i, row in enumerate(rows) if evaluate(pred, row, index)]


def check_types(pred: Predicate, schema_kinds: dict[str, str]) -> None:
    """Validate attribute existence and operator/literal compatibility.

    Numeric attributes accept all comparison ops with numeric literals;
    categorical attributes accept only ``=`` and IN with string literals.
    """
    for atom in pred.atoms:
        if atom.attr not in schema_kinds:
            raise UnknownAttributeError(f"unknown attribute '{atom.attr}' in predicate")
        kind = schema_kinds[atom.attr]
        literals = atom.values if isinstance(atom, InList) else (atom.value,)
        for lit in literals:
            if kind == "numeric" and not isinstance(lit, (int, float)):
                raise TypeMismatchError(
                    f"attribute '{atom.attr}' is numeric but compared to {lit!r}")
            if kind == "categorical" and not isinstance(lit, str):
                raise TypeMismatchError(
                    f"attribute '{atom.attr}' is categorical but compared to {lit!r}")
        if kind == "categorical" and isinstance(atom, Comparison) and atom.op != "=":
            raise TypeMismatchError(
                f"ordering comparison '{atom.op}' not defined for categorical '{atom.attr}'")
