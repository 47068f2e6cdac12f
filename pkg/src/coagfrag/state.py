"""Ordered mass states and the two jump maps acting on them.

A state is a finite, decreasingly ordered tuple of strictly positive
particle masses. Zeros are never stored: a slot that would hold mass 0
simply does not exist. Two events modify a state,

* merge: particles i and j (1-based, i < j) are replaced by a single
  particle carrying their summed mass,
* split: particle i is replaced by the fragments ratio*mass for every
  positive ratio of a dislocation atom,

and both re-sort the result in decreasing order. Ties are broken by
keeping pre-event relative order (stable sort), which makes index-based
couplings replayable; the law is unaffected because equal masses are
exchangeable.

All operations are pure functions on immutable values.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from .errors import EventIndexError, InvalidMassError, ParameterError

__all__ = ["MassSequence", "reorder", "coalesce", "fragment", "norm"]


def _stable_descending(raw: Iterable[float]) -> tuple[float, ...]:
    # sorted() is stable, so equal masses keep their position order in raw.
    return tuple(sorted(raw, key=lambda v: -v))


class MassSequence:
    """A finite sequence of strictly positive masses, sorted descending.

    Instances are immutable by convention; every operation returns a new
    sequence. ``masses`` is the raw tuple, longest-first.
    """

    __slots__ = ("masses",)

    def __init__(self, masses: Sequence[float] = ()):
        vals = tuple(float(v) for v in masses)
        for v in vals:
            if not math.isfinite(v) or v <= 0.0:
                raise InvalidMassError(f"mass {v!r} is not a finite positive number")
        for a, b in zip(vals, vals[1:]):
            if a < b:
                raise InvalidMassError("masses must be in decreasing order; use reorder()")
        self.masses = vals

    @classmethod
    def _from_sorted(cls, vals: tuple[float, ...]) -> "MassSequence":
        # Internal fast path: vals already validated positive + sorted.
        obj = cls.__new__(cls)
        obj.masses = vals
        return obj

    def __len__(self) -> int:
        return len(self.masses)

    def __iter__(self):
        return iter(self.masses)

    def __eq__(self, other) -> bool:
        if isinstance(other, MassSequence):
            return self.masses == other.masses
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.masses)

    def __repr__(self) -> str:
        return f"MassSequence({list(self.masses)!r})"

    @property
    def total_mass(self) -> float:
        """Exact total mass (compensated summation)."""
        return math.fsum(self.masses)


def reorder(raw: Iterable[float]) -> MassSequence:
    """Sort non-negative masses in decreasing order, dropping zeros.

    Entries that are exactly zero refer to particles that do not exist
    and are removed. Equal masses keep their input order (stable sort).
    Raises InvalidMassError on negative or non-finite entries.
    """
    vals = [float(v) for v in raw]
    for v in vals:
        if not math.isfinite(v) or v < 0.0:
            raise InvalidMassError(f"mass {v!r} is not a finite non-negative number")
    return MassSequence._from_sorted(_stable_descending(v for v in vals if v > 0.0))


def coalesce(m: MassSequence, i: int, j: int) -> MassSequence:
    """Merge particles i and j (1-based, i < j) into one of mass m_i + m_j.

    The result has one particle fewer and exactly the same total mass.
    """
    n = len(m.masses)
    if not (1 <= i < j <= n):
        raise EventIndexError(f"need 1 <= i < j <= {n}, got i={i}, j={j}")
    raw = list(m.masses)
    raw[i - 1] = raw[i - 1] + raw[j - 1]
    del raw[j - 1]
    return MassSequence._from_sorted(_stable_descending(raw))


def fragment(m: MassSequence, i: int, theta) -> MassSequence:
    """Split particle i (1-based) into fragments ratio_k * m_i.

    ``theta`` is a dislocation atom (anything exposing a ``ratios``
    tuple of values in [0, 1), decreasing). Zero fragments are dropped,
    so total mass can only decrease (ratios sum to at most 1).
    """
    n = len(m.masses)
    if not (1 <= i <= n):
        raise EventIndexError(f"need 1 <= i <= {n}, got i={i}")
    parent = m.masses[i - 1]
    raw = list(m.masses[: i - 1])
    for r in theta.ratios:
        f = r * parent
        if f > 0.0:
            raw.append(f)
    raw.extend(m.masses[i:])
    return MassSequence._from_sorted(_stable_descending(raw))


def norm(m: MassSequence, lam: float) -> float:
    """The lambda-moment sum(m_k ** lam); total mass when lam = 1."""
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    if lam == 1.0:
        return math.fsum(m.masses)
    return math.fsum(v**lam for v in m.masses)
