"""Finite dislocation measures: ratio atoms, truncation, derived constants.

A split event turns one particle of mass x into fragments
(r_1*x, r_2*x, ...) where the ratio vector r lives in the ordered set
{1 > r_1 >= r_2 >= ... >= 0} and sums to at most 1 (mass can leak to
dust, never appear). A measure here is a finite list of weighted ratio
atoms; infinite measures enter only through truncated atom lists
supplied by the user, and ``truncation_tails`` quantifies what a given
truncation level still misses.

The level-n truncation keeps atoms with r_1 <= 1 - 1/n and cuts each
survivor to its first n ratios; it converges to the full measure as n
grows and is the route every diagnostic takes from finite to general
measures.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CannotSampleError, ConfigurationError, ParameterError

__all__ = [
    "DislocationAtom",
    "DislocationMeasure",
    "project_atom",
    "restrict",
    "c_beta_lambda",
    "truncation_tails",
    "sample_atom",
    "preset_measure",
    "PRESETS",
]

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DislocationAtom:
    """A weighted ratio vector: ratios descending in [0, 1), weight > 0.

    Ratios are canonicalized at construction: sorted in decreasing
    order, exact zeros dropped. The empty vector (total dust) is legal.
    """

    ratios: tuple
    weight: float

    def __init__(self, ratios: Iterable[float], weight: float = 1.0):
        vals = sorted((float(r) for r in ratios), reverse=True)
        for r in vals:
            if not math.isfinite(r) or r < 0.0:
                raise ConfigurationError(f"ratio {r!r} is not a finite non-negative number")
        if vals and vals[0] >= 1.0:
            raise ConfigurationError(
                f"largest ratio must be < 1 (degenerate no-op dislocations are excluded), got {vals[0]!r}"
            )
        if math.fsum(vals) > 1.0 + _SUM_TOL:
            raise ConfigurationError(
                f"ratios sum to {math.fsum(vals)!r} > 1: a dislocation cannot gain mass"
            )
        w = float(weight)
        if not math.isfinite(w) or w <= 0.0:
            raise ConfigurationError(f"atom weight must be finite and > 0, got {weight!r}")
        object.__setattr__(self, "ratios", tuple(r for r in vals if r > 0.0))
        object.__setattr__(self, "weight", w)

    @property
    def largest(self) -> float:
        """r_1, with the convention 0 for the empty vector."""
        return self.ratios[0] if self.ratios else 0.0

    def fragment_count(self) -> int:
        return len(self.ratios)


def _atom_profile(atom: DislocationAtom, lam: float) -> float:
    """sum_{k>=2} r_k**lam + (1 - r_1**lam): the per-atom cost functional."""
    tail = math.fsum(r**lam for r in atom.ratios[1:])
    return tail + (1.0 - atom.largest**lam)


class DislocationMeasure:
    """A finite list of ratio atoms with a reference moment index.

    Atom order is fixed at load (lexicographic on ratios, then weight)
    so that sampling is replayable across runs and across both members
    of a coupled pair. Derived constants are precomputed.
    """

    __slots__ = ("atoms", "lam", "total_weight", "max_fragments", "_cumulative")

    def __init__(self, atoms: Sequence[DislocationAtom], lam: float = 1.0):
        if not 0.0 < lam <= 1.0:
            raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
        ordered = tuple(sorted(atoms, key=lambda t: (t.ratios, t.weight)))
        self.atoms = ordered
        self.lam = lam
        self.total_weight = math.fsum(t.weight for t in ordered)
        self.max_fragments = max((t.fragment_count() for t in ordered), default=0)
        cum, run = [], 0.0
        for t in ordered:
            run += t.weight
            cum.append(run)
        self._cumulative = cum
        self._check_moment_bounds()

    def _check_moment_bounds(self) -> None:
        # Per-atom monotonicity of the moment comparisons and the
        # integrated bounds they imply; these are theorems for valid
        # atoms, so a failure beyond rounding means corrupted input.
        lam = self.lam
        c_lam = c_beta_lambda(self, lam)
        mass_loss = 0.0
        gain = 0.0
        for t in self.atoms:
            r1 = t.largest
            if not (1.0 - r1**lam <= 1.0 - r1 + 1e-12 <= (1.0 - r1) ** lam + 1e-12):
                raise ConfigurationError(f"moment ordering violated for atom {t.ratios!r}")
            excess = math.fsum(r**lam for r in t.ratios) - 1.0
            if excess > math.fsum(r**lam for r in t.ratios[1:]) + 1e-12:
                raise ConfigurationError(f"moment excess bound violated for atom {t.ratios!r}")
            mass_loss += t.weight * (1.0 - math.fsum(t.ratios))
            gain += t.weight * max(excess, 0.0)
        if mass_loss > c_lam + 1e-9 * (1.0 + c_lam) or gain > c_lam + 1e-9 * (1.0 + c_lam):
            raise ConfigurationError("integrated moment bounds violated; atom list is inconsistent")

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        if isinstance(other, DislocationMeasure):
            return self.atoms == other.atoms and self.lam == other.lam
        return NotImplemented

    def __repr__(self) -> str:
        return f"DislocationMeasure({len(self.atoms)} atoms, total={self.total_weight:g}, lam={self.lam:g})"

    def c_beta(self) -> float:
        """The fragmentation cost constant at the measure's own lambda."""
        return c_beta_lambda(self, self.lam)

    def full_level(self) -> int:
        """Smallest n at which level-n truncation returns the measure itself."""
        n = max(1, self.max_fragments)
        r1_max = max((t.largest for t in self.atoms), default=0.0)
        while r1_max > 1.0 - 1.0 / n:
            n += 1
        return n


def project_atom(theta: DislocationAtom, n: int) -> DislocationAtom:
    """Keep the first n ratios, drop the rest; weight unchanged."""
    if n < 1:
        raise ParameterError(f"projection level must be >= 1, got {n!r}")
    if len(theta.ratios) <= n:
        return theta
    return DislocationAtom(theta.ratios[:n], theta.weight)


def restrict(beta: DislocationMeasure, n: int) -> DislocationMeasure:
    """Level-n truncation: drop atoms with r_1 > 1 - 1/n, cut survivors to n ratios."""
    if n < 1:
        raise ParameterError(f"truncation level must be >= 1, got {n!r}")
    cut = 1.0 - 1.0 / n
    kept = [project_atom(t, n) for t in beta.atoms if t.largest <= cut]
    return DislocationMeasure(kept, lam=beta.lam)


def c_beta_lambda(beta: DislocationMeasure, lam: float) -> float:
    """Integral of [sum_{k>=2} r_k**lam + (1 - r_1)**lam] over the measure."""
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    return math.fsum(
        t.weight * (math.fsum(r**lam for r in t.ratios[1:]) + (1.0 - t.largest) ** lam)
        for t in beta.atoms
    )


def truncation_tails(beta: DislocationMeasure, n: int, lam: float) -> tuple:
    """(A_n, B_n): what a level-n truncation misses.

    A_n integrates the lambda-moment of the ratios beyond position n;
    B_n integrates the per-atom cost profile over atoms the level-n
    indicator removes. Both are non-increasing in n and vanish once n
    covers the measure's support.
    """
    if n < 1:
        raise ParameterError(f"truncation level must be >= 1, got {n!r}")
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    cut = 1.0 - 1.0 / n
    a_tail = math.fsum(t.weight * math.fsum(r**lam for r in t.ratios[n:]) for t in beta.atoms)
    b_tail = math.fsum(
        t.weight * _atom_profile(t, lam) for t in beta.atoms if t.largest > cut
    )
    return a_tail, b_tail


def sample_atom(beta: DislocationMeasure, u: float) -> int:
    """Atom index (1-based) by cumulative-weight inversion of u in [0, 1)."""
    if beta.total_weight <= 0.0:
        raise CannotSampleError("cannot sample an atom from a measure with zero total weight")
    target = u * beta.total_weight
    idx = bisect_right(beta._cumulative, target)
    return min(idx, len(beta.atoms) - 1) + 1


PRESETS = {
    # Conservative symmetric binary split.
    "binary_half": ((0.5, 0.5),),
}


def preset_measure(name: str, lam: float = 1.0, weight: float = 1.0) -> DislocationMeasure:
    """A named builtin measure; each listed ratio vector gets the same weight."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown dislocation preset {name!r}; known: {sorted(PRESETS)}")
    return DislocationMeasure([DislocationAtom(r, weight) for r in PRESETS[name]], lam=lam)
