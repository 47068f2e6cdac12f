"""Sequence distances and the executable inequality suite.

Two distances compare ordered mass states (shorter states are padded
with zeros):

* ``dist_d``: geometrically weighted slot-wise distance
  sum_k 2**-k * |m_k - mt_k|, metrizing slot-wise convergence,
* ``dist_delta``: moment distance sum_k |m_k**lam - mt_k**lam|; for
  decreasingly ordered states the slot-wise sum already realizes the
  infimum over particle relabelings.

``check_inequalities`` evaluates, on one concrete input case, every
structural inequality the event maps satisfy with respect to these
distances, reporting each as (lhs, rhs, slack, pass). A check passes
iff lhs <= rhs * (1 + 1e-9) + 1e-12; identities are reported as two
one-sided checks so the same rule applies. Constants that have no easy
closed form are fitted numerically and carry a safety factor; they
only appear on the bound side of diagnostic checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List

import numpy as np

from .dislocation import DislocationAtom, project_atom
from .errors import EventIndexError, ParameterError
from .state import MassSequence, coalesce, fragment, norm

__all__ = [
    "InequalityCheck",
    "InequalityReport",
    "dist_d",
    "dist_delta",
    "distance_constant",
    "check_inequalities",
    "random_case",
    "equality_showcase_case",
]

REL_TOL = 1e-9
ABS_TOL = 1e-12


def dist_d(m: MassSequence, mt: MassSequence) -> float:
    """sum_k 2**-k |m_k - mt_k| with zero padding (k starts at 1)."""
    a, b = m.masses, mt.masses
    terms = []
    for k in range(max(len(a), len(b))):
        x = a[k] if k < len(a) else 0.0
        y = b[k] if k < len(b) else 0.0
        terms.append(abs(x - y) * 2.0 ** -(k + 1))
    return math.fsum(terms)


def dist_delta(m: MassSequence, mt: MassSequence, lam: float) -> float:
    """sum_k |m_k**lam - mt_k**lam| with zero padding."""
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    a, b = m.masses, mt.masses
    terms = []
    for k in range(max(len(a), len(b))):
        x = a[k] ** lam if k < len(a) else 0.0
        y = b[k] ** lam if k < len(b) else 0.0
        terms.append(abs(x - y))
    return math.fsum(terms)


@lru_cache(maxsize=None)
def distance_constant(alpha: float, beta: float) -> float:
    """Smallest found C with 2|x**(a+b) - y**(a+b)| <= C (x**a+y**a)|x**b-y**b|.

    By homogeneity the ratio depends on r = y/x in [0, 1) only:
    C(a,b) = sup_r 2 (1 - r**(a+b)) / ((1 + r**a)(1 - r**b)). Exact 1
    at a = 0; otherwise a grid maximum (dense near r = 1, where the
    ratio tends to (a+b)/b) times a 1.05 safety factor. Fitted, bound
    side only.
    """
    if alpha < 0.0 or beta <= 0.0:
        raise ParameterError(f"need alpha >= 0 and beta > 0, got ({alpha!r}, {beta!r})")
    if alpha == 0.0:
        return 1.0
    rs = np.concatenate(
        [np.linspace(0.0, 0.99, 4001), 1.0 - np.geomspace(1e-12, 0.01, 4001)]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = 2.0 * (1.0 - rs ** (alpha + beta)) / ((1.0 + rs**alpha) * (1.0 - rs**beta))
    best = float(np.nanmax(vals))
    best = max(best, (alpha + beta) / beta)  # the r -> 1 limit
    return best * 1.05


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class InequalityReport:
    case_id: str
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def min_slack(self) -> float:
        return min(c.slack for c in self.checks)

    def format_lines(self) -> List[str]:
        out = []
        for c in self.checks:
            verdict = "PASS" if c.passed else "FAIL"
            out.append(
                f"{self.case_id} {c.name}: lhs={c.lhs:.12g} rhs={c.rhs:.12g} "
                f"slack={c.slack:.3e} {verdict}"
            )
        return out


def _check(name: str, lhs: float, rhs: float) -> InequalityCheck:
    passed = lhs <= rhs * (1.0 + REL_TOL) + ABS_TOL
    # Slack relative to the larger side, floored at unit scale so that
    # rounding noise on near-zero quantities is not amplified.
    slack = (rhs - lhs) / max(abs(lhs), abs(rhs), 1.0)
    return InequalityCheck(name, lhs, rhs, slack, passed)


def check_inequalities(
    m: MassSequence,
    mt: MassSequence,
    i: int,
    j: int,
    theta: DislocationAtom,
    lam: float,
    u: int,
    v: int,
    case_id: str = "case",
) -> InequalityReport:
    """Evaluate every structural event-map inequality on one input case.

    Requires 1 <= i < j <= min(len(m), len(mt)) and 1 <= u < v so each
    check applies to both states.
    """
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    n_min = min(len(m), len(mt))
    if not (1 <= i < j <= n_min):
        raise EventIndexError(f"need 1 <= i < j <= {n_min}, got i={i}, j={j}")
    if not (1 <= u < v):
        raise EventIndexError(f"need 1 <= u < v, got u={u}, v={v}")

    checks: List[InequalityCheck] = []
    mi, mj = m.masses[i - 1], m.masses[j - 1]
    mti = mt.masses[i - 1]
    norm_m = norm(m, lam)
    theta_moment = math.fsum(r**lam for r in theta.ratios)
    theta_tail = math.fsum(r**lam for r in theta.ratios[1:])

    # Merging two slots moves the lam-moment down by an explicit amount.
    cm, cmt = coalesce(m, i, j), coalesce(mt, i, j)
    merged_norm = norm(cm, lam)
    predicted = norm_m + (mi + mj) ** lam - mi**lam - mj**lam
    checks.append(_check("merge_moment_identity_le", merged_norm, predicted))
    checks.append(_check("merge_moment_identity_ge", predicted, merged_norm))
    checks.append(_check("merge_moment_decrease", merged_norm, norm_m))

    # Splitting changes the lam-moment by exactly the atom's moment excess.
    fm, fmt = fragment(m, i, theta), fragment(mt, i, theta)
    split_norm = norm(fm, lam)
    predicted = norm_m + mi**lam * (theta_moment - 1.0)
    checks.append(_check("split_moment_identity_le", split_norm, predicted))
    checks.append(_check("split_moment_identity_ge", predicted, split_norm))

    # Distance moved by a single event.
    checks.append(_check("merge_self_distance", dist_delta(cm, m, lam), 2.0 * mj**lam))
    checks.append(
        _check(
            "split_self_distance",
            dist_delta(fm, m, lam),
            mi**lam * (theta_tail + 1.0 - theta.largest**lam),
        )
    )

    # The same event applied to two states cannot spread them much.
    checks.append(_check("merge_contraction", dist_delta(cm, cmt, lam), dist_delta(m, mt, lam)))
    checks.append(
        _check(
            "split_lipschitz",
            dist_delta(fm, fmt, lam),
            dist_delta(m, mt, lam) + abs(mi**lam - mti**lam) * (theta_moment - 1.0),
        )
    )

    # Two projection levels of the same atom differ by the ratio moments
    # they disagree on.
    gap_moment = math.fsum(r**lam for r in theta.ratios[u:v])
    checks.append(
        _check(
            "projection_gap",
            dist_delta(fragment(m, i, project_atom(theta, u)), fragment(m, i, project_atom(theta, v)), lam),
            gap_moment * mi**lam,
        )
    )

    # Weighted-distance counterparts. The single-merge displacement is
    # measured slot-aligned, before re-sorting: slot i absorbs slot j
    # and slot j is left empty, so exactly two slots move. Re-sorting
    # can push the merged particle far forward and grow the weighted
    # distance by ~ half the displaced mass independently of i, which
    # no bound of shape 2**-i * m_j controls; the slot-aligned form is
    # the one the rate-weighted sums need.
    checks.append(
        _check("merge_weighted_displacement", (2.0**-i + 2.0**-j) * mj, 1.5 * 2.0**-i * mj)
    )
    total = math.fsum(
        (2.0**-k + 2.0**-l) * m.masses[l - 1]
        for k in range(1, len(m))
        for l in range(k + 1, len(m) + 1)
    )
    checks.append(_check("merge_weighted_displacement_total", total, 1.5 * m.total_mass))
    checks.append(
        _check("merge_weighted_lipschitz", dist_d(cm, cmt), (2.0**i + 2.0**j) * dist_d(m, mt))
    )
    checks.append(
        _check(
            "split_weighted_distance",
            dist_d(fm, m),
            2.0 * (1.0 - theta.largest) * 2.0**-i * mi,
        )
    )
    big_c = distance_constant(1.0 - lam, lam)
    mass_factor = max(m.total_mass ** (1.0 - lam), mt.total_mass ** (1.0 - lam))
    checks.append(
        _check(
            "split_weighted_lipschitz",
            dist_d(fm, fmt),
            big_c * mass_factor * dist_delta(m, mt, lam),
        )
    )
    checks.append(
        _check(
            "projection_weighted_gap",
            dist_d(fm, fragment(m, i, project_atom(theta, u))),
            mi * math.fsum(theta.ratios[u:]),
        )
    )

    # Distance comparison chain.
    delta_one = dist_delta(m, mt, 1.0)
    checks.append(_check("weighted_below_linear", dist_d(m, mt), delta_one))
    checks.append(
        _check("linear_below_moment", delta_one, big_c * mass_factor * dist_delta(m, mt, lam))
    )

    # Scalar power-splitting inequality behind the fitted constant,
    # evaluated on the two merged slots.
    x, y = mi, mj
    a, b = 1.0 - lam, lam
    lower_lhs = (x**a + y**a) * abs(x**b - y**b)
    middle = 2.0 * abs(x ** (a + b) - y ** (a + b))
    checks.append(_check("power_split_lower", lower_lhs, middle))
    checks.append(_check("power_split_upper", middle, distance_constant(a, b) * lower_lhs))

    return InequalityReport(case_id=case_id, checks=tuple(checks))


def random_case(rng: np.random.Generator, mass_low: float = 1e-3, mass_high: float = 1e3) -> dict:
    """Draw one randomized, always-valid input case for check_inequalities."""
    n = int(rng.integers(2, 9))
    log_lo, log_hi = math.log(mass_low), math.log(mass_high)
    masses = np.exp(rng.uniform(log_lo, log_hi, size=n))
    masses_t = np.exp(rng.uniform(log_lo, log_hi, size=int(rng.integers(n, n + 3))))
    m = MassSequence(sorted(masses, reverse=True))
    mt = MassSequence(sorted(masses_t, reverse=True))
    i = int(rng.integers(1, n))
    j = int(rng.integers(i + 1, n + 1))
    # Random valid ratio vector: stick-break inside a random budget <= 1.
    budget = float(rng.uniform(0.05, 1.0))
    parts = rng.dirichlet(np.ones(int(rng.integers(1, 7)))) * budget
    parts = np.minimum(parts, 1.0 - 1e-9)
    theta = DislocationAtom(parts.tolist(), weight=1.0)
    lam = float(rng.uniform(0.05, 1.0))
    u = int(rng.integers(1, 4))
    v = u + int(rng.integers(1, 4))
    return {"m": m, "mt": mt, "i": i, "j": j, "theta": theta, "lam": lam, "u": u, "v": v}


def equality_showcase_case() -> dict:
    """The pinned case whose merge_self_distance check is tight.

    m = (3, 2, 1), i = 1, j = 2, lam = 1: merging gives (5, 1) and the
    slot-wise distance to (3, 2, 1) is |5-3| + |1-2| + |0-1| = 4, which
    equals the bound 2 * m_j = 4 exactly.
    """
    return {
        "m": MassSequence((3.0, 2.0, 1.0)),
        "mt": MassSequence((3.0, 2.0, 1.0)),
        "i": 1,
        "j": 2,
        "theta": DislocationAtom((0.5, 0.5)),
        "lam": 1.0,
        "u": 1,
        "v": 2,
    }
