"""Master-equation ground truth for tiny instances.

For a state space small enough to enumerate, the jump process is a
finite CTMC and its time-t law solves a linear ODE system (Kolmogorov
forward equations). Integrating that system with a stiff implicit
scheme at tight tolerance gives an independent reference distribution
against which Monte-Carlo output can be tested, with every
approximation certified:

  * the reachable set is closed off at a jump depth J; the (J+1)-th
    jump, wherever it lands, flows into an absorbing escape node, so
    the escape probability is exactly P(more than J jumps by t);
  * a Poisson tail at the graph's total-rate bound dominates that
    escape probability and is reported as the certified truncation
    error (it also covers expectation-type checks where escaping paths
    carry large observable values);
  * comparisons against empirical samples add a distribution-free
    binomial confidence width, so a pass verdict accounts for sampling
    noise, truncation, and integration error together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.stats import poisson

from .errors import NumericError, ParameterError, TruncationError
from .simulate import KIND_COALESCENCE, KIND_FRAGMENTATION, SimConfig
from .state import MassSequence, coalesce, fragment

__all__ = [
    "StateGraph",
    "MasterSolution",
    "ComparisonReport",
    "ESCAPED",
    "STATE_GUARD",
    "enumerate_states",
    "master_equation_solve",
    "observable_marginal",
    "expectation",
    "compare_empirical",
    "export_distribution",
]

# Hard ceiling on enumerated states; beyond this the oracle refuses.
STATE_GUARD = 1_000_000

# Category label for probability mass outside the enumerated graph.
ESCAPED = "__escaped__"

# Canonicalization width: 12 significant digits. Dyadic fragment masses
# are exact well past this, so collisions are genuine state merges.
_KEY_DIGITS = 12


def _canonical_key(masses: Sequence[float], tag: Hashable) -> Tuple:
    return tuple(float(f"{v:.{_KEY_DIGITS}g}") for v in masses) + (tag,)


@dataclass
class StateGraph:
    """Reachable states within max_jumps, with accumulated transition rates.

    states[0] is the initial state. transitions hold (from, to, rate,
    kind) with rates accumulated over all particle choices that lead to
    the same canonical successor. out_rate[i] is the total jump rate of
    state i whether or not its successors were expanded; states at
    depth max_jumps keep their rate but get no transitions, which is
    what routes their flux to the escape node during integration.
    rate_bound is the largest out_rate anywhere in the graph.
    """

    states: List[MassSequence]
    tags: List[Hashable]
    depth: List[int]
    transitions: List[Tuple[int, int, float, str]]
    out_rate: List[float]
    max_jumps: int
    rate_bound: float

    def __len__(self) -> int:
        return len(self.states)


def enumerate_states(
    initial: MassSequence,
    config: SimConfig,
    max_jumps: int,
    tag0: Hashable = None,
    tag_update: Optional[Callable[[Hashable, str], Hashable]] = None,
) -> StateGraph:
    """Breadth-first closure under merges and splits up to depth max_jumps.

    States are keyed by the ordered mass tuple rounded to 12 significant
    digits, optionally extended with a path tag updated per jump kind
    (e.g. a flag recording whether any merge has happened), which turns
    path-dependent observables into state observables.
    """
    if not isinstance(max_jumps, int) or max_jumps < 0:
        raise ParameterError(f"max_jumps must be a non-negative integer, got {max_jumps!r}")
    upd = tag_update if tag_update is not None else (lambda tag, kind: tag)

    states: List[MassSequence] = [initial]
    tags: List[Hashable] = [tag0]
    depth: List[int] = [0]
    index: Dict[Tuple, int] = {_canonical_key(initial.masses, tag0): 0}
    transitions: List[Tuple[int, int, float, str]] = []
    out_rate: List[float] = []

    head = 0
    while head < len(states):
        i = head
        head += 1
        m = states[i]
        tag = tags[i]
        masses = m.masses
        expand = depth[i] < max_jumps
        acc: Dict[Tuple[int, str], float] = {}
        rate_terms: List[float] = []

        for a in range(len(masses)):
            for b in range(a + 1, len(masses)):
                rate = config.coag.eval(masses[a], masses[b])
                if rate <= 0.0:
                    continue
                rate_terms.append(rate)
                if not expand:
                    continue
                succ = coalesce(m, a + 1, b + 1)
                new_tag = upd(tag, KIND_COALESCENCE)
                key = _canonical_key(succ.masses, new_tag)
                j = index.get(key)
                if j is None:
                    j = len(states)
                    if j >= STATE_GUARD:
                        raise TruncationError(
                            f"state guard {STATE_GUARD} exceeded at depth {depth[i] + 1} "
                            f"({len(transitions)} transitions so far); reduce max_jumps"
                        )
                    index[key] = j
                    states.append(succ)
                    tags.append(new_tag)
                    depth.append(depth[i] + 1)
                acc[(j, KIND_COALESCENCE)] = acc.get((j, KIND_COALESCENCE), 0.0) + rate

        for a in range(len(masses)):
            fx = config.frag.eval(masses[a])
            if fx <= 0.0:
                continue
            for atom in config.beta.atoms:
                rate = fx * atom.weight
                rate_terms.append(rate)
                if not expand:
                    continue
                succ = fragment(m, a + 1, atom)
                new_tag = upd(tag, KIND_FRAGMENTATION)
                key = _canonical_key(succ.masses, new_tag)
                j = index.get(key)
                if j is None:
                    j = len(states)
                    if j >= STATE_GUARD:
                        raise TruncationError(
                            f"state guard {STATE_GUARD} exceeded at depth {depth[i] + 1} "
                            f"({len(transitions)} transitions so far); reduce max_jumps"
                        )
                    index[key] = j
                    states.append(succ)
                    tags.append(new_tag)
                    depth.append(depth[i] + 1)
                acc[(j, KIND_FRAGMENTATION)] = acc.get((j, KIND_FRAGMENTATION), 0.0) + rate

        out_rate.append(math.fsum(rate_terms))
        for (j, kind), rate in sorted(acc.items()):
            transitions.append((i, j, rate, kind))

    return StateGraph(
        states=states,
        tags=tags,
        depth=depth,
        transitions=transitions,
        out_rate=out_rate,
        max_jumps=max_jumps,
        rate_bound=max(out_rate) if out_rate else 0.0,
    )


@dataclass
class MasterSolution:
    """Time-T law of the truncated chain plus certified error bounds.

    probs[i] is the probability of graph.states[i]; escaped is the
    probability that more than max_jumps jumps occurred by T (exact up
    to integration tolerance). truncation_error_bound is the Poisson
    tail at the graph's rate bound, which dominates escaped and is the
    certified error for any check; tv_bound is the sharper value valid
    for total-variation comparisons of bounded observables.
    """

    graph: StateGraph
    horizon: float
    probs: np.ndarray
    escaped: float
    truncation_error_bound: float

    @property
    def tv_bound(self) -> float:
        return min(self.escaped, self.truncation_error_bound)


def master_equation_solve(graph: StateGraph, horizon: float, rtol: float = 1e-10) -> MasterSolution:
    """Integrate the forward equations to time horizon (stiff, implicit).

    The escape node absorbs the full out-rate of depth-max_jumps states,
    so its mass is exactly the probability of leaving the truncation.
    """
    if not (isinstance(horizon, (int, float)) and math.isfinite(horizon) and horizon >= 0.0):
        raise ParameterError(f"horizon must be finite and >= 0, got {horizon!r}")
    n = len(graph.states)
    tail = float(poisson.sf(graph.max_jumps, graph.rate_bound * horizon)) if horizon > 0 else 0.0

    if horizon == 0.0:
        probs = np.zeros(n)
        probs[0] = 1.0
        return MasterSolution(graph, 0.0, probs, 0.0, 0.0)

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    routed = np.zeros(n)
    for i, j, rate, _kind in graph.transitions:
        rows.append(j)
        cols.append(i)
        vals.append(rate)
        routed[i] += rate
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(-graph.out_rate[i])
        leak = graph.out_rate[i] - routed[i]
        # frontier states (and any state with unexpanded flux) feed escape
        if leak > 0.0:
            rows.append(n)
            cols.append(i)
            vals.append(leak)
    q_t = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))

    p0 = np.zeros(n + 1)
    p0[0] = 1.0
    sol = solve_ivp(
        lambda _t, p: q_t @ p,
        (0.0, horizon),
        p0,
        method="BDF",
        jac=lambda _t, _p: q_t,
        rtol=rtol,
        atol=1e-14,
        t_eval=[horizon],
    )
    if not sol.success:
        raise NumericError(f"forward-equation integration failed: {sol.message}")
    p = sol.y[:, -1]
    total = float(p.sum())
    if abs(total - 1.0) > 1e-9:
        raise NumericError(f"probability mass drifted to {total!r} (|1 - total| > 1e-9)")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    escaped = float(p[n])
    if escaped > tail + 1e-8:
        raise NumericError(f"escape mass {escaped!r} exceeds its Poisson tail bound {tail!r}")
    return MasterSolution(graph, float(horizon), p[:n], escaped, tail)


def observable_marginal(
    solution: MasterSolution,
    observable: Callable[[MassSequence, Hashable], Hashable],
) -> Dict[Hashable, float]:
    """Push the state law through an observable; sums to 1 - escaped."""
    out: Dict[Hashable, float] = {}
    for i, state in enumerate(solution.graph.states):
        p = float(solution.probs[i])
        if p <= 0.0:
            continue
        key = observable(state, solution.graph.tags[i])
        out[key] = out.get(key, 0.0) + p
    return out


def expectation(
    solution: MasterSolution,
    func: Callable[[MassSequence, Hashable], float],
) -> float:
    """Mean of func over the truncated law (escaped mass contributes 0)."""
    return math.fsum(
        float(solution.probs[i]) * func(state, solution.graph.tags[i])
        for i, state in enumerate(solution.graph.states)
        if solution.probs[i] > 0.0
    )


@dataclass(frozen=True)
class ComparisonReport:
    tv_distance: float
    confidence_width: float
    threshold: float
    sample_size: int
    verdict: bool


def compare_empirical(
    dist: Mapping[Hashable, float],
    samples: Sequence[Hashable],
    tolerance: float = 0.0,
    truncation_bound: float = 0.0,
    delta: float = 1e-3,
) -> ComparisonReport:
    """Total-variation test of empirical samples against an oracle marginal.

    dist may be a sub-probability (deficit = escaped mass); the deficit
    becomes its own category that no sample can hit, so it is charged
    against the truncation allowance. The confidence width is the
    distribution-free TV bound mean + deviation:
    sqrt(k/n)/2 + sqrt(ln(1/delta)/(2n)) over k categories, valid with
    probability 1 - delta. Verdict passes iff
    tv <= tolerance + truncation_bound + width.
    """
    if len(samples) == 0:
        raise ParameterError("cannot compare against an empty sample list")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")
    n = len(samples)
    emp: Dict[Hashable, float] = {}
    w = 1.0 / n
    for s in samples:
        emp[s] = emp.get(s, 0.0) + w
    oracle = dict(dist)
    deficit = 1.0 - math.fsum(oracle.values())
    if deficit > 1e-12:
        oracle[ESCAPED] = oracle.get(ESCAPED, 0.0) + deficit
    cats = set(oracle) | set(emp)
    tv = 0.5 * math.fsum(abs(emp.get(c, 0.0) - oracle.get(c, 0.0)) for c in cats)
    k = len(cats)
    width = 0.5 * math.sqrt(k / n) + math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    threshold = tolerance + truncation_bound + width
    return ComparisonReport(
        tv_distance=tv,
        confidence_width=width,
        threshold=threshold,
        sample_size=n,
        verdict=tv <= threshold,
    )


def export_distribution(solution: MasterSolution) -> List[str]:
    """Audit lines: one 'mass,mass,...|tag probability' per state + escape."""
    lines = []
    for i, state in enumerate(solution.graph.states):
        masses = ",".join(f"{v:.12g}" for v in state.masses)
        tag = solution.graph.tags[i]
        label = masses if tag is None else f"{masses}|{tag!r}"
        lines.append(f"{label} {float(solution.probs[i]):.12e}")
    lines.append(f"{ESCAPED} {solution.escaped:.12e}")
    return lines
