"""Exact event-driven simulation of the merge-split jump process.

Single trajectories use the direct stochastic simulation algorithm:
exponential waiting times from the exact total rate, then categorical
selection of the event. Pair rates are kept as per-particle row sums
s_i = sum_{j != i} K(m_i, m_j), updated incrementally after each event
(O(N) work instead of O(N^2)) and recomputed from scratch every 2**16
events to bound float drift.

Coupled pairs instead share one candidate stream (thinning): candidates
arrive at a dominating rate built from box suprema, carry a uniform
mark, and each member accepts a candidate iff the mark falls under its
own rate — so two (or, with different truncation levels, differently
truncated) processes are driven by identical randomness and can be
compared pathwise. Marginally each member has exactly the single-run
law.

Randomness is counter-based (Philox) and keyed by (seed, replica), so
any replica can be replayed independently and bit-identically. Coupled
runs draw from a stream salted away from the single-run keys so that a
coupled run and a plain run with the same seed stay independent.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .dislocation import DislocationMeasure, project_atom, restrict, sample_atom, c_beta_lambda
from .errors import ConfigurationError, NumericError, ParameterError
from .kernels import CoagulationKernel, FragmentationKernel, sup_box
from .metrics import distance_constant
from .state import MassSequence, _stable_descending, coalesce, fragment, norm

__all__ = [
    "SimConfig",
    "EventRecord",
    "Trajectory",
    "KIND_COALESCENCE",
    "KIND_FRAGMENTATION",
    "replica_stream",
    "coupled_stream",
    "total_rates",
    "step",
    "simulate",
    "run_replicas",
    "simulate_coupled",
    "generator_apply",
    "martingale_residual",
    "moment_growth_bound",
    "count_growth_bound",
    "coupling_rate_constant",
]

KIND_COALESCENCE = "coalescence"
KIND_FRAGMENTATION = "fragmentation"

# Full refresh period for the incremental pair-rate row sums.
_REFRESH_PERIOD = 1 << 16
_RATE_DRIFT_TOL = 1e-9
_MASS_DRIFT_TOL = 1e-12

# Stream salt separating coupled-run randomness from single-run streams
# derived from the same user seed.
_COUPLED_SALT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def replica_stream(seed: int, replica: int) -> np.random.Generator:
    """Independent, replayable stream for one replica of one experiment."""
    # The key must be handed over as uint64 words: a plain list whose
    # first entry exceeds 2**63 would be coerced through float64 and
    # lose the low key bits, collapsing distinct seeds onto one stream.
    key = np.array([seed & _MASK64, replica & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def coupled_stream(seed: int, replica: int) -> np.random.Generator:
    """Shared stream driving both members of one coupled replica."""
    return replica_stream(seed ^ _COUPLED_SALT, replica)


@dataclass(frozen=True)
class SimConfig:
    """Everything one trajectory needs; immutable and hashable by content."""

    initial: MassSequence
    coag: CoagulationKernel
    frag: FragmentationKernel
    beta: DislocationMeasure
    horizon: float
    seed: int = 0
    lam: float = 1.0
    stop_norm: Optional[float] = None
    replicas: int = 1

    def __post_init__(self):
        if not isinstance(self.initial, MassSequence):
            raise ConfigurationError("initial must be a MassSequence")
        if not isinstance(self.coag, CoagulationKernel):
            raise ConfigurationError("coag must be a CoagulationKernel")
        if not isinstance(self.frag, FragmentationKernel):
            raise ConfigurationError("frag must be a FragmentationKernel")
        if not isinstance(self.beta, DislocationMeasure):
            raise ConfigurationError("beta must be a DislocationMeasure")
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon) and self.horizon >= 0.0):
            raise ConfigurationError(f"horizon must be finite and >= 0, got {self.horizon!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigurationError(f"lam must lie in (0, 1], got {self.lam!r}")
        if self.stop_norm is not None:
            base = norm(self.initial, self.lam)
            if not (math.isfinite(self.stop_norm) and self.stop_norm > base):
                raise ConfigurationError(
                    f"stop_norm must exceed the initial norm {base!r}, got {self.stop_norm!r}"
                )
        if not isinstance(self.replicas, int) or self.replicas < 1:
            raise ConfigurationError(f"replicas must be a positive integer, got {self.replicas!r}")

    def config_hash(self) -> str:
        """Stable short digest of every law-determining field."""
        parts = [
            "masses=" + ",".join(repr(v) for v in self.initial.masses),
            f"coag={self.coag.name}{sorted(self.coag.params.items())}",
            f"frag={self.frag.name}{sorted(self.frag.params.items())}",
            "beta=" + ";".join(f"{t.ratios!r}*{t.weight!r}" for t in self.beta.atoms),
            f"beta_lam={self.beta.lam!r}",
            f"horizon={self.horizon!r}",
            f"seed={self.seed!r}",
            f"lam={self.lam!r}",
            f"stop_norm={self.stop_norm!r}",
            f"replicas={self.replicas!r}",
        ]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One accepted jump. Indices are 1-based slots of the ordered pre state.

    kind is coalescence (i, j = merged slots, i < j) or fragmentation
    (i = split slot, j_or_atom = 1-based atom index). ``stopped`` marks
    the jump that drove the tracked norm across stop_norm; the record
    keeps its true kind so the post state stays reproducible from the
    pre state plus the event.

    From ``step`` the time field holds the waiting time; within a
    Trajectory it holds absolute time.
    """

    time: float
    kind: str
    i: int
    j_or_atom: int
    pre_count: int
    post_count: int
    pre_mass: float
    post_mass: float
    post_norm_lambda: float
    stopped: bool = False


@dataclass
class Trajectory:
    config_hash: str
    replica: int
    events: List[EventRecord]
    final_state: MassSequence
    final_time: float
    sup_norm_lambda: float
    sup_count: int
    n_events: int
    frag_count: int
    stopped: bool


def _kfun(coag: CoagulationKernel) -> Callable[[float, float], float]:
    # Hot-loop version of eval: masses in the engine are validated once
    # at entry and stay strictly positive, so skip per-call checks.
    raw = coag.raw
    return lambda x, y: float(raw(x, y))


def _ffun(frag: FragmentationKernel) -> Callable[[float], float]:
    raw = frag.raw
    return lambda x: float(raw(x))


def _row_sums(masses: Sequence[float], kfun) -> List[float]:
    n = len(masses)
    s = [0.0] * n
    for a in range(n):
        ma = masses[a]
        for b in range(a + 1, n):
            v = kfun(ma, masses[b])
            s[a] += v
            s[b] += v
    return s


def total_rates(
    state: MassSequence,
    coag: CoagulationKernel,
    frag: FragmentationKernel,
    beta: DislocationMeasure,
) -> Tuple[float, float]:
    """(total merge rate, total split rate) for one state, exact sums."""
    masses = state.masses
    rho_c = math.fsum(
        coag.eval(masses[a], masses[b]) for a in range(len(masses)) for b in range(a + 1, len(masses))
    )
    rho_f = beta.total_weight * math.fsum(frag.eval(x) for x in masses)
    if not (math.isfinite(rho_c) and math.isfinite(rho_f)) or rho_c < 0.0 or rho_f < 0.0:
        raise NumericError(f"rates must be finite and >= 0, got ({rho_c!r}, {rho_f!r})")
    return rho_c, rho_f


def _sorted_rank(masses: Sequence[float], p: int) -> int:
    """1-based position slot p takes under the stable descending sort."""
    mp = masses[p]
    r = 1
    for k, mk in enumerate(masses):
        if mk > mp or (mk == mp and k < p):
            r += 1
    return r


def _pick(weights: Sequence[float], target: float) -> int:
    acc = 0.0
    last = 0
    for idx, w in enumerate(weights):
        if w > 0.0:
            acc += w
            last = idx
            if target < acc:
                return idx
    return last


def step(
    state: MassSequence,
    rng: np.random.Generator,
    config: SimConfig,
) -> Tuple[Optional[EventRecord], MassSequence]:
    """Advance one event. Returns (None, state) when the state is absorbed.

    The record's time field is the waiting time drawn for this event.
    Deterministic given the generator's cursor.
    """
    masses = state.masses
    kfun, ffun = _kfun(config.coag), _ffun(config.frag)
    s = _row_sums(masses, kfun)
    fvals = [ffun(x) for x in masses]
    ssum = math.fsum(s)
    fsum_f = math.fsum(fvals)
    rho_c = 0.5 * ssum
    rho_f = config.beta.total_weight * fsum_f
    total = rho_c + rho_f
    if total <= 0.0:
        return None, state
    wait = -math.log1p(-rng.random()) / total
    pre_mass = state.total_mass
    pre_count = len(masses)
    if rng.random() * total < rho_c:
        p = _pick(s, rng.random() * ssum)
        row = [0.0 if q == p else kfun(masses[p], masses[q]) for q in range(len(masses))]
        q = _pick(row, rng.random() * math.fsum(row))
        i, j = sorted((p + 1, q + 1))
        new_state = coalesce(state, i, j)
        kind, i_rec, j_rec = KIND_COALESCENCE, i, j
    else:
        p = _pick(fvals, rng.random() * fsum_f)
        atom_idx = sample_atom(config.beta, rng.random())
        theta = config.beta.atoms[atom_idx - 1]
        new_state = fragment(state, p + 1, theta)
        kind, i_rec, j_rec = KIND_FRAGMENTATION, p + 1, atom_idx
    post_norm = norm(new_state, config.lam)
    stopped = config.stop_norm is not None and post_norm >= config.stop_norm
    rec = EventRecord(
        time=wait,
        kind=kind,
        i=i_rec,
        j_or_atom=j_rec,
        pre_count=pre_count,
        post_count=len(new_state),
        pre_mass=pre_mass,
        post_mass=new_state.total_mass,
        post_norm_lambda=post_norm,
        stopped=stopped,
    )
    return rec, new_state


def simulate(
    config: SimConfig,
    replica: int = 0,
    record_events: bool = True,
    debug_rates: bool = False,
) -> Trajectory:
    """One exact trajectory on [0, horizon], censored at stop_norm if set.

    record_events=False skips building EventRecord objects (aggregate
    fields are still tracked); debug_rates=True cross-checks the
    incremental pair-rate sums against a full recomputation after every
    event and raises NumericError on drift beyond 1e-9.
    """
    rng = replica_stream(config.seed, replica)
    chash = config.config_hash()
    lam = config.lam
    kfun, ffun = _kfun(config.coag), _ffun(config.frag)
    bw = config.beta.total_weight
    atoms = config.beta.atoms
    # k_max bounds the per-split particle gain; zero-ratio atoms shrink
    # the system so they only help.
    k_gain = config.beta.max_fragments - 1

    masses = list(config.initial.masses)
    n0 = len(masses)
    s = _row_sums(masses, kfun)
    fvals = [ffun(x) for x in masses]

    t = 0.0
    events: List[EventRecord] = []
    n_events = 0
    frag_count = 0
    sup_count = n0
    cur_mass = math.fsum(masses)
    cur_norm = cur_mass if lam == 1.0 else math.fsum(v**lam for v in masses)
    sup_norm = cur_norm
    stopped = False
    final_time = config.horizon

    while t < config.horizon:
        ssum = math.fsum(s)
        rho_c = 0.5 * ssum if ssum > 0.0 else 0.0
        fsum_f = math.fsum(fvals)
        rho_f = bw * fsum_f if fsum_f > 0.0 else 0.0
        total = rho_c + rho_f
        if not math.isfinite(total):
            raise NumericError(f"total rate is not finite at t={t!r}")
        if total <= 0.0:
            break  # absorbed: fast-forward to the horizon
        wait = -math.log1p(-rng.random()) / total
        if t + wait >= config.horizon:
            t = config.horizon
            break
        t += wait
        pre_mass = cur_mass
        pre_count = len(masses)

        if rng.random() * total < rho_c:
            # --- merge: pick row by its rate share, then partner.
            p = _pick(s, rng.random() * ssum)
            mp = masses[p]
            row = [0.0 if q == p else kfun(mp, masses[q]) for q in range(len(masses))]
            q = _pick(row, rng.random() * math.fsum(row))
            mq = masses[q]
            w = mp + mq
            if record_events:
                rank_i, rank_j = sorted((_sorted_rank(masses, p), _sorted_rank(masses, q)))
            sw = 0.0
            for k in range(len(masses)):
                if k == p or k == q:
                    continue
                mk = masses[k]
                kw = kfun(mk, w)
                s[k] += kw - kfun(mk, mp) - kfun(mk, mq)
                sw += kw
            masses[p] = w
            s[p] = sw
            fvals[p] = ffun(w)
            del masses[q], s[q], fvals[q]
            kind, i_rec, j_rec = KIND_COALESCENCE, rank_i if record_events else 0, rank_j if record_events else 0
        else:
            # --- split: pick particle by split-rate share, then atom.
            p = _pick(fvals, rng.random() * fsum_f)
            atom_idx = sample_atom(config.beta, rng.random())
            theta = atoms[atom_idx - 1]
            mp = masses[p]
            frags = [r * mp for r in theta.ratios if r * mp > 0.0]
            if record_events:
                rank_i = _sorted_rank(masses, p)
            for k in range(len(masses)):
                if k == p:
                    continue
                s[k] -= kfun(masses[k], mp)
            del masses[p], s[p], fvals[p]
            # each appended fragment adds its pair rates to every row that
            # precedes it, including fragments appended before it.
            for f in frags:
                sf = math.fsum(kfun(f, mk) for mk in masses)
                for k in range(len(masses)):
                    s[k] += kfun(masses[k], f)
                masses.append(f)
                s.append(sf)
                fvals.append(ffun(f))
            frag_count += 1
            kind, i_rec, j_rec = KIND_FRAGMENTATION, rank_i if record_events else 0, atom_idx

        n_events += 1
        if n_events % _REFRESH_PERIOD == 0 or debug_rates:
            fresh = _row_sums(masses, kfun)
            if debug_rates:
                for a, b in zip(s, fresh):
                    if abs(a - b) > _RATE_DRIFT_TOL * max(1.0, abs(b)):
                        raise NumericError(f"incremental rate drift {abs(a - b)!r} at t={t!r}")
            s = fresh

        cur_mass = math.fsum(masses)
        assert cur_mass <= pre_mass * (1.0 + _MASS_DRIFT_TOL), (
            f"total mass increased: {pre_mass!r} -> {cur_mass!r}"
        )
        assert len(masses) <= n0 + k_gain * frag_count, (
            f"count bound violated: {len(masses)} > {n0} + {k_gain}*{frag_count}"
        )
        cur_norm = cur_mass if lam == 1.0 else math.fsum(v**lam for v in masses)
        if cur_norm > sup_norm:
            sup_norm = cur_norm
        if len(masses) > sup_count:
            sup_count = len(masses)
        hit_stop = config.stop_norm is not None and cur_norm >= config.stop_norm
        if record_events:
            events.append(
                EventRecord(
                    time=t,
                    kind=kind,
                    i=i_rec,
                    j_or_atom=j_rec,
                    pre_count=pre_count,
                    post_count=len(masses),
                    pre_mass=pre_mass,
                    post_mass=cur_mass,
                    post_norm_lambda=cur_norm,
                    stopped=hit_stop,
                )
            )
        if hit_stop:
            stopped = True
            final_time = t
            break

    return Trajectory(
        config_hash=chash,
        replica=replica,
        events=events,
        final_state=MassSequence._from_sorted(_stable_descending(masses)),
        final_time=final_time,
        sup_norm_lambda=sup_norm,
        sup_count=sup_count,
        n_events=n_events,
        frag_count=frag_count,
        stopped=stopped,
    )


def run_replicas(
    config: SimConfig,
    replicas: Optional[int] = None,
    record_events: bool = False,
) -> List[Trajectory]:
    """Simulate config.replicas (or an override) independent trajectories."""
    n = config.replicas if replicas is None else replicas
    return [simulate(config, replica=r, record_events=record_events) for r in range(n)]


class _CoupledMember:
    """Mutable per-member bookkeeping inside a coupled run."""

    __slots__ = (
        "masses", "level", "cut", "k_gain", "events", "frag_count",
        "n_events", "sup_norm", "cur_norm", "cur_mass", "n0", "sup_count",
    )

    def __init__(self, initial: MassSequence, level: int, restricted: DislocationMeasure, lam: float):
        self.masses = list(initial.masses)
        self.level = level
        self.cut = 1.0 - 1.0 / level
        self.k_gain = restricted.max_fragments - 1
        self.events: List[EventRecord] = []
        self.frag_count = 0
        self.n_events = 0
        self.n0 = len(self.masses)
        self.sup_count = self.n0
        self.cur_mass = math.fsum(self.masses)
        self.cur_norm = self.cur_mass if lam == 1.0 else math.fsum(v**lam for v in self.masses)
        self.sup_norm = self.cur_norm


def _member_apply(
    member: _CoupledMember,
    t: float,
    kind: str,
    i: int,
    j_or_atom: int,
    new_masses: List[float],
    lam: float,
    stop_norm: Optional[float],
    record_events: bool,
) -> bool:
    """Commit an accepted event; returns True when stop_norm was hit."""
    pre_mass, pre_count = member.cur_mass, len(member.masses)
    member.masses = new_masses
    member.n_events += 1
    if kind == KIND_FRAGMENTATION:
        member.frag_count += 1
    member.cur_mass = math.fsum(new_masses)
    assert member.cur_mass <= pre_mass * (1.0 + _MASS_DRIFT_TOL), (
        f"total mass increased: {pre_mass!r} -> {member.cur_mass!r}"
    )
    assert len(new_masses) <= member.n0 + member.k_gain * member.frag_count, (
        f"count bound violated: {len(new_masses)} > {member.n0} + {member.k_gain}*{member.frag_count}"
    )
    member.cur_norm = (
        member.cur_mass if lam == 1.0 else math.fsum(v**lam for v in new_masses)
    )
    if member.cur_norm > member.sup_norm:
        member.sup_norm = member.cur_norm
    if len(new_masses) > member.sup_count:
        member.sup_count = len(new_masses)
    hit = stop_norm is not None and member.cur_norm >= stop_norm
    if record_events:
        member.events.append(
            EventRecord(
                time=t,
                kind=kind,
                i=i,
                j_or_atom=j_or_atom,
                pre_count=pre_count,
                post_count=len(new_masses),
                pre_mass=pre_mass,
                post_mass=member.cur_mass,
                post_norm_lambda=member.cur_norm,
                stopped=hit,
            )
        )
    return hit


def simulate_coupled(
    m: MassSequence,
    mt: MassSequence,
    p: int,
    q: int,
    config: SimConfig,
    replica: int = 0,
    record_events: bool = True,
) -> Tuple[Trajectory, Trajectory, float]:
    """Two trajectories driven by one candidate stream, plus sup delta_lam.

    The first member starts from m and fragments through level-p
    truncation; the second starts from mt with level q (p <= q; use
    p = q = beta.full_level() for a plain same-law coupling). Candidates
    are drawn at dominating rates built from box suprema over the
    initial masses (valid forever since total mass never grows); each
    member accepts a merge candidate (i, j) iff the shared mark falls
    under its own pair rate, and a split candidate iff the mark falls
    under its split rate AND the shared atom passes its level indicator,
    in which case the atom is applied through the level projection.
    Candidates addressing slots a member does not occupy are no-ops for
    that member. Both members read every candidate, so their event
    randomness is identical and the pair can be compared pathwise.

    Stops at the horizon or as soon as EITHER member's lam-norm reaches
    stop_norm. Returns (trajectory from m, trajectory from mt,
    sup over event times, including time 0, of delta_lam between them).
    """
    if not (isinstance(p, int) and isinstance(q, int) and 1 <= p <= q):
        raise ParameterError(f"levels must be integers with 1 <= p <= q, got ({p!r}, {q!r})")
    rng = coupled_stream(config.seed, replica)
    lam = config.lam
    kfun, ffun = _kfun(config.coag), _ffun(config.frag)
    bw = config.beta.total_weight
    a_box = max(m.total_mass, mt.total_mass)
    if a_box <= 0.0:
        return (
            Trajectory(config.config_hash(), replica, [], m, config.horizon, 0.0, 0, 0, 0, False),
            Trajectory(config.config_hash(), replica, [], mt, config.horizon, 0.0, 0, 0, 0, False),
            0.0,
        )
    k_bar = sup_box(config.coag, a_box)
    f_bar = sup_box(config.frag, a_box)
    if not (math.isfinite(k_bar) and math.isfinite(f_bar)):
        raise ConfigurationError(f"box suprema must be finite, got K={k_bar!r}, F={f_bar!r}")

    ma = _CoupledMember(m, p, restrict(config.beta, p), lam)
    mb = _CoupledMember(mt, q, restrict(config.beta, q), lam)
    members = (ma, mb)

    def delta_now() -> float:
        aa, bb = ma.masses, mb.masses
        return math.fsum(
            abs((aa[k] if k < len(aa) else 0.0) ** lam - (bb[k] if k < len(bb) else 0.0) ** lam)
            for k in range(max(len(aa), len(bb)))
        )

    sup_delta = delta_now()
    t = 0.0
    stopped = False
    final_time = config.horizon

    while t < config.horizon:
        pmax = max(len(ma.masses), len(mb.masses))
        pair_rate = k_bar * pmax * (pmax - 1) / 2.0
        split_rate = f_bar * bw * pmax
        lam_tot = pair_rate + split_rate
        if lam_tot <= 0.0:
            break
        wait = -math.log1p(-rng.random()) / lam_tot
        if t + wait >= config.horizon:
            t = config.horizon
            break
        t += wait
        accepted_any = False
        hit = False

        if rng.random() * lam_tot < pair_rate:
            # shared merge candidate: uniform ordered pair + mark.
            k_idx = int(rng.integers(0, pmax * (pmax - 1) // 2))
            i = 1
            span = pmax - 1
            while k_idx >= span:
                k_idx -= span
                i += 1
                span -= 1
            j = i + 1 + k_idx
            z = rng.random() * k_bar
            for member in members:
                mm = member.masses
                if j <= len(mm) and z <= kfun(mm[i - 1], mm[j - 1]):
                    raw = list(mm)
                    raw[i - 1] += raw[j - 1]
                    del raw[j - 1]
                    hit |= _member_apply(
                        member, t, KIND_COALESCENCE, i, j,
                        list(_stable_descending(raw)), lam, config.stop_norm, record_events,
                    )
                    accepted_any = True
        else:
            # shared split candidate: uniform slot, full-measure atom, mark.
            i = int(rng.integers(1, pmax + 1))
            atom_idx = sample_atom(config.beta, rng.random())
            theta = config.beta.atoms[atom_idx - 1]
            z = rng.random() * f_bar
            for member in members:
                mm = member.masses
                if i <= len(mm) and theta.largest <= member.cut and z <= ffun(mm[i - 1]):
                    cut_theta = project_atom(theta, member.level)
                    parent = mm[i - 1]
                    raw = list(mm[: i - 1]) + [
                        r * parent for r in cut_theta.ratios if r * parent > 0.0
                    ] + list(mm[i:])
                    hit |= _member_apply(
                        member, t, KIND_FRAGMENTATION, i, atom_idx,
                        list(_stable_descending(raw)), lam, config.stop_norm, record_events,
                    )
                    accepted_any = True

        if accepted_any:
            d = delta_now()
            if d > sup_delta:
                sup_delta = d
            if hit:
                stopped = True
                final_time = t
                break

    chash = config.config_hash()
    out = []
    for member in members:
        out.append(
            Trajectory(
                config_hash=chash,
                replica=replica,
                events=member.events,
                final_state=MassSequence._from_sorted(_stable_descending(member.masses)),
                final_time=final_time,
                sup_norm_lambda=member.sup_norm,
                sup_count=member.sup_count,
                n_events=member.n_events,
                frag_count=member.frag_count,
                stopped=stopped,
            )
        )
    return out[0], out[1], sup_delta


def generator_apply(phi: Callable[[MassSequence], float], m: MassSequence, config: SimConfig) -> float:
    """Exact jump-rate-weighted drift of phi at state m (finite double sum)."""
    base = phi(m)
    terms = []
    masses = m.masses
    for a in range(len(masses)):
        for b in range(a + 1, len(masses)):
            rate = config.coag.eval(masses[a], masses[b])
            if rate > 0.0:
                terms.append(rate * (phi(coalesce(m, a + 1, b + 1)) - base))
    for a in range(len(masses)):
        fx = config.frag.eval(masses[a])
        if fx <= 0.0:
            continue
        for atom in config.beta.atoms:
            terms.append(fx * atom.weight * (phi(fragment(m, a + 1, atom)) - base))
    return math.fsum(terms)


def _replay_states(config: SimConfig, traj: Trajectory):
    """Yield (state, hold_start) pairs along a recorded trajectory."""
    state = config.initial
    t_prev = 0.0
    for rec in traj.events:
        yield state, t_prev, rec.time
        if rec.kind == KIND_COALESCENCE:
            state = coalesce(state, rec.i, rec.j_or_atom)
        else:
            state = fragment(state, rec.i, config.beta.atoms[rec.j_or_atom - 1])
        t_prev = rec.time
    yield state, t_prev, traj.final_time


def martingale_residual(
    phi: Callable[[MassSequence], float],
    config: SimConfig,
    replicas: int,
) -> Tuple[float, float]:
    """Monte-Carlo mean and standard error of the compensated increment.

    For each replica, phi(final) - phi(initial) minus the exact
    piecewise-constant time integral of the generator drift along the
    trajectory (states are constant between events, so the integral is
    exact, not quadrature). Zero in expectation when the drift-adjusted
    process is a martingale on [0, horizon ^ stop time].
    """
    if replicas < 1:
        raise ParameterError(f"replicas must be >= 1, got {replicas!r}")
    res = np.empty(replicas)
    for r in range(replicas):
        traj = simulate(config, replica=r, record_events=True)
        pieces = []
        last_state = config.initial
        for state, t0, t1 in _replay_states(config, traj):
            if t1 > t0:
                pieces.append(generator_apply(phi, state, config) * (t1 - t0))
            last_state = state
        res[r] = phi(last_state) - phi(config.initial) - math.fsum(pieces)
    mean = float(np.mean(res))
    stderr = float(np.std(res, ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("inf")
    return mean, stderr


def moment_growth_bound(config: SimConfig, t: Optional[float] = None) -> float:
    """Upper bound for E[sup of the lam-norm on [0, t]]: norm * exp(F_bar * C_beta * t)."""
    horizon = config.horizon if t is None else t
    a = config.initial.total_mass
    f_bar = sup_box(config.frag, a) if a > 0.0 else 0.0
    c_beta = c_beta_lambda(config.beta, config.lam)
    return norm(config.initial, config.lam) * math.exp(f_bar * c_beta * horizon)


def count_growth_bound(config: SimConfig, t: Optional[float] = None) -> float:
    """Upper bound for E[sup particle count]: N0 * exp((k-1) * F_bar * beta(Theta) * t)."""
    horizon = config.horizon if t is None else t
    a = config.initial.total_mass
    f_bar = sup_box(config.frag, a) if a > 0.0 else 0.0
    gain = config.beta.max_fragments - 1
    return len(config.initial) * math.exp(gain * f_bar * config.beta.total_weight * horizon)


def coupling_rate_constant(config: SimConfig, m: MassSequence, mt: MassSequence) -> float:
    """Growth-rate constant of the coupled-distance bound delta0 * exp(rate*(x+1)*t).

    Assembled from the increment constants of both kernels on the box
    that contains every reachable mass, the split cost constant, and
    the power-splitting comparison constant at (frag exponent, lam).
    """
    a = max(m.total_mass, mt.total_mass)
    if a <= 0.0:
        return 0.0
    kappa = float(config.coag.holder_constant(a))
    mu = float(config.frag.holder_constant(a))
    c_beta = c_beta_lambda(config.beta, config.lam)
    f_bar = sup_box(config.frag, a)
    alpha = config.frag.alpha
    mass_pow = max(m.total_mass**alpha, mt.total_mass**alpha)
    c_split = distance_constant(alpha, config.lam)
    return 8.0 * kappa + 4.0 * mu * c_beta * c_split * mass_pow + f_bar * c_beta
