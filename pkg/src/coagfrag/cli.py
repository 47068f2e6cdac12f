"""Experiment orchestration: config files in, deterministic artifacts out.

Five verbs, one config format (TOML). Every run writes a summary with
the fully normalized spec echoed back (including the derived constants:
measure weight, split cost, box suprema, truncation tails), so a report
is auditable without the config file that produced it. Exit codes are a
contract for CI:

    0  success, all verdicts pass
    2  configuration rejected (aggregated messages, one per problem)
    3  a numerical routine failed at runtime
    4  a verification verdict failed

Replicas are keyed by index, so output bytes are identical for a given
spec and seed no matter how many worker processes run them.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from .dislocation import DislocationAtom, DislocationMeasure, c_beta_lambda, preset_measure, truncation_tails
from .errors import CoagFragError, ConfigurationError, NumericError, TruncationError
from .kernels import coagulation_kernel, fragmentation_kernel, sup_box
from .metrics import check_inequalities, equality_showcase_case, random_case
from .oracle import compare_empirical, enumerate_states, master_equation_solve, observable_marginal
from .simulate import (
    SimConfig,
    Trajectory,
    count_growth_bound,
    coupling_rate_constant,
    moment_growth_bound,
    simulate,
    simulate_coupled,
)
from .state import MassSequence, norm

__all__ = ["ExperimentSpec", "validate", "run", "main"]

_VERB_MODES = {
    "simulate": "simulate",
    "couple": "couple",
    "verify": "verify-inequalities",
    "oracle": "oracle-compare",
    "bounds": "bounds-report",
}
_MODES = set(_VERB_MODES.values())
_FORMATS = ("csv", "json-lines")
_WORKER_ENV = "COAGFRAG_MAX_WORKERS"

_CSV_HEADER = "replica,time,kind,i,j_or_atom,post_count,post_mass,post_norm_lambda,stopped"


@dataclass
class ExperimentSpec:
    """A validated experiment: mode, simulator config, mode options."""

    mode: str
    sim: SimConfig
    coupling: Dict[str, object] = field(default_factory=dict)
    verify: Dict[str, object] = field(default_factory=dict)
    oracle: Dict[str, object] = field(default_factory=dict)
    out_dir: str = "out"
    fmt: str = "csv"
    workers: int = 1
    normalized: Dict[str, object] = field(default_factory=dict)


def _get(raw: dict, key: str, default=None):
    return raw[key] if key in raw else default


def _build_beta(raw: dict, lam: float, errors: List[str], path: str) -> Optional[DislocationMeasure]:
    preset = _get(raw, "preset")
    atoms_raw = _get(raw, "atoms")
    if (preset is None) == (atoms_raw is None):
        errors.append(f"{path}: provide exactly one of 'preset' or 'atoms'")
        return None
    if preset is not None:
        try:
            return preset_measure(str(preset), lam=lam)
        except CoagFragError as e:
            errors.append(f"{path}.preset: {e}")
            return None
    atoms = []
    ok = True
    for k, entry in enumerate(atoms_raw):
        try:
            ratios = entry["ratios"]
            weight = float(entry.get("weight", 1.0))
            atoms.append(DislocationAtom(ratios, weight))
        except (CoagFragError, KeyError, TypeError, ValueError) as e:
            errors.append(f"{path}.atoms[{k}]: {e}")
            ok = False
    if not ok:
        return None
    try:
        return DislocationMeasure(tuple(atoms), lam=lam)
    except CoagFragError as e:
        errors.append(f"{path}.atoms: {e}")
        return None


def _build_sim(raw: dict, errors: List[str], path: str = "sim") -> Optional[SimConfig]:
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected a table")
        return None
    lam = float(_get(raw, "lam", 1.0))
    if not 0.0 < lam <= 1.0:
        errors.append(f"{path}.lam: must lie in (0, 1], got {lam!r}")
        lam = 1.0  # keep validating the rest of the table

    initial = None
    try:
        initial = MassSequence(raw["initial"])
    except KeyError:
        errors.append(f"{path}.initial: required")
    except CoagFragError as e:
        errors.append(f"{path}.initial: {e}")

    coag = frag = None
    coag_raw = _get(raw, "coag")
    if not isinstance(coag_raw, dict) or "kind" not in coag_raw:
        errors.append(f"{path}.coag: table with a 'kind' key required")
    else:
        params = {k: v for k, v in coag_raw.items() if k != "kind"}
        # power-law kernels fix their own increment exponent; only the
        # constant kernel leaves it free, so align it with the distance
        if coag_raw["kind"] == "constant":
            params.setdefault("lam", lam)
        try:
            coag = coagulation_kernel(coag_raw["kind"], **params)
        except (CoagFragError, TypeError) as e:
            errors.append(f"{path}.coag: {e}")
    frag_raw = _get(raw, "frag")
    if not isinstance(frag_raw, dict) or "kind" not in frag_raw:
        errors.append(f"{path}.frag: table with a 'kind' key required")
    else:
        params = {k: v for k, v in frag_raw.items() if k != "kind"}
        try:
            frag = fragmentation_kernel(frag_raw["kind"], **params)
        except (CoagFragError, TypeError) as e:
            errors.append(f"{path}.frag: {e}")

    beta_raw = _get(raw, "beta")
    beta = None
    if not isinstance(beta_raw, dict):
        errors.append(f"{path}.beta: table required")
    else:
        beta = _build_beta(beta_raw, lam, errors, f"{path}.beta")

    if "seed" not in raw:
        errors.append(f"{path}.seed: required (no silent time-based seeding)")
    if None in (initial, coag, frag, beta) or errors:
        return None
    stop_norm = _get(raw, "stop_norm")
    try:
        return SimConfig(
            initial=initial,
            coag=coag,
            frag=frag,
            beta=beta,
            horizon=float(_get(raw, "horizon", 0.0)),
            seed=int(raw["seed"]),
            lam=lam,
            stop_norm=(None if stop_norm is None else float(stop_norm)),
            replicas=int(_get(raw, "replicas", 1)),
        )
    except CoagFragError as e:
        errors.append(f"{path}: {e}")
        return None


def _normalize(spec: ExperimentSpec) -> Dict[str, object]:
    """Echo every resolved field plus the derived constants for the header."""
    sim = spec.sim
    a = sim.initial.total_mass
    consts: Dict[str, object] = {
        "beta_total_weight": sim.beta.total_weight,
        "c_beta_lambda": c_beta_lambda(sim.beta, sim.lam),
        "max_fragments": sim.beta.max_fragments,
        "full_level": sim.beta.full_level(),
        "initial_norm_lambda": norm(sim.initial, sim.lam),
    }
    if a > 0.0:
        consts["coag_sup_box"] = sup_box(sim.coag, a)
        consts["frag_sup_box"] = sup_box(sim.frag, a)
        consts["coag_increment_constant"] = float(sim.coag.holder_constant(a))
        consts["frag_increment_constant"] = float(sim.frag.holder_constant(a))
    consts["truncation_tails"] = [
        [n, *truncation_tails(sim.beta, n, sim.lam)] for n in range(1, sim.beta.full_level() + 1)
    ]
    out: Dict[str, object] = {
        "mode": spec.mode,
        "format": spec.fmt,
        "sim": {
            "initial": list(sim.initial.masses),
            "horizon": sim.horizon,
            "seed": sim.seed,
            "lam": sim.lam,
            "stop_norm": sim.stop_norm,
            "replicas": sim.replicas,
            "coag": {
                "kind": sim.coag.name,
                **sim.coag.params,
                **({"lam": sim.coag.lam} if sim.coag.name == "constant" else {}),
            },
            "frag": {"kind": sim.frag.name, **sim.frag.params},
            "beta": {
                "atoms": [{"ratios": list(t.ratios), "weight": t.weight} for t in sim.beta.atoms],
                "lam": sim.beta.lam,
            },
        },
        "constants": consts,
    }
    for name in ("coupling", "verify", "oracle"):
        options = {k: v for k, v in getattr(spec, name).items() if not k.startswith("_")}
        if options:
            out[name] = options
    return out


def validate(
    raw: dict,
    mode: str,
    seed: Optional[int] = None,
    replicas: Optional[int] = None,
    out_dir: str = "out",
    fmt: str = "csv",
    workers: int = 0,
) -> Tuple[Optional[ExperimentSpec], List[str]]:
    """Aggregate every config problem instead of failing fast."""
    errors: List[str] = []
    if mode not in _MODES:
        errors.append(f"mode: unknown mode {mode!r}")
    file_mode = _get(raw, "mode")
    if file_mode is not None and file_mode != mode:
        errors.append(f"mode: config file says {file_mode!r} but the verb selects {mode!r}")
    if fmt not in _FORMATS:
        errors.append(f"format: must be one of {_FORMATS}, got {fmt!r}")

    sim_raw = dict(_get(raw, "sim", {}))
    if seed is not None:
        sim_raw["seed"] = seed
    if replicas is not None:
        sim_raw["replicas"] = replicas
    sim_errors: List[str] = []
    sim = _build_sim(sim_raw, sim_errors)
    errors.extend(sim_errors)

    coupling = dict(_get(raw, "coupling", {}))
    verify = dict(_get(raw, "verify", {}))
    oracle = dict(_get(raw, "oracle", {}))
    if sim is not None and mode == "couple":
        _validate_coupling(coupling, sim, errors)
    if mode == "verify-inequalities":
        cases = verify.setdefault("cases", 10000)
        if not isinstance(cases, int) or cases < 1:
            errors.append(f"verify.cases: must be a positive integer, got {cases!r}")
    if mode == "oracle-compare":
        jumps = oracle.setdefault("max_jumps", 8)
        if not isinstance(jumps, int) or jumps < 0:
            errors.append(f"oracle.max_jumps: must be a non-negative integer, got {jumps!r}")
        tol = oracle.setdefault("tolerance", 0.02)
        if not (isinstance(tol, (int, float)) and tol >= 0.0):
            errors.append(f"oracle.tolerance: must be >= 0, got {tol!r}")
        obs = oracle.setdefault("observable", "count_coalesced")
        if obs not in ("count", "count_coalesced"):
            errors.append(f"oracle.observable: must be 'count' or 'count_coalesced', got {obs!r}")

    if errors or sim is None:
        return None, errors
    spec = ExperimentSpec(
        mode=mode,
        sim=sim,
        coupling=coupling,
        verify=verify,
        oracle=oracle,
        out_dir=out_dir,
        fmt=fmt,
        workers=_resolve_workers(workers, sim.replicas),
    )
    spec.normalized = _normalize(spec)
    return spec, []


def _validate_coupling(coupling: dict, sim: SimConfig, errors: List[str]) -> None:
    full = sim.beta.full_level()
    p = coupling.setdefault("level_p", full)
    q = coupling.setdefault("level_q", full)
    if not (isinstance(p, int) and isinstance(q, int) and 1 <= p <= q):
        errors.append(f"coupling.level_p/level_q: need integers 1 <= p <= q, got ({p!r}, {q!r})")
    has_perturb = "perturb_index" in coupling or "perturb_delta" in coupling
    has_second = "initial_second" in coupling
    if has_perturb and has_second:
        errors.append("coupling: give either initial_second or perturb_index/perturb_delta, not both")
        return
    if has_second:
        try:
            coupling["_second"] = MassSequence(coupling["initial_second"])
        except CoagFragError as e:
            errors.append(f"coupling.initial_second: {e}")
        return
    idx = coupling.setdefault("perturb_index", 1)
    delta = coupling.setdefault("perturb_delta", 0.0)
    masses = list(sim.initial.masses)
    if not (isinstance(idx, int) and 1 <= idx <= len(masses)):
        errors.append(f"coupling.perturb_index: must address an occupied slot, got {idx!r}")
        return
    try:
        masses[idx - 1] += float(delta)
        coupling["_second"] = MassSequence(masses)
    except (CoagFragError, TypeError, ValueError) as e:
        errors.append(f"coupling.perturb_delta: {e}")


def _resolve_workers(requested: int, replicas: int) -> int:
    cap = os.environ.get(_WORKER_ENV)
    cap_n = int(cap) if cap else (os.cpu_count() or 1)
    n = requested if requested > 0 else (os.cpu_count() or 1)
    return max(1, min(n, cap_n, replicas))


# ---------------------------------------------------------------------------
# Row emission. Bytes must be identical run-to-run: floats via repr
# (shortest round-trip), booleans as 0/1, keys sorted in JSON.

def _event_row(replica: int, rec) -> Dict[str, object]:
    return {
        "replica": replica,
        "time": rec.time,
        "kind": rec.kind,
        "i": rec.i,
        "j_or_atom": rec.j_or_atom,
        "post_count": rec.post_count,
        "post_mass": rec.post_mass,
        "post_norm_lambda": rec.post_norm_lambda,
        "stopped": rec.stopped,
    }


def _write_events(path: Path, rows: List[Dict[str, object]], fmt: str) -> None:
    with open(path, "w") as fh:
        if fmt == "csv":
            fh.write(_CSV_HEADER + "\n")
            for r in rows:
                fh.write(
                    f"{r['replica']},{r['time']!r},{r['kind']},{r['i']},{r['j_or_atom']},"
                    f"{r['post_count']},{r['post_mass']!r},{r['post_norm_lambda']!r},"
                    f"{1 if r['stopped'] else 0}\n"
                )
        else:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


def _write_summary(path: Path, summary: Dict[str, object]) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _mean_se(values: Sequence[float]) -> Tuple[float, float]:
    mean = statistics.fmean(values)
    se = statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return mean, se


# ---------------------------------------------------------------------------
# Replica execution, optionally across processes. Workers rebuild the
# config from the normalized dict (kernel closures do not pickle).

def _sim_from_normalized(nsim: dict) -> SimConfig:
    errors: List[str] = []
    sim = _build_sim(nsim, errors)
    if sim is None:
        raise ConfigurationError("; ".join(errors))
    return sim


def _worker_simulate(payload) -> List[Tuple[int, List[dict], dict]]:
    nsim, replicas = payload
    config = _sim_from_normalized(nsim)
    out = []
    for r in replicas:
        traj = simulate(config, replica=r, record_events=True)
        rows = [_event_row(r, rec) for rec in traj.events]
        out.append((r, rows, _traj_stats(traj)))
    return out


def _worker_couple(payload) -> List[Tuple[int, List[dict], List[dict], dict]]:
    nsim, second, p, q, replicas = payload
    config = _sim_from_normalized(nsim)
    mt = MassSequence(second)
    out = []
    for r in replicas:
        ta, tb, sup_delta = simulate_coupled(config.initial, mt, p, q, config, replica=r)
        rows_a = [_event_row(r, rec) for rec in ta.events]
        rows_b = [_event_row(r, rec) for rec in tb.events]
        out.append((r, rows_a, rows_b, {"sup_delta": sup_delta, "a": _traj_stats(ta), "b": _traj_stats(tb)}))
    return out


def _traj_stats(traj: Trajectory) -> dict:
    return {
        "sup_norm_lambda": traj.sup_norm_lambda,
        "sup_count": traj.sup_count,
        "final_count": len(traj.final_state),
        "final_mass": traj.final_state.total_mass,
        "final_time": traj.final_time,
        "n_events": traj.n_events,
        "frag_count": traj.frag_count,
        "stopped": traj.stopped,
        "first_event_time": traj.events[0].time if traj.events else None,
    }


def _run_batches(worker, payloads: List, workers: int) -> List:
    if workers <= 1 or len(payloads) <= 1:
        results = [worker(p) for p in payloads]
    else:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(worker, payloads))
        except (OSError, PermissionError):
            # restricted environments: fall back to in-process execution
            results = [worker(p) for p in payloads]
    merged = []
    for chunk in results:
        merged.extend(chunk)
    merged.sort(key=lambda item: item[0])
    return merged


def _chunks(n_replicas: int, workers: int) -> List[List[int]]:
    per = max(1, math.ceil(n_replicas / max(1, workers * 4)))
    return [list(range(lo, min(lo + per, n_replicas))) for lo in range(0, n_replicas, per)]


# ---------------------------------------------------------------------------
# Modes.

def _verdict(name: str, empirical: float, bound: float) -> dict:
    return {"name": name, "empirical": empirical, "bound": bound,
            "margin": bound - empirical, "pass": empirical <= bound}


def _run_simulate(spec: ExperimentSpec, out: Path) -> int:
    nsim = spec.normalized["sim"]
    payloads = [(nsim, chunk) for chunk in _chunks(spec.sim.replicas, spec.workers)]
    merged = _run_batches(_worker_simulate, payloads, spec.workers)
    rows: List[dict] = []
    stats: List[dict] = []
    for _r, chunk_rows, st in merged:
        rows.extend(chunk_rows)
        stats.append(st)
    ext = "csv" if spec.fmt == "csv" else "jsonl"
    _write_events(out / f"events.{ext}", rows, spec.fmt)

    sup_norms = [s["sup_norm_lambda"] for s in stats]
    sup_counts = [float(s["sup_count"]) for s in stats]
    mean_norm, se_norm = _mean_se(sup_norms)
    mean_count, se_count = _mean_se(sup_counts)
    verdicts = [
        _verdict("moment_sup_bound", mean_norm + 3.0 * se_norm, moment_growth_bound(spec.sim)),
    ]
    # The exponential count bound needs splits that do not destroy
    # particles outright (at least one fragment per atom).
    if spec.sim.beta.max_fragments >= 1:
        verdicts.append(_verdict("count_sup_bound", mean_count + 3.0 * se_count, count_growth_bound(spec.sim)))
    summary = {
        "config_hash": spec.sim.config_hash(),
        "seed": spec.sim.seed,
        "replicas": spec.sim.replicas,
        "spec": spec.normalized,
        "aggregates": {
            "sup_norm_lambda_mean": mean_norm,
            "sup_norm_lambda_max": max(sup_norms),
            "sup_count_mean": mean_count,
            "sup_count_max": max(sup_counts),
            "events_total": sum(s["n_events"] for s in stats),
            "stopped_fraction": sum(1 for s in stats if s["stopped"]) / len(stats),
        },
        "verdicts": verdicts,
    }
    _write_summary(out / "summary.json", summary)
    return 0 if all(v["pass"] for v in verdicts) else 4


def _run_couple(spec: ExperimentSpec, out: Path) -> int:
    nsim = spec.normalized["sim"]
    second: MassSequence = spec.coupling["_second"]
    p, q = spec.coupling["level_p"], spec.coupling["level_q"]
    payloads = [
        (nsim, list(second.masses), p, q, chunk)
        for chunk in _chunks(spec.sim.replicas, spec.workers)
    ]
    merged = _run_batches(_worker_couple, payloads, spec.workers)
    rows_a: List[dict] = []
    rows_b: List[dict] = []
    sups: List[float] = []
    for _r, ra, rb, st in merged:
        rows_a.extend(ra)
        rows_b.extend(rb)
        sups.append(st["sup_delta"])
    ext = "csv" if spec.fmt == "csv" else "jsonl"
    _write_events(out / f"events_a.{ext}", rows_a, spec.fmt)
    _write_events(out / f"events_b.{ext}", rows_b, spec.fmt)

    delta0 = float(
        math.fsum(
            abs(a**spec.sim.lam - b**spec.sim.lam)
            for a, b in zip(
                list(spec.sim.initial.masses) + [0.0] * max(0, len(second) - len(spec.sim.initial)),
                list(second.masses) + [0.0] * max(0, len(spec.sim.initial) - len(second)),
            )
        )
    )
    mean_sup, se_sup = _mean_se(sups)
    rate = coupling_rate_constant(spec.sim, spec.sim.initial, second)
    summary = {
        "config_hash": spec.sim.config_hash(),
        "seed": spec.sim.seed,
        "replicas": spec.sim.replicas,
        "spec": spec.normalized,
        "aggregates": {
            "initial_delta_lambda": delta0,
            "sup_delta_mean": mean_sup,
            "sup_delta_median": statistics.median(sups),
            "sup_delta_max": max(sups),
            "sup_delta_stderr": se_sup,
            "rate_constant": rate,
        },
        "verdicts": [],
    }
    # The growth bound needs a finite norm cap to be a theorem, and the
    # merge kernel's increment exponent must match the distance
    # exponent; only claim a verdict when both hold.
    if (
        spec.sim.stop_norm is not None
        and delta0 > 0.0
        and abs(spec.sim.coag.lam - spec.sim.lam) < 1e-12
    ):
        bound = delta0 * math.exp(rate * (spec.sim.stop_norm + 1.0) * spec.sim.horizon)
        summary["verdicts"].append(_verdict("coupled_distance_bound", mean_sup + 3.0 * se_sup, bound))
    _write_summary(out / "summary.json", summary)
    return 0 if all(v["pass"] for v in summary["verdicts"]) else 4


def _run_verify(spec: ExperimentSpec, out: Path) -> int:
    cases = int(spec.verify["cases"])
    rng = np.random.default_rng(spec.sim.seed)
    agg: Dict[str, dict] = {}
    failures = 0
    case_inputs = [equality_showcase_case()] + [random_case(rng) for _ in range(cases)]
    for idx, kw in enumerate(case_inputs):
        report = check_inequalities(case_id=f"case{idx:05d}", **kw)
        for c in report.checks:
            slot = agg.setdefault(c.name, {"min_slack": math.inf, "cases": 0, "failures": 0})
            slot["cases"] += 1
            slot["min_slack"] = min(slot["min_slack"], c.slack)
            if not c.passed:
                slot["failures"] += 1
                failures += 1
    lines = [
        f"{name}: cases={slot['cases']} failures={slot['failures']} min_slack={slot['min_slack']:.3e}"
        for name, slot in sorted(agg.items())
    ]
    summary = {
        "config_hash": spec.sim.config_hash(),
        "seed": spec.sim.seed,
        "cases": cases + 1,
        "spec": spec.normalized,
        "checks": {name: slot for name, slot in sorted(agg.items())},
        "failures": failures,
    }
    _write_summary(out / "summary.json", summary)
    (out / "verify_report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if failures == 0 else 4


def _run_oracle(spec: ExperimentSpec, out: Path) -> int:
    jumps = int(spec.oracle["max_jumps"])
    tol = float(spec.oracle["tolerance"])
    with_flag = spec.oracle["observable"] == "count_coalesced"
    if with_flag:
        graph = enumerate_states(
            spec.sim.initial, spec.sim, jumps,
            tag0=False, tag_update=lambda tag, kind: tag or kind == "coalescence",
        )
        observable = lambda state, tag: (len(state), tag)
    else:
        graph = enumerate_states(spec.sim.initial, spec.sim, jumps)
        observable = lambda state, tag: len(state)
    solution = master_equation_solve(graph, spec.sim.horizon)
    marginal = observable_marginal(solution, observable)

    samples = []
    for r in range(spec.sim.replicas):
        traj = simulate(spec.sim, replica=r, record_events=True)
        if with_flag:
            coalesced = any(e.kind == "coalescence" for e in traj.events)
            samples.append((len(traj.final_state), coalesced))
        else:
            samples.append(len(traj.final_state))
    report = compare_empirical(marginal, samples, tolerance=tol, truncation_bound=solution.tv_bound)

    (out / "oracle_distribution.txt").write_text(
        "\n".join(
            f"{','.join(f'{v:.12g}' for v in state.masses)}"
            f"{'' if graph.tags[i] is None else '|' + repr(graph.tags[i])}"
            f" {float(solution.probs[i]):.12e}"
            for i, state in enumerate(graph.states)
        )
        + f"\n__escaped__ {solution.escaped:.12e}\n"
    )
    summary = {
        "config_hash": spec.sim.config_hash(),
        "seed": spec.sim.seed,
        "replicas": spec.sim.replicas,
        "spec": spec.normalized,
        "oracle": {
            "states": len(graph),
            "transitions": len(graph.transitions),
            "rate_bound": graph.rate_bound,
            "escaped": solution.escaped,
            "poisson_tail_bound": solution.truncation_error_bound,
        },
        "verdicts": [
            {
                "name": "oracle_tv",
                "empirical": report.tv_distance,
                "bound": report.threshold,
                "margin": report.threshold - report.tv_distance,
                "pass": report.verdict,
            }
        ],
    }
    _write_summary(out / "summary.json", summary)
    return 0 if report.verdict else 4


def _run_bounds(spec: ExperimentSpec, out: Path) -> int:
    sim = spec.sim
    summary = {
        "config_hash": sim.config_hash(),
        "seed": sim.seed,
        "spec": spec.normalized,
        "bounds": {
            "moment_sup_bound": moment_growth_bound(sim),
            "count_sup_bound": count_growth_bound(sim),
            "coupling_rate_constant": coupling_rate_constant(sim, sim.initial, sim.initial),
        },
    }
    _write_summary(out / "summary.json", summary)
    print(json.dumps(summary["bounds"], sort_keys=True, indent=2))
    return 0


def run(spec: ExperimentSpec) -> int:
    """Execute a validated spec; returns the process exit code."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dispatch = {
        "simulate": _run_simulate,
        "couple": _run_couple,
        "verify-inequalities": _run_verify,
        "oracle-compare": _run_oracle,
        "bounds-report": _run_bounds,
    }
    try:
        return dispatch[spec.mode](spec, out)
    except (NumericError, TruncationError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coagfrag",
        description="Exact merge-split jump-process simulation and verification.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, mode in _VERB_MODES.items():
        sp = sub.add_parser(verb, help=f"run in {mode} mode")
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--seed", type=int, default=None, help="override the file seed")
        sp.add_argument("--replicas", type=int, default=None, help="override the replica count")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--format", choices=_FORMATS, default="csv", dest="fmt")
        sp.add_argument(
            "--workers", type=int, default=0,
            help=f"worker processes (default: cores, capped by ${_WORKER_ENV})",
        )
    args = parser.parse_args(argv)

    try:
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        print(f"config error: cannot read {args.config}: {e}", file=sys.stderr)
        return 2
    except tomllib.TOMLDecodeError as e:
        print(f"config error: {args.config} is not valid TOML: {e}", file=sys.stderr)
        return 2

    spec, errors = validate(
        raw,
        _VERB_MODES[args.verb],
        seed=args.seed,
        replicas=args.replicas,
        out_dir=args.out,
        fmt=args.fmt,
        workers=args.workers,
    )
    if spec is None:
        for err in errors:
            print(f"config error at {err}", file=sys.stderr)
        return 2
    return run(spec)


if __name__ == "__main__":
    raise SystemExit(main())
