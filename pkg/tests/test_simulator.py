"""Event-driven simulation: pinned cases, pathwise invariants, coupling."""

import math

import numpy as np
import pytest

from coagfrag import (
    ConfigurationError,
    MassSequence,
    ParameterError,
    SimConfig,
    coagulation_kernel,
    count_growth_bound,
    coupling_rate_constant,
    dist_delta,
    fragmentation_kernel,
    generator_apply,
    martingale_residual,
    moment_growth_bound,
    preset_measure,
    run_replicas,
    simulate,
    simulate_coupled,
    step,
    total_rates,
)
from coagfrag.simulate import (
    KIND_COALESCENCE,
    KIND_FRAGMENTATION,
    coupled_stream,
    replica_stream,
)

K_ONE = coagulation_kernel("constant", value=1.0, lam=1.0)
K_ZERO = coagulation_kernel("constant", value=0.0, lam=1.0)
K_SUM = coagulation_kernel("sum_power", alpha=1.0, beta=1.0)
F_ONE = fragmentation_kernel("constant", value=1.0)
F_ZERO = fragmentation_kernel("constant", value=0.0)
BINARY = preset_measure("binary_half", lam=1.0)
EMPTY_BETA = preset_measure("binary_half", lam=1.0)


def _config(**kw):
    base = dict(
        initial=MassSequence((1.0,) * 4),
        coag=K_ONE,
        frag=F_ZERO,
        beta=BINARY,
        horizon=1.0,
        seed=12,
        lam=1.0,
    )
    base.update(kw)
    return SimConfig(**base)


def test_total_rates_pinned():
    assert total_rates(MassSequence((1.0,) * 4), K_ONE, F_ZERO, BINARY) == (6.0, 0.0)
    assert total_rates(MassSequence((3.0, 2.0, 1.0)), K_SUM, F_ZERO, BINARY) == (12.0, 0.0)
    two_weight = preset_measure("binary_half", lam=1.0, weight=2.0)
    rc, rf = total_rates(MassSequence((1.0,) * 3), K_ZERO, F_ONE, two_weight)
    assert (rc, rf) == (0.0, 6.0)


def test_step_absorbed_sentinel():
    cfg = _config(initial=MassSequence((1.0,)), coag=K_ONE, frag=F_ZERO)
    rec, state = step(MassSequence((1.0,)), replica_stream(1, 0), cfg)
    assert rec is None
    assert state.masses == (1.0,)


def test_step_single_possible_merge():
    cfg = _config(initial=MassSequence((1.0, 1.0)))
    rec, state = step(MassSequence((1.0, 1.0)), replica_stream(2, 0), cfg)
    assert rec.kind == KIND_COALESCENCE
    assert (rec.i, rec.j_or_atom) == (1, 2)
    assert state.masses == (2.0,)
    assert rec.time > 0.0


def test_step_single_possible_split():
    cfg = _config(initial=MassSequence((1.0,)), coag=K_ZERO, frag=F_ONE)
    rec, state = step(MassSequence((1.0,)), replica_stream(3, 0), cfg)
    assert rec.kind == KIND_FRAGMENTATION
    assert rec.i == 1
    assert rec.j_or_atom == 1
    assert state.masses == (0.5, 0.5)


def test_simulate_zero_horizon():
    cfg = _config(horizon=0.0)
    traj = simulate(cfg)
    assert traj.events == []
    assert traj.final_state.masses == cfg.initial.masses
    assert traj.final_time == 0.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _config(horizon=-1.0)
    with pytest.raises(ConfigurationError):
        _config(lam=0.0)
    with pytest.raises(ConfigurationError):
        _config(seed=-1)
    with pytest.raises(ConfigurationError):
        _config(replicas=0)
    with pytest.raises(ConfigurationError):
        _config(stop_norm=2.0)  # not above norm(initial) = 4


def test_event_times_strictly_increasing_and_mass_monotone():
    cfg = _config(
        initial=MassSequence((1.0,) * 6),
        coag=K_SUM,
        frag=F_ONE,
        horizon=2.0,
        seed=77,
    )
    for replica in range(30):
        traj = simulate(cfg, replica=replica, record_events=True)
        last_t = 0.0
        mass = cfg.initial.total_mass
        count = len(cfg.initial)
        frags = 0
        for ev in traj.events:
            assert ev.time > last_t
            last_t = ev.time
            assert ev.pre_mass == pytest.approx(mass, rel=1e-12)
            assert ev.post_mass <= ev.pre_mass * (1.0 + 1e-12)
            assert ev.pre_count == count
            if ev.kind == KIND_FRAGMENTATION:
                frags += 1
            count = ev.post_count
            mass = ev.post_mass
            assert count <= len(cfg.initial) + (BINARY.max_fragments - 1) * frags
        assert traj.final_state.total_mass == pytest.approx(mass, rel=1e-12)
        assert traj.n_events == len(traj.events)


def test_replay_determinism():
    cfg = _config(coag=K_SUM, frag=F_ONE, horizon=2.0, seed=99)
    a = simulate(cfg, replica=5, record_events=True)
    b = simulate(cfg, replica=5, record_events=True)
    assert a.events == b.events
    assert a.final_state.masses == b.final_state.masses
    assert a.sup_norm_lambda == b.sup_norm_lambda
    c = simulate(cfg, replica=6, record_events=True)
    assert c.events != a.events  # different replica, different stream


def test_streams_keep_all_seed_bits():
    # Keys above 2**63 must not be coerced through float64, which would
    # round the low bits and collapse nearby seeds onto one stream.
    big = 2**63 + 12345
    assert replica_stream(big, 0).random(4).tolist() != replica_stream(
        big + 1, 0
    ).random(4).tolist()
    # The coupled salt pushes every seed above 2**63, so adjacent user
    # seeds exercise the same path.
    assert coupled_stream(107, 0).random(4).tolist() != coupled_stream(
        108, 0
    ).random(4).tolist()


def test_debug_rate_mode_on_nonlinear_kernel():
    cfg = _config(
        initial=MassSequence((2.0, 1.5, 1.0, 0.5)),
        coag=coagulation_kernel("geometric_over_sum", alpha=0.9, beta=0.2),
        frag=fragmentation_kernel("power", alpha=1.0),
        horizon=1.5,
        seed=31,
    )
    for replica in range(10):
        simulate(cfg, replica=replica, debug_rates=True)


def test_stop_norm_censors_once_crossed():
    cfg = _config(
        initial=MassSequence((1.0,) * 4),
        coag=K_ZERO,
        frag=F_ONE,
        lam=0.5,
        horizon=8.0,
        stop_norm=6.0,
        seed=41,
    )
    hit_any = False
    for replica in range(40):
        traj = simulate(cfg, replica=replica, record_events=True)
        if not traj.stopped:
            continue
        hit_any = True
        assert traj.events[-1].stopped
        assert traj.events[-1].post_norm_lambda >= 6.0
        # No earlier event may already have crossed.
        for ev in traj.events[:-1]:
            assert ev.post_norm_lambda < 6.0
    assert hit_any


def test_moment_bound_small_scale():
    cfg = _config(
        initial=MassSequence((1.0,) * 8),
        coag=K_SUM,
        frag=F_ONE,
        lam=0.5,
        horizon=2.0,
        seed=7,
        replicas=2000,
    )
    sups = np.array([t.sup_norm_lambda for t in run_replicas(cfg)])
    bound = moment_growth_bound(cfg)
    mean = sups.mean()
    se = sups.std(ddof=1) / math.sqrt(len(sups))
    assert mean + 3.0 * se <= bound


def test_count_bound_small_scale():
    cfg = _config(
        initial=MassSequence((1.0,) * 3),
        coag=K_ONE,
        frag=F_ONE,
        horizon=1.5,
        seed=8,
        replicas=2000,
    )
    sups = np.array([t.sup_count for t in run_replicas(cfg)])
    mean = sups.mean()
    se = sups.std(ddof=1) / math.sqrt(len(sups))
    bound = count_growth_bound(cfg)
    assert mean <= bound * (1.0 + 3.0 * se / max(mean, 1e-12))


def test_coupled_identical_inputs_coincide():
    cfg = _config(coag=K_SUM, frag=F_ONE, horizon=1.0, seed=17)
    m = MassSequence((1.0,) * 4)
    a, b, sup_delta = simulate_coupled(m, m, 2, 2, cfg, replica=0)
    assert sup_delta == 0.0
    assert a.final_state.masses == b.final_state.masses
    assert len(a.events) == len(b.events)
    for ea, eb in zip(a.events, b.events):
        assert (ea.time, ea.kind, ea.i, ea.j_or_atom) == (eb.time, eb.kind, eb.i, eb.j_or_atom)


def test_coupled_constant_kernel_hand_trace():
    # Constant K accepts every candidate in both copies, so the pair
    # moves in lockstep and the moment gap stays at its initial value.
    eta = 0.1
    cfg = _config(
        initial=MassSequence((1.0, 1.0)),
        coag=K_ONE,
        frag=F_ZERO,
        horizon=50.0,
        seed=23,
    )
    m = MassSequence((1.0, 1.0))
    mt = MassSequence((1.0 + eta, 1.0))
    a, b, sup_delta = simulate_coupled(m, mt, 1, 1, cfg, replica=0)
    assert a.final_state.masses == (2.0,)
    assert b.final_state.masses == (2.0 + eta,)
    assert sup_delta == pytest.approx(eta, rel=1e-12)


def test_coupled_level_validation():
    cfg = _config()
    m = MassSequence((1.0, 1.0))
    with pytest.raises(ParameterError):
        simulate_coupled(m, m, 0, 1, cfg)
    with pytest.raises(ParameterError):
        simulate_coupled(m, m, 3, 2, cfg)


def test_coupled_contraction_bound_small_scale():
    cfg = _config(
        initial=MassSequence((1.0,) * 4),
        coag=K_SUM,
        frag=F_ONE,
        horizon=1.0,
        seed=29,
        stop_norm=10.0,
    )
    m = cfg.initial
    eta = 0.01
    mt = MassSequence((1.0 + eta,) + (1.0,) * 3)
    level = BINARY.full_level()
    sups = []
    for replica in range(400):
        _, _, sd = simulate_coupled(m, mt, level, level, cfg, replica=replica)
        sups.append(sd)
    sups = np.array(sups)
    delta0 = dist_delta(m, mt, cfg.lam)
    c_hat = coupling_rate_constant(cfg, m, mt)
    bound = delta0 * math.exp(c_hat * (cfg.stop_norm + 1.0) * cfg.horizon)
    mean = sups.mean()
    se = sups.std(ddof=1) / math.sqrt(len(sups))
    assert mean <= bound * (1.0 + 3.0 * se / max(mean, 1e-12))


def test_generator_pinned():
    cfg = _config(initial=MassSequence((1.0, 1.0, 1.0)), coag=K_ONE, frag=F_ZERO)
    m = MassSequence((1.0, 1.0, 1.0))
    assert generator_apply(lambda s: 4.2, m, cfg) == 0.0
    assert generator_apply(lambda s: float(len(s)), m, cfg) == pytest.approx(-3.0)
    cons = _config(initial=m, coag=K_ONE, frag=F_ONE)  # binary_half conserves mass
    assert generator_apply(lambda s: s.total_mass, m, cons) == pytest.approx(0.0, abs=1e-12)


def test_martingale_residual_constant_phi():
    cfg = _config(coag=K_SUM, frag=F_ONE, horizon=1.0, seed=37, replicas=50, stop_norm=30.0)
    mean, se = martingale_residual(lambda s: 1.0, cfg, replicas=50)
    assert mean == 0.0
    assert se == 0.0


def test_martingale_residual_zero_horizon():
    cfg = _config(horizon=0.0, replicas=20, coag=K_SUM, frag=F_ONE)
    mean, se = martingale_residual(lambda s: math.exp(-s.masses[0]) if len(s) else 1.0, cfg, replicas=20)
    assert mean == 0.0


def test_growth_bound_monotone_in_time():
    cfg = _config(coag=K_SUM, frag=F_ONE, lam=0.5, horizon=3.0)
    assert moment_growth_bound(cfg, 1.0) <= moment_growth_bound(cfg, 2.0)
    assert count_growth_bound(cfg, 1.0) <= count_growth_bound(cfg, 2.0)
