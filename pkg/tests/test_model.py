import math
from collections import deque

import numpy as np
import pytest

from voi_sched.model import (
    AssumptionViolation,
    EstimatorState,
    FilterParams,
    ModelError,
    Packet,
    ProcessParams,
    SourceProfile,
    check_assumption,
    evolve_process,
    filter_update,
    gain_bound,
    generate_packet,
    in_certified_region,
    innovation_step,
    no_delivery_variance,
    step,
)


def test_evolve_process_examples():
    pp = ProcessParams(0.6, 1.0)
    assert evolve_process(0.0, pp, 0.0) == 0.0
    assert evolve_process(1.0, pp, 0.5) == pytest.approx(1.1, abs=1e-15)


def test_process_variance_at_three():
    # sigma2 (1 - a^6) / (1 - a^2) = 1.4896 for a = 0.6
    pp = ProcessParams(0.6, 1.0)
    g = np.random.default_rng(3)
    n = 10**6
    state = np.zeros(n)
    for _ in range(3):
        state = evolve_process(state, pp, g.standard_normal(n))
    v = state.var(ddof=1)
    se = np.sqrt(2.0 / (n - 1)) * 1.4896
    assert no_delivery_variance(3, pp) == pytest.approx(1.4896, abs=1e-12)
    assert abs(v - 1.4896) < 3 * se


def test_generate_packet_examples():
    assert generate_packet(SourceProfile(1, 0.0), 1.7, 2, 5.0).value == 1.7
    pkt = generate_packet(SourceProfile(1, 4.0), 2.0, 3, 1.0, packet_id=9)
    assert pkt.value == 4.0 and pkt.t_gen == 3 and pkt.packet_id == 9 and pkt.sigma2_s == 4.0
    with pytest.raises(ModelError):
        generate_packet(SourceProfile(1, 1.0), 0.0, 0, 0.0)


def test_sensing_noise_variance():
    g = np.random.default_rng(5)
    n = 10**6
    state = g.standard_normal(n)
    value = generate_packet(SourceProfile(1, 0.5), state, 1, g.standard_normal(n)).value
    d = value - state
    se = 0.5 * np.sqrt(2.0 / (n - 1))
    assert abs(d.var(ddof=1) - 0.5) < 3 * se


def test_filter_update_examples():
    pp = ProcessParams(0.6, 1.0)
    est = EstimatorState(state=0.0, estimate=1.0, slot=4)
    assert filter_update(est, None, FilterParams(0.5), pp) == pytest.approx(0.6)
    pkt = Packet(0, 1, 2, 3.0, 1.0)
    assert filter_update(est, pkt, FilterParams(0.0), pp) == pytest.approx(0.6)
    est0 = EstimatorState(state=0.0, estimate=0.0, slot=5)
    assert filter_update(est0, Packet(0, 1, 5, 1.0, 0.0), FilterParams(0.5), pp) == pytest.approx(0.3)
    with pytest.raises(ModelError):
        filter_update(est0, Packet(0, 1, 6, 1.0, 0.0), FilterParams(0.5), pp)


def test_assumption_bounds():
    assert gain_bound(0.9) == pytest.approx(0.19 / 0.81)
    assert math.isinf(gain_bound(0.0))
    check_assumption(ProcessParams(0.9, 1.0), FilterParams(0.2))
    with pytest.raises(AssumptionViolation):
        check_assumption(ProcessParams(0.9, 1.0), FilterParams(0.5))
    with pytest.raises(AssumptionViolation):
        ProcessParams(1.0, 1.0)
    with pytest.raises(AssumptionViolation):
        FilterParams(-0.1)
    assert in_certified_region(0.6, 0.2)
    assert not in_certified_region(0.9, 0.5)


def test_zero_a_and_noiseless_source_are_finite():
    pp = ProcessParams(0.0, 1.0)
    check_assumption(pp, FilterParams(3.0))
    assert no_delivery_variance(5, pp) == 1.0


def _walk(pp, fp, deliveries, noise, x0=0.0, e0=0.0):
    est = EstimatorState.start(x0, e0, slot=0)
    out = [est]
    for slot, pkt in enumerate(deliveries):
        est = step(est, pkt, noise[slot], fp, pp)
        out.append(est)
    return out


def test_error_identity_and_no_delivery_branch():
    pp, fp = ProcessParams(0.8, 1.0), FilterParams(0.3)
    g = np.random.default_rng(0)
    noise = g.standard_normal(30)
    states = _walk(pp, fp, [None] * 30, noise, x0=0.4, e0=0.4)
    for s0, s1, wt in zip(states, states[1:], noise):
        assert s1.error == s1.state - s1.estimate
        assert s1.error == pytest.approx(0.8 * s0.error + wt, abs=1e-14)


def test_innovation_coefficients_and_noise():
    pp, fp = ProcessParams(0.9, 1.0), FilterParams(0.2)
    g = np.random.default_rng(1)
    est = EstimatorState.start(0.0, 0.0, slot=0)
    pkt = None
    for slot in range(6):
        nxt = step(est, None, float(g.standard_normal()), fp, pp)
        if slot == 3:
            pkt = Packet(0, 1, 3, est.state + 0.7 * float(g.standard_normal()), 0.49)
        est = nxt
    # est.t == 6; deliver the age-3 packet
    w6 = float(g.standard_normal())
    nxt = step(est, pkt, w6, fp, pp)
    coeff, noise = innovation_step(est, pkt, fp, pp)
    assert coeff == pytest.approx(0.9 * 0.8)
    assert nxt.error == pytest.approx(coeff * est.error + noise, abs=1e-12)
    wnext = float(g.standard_normal())
    after = step(nxt, None, wnext, fp, pp)
    coeff0, noise0 = innovation_step(nxt, None, fp, pp)
    assert coeff0 == 0.9 and noise0 == wnext
    assert after.error == pytest.approx(0.9 * nxt.error + wnext, abs=1e-14)


def test_innovation_requires_step_first():
    pp, fp = ProcessParams(0.9, 1.0), FilterParams(0.2)
    est = EstimatorState.start(0.0, 0.0)
    with pytest.raises(ModelError):
        innovation_step(est, None, fp, pp)


def test_innovation_history_too_short():
    pp, fp = ProcessParams(0.9, 1.0), FilterParams(0.2)
    est = EstimatorState(0.0, 0.0, slot=10, history=deque(maxlen=3))
    pkt = Packet(0, 1, 2, 0.0, 0.1)
    step(est, pkt, 0.1, fp, pp)
    assert innovation_step(est, pkt, fp, pp) == (pytest.approx(0.72), None)


def test_no_delivery_mean_error_converges():
    pp = ProcessParams(0.6, 1.0)
    g = np.random.default_rng(9)
    n = 10**5
    error = np.zeros(n)
    for slot in range(1, 6):
        error = 0.6 * error + g.standard_normal(n)
        target = no_delivery_variance(slot, pp)
        e2 = error * error
        assert abs(e2.mean() - target) < 3 * e2.std(ddof=1) / np.sqrt(n)
