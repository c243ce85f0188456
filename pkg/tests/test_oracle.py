import math

import numpy as np
import pytest

from voi_sched.index import packet_index
from voi_sched.model import AssumptionViolation, FilterParams, ProcessParams, no_delivery_variance
from voi_sched.oracle import (
    InstanceTooLarge,
    SmallInstance,
    alpha_product,
    all_patterns,
    brute_force_optimal,
    expected_cost_fixed_order,
    index_order,
    index_policy_cost,
    interchange_cost_difference,
    interchange_margin,
    simple_margin,
    margin_grid,
    mc_variance_oracle,
    pathwise_cost,
    random_instance,
)

PP, FP = ProcessParams(0.6, 1.0), FilterParams(0.2)


def test_zero_packets_no_delivery_sum():
    inst = SmallInstance.build(5, [], PP, FP, 0.7, e2_start=no_delivery_variance(1, PP))
    expect = sum(no_delivery_variance(slot, PP) for slot in range(1, 6))
    assert expected_cost_fixed_order(inst, []) == pytest.approx(expect, rel=1e-14)


def test_one_step_hand_recursion():
    inst = SmallInstance.build(2, [(1, 0.5)], PP, FP, 1.0, e2_start=0.8)
    w2 = packet_index(inst.packets[0], 2, PP, FP).w2
    ac2 = (0.6 * 0.8) ** 2
    assert expected_cost_fixed_order(inst, [0]) == pytest.approx(0.8 + ac2 * 0.8 + w2, rel=1e-14)


def test_identical_packets_order_free():
    inst = SmallInstance.build(4, [(0, 0.5), (0, 0.5)], PP, FP, 0.6, e2_start=1.0)
    assert expected_cost_fixed_order(inst, [0, 1]) == expected_cost_fixed_order(inst, [1, 0])


def test_bad_order_rejected():
    inst = SmallInstance.build(3, [(0, 0.5)], PP, FP, 0.6)
    with pytest.raises(ValueError):
        expected_cost_fixed_order(inst, [0, 0])


def test_one_packet_served_first():
    inst = SmallInstance.build(3, [(0, 0.5)], PP, FP, 0.6, 1.0)
    order, cost = brute_force_optimal(inst)
    assert order[0] == 0 and cost == pytest.approx(expected_cost_fixed_order(inst, [0]))


def test_last_decision_is_argmin_index():
    g = np.random.default_rng(3)
    for _ in range(50):
        pkts = [(int(g.integers(-3, 2)), float(g.uniform(0, 3))) for _ in range(3)]
        inst = SmallInstance.build(2, pkts, PP, FP, 1.0, 0.5)
        order, _ = brute_force_optimal(inst)
        w2s = [packet_index(p, 2, PP, FP).w2 for p in inst.packets]
        assert w2s[order[0]] == min(w2s)


def test_reliable_channel_is_deterministic():
    inst = SmallInstance.build(5, [(0, 0.4), (-1, 1.2), (2, 0.1)], PP, FP, 1.0, 0.3)
    order = index_order(inst)
    run = pathwise_cost(inst, order, [True] * 4)
    assert run.cost == pytest.approx(expected_cost_fixed_order(inst, order), rel=1e-14)


def test_size_budget():
    inst = SmallInstance.build(7, [(0, 1.0)], PP, FP, 0.5)
    with pytest.raises(InstanceTooLarge):
        brute_force_optimal(inst)
    with pytest.raises(InstanceTooLarge):
        brute_force_optimal(SmallInstance.build(3, [(0, 1.0)] * 5, PP, FP, 0.5))


def test_index_optimal_in_certified_region():
    g = np.random.default_rng(11)
    for _ in range(60):
        inst = random_instance(g, horizon_max=5, packets_max=4)
        _, best = brute_force_optimal(inst)
        assert index_policy_cost(inst) == pytest.approx(best, rel=1e-9)


def test_alpha_product_bounds():
    coeffs = [0.6, 0.48, 0.6, 0.48]
    assert alpha_product(coeffs, 2, 1) == 1.0
    assert alpha_product(coeffs, 1, 4) == pytest.approx((0.6 * 0.48) ** 4)
    assert 0 < alpha_product(coeffs, 1, 3) <= 0.36 ** 3


def test_interchange_margin_identical_packets_zero():
    inst = SmallInstance.build(4, [(0, 0.5), (0, 0.5)], PP, FP, 0.5, 1.0)
    for pat in all_patterns(4):
        assert interchange_margin(inst, 0, 1, pat) == 0.0


def test_interchange_margin_sign_and_value():
    g = np.random.default_rng(21)
    checked = 0
    while checked < 100:
        inst = random_instance(g, horizon_max=6, packets_max=4, min_packets=2, initial_only=True)
        q = [i for i in index_order(inst) if inst.packets[i].t_gen <= 1]
        if len(q) < 2:
            continue
        for pat in all_patterns(inst.horizon):
            m = interchange_margin(inst, q[0], q[-1], pat)
            d = interchange_cost_difference(inst, q[0], q[-1], pat)
            assert m <= 1e-12
            assert m == pytest.approx(d, rel=1e-9, abs=1e-12)
        checked += 1
    with pytest.raises(ValueError):
        interchange_margin(inst, q[0], q[1], (False,) * (inst.horizon - 1))


def test_simple_margin_examples():
    m, ok = simple_margin(0.6, 0.2)
    assert m == pytest.approx(1.2304 - 0.5625, abs=1e-12) and ok
    m, ok = simple_margin(0.5, 0.5)
    assert m == pytest.approx(1.0625 - 1 / 3, abs=1e-12) and ok
    with pytest.raises(AssumptionViolation):
        simple_margin(0.9, 0.5)


def test_margin_nonnegative_below_half():
    grid = margin_grid([0.1, 0.25, 0.4, 0.5])
    assert grid.shape == (80, 4)
    assert np.all(grid[:, 2] >= 0)


def test_variance_oracle_examples():
    est, se = mc_variance_oracle(0, 0.0, ProcessParams(0.9, 1.0), FilterParams(0.2), 10**5, seed=1)
    assert abs(est - 1.0) < 3 * se
    _, se1 = mc_variance_oracle(2, 0.5, ProcessParams(0.9, 1.0), FilterParams(0.2), 10**5, seed=2)
    _, se2 = mc_variance_oracle(2, 0.5, ProcessParams(0.9, 1.0), FilterParams(0.2), 2 * 10**5, seed=2)
    assert se2 / se1 == pytest.approx(1 / math.sqrt(2), rel=0.2)
    with pytest.raises(ValueError):
        mc_variance_oracle(0, 0.0, PP, FP, 100)
