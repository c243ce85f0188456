import math

import numpy as np
import pytest

from voi_sched.engine import (
    ChannelParams,
    ConfigError,
    EpisodeConfig,
    InitialPacket,
    MultiProcessConfig,
    ProcessBlock,
    SimplexError,
    coupled_run,
    draw_episode,
    run_episode,
    run_monte_carlo,
    run_multiprocess,
    run_multiprocess_mc,
)
from voi_sched.index import EXACT, packet_index
from voi_sched.model import (
    AssumptionViolation,
    EstimatorState,
    FilterParams,
    Packet,
    ProcessParams,
    SourceProfile,
    no_delivery_variance,
    step,
)
from voi_sched.policies import decide

DETERMINISTIC = ["index-voi", "freshest-first", "fifo", "best-sensor"]


def mixed_cfg(**kw):
    base = dict(
        horizon=40,
        process=ProcessParams(0.8, 1.0),
        filter=FilterParams(0.25),
        sources=(SourceProfile(1, 0.1, 0.4), SourceProfile(2, 2.0, 0.6), SourceProfile(3, 0.7, 0.3)),
        channel=ChannelParams(0.6),
        initial_queue=(InitialPacket(-3, 0.4), InitialPacket(0, 1.2), InitialPacket(5, 0.3, 2)),
        e0=0.5,
        seed=99,
    )
    base.update(kw)
    return EpisodeConfig(**base)


def reference_episode(cfg, kind, replication):
    """Slot loop written directly against the model, policy and filter primitives."""
    pp, fp = cfg.process, cfg.filter
    d = draw_episode(cfg, replication, need_policy=False)
    horizon = cfg.horizon
    est = EstimatorState(d.x0, d.x0 - cfg.e0, slot=0)
    est = step(est, None, d.noise[0], fp, pp)
    queue, pid = [], len(cfg.initial_queue)
    known = {}
    e2, decisions = [], []

    def arrivals(slot, state):
        nonlocal pid
        for m, src in enumerate(cfg.sources):
            if d.arr_u[slot - 1, m] < src.arrival_rate:
                p = Packet(pid, src.source_id, slot, state + math.sqrt(src.sigma2_s) * d.obs_z[slot - 1, m], src.sigma2_s)
                queue.append(p)
                pid += 1

    for slot in range(1, horizon):
        e2.append(est.error ** 2)
        for i, ip in enumerate(cfg.initial_queue):
            avail = 1 if ip.t_gen <= 1 else ip.t_gen + cfg.arrival_lag
            if avail == slot:
                queue.append(Packet(i, ip.source_id, ip.t_gen, float(d.init_y[i]), ip.sigma2_s))
        x_t = est.state
        if cfg.arrival_lag == 0:
            arrivals(slot, x_t)
        choice = decide(kind, queue, slot, pp, fp, mode=cfg.mode)
        delivered = None
        decisions.append(-1 if choice.idle else choice.packet_id)
        if not choice.idle and d.chan_u[slot - 1] < cfg.channel.reliability:
            delivered = next(p for p in queue if p.packet_id == choice.packet_id)
            queue.remove(delivered)
        est = step(est, delivered, d.noise[slot], fp, pp)
        if cfg.arrival_lag == 1:
            arrivals(slot, x_t)
    e2.append(est.error ** 2)
    return np.array(e2), np.array(decisions)


@pytest.mark.parametrize("kind", DETERMINISTIC)
@pytest.mark.parametrize("lag", [0, 1])
@pytest.mark.parametrize("mode", ["paper", "exact"])
def test_kernel_matches_reference(kind, lag, mode):
    cfg = mixed_cfg(arrival_lag=lag, mode=mode)
    for r in range(4):
        res = run_episode(cfg, kind, r)
        e2, dec = reference_episode(cfg, kind, r)
        np.testing.assert_array_equal(res.decisions, dec)
        np.testing.assert_allclose(res.e2, e2, rtol=1e-12, atol=1e-14)


def test_determinism_and_accounting():
    cfg = mixed_cfg()
    for kind in DETERMINISTIC + ["random"]:
        coef, b = run_episode(cfg, kind, 3), run_episode(cfg, kind, 3)
        assert coef.e2.tobytes() == b.e2.tobytes()
        np.testing.assert_array_equal(coef.decisions, b.decisions)
        assert coef.n_delivered == coef.n_removed == int(coef.delivered.sum())
        # at most one attempt per slot, idle only on an empty queue
        assert len(coef.decisions) == cfg.horizon - 1
        assert coef.final_queue == len(coef.packet_t_gen) - coef.n_delivered


def test_draws_are_policy_independent():
    cfg = mixed_cfg()
    digests = {run_episode(cfg, k, 5).draws_digest for k in DETERMINISTIC + ["random"]}
    assert len(digests) == 1
    assert run_episode(cfg, "fifo", 6).draws_digest not in digests


def test_no_delivery_limit():
    cfg = EpisodeConfig(3, ProcessParams(0.6, 1.0), FilterParams(0.2), (SourceProfile(1, 0.5, 1.0),),
                        ChannelParams(1e-12), seed=4)
    mc = run_monte_carlo(cfg, "index-voi", 10**5)
    e23 = mc.e2[:, 2]
    assert no_delivery_variance(3, cfg.process) == pytest.approx(1.4896)
    assert abs(e23.mean() - 1.4896) < 3 * e23.std(ddof=1) / math.sqrt(len(e23))


def test_fresh_packet_with_deadbeat_gain():
    # a_c = 0, so e(2) is exactly the injected noise of a zero-age packet
    pp, fp = ProcessParams(0.7, 1.0), FilterParams(1.0)
    cfg = EpisodeConfig(2, pp, fp, (), ChannelParams(1.0), initial_queue=(InitialPacket(1, 0.5),), seed=8, mode=EXACT)
    mc = run_monte_carlo(cfg, "index-voi", 10**5)
    target = packet_index(Packet(0, 0, 1, 0.0, 0.5), 1, pp, fp, EXACT).w2
    e22 = mc.e2[:, 1]
    assert abs(e22.mean() - target) < 3 * e22.std(ddof=1) / math.sqrt(len(e22))


def test_noiseless_monte_carlo():
    cfg = EpisodeConfig(10, ProcessParams(0.9, 0.0), FilterParams(0.1), (SourceProfile(1, 0.0, 0.5),), ChannelParams(0.5))
    mc = run_monte_carlo(cfg, "index-voi", 2)
    assert mc.mean == 0.0 and mc.se == 0.0


def test_parallel_monte_carlo_is_identical():
    cfg = mixed_cfg(horizon=30)
    coef = run_monte_carlo(cfg, "index-voi", 40)
    b = run_monte_carlo(cfg, "index-voi", 40, workers=3)
    assert coef.e2.tobytes() == b.e2.tobytes()
    np.testing.assert_allclose(coef.mean_curve, coef.e2.mean(axis=0))


def test_monotone_in_reliability():
    means = []
    for rel in (0.25, 0.5, 1.0):
        mc = run_monte_carlo(mixed_cfg(channel=ChannelParams(rel), horizon=60), "index-voi", 400)
        means.append((mc.mean, mc.se))
    for (m1, s1), (m2, s2) in zip(means, means[1:]):
        assert m2 <= m1 + 3 * math.hypot(s1, s2)


def test_config_validation():
    with pytest.raises(AssumptionViolation):
        mixed_cfg(filter=FilterParams(0.9)).validate()
    with pytest.raises(ConfigError):
        mixed_cfg(horizon=1).validate()
    with pytest.raises(ConfigError):
        mixed_cfg(sources=(SourceProfile(2, 0.1, 0.5),)).validate()
    with pytest.raises(ConfigError):
        ChannelParams(0.0)


def test_coupled_run_examples():
    cfg = EpisodeConfig(20, ProcessParams(0.8, 1.0), FilterParams(0.3), (SourceProfile(1, 0.5, 0.3),),
                        ChannelParams(0.6), initial_queue=(InitialPacket(0, 0.2), InitialPacket(-2, 1.5), InitialPacket(1, 0.9)))
    same = coupled_run(cfg, (1, 1), replication=2)
    assert same.cost_index == same.cost_swapped
    fail = coupled_run(cfg, (0, 2), replication=3, first_outcome="failure")
    assert not fail.first_success and fail.cost_index == fail.cost_swapped
    ok = coupled_run(cfg, (0, 1), replication=4, first_outcome="success")
    assert ok.first_success and ok.index_run.decisions[0] == ok.psi1 and ok.swapped_run.decisions[0] == ok.psi2
    assert ok.index_run.draws_digest == ok.swapped_run.draws_digest
    with pytest.raises(ConfigError):
        coupled_run(cfg, (0, 5))


def sym_block():
    return ProcessBlock(ProcessParams(0.8, 1.0), FilterParams(0.3), (SourceProfile(1, 0.5, 0.5),))


def test_single_process_multiproc_equals_run_episode():
    blk = sym_block()
    m = MultiProcessConfig(30, (blk,), ChannelParams(0.7), (1.0,), seed=3)
    for r in range(3):
        res = run_multiprocess(m, "index-voi", r)
        ref = run_episode(m.episode(0), "index-voi", r)
        assert res.episodes[0].e2.tobytes() == ref.e2.tobytes()


def test_unserved_process_matches_closed_form():
    blk = sym_block()
    m = MultiProcessConfig(12, (blk, blk), ChannelParams(0.7), (1.0, 0.0), seed=3)
    s = run_multiprocess_mc(m, "index-voi", 20000)
    costs = s.process_costs[:, 1]
    target = sum(no_delivery_variance(slot, blk.process) for slot in range(1, 13))
    assert abs(costs.mean() - target) < 3 * costs.std(ddof=1) / math.sqrt(len(costs))


def test_simplex_checks():
    blk = sym_block()
    with pytest.raises(SimplexError):
        MultiProcessConfig(10, (blk, blk), ChannelParams(0.7), (0.6, 0.5)).validate()
    with pytest.raises(SimplexError):
        MultiProcessConfig(10, (blk, blk), ChannelParams(0.7), (1.2, -0.2)).validate()
    with pytest.raises(SimplexError):
        MultiProcessConfig(10, (blk, blk), ChannelParams(0.7), (1.0,)).validate()
