"""Brute-force and closed-form oracles for the index policy on small instances.

Costs here use the uncorrelated cost model: attempting packet ``psi`` at slot
``t`` gives::

    e2(t+1) = a_c^2 e2(t) + W2_psi(t+1)     with probability p
    e2(t+1) = a^2 e2(t) + sigma2            otherwise (also when idle)

and the cost is ``sum_{t=1..T} e2(t)`` with ``e2(1)`` given.  Failed packets
stay queued.  Strategies are non-idling: a non-empty queue is always served.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .index import PAPER, EXACT, delta, index_terms, packet_index
from .model import (
    AssumptionViolation,
    FilterParams,
    Packet,
    ProcessParams,
    check_assumption,
    gain_bound,
    no_delivery_variance,
    in_certified_region,
)
from .policies import PolicyKind, served_order

MAX_HORIZON = 6
MAX_PACKETS = 4
STATE_BUDGET = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SmallInstance:
    horizon: int
    packets: tuple[Packet, ...]
    pp: ProcessParams
    fp: FilterParams
    reliability: float
    e2_start: float = 0.0
    mode: str = PAPER

    @classmethod
    def build(cls, horizon, packets: Iterable[tuple[int, float]], pp, fp, reliability, e2_start=0.0, mode=PAPER):
        pkts = tuple(Packet(i, 0, int(tg), 0.0, float(v)) for i, (tg, v) in enumerate(packets))
        return cls(horizon, pkts, pp, fp, reliability, e2_start, mode)

    def state_count(self) -> int:
        branch = 2 * max(1, len(self.packets))
        return sum(branch**k for k in range(self.horizon))

    def check_size(self) -> None:
        if self.horizon > MAX_HORIZON or len(self.packets) > MAX_PACKETS or self.state_count() > STATE_BUDGET:
            raise InstanceTooLarge(
                f"instance with T={self.horizon}, {len(self.packets)} packets exceeds the enumeration budget"
            )

    def w2(self, pkt: Packet, slot: int) -> float:
        return packet_index(pkt, slot, self.pp, self.fp, self.mode).w2

    def available(self, slot: int, remaining: int) -> list[Packet]:
        return [pkt for pkt in self.packets if remaining >> pkt.packet_id & 1 and pkt.t_gen <= slot]

    def full_mask(self) -> int:
        return (1 << len(self.packets)) - 1


def _transitions(inst: SmallInstance, pkt: Packet, slot: int, e2: float) -> tuple[float, float]:
    a2 = inst.pp.coef ** 2
    ac2 = inst.fp.closed_loop(inst.pp) ** 2
    return ac2 * e2 + inst.w2(pkt, slot + 1), a2 * e2 + inst.pp.sigma2


def expected_cost_fixed_order(inst: SmallInstance, order: Sequence[int]) -> float:
    """Exact expected cost of the static priority list ``order`` (packet ids).

    Each slot attempts the first undelivered, already generated packet of
    ``order``; packets missing from ``order`` are never sent.
    """
    order = [int(i) for i in order]
    if len(set(order)) != len(order) or any(i < 0 or i >= len(inst.packets) for i in order):
        raise ValueError(f"order {order} is not an arrangement of the instance's packets")
    by_id = {pkt.packet_id: pkt for pkt in inst.packets}
    a2, s2, rel = inst.pp.coef ** 2, inst.pp.sigma2, inst.reliability

    def go(slot: int, e2: float, remaining: int) -> float:
        if slot >= inst.horizon:
            return 0.0
        pick = next((by_id[i] for i in order if remaining >> i & 1 and by_id[i].t_gen <= slot), None)
        if pick is None:
            nxt = a2 * e2 + s2
            return nxt + go(slot + 1, nxt, remaining)
        ok, fail = _transitions(inst, pick, slot, e2)
        cost = rel * (ok + go(slot + 1, ok, remaining & ~(1 << pick.packet_id)))
        if rel < 1.0:
            cost += (1.0 - rel) * (fail + go(slot + 1, fail, remaining))
        return cost

    return inst.e2_start + go(1, inst.e2_start, inst.full_mask())


def brute_force_optimal(inst: SmallInstance) -> tuple[list[int], float]:
    """Minimum expected cost over all non-idling, outcome-adapted strategies.

    Returns the optimal attempt sequence along the all-success path and the cost.
    """
    inst.check_size()
    a2, s2, rel = inst.pp.coef ** 2, inst.pp.sigma2, inst.reliability

    def go(slot: int, e2: float, remaining: int) -> tuple[float, list[int]]:
        if slot >= inst.horizon:
            return 0.0, []
        cands = inst.available(slot, remaining)
        if not cands:
            nxt = a2 * e2 + s2
            c, path = go(slot + 1, nxt, remaining)
            return nxt + c, path
        best = (math.inf, [])
        for pkt in cands:
            ok, fail = _transitions(inst, pkt, slot, e2)
            c_ok, path = go(slot + 1, ok, remaining & ~(1 << pkt.packet_id))
            cost = rel * (ok + c_ok)
            if rel < 1.0:
                cost += (1.0 - rel) * (fail + go(slot + 1, fail, remaining)[0])
            if cost < best[0]:
                best = (cost, [pkt.packet_id] + path)
        return best

    cost, path = go(1, inst.e2_start, inst.full_mask())
    return path, inst.e2_start + cost


def index_order(inst: SmallInstance) -> list[int]:
    return [pkt.packet_id for pkt in served_order(PolicyKind.INDEX_VOI, inst.packets, inst.pp, inst.fp, inst.mode)]


def index_policy_cost(inst: SmallInstance) -> float:
    return expected_cost_fixed_order(inst, index_order(inst))


# -- pathwise cost model and the interchange argument -------------------------

@dataclass
class PathwiseRun:
    cost: float
    deliveries: dict[int, int]  # packet_id -> delivery slot
    coeffs: list[float] = field(default_factory=list)  # a(t) for t = 1..T-1


def pathwise_cost(inst: SmallInstance, priority: Sequence[int], pattern: Sequence[bool]) -> PathwiseRun:
    """Cost-model trajectory of a static priority list under a fixed success pattern.

    ``pattern[slot-1]`` is the channel outcome at ``slot``.
    """
    if len(pattern) < inst.horizon - 1:
        raise ValueError("pattern must cover slots 1..T-1")
    by_id = {pkt.packet_id: pkt for pkt in inst.packets}
    coef, ac = inst.pp.coef, inst.fp.closed_loop(inst.pp)
    e2 = inst.e2_start
    cost = e2
    remaining = set(priority)
    deliveries: dict[int, int] = {}
    coeffs = []
    for slot in range(1, inst.horizon):
        pick = next((i for i in priority if i in remaining and by_id[i].t_gen <= slot), None)
        if pick is not None and pattern[slot - 1]:
            e2 = ac * ac * e2 + inst.w2(by_id[pick], slot + 1)
            remaining.discard(pick)
            deliveries[pick] = slot
            coeffs.append(ac)
        else:
            e2 = coef * coef * e2 + inst.pp.sigma2
            coeffs.append(coef)
        cost += e2
    return PathwiseRun(cost, deliveries, coeffs)


def alpha_product(coeffs: Sequence[float], start: int, stop: int) -> float:
    """``prod_{m=start..stop} a(m)^2`` with ``coeffs[m-1] = a(m)``; empty product is 1."""
    out = 1.0
    for m in range(start, stop + 1):
        out *= coeffs[m - 1] ** 2
    return out


def future_weight(coeffs: Sequence[float], start: int, horizon: int) -> float:
    """Total weight ``sum_{t=start+1..T} alpha(start+1, t-1)`` of noise injected at slot ``start``."""
    return sum(alpha_product(coeffs, start + 1, slot - 1) for slot in range(start + 1, horizon + 1))


def swap_priorities(inst: SmallInstance, psi1: int, psi2: int) -> tuple[list[int], list[int]]:
    """Priority lists of the deviating policy (``psi2`` first) and its relabelled twin."""
    base = index_order(inst)
    deviating = [psi2] + [i for i in base if i != psi2]
    twin = [psi2 if i == psi1 else psi1 if i == psi2 else i for i in deviating]
    return deviating, twin


def interchange_margin(inst: SmallInstance, psi1: int, psi2: int, pattern: Sequence[bool]) -> float:
    """Cost of the relabelled twin minus the deviating policy, in closed form.

    ``Delta(psi1, psi2, 2) * (G(1) - a^(2(T2-1)) G(T2))`` where ``G(s)`` is the
    future weight of slot ``s`` and ``T2`` the slot the deviating policy
    delivers ``psi1``.  Non-positive whenever ``psi1`` has the smaller index and
    ``(a, K)`` lies in the certified region.
    """
    if not pattern[0]:
        raise ValueError("the interchange margin conditions on a successful first transmission")
    by_id = {pkt.packet_id: pkt for pkt in inst.packets}
    deviating, _ = swap_priorities(inst, psi1, psi2)
    run = pathwise_cost(inst, deviating, pattern)
    d = delta(by_id[psi1], by_id[psi2], 2, inst.pp, inst.fp, inst.mode)
    bracket = future_weight(run.coeffs, 1, inst.horizon)
    t2 = run.deliveries.get(psi1)
    if t2 is not None:
        bracket -= (inst.pp.coef ** 2) ** (t2 - 1) * future_weight(run.coeffs, t2, inst.horizon)
    return d * bracket


def interchange_cost_difference(inst: SmallInstance, psi1: int, psi2: int, pattern: Sequence[bool]) -> float:
    """The same difference by direct simulation of both cost-model trajectories."""
    deviating, twin = swap_priorities(inst, psi1, psi2)
    return pathwise_cost(inst, twin, pattern).cost - pathwise_cost(inst, deviating, pattern).cost


# -- sufficient-condition margin -------------------------------------------------

def margin_from_a2(a2: float, gain: float) -> tuple[float, bool]:
    """Same quantities as :func:`simple_margin`, parametrized by ``a^2``."""
    ac2 = a2 * (1.0 - gain) ** 2
    return 1.0 + ac2 - a2 / (1.0 - a2), a2 * gain * (2.0 - gain) <= 1.0 - a2


def simple_margin(coef: float, gain: float) -> tuple[float, bool]:
    """``1 + a_c^2 - a^2/(1-a^2)`` and whether ``a^2 K (2-K) <= 1 - a^2`` holds."""
    check_assumption(ProcessParams(coef, 1.0), FilterParams(gain))
    return margin_from_a2(coef * coef, gain)


def admissible_gain_max(coef: float) -> float:
    """Supremum of K satisfying both the gain bound and |a (1-K)| < 1."""
    if coef == 0.0:
        return gain_bound(coef)
    return min(gain_bound(coef), 1.0 + 1.0 / abs(coef))


def margin_grid(a2_values: Sequence[float], steps: int = 20) -> np.ndarray:
    """Rows ``(a^2, K, simple_margin, condition_holds)`` over ``steps`` admissible gains.

    Gains run evenly from 0 to the admissible supremum; the endpoint is pulled
    inside the open constraint when it sits on the boundary.  Margins are
    evaluated from ``a^2`` directly so grid points on the boundary stay exact.
    """
    rows = []
    for a2 in a2_values:
        coef = math.sqrt(a2)
        kmax = admissible_gain_max(coef)
        for j in range(steps):
            gain = kmax * j / (steps - 1)
            while True:
                try:
                    check_assumption(ProcessParams(coef, 1.0), FilterParams(gain))
                    break
                except AssumptionViolation:
                    gain = math.nextafter(gain, 0.0)
            m, cond = margin_from_a2(a2, gain)
            rows.append((a2, gain, m, float(cond)))
    return np.array(rows)


# -- noise-variance adjudication ---------------------------------------------

def mc_variance_oracle(
    tau: int,
    sigma2_s: float,
    pp: ProcessParams,
    fp: FilterParams,
    n_samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Sample variance (and its standard error) of ``e(t+1) - a_c e(t)`` for one delivery.

    Simulates the process from ``t - tau`` to ``t + 1`` with raw Gaussian draws,
    an observation at ``t - tau``, and one filter update at ``t``.
    """
    if n_samples < 10**4:
        raise ValueError("n_samples must be >= 1e4")
    g = np.random.default_rng(np.random.SeedSequence([seed, tau, int(round(sigma2_s * 1e6))]))
    coef, gain = pp.coef, fp.gain
    sd = math.sqrt(pp.sigma2)
    state = g.standard_normal(n_samples)
    value = state + math.sqrt(sigma2_s) * g.standard_normal(n_samples)
    for _ in range(tau):
        state = coef * state + sd * g.standard_normal(n_samples)
    estimate = g.standard_normal(n_samples)
    e_t = state - estimate
    estimate_next = coef * estimate + coef * gain * (coef**tau * value - estimate)
    state_next = coef * state + sd * g.standard_normal(n_samples)
    d = (state_next - estimate_next) - fp.closed_loop(pp) * e_t
    dev2 = (d - d.mean()) ** 2
    est = float(dev2.sum() / (n_samples - 1))
    se = float(dev2.std(ddof=1) / math.sqrt(n_samples))
    return est, se


@dataclass
class VarianceVerdict:
    tau: int
    sigma2_s: float
    estimate: float
    se: float
    canonical: float
    exact_sum: float

    @property
    def canonical_within(self) -> bool:
        return abs(self.estimate - self.canonical) <= 3 * self.se

    @property
    def exact_within(self) -> bool:
        return abs(self.estimate - self.exact_sum) <= 3 * self.se


def adjudicate_noise_variance(
    settings: Sequence[tuple[int, float]], pp: ProcessParams, fp: FilterParams, n_samples: int = 10**6, seed: int = 0
) -> list[VarianceVerdict]:
    out = []
    for tau, v in settings:
        est, se = mc_variance_oracle(tau, v, pp, fp, n_samples, seed)
        out.append(
            VarianceVerdict(
                tau, v, est, se,
                index_terms(tau, v, pp, fp, PAPER).w2,
                index_terms(tau, v, pp, fp, EXACT).w2,
            )
        )
    return out


# -- random instances ----------------------------------------------------------

def random_certified_params(g: np.random.Generator) -> tuple[float, float]:
    while True:
        coef = float(g.uniform(-0.95, 0.95))
        if abs(coef) < 0.05:
            continue
        gain = float(g.uniform(0.0, min(admissible_gain_max(coef), 2.0)))
        if in_certified_region(coef, gain):
            return coef, gain


def random_instance(
    g: np.random.Generator,
    horizon_max: int = 4,
    packets_max: int = 3,
    reliability_values: Sequence[float] = (0.5, 1.0),
    mode: str = PAPER,
    min_packets: int = 1,
    initial_only: bool = False,
) -> SmallInstance:
    coef, gain = random_certified_params(g)
    pp = ProcessParams(coef, float(g.uniform(0.2, 2.0)))
    fp = FilterParams(gain)
    horizon = int(g.integers(2, horizon_max + 1))
    n = int(g.integers(min_packets, packets_max + 1))
    hi = 2 if initial_only else horizon
    packets = [(int(g.integers(-4, hi)), float(g.choice([0.0, g.uniform(0.0, 3.0)], p=[0.1, 0.9]))) for _ in range(n)]
    return SmallInstance.build(
        horizon, packets, pp, fp, float(g.choice(list(reliability_values))), float(g.uniform(0.0, 3.0)), mode
    )


def optimality_gap(inst: SmallInstance) -> tuple[float, float, float]:
    """(brute-force optimum, index-policy cost, relative gap)."""
    _, best = brute_force_optimal(inst)
    idx = index_policy_cost(inst)
    return best, idx, (idx - best) / max(abs(best), 1e-300)


def q1_ids(inst: SmallInstance) -> list[int]:
    return [pkt.packet_id for pkt in inst.packets if pkt.t_gen <= 1]


def all_patterns(horizon: int) -> Iterable[tuple[bool, ...]]:
    """Success patterns over slots 1..T-1 with a successful first slot."""
    for rest in itertools.product((False, True), repeat=horizon - 2):
        yield (True,) + rest


# -- cost model along a simulated schedule ------------------------------------

def cost_model_along(cfg, result) -> float:
    """Uncorrelated cost-model value of the schedule realized in ``result``.

    Replays the simulated decisions and channel outcomes through the same
    recursion the DP uses, starting from ``E e2(1)``.  Comparing it with
    ``result.cost`` isolates the effect of the noise correlations the model
    ignores.
    """
    pp, fp = cfg.process, cfg.filter
    a2, ac2 = pp.coef ** 2, fp.closed_loop(pp) ** 2
    n0 = len(cfg.initial_queue)
    e2 = no_delivery_variance(1, pp, cfg.e0)
    total = e2
    for r, (pid, ok) in enumerate(zip(result.decisions, result.delivered)):
        slot = r + 1
        if pid >= 0 and ok:
            pid = int(pid)
            var = cfg.initial_queue[pid].sigma2_s if pid < n0 else cfg.sources[result.packet_source[pid] - 1].sigma2_s
            age = slot + 1 - int(result.packet_t_gen[pid])
            e2 = ac2 * e2 + index_terms(age, var, pp, fp, cfg.mode).w2
        else:
            e2 = a2 * e2 + pp.sigma2
        total += e2
    return total
