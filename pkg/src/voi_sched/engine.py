"""Discrete-time episode simulation over an unreliable link.

Slot 0 carries the initial state ``e(0) = e0``; the first transition to slot 1
happens without a transmission.  For ``t = 1 .. T-1`` each slot runs: source
arrivals observe ``x(t)``, the policy picks a packet, the channel succeeds with
probability ``p`` (ACK known immediately), the filter applies the delivered
packet or the empty update, and the process evolves.  ``e^2(t)`` is recorded
for ``t = 1 .. T``.

All randomness is pre-drawn per replication from named streams (see
:mod:`voi_sched.rng`), so the draws never depend on the policy.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import rng
from ._backend import POLICY_CODES, run_episode_kernel
from .index import MODES, PAPER, _eta, order_key
from .model import (
    FilterParams,
    ModelError,
    Packet,
    ProcessParams,
    SourceProfile,
    check_assumption,
)
from .policies import PolicyKind


class ConfigError(ValueError):
    """An episode or multi-process configuration violates an invariant."""


class SimplexError(ConfigError):
    """Access vector is not a probability vector."""


@dataclass(frozen=True)
class ChannelParams:
    reliability: float

    def __post_init__(self):
        if not 0.0 < self.reliability <= 1.0:
            raise ConfigError(f"channel reliability must satisfy 0 < p <= 1, got {self.reliability}")


@dataclass(frozen=True)
class InitialPacket:
    """A packet already known at start-up; ``t_gen <= 0`` means generated before slot 1."""

    t_gen: int
    sigma2_s: float
    source_id: int = 0


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int
    process: ProcessParams
    filter: FilterParams
    sources: tuple[SourceProfile, ...]
    channel: ChannelParams
    initial_queue: tuple[InitialPacket, ...] = ()
    e0: float = 0.0
    seed: int = 0
    mode: str = PAPER
    arrival_lag: int = 0

    def validate(self) -> "EpisodeConfig":
        if self.horizon < 2:
            raise ConfigError(f"horizon must be >= 2, got {self.horizon}")
        if not self.sources and not self.initial_queue:
            raise ConfigError("need at least one source or an initial queue")
        for i, src in enumerate(self.sources):
            if src.source_id != i + 1:
                raise ConfigError(f"sources must be numbered 1..M in order; got id {src.source_id} at position {i + 1}")
        for pkt in self.initial_queue:
            if pkt.t_gen > self.horizon - 1:
                raise ConfigError(f"initial packet generated at {pkt.t_gen} after the last decision slot")
            if pkt.sigma2_s < 0:
                raise ConfigError("initial packet sigma2_s must be >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.arrival_lag not in (0, 1):
            raise ConfigError("arrival_lag must be 0 or 1")
        check_assumption(self.process, self.filter)
        return self


@dataclass
class EpisodeDraws:
    noise: np.ndarray
    arr_u: np.ndarray
    obs_z: np.ndarray
    chan_u: np.ndarray
    pol_u: np.ndarray
    x0: float
    init_y: np.ndarray

    def digest(self) -> str:
        """Hash of the policy-independent streams (process, arrivals, observation, channel)."""
        h = hashlib.sha256()
        for arr in (self.noise, self.arr_u, self.obs_z, self.chan_u, self.init_y):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.x0).encode())
        return h.hexdigest()


@dataclass
class EpisodeResult:
    e2: np.ndarray
    decisions: np.ndarray
    delivered: np.ndarray
    packet_t_gen: np.ndarray
    packet_source: np.ndarray
    n_delivered: int
    n_removed: int
    final_queue: int
    draws_digest: str = ""

    @property
    def cost(self) -> float:
        return float(np.sum(self.e2))

    @property
    def horizon(self) -> int:
        return len(self.e2)

    def delivery_log(self) -> list[tuple[int, int, bool]]:
        """(slot, packet_id, success) for every transmission attempt."""
        return [
            (slot + 1, int(pid), bool(ok))
            for slot, (pid, ok) in enumerate(zip(self.decisions, self.delivered))
            if pid >= 0
        ]

    def delivery_slot(self, packet_id: int) -> Optional[int]:
        hit = np.nonzero((self.decisions == packet_id) & (self.delivered == 1))[0]
        return int(hit[0]) + 1 if hit.size else None


def _kind_code(kind) -> int:
    return POLICY_CODES[PolicyKind.parse(kind).value]


def draw_episode(cfg: EpisodeConfig, replication: int, prefix: str = "", need_policy: bool = True) -> EpisodeDraws:
    horizon = cfg.horizon
    n_src = len(cfg.sources)
    seed = cfg.seed
    coef = cfg.process.coef
    noise = math.sqrt(cfg.process.sigma2) * rng.stream(seed, prefix + "process", replication).standard_normal(horizon)
    if n_src:
        arr_u = rng.stream(seed, prefix + "arrivals", replication).random((horizon - 1, n_src))
        obs_z = rng.stream(seed, prefix + "observation", replication).standard_normal((horizon - 1, n_src))
    else:
        arr_u = np.zeros((horizon - 1, 0))
        obs_z = np.zeros((horizon - 1, 0))
    chan_u = rng.stream(seed, prefix + "channel", replication).random(horizon - 1)
    if need_policy:
        pol_u = rng.stream(seed, prefix + "policy", replication).random(horizon - 1)
    else:
        pol_u = np.zeros(horizon - 1)

    x0 = 0.0
    init = cfg.initial_queue
    init_y = np.zeros(len(init))
    if init:
        t_min = min(0, min(pkt.t_gen for pkt in init))
        if t_min < 0:
            pre = math.sqrt(cfg.process.sigma2) * rng.stream(seed, prefix + "prehistory", replication).standard_normal(-t_min)
        # x(s) for s in [t_min, T-1], starting from rest at t_min
        xs = {}
        state = 0.0
        for s in range(t_min, 0):
            xs[s] = state
            state = coef * state + pre[s - t_min]
        x0 = state
        xs[0] = state
        for s in range(1, horizon):
            state = coef * state + noise[s - 1]
            xs[s] = state
        z = rng.stream(seed, prefix + "initial", replication).standard_normal(len(init))
        for i, pkt in enumerate(init):
            init_y[i] = xs[pkt.t_gen] + math.sqrt(pkt.sigma2_s) * z[i]
    return EpisodeDraws(noise, arr_u, obs_z, chan_u, pol_u, x0, init_y)


def _simulate(
    cfg: EpisodeConfig,
    code: int,
    draws: EpisodeDraws,
    access: Optional[np.ndarray] = None,
    forced_first: int = -1,
) -> EpisodeResult:
    horizon = cfg.horizon
    n_src = len(cfg.sources)
    pp, fp = cfg.process, cfg.filter
    rate = np.array([s.arrival_rate for s in cfg.sources], dtype=np.float64)
    var = np.array([s.sigma2_s for s in cfg.sources], dtype=np.float64)
    sd = np.sqrt(var)
    if access is None:
        access = np.ones(horizon - 1, dtype=np.uint8)
    init = cfg.initial_queue
    init_tgen = np.array([pkt.t_gen for pkt in init], dtype=np.int64)
    init_src = np.array([pkt.source_id for pkt in init], dtype=np.int64)
    init_var = np.array([pkt.sigma2_s for pkt in init], dtype=np.float64)
    nmax = len(init) + (horizon - 1) * n_src
    e2 = np.empty(horizon)
    dec = np.empty(horizon - 1, dtype=np.int64)
    deliv = np.empty(horizon - 1, dtype=np.int8)
    pk_tgen = np.zeros(nmax, dtype=np.int64)
    pk_src = np.zeros(nmax, dtype=np.int64)
    n_pk, n_deliv, n_removed, n_left = run_episode_kernel(
        pp.coef, fp.gain, pp.sigma2, _eta(pp, cfg.mode), code, cfg.arrival_lag, cfg.channel.reliability,
        draws.x0, draws.x0 - cfg.e0,
        np.ascontiguousarray(draws.noise, dtype=np.float64),
        np.ascontiguousarray(draws.arr_u, dtype=np.float64),
        np.ascontiguousarray(draws.obs_z, dtype=np.float64),
        rate, sd, var,
        np.ascontiguousarray(draws.chan_u, dtype=np.float64),
        np.ascontiguousarray(draws.pol_u, dtype=np.float64),
        np.ascontiguousarray(access, dtype=np.uint8),
        init_tgen, init_src, np.ascontiguousarray(draws.init_y, dtype=np.float64), init_var,
        int(forced_first), e2, dec, deliv, pk_tgen, pk_src,
    )
    return EpisodeResult(
        e2=e2,
        decisions=dec,
        delivered=deliv,
        packet_t_gen=pk_tgen[:n_pk].copy(),
        packet_source=pk_src[:n_pk].copy(),
        n_delivered=int(n_deliv),
        n_removed=int(n_removed),
        final_queue=int(n_left),
        draws_digest=draws.digest(),
    )


def run_episode(cfg: EpisodeConfig, kind="index-voi", replication: int = 0) -> EpisodeResult:
    """Simulate one episode; deterministic in ``(cfg, kind, replication)``."""
    cfg.validate()
    code = _kind_code(kind)
    draws = draw_episode(cfg, replication, need_policy=code == POLICY_CODES["random"])
    return _simulate(cfg, code, draws)


@dataclass
class MonteCarloSummary:
    policy: str
    costs: np.ndarray
    e2: np.ndarray
    decisions: np.ndarray
    delivered: np.ndarray

    @property
    def n_reps(self) -> int:
        return len(self.costs)

    @property
    def mean(self) -> float:
        return float(np.mean(self.costs))

    @property
    def se(self) -> float:
        return float(np.std(self.costs, ddof=1) / math.sqrt(len(self.costs)))

    @property
    def mean_curve(self) -> np.ndarray:
        return self.e2.mean(axis=0)


def _mc_chunk(cfg: EpisodeConfig, kind, start: int, stop: int):
    horizon = cfg.horizon
    n = stop - start
    e2 = np.empty((n, horizon))
    dec = np.empty((n, horizon - 1), dtype=np.int64)
    deliv = np.empty((n, horizon - 1), dtype=np.int8)
    for i, r in enumerate(range(start, stop)):
        res = run_episode(cfg, kind, replication=r)
        e2[i], dec[i], deliv[i] = res.e2, res.decisions, res.delivered
    return e2, dec, deliv


def _chunks(n_reps: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n_reps / (4 * workers)))
    return [(s, min(n_reps, s + size)) for s in range(0, n_reps, size)]


def run_monte_carlo(cfg: EpisodeConfig, kind="index-voi", n_reps: int = 100, workers: int = 1) -> MonteCarloSummary:
    """Independent replications ``0 .. n_reps-1``; aggregation order is the replication order."""
    if n_reps < 2:
        raise ConfigError("n_reps must be >= 2")
    cfg.validate()
    kind = PolicyKind.parse(kind)
    if workers <= 1:
        parts = [_mc_chunk(cfg, kind, 0, n_reps)]
    else:
        spans = _chunks(n_reps, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_chunk, [cfg] * len(spans), [kind] * len(spans), *zip(*spans)))
    e2 = np.concatenate([part[0] for part in parts])
    costs = e2.sum(axis=1)
    return MonteCarloSummary(
        kind.value,
        costs,
        e2,
        np.concatenate([part[1] for part in parts]),
        np.concatenate([part[2] for part in parts]),
    )


@dataclass
class CoupledRunResult:
    T1: Optional[int]
    T2: Optional[int]
    cost_index: float
    cost_swapped: float
    first_success: bool
    psi1: int
    psi2: int
    index_run: EpisodeResult = field(repr=False)
    swapped_run: EpisodeResult = field(repr=False)


def initial_queue_packets(cfg: EpisodeConfig, draws: EpisodeDraws) -> list[Packet]:
    """Packets present in Q(1), with the packet ids the kernel assigns."""
    out = []
    for i, pkt in enumerate(cfg.initial_queue):
        if pkt.t_gen <= 1:
            out.append(Packet(i, pkt.source_id, pkt.t_gen, float(draws.init_y[i]), pkt.sigma2_s))
    if cfg.arrival_lag == 0:
        pid = len(cfg.initial_queue)
        for m, src in enumerate(cfg.sources):
            if draws.arr_u[0, m] < src.arrival_rate:
                out.append(Packet(pid, src.source_id, 1, 0.0, src.sigma2_s))
                pid += 1
    return out


def coupled_run(
    cfg: EpisodeConfig,
    swap_pair: tuple[int, int] = (0, 1),
    replication: int = 0,
    first_outcome: Optional[str] = None,
) -> CoupledRunResult:
    """Index policy vs the policy that serves the rank-``j`` packet first, on common draws.

    ``swap_pair = (i, j)`` are ranks in the index order of Q(1).  ``first_outcome``
    forces the slot-1 channel draw to ``"success"`` or ``"failure"``.
    """
    cfg.validate()
    draws = draw_episode(cfg, replication, need_policy=False)
    if first_outcome == "success":
        draws.chan_u[0] = 0.0
    elif first_outcome == "failure":
        draws.chan_u[0] = 1.0
    elif first_outcome is not None:
        raise ValueError("first_outcome must be 'success', 'failure' or None")
    q1 = sorted(
        initial_queue_packets(cfg, draws),
        key=lambda pkt: order_key(pkt, cfg.process, cfg.filter, cfg.mode).sort_tuple(),
    )
    i, j = swap_pair
    if len(q1) < 2 or max(i, j) >= len(q1):
        raise ConfigError(f"Q(1) holds {len(q1)} packets; cannot swap ranks {swap_pair}")
    psi1, psi2 = q1[i].packet_id, q1[j].packet_id
    code = POLICY_CODES["index-voi"]
    idx = _simulate(cfg, code, draws, forced_first=psi1)
    swp = _simulate(cfg, code, draws, forced_first=psi2)
    return CoupledRunResult(
        T1=idx.delivery_slot(psi2),
        T2=swp.delivery_slot(psi1),
        cost_index=idx.cost,
        cost_swapped=swp.cost,
        first_success=bool(idx.delivered[0]),
        psi1=psi1,
        psi2=psi2,
        index_run=idx,
        swapped_run=swp,
    )


@dataclass(frozen=True)
class ProcessBlock:
    process: ProcessParams
    filter: FilterParams
    sources: tuple[SourceProfile, ...]
    initial_queue: tuple[InitialPacket, ...] = ()
    e0: float = 0.0


@dataclass(frozen=True)
class MultiProcessConfig:
    horizon: int
    processes: tuple[ProcessBlock, ...]
    channel: ChannelParams
    access: tuple[float, ...]
    seed: int = 0
    mode: str = PAPER
    arrival_lag: int = 0

    def validate(self) -> "MultiProcessConfig":
        if len(self.processes) < 1:
            raise ConfigError("need at least one process")
        check_simplex(self.access, len(self.processes))
        for i in range(len(self.processes)):
            self.episode(i).validate()
        return self

    def episode(self, i: int, reliability: Optional[float] = None) -> EpisodeConfig:
        b = self.processes[i]
        return EpisodeConfig(
            horizon=self.horizon,
            process=b.process,
            filter=b.filter,
            sources=b.sources,
            channel=self.channel if reliability is None else ChannelParams(reliability),
            initial_queue=b.initial_queue,
            e0=b.e0,
            seed=self.seed,
            mode=self.mode,
            arrival_lag=self.arrival_lag,
        )

    def with_access(self, access: Sequence[float]) -> "MultiProcessConfig":
        return replace(self, access=tuple(float(v) for v in access))


def check_simplex(access: Sequence[float], n: Optional[int] = None) -> None:
    if n is not None and len(access) != n:
        raise SimplexError(f"access vector has {len(access)} entries for {n} processes")
    if any(v < 0 or not math.isfinite(v) for v in access):
        raise SimplexError(f"access vector has negative or non-finite entries: {list(access)}")
    if abs(math.fsum(access) - 1.0) > 1e-9:
        raise SimplexError(f"access vector must sum to 1, sums to {math.fsum(access):.12g}")


def _prefix(i: int) -> str:
    return "" if i == 0 else f"p{i}/"


@dataclass
class MultiProcessResult:
    episodes: list[EpisodeResult]
    served: np.ndarray

    @property
    def costs(self) -> list[float]:
        return [ep.cost for ep in self.episodes]

    @property
    def total_cost(self) -> float:
        return math.fsum(self.costs)


def draw_access(access: Sequence[float], horizon: int, seed: int, replication: int) -> np.ndarray:
    """Served-process index ``u1(t)`` for ``t = 1 .. T-1``, i.i.d. from the access vector."""
    u = rng.stream(seed, "access", replication).random(horizon - 1)
    served = np.searchsorted(np.cumsum(access), u, side="right")
    return np.minimum(served, len(access) - 1)


def run_multiprocess(mcfg: MultiProcessConfig, kind="index-voi", replication: int = 0) -> MultiProcessResult:
    """Serve process ``u1(t) ~ access`` each slot with its own policy instance."""
    mcfg.validate()
    code = _kind_code(kind)
    served = draw_access(mcfg.access, mcfg.horizon, mcfg.seed, replication)
    episodes = []
    for i in range(len(mcfg.processes)):
        cfg = mcfg.episode(i)
        draws = draw_episode(cfg, replication, prefix=_prefix(i), need_policy=code == POLICY_CODES["random"])
        episodes.append(_simulate(cfg, code, draws, access=(served == i).astype(np.uint8)))
    return MultiProcessResult(episodes, served)


@dataclass
class MultiProcessSummary:
    policy: str
    total_costs: np.ndarray
    process_costs: np.ndarray

    @property
    def n_reps(self) -> int:
        return len(self.total_costs)

    @property
    def mean(self) -> float:
        return float(np.mean(self.total_costs))

    @property
    def se(self) -> float:
        return float(np.std(self.total_costs, ddof=1) / math.sqrt(len(self.total_costs)))


def run_multiprocess_mc(
    mcfg: MultiProcessConfig, kind="index-voi", n_reps: int = 100, first_replication: int = 0
) -> MultiProcessSummary:
    if n_reps < 2:
        raise ConfigError("n_reps must be >= 2")
    kind = PolicyKind.parse(kind)
    per = np.empty((n_reps, len(mcfg.processes)))
    for k in range(n_reps):
        per[k] = run_multiprocess(mcfg, kind, first_replication + k).costs
    return MultiProcessSummary(kind.value, per.sum(axis=1), per)


__all__ = [
    "ChannelParams",
    "ConfigError",
    "CoupledRunResult",
    "EpisodeConfig",
    "EpisodeDraws",
    "EpisodeResult",
    "InitialPacket",
    "ModelError",
    "MonteCarloSummary",
    "MultiProcessConfig",
    "MultiProcessResult",
    "MultiProcessSummary",
    "ProcessBlock",
    "SimplexError",
    "coupled_run",
    "draw_episode",
    "run_episode",
    "run_monte_carlo",
    "run_multiprocess",
    "run_multiprocess_mc",
]
