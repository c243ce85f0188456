"""Scheduling policies behind one interface.

``index-voi`` serves the least-index packet; the baselines isolate the two
axes the index trades off: age (``freshest-first``, ``fifo``) and precision
(``best-sensor``).  Every policy is non-idling.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .index import PAPER, OrderedQueue, order_key
from .model import FilterParams, Packet, ProcessParams


class PolicyKind(str, enum.Enum):
    INDEX_VOI = "index-voi"
    FRESHEST_FIRST = "freshest-first"
    OLDEST_FIRST = "fifo"
    BEST_SENSOR = "best-sensor"
    RANDOM = "random"

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        if isinstance(value, cls):
            return value
        name = str(value).replace("_", "-").lower()
        try:
            return cls(name)
        except ValueError:
            aliases = {"index": cls.INDEX_VOI, "oldest-first": cls.OLDEST_FIRST}
            if name in aliases:
                return aliases[name]
            raise ValueError(f"unknown policy {value!r}; choose from {[k.value for k in cls]}") from None


@dataclass(frozen=True)
class ScheduleDecision:
    packet_id: Optional[int] = None

    @property
    def idle(self) -> bool:
        return self.packet_id is None


IDLE = ScheduleDecision(None)


def _tiebreak(pkt: Packet) -> tuple[int, int, int]:
    return (pkt.t_gen, pkt.source_id, pkt.packet_id)


def decide(
    kind,
    q,
    slot: int,
    pp: ProcessParams,
    fp: FilterParams,
    rng: Optional[np.random.Generator] = None,
    mode: str = PAPER,
) -> ScheduleDecision:
    """Choose the packet to attempt at ``slot`` from queue view ``q``.

    ``q`` is an :class:`OrderedQueue` or any iterable of packets.  The queue is
    not modified.
    """
    kind = PolicyKind.parse(kind)
    if kind is PolicyKind.INDEX_VOI and isinstance(q, OrderedQueue) and q.mode == mode:
        best = q.peek_min()
        return IDLE if best is None else ScheduleDecision(best.packet_id)
    packets: list[Packet] = q.packets() if isinstance(q, OrderedQueue) else list(q)
    if not packets:
        return IDLE
    if kind is PolicyKind.INDEX_VOI:
        best = min(packets, key=lambda pkt: order_key(pkt, pp, fp, mode).sort_tuple())
    elif kind is PolicyKind.FRESHEST_FIRST:
        best = min(packets, key=lambda pkt: (-pkt.t_gen,) + _tiebreak(pkt))
    elif kind is PolicyKind.OLDEST_FIRST:
        best = min(packets, key=_tiebreak)
    elif kind is PolicyKind.BEST_SENSOR:
        best = min(packets, key=lambda pkt: (pkt.sigma2_s, -pkt.t_gen) + _tiebreak(pkt))
    else:
        if rng is None:
            raise ValueError("the random policy needs an rng")
        best = packets[int(rng.integers(len(packets)))]
    return ScheduleDecision(best.packet_id)


def served_order(kind, packets: Iterable[Packet], pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> list[Packet]:
    """Static priority order of a deterministic policy (first = served first)."""
    kind = PolicyKind.parse(kind)
    keys = {
        PolicyKind.INDEX_VOI: lambda pkt: order_key(pkt, pp, fp, mode).sort_tuple(),
        PolicyKind.FRESHEST_FIRST: lambda pkt: (-pkt.t_gen,) + _tiebreak(pkt),
        PolicyKind.OLDEST_FIRST: _tiebreak,
        PolicyKind.BEST_SENSOR: lambda pkt: (pkt.sigma2_s, -pkt.t_gen) + _tiebreak(pkt),
    }
    if kind not in keys:
        raise ValueError(f"{kind.value} has no static priority order")
    return sorted(packets, key=keys[kind])
