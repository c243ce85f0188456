"""Value-of-Information index of a packet and the shared ordered queue.

The index of packet ``psi`` at slot ``t`` is the variance of the noise its
delivery injects into the estimation error::

    W2_s = a^2 K^2 a^(2 tau) sigma2_s
    W2_p = a^2 K^2 sigma2 (a^(2 tau) - 1) / (a^2 - 1) + sigma2

Lower is better.  The packet-dependent part factors as
``a^2 K^2 a^(2t) * key`` with the time-invariant ``key = a^(-2 t_gen) c``,
``c = sigma2_s + sigma2 / (a^2 - 1)``, so the queue order never changes and a
single heap keyed once on insertion implements the policy.  Keys overflow
double range for long runs, so they are held as (sign, log|key|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

from ._backend import PacketHeap
from .model import FilterParams, ModelError, Packet, ProcessParams

PAPER = "paper"
EXACT = "exact"
MODES = (PAPER, EXACT)


def _eta(pp: ProcessParams, mode: str) -> float:
    # "exact" mode carries one extra a^2 in the accumulated process-noise term.
    if mode == PAPER:
        return 1.0
    if mode == EXACT:
        return pp.coef * pp.coef
    raise ValueError(f"unknown index mode {mode!r}; expected one of {MODES}")


class PacketIndex(NamedTuple):
    w2_s: float
    w2_p: float

    @property
    def w2(self) -> float:
        return self.w2_s + self.w2_p


def index_terms(age: int, sigma2_s: float, pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> PacketIndex:
    a2 = pp.coef * pp.coef
    g = a2 * fp.gain * fp.gain
    decay = a2**age
    if a2 == 1.0:
        geom = float(age)
    else:
        geom = (decay - 1.0) / (a2 - 1.0)
    return PacketIndex(g * decay * sigma2_s, g * pp.sigma2 * _eta(pp, mode) * geom + pp.sigma2)


def packet_index(
    pkt: Optional[Packet], slot: int, pp: ProcessParams, fp: FilterParams, mode: str = PAPER
) -> PacketIndex:
    """Index ``W^2_psi(t)``; ``pkt=None`` is the empty packet ``(0, sigma2)``."""
    if pkt is None:
        return PacketIndex(0.0, pp.sigma2)
    if slot < pkt.t_gen:
        raise ModelError(f"index queried at t={slot} before generation t_gen={pkt.t_gen}")
    return index_terms(slot - pkt.t_gen, pkt.sigma2_s, pp, fp, mode)


@dataclass(frozen=True, order=False)
class OrderKey:
    """Time-invariant ordering surrogate ``a^(-2 t_gen) (sigma2_s + eta sigma2/(a^2-1))``.

    ``sign == 0`` marks a degenerate key (zero value, or ``a == 0`` / ``K == 0``
    where every packet has the same index); those packets are ordered by the
    tiebreak alone.
    """

    sign: int
    log_abs: float
    tiebreak: tuple[int, int, int]

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)

    def sort_tuple(self) -> tuple:
        primary = 0.0 if self.sign == 0 else self.sign * self.log_abs
        return (float(self.sign), primary) + self.tiebreak

    def __lt__(self, other: "OrderKey") -> bool:
        return self.sort_tuple() < other.sort_tuple()

    def __le__(self, other: "OrderKey") -> bool:
        return self.sort_tuple() <= other.sort_tuple()


def key_parts(t_gen: int, sigma2_s: float, pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> tuple[int, float]:
    coef = pp.coef
    if coef == 0.0 or fp.gain == 0.0:
        return 0, -math.inf
    c = sigma2_s + _eta(pp, mode) * pp.sigma2 / (coef * coef - 1.0)
    if c == 0.0:
        return 0, -math.inf
    sign = 1 if c > 0.0 else -1
    return sign, -2.0 * t_gen * math.log(abs(coef)) + math.log(abs(c))


def order_key(pkt: Packet, pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> OrderKey:
    sign, log_abs = key_parts(pkt.t_gen, pkt.sigma2_s, pp, fp, mode)
    return OrderKey(sign, log_abs, (pkt.t_gen, pkt.source_id, pkt.packet_id))


def index_from_key(key: OrderKey, slot: int, pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> float:
    """Rebuild ``W^2(t) = a^2 K^2 (a^(2t) key - eta sigma2/(a^2-1)) + sigma2`` from the key."""
    a2 = pp.coef * pp.coef
    g = a2 * fp.gain * fp.gain
    if g == 0.0:
        return pp.sigma2
    scaled = 0.0 if key.sign == 0 else key.sign * math.exp(key.log_abs + slot * math.log(a2))
    return g * (scaled - _eta(pp, mode) * pp.sigma2 / (a2 - 1.0)) + pp.sigma2


def _log_sub(sa: int, la: float, sb: int, lb: float) -> tuple[int, float]:
    """Signed-log representation of ``A - B`` for ``A = sa e^la``, ``B = sb e^lb``."""
    if sb == 0:
        return sa, la
    if sa == 0:
        return -sb, lb
    if sa != sb:
        hi, lo = (la, lb) if la >= lb else (lb, la)
        return sa, hi + math.log1p(math.exp(lo - hi))
    if la == lb:
        return 0, -math.inf
    if la > lb:
        return sa, la + math.log1p(-math.exp(lb - la))
    return -sa, lb + math.log1p(-math.exp(la - lb))


def log_delta(
    psi_a: Packet, psi_b: Packet, slot: int, pp: ProcessParams, fp: FilterParams, mode: str = PAPER
) -> tuple[int, float]:
    """(sign, log|.|) of ``W^2_a(t) - W^2_b(t) = a^(2t) a^2 K^2 (key_a - key_b)``."""
    if slot < psi_a.t_gen or slot < psi_b.t_gen:
        raise ModelError("delta evaluated before a packet was generated")
    a2 = pp.coef * pp.coef
    g = a2 * fp.gain * fp.gain
    if g == 0.0:
        return 0, -math.inf
    sa, la = key_parts(psi_a.t_gen, psi_a.sigma2_s, pp, fp, mode)
    sb, lb = key_parts(psi_b.t_gen, psi_b.sigma2_s, pp, fp, mode)
    sign, ldiff = _log_sub(sa, la, sb, lb)
    if sign == 0:
        return 0, -math.inf
    return sign, ldiff + math.log(g) + slot * math.log(a2)


def delta(psi_a: Packet, psi_b: Packet, slot: int, pp: ProcessParams, fp: FilterParams, mode: str = PAPER) -> float:
    sign, log_abs = log_delta(psi_a, psi_b, slot, pp, fp, mode)
    return 0.0 if sign == 0 else sign * math.exp(log_abs)


class OrderedQueue:
    """Shared packet queue ordered by :class:`OrderKey`.

    Backed by a binary heap, so insertion and extraction take O(log n)
    comparisons; iteration yields packets in ascending key order.
    """

    def __init__(self, pp: ProcessParams, fp: FilterParams, mode: str = PAPER):
        _eta(pp, mode)
        self.pp, self.fp, self.mode = pp, fp, mode
        self._heap = PacketHeap()
        self._packets: dict[int, Packet] = {}

    def __len__(self) -> int:
        return len(self._packets)

    def __contains__(self, packet_id: int) -> bool:
        return packet_id in self._packets

    def __iter__(self) -> Iterator[Packet]:
        return iter(sorted(self._packets.values(), key=lambda pkt: order_key(pkt, self.pp, self.fp, self.mode).sort_tuple()))

    @property
    def comparisons(self) -> int:
        """Key comparisons performed so far by the heap."""
        return self._heap.comparisons

    def enqueue(self, pkt: Packet) -> "OrderedQueue":
        if pkt.packet_id in self._packets:
            raise ValueError(f"packet {pkt.packet_id} is already queued")
        sign, log_abs = key_parts(pkt.t_gen, pkt.sigma2_s, self.pp, self.fp, self.mode)
        self._heap.push(float(sign), 0.0 if sign == 0 else sign * log_abs, pkt.t_gen, pkt.source_id, pkt.packet_id)
        self._packets[pkt.packet_id] = pkt
        return self

    def peek_min(self) -> Optional[Packet]:
        if not self._packets:
            return None
        return self._packets[self._heap.peek()]

    def pop_min(self) -> Optional[Packet]:
        if not self._packets:
            return None
        return self._packets.pop(self._heap.pop())

    def remove(self, packet_id: int) -> Packet:
        pkt = self._packets.pop(packet_id)
        self._heap.remove(packet_id)
        return pkt

    def packets(self) -> list[Packet]:
        """Queued packets in storage (insertion) order."""
        return list(self._packets.values())
