"""Scalar Gauss-Markov process, noisy sources and the constant-gain remote filter.

Time is slotted.  The true state evolves as ``x(t+1) = a x(t) + w(t)`` with
``w(t) ~ N(0, sigma2)``.  A source with observation variance ``sigma2_s``
emits packets ``y = x(t_gen) + sqrt(sigma2_s) * z``.  The destination runs::

    x_hat(t+1) = a x_hat(t) + a K (a**tau y - x_hat(t))   (packet delivered at t)
    x_hat(t+1) = a x_hat(t)                               (nothing delivered)

where ``tau = t - t_gen`` is the packet age at the delivery slot.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional


class ModelError(ValueError):
    """Invalid model parameters or an inconsistent filter input."""


class AssumptionViolation(ModelError):
    """Process or filter parameters outside the stable, bounded-gain region."""


@dataclass(frozen=True)
class ProcessParams:
    coef: float
    sigma2: float

    def __post_init__(self):
        if not math.isfinite(self.coef) or abs(self.coef) >= 1.0:
            raise AssumptionViolation(f"process must be stable: |a| < 1, got a={self.coef}")
        if not (self.sigma2 >= 0.0) or not math.isfinite(self.sigma2):
            raise ModelError(f"sigma2 must be a finite non-negative variance, got {self.sigma2}")


@dataclass(frozen=True)
class FilterParams:
    gain: float

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain < 0.0:
            raise AssumptionViolation(f"filter gain must satisfy K >= 0, got K={self.gain}")

    def closed_loop(self, pp: ProcessParams) -> float:
        """Closed-loop gain ``a (1 - K)``."""
        return pp.coef * (1.0 - self.gain)


def gain_bound(coef: float) -> float:
    """Largest admissible gain ``(1 - a^2) / a^2`` (infinite for ``a = 0``)."""
    a2 = coef * coef
    return math.inf if a2 == 0.0 else (1.0 - a2) / a2


def check_assumption(pp: ProcessParams, fp: FilterParams) -> None:
    """Raise :class:`AssumptionViolation` unless |a| < 1, |a_c| < 1 and K <= (1-a^2)/a^2."""
    if abs(pp.coef) >= 1.0:
        raise AssumptionViolation(f"|a| < 1 violated: a={pp.coef}")
    if abs(fp.closed_loop(pp)) >= 1.0:
        raise AssumptionViolation(f"|a_c| < 1 violated: a_c={fp.closed_loop(pp)}")
    if fp.gain > gain_bound(pp.coef):
        raise AssumptionViolation(
            f"K <= (1-a^2)/a^2 violated: K={fp.gain}, bound={gain_bound(pp.coef):.6g}"
        )


def in_certified_region(coef: float, gain: float) -> bool:
    """Stability, the gain bound, and ``a^2 K (2-K) <= 1 - a^2``."""
    try:
        check_assumption(ProcessParams(coef, 1.0), FilterParams(gain))
    except AssumptionViolation:
        return False
    a2 = coef * coef
    return a2 * gain * (2.0 - gain) <= 1.0 - a2


@dataclass(frozen=True)
class SourceProfile:
    source_id: int
    sigma2_s: float
    arrival_rate: float = 0.0

    def __post_init__(self):
        if self.sigma2_s < 0.0 or not math.isfinite(self.sigma2_s):
            raise ModelError(f"source {self.source_id}: sigma2_s must be >= 0")
        if not 0.0 <= self.arrival_rate <= 1.0:
            raise ModelError(f"source {self.source_id}: arrival_rate must lie in [0, 1]")


@dataclass(frozen=True)
class Packet:
    packet_id: int
    source_id: int
    t_gen: int
    value: float
    sigma2_s: float

    def age(self, slot: int) -> int:
        return slot - self.t_gen


def evolve_process(state: float, params: ProcessParams, noise: float) -> float:
    return params.coef * state + noise


def generate_packet(
    src: SourceProfile, state: float, slot: int, noise: float, packet_id: int = 0
) -> Packet:
    """Observe ``state`` at ``slot``; ``noise`` is a standard-normal draw."""
    if slot < 1:
        raise ModelError(f"packets are generated at slots t >= 1, got t={slot}")
    return Packet(packet_id, src.source_id, slot, state + math.sqrt(src.sigma2_s) * noise, src.sigma2_s)


@dataclass
class EstimatorState:
    """True state, estimate and error at ``slot``.

    ``history`` optionally keeps the last few ``(x(s), w(s))`` pairs so that the
    realized noise injected by a delivery can be reconstructed.
    """

    state: float
    estimate: float
    slot: int = 0
    history: Optional[deque] = field(default=None, repr=False, compare=False)

    @property
    def error(self) -> float:
        return self.state - self.estimate

    @classmethod
    def start(cls, state: float, e0: float, slot: int = 0, horizon: int = 64) -> "EstimatorState":
        return cls(state=state, estimate=state - e0, slot=slot, history=deque(maxlen=horizon + 1))


def filter_update(
    est: EstimatorState, delivered: Optional[Packet], fp: FilterParams, pp: ProcessParams
) -> float:
    """Next estimate ``x_hat(t+1)`` given the packet delivered at ``est.t`` (or None)."""
    coef = pp.coef
    if delivered is None:
        return coef * est.estimate
    tau = est.slot - delivered.t_gen
    if tau < 0:
        raise ModelError(
            f"packet {delivered.packet_id} generated at {delivered.t_gen} is in the future of slot {est.slot}"
        )
    return coef * est.estimate + coef * fp.gain * (coef**tau * delivered.value - est.estimate)


def step(
    est: EstimatorState,
    delivered: Optional[Packet],
    noise: float,
    fp: FilterParams,
    pp: ProcessParams,
) -> EstimatorState:
    """Advance one slot: filter update, then process evolution with ``noise``."""
    estimate = filter_update(est, delivered, fp, pp)
    if est.history is not None:
        est.history.append((est.slot, est.state, noise))
    return EstimatorState(
        state=evolve_process(est.state, pp, noise), estimate=estimate, slot=est.slot + 1, history=est.history
    )


def innovation_step(
    est: EstimatorState, delivered: Optional[Packet], fp: FilterParams, pp: ProcessParams
) -> tuple[float, Optional[float]]:
    """Closed-loop coefficient for this slot and the realized noise it injects.

    Must be called after :func:`step` recorded the current slot, i.e. ``est``
    is the state *before* the step and ``est.history[-1]`` holds ``(est.t, x, w)``.
    The noise is ``e(t+1) - coeff * e(t)``, rebuilt from the stored history; it
    is None when the packet is older than the retained history.
    """
    coef = pp.coef
    if delivered is None:
        coeff = coef
    else:
        if est.slot < delivered.t_gen:
            raise ModelError("packet generated after the delivery slot")
        coeff = fp.closed_loop(pp)
    hist = est.history
    if not hist or hist[-1][0] != est.slot:
        raise ModelError("history does not contain the current slot; call step() first")
    w_t = hist[-1][2]
    if delivered is None:
        return coeff, w_t
    tau = est.slot - delivered.t_gen
    by_slot = {past: (state, noise) for past, state, noise in hist}
    if delivered.t_gen not in by_slot or any(est.slot - back not in by_slot for back in range(1, tau + 1)):
        return coeff, None
    x_gen = by_slot[delivered.t_gen][0]
    sensing = -coef * fp.gain * coef**tau * (delivered.value - x_gen)
    process = coef * fp.gain * sum(coef ** (back - 1) * by_slot[est.slot - back][1] for back in range(1, tau + 1))
    return coeff, sensing + process + w_t


def no_delivery_variance(slot: int, pp: ProcessParams, e0: float = 0.0) -> float:
    """E e^2(t) when nothing is ever delivered and e(0) = e0."""
    a2 = pp.coef * pp.coef
    if a2 == 1.0:
        return e0 * e0 + slot * pp.sigma2
    return a2**slot * e0 * e0 + pp.sigma2 * (1.0 - a2**slot) / (1.0 - a2)
