"""SPSA search over the channel-access vector of a multi-process instance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import MultiProcessConfig, run_multiprocess_mc
from .rng import stream


@dataclass(frozen=True)
class SpsaGains:
    a0: float
    offset: float
    alpha: float = 0.602
    c0: float = 0.05
    gamma: float = 0.101

    def __post_init__(self):
        if min(self.a0, self.c0, self.alpha, self.gamma) <= 0 or self.offset < 0:
            raise ValueError(f"SPSA gains must be positive, got {self}")

    def step(self, k: int) -> float:
        return self.a0 / (self.offset + k + 1) ** self.alpha

    def perturbation(self, k: int) -> float:
        return self.c0 / (k + 1) ** self.gamma


@dataclass
class SpsaResult:
    access: np.ndarray
    start: np.ndarray
    gains: SpsaGains
    trace: list[float] = field(default_factory=list)  # mean of the +/- costs per iteration
    path: list[np.ndarray] = field(default_factory=list)


def project_simplex(v: Sequence[float]) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Falls back to the uniform vector when the input carries no usable mass.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if n == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        return np.full(n, 1.0 / n)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    out = np.maximum(v - css[rho] / (rho + 1), 0.0)
    s = out.sum()
    if s <= 0.0:
        return np.full(n, 1.0 / n)
    return out / s


def _full(theta: np.ndarray) -> np.ndarray:
    return project_simplex(np.append(theta, 1.0 - theta.sum()))


def _cost(mcfg: MultiProcessConfig, access: np.ndarray, kind, reps: int, first: int) -> float:
    return run_multiprocess_mc(mcfg.with_access(tuple(access)), kind, reps, first_replication=first).mean


def default_gains(
    mcfg: MultiProcessConfig,
    iterations: int,
    kind="index-voi",
    reps: int = 200,
    c0: float = 0.05,
    first_step: float = 0.1,
    probes: int = 4,
    seed: int = 0,
) -> SpsaGains:
    """Gains scaled so the first update moves the free coordinates by about ``first_step``."""
    offset = 0.1 * iterations
    theta = np.asarray(mcfg.access[:-1], dtype=float)
    g = stream(seed, "spsa-probe")
    mags = []
    for j in range(probes):
        d = g.choice([-1.0, 1.0], size=theta.size)
        first = 10**9 + j * reps
        yp = _cost(mcfg, _full(theta + c0 * d), kind, reps, first)
        ym = _cost(mcfg, _full(theta - c0 * d), kind, reps, first)
        mags.append(abs(yp - ym) / (2 * c0))
    gmag = float(np.mean(mags)) or 1.0
    return SpsaGains(a0=first_step * (offset + 1) ** 0.602 / gmag, offset=offset, c0=c0)


def spsa_optimize(
    mcfg: MultiProcessConfig,
    iterations: int,
    gains: Optional[SpsaGains] = None,
    kind="index-voi",
    reps: int = 200,
    seed: int = 0,
) -> SpsaResult:
    """Two-measurement SPSA on the first N-1 access probabilities.

    Both measurements of iteration ``k`` reuse the same replication block, so
    the difference only reflects the perturbation.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    mcfg.validate()
    start = np.asarray(mcfg.access, dtype=float)
    n = start.size
    if n == 1:
        return SpsaResult(start.copy(), start.copy(), gains or SpsaGains(1.0, 0.0),
                          path=[start.copy() for _ in range(iterations)])
    if gains is None:
        gains = default_gains(mcfg, iterations, kind, reps, seed=seed)
    g = stream(seed, "spsa")
    theta = start[:-1].copy()
    res = SpsaResult(start.copy(), start.copy(), gains)
    for k in range(iterations):
        ck = gains.perturbation(k)
        d = g.choice([-1.0, 1.0], size=theta.size)
        first = k * reps
        yp = _cost(mcfg, _full(theta + ck * d), kind, reps, first)
        ym = _cost(mcfg, _full(theta - ck * d), kind, reps, first)
        grad = (yp - ym) / (2.0 * ck) / d
        theta = _full(theta - gains.step(k) * grad)[:-1]
        res.trace.append(0.5 * (yp + ym))
        res.path.append(_full(theta))
    res.access = _full(theta)
    return res


def l1_distance(u: Sequence[float], v: Sequence[float]) -> float:
    return float(np.abs(np.asarray(u, float) - np.asarray(v, float)).sum())


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)
