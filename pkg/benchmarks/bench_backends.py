"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_backends.py [--reps 300] [--horizon 200] [--heap 200000]

Both backends are run on identical inputs; the script also checks the
outputs are bit-identical before reporting timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from voi_sched import engine
from voi_sched._backend import BACKEND, py_kernels
from voi_sched.engine import ChannelParams, EpisodeConfig
from voi_sched.model import FilterParams, ProcessParams, SourceProfile

try:
    from voi_sched import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None


def time_heap(heap_cls, n: int, seed: int = 0) -> tuple[float, list[int]]:
    g = np.random.default_rng(seed)
    k1 = np.sign(g.normal(size=n)).tolist()
    k2 = g.normal(size=n).tolist()
    tg = g.integers(0, 10**4, n).tolist()
    h = heap_cls()
    t0 = time.perf_counter()
    for i in range(n):
        h.push(k1[i], k2[i], tg[i], 1, i)
    out = [h.pop() for _ in range(n)]
    return time.perf_counter() - t0, out


def time_episodes(kernel, cfg: EpisodeConfig, kind: str, reps: int) -> tuple[float, bytes]:
    saved = engine.run_episode_kernel
    engine.run_episode_kernel = kernel
    try:
        draws = [engine.draw_episode(cfg, r, need_policy=kind == "random") for r in range(reps)]
        code = engine._kind_code(kind)
        t0 = time.perf_counter()
        runs = [engine._simulate(cfg, code, d) for d in draws]
        elapsed = time.perf_counter() - t0
    finally:
        engine.run_episode_kernel = saved
    return elapsed, b"".join(r.e2.tobytes() + r.decisions.tobytes() for r in runs)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=300)
    ap.add_argument("--horizon", type=int, default=200)
    ap.add_argument("--heap", type=int, default=200_000)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit(f"compiled extension not importable (active backend: {BACKEND}); build with pip install -e .")

    print(f"{'kernel':<28}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}  identical")
    tp, op = time_heap(py_kernels.PacketHeap, args.heap)
    tc, oc = time_heap(compiled.PacketHeap, args.heap)
    print(f"{f'heap push+pop n={args.heap}':<28}{tp:>12.3f}{tc:>14.3f}{tp / tc:>10.1f}  {op == oc}")

    cfg = EpisodeConfig(
        args.horizon, ProcessParams(0.6, 1.0), FilterParams(0.2),
        (SourceProfile(1, 0.1, 0.5), SourceProfile(2, 2.0, 0.5)), ChannelParams(0.7), seed=1,
    ).validate()
    for kind in ("index-voi", "freshest-first", "random"):
        tp, bp = time_episodes(py_kernels.run_episode, cfg, kind, args.reps)
        tc, bc = time_episodes(compiled.run_episode, cfg, kind, args.reps)
        label = f"episode {kind} x{args.reps}"
        print(f"{label:<28}{tp:>12.3f}{tc:>14.3f}{tp / tc:>10.1f}  {bp == bc}")


if __name__ == "__main__":
    main()
