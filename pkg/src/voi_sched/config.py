"""JSON experiment configs: parsing, validation with line numbers, and round-trip.

A config names one experiment and carries the block it needs::

    {
      "experiment": "compare",            # single | compare | multiproc | spsa | verify
      "seed": 2024, "reps": 1000, "mode": "paper", "arrival_lag": 0,
      "policies": ["index-voi", "freshest-first"],
      "episode": {
        "horizon": 200,
        "process": {"coef": 0.6, "sigma2": 1.0},
        "filter": {"gain": 0.2},
        "channel": {"reliability": 0.7},
        "sources": [{"sigma2_s": 0.1, "arrival_rate": 0.5}],
        "initial_queue": [{"t_gen": 0, "sigma2_s": 0.5}],
        "e0": 0.0
      }
    }

``multiproc`` and ``spsa`` use a ``multiproc`` block (horizon, channel,
access, processes[]); ``spsa`` adds an ``spsa`` block and ``verify`` a
``verify`` block.  See README.md for every field and default.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Optional

from .engine import (
    ChannelParams,
    ConfigError,
    EpisodeConfig,
    InitialPacket,
    MultiProcessConfig,
    ProcessBlock,
    SimplexError,
)
from .index import MODES, PAPER
from .model import AssumptionViolation, FilterParams, ModelError, ProcessParams, SourceProfile, check_assumption
from .policies import PolicyKind

EXPERIMENTS = ("single", "compare", "multiproc", "spsa", "verify")
VERIFY_CHECKS = ("optimality", "ordering", "interchange", "margin", "variance")


class ConfigParseError(ConfigError):
    """Base class; ``code`` distinguishes the failure family."""

    code = "E_SCHEMA"

    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        self.message, self.line, self.path = message, line, path
        where = f"line {line}: " if line is not None else ""
        at = f" (at {path})" if path else ""
        super().__init__(f"{self.code}: {where}{message}{at}")


class SyntaxConfigError(ConfigParseError):
    code = "E_SYNTAX"


class SchemaError(ConfigParseError):
    code = "E_SCHEMA"


class AssumptionConfigError(ConfigParseError):
    code = "E_ASSUMPTION"


class SimplexConfigError(ConfigParseError):
    code = "E_SIMPLEX"


@dataclass(frozen=True)
class SpsaSettings:
    iterations: int = 200
    reps_per_eval: int = 50
    final_reps: int = 2000
    a0: Optional[float] = None
    offset: Optional[float] = None
    alpha: float = 0.602
    c0: float = 0.05
    gamma: float = 0.101


@dataclass(frozen=True)
class VerifySettings:
    checks: tuple[str, ...] = VERIFY_CHECKS
    instances: int = 200
    horizon_max: int = 4
    packets_max: int = 3
    reliability_values: tuple[float, ...] = (0.5, 1.0)
    variance_samples: int = 10**6


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    seed: int = 0
    reps: int = 100
    mode: str = PAPER
    arrival_lag: int = 0
    workers: int = 1
    policies: tuple[str, ...] = ("index-voi",)
    episode: Optional[EpisodeConfig] = None
    multiproc: Optional[MultiProcessConfig] = None
    spsa: Optional[SpsaSettings] = None
    verify: Optional[VerifySettings] = None

    def with_overrides(self, seed=None, reps=None, mode=None, arrival_lag=None) -> "ExperimentSpec":
        """Apply command-line overrides and push them into the embedded configs."""
        spec = replace(
            self,
            seed=self.seed if seed is None else int(seed),
            reps=self.reps if reps is None else int(reps),
            mode=self.mode if mode is None else mode,
            arrival_lag=self.arrival_lag if arrival_lag is None else int(arrival_lag),
        )
        if spec.mode not in MODES:
            raise SchemaError(f"mode must be one of {list(MODES)}, got {spec.mode!r}")
        if spec.arrival_lag not in (0, 1):
            raise SchemaError("arrival_lag must be 0 or 1")
        if spec.reps < 2:
            raise SchemaError("reps must be >= 2")
        shared = dict(seed=spec.seed, mode=spec.mode, arrival_lag=spec.arrival_lag)
        if spec.episode is not None:
            spec = replace(spec, episode=replace(spec.episode, **shared))
        if spec.multiproc is not None:
            spec = replace(spec, multiproc=replace(spec.multiproc, **shared))
        return spec


# -- locating JSON paths in the source text ------------------------------------

_WS = " \t\n\r"


def _skip(text: str, i: int) -> int:
    while i < len(text) and text[i] in _WS:
        i += 1
    return i


def _offset(text: str, path: tuple) -> Optional[int]:
    """Character offset of the value at ``path`` (or of the deepest reachable parent)."""
    dec = json.JSONDecoder()
    i = _skip(text, 0)
    for step in path:
        if i >= len(text):
            return None
        if isinstance(step, str) and text[i] == "{":
            i = _skip(text, i + 1)
            found = None
            while i < len(text) and text[i] != "}":
                key, i = json.decoder.scanstring(text, i + 1)
                i = _skip(text, _skip(text, i) + 1)
                if key == step:
                    found = i
                _, end = dec.raw_decode(text, i)
                i = _skip(text, end)
                if i < len(text) and text[i] == ",":
                    i = _skip(text, i + 1)
            if found is None:
                return None
            i = found
        elif isinstance(step, int) and text[i] == "[":
            i = _skip(text, i + 1)
            for _ in range(step):
                _, end = dec.raw_decode(text, i)
                i = _skip(text, end)
                if i < len(text) and text[i] == ",":
                    i = _skip(text, i + 1)
        else:
            return None
    return i


def line_of(text: str, path: tuple) -> Optional[int]:
    """1-based line of the value at ``path``, falling back to its nearest parent."""
    for cut in range(len(path), -1, -1):
        try:
            off = _offset(text, path[:cut])
        except (ValueError, IndexError):
            off = None
        if off is not None:
            return text.count("\n", 0, off) + 1
    return None


def _path_str(path: tuple) -> str:
    return "".join(f"[{step}]" if isinstance(step, int) else (f".{step}" if i else step) for i, step in enumerate(path))


# -- typed field access ----------------------------------------------------------

class _Reader:
    def __init__(self, text: str):
        self.text = text

    def fail(self, cls, msg: str, path: tuple):
        raise cls(msg, line_of(self.text, path), _path_str(path))

    def obj(self, v, path, allowed: tuple[str, ...]) -> dict:
        if not isinstance(v, dict):
            self.fail(SchemaError, f"expected an object, got {type(v).__name__}", path)
        for k in v:
            if k not in allowed:
                self.fail(SchemaError, f"unknown key {k!r}; allowed: {', '.join(allowed)}", path + (k,))
        return v

    def req(self, d: dict, key: str, path: tuple):
        if key not in d:
            self.fail(SchemaError, f"missing required key {key!r}", path)
        return d[key]

    def num(self, d: dict, key: str, path: tuple, default=None, required=False) -> float:
        if key not in d:
            if required:
                self.fail(SchemaError, f"missing required key {key!r}", path)
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(SchemaError, f"{key} must be a finite number, got {v!r}", path + (key,))
        return float(v)

    def int_(self, d: dict, key: str, path: tuple, default=None, required=False, lo=None) -> int:
        if key not in d:
            if required:
                self.fail(SchemaError, f"missing required key {key!r}", path)
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(SchemaError, f"{key} must be an integer, got {v!r}", path + (key,))
        if lo is not None and v < lo:
            self.fail(SchemaError, f"{key} must be >= {lo}, got {v}", path + (key,))
        return v

    def list_(self, d: dict, key: str, path: tuple, default=None, required=False) -> list:
        if key not in d:
            if required:
                self.fail(SchemaError, f"missing required key {key!r}", path)
            return default
        v = d[key]
        if not isinstance(v, list):
            self.fail(SchemaError, f"{key} must be an array", path + (key,))
        return v


def _guard(reader: _Reader, path: tuple, fn, *args):
    """Turn model-level exceptions into located config errors."""
    try:
        return fn(*args)
    except AssumptionViolation as exc:
        reader.fail(AssumptionConfigError, f"gain-bound assumption violated: {exc}", path)
    except SimplexError as exc:
        reader.fail(SimplexConfigError, str(exc), path)
    except (ModelError, ConfigError, ValueError) as exc:
        reader.fail(SchemaError, str(exc), path)


def _process_parts(rd: _Reader, d: dict, path: tuple):
    proc = rd.obj(rd.req(d, "process", path), path + ("process",), ("coef", "sigma2"))
    filt = rd.obj(rd.req(d, "filter", path), path + ("filter",), ("gain",))
    pp = _guard(rd, path + ("process",), ProcessParams,
                rd.num(proc, "coef", path + ("process",), required=True),
                rd.num(proc, "sigma2", path + ("process",), default=1.0))
    fp = _guard(rd, path + ("filter", "gain"), FilterParams, rd.num(filt, "gain", path + ("filter",), required=True))
    _guard(rd, path + ("filter", "gain"), check_assumption, pp, fp)
    sources = []
    for i, s in enumerate(rd.list_(d, "sources", path, default=[])):
        sp = path + ("sources", i)
        s = rd.obj(s, sp, ("source_id", "sigma2_s", "arrival_rate"))
        sid = rd.int_(s, "source_id", sp, default=i + 1)
        if sid != i + 1:
            rd.fail(SchemaError, f"source ids must be 1..M in order; expected {i + 1}", sp + ("source_id",))
        rate = rd.num(s, "arrival_rate", sp, default=0.0)
        if not 0.0 <= rate <= 1.0:
            rd.fail(SchemaError, f"arrival_rate must lie in [0, 1], got {rate}", sp + ("arrival_rate",))
        sources.append(_guard(rd, sp, SourceProfile, sid, rd.num(s, "sigma2_s", sp, required=True), rate))
    initial = []
    for i, q in enumerate(rd.list_(d, "initial_queue", path, default=[])):
        qp = path + ("initial_queue", i)
        q = rd.obj(q, qp, ("t_gen", "sigma2_s", "source_id"))
        initial.append(InitialPacket(
            rd.int_(q, "t_gen", qp, required=True),
            rd.num(q, "sigma2_s", qp, required=True),
            rd.int_(q, "source_id", qp, default=0, lo=0),
        ))
    e0 = rd.num(d, "e0", path, default=0.0)
    return pp, fp, tuple(sources), tuple(initial), e0


def _channel(rd: _Reader, d: dict, path: tuple) -> ChannelParams:
    ch = rd.obj(rd.req(d, "channel", path), path + ("channel",), ("reliability",))
    value = rd.num(ch, "reliability", path + ("channel",), required=True)
    return _guard(rd, path + ("channel", "reliability"), ChannelParams, value)


_PROCESS_KEYS = ("process", "filter", "sources", "initial_queue", "e0")


def _episode(rd: _Reader, v, top: dict) -> EpisodeConfig:
    path = ("episode",)
    d = rd.obj(v, path, ("horizon", "channel") + _PROCESS_KEYS)
    pp, fp, sources, initial, e0 = _process_parts(rd, d, path)
    cfg = EpisodeConfig(
        horizon=rd.int_(d, "horizon", path, required=True, lo=2),
        process=pp, filter=fp, sources=sources, channel=_channel(rd, d, path),
        initial_queue=initial, e0=e0, **top,
    )
    _guard(rd, path, cfg.validate)
    return cfg


def _multiproc(rd: _Reader, v, top: dict) -> MultiProcessConfig:
    path = ("multiproc",)
    d = rd.obj(v, path, ("horizon", "channel", "access", "processes"))
    blocks = []
    procs = rd.list_(d, "processes", path, required=True)
    if not procs:
        rd.fail(SchemaError, "processes must not be empty", path + ("processes",))
    for i, b in enumerate(procs):
        bp = path + ("processes", i)
        b = rd.obj(b, bp, _PROCESS_KEYS)
        pp, fp, sources, initial, e0 = _process_parts(rd, b, bp)
        blocks.append(ProcessBlock(pp, fp, sources, initial, e0))
    access = rd.list_(d, "access", path, default=None)
    if access is None:
        access = [1.0 / len(blocks)] * len(blocks)
    for j, val in enumerate(access):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            rd.fail(SchemaError, f"access entries must be numbers, got {val!r}", path + ("access", j))
    mcfg = MultiProcessConfig(
        horizon=rd.int_(d, "horizon", path, required=True, lo=2),
        processes=tuple(blocks), channel=_channel(rd, d, path),
        access=tuple(float(val) for val in access), **top,
    )
    _guard(rd, path + ("access",), mcfg.validate)
    return mcfg


def _spsa(rd: _Reader, v) -> SpsaSettings:
    path = ("spsa",)
    d = rd.obj(v or {}, path, ("iterations", "reps_per_eval", "final_reps", "gains"))
    g = rd.obj(d.get("gains", {}), path + ("gains",), ("a0", "offset", "alpha", "c0", "gamma"))
    gp = path + ("gains",)
    s = SpsaSettings(
        iterations=rd.int_(d, "iterations", path, default=200, lo=1),
        reps_per_eval=rd.int_(d, "reps_per_eval", path, default=50, lo=2),
        final_reps=rd.int_(d, "final_reps", path, default=2000, lo=2),
        a0=rd.num(g, "a0", gp), offset=rd.num(g, "offset", gp),
        alpha=rd.num(g, "alpha", gp, default=0.602), c0=rd.num(g, "c0", gp, default=0.05),
        gamma=rd.num(g, "gamma", gp, default=0.101),
    )
    for k in ("a0", "alpha", "c0", "gamma"):
        val = getattr(s, k)
        if val is not None and val <= 0:
            rd.fail(SchemaError, f"SPSA gain {k} must be positive", gp + (k,))
    if s.offset is not None and s.offset < 0:
        rd.fail(SchemaError, "SPSA gain offset must be >= 0", gp + ("offset",))
    return s


def _verify(rd: _Reader, v) -> VerifySettings:
    path = ("verify",)
    d = rd.obj(v or {}, path, ("checks", "instances", "horizon_max", "packets_max", "reliability_values",
                               "variance_samples"))
    checks = tuple(rd.list_(d, "checks", path, default=list(VERIFY_CHECKS)))
    for j, c in enumerate(checks):
        if c not in VERIFY_CHECKS:
            rd.fail(SchemaError, f"unknown check {c!r}; choose from {list(VERIFY_CHECKS)}", path + ("checks", j))
    s = VerifySettings(
        checks=checks,
        instances=rd.int_(d, "instances", path, default=200, lo=1),
        horizon_max=rd.int_(d, "horizon_max", path, default=4, lo=2),
        packets_max=rd.int_(d, "packets_max", path, default=3, lo=1),
        reliability_values=tuple(float(val) for val in rd.list_(d, "reliability_values", path, default=[0.5, 1.0])),
        variance_samples=rd.int_(d, "variance_samples", path, default=10**6, lo=10**4),
    )
    if s.horizon_max > 6 or s.packets_max > 4:
        rd.fail(SchemaError, "verify instances are limited to horizon <= 6 and <= 4 packets", path)
    for j, rel in enumerate(s.reliability_values):
        if not 0.0 < rel <= 1.0:
            rd.fail(SchemaError, f"reliability_values entries must lie in (0, 1], got {rel}",
                    path + ("reliability_values", j))
    return s


_TOP_KEYS = ("experiment", "seed", "reps", "mode", "arrival_lag", "workers", "policies", "policy",
             "episode", "multiproc", "spsa", "verify")


def parse_config(text: str) -> ExperimentSpec:
    """Parse and fully validate a JSON experiment config."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SyntaxConfigError(exc.msg, exc.lineno) from None
    rd = _Reader(text)
    d = rd.obj(raw, (), _TOP_KEYS)
    exp = rd.req(d, "experiment", ())
    if exp not in EXPERIMENTS:
        rd.fail(SchemaError, f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}", ("experiment",))
    mode = d.get("mode", PAPER)
    if mode not in MODES:
        rd.fail(SchemaError, f"mode must be one of {list(MODES)}, got {mode!r}", ("mode",))
    lag = rd.int_(d, "arrival_lag", (), default=0)
    if lag not in (0, 1):
        rd.fail(SchemaError, "arrival_lag must be 0 or 1", ("arrival_lag",))
    seed = rd.int_(d, "seed", (), default=0, lo=0)
    top = dict(seed=seed, mode=mode, arrival_lag=lag)

    if "policies" in d and "policy" in d:
        rd.fail(SchemaError, "give either 'policy' or 'policies', not both", ("policy",))
    names = rd.list_(d, "policies", (), default=None)
    key = "policies"
    if names is None:
        names, key = [d.get("policy", "index-voi")], "policy"
    policies = []
    for j, name in enumerate(names):
        try:
            policies.append(PolicyKind.parse(name).value)
        except ValueError as exc:
            rd.fail(SchemaError, str(exc), (key, j) if key == "policies" else (key,))
    if exp in ("single", "multiproc", "spsa") and len(policies) != 1:
        rd.fail(SchemaError, f"experiment {exp!r} runs exactly one policy", (key,))

    need = {"single": "episode", "compare": "episode", "multiproc": "multiproc", "spsa": "multiproc"}.get(exp)
    if need is not None and need not in d:
        rd.fail(SchemaError, f"experiment {exp!r} needs a {need!r} block", ())
    return ExperimentSpec(
        experiment=exp,
        seed=seed,
        reps=rd.int_(d, "reps", (), default=100, lo=2),
        mode=mode,
        arrival_lag=lag,
        workers=rd.int_(d, "workers", (), default=1, lo=1),
        policies=tuple(policies),
        episode=_episode(rd, d["episode"], top) if "episode" in d else None,
        multiproc=_multiproc(rd, d["multiproc"], top) if "multiproc" in d else None,
        spsa=_spsa(rd, d.get("spsa")) if exp == "spsa" or "spsa" in d else None,
        verify=_verify(rd, d.get("verify")) if exp == "verify" or "verify" in d else None,
    )


# -- serialization ------------------------------------------------------------

def _process_dict(pp, fp, sources, initial, e0) -> dict[str, Any]:
    return {
        "process": {"coef": pp.coef, "sigma2": pp.sigma2},
        "filter": {"gain": fp.gain},
        "sources": [{"source_id": s.source_id, "sigma2_s": s.sigma2_s, "arrival_rate": s.arrival_rate} for s in sources],
        "initial_queue": [{"t_gen": q.t_gen, "sigma2_s": q.sigma2_s, "source_id": q.source_id} for q in initial],
        "e0": e0,
    }


def spec_to_dict(spec: ExperimentSpec) -> dict[str, Any]:
    out: dict[str, Any] = {
        "experiment": spec.experiment,
        "seed": spec.seed,
        "reps": spec.reps,
        "mode": spec.mode,
        "arrival_lag": spec.arrival_lag,
        "workers": spec.workers,
        "policies": list(spec.policies),
    }
    if spec.episode is not None:
        ep = spec.episode
        out["episode"] = {"horizon": ep.horizon, "channel": {"reliability": ep.channel.reliability},
                          **_process_dict(ep.process, ep.filter, ep.sources, ep.initial_queue, ep.e0)}
    if spec.multiproc is not None:
        m = spec.multiproc
        out["multiproc"] = {
            "horizon": m.horizon,
            "channel": {"reliability": m.channel.reliability},
            "access": list(m.access),
            "processes": [_process_dict(b.process, b.filter, b.sources, b.initial_queue, b.e0) for b in m.processes],
        }
    if spec.spsa is not None:
        s = spec.spsa
        gains = {k: getattr(s, k) for k in ("a0", "offset", "alpha", "c0", "gamma") if getattr(s, k) is not None}
        out["spsa"] = {"iterations": s.iterations, "reps_per_eval": s.reps_per_eval,
                       "final_reps": s.final_reps, "gains": gains}
    if spec.verify is not None:
        v = spec.verify
        out["verify"] = {"checks": list(v.checks), "instances": v.instances, "horizon_max": v.horizon_max,
                         "packets_max": v.packets_max, "reliability_values": list(v.reliability_values),
                         "variance_samples": v.variance_samples}
    return out


def dumps(spec: ExperimentSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=False) + "\n"


def load_config(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
