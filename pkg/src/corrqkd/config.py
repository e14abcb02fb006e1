"""Run configuration: one JSON document per run.

Every problem found while validating is collected and reported together in a
single :class:`ConfigError`.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .corrmodel import LtiModel
from .estimator import EstimatorSpec
from .keyrate import ChannelParams

DEFAULT_CONFIG: dict[str, Any] = {
    "model": {"xi1": 1e-6, "C": 12.7, "delta_spf": 0.068},
    "channel": {
        "p_d": 1e-6,
        "eta_d": 0.73,
        "e_mis": 0.0,
        "f": 1.16,
        "q_basis_alice": 0.9,
        "q_basis_bob": 0.9,
        "t_sample": 0.01,
    },
    "protocol": {"N": 10**12, "eps_sec": 1e-10, "eps_corr": 1e-10},
    "truncation": {"mode": "infinite"},
    "estimator": {"kind": "reference_penalty"},
    "sweep": {"grid": "0:50:2"},
    "seed": 20251015,
    "verify": {},
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Protocol:
    N: int
    eps_sec: float | None = None
    eps_corr: float | None = None
    eps_part: float | None = None
    eps_PA: float | None = None
    eps_EV: float | None = None
    pa_fraction: float = 0.5

    @property
    def explicit_budget(self) -> bool:
        return self.eps_part is not None


@dataclass(frozen=True)
class Truncation:
    mode: str  # explicit | d_target | infinite
    l_c: int | None = None
    d_target: float | None = None
    d_fraction: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    model: LtiModel
    channel: ChannelParams
    protocol: Protocol
    truncation: Truncation
    estimator: EstimatorSpec
    att_grid: tuple[float, ...]
    seed: int
    verify: Mapping[str, Any] = field(default_factory=dict)
    base_dir: Path | None = None


def parse_grid(text: str) -> tuple[float, ...]:
    """``"start:stop:step"`` in dB, stop inclusive."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"grid {text!r} must have step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 12) for i in range(n))


def _in(x, lo, hi, lo_open=False, hi_open=False) -> bool:
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        return False
    ok_lo = x > lo if lo_open else x >= lo
    ok_hi = x < hi if hi_open else x <= hi
    return ok_lo and ok_hi


def parse_config(raw: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    problems: list[str] = []
    doc = copy.deepcopy(DEFAULT_CONFIG)
    for section, value in raw.items():
        if section not in doc:
            problems.append(f"unknown section '{section}'")
        elif isinstance(doc[section], dict) and isinstance(value, dict):
            if section in ("truncation", "estimator", "sweep", "verify"):
                doc[section] = dict(value)
            elif section == "protocol" and "eps_part" in value:
                doc[section] = dict(value)
            else:
                doc[section].update(value)
        else:
            doc[section] = value

    m = doc["model"]
    if not _in(m.get("xi1"), 0, np.inf):
        problems.append("model.xi1 must be a number >= 0")
    if not _in(m.get("C"), 0, np.inf, lo_open=True):
        problems.append("model.C must be a number > 0")
    if not _in(m.get("delta_spf", 0.0), 0, np.pi, hi_open=True):
        problems.append("model.delta_spf must lie in [0, pi)")
    model = None
    if not problems:
        try:
            model = LtiModel(m["xi1"], m["C"], m.get("delta_spf", 0.0), m.get("delta_table"))
        except (ValueError, KeyError) as exc:
            problems.append(f"model.delta_table: {exc}")
        else:
            for lag, spread, limit in model.table_violations():
                problems.append(
                    f"model.delta_table: lag {lag} spread {spread:.3g} exceeds sqrt(xi_l)={limit:.3g}"
                )

    c = doc["channel"]
    unknown = set(c) - set(ChannelParams.__dataclass_fields__)
    problems += [f"unknown field channel.{k}" for k in sorted(unknown)]
    channel = None
    checks = {
        "p_d": (0, 1),
        "eta_d": (0, 1),
        "e_mis": (0, 0.5),
        "q_basis_alice": (0, 1),
        "q_basis_bob": (0, 1),
    }
    for name, (lo, hi) in checks.items():
        if name in c and not _in(c[name], lo, hi):
            problems.append(f"channel.{name} must lie in [{lo}, {hi}]")
    if "f" in c and not _in(c["f"], 1, np.inf):
        problems.append("channel.f must be >= 1")
    if "t_sample" in c and not _in(c["t_sample"], 0, 1, True, True):
        problems.append("channel.t_sample must lie in (0, 1)")
    if not unknown and not any(p.startswith("channel.") for p in problems):
        channel = ChannelParams(**c)

    p = doc["protocol"]
    N = p.get("N")
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        problems.append("protocol.N must be a positive integer")
    explicit = {"eps_part", "eps_PA", "eps_EV"}
    targets = {"eps_sec", "eps_corr"}
    protocol = None
    if explicit & set(p):
        missing = explicit - set(p)
        problems += [f"protocol.{k} is required with an explicit budget" for k in sorted(missing)]
        for k in sorted(explicit & set(p)):
            if not _in(p[k], 0, 1, True, True):
                problems.append(f"protocol.{k} must lie in (0, 1)")
        if targets & set(p):
            problems.append("protocol: give either eps_sec/eps_corr or eps_part/eps_PA/eps_EV, not both")
    else:
        for k in sorted(targets):
            if not _in(p.get(k), 0, 1, True, True):
                problems.append(f"protocol.{k} must lie in (0, 1)")
    if not _in(p.get("pa_fraction", 0.5), 0, 1, True, True):
        problems.append("protocol.pa_fraction must lie in (0, 1)")
    if not any(x.startswith("protocol") for x in problems):
        protocol = Protocol(
            N=N,
            eps_sec=p.get("eps_sec"),
            eps_corr=p.get("eps_corr"),
            eps_part=p.get("eps_part"),
            eps_PA=p.get("eps_PA"),
            eps_EV=p.get("eps_EV"),
            pa_fraction=p.get("pa_fraction", 0.5),
        )

    t = doc["truncation"]
    truncation = None
    mode = t.get("mode")
    if mode is None:
        if "l_c" in t:
            mode = "explicit"
        elif t.get("infinite"):
            mode = "infinite"
        elif "d_target" in t:
            mode = "d_target"
    if mode not in ("explicit", "d_target", "infinite"):
        problems.append("truncation: exactly one of l_c, d_target or infinite must be given")
    elif mode == "explicit" and "d_target" in t:
        problems.append("truncation: l_c and d_target are mutually exclusive")
    elif mode == "explicit" and not (isinstance(t.get("l_c"), int) and t["l_c"] >= 0):
        problems.append("truncation.l_c must be a non-negative integer")
    elif "d_target" in t and not _in(t["d_target"], 0, 1, lo_open=True):
        problems.append("truncation.d_target must lie in (0, 1]")
    elif not _in(t.get("d_fraction", 0.5), 0, 1, True, True):
        problems.append("truncation.d_fraction must lie in (0, 1)")
    elif mode != "explicit" and "d_target" not in t and protocol is not None and protocol.explicit_budget:
        problems.append("truncation.d_target is required with an explicit budget")
    else:
        truncation = Truncation(mode, t.get("l_c"), t.get("d_target"), t.get("d_fraction", 0.5))

    estimator = None
    try:
        estimator = EstimatorSpec.from_config(doc["estimator"], base_dir)
    except FileNotFoundError as exc:
        problems.append(f"estimator.table: file not found: {exc.filename}")
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        problems.append(f"estimator: {exc}")

    s = doc["sweep"]
    grid: tuple[float, ...] = ()
    try:
        if "att_db" in s:
            grid = tuple(float(a) for a in s["att_db"])
        else:
            grid = parse_grid(s.get("grid", "0:50:2"))
        if any(a < 0 for a in grid):
            problems.append("sweep: attenuations must be >= 0 dB")
    except (ValueError, TypeError) as exc:
        problems.append(f"sweep: {exc}")

    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        problems.append("seed must be an unsigned 64-bit integer")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        model, channel, protocol, truncation, estimator, grid, seed, doc["verify"], base_dir
    )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config({})
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return parse_config(raw, path.parent)
