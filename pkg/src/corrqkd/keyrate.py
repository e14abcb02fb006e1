"""Finite-key secret-key length for BB84 with a correlated source.

The channel model is a single-photon BB84 link with threshold detectors:
transmittance ``eta_d * 10**(-att/10)``, dark counts per detector, and a
misalignment flip. Counts are expected values (no statistical fluctuation in
the counts themselves); finite-size effects enter through the estimators.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

from . import corrmodel
from .corrmodel import LtiModel
from .estimator import EstimatorSpec, declared_distance, estimate
from .partition import (
    EmptyKeyError,
    EpsBudget,
    ObservedData,
    PartitionScheme,
    Tally,
    combine_bounds,
    partition_rounds,
    total_failure,
)

if TYPE_CHECKING:
    from .config import RunConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "att_db",
    "l_c",
    "xi_total",
    "d_trunc",
    "eps_ph_total",
    "E_ph_combined",
    "n_K",
    "lambda_EC",
    "key_length",
    "key_rate",
)


def binary_entropy(x: float) -> float:
    """Binary entropy in bits, saturated at 1 above one half."""
    if not 0 <= x <= 1:
        raise ValueError(f"binary entropy needs x in [0, 1], got {x}")
    if x > 0.5:
        return 1.0
    if x == 0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def key_length(n_K: int, E_ph: float, lambda_EC: float, eps_PA: float, eps_EV: float) -> int:
    if n_K <= 0:
        return 0
    raw = (
        n_K * (1 - binary_entropy(E_ph))
        - lambda_EC
        - 2 * math.log2(1 / (2 * eps_PA))
        - math.log2(2 / eps_EV)
    )
    return max(0, math.floor(raw))


def security_params(eps_ph_total: float, eps_PA: float, eps_EV: float) -> tuple[float, float]:
    """``(eps_corr, eps_sec)`` of the final key."""
    return eps_EV, 2 * math.sqrt(eps_ph_total) + eps_PA


def split_secrecy(eps_sec: float, pa_fraction: float = 0.5) -> tuple[float, float]:
    """Split a secrecy target into ``(eps_ph_total, eps_PA)`` with
    ``2 sqrt(eps_ph_total) + eps_PA == eps_sec``.
    """
    if not 0 < pa_fraction < 1:
        raise ValueError("pa_fraction must lie in (0, 1)")
    eps_PA = pa_fraction * eps_sec
    return ((eps_sec - eps_PA) / 2) ** 2, eps_PA


def ec_leakage(n_K: int, e_bit: float, f: float) -> int:
    return math.ceil(f * n_K * binary_entropy(e_bit))


@dataclass(frozen=True)
class ChannelParams:
    att_db: float = 0.0
    p_d: float = 1e-6
    eta_d: float = 0.73
    e_mis: float = 0.0
    f: float = 1.16
    q_basis_alice: float = 0.9
    q_basis_bob: float = 0.9
    t_sample: float = 0.01

    def __post_init__(self):
        bad = []
        if self.att_db < 0:
            bad.append("att_db")
        for name in ("p_d", "eta_d", "q_basis_alice", "q_basis_bob"):
            if not 0 <= getattr(self, name) <= 1:
                bad.append(name)
        if not 0 <= self.e_mis <= 0.5:
            bad.append("e_mis")
        if self.f < 1:
            bad.append("f")
        if not 0 < self.t_sample < 1:
            bad.append("t_sample")
        if bad:
            raise ValueError(f"channel parameters out of range: {', '.join(bad)}")

    @property
    def eta_sys(self) -> float:
        return self.eta_d * 10 ** (-self.att_db / 10)

    @property
    def p_det(self) -> float:
        return 1 - (1 - self.eta_sys) * (1 - self.p_d) ** 2


def state_error_rates(model: LtiModel) -> dict[str, float]:
    """Probability that an ideal measurement in the setting's own basis gives the
    wrong bit, for each BB84 reference state.
    """
    th = {j: model.baseline_phase(j) for j in model.settings}
    return {
        "0_Z": math.sin(th["0_Z"]) ** 2,
        "1_Z": math.cos(th["1_Z"]) ** 2,
        "0_X": (1 - math.sin(2 * th["0_X"])) / 2,
        "1_X": (1 + math.sin(2 * th["1_X"])) / 2,
    }


def basis_error_rates(channel: ChannelParams, model: LtiModel) -> tuple[float, float]:
    """Expected error rate among detected rounds in the Z and X bases."""
    e_state = state_error_rates(model)
    p_det = channel.p_det
    out = []
    for basis in ("Z", "X"):
        es = (e_state[f"0_{basis}"] + e_state[f"1_{basis}"]) / 2
        e_int = es + channel.e_mis - 2 * es * channel.e_mis
        if p_det == 0:
            out.append(0.5)
            continue
        # clicks caused by dark counts alone carry a random bit
        out.append((channel.eta_sys * e_int + (p_det - channel.eta_sys) / 2) / p_det)
    return out[0], out[1]


def expected_counts(
    channel: ChannelParams, model: LtiModel, N: int, scheme: PartitionScheme
) -> ObservedData:
    """Expected announced counts per partition, rounded conservatively:
    counts down, error counts up.
    """
    if scheme.N != N:
        raise ValueError("scheme does not match N")
    e_Z, e_X = basis_error_rates(channel, model)
    qa, qb, p_det = channel.q_basis_alice, channel.q_basis_bob, channel.p_det
    parts = []
    for N_w in scheme.sizes:
        zz = N_w * qa * qb * p_det
        n_bit = math.floor(zz * channel.t_sample)
        n_K = math.floor(zz * (1 - channel.t_sample))
        n_X = math.floor(N_w * (1 - qa) * (1 - qb) * p_det)
        parts.append(
            Tally(
                n_K=n_K,
                n_X=n_X,
                k_X=min(n_X, math.ceil(n_X * e_X)),
                n_bit=n_bit,
                k_bit=min(n_bit, math.ceil(n_bit * e_Z)),
            )
        )
    return ObservedData(tuple(parts), tuple(scheme.sizes))


@dataclass(frozen=True)
class KeyResult:
    l: int
    eps_sec: float
    eps_corr: float
    E_ph: float
    n_K: int = 0
    lambda_EC: int = 0
    eps_ph_total: float = 0.0
    partitions: tuple[dict, ...] = ()
    reason: str = ""


def finalize_key(
    data: ObservedData,
    spec: EstimatorSpec,
    budget: EpsBudget,
    l_c: int,
    f: float,
    xi: float = 0.0,
) -> KeyResult:
    """Bound each partition, combine, and compute the final key length."""
    eps_ph_total = total_failure(budget, l_c)
    eps_corr, eps_sec = security_params(eps_ph_total, budget.eps_PA, budget.eps_EV)
    per_w = []
    diag = []
    for w, (tally, N_w) in enumerate(zip(data.partitions, data.rounds)):
        if tally.n_K == 0:
            per_w.append((0, 0.0))
            diag.append({"w": w, "N_w": N_w, "n_K": 0, "E_ph": 0.0})
            continue
        e_w, _ = estimate(spec, tally, N_w, budget.eps_part, xi)
        per_w.append((tally.n_K, e_w))
        diag.append({"w": w, "N_w": N_w, "n_K": tally.n_K, "E_ph": e_w})
    try:
        combined, _ = combine_bounds(per_w, budget.eps_part, l_c)
    except EmptyKeyError:
        return KeyResult(0, eps_sec, eps_corr, 1.0, 0, 0, eps_ph_total, tuple(diag), "no sifted key")
    total = data.total
    e_bit = total.k_bit / total.n_bit if total.n_bit else 0.5
    lam = ec_leakage(total.n_K, e_bit, f)
    l = key_length(total.n_K, combined, lam, budget.eps_PA, budget.eps_EV)
    return KeyResult(l, eps_sec, eps_corr, combined, total.n_K, lam, eps_ph_total, tuple(diag))


@dataclass(frozen=True)
class SweepPoint:
    att_db: float
    l_c: int
    xi_total: float
    d_trunc: float
    N: int
    result: KeyResult
    diagnostics: dict = field(default_factory=dict)

    @property
    def key_rate(self) -> float:
        return self.result.l / self.N

    def row(self) -> dict:
        r = self.result
        return {
            "att_db": self.att_db,
            "l_c": self.l_c,
            "xi_total": self.xi_total,
            "d_trunc": self.d_trunc,
            "eps_ph_total": r.eps_ph_total,
            "E_ph_combined": r.E_ph,
            "n_K": r.n_K,
            "lambda_EC": r.lambda_EC,
            "key_length": r.l,
            "key_rate": self.key_rate,
        }


def resolve_truncation(model: LtiModel, N: int, truncation, eps_ph_budget: float | None):
    """Pick ``(l_c, xi, d_trunc)`` for a truncation setting.

    ``explicit`` treats the source as truncated at the given length (no
    distance paid); ``d_target`` and ``infinite`` choose the shortest length
    meeting a distance target and pay the target, respectively the actual
    bound at that length.
    """
    if model.xi1 == 0:
        return 0, 0.0, 0.0
    if truncation.mode == "explicit":
        return truncation.l_c, corrmodel.xi_total(model, truncation.l_c), 0.0
    d_target = truncation.d_target
    if d_target is None:
        if eps_ph_budget is None:
            raise ValueError("a d_target is needed when the phase-error budget is explicit")
        d_target = truncation.d_fraction * eps_ph_budget
    l_c = corrmodel.required_lc(model, N, d_target)
    xi = corrmodel.xi_total(model, l_c)
    if truncation.mode == "d_target":
        return l_c, xi, d_target
    return l_c, xi, corrmodel.trace_distance_bound(model, N, l_c)


def evaluate_point(config: "RunConfig", att_db: float) -> SweepPoint:
    """Run the full pipeline at one channel attenuation."""
    model, proto = config.model, config.protocol
    channel = replace(config.channel, att_db=att_db)
    N = proto.N
    if proto.explicit_budget:
        eps_ph_budget = None
        eps_PA, eps_EV = proto.eps_PA, proto.eps_EV
    else:
        eps_ph_budget, eps_PA = split_secrecy(proto.eps_sec, proto.pa_fraction)
        eps_EV = proto.eps_corr
    l_c, xi, d_trunc = resolve_truncation(model, N, config.truncation, eps_ph_budget)
    scheme = partition_rounds(N, l_c)
    d_extra = min(1.0, sum(declared_distance(config.estimator, N_w, xi) for N_w in scheme.sizes))
    if proto.explicit_budget:
        eps_part = proto.eps_part
    else:
        eps_part = (eps_ph_budget - d_trunc - d_extra) / (l_c + 1)
    if eps_part <= 0 or eps_part >= 1:
        reason = "distance penalties exhaust the phase-error failure budget"
        log.info("att=%s dB: %s", att_db, reason)
        eps_ph_total = min(1.0, d_trunc + d_extra)
        eps_corr, eps_sec = security_params(eps_ph_total, eps_PA, eps_EV)
        res = KeyResult(0, eps_sec, eps_corr, 1.0, 0, 0, eps_ph_total, (), reason)
        return SweepPoint(att_db, l_c, xi, d_trunc, N, res, {"d_extra": d_extra})
    budget = EpsBudget(eps_part, eps_PA, eps_EV, d_trunc, d_extra)
    data = expected_counts(channel, model, N, scheme)
    try:
        res = finalize_key(data, config.estimator, budget, l_c, channel.f, xi)
    except (KeyError, ValueError) as exc:
        log.warning("att=%s dB: estimator failed: %s", att_db, exc)
        eps_ph_total = total_failure(budget, l_c)
        eps_corr, eps_sec = security_params(eps_ph_total, eps_PA, eps_EV)
        res = KeyResult(0, eps_sec, eps_corr, 1.0, data.n_K, 0, eps_ph_total, (), str(exc))
    return SweepPoint(att_db, l_c, xi, d_trunc, N, res, {"d_extra": d_extra})


def sweep(config: "RunConfig", att_grid: Sequence[float] | None = None) -> list[SweepPoint]:
    grid = config.att_grid if att_grid is None else att_grid
    return [evaluate_point(config, float(a)) for a in grid]


def uncorrelated_key_result(config: "RunConfig", att_db: float) -> KeyResult:
    """Key length for an uncorrelated source, computed without any partitioning."""
    proto = config.protocol
    channel = replace(config.channel, att_db=att_db)
    if proto.explicit_budget:
        eps_part, eps_PA, eps_EV = proto.eps_part, proto.eps_PA, proto.eps_EV
    else:
        eps_part, eps_PA = split_secrecy(proto.eps_sec, proto.pa_fraction)
        eps_EV = proto.eps_corr
    e_Z, e_X = basis_error_rates(channel, config.model)
    qa, qb, p_det = channel.q_basis_alice, channel.q_basis_bob, channel.p_det
    zz = proto.N * qa * qb * p_det
    n_K = math.floor(zz * (1 - channel.t_sample))
    n_bit = math.floor(zz * channel.t_sample)
    n_X = math.floor(proto.N * (1 - qa) * (1 - qb) * p_det)
    data = Tally(n_K, n_X, min(n_X, math.ceil(n_X * e_X)), n_bit, min(n_bit, math.ceil(n_bit * e_Z)))
    eps_corr, eps_sec = security_params(eps_part, eps_PA, eps_EV)
    if n_K == 0:
        return KeyResult(0, eps_sec, eps_corr, 1.0, 0, 0, eps_part, (), "no sifted key")
    e, _ = estimate(config.estimator, data, proto.N, eps_part, 0.0)
    lam = ec_leakage(n_K, data.k_bit / n_bit if n_bit else 0.5, channel.f)
    l = key_length(n_K, e, lam, eps_PA, eps_EV)
    return KeyResult(l, eps_sec, eps_corr, e, n_K, lam, eps_part)


def write_csv(points: Sequence[SweepPoint], fh: io.TextIOBase | None = None) -> str:
    """Write sweep rows as CSV; returns the text. Floats use ``repr`` so output is
    byte-identical across runs.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        row = p.row()
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def sweep_queries(config: "RunConfig", att_grid: Sequence[float] | None = None) -> list[dict]:
    """Data a sweep will hand to its per-partition estimator.

    One record ``{att_db, n_K, n_X, k_X, N_w, eps}`` per non-empty partition and
    grid point, so that an externally computed bound table can be prepared
    for exactly these keys.
    """
    grid = config.att_grid if att_grid is None else att_grid
    model, proto = config.model, config.protocol
    out = []
    for att in grid:
        channel = replace(config.channel, att_db=float(att))
        if proto.explicit_budget:
            eps_ph_budget = None
        else:
            eps_ph_budget, _ = split_secrecy(proto.eps_sec, proto.pa_fraction)
        l_c, xi, d_trunc = resolve_truncation(model, proto.N, config.truncation, eps_ph_budget)
        scheme = partition_rounds(proto.N, l_c)
        d_extra = min(1.0, sum(declared_distance(config.estimator, n, xi) for n in scheme.sizes))
        eps_part = proto.eps_part if proto.explicit_budget else (eps_ph_budget - d_trunc - d_extra) / (l_c + 1)
        if not 0 < eps_part < 1:
            continue
        data = expected_counts(channel, model, proto.N, scheme)
        for tally, N_w in zip(data.partitions, data.rounds):
            if tally.n_K:
                out.append(
                    {"att_db": float(att), "n_K": tally.n_K, "n_X": tally.n_X, "k_X": tally.k_X, "N_w": N_w, "eps": eps_part}
                )
    return out


def correlation_summary(config: "RunConfig") -> dict:
    """Correlation strengths and the truncation a run would use.

    ``d`` is the closed-form distance bound at the chosen length, reported in
    every mode (the explicit mode does not pay it in the key rate).
    """
    model, proto, trunc = config.model, config.protocol, config.truncation
    eps_ph_budget = None if proto.explicit_budget else split_secrecy(proto.eps_sec, proto.pa_fraction)[0]
    l_c, xi, d_paid = resolve_truncation(model, proto.N, trunc, eps_ph_budget)
    d_target = trunc.d_target
    if d_target is None and trunc.mode != "explicit" and eps_ph_budget is not None:
        d_target = trunc.d_fraction * eps_ph_budget
    return {
        "xi1": model.xi1,
        "C": model.C,
        "N": proto.N,
        "mode": trunc.mode,
        "xi_l": [corrmodel.xi_at(model, l) for l in range(1, max(l_c, 1) + 1)],
        "xi_total": xi,
        "xi_total_infinite": corrmodel.xi_total(model, corrmodel.INFINITE),
        "l_c": l_c,
        "d": corrmodel.trace_distance_bound(model, proto.N, l_c),
        "d_target": d_target,
        "d_paid": d_paid,
    }
