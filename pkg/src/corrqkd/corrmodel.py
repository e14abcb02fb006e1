"""LTI pulse-correlation model.

The encoded phase of round k is a baseline phase for the current setting plus
a residual contribution from every earlier setting, indexed by lag. The
residuals are bounded by an exponentially decaying correlation strength

    |delta_j^(l) - delta_j'^(l)| <= sqrt(xi_l),   xi_l = xi1 * exp(-C (l - 1)).

Bound-level functions only need ``(xi1, C)``. Exact oracles additionally need
an explicit table of residual phases, stored per setting as a tuple indexed by
lag (``delta_table[j][l - 1]``). A table of depth L describes a source whose
correlations vanish beyond lag L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

BB84_PHASES: dict[str, float] = {
    "0_Z": 0.0,
    "0_X": math.pi / 4,
    "1_Z": math.pi / 2,
    "1_X": 3 * math.pi / 4,
}
B92_PHASES: dict[str, float] = {"0": 0.0, "1": math.pi / 4}

INFINITE = math.inf


@dataclass(frozen=True)
class LtiModel:
    """Correlation model of a phase modulator.

    Attributes:
        xi1: nearest-neighbour correlation strength, >= 0.
        C: decay constant per lag, > 0.
        delta_spf: state-preparation flaw, in [0, pi).
        delta_table: optional map setting -> residual phases for lags 1..L.
        alphabet: map setting -> ideal phase. Defaults to the BB84 symbols.
    """

    xi1: float
    C: float
    delta_spf: float = 0.0
    delta_table: Mapping[str, tuple[float, ...]] | None = None
    alphabet: Mapping[str, float] = field(default_factory=lambda: dict(BB84_PHASES))

    def __post_init__(self):
        if not self.xi1 >= 0:
            raise ValueError(f"xi1 must be >= 0, got {self.xi1}")
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if not 0 <= self.delta_spf < math.pi:
            raise ValueError(f"delta_spf must lie in [0, pi), got {self.delta_spf}")
        if self.delta_table is not None:
            table = {j: tuple(float(x) for x in row) for j, row in self.delta_table.items()}
            unknown = set(table) - set(self.alphabet)
            if unknown:
                raise ValueError(f"delta_table has unknown settings {sorted(unknown)}")
            missing = set(self.alphabet) - set(table)
            if missing:
                raise ValueError(f"delta_table is missing settings {sorted(missing)}")
            if len({len(row) for row in table.values()}) > 1:
                raise ValueError("delta_table rows must all cover the same lags")
            object.__setattr__(self, "delta_table", table)

    @property
    def settings(self) -> tuple[str, ...]:
        return tuple(self.alphabet)

    @property
    def depth(self) -> int:
        """Number of lags covered by ``delta_table`` (0 without a table)."""
        if not self.delta_table:
            return 0
        return len(next(iter(self.delta_table.values())))

    def baseline_phase(self, j: str) -> float:
        """Phase encoded for setting ``j`` from a modulator at rest."""
        try:
            phi = self.alphabet[j]
        except KeyError:
            raise KeyError(f"unknown setting {j!r}; alphabet is {self.settings}") from None
        return (1.0 + self.delta_spf / math.pi) * phi

    def delta(self, j: str, lag: int) -> float:
        if self.delta_table is None:
            raise ValueError("model has no delta_table")
        if lag < 1 or lag > self.depth:
            raise ValueError(f"delta_table covers lags 1..{self.depth}, lag {lag} requested")
        try:
            return self.delta_table[j][lag - 1]
        except KeyError:
            raise KeyError(f"unknown setting {j!r}") from None

    def with_table(self, table: Mapping[str, Sequence[float]] | None) -> "LtiModel":
        return LtiModel(self.xi1, self.C, self.delta_spf, table, dict(self.alphabet))

    def table_violations(self, rtol: float = 1e-12) -> list[tuple[int, float, float]]:
        """Lags whose residual spread exceeds ``sqrt(xi_l)``.

        Returns ``(lag, spread, sqrt(xi_l))`` triples; empty for an admissible table.
        """
        out = []
        for lag in range(1, self.depth + 1):
            column = [self.delta_table[j][lag - 1] for j in self.settings]
            spread = max(column) - min(column)
            limit = math.sqrt(xi_at(self, lag))
            if spread > limit * (1 + rtol) + 1e-300:
                out.append((lag, spread, limit))
        return out

    def is_admissible(self) -> bool:
        return not self.table_violations()


@dataclass(frozen=True)
class TruncationPlan:
    """Effective correlation length and the trace-distance price paid for it."""

    l_c: int
    d: float
    N: int

    def __post_init__(self):
        if self.l_c < 0:
            raise ValueError("l_c must be >= 0")
        if not 0 <= self.d <= 1:
            raise ValueError("d must lie in [0, 1]")
        if self.N < 1:
            raise ValueError("N must be >= 1")


def xi_at(model: LtiModel, l: int) -> float:
    """Correlation strength at lag ``l >= 1``."""
    if l < 1:
        raise ValueError(f"lag must be >= 1, got {l}")
    if model.xi1 == 0:
        return 0.0
    return model.xi1 * math.exp(-model.C * (l - 1))


def xi_total(model: LtiModel, l_c: int | float) -> float:
    """Sum of ``xi_l`` over lags ``1..l_c``; ``l_c`` may be ``INFINITE``."""
    if l_c != INFINITE and (l_c < 0 or int(l_c) != l_c):
        raise ValueError(f"l_c must be a non-negative integer or INFINITE, got {l_c}")
    if l_c == 0 or model.xi1 == 0:
        return 0.0
    denom = -math.expm1(-model.C)
    if l_c == INFINITE:
        return model.xi1 / denom
    return model.xi1 * -math.expm1(-model.C * l_c) / denom


def trace_distance_bound(model: LtiModel, N: int, l_c: int | float) -> float:
    """Upper bound on the trace distance between the true source-replacement
    state and the one with correlations truncated at ``l_c``.

    Clamped to [0, 1].
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if l_c < 0:
        raise ValueError("l_c must be >= 0")
    if model.xi1 == 0 or l_c == INFINITE:
        return 0.0
    d = math.sqrt(N * model.xi1) * math.exp(-model.C * l_c / 2) / -math.expm1(-model.C / 2)
    return min(1.0, max(0.0, d))


def required_lc(model: LtiModel, N: int, d_target: float) -> int:
    """Smallest correlation length whose truncation distance is <= ``d_target``.

    Returns 0 when ``xi1 == 0``: an uncorrelated source needs no truncation.
    """
    if not 0 < d_target <= 1:
        raise ValueError(f"d_target must lie in (0, 1], got {d_target}")
    if model.xi1 == 0:
        return 0
    arg = N * model.xi1 / (d_target**2 * math.expm1(-model.C / 2) ** 2)
    l_c = max(0, math.ceil(math.log(arg) / model.C))
    # guard the ceil() against rounding in either direction
    while trace_distance_bound(model, N, l_c) > d_target:
        l_c += 1
    while l_c > 0 and trace_distance_bound(model, N, l_c - 1) <= d_target:
        l_c -= 1
    return l_c


def plan_truncation(model: LtiModel, N: int, d_target: float) -> TruncationPlan:
    l_c = required_lc(model, N, d_target)
    return TruncationPlan(l_c, trace_distance_bound(model, N, l_c), N)


def fidelity_floor_exact(model: LtiModel, j: str, j_star: str, l_c: int) -> tuple[float, float]:
    """Exact squared overlap between tails emitted after ``j`` and after ``j_star``,
    together with the analytic floor ``1 - xi_total(l_c)``.
    """
    if l_c > model.depth:
        raise ValueError(f"delta_table covers {model.depth} lags, l_c={l_c} requested")
    exact = 1.0
    for lag in range(1, l_c + 1):
        exact *= math.cos(model.delta(j, lag) - model.delta(j_star, lag)) ** 2
    return exact, 1.0 - xi_total(model, l_c)


def encoded_phase(model: LtiModel, history: Sequence[str]) -> float:
    """Phase encoded in the last round of ``history`` (oldest setting first).

    Lags beyond the table depth contribute nothing.
    """
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    theta = model.baseline_phase(history[-1])
    lags = len(history) - 1
    if lags and model.delta_table is None:
        raise ValueError("a history longer than one round needs a delta_table")
    for lag in range(1, min(lags, model.depth) + 1):
        theta += model.delta(history[-1 - lag], lag)
    # unknown settings beyond the table depth are still an error
    for j in history[: max(0, lags - model.depth)]:
        model.baseline_phase(j)
    return theta


def random_delta_table(
    model: LtiModel,
    depth: int,
    rng: np.random.Generator,
    *,
    saturate: bool = False,
    scale: float = 1.0,
) -> dict[str, tuple[float, ...]]:
    """Draw residual phases whose pairwise differences lie in ``[-s, s]``,
    ``s = scale * sqrt(xi_l)``.

    Each lag gets a random common offset plus ``u_j * s`` with ``u_j`` uniform
    in [0, 1]. With ``saturate`` the extreme settings are pushed to 0 and 1 so
    the largest difference equals ``s`` exactly. ``scale > 1`` produces tables
    that break the correlation bound, for adversarial checks.
    """
    settings = model.settings
    cols = []
    for lag in range(1, depth + 1):
        s = scale * math.sqrt(xi_at(model, lag))
        u = rng.random(len(settings))
        if saturate and len(settings) > 1:
            u[np.argmin(u)] = 0.0
            u[np.argmax(u)] = 1.0
        offset = rng.uniform(-0.5, 0.5) * s
        cols.append(offset + u * s)
    return {j: tuple(float(c[i]) for c in cols) for i, j in enumerate(settings)}
