"""Exact pure-state algebra for small numbers of rounds.

States are numpy vectors of complex amplitudes. Multi-round states are tensor
products ordered big-endian in the round index: the earliest round is the most
significant qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corrmodel import LtiModel, encoded_phase, xi_total

NORM_TOL = 1e-12
GRAM_TOL = 1e-10
EXACT_MAX_ROUNDS = 12


def qubit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def check_normalized(psi: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    norm = float(np.vdot(psi, psi).real)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized: <psi|psi> = {norm!r}")
    return psi


def emit_state(model: LtiModel, history: Sequence[str]) -> np.ndarray:
    """State emitted in the last round of ``history``."""
    return qubit(encoded_phase(model, history))


def reference_state(model: LtiModel, j: str) -> np.ndarray:
    """Characterized single-round state for setting ``j``: no correlations, only the flaw."""
    return qubit(model.baseline_phase(j))


def kron_all(states: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for s in states:
        out = np.kron(out, s)
    return out


def block_state(
    model: LtiModel, window: Sequence[str], k: int, N: int, l_c: int
) -> np.ndarray:
    """Joint state of rounds ``k .. min(k + l_c, N)``.

    ``window`` holds the settings of rounds ``max(1, k - l_c) .. min(k + l_c, N)``.
    Each round ``m`` sees only its last ``l_c`` predecessors, i.e. the source is
    the one truncated at correlation length ``l_c``.
    """
    if not 1 <= k <= N:
        raise ValueError(f"k={k} outside 1..{N}")
    first, last = max(1, k - l_c), min(k + l_c, N)
    if len(window) != last - first + 1:
        raise ValueError(
            f"window for k={k}, l_c={l_c}, N={N} must cover rounds {first}..{last} "
            f"({last - first + 1} settings), got {len(window)}"
        )
    parts = []
    for m in range(k, last + 1):
        lo = max(first, m - l_c)
        parts.append(emit_state(model, window[lo - first : m - first + 1]))
    return kron_all(parts)


@dataclass(frozen=True)
class StateFamily:
    """Pure states indexed by setting symbols."""

    labels: tuple[str, ...]
    states: np.ndarray  # one row per label

    def __post_init__(self):
        labels = tuple(self.labels)
        states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        if not labels:
            raise ValueError("family must have at least one member")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        if states.shape[0] != len(labels):
            raise ValueError(f"{len(labels)} labels but {states.shape[0]} states")
        for row in states:
            check_normalized(row)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_mapping(cls, states: Mapping[str, np.ndarray]) -> "StateFamily":
        vecs = [np.asarray(v, dtype=complex) for v in states.values()]
        if len({v.shape for v in vecs}) > 1:
            raise ValueError("all states in a family must share one dimension")
        return cls(tuple(states), np.array(vecs))

    def __getitem__(self, label: str) -> np.ndarray:
        return self.states[self.labels.index(label)]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    labels: tuple[str, ...]
    entries: np.ndarray


def reference_family(model: LtiModel) -> StateFamily:
    return StateFamily.from_mapping({j: reference_state(model, j) for j in model.settings})


def single_round_family(model: LtiModel, past: Sequence[str]) -> StateFamily:
    """States of one round for every current setting, given a fixed past."""
    return StateFamily.from_mapping(
        {j: emit_state(model, [*past, j]) for j in model.settings}
    )


def block_family(
    model: LtiModel, past: Sequence[str], future: Sequence[str], l_c: int
) -> StateFamily:
    """Block states over rounds ``k..k+len(future)`` obtained by varying the
    current setting with ``past`` and ``future`` held fixed.

    ``past`` and ``future`` hold at most ``l_c`` settings each; shorter
    sequences represent rounds near the protocol boundaries.
    """
    if len(past) > l_c or len(future) > l_c:
        raise ValueError("past and future may hold at most l_c settings")
    k = len(past) + 1
    N = k + len(future)
    return StateFamily.from_mapping(
        {j: block_state(model, [*past, j, *future], k, N, l_c) for j in model.settings}
    )


def gram(family: StateFamily) -> GramMatrix:
    s = family.states
    return GramMatrix(family.labels, s.conj() @ s.T)


def gram_equivalent(a: GramMatrix, b: GramMatrix, tol: float = GRAM_TOL) -> bool:
    """Whether two families are related by an isometry, up to ``tol`` entrywise."""
    if a.labels != b.labels:
        raise ValueError(f"index sets differ: {a.labels} vs {b.labels}")
    return bool(np.max(np.abs(a.entries - b.entries)) <= tol)


@dataclass(frozen=True)
class FidelityReport:
    overlaps: dict[str, float]
    floor: float
    gram_matches_reference: bool

    @property
    def violating(self) -> list[str]:
        return [j for j, v in self.overlaps.items() if v < self.floor]

    @property
    def holds(self) -> bool:
        return not self.violating


def fidelity_condition(
    model: LtiModel,
    past: Sequence[str],
    future: Sequence[str],
    anchor: str,
    l_c: int,
) -> FidelityReport:
    """Check the fidelity-to-reference premise for one round and one fixed
    choice of surrounding settings.

    The round-k state is compared with itself (its family has the reference
    Gram matrix) and the future rounds with the tail they would carry had the
    current setting been ``anchor``. The tail is independent of the current
    setting, as the premise requires.
    """
    if anchor not in model.alphabet:
        raise KeyError(f"unknown anchor setting {anchor!r}")
    if model.delta_table is None and (past or future):
        raise ValueError("fidelity_condition needs a delta_table")
    fam = block_family(model, past, future, l_c)
    current = single_round_family(model, past)
    k = len(past) + 1
    tail = kron_all(
        [
            emit_state(model, [*past, anchor, *future][max(0, m - l_c - 1) : m])
            for m in range(k + 1, k + len(future) + 1)
        ]
    )
    overlaps = {}
    for j in model.settings:
        probe = np.kron(current[j], tail)
        overlaps[j] = float(abs(np.vdot(probe, fam[j])) ** 2)
    return FidelityReport(
        overlaps,
        1.0 - xi_total(model, l_c),
        gram_equivalent(gram(current), gram(reference_family(model))),
    )


def two_state_overlap_condition(family: StateFamily, c: float, tol: float = NORM_TOL) -> bool:
    """Squared overlap of a two-member family is at least ``c`` (within ``tol``)."""
    if len(family.labels) != 2:
        raise ValueError(f"need exactly two states, got {len(family.labels)}")
    a, b = family.states
    return bool(abs(np.vdot(b, a)) ** 2 >= c - tol)


def truncated_overlap(
    model: LtiModel,
    N: int,
    l_c: int,
    probs: Mapping[str, float] | None = None,
    anchor: str | None = None,
) -> tuple[float, float]:
    """Exact overlap and trace distance between the source-replacement states of
    the true source and of the source truncated at ``l_c``.

    In the truncated source, every setting more than ``l_c`` rounds back is
    replaced by ``anchor``. The overlap is the setting-probability-weighted sum
    over all histories of the product of per-round overlaps. It is accumulated
    over setting prefixes: the factor of round k depends only on rounds
    before k.
    """
    if N > EXACT_MAX_ROUNDS:
        raise ValueError(f"exact mode supports N <= {EXACT_MAX_ROUNDS}, got {N}")
    if N < 1 or l_c < 0:
        raise ValueError("need N >= 1 and l_c >= 0")
    settings = model.settings
    anchor = settings[0] if anchor is None else anchor
    if anchor not in settings:
        raise KeyError(f"unknown anchor setting {anchor!r}")
    if probs is None:
        p = np.full(len(settings), 1.0 / len(settings))
    else:
        p = np.array([probs[j] for j in settings], dtype=float)
        if abs(p.sum() - 1) > 1e-12 or (p < 0).any():
            raise ValueError("probs must be a distribution over the alphabet")
    depth = model.depth
    if depth > l_c and model.delta_table is None:
        raise ValueError("truncated_overlap needs a delta_table")
    # shift[i, l-1]: residual phase of setting i at lag l, relative to the anchor
    shift = np.zeros((len(settings), max(depth, 1)))
    for i, j in enumerate(settings):
        for lag in range(1, depth + 1):
            shift[i, lag - 1] = model.delta(j, lag) - model.delta(anchor, lag)

    q = len(settings)
    # prefixes of length k-1 as digit arrays, oldest first
    digits = np.zeros((1, 0), dtype=np.int64)
    weight = np.ones(1)  # Pr[prefix] * product of factors so far
    for k in range(1, N + 1):
        lags = np.arange(l_c + 1, min(k - 1, depth) + 1)
        if lags.size:
            # setting at lag l sits at position k-1-l of the prefix
            cols = digits[:, k - 1 - lags]
            weight = weight * np.cos(shift[cols, lags - 1].sum(axis=1))
        digits = np.concatenate(
            [np.repeat(digits, q, axis=0), np.tile(np.arange(q), len(digits))[:, None]], axis=1
        )
        weight = np.repeat(weight, q) * np.tile(p, len(weight))
    overlap = float(weight.sum())
    d = math.sqrt(max(0.0, 1.0 - overlap**2))
    return overlap, d
