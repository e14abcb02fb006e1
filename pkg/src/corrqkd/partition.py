"""Round partitioning, combination of per-partition phase-error bounds and
failure-probability bookkeeping.

Rounds ``k = 1..N`` are split into ``l_c + 1`` residue classes
``I_w = {k : k = w mod (l_c + 1)}``. Members of one class are at least
``l_c + 1`` rounds apart, so a source with correlation length ``l_c`` looks
uncorrelated within each class.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KEY_BASIS = 0
TEST_BASIS = 1
NO_BASIS = -1


class EmptyKeyError(ValueError):
    """Raised when there are no sifted key bits to bound."""


@dataclass(frozen=True)
class PartitionScheme:
    N: int
    l_c: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.l_c < 0:
            raise ValueError("l_c must be >= 0")

    @property
    def n_sets(self) -> int:
        return self.l_c + 1

    def members(self, w: int) -> np.ndarray:
        """1-based round indices in ``I_w``."""
        if not 0 <= w <= self.l_c:
            raise ValueError(f"w must lie in 0..{self.l_c}")
        first = w if w > 0 else self.n_sets
        return np.arange(first, self.N + 1, self.n_sets)

    @property
    def sets(self) -> list[np.ndarray]:
        return [self.members(w) for w in range(self.n_sets)]

    def size(self, w: int) -> int:
        """``|I_w|`` without materializing the set."""
        first = w if w > 0 else self.n_sets
        return 0 if first > self.N else (self.N - first) // self.n_sets + 1

    @property
    def sizes(self) -> list[int]:
        return [self.size(w) for w in range(self.n_sets)]

    def label(self, rounds: np.ndarray) -> np.ndarray:
        """Partition index of each 1-based round number."""
        return np.asarray(rounds) % self.n_sets


def partition_rounds(N: int, l_c: int) -> PartitionScheme:
    return PartitionScheme(int(N), int(l_c))


@dataclass(frozen=True)
class Tally:
    """Announced counts for one group of rounds.

    ``n_K`` sifted key bits; ``n_X``/``k_X`` test-basis rounds and their
    errors; ``n_bit``/``k_bit`` key-basis rounds sacrificed for bit-error
    estimation and their errors.
    """

    n_K: int = 0
    n_X: int = 0
    k_X: int = 0
    n_bit: int = 0
    k_bit: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0 or int(v) != v:
                raise ValueError(f"{f.name} must be a non-negative integer, got {v}")
            object.__setattr__(self, f.name, int(v))
        if self.k_X > self.n_X or self.k_bit > self.n_bit:
            raise ValueError("error counts cannot exceed test counts")

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ObservedData:
    """Per-partition tallies with the number of rounds in each partition."""

    partitions: tuple[Tally, ...]
    rounds: tuple[int, ...]

    def __post_init__(self):
        if len(self.partitions) != len(self.rounds):
            raise ValueError("one round count per partition is required")

    @property
    def total(self) -> Tally:
        return sum(self.partitions, Tally())

    @property
    def n_K(self) -> int:
        return self.total.n_K


@dataclass(frozen=True)
class RoundLog:
    """Per-round record of a protocol run.

    ``basis`` is ``KEY_BASIS`` / ``TEST_BASIS`` for rounds where Alice's and
    Bob's bases agree and ``NO_BASIS`` otherwise. ``test`` marks key-basis
    rounds diverted to bit-error estimation; it is ignored for test-basis
    rounds. ``error`` marks a mismatch between Alice's and Bob's bits.
    """

    detected: np.ndarray
    basis: np.ndarray
    test: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a) for a in (self.detected, self.basis, self.test, self.error)]
        if len({a.shape for a in arrays}) > 1:
            raise ValueError("all log columns must have the same length")
        object.__setattr__(self, "detected", arrays[0].astype(bool))
        object.__setattr__(self, "basis", arrays[1].astype(np.int8))
        object.__setattr__(self, "test", arrays[2].astype(bool))
        object.__setattr__(self, "error", arrays[3].astype(bool))

    def __len__(self) -> int:
        return len(self.detected)

    @classmethod
    def empty(cls, N: int = 0) -> "RoundLog":
        z = np.zeros(N, dtype=bool)
        return cls(z, np.full(N, NO_BASIS), z, z)

    @classmethod
    def from_csv(cls, path: str | Path) -> "RoundLog":
        """Read a log with columns ``round,detected,basis,test,error``.

        ``basis`` is ``Z``, ``X`` or ``-``; the flag columns are 0/1.
        """
        codes = {"Z": KEY_BASIS, "X": TEST_BASIS, "-": NO_BASIS, "": NO_BASIS}
        rows = []
        with open(path, newline="") as fh:
            for i, rec in enumerate(csv.DictReader(fh), start=1):
                if int(rec["round"]) != i:
                    raise ValueError(f"{path}: expected round {i}, found {rec['round']}")
                rows.append(
                    (int(rec["detected"]), codes[rec["basis"].strip()], int(rec["test"]), int(rec["error"]))
                )
        cols = list(zip(*rows)) if rows else [[], [], [], []]
        return cls(*(np.array(c) for c in cols))

    def to_csv(self, path: str | Path) -> None:
        names = {KEY_BASIS: "Z", TEST_BASIS: "X", NO_BASIS: "-"}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "detected", "basis", "test", "error"])
            for k in range(len(self)):
                w.writerow(
                    [k + 1, int(self.detected[k]), names[int(self.basis[k])], int(self.test[k]), int(self.error[k])]
                )


def tally_rounds(log: RoundLog, mask: np.ndarray | None = None) -> Tally:
    sel = log.detected if mask is None else log.detected & mask
    key = sel & (log.basis == KEY_BASIS)
    xt = sel & (log.basis == TEST_BASIS)
    bit = key & log.test
    return Tally(
        n_K=int(np.count_nonzero(key & ~log.test)),
        n_X=int(np.count_nonzero(xt)),
        k_X=int(np.count_nonzero(xt & log.error)),
        n_bit=int(np.count_nonzero(bit)),
        k_bit=int(np.count_nonzero(bit & log.error)),
    )


def restrict_data(log: RoundLog, scheme: PartitionScheme) -> ObservedData:
    """Tally the log separately over each partition."""
    if len(log) != scheme.N:
        raise ValueError(f"log covers {len(log)} rounds, scheme expects {scheme.N}")
    labels = scheme.label(np.arange(1, scheme.N + 1))
    parts = tuple(tally_rounds(log, labels == w) for w in range(scheme.n_sets))
    return ObservedData(parts, tuple(scheme.sizes))


@dataclass(frozen=True)
class EpsBudget:
    """Failure-probability components of the phase-error bound.

    ``eps_part`` per-partition bound failure; ``d_trunc`` truncation distance;
    ``d_extra`` distance penalty declared by the estimator.
    """

    eps_part: float
    eps_PA: float
    eps_EV: float
    d_trunc: float = 0.0
    d_extra: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0 <= v <= 1:
                raise ValueError(f"{f.name} must lie in [0, 1], got {v}")


def combine_bounds(
    per_w: Sequence[tuple[int, float]], eps_part: float, l_c: int
) -> tuple[float, float]:
    """Key-weighted average of per-partition phase-error bounds.

    Partitions without key bits contribute nothing, whatever bound was passed
    for them. Returns the combined bound, clamped to [0, 1], and its failure
    probability ``(l_c + 1) * eps_part``.
    """
    if len(per_w) != l_c + 1:
        raise ValueError(f"expected {l_c + 1} partitions, got {len(per_w)}")
    if any(n_w < 0 for n_w, _ in per_w):
        raise ValueError("key counts must be non-negative")
    used = [(n_w, e_w) for n_w, e_w in per_w if n_w > 0]
    if not used:
        raise EmptyKeyError("no sifted key bits in any partition")
    if len(used) == 1:
        # exact, so a single partition reproduces its own bound bit for bit
        combined = used[0][1]
    else:
        combined = math.fsum(n_w * e_w for n_w, e_w in used) / sum(n_w for n_w, _ in used)
        # a weighted average lies between its extremes; clip rounding excursions
        combined = min(max(combined, min(e for _, e in used)), max(e for _, e in used))
    combined = min(1.0, max(0.0, combined))
    return combined, (l_c + 1) * eps_part


def total_failure(budget: EpsBudget, l_c: int) -> float:
    return min(1.0, (l_c + 1) * budget.eps_part + budget.d_trunc + budget.d_extra)


def merge(tallies: Iterable[Tally]) -> Tally:
    return sum(tallies, Tally())
