"""Phase-error-rate estimators for a single partition.

Every estimator maps the announced data of one partition to an upper bound
``E_ph`` that fails with probability at most ``eps`` (plus any declared trace
distance ``d_extra``). Three kinds ship with the package:

``sampling``
    random-sampling tail bound; only valid for perfectly characterized states.
``reference_penalty``
    the sampling bound applied to the reference states, paying the trace
    distance between the actual and the reference source.
``table``
    exact-key lookup of externally computed bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .partition import Tally

KINDS = ("sampling", "reference_penalty", "table")


class TableMissError(KeyError):
    """The table has no entry for the observed data; bounds are never extrapolated."""


def _key(n_X: int, k_X: int, N_w: int, eps: float) -> tuple[int, int, int, str]:
    return int(n_X), int(k_X), int(N_w), repr(float(eps))


@dataclass(frozen=True)
class BoundTable:
    entries: Mapping[tuple[int, int, int, str], float]

    @classmethod
    def from_records(cls, records) -> "BoundTable":
        entries = {}
        for r in records:
            e = float(r["e_ph"])
            if not 0 <= e <= 1:
                raise ValueError(f"e_ph out of range in record {r}")
            entries[_key(r["n_X"], r["k_X"], r["N_w"], r["eps"])] = e
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "BoundTable":
        with open(path) as fh:
            return cls.from_records(json.load(fh))

    def lookup(self, n_X: int, k_X: int, N_w: int, eps: float) -> float:
        key = _key(n_X, k_X, N_w, eps)
        try:
            return self.entries[key]
        except KeyError:
            raise TableMissError(
                f"no stored bound for n_X={n_X}, k_X={k_X}, N_w={N_w}, eps={eps!r}"
            ) from None


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    d_extra: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; choose from {KINDS}")
        if not 0 <= self.d_extra <= 1:
            raise ValueError("d_extra must lie in [0, 1]")
        if self.kind == "table" and not isinstance(self.params.get("table"), BoundTable):
            raise ValueError("table estimator needs params['table'] (a BoundTable)")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any], base: Path | None = None) -> "EstimatorSpec":
        kind = cfg.get("kind", "sampling")
        params = {}
        if kind == "table":
            if "table" in cfg:
                path = Path(cfg["table"])
                if base is not None and not path.is_absolute():
                    path = base / path
                params["table"] = BoundTable.load(path)
            elif "records" in cfg:
                params["table"] = BoundTable.from_records(cfg["records"])
        return cls(kind, params, float(cfg.get("d_extra", 0.0)))


def sampling_estimator(n_K: int, n_X: int, k_X: int, eps: float) -> float:
    """Observed test error rate plus a sampling-without-replacement deviation."""
    if n_X == 0 or n_K == 0:
        return 1.0
    dev = math.sqrt((n_K + n_X) * (n_X + 1) * math.log(1 / eps) / (2 * n_K * n_X**2))
    return min(1.0, k_X / n_X + dev)


def reference_penalty_estimator(
    n_K: int, n_X: int, k_X: int, eps: float, xi: float, N_w: int
) -> tuple[float, float]:
    """Sampling bound for the reference source and the distance to pay for using it.

    A per-round fidelity floor ``1 - xi`` gives a global overlap of at least
    ``(1 - xi)**N_w``, hence trace distance at most ``sqrt(N_w * xi)``.
    """
    if not 0 <= xi <= 1:
        raise ValueError(f"xi must lie in [0, 1], got {xi}")
    return sampling_estimator(n_K, n_X, k_X, eps), penalty_distance(xi, N_w)


def penalty_distance(xi: float, N_w: int) -> float:
    return min(1.0, math.sqrt(N_w * xi))


def table_estimator(table: BoundTable, data_w: Tally, N_w: int, eps: float) -> float:
    return table.lookup(data_w.n_X, data_w.k_X, N_w, eps)


def declared_distance(spec: EstimatorSpec, N_w: int, xi: float = 0.0) -> float:
    """Distance penalty ``spec`` will add for a partition of ``N_w`` rounds.

    Does not depend on the data, so the failure budget can be split up front.
    """
    d = spec.d_extra
    if spec.kind == "reference_penalty":
        d += penalty_distance(xi, N_w)
    return min(1.0, d)


def estimate(
    spec: EstimatorSpec, data_w: Tally, N_w: int, eps: float, xi: float = 0.0
) -> tuple[float, float]:
    """Phase-error bound for one partition and the distance penalty it carries."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if spec.kind == "sampling":
        if xi != 0:
            raise ValueError(
                f"sampling estimator assumes perfectly characterized states, got xi={xi}"
            )
        e = sampling_estimator(data_w.n_K, data_w.n_X, data_w.k_X, eps)
    elif spec.kind == "reference_penalty":
        e, _ = reference_penalty_estimator(data_w.n_K, data_w.n_X, data_w.k_X, eps, xi, N_w)
    else:
        e = table_estimator(spec.params["table"], data_w, N_w, eps)
    return min(1.0, max(0.0, e)), declared_distance(spec, N_w, xi)


def tabulate(queries, bound) -> BoundTable:
    """Fill a table for the queried keys with ``bound(n_K, n_X, k_X, eps)``.

    Queries sharing a key keep the largest value, so the table is never
    tighter than ``bound`` for any of them.
    """
    entries: dict[tuple[int, int, int, str], float] = {}
    for q in queries:
        key = _key(q["n_X"], q["k_X"], q["N_w"], q["eps"])
        e = min(1.0, max(0.0, float(bound(q["n_K"], q["n_X"], q["k_X"], q["eps"]))))
        entries[key] = max(e, entries.get(key, 0.0))
    return BoundTable(entries)
