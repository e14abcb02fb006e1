"""Brute-force oracles and Monte-Carlo checks of the analytic bounds.

Every check returns a :class:`TrialReport`. Randomness comes from a master
seed; trial ``i`` of a Monte-Carlo check draws from the stream
``SeedSequence(seed, spawn_key=(i,))`` so results do not depend on how trials
are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .corrmodel import LtiModel, random_delta_table, trace_distance_bound, xi_total
from .estimator import EstimatorSpec, estimate
from .partition import EmptyKeyError, Tally, combine_bounds
from .states import fidelity_condition, truncated_overlap

_PLUS = np.array([1.0, 1.0]) / math.sqrt(2)
_MINUS = np.array([1.0, -1.0]) / math.sqrt(2)
P_PLUS = np.outer(_PLUS, _PLUS).astype(complex)
P_MINUS = np.outer(_MINUS, _MINUS).astype(complex)
I2 = np.eye(2, dtype=complex)
PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def trial_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def binomial_slack(eps: float, trials: int) -> float:
    return 3 * math.sqrt(eps / trials)


@dataclass
class TrialReport:
    check: str
    trials: int
    violations: int
    bound: float
    seed: int | None = None
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValueError("violations must lie in [0, trials]")

    @property
    def frequency(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    @property
    def passed(self) -> bool:
        if self.details.get("containment_failures", 0):
            return False
        return self.frequency <= self.bound

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "params": self.params,
            "trials": self.trials,
            "violations": self.violations,
            "bound": self.bound,
            "pass": self.passed,
            "seed": self.seed,
            **({"details": self.details} if self.details else {}),
        }


@dataclass(frozen=True)
class AttackModel:
    """I.i.d. single-qubit channel applied by the eavesdropper to every pulse."""

    kind: str
    angle: float = 0.0
    p: float = 0.0
    basis: str = "Z"

    def __post_init__(self):
        if self.kind not in ("identity", "rotation", "depolarizing", "intercept_resend"):
            raise ValueError(f"unknown attack {self.kind!r}")
        if self.kind == "depolarizing" and not 0 <= self.p <= 1:
            raise ValueError("depolarizing probability must lie in [0, 1]")
        if self.kind == "intercept_resend" and self.basis not in ("Z", "X"):
            raise ValueError("intercept-resend basis must be Z or X")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "AttackModel":
        return cls(cfg.get("kind", "identity"), cfg.get("angle", 0.0), cfg.get("p", 0.0), cfg.get("basis", "Z"))

    def kraus(self) -> list[np.ndarray]:
        if self.kind == "identity":
            return [I2]
        if self.kind == "rotation":
            c, s = math.cos(self.angle), math.sin(self.angle)
            return [np.array([[c, -s], [s, c]], dtype=complex)]
        if self.kind == "depolarizing":
            return [math.sqrt(1 - 3 * self.p / 4) * I2] + [math.sqrt(self.p / 4) * P for P in PAULI]
        if self.basis == "Z":
            return [np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)]
        return [P_PLUS, P_MINUS]

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ij |i><j| (x) K|i><j|K^dag``, summed over Kraus operators."""
        out = np.zeros((4, 4), dtype=complex)
        omega = np.zeros(4, dtype=complex)
        omega[0] = omega[3] = 1.0
        for K in self.kraus():
            v = np.kron(I2, K) @ omega
            out += np.outer(v, v.conj())
        return out

    def is_cptp(self, tol: float = 1e-12) -> bool:
        choi = self.choi()
        # partial trace over the output must be the identity
        tp = np.einsum("iaja->ij", choi.reshape(2, 2, 2, 2))
        psd = np.linalg.eigvalsh((choi + choi.conj().T) / 2).min() >= -tol
        return bool(np.allclose(tp, I2, atol=tol) and psd)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply the channel to the last qubit of ``rho``."""
        dim = rho.shape[0]
        eye = np.eye(dim // 2)
        out = np.zeros_like(rho, dtype=complex)
        for K in self.kraus():
            M = np.kron(eye, K)
            out += M @ rho @ M.conj().T
        return out


def qubit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def phase_error_probability(
    attack: AttackModel,
    psi0: np.ndarray,
    psi1: np.ndarray,
    coherence: float = 1.0,
    p0: float = 0.5,
) -> float:
    """Probability that Alice's virtual X outcome and Bob's X outcome differ in
    a key round.

    Alice's key register is entangled with the pulse, ``sqrt(p0)|0>|psi0> +
    sqrt(1-p0)|1>|psi1>``. ``coherence`` scales the off-diagonal blocks; it is
    the overlap of whatever later pulses carry about the key bit, which are
    traced out.
    """
    a = np.array([math.sqrt(p0), math.sqrt(1 - p0)])
    blocks = [[np.outer(psi0, psi0.conj()), np.outer(psi0, psi1.conj())],
              [np.outer(psi1, psi0.conj()), np.outer(psi1, psi1.conj())]]
    rho = np.zeros((4, 4), dtype=complex)
    for x in range(2):
        for y in range(2):
            c = 1.0 if x == y else coherence
            rho[2 * x : 2 * x + 2, 2 * y : 2 * y + 2] = a[x] * a[y] * c * blocks[x][y]
    out = attack.apply(rho)
    err = np.kron(P_PLUS, P_MINUS) + np.kron(P_MINUS, P_PLUS)
    return float(np.real(np.trace(err @ out)))


def test_error_probability(attack: AttackModel, psi: np.ndarray, expect_plus: bool) -> float:
    """Probability that Bob's X measurement contradicts Alice's test bit."""
    rho = attack.apply(np.outer(psi, psi.conj()))
    wrong = P_MINUS if expect_plus else P_PLUS
    return float(np.real(np.trace(wrong @ rho)))


def _random_settings(model: LtiModel, n: int, rng: np.random.Generator) -> list[str]:
    s = model.settings
    return [s[i] for i in rng.integers(len(s), size=n)]


def check_fidelity_chain(
    model: LtiModel,
    draws: int,
    seed: int,
    l_c: int = 2,
    *,
    saturate_fraction: float = 0.5,
    scale: float = 1.0,
) -> TrialReport:
    """Draw residual-phase tables and surrounding settings and test that every
    block state keeps squared overlap ``>= 1 - xi`` with reference-plus-tail.

    A model carrying its own ``delta_table`` is used as is; otherwise tables of
    depth ``l_c`` are drawn, with ``scale > 1`` giving inadmissible ones.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    violations = 0
    worst = math.inf
    violating = []
    for i in range(draws):
        rng = trial_rng(seed, i)
        m = model
        if model.delta_table is None:
            table = random_delta_table(
                model, l_c, rng, saturate=rng.random() < saturate_fraction, scale=scale
            )
            m = model.with_table(table)
        # occasionally emulate the protocol boundaries
        n_past = l_c if rng.random() < 0.8 else int(rng.integers(0, l_c + 1))
        n_future = l_c if rng.random() < 0.8 else int(rng.integers(0, l_c + 1))
        past = _random_settings(m, n_past, rng)
        future = _random_settings(m, n_future, rng)
        anchor = m.settings[int(rng.integers(len(m.settings)))]
        rep = fidelity_condition(m, past, future, anchor, l_c)
        worst = min(worst, min(rep.overlaps.values()) - rep.floor)
        if not rep.holds or not rep.gram_matches_reference:
            violations += 1
            if len(violating) < 5:
                violating.append({"draw": i, "settings": rep.violating, "floor": rep.floor})
    return TrialReport(
        "fidelity",
        draws,
        violations,
        0.0,
        seed,
        {"xi1": model.xi1, "C": model.C, "l_c": l_c, "scale": scale},
        {"min_margin": worst, "examples": violating},
    )


def check_truncation(
    model: LtiModel,
    N_max: int,
    l_c_max: int | None,
    seed: int,
    *,
    tables: int = 100,
    random_probs: bool = False,
) -> TrialReport:
    """Compare the exact truncation distance with its closed-form bound for every
    ``N <= N_max`` and ``l_c < N``, on random admissible tables of depth ``N - 1``.
    """
    if N_max > 10:
        raise ValueError("check_truncation supports N_max <= 10")
    checks = violations = 0
    worst_ratio = 0.0
    for N in range(1, N_max + 1):
        for l_c in range(0, N if l_c_max is None else min(N, l_c_max + 1)):
            bound = trace_distance_bound(model, N, l_c)
            for t in range(tables):
                rng = trial_rng(seed, (N * 64 + l_c) * 100_000 + t)
                m = model
                if model.delta_table is None and N > 1:
                    m = model.with_table(
                        random_delta_table(model, N - 1, rng, saturate=rng.random() < 0.5)
                    )
                anchor = m.settings[int(rng.integers(len(m.settings)))]
                probs = None
                if random_probs:
                    probs = dict(zip(m.settings, rng.dirichlet(np.ones(len(m.settings)))))
                _, d = truncated_overlap(m, N, l_c, probs, anchor)
                checks += 1
                if d > bound + 1e-12:
                    violations += 1
                if bound > 0:
                    worst_ratio = max(worst_ratio, d / bound)
    return TrialReport(
        "truncation",
        checks,
        violations,
        0.0,
        seed,
        {"xi1": model.xi1, "C": model.C, "N_max": N_max, "tables": tables},
        {"max_d_over_bound": worst_ratio},
    )


def mc_union(
    sizes: Sequence[int],
    p_w: Sequence[float] | float,
    trials: int,
    seed: int,
    *,
    gap: float = 0.05,
    chunk: int = 100_000,
) -> TrialReport:
    """Synthetic check of the combination step alone.

    Each partition independently violates its bound with probability ``p_w``
    (its error rate then exceeds the bound by up to ``gap``); otherwise its
    error rate lies anywhere below the bound. Counts how often the weighted
    average exceeds the weighted bound, and that this never happens unless
    some partition violated.
    """
    n = np.asarray(sizes, dtype=float)
    W = len(n)
    p = np.broadcast_to(np.asarray(p_w, dtype=float), (W,))
    if ((p < 0) | (p > 1)).any():
        raise ValueError("p_w must lie in [0, 1]")
    events = containment_failures = 0
    for c, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = trial_rng(seed, c)
        viol = rng.random((size, W)) < p
        bound = rng.uniform(0.0, 0.5, (size, W))
        over = bound + gap * (1.0 - rng.random((size, W)))
        under = bound * rng.random((size, W))
        e = np.where(viol, over, under)
        B = (e * n).sum(axis=1) > (bound * n).sum(axis=1)
        events += int(B.sum())
        containment_failures += int((B & ~viol.any(axis=1)).sum())
    P = min(1.0, float(p.sum()))
    sigma = math.sqrt(P * (1 - P) / trials)
    return TrialReport(
        "union",
        trials,
        events,
        P + 3 * sigma,
        seed,
        {"sizes": [int(x) for x in n], "p_w": p.tolist(), "gap": gap},
        {"containment_failures": containment_failures},
    )


@dataclass(frozen=True)
class PeepSetup:
    """Per-round outcome probabilities, tabulated by the recent setting history."""

    depth: int
    key_idx: tuple[int, int]
    test_idx: tuple[int, int]
    p_phase: np.ndarray  # [future lags available, history code]
    p_test: np.ndarray  # [history code, test setting]


def peep_setup(model: LtiModel, attack: AttackModel, probs: np.ndarray) -> PeepSetup:
    s = model.settings
    try:
        key_idx = (s.index("0_Z"), s.index("1_Z"))
        test_idx = (s.index("0_X"), s.index("1_X"))
    except ValueError:
        raise ValueError("the protocol simulation needs the BB84 alphabet") from None
    D = model.depth
    q = len(s)
    base = q + 1  # extra symbol for rounds before the first one
    codes = base**D
    # residual phase of each history code
    shift = np.zeros(codes)
    for code in range(codes):
        x = code
        for lag in range(1, D + 1):
            sym = x % base
            x //= base
            if sym < q:
                shift[code] += model.delta(s[sym], lag)
    coh = np.ones(D + 1)
    for f in range(1, D + 1):
        coh[f] = coh[f - 1] * math.cos(model.delta(s[key_idx[0]], f) - model.delta(s[key_idx[1]], f))
    pk = probs[list(key_idx)]
    p0 = pk[0] / pk.sum() if pk.sum() > 0 else 0.5
    th = [model.baseline_phase(j) for j in s]
    p_phase = np.zeros((D + 1, codes))
    p_test = np.zeros((codes, 2))
    for code in range(codes):
        psi0 = qubit(th[key_idx[0]] + shift[code])
        psi1 = qubit(th[key_idx[1]] + shift[code])
        for f in range(D + 1):
            p_phase[f, code] = phase_error_probability(attack, psi0, psi1, coh[f], p0)
        for b, idx in enumerate(test_idx):
            p_test[code, b] = test_error_probability(attack, qubit(th[idx] + shift[code]), b == 0)
    return PeepSetup(D, key_idx, test_idx, np.clip(p_phase, 0, 1), np.clip(p_test, 0, 1))


def mc_peep(
    attack: AttackModel,
    estimator: EstimatorSpec,
    model: LtiModel,
    N: int,
    l_c: int,
    trials: int,
    eps: float,
    seed: int,
    *,
    probs: Sequence[float] | None = None,
    q_bob_key: float = 0.5,
    eta: float = 1.0,
) -> TrialReport:
    """Simulate the phase-error estimation experiment and count how often the
    true phase-error rate exceeds the combined bound.

    Alice's settings are drawn i.i.d.; each pulse carries the residual phases
    of the last ``depth`` settings of the model's table (drawn at random if
    the model has none but correlates). Per key round the joint distribution
    of Alice's virtual X outcome and Bob's X outcome is computed exactly; what
    later pulses carry about the key bit enters as a coherence factor. Rounds
    are then sampled independently given their histories.
    """
    if N > 100_000:
        raise ValueError("mc_peep supports N <= 1e5 rounds per trial")
    if model.delta_table is None and model.xi1 > 0 and l_c > 0:
        rng0 = trial_rng(seed, 2**32)
        model = model.with_table(random_delta_table(model, l_c, rng0, saturate=True))
    if model.depth > l_c:
        raise ValueError(f"table depth {model.depth} exceeds the partition length l_c={l_c}")
    q = len(model.settings)
    pr = np.full(q, 1.0 / q) if probs is None else np.asarray(probs, dtype=float)
    setup = peep_setup(model, attack, pr)
    D = setup.depth
    base = q + 1
    xi = xi_total(model, l_c)
    k = np.arange(1, N + 1)
    w_of = k % (l_c + 1)
    future = np.minimum(D, N - k)
    W = l_c + 1
    sizes = np.bincount(w_of, minlength=W)

    violations = skipped = 0
    per_w_violations = np.zeros(W, dtype=int)
    containment_failures = 0
    d_extra = 0.0
    rates = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        j = rng.choice(q, size=N, p=pr)
        bob_key = rng.random(N) < q_bob_key
        u = rng.random(N)
        det = rng.random(N) < eta if eta < 1 else np.ones(N, dtype=bool)
        code = np.zeros(N, dtype=np.int64)
        padded = np.concatenate([np.full(D, q), j])
        for lag in range(1, D + 1):
            code += padded[D - lag : D - lag + N] * base ** (lag - 1)
        is_key = det & bob_key & ((j == setup.key_idx[0]) | (j == setup.key_idx[1]))
        is_x0 = j == setup.test_idx[0]
        is_test = det & ~bob_key & (is_x0 | (j == setup.test_idx[1]))
        ph = is_key & (u < setup.p_phase[future, code])
        xe = is_test & (u < setup.p_test[code, np.where(is_x0, 0, 1)])
        nK = np.bincount(w_of[is_key], minlength=W)
        ePH = np.bincount(w_of[ph], minlength=W)
        nX = np.bincount(w_of[is_test], minlength=W)
        kX = np.bincount(w_of[xe], minlength=W)
        per_w = []
        part_viol = np.zeros(W, dtype=bool)
        d_extra = 0.0
        for w in range(W):
            if nK[w] == 0:
                per_w.append((0, 0.0))
                continue
            e_w, d_w = estimate(estimator, Tally(int(nK[w]), int(nX[w]), int(kX[w])), int(sizes[w]), eps, xi)
            d_extra += d_w
            per_w.append((int(nK[w]), e_w))
            part_viol[w] = ePH[w] / nK[w] > e_w
        try:
            combined, _ = combine_bounds(per_w, eps, l_c)
        except EmptyKeyError:
            skipped += 1
            continue
        e_ph = ePH.sum() / nK.sum()
        rates.append(e_ph)
        per_w_violations += part_viol
        if e_ph > combined:
            violations += 1
            if not part_viol.any():
                containment_failures += 1
    d_extra = min(1.0, d_extra)
    bound = min(1.0, W * eps + d_extra + binomial_slack(eps, trials))
    return TrialReport(
        "peep",
        trials,
        violations,
        bound,
        seed,
        {
            "attack": attack.kind,
            "angle": attack.angle,
            "estimator": estimator.kind,
            "xi1": model.xi1,
            "N": N,
            "l_c": l_c,
            "eps": eps,
        },
        {
            "d_extra": d_extra,
            "skipped_no_key": skipped,
            "mean_phase_error_rate": float(np.mean(rates)) if rates else None,
            "partition_violations": per_w_violations.tolist(),
            "containment_failures": containment_failures,
        },
    )


SUITES = ("fidelity", "truncation", "union", "peep")


def _section_model(base: LtiModel, cfg: Mapping[str, Any]) -> LtiModel:
    m = cfg.get("model")
    if not m:
        return base
    return LtiModel(
        m.get("xi1", base.xi1), m.get("C", base.C), m.get("delta_spf", base.delta_spf), m.get("delta_table")
    )


def run_suite(config, suite: str) -> list[TrialReport]:
    """Run one named group of checks (or ``all``) with the parameters found in
    the ``verify`` section of a run configuration.
    """
    if suite == "all":
        return [r for s in SUITES for r in run_suite(config, s)]
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    cfg = dict(config.verify.get(suite, {}))
    seed = config.seed
    model = _section_model(config.model, cfg)
    if suite == "fidelity":
        return [check_fidelity_chain(model, cfg.get("draws", 1000), seed, cfg.get("l_c", 4))]
    if suite == "truncation":
        return [
            check_truncation(
                model, cfg.get("N_max", 6), cfg.get("l_c_max"), seed, tables=cfg.get("tables", 20)
            )
        ]
    if suite == "union":
        reports = []
        for l_c in cfg.get("l_c", [1, 2, 5]):
            for p in cfg.get("p_w", [0.01, 0.05]):
                sizes = [cfg.get("size", 1000)] * (l_c + 1)
                reports.append(mc_union(sizes, p, cfg.get("trials", 100_000), seed))
        return reports
    estimator = config.estimator
    if "estimator" in cfg:
        estimator = EstimatorSpec.from_config(cfg["estimator"], config.base_dir)
    attacks = cfg.get("attacks", [{"kind": "rotation", "angle": 0.2}, {"kind": "intercept_resend", "basis": "Z"}])
    return [
        mc_peep(
            AttackModel.from_config(a),
            estimator,
            model,
            cfg.get("N", 10_000),
            cfg.get("l_c", 1),
            cfg.get("trials", 1000),
            cfg.get("eps", 1e-3),
            seed,
            q_bob_key=cfg.get("q_bob_key", 0.5),
        )
        for a in attacks
    ]
