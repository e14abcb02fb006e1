import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrqkd.corrmodel import (
    INFINITE,
    LtiModel,
    encoded_phase,
    fidelity_floor_exact,
    plan_truncation,
    random_delta_table,
    required_lc,
    trace_distance_bound,
    xi_at,
    xi_total,
)

# extended-precision values (mpmath, 50 digits), frozen
XI_AT_2 = 3.0511255580364202e-09
XI_TOTAL_INF = 1.0000030511348674e-03
TAIL_SUM = {
    4: 9.3256567350988448e-09,
    5: 1.6289564195788124e-11,
    6: 2.8453749609934563e-14,
    9: 1.5164553415258781e-22,
}


def default_model(**kw):
    return LtiModel(kw.pop("xi1", 1e-6), kw.pop("C", 12.7), **kw)


def test_xi_at_values():
    m = LtiModel(1e-3, 12.7)
    assert xi_at(m, 1) == 1e-3
    assert xi_at(m, 2) == pytest.approx(XI_AT_2, rel=1e-13)
    assert xi_at(LtiModel(0.0, 5.0), 7) == 0.0
    with pytest.raises(ValueError):
        xi_at(m, 0)


def test_xi_total_values():
    m = LtiModel(1e-3, 12.7)
    assert xi_total(m, 1) == pytest.approx(1e-3, rel=1e-15)
    assert xi_total(m, INFINITE) == pytest.approx(XI_TOTAL_INF, rel=1e-12)
    assert xi_total(m, 0) == 0.0
    with pytest.raises(ValueError):
        xi_total(m, -1)


@given(st.floats(1e-9, 0.1), st.floats(0.5, 20), st.integers(1, 30))
def test_xi_total_matches_partial_sum(xi1, C, l_c):
    m = LtiModel(xi1, C)
    direct = math.fsum(xi_at(m, l) for l in range(1, l_c + 1))
    assert xi_total(m, l_c) == pytest.approx(direct, rel=1e-12)
    assert xi_total(m, l_c) <= xi_total(m, INFINITE) * (1 + 1e-15)


@pytest.mark.parametrize("l_c", sorted(TAIL_SUM))
def test_trace_distance_bound_matches_tail_sum(l_c):
    assert trace_distance_bound(default_model(), 10**12, l_c) == pytest.approx(TAIL_SUM[l_c], rel=1e-12)


def test_trace_distance_bound_edges():
    assert trace_distance_bound(LtiModel(0.0, 1.0), 10**12, 0) == 0.0
    assert trace_distance_bound(LtiModel(1e-3, 12.7), 1, 200) == 0.0
    assert trace_distance_bound(LtiModel(0.1, 0.5), 10**6, 0) == 1.0
    assert trace_distance_bound(default_model(), 10**12, INFINITE) == 0.0


def test_required_lc_example():
    assert required_lc(default_model(), 10**12, 1e-11) == 6
    assert required_lc(LtiModel(0.0, 12.7), 10**12, 1e-11) == 0
    plan = plan_truncation(default_model(), 10**12, 1e-11)
    assert plan.l_c == 6 and plan.d <= 1e-11


@settings(max_examples=200)
@given(
    st.floats(1e-12, 0.5),
    st.floats(0.3, 30),
    st.integers(1, 10**13),
    st.floats(1e-25, 1.0),
)
def test_required_lc_is_minimal(xi1, C, N, d):
    m = LtiModel(xi1, C)
    l_c = required_lc(m, N, d)
    assert trace_distance_bound(m, N, l_c) <= d
    if l_c > 0:
        assert trace_distance_bound(m, N, l_c - 1) > d


def test_encoded_phase_examples():
    assert encoded_phase(LtiModel(0.0, 1.0), ["0_Z"]) == 0.0
    m = LtiModel(0.0, 1.0, delta_spf=0.068)
    assert encoded_phase(m, ["1_Z"]) == pytest.approx(math.pi / 2 + 0.034, rel=1e-15)
    table = {"0_Z": (0.01,), "0_X": (0.01,), "1_Z": (0.01,), "1_X": (0.0,)}
    m = LtiModel(1e-3, 1.0, delta_table=table)
    # every setting other than 1_X sits 0.01 away from it at lag 1
    assert encoded_phase(m, ["0_Z", "0_X"]) == pytest.approx(math.pi / 4 + 0.01, rel=1e-15)
    assert encoded_phase(m, ["1_X", "0_X"]) == pytest.approx(math.pi / 4, rel=1e-15)


def test_encoded_phase_ignores_lags_beyond_table():
    table = {j: (0.01,) for j in ("0_Z", "0_X", "1_Z", "1_X")}
    m = LtiModel(1e-3, 1.0, delta_table=table)
    assert encoded_phase(m, ["1_Z", "0_Z", "0_Z"]) == encoded_phase(m, ["0_Z", "0_Z"])
    with pytest.raises(KeyError):
        encoded_phase(m, ["2_Z", "0_Z", "0_Z"])


def test_model_validation():
    with pytest.raises(ValueError):
        LtiModel(-1e-3, 1.0)
    with pytest.raises(ValueError):
        LtiModel(1e-3, 0.0)
    with pytest.raises(ValueError):
        LtiModel(1e-3, 1.0, delta_table={"0_Z": (0.0,)})
    with pytest.raises(KeyError):
        LtiModel(0.0, 1.0).baseline_phase("2_Z")


def test_fidelity_floor_examples():
    table = {"0_Z": (0.0, 0.0), "0_X": (0.0, 0.0), "1_Z": (0.0, 0.0), "1_X": (0.0, 0.0)}
    exact, floor = fidelity_floor_exact(LtiModel(1e-3, 1.0, delta_table=table), "0_Z", "1_Z", 2)
    assert exact == 1.0 and floor == pytest.approx(1 - 1e-3 * (1 + math.exp(-1)))

    m = LtiModel(1e-2, 1.0)
    s = [math.sqrt(xi_at(m, l)) for l in (1, 2)]
    m = m.with_table({"0_Z": tuple(s), "0_X": (0.0, 0.0), "1_Z": (0.0, 0.0), "1_X": (0.0, 0.0)})
    exact, floor = fidelity_floor_exact(m, "0_Z", "1_Z", 2)
    assert exact == pytest.approx(0.98639562401431827, rel=1e-12)
    assert floor == pytest.approx(0.98632120558828558, rel=1e-12)
    assert exact >= floor

    m = LtiModel(1e-3, 12.7).with_table(
        {"0_Z": (math.sqrt(1e-3),), "0_X": (0.0,), "1_Z": (0.0,), "1_X": (0.0,)}
    )
    exact, floor = fidelity_floor_exact(m, "0_Z", "1_X", 1)
    assert exact == pytest.approx(0.99900033328889206, rel=1e-12)
    assert floor == pytest.approx(0.999, rel=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.booleans())
def test_random_tables_are_admissible(seed, depth, saturate):
    m = LtiModel(0.05, 0.7)
    t = random_delta_table(m, depth, np.random.default_rng(seed), saturate=saturate)
    assert m.with_table(t).is_admissible()


def test_scaled_tables_break_admissibility():
    m = LtiModel(0.05, 0.7)
    t = random_delta_table(m, 2, np.random.default_rng(0), saturate=True, scale=2.0)
    assert not m.with_table(t).is_admissible()
    assert [v[0] for v in m.with_table(t).table_violations()] == [1, 2]
