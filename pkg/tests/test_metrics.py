"""Relative L2 error, node/generator averages and sweep tables."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from froemt.case import load_case
from froemt.metrics import (
    MetricsError,
    SignalTrace,
    compare_runs,
    comparison_table,
    format_table,
    fundamental_magnitude,
    relative_error,
    resample_common,
    table_csv,
    worker_count,
)
from froemt.simulation import RunRecord, SimulationConfig, run


def _trace(t, v):
    return SignalTrace(np.asarray(t, float), np.asarray(v, float))


def _record(times, cols, half=None):
    names = list(cols)
    vals = np.column_stack([cols[n] for n in names])
    half = np.zeros(len(times), bool) if half is None else np.asarray(half)
    return RunRecord(np.asarray(times, float), names, vals, half, {})


def test_identical_traces():
    t = np.linspace(0, 1, 11)
    a = _trace(t, np.sin(t))
    times, va, vb = resample_common(a, a)
    assert len(times) == 11 and relative_error(a, a) == 0.0


def test_scaling_identity():
    t = np.linspace(0, 1, 101)
    ref = _trace(t, np.cos(7 * t) + 2)
    assert relative_error(_trace(t, 1.01 * ref.values), ref) == pytest.approx(1.0, abs=1e-12)


def test_arithmetic_example():
    assert relative_error(_trace([0, 1], [3, 4.5]), _trace([0, 1], [3, 4])) == pytest.approx(10.0)


def test_reference_in_denominator():
    a, b = _trace([0, 1], [3, 4.5]), _trace([0, 1], [3, 4])
    assert relative_error(a, b) != relative_error(b, a)


def test_common_instants_of_nested_grids():
    ref = _trace(np.arange(400001) * 5e-6, np.zeros(400001))
    run_ = _trace(np.arange(2001) * 1e-3, np.zeros(2001))
    times, _, _ = resample_common(run_, ref)
    assert len(times) == 2001


def test_disjoint_grids():
    with pytest.raises(MetricsError):
        resample_common(_trace([0.1, 0.2], [1, 2]), _trace([0.15, 0.25], [1, 2]))


def test_zero_reference():
    with pytest.raises(MetricsError):
        relative_error(_trace([0, 1], [1, 1]), _trace([0, 1], [0, 0]))


def test_trace_validation():
    with pytest.raises(MetricsError):
        _trace([0, 0], [1, 2])
    with pytest.raises(MetricsError):
        _trace([0, 1], [1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 10), min_size=3, max_size=30), st.floats(0.01, 100))
def test_scale_equivariance(vals, c):
    ref = np.array(vals)
    t = np.arange(len(ref), dtype=float)
    com = 0.97 * ref + 0.01
    e1 = relative_error(_trace(t, com), _trace(t, ref))
    e2 = relative_error(_trace(t, c * com), _trace(t, c * ref))
    assert e2 == pytest.approx(e1, rel=1e-12, abs=1e-12)


def _two_run_records(seed=0, n_nodes=4):
    rng = np.random.default_rng(seed)
    t = np.arange(50) * 1e-3
    ref, com = {}, {}
    for k in range(n_nodes):
        r = rng.normal(size=50) + 3
        ref[f"v:{k}:A"] = r
        com[f"v:{k}:A"] = r * (1 + 0.01 * rng.normal(size=50))
    for g in range(2):
        r = np.cumsum(rng.normal(size=50))
        ref[f"gen:{g}:delta"] = r
        com[f"gen:{g}:delta"] = r + 0.01
    return _record(t, com), _record(t, ref)


def test_aggregates_are_means():
    com, ref = _two_run_records()
    rep = compare_runs(com, ref)
    v = [e for n, e in rep.per_signal.items() if n.startswith("v:")]
    d = [e for n, e in rep.per_signal.items() if n.endswith(":delta")]
    assert rep.n_node == 4 and rep.n_gen == 2
    assert rep.err_v == pytest.approx(np.mean(v), rel=1e-15)
    assert rep.err_delta == pytest.approx(np.mean(d), rel=1e-15)
    same = compare_runs(ref, ref)
    assert same.err_v == 0.0 and same.err_delta == 0.0


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(6))), st.integers(0, 1000))
def test_permutation_invariance(perm, seed):
    com, ref = _two_run_records(seed)
    names = [com.names[i] for i in perm]
    pc = _record(com.times, {n: com.column(n) for n in names})
    pr = _record(ref.times, {n: ref.column(n) for n in reversed(names)})
    a, b = compare_runs(com, ref), compare_runs(pc, pr)
    assert abs(a.err_v - b.err_v) <= 1e-12 and abs(a.err_delta - b.err_delta) <= 1e-12


def test_equal_node_errors_average_to_that_error():
    t = np.arange(10) * 1e-3
    ref = {f"v:{k}:A": np.full(10, k + 1.0) for k in range(3)}
    com = {n: 1.02 * v for n, v in ref.items()}
    rep = compare_runs(_record(t, com), _record(t, ref), rotor_angles=False)
    assert rep.err_v == pytest.approx(2.0, abs=1e-12)


def test_angles_are_unwrapped_before_differencing():
    t = np.arange(200) * 1e-3
    true = 0.05 * np.arange(200)
    wrapped = np.angle(np.exp(1j * true))
    rep = compare_runs(_record(t, {"gen:1:delta": wrapped}), _record(t, {"gen:1:delta": true}),
                       voltages=False)
    assert rep.err_delta < 1e-12


def test_half_step_rows_are_ignored():
    t = np.array([0.0, 0.001, 0.0015, 0.002])
    ref = _record(t[[0, 1, 3]], {"v:1:A": np.array([1.0, 2.0, 3.0])})
    com = _record(t, {"v:1:A": np.array([1.0, 2.0, 99.0, 3.0])}, [False, False, True, False])
    assert compare_runs(com, ref, rotor_angles=False).err_v == 0.0


def test_missing_signal():
    t = np.arange(3) * 1e-3
    with pytest.raises(MetricsError):
        compare_runs(_record(t, {"v:1:A": np.ones(3)}), _record(t, {"v:2:A": np.ones(3)}),
                     rotor_angles=False)


def test_fundamental_magnitude_of_a_sinusoid():
    for h in (1e-3, 2e-3, 125e-6):
        t = np.arange(int(round(0.1 / h)) + 1) * h
        v = 1.3 * np.cos(2 * math.pi * 60 * t + 0.4) + 0.1
        mag = fundamental_magnitude(t, v)
        assert len(mag) == 6
        assert np.allclose(mag, 1.3, rtol=0, atol=1e-12)


def test_fundamental_magnitude_harmonic_leakage_is_bounded():
    # 16.7 samples per period: a harmonic is not orthogonal to the fit basis
    t = np.arange(101) * 1e-3
    v = 1.3 * np.cos(2 * math.pi * 60 * t) + 0.2 * np.cos(2 * math.pi * 180 * t)
    assert np.allclose(fundamental_magnitude(t, v), 1.3, atol=0.03)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("FROEMT_THREADS", "2")
    assert worker_count(12) == 2 and worker_count(1) == 1
    monkeypatch.setenv("FROEMT_THREADS", "0")
    assert worker_count(12) == 1
    monkeypatch.setenv("FROEMT_THREADS", "many")
    with pytest.raises(MetricsError):
        worker_count(3)


def test_table_rows():
    case = load_case("wscc9").without_events()
    ref = run(case, SimulationConfig(125, 0.04, "trap"))
    steps = [125, 250, 500, 1000, 2000, 4000]
    rows = comparison_table(case, steps, ("fro", "trap"), 0.04, reference=ref, workers=1)
    assert len(rows) == 12
    assert [(r.step_us, r.scheme) for r in rows[:2]] == [(125, "fro"), (125, "trap")]
    assert rows[1].err_v == 0.0
    one = comparison_table(case, [1000], ("fro",), 0.04, reference=ref, workers=1)
    assert len(one) == 1
    assert len(format_table(rows).splitlines()) == 13
    assert table_csv(rows).splitlines()[0].startswith("step_us,scheme,err_v_pct")


def test_parallel_sweep_matches_serial(monkeypatch):
    case = load_case("wscc9").without_events()
    ref = run(case, SimulationConfig(250, 0.02, "trap"))
    serial = comparison_table(case, [500, 1000], ("fro", "trap"), 0.02, reference=ref, workers=1)
    monkeypatch.setenv("FROEMT_THREADS", "2")
    pooled = comparison_table(case, [500, 1000], ("fro", "trap"), 0.02, reference=ref)
    assert [(r.err_v, r.err_delta) for r in serial] == [(r.err_v, r.err_delta) for r in pooled]
