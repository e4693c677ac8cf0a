import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbfi import _backend, _simcore_py as K, simulator
from nbfi.core import PALETTE, ConstraintViolation, NoiseModel, allocation_from_radii
from nbfi.radio import interference_power

from conftest import single, uniform_mix

needs_cython = pytest.mark.skipif(_backend.name != "cython", reason="compiled kernel not built")

BN_ARGS = dict(
    t_data=np.array([c.t_data for c in PALETTE]),
    t_ack=np.array([c.t_ack for c in PALETTE]),
    w_min=np.array([c.w_min for c in PALETTE]),
    t_rnd=np.array([c.t_rnd for c in PALETTE]),
    delta=np.array([c.delta for c in PALETTE]),
    noise=np.array([NoiseModel().thermal_w(c.delta) for c in PALETTE]),
)


def kernel(arr_t, arr_s, freq, ubk, bn, pw, rl=4, duration=1e4, nu=10 ** 0.5, trace=None, mod=K):
    return mod.run_kernel(
        np.asarray(arr_t, float), np.asarray(arr_s, np.int64), np.asarray(freq, float), np.asarray(ubk, float),
        np.asarray(bn, np.int64), np.asarray(pw, float), **BN_ARGS, nu=nu, rl=rl, duration=duration, trace=trace,
    )


# --------------------------------------------------------------------------
# hand-built scenarios on the raw kernel


def test_lone_packet_delivered():
    out = kernel([1.0], [0], [[25600.0] * 4], [[0.5] * 4], [3], [1e-9])
    c = out["counts"][3]
    assert c[K.C_GENERATED] == c[K.C_DELIVERED] == 1
    assert out["delay_sum"][3] == pytest.approx(PALETTE[3].t_data + PALETTE[3].t_ack)
    assert out["hist"].tolist() == [0, 1, 0, 0, 0]


def test_forced_collision_then_retry():
    # equal power, same frequency, overlapping: both fail, then retry apart
    out = kernel([1.0, 1.001], [0, 1], [[25600.0] * 4] * 2, [[0.1] * 4, [0.9] * 4], [3, 3], [1e-9, 1e-9])
    c = out["counts"][3]
    assert c[K.C_INI_ATT] == 2 and c[K.C_INI_FAIL] == 2
    assert c[K.C_RE_ATT] == 2 and c[K.C_RE_FAIL] == 0
    assert c[K.C_DELIVERED] == 2
    assert out["hist"].tolist() == [0, 0, 2, 0, 0]


def test_far_apart_frequencies_do_not_collide():
    out = kernel([1.0, 1.001], [0, 1], [[5000.0] * 4, [45000.0] * 4], [[0.5] * 4] * 2, [3, 3], [1e-9, 1e-9])
    assert out["counts"][3, K.C_INI_FAIL] == 0


def test_strong_victim_survives():
    out = kernel([1.0, 1.001], [0, 1], [[25600.0] * 4] * 2, [[0.5] * 4] * 2, [3, 3], [1e-9, 1e-11])
    c = out["counts"][3]
    assert c[K.C_INI_FAIL] == 1  # only the weak one
    assert c[K.C_DELIVERED] == 2


def test_retry_limit_loss():
    # a jammer sensor retransmits on top of the victim every time
    rl = 2
    out = kernel([1.0, 1.0], [0, 1], [[25600.0] * rl] * 2, [[0.3] * rl] * 2, [3, 3], [1e-9, 1e-9], rl=rl)
    c = out["counts"][3]
    assert c[K.C_LOST_RL] == 2
    assert c[K.C_DELIVERED] == 0


def test_preemption_by_new_packet():
    # second packet arrives while the first is waiting for its retry
    f = [[25600.0] * 4] * 3
    out = kernel([1.0, 1.0, 1.05], [0, 1, 0], f, [[0.5] * 4, [0.9] * 4, [0.5] * 4], [3, 3], [1e-9, 1e-9])
    c = out["counts"][3]
    assert c[K.C_LOST_PRE] == 1
    assert c[K.C_GENERATED] == c[K.C_DELIVERED] + c[K.C_LOST_RL] + c[K.C_LOST_PRE] + c[K.C_IN_FLIGHT]


def test_in_flight_at_horizon():
    out = kernel([1.0], [0], [[25600.0] * 4], [[0.5] * 4], [0], [1e-9], duration=1.5)
    assert out["counts"][0, K.C_IN_FLIGHT] == 1


# --------------------------------------------------------------------------
# SINR


def _random_txs(rng, n):
    # edges on a 1 ms grid so midpoint sampling at 1 ms resolution is exact
    txs = []
    for i in range(n):
        bn = int(rng.integers(1, 5))
        c = PALETTE[bn - 1]
        s = int(rng.integers(0, 400))
        dur = max(1, round(c.t_data * 1000)) if bn > 2 else int(rng.integers(1, 300))
        # build both edges from integers so they land exactly on the grid
        txs.append(simulator.Transmission(i, bn, s / 1000, (s + dur) / 1000, float(rng.uniform(0, 2000)),
                                          float(10 ** rng.uniform(-13, -10))))
    return txs


def _dense_min_sinr(victim, others):
    c = PALETTE[victim.bn - 1]
    z = NoiseModel().thermal_w(c.delta)
    t = np.arange(round(victim.start * 1000), round(victim.end * 1000)) / 1000 + 5e-4
    level = np.zeros_like(t)
    for x in others:
        on = (t >= x.start) & (t < x.end)
        level += on * interference_power(x.rx_power, c.delta, PALETTE[x.bn - 1].delta, victim.f_center - x.f_center)
    return float(np.min(victim.rx_power / (z + level)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_sinr_segments_vs_dense_sampling(seed, n):
    rng = np.random.default_rng(seed)
    txs = _random_txs(rng, n + 1)
    victim, others = txs[0], txs[1:]
    got = simulator.sinr_segments(victim, others)
    assert got == pytest.approx(_dense_min_sinr(victim, others), rel=1e-9)


@pytest.mark.parametrize("mod", [K, pytest.param("cython", marks=needs_cython)])
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_kernel_min_sinr_matches_segments(mod, seed, n):
    mod = _backend.get("cython") if mod == "cython" else mod
    rng = np.random.default_rng(seed)
    txs = sorted(_random_txs(rng, n + 1), key=lambda x: x.start)
    v = int(rng.integers(0, len(txs)))
    arr = lambda f: np.array([f(x) for x in txs], dtype=float)
    t_max = max(x.end - x.start for x in txs)
    victim = txs[v]
    noise = NoiseModel().thermal_w(PALETTE[victim.bn - 1].delta)
    got = mod.min_sinr(v, arr(lambda x: x.start), arr(lambda x: x.end), arr(lambda x: x.f_center),
                       arr(lambda x: x.rx_power), arr(lambda x: PALETTE[x.bn - 1].delta), len(txs), noise, t_max)
    want = simulator.sinr_segments(victim, [x for i, x in enumerate(txs) if i != v])
    assert got == pytest.approx(want, rel=1e-12)


# --------------------------------------------------------------------------
# end-to-end runs


@needs_cython
@pytest.mark.parametrize("sc,mode", [(uniform_mix(lam=3.0), "continuous"), (single(1, 7.0, 0.1), "discrete"),
                                     (single(4, lam=5.0), "continuous")])
def test_backends_identical(sc, mode):
    a = simulator.simulate_counts(sc, 2000.0, seed=7, freq_mode=mode, backend="python")
    b = simulator.simulate_counts(sc, 2000.0, seed=7, freq_mode=mode, backend="cython")
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.hist, b.hist)
    assert np.array_equal(a.delay_sum, b.delay_sum)
    assert np.array_equal(a.airtime, b.airtime)


def test_conservation_and_determinism():
    sc = uniform_mix(lam=4.0)
    a = simulator.simulate_counts(sc, 3000.0, seed=3)
    b = simulator.simulate_counts(sc, 3000.0, seed=3)
    c = simulator.simulate_counts(sc, 3000.0, seed=4)
    assert a.conserved()
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.delay_sum, b.delay_sum)
    assert not np.array_equal(a.counts, c.counts)
    assert a.hist.sum() == a.total(K.C_DELIVERED)


def test_low_load_delay_and_plr():
    r = simulator.run(single(4, lam=1e-3), 1e5, seed=1)
    assert r.generated > 50
    assert r.plr == 0.0
    c = PALETTE[3]
    assert r.delay_s == pytest.approx(c.t_data + c.t_ack, rel=1e-9)


def test_report_fields_and_ci():
    r = simulator.run(single(3, lam=2.0), 2000.0, seed=11, runs=3)
    row = r.row()
    for key in ("per_ini", "plr", "delay_s", "duty_cycle", "per_ini_ci95", "generated", "in_flight"):
        assert key in row
    assert r.generated == r.delivered + r.lost_retry_limit + r.lost_preempted + r.in_flight
    assert r.ci95["per_ini"] >= 0
    assert math.isnan(simulator.run(single(3, lam=2.0), 500.0, seed=1).ci95["per_ini"])


def test_duty_cycle_accounting():
    sc = single(2, lam=0.5)
    rc = simulator.simulate_counts(sc, 5000.0, seed=2)
    attempts = rc.counts[1, K.C_INI_ATT] + rc.counts[1, K.C_RE_ATT]
    assert rc.airtime[1] == pytest.approx(attempts * PALETTE[1].t_data)


def test_trace_file(tmp_path):
    path = tmp_path / "trace.jsonl"
    rc = simulator.simulate_counts(single(3, lam=1.0), 200.0, seed=5, trace=str(path))
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert {r["event"] for r in rows} >= {"arrival", "tx_start", "tx_end"}
    assert sum(r["event"] == "arrival" for r in rows) == rc.total(K.C_GENERATED)
    assert all(a["t"] <= b["t"] for a, b in zip(rows, rows[1:]))


def test_infeasible_rejected():
    with pytest.raises(ConstraintViolation):
        simulator.simulate_counts(single(4, r1=5.0), 10.0)
    with pytest.raises(ValueError):
        simulator.simulate_counts(single(4), 0.0)
    with pytest.raises(ValueError):
        simulator.simulate_counts(single(4), 10.0, freq_mode="fm")


# --------------------------------------------------------------------------
# layout and inputs


def test_place_sensors_moments():
    alloc = allocation_from_radii([1.0, 0.75**0.5, 0.5**0.5, 0.5], 1.0)
    lay = simulator.place_sensors(200_000, 1.0, alloc, seed=9)
    n = len(lay)
    assert np.mean(lay.r_km**2) == pytest.approx(0.5, abs=3 * math.sqrt(1 / 12 / n))
    shares = lay.counts() / n
    assert np.allclose(shares, alloc.p, atol=4 * math.sqrt(0.25 / n))
    radii = np.array(alloc.r_max + (0.0,))
    for k in range(4):
        sel = lay.bn == k + 1
        assert np.all(lay.r_km[sel] <= radii[k]) and np.all(lay.r_km[sel] > radii[k + 1])


@given(st.lists(st.integers(0, 5), max_size=40))
def test_occurrence_index(ids):
    ids = np.array(ids, dtype=np.int64)
    expect = [list(ids[:i]).count(x) for i, x in enumerate(ids)]
    assert simulator._occurrence_index(ids).tolist() == expect


def test_parity_alternates_and_frequency_band():
    sc = single(3, lam=5.0)
    lay = simulator.place_sensors(sc.n_sensors, sc.radius_r1, sc.allocation, 0)
    d = simulator._draw_inputs(sc, lay, 500.0, np.random.default_rng(0), "continuous", 0.0)
    for s in np.unique(d.arr_s)[:50]:
        par = d.parity[d.arr_s == s]
        assert np.all(np.diff(par) != 0)
    half = sc.b_ul / 2
    assert np.all((d.freq > half) == (d.parity[:, None] == 1))
    assert np.all((d.freq >= 0) & (d.freq <= sc.b_ul))
