"""Discrete-event simulator of the NB-Fi uplink.

Asynchronous time-frequency ALOHA with SINR reception, always-delivered
downlink ACKs, random retry backoff and a single-frame buffer per sensor.

All randomness is drawn here with numpy before the event loop runs; the
loop itself (``_simcore``) is deterministic, so the compiled and Python
kernels return identical counters for the same seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import stats

from . import _backend
from ._simcore_py import (
    C_DELIVERED,
    C_GENERATED,
    C_IN_FLIGHT,
    C_INI_ATT,
    C_INI_FAIL,
    C_LOST_PRE,
    C_LOST_RL,
    C_RE_ATT,
    C_RE_FAIL,
)
from .analytic import check_feasible
from .core import N_BN, PALETTE, Allocation, NoiseModel, Scenario
from .freqplan import guard_halfwidth, is_wide
from .radio import interference_power, rx_power_w

FreqMode = Literal["continuous", "discrete"]

# 0.5 ppm of 868.8 MHz
DEFAULT_JITTER_HZ = 434.0


class ConservationError(AssertionError):
    pass


@dataclass(frozen=True)
class SensorState:
    id: int
    r_km: float
    theta: float
    bn: int
    parity: int


@dataclass(frozen=True)
class SensorLayout:
    r_km: np.ndarray
    theta: np.ndarray
    bn: np.ndarray  # 1-based

    def __len__(self):
        return len(self.r_km)

    def states(self, parity: np.ndarray | None = None) -> list[SensorState]:
        par = np.zeros(len(self), dtype=int) if parity is None else parity
        return [
            SensorState(i, float(self.r_km[i]), float(self.theta[i]), int(self.bn[i]), int(par[i]))
            for i in range(len(self))
        ]

    def counts(self) -> np.ndarray:
        return np.bincount(self.bn - 1, minlength=N_BN)


@dataclass(frozen=True)
class Transmission:
    sensor: int
    bn: int
    start: float
    end: float
    f_center: float
    rx_power: float
    kind: Literal["data", "ack"] = "data"


def place_sensors(n: int, r1: float, allocation: Allocation, seed=0) -> SensorLayout:
    """Uniform-in-area positions; BN ``i`` serves ``R_{i+1} < r <= R_i``."""
    rng = np.random.default_rng(seed)
    r = r1 * np.sqrt(rng.random(n))
    theta = rng.uniform(0.0, 2 * math.pi, n)
    radii = np.asarray(allocation.r_max)
    # innermost ring whose outer radius still covers r
    covered = r[:, None] <= radii[None, :]
    bn = N_BN - np.argmax(covered[:, ::-1], axis=1)
    return SensorLayout(r_km=r, theta=theta, bn=bn.astype(np.int64))


def sinr_segments(victim: Transmission, interferers: Sequence[Transmission], noise_w: float | None = None) -> float:
    """Minimum SINR of ``victim`` over the pieces cut by interferer edges."""
    c = PALETTE[victim.bn - 1]
    if noise_w is None:
        noise_w = NoiseModel().thermal_w(c.delta)
    cuts = {victim.start, victim.end}
    for x in interferers:
        for t in (x.start, x.end):
            if victim.start < t < victim.end:
                cuts.add(t)
    edges = sorted(cuts)
    worst = math.inf
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        level = 0.0
        for x in interferers:
            if x.start <= mid < x.end:
                d_j = PALETTE[x.bn - 1].delta
                level += interference_power(x.rx_power, c.delta, d_j, victim.f_center - x.f_center)
        worst = min(worst, victim.rx_power / (noise_w + level))
    return worst


# --------------------------------------------------------------------------
# random inputs


@dataclass
class _Draws:
    arr_t: np.ndarray
    arr_s: np.ndarray
    parity: np.ndarray
    freq: np.ndarray
    ubk: np.ndarray


def _occurrence_index(ids: np.ndarray) -> np.ndarray:
    """k for the k-th (0-based) appearance of each id, in array order."""
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    first = np.r_[0, np.flatnonzero(np.diff(sorted_ids)) + 1]
    run_start = np.repeat(first, np.diff(np.r_[first, len(ids)]))
    occ = np.empty(len(ids), dtype=np.int64)
    occ[order] = np.arange(len(ids)) - run_start
    return occ


def _draw_inputs(scenario: Scenario, layout: SensorLayout, duration: float, rng: np.random.Generator,
                 freq_mode: FreqMode, jitter_hz: float) -> _Draws:
    n = len(layout)
    n_arr = rng.poisson(scenario.lambda_total * duration)
    arr_t = np.sort(rng.uniform(0.0, duration, n_arr))
    arr_s = rng.integers(0, n, n_arr)
    # each sensor alternates the parity bit frame by frame
    p0 = rng.integers(0, 2, n)
    parity = (p0[arr_s] + _occurrence_index(arr_s)) % 2

    b = scenario.b_ul
    omega = np.array([guard_halfwidth(c) for c in PALETTE])
    gain = np.where([is_wide(w, b) for w in omega], 0.0, b / 2 - omega)
    g = gain[layout.bn[arr_s] - 1][:, None]
    sign = np.where(parity == 1, 1.0, -1.0)[:, None]
    rl = scenario.rl
    if freq_mode == "continuous":
        offset = g * rng.random((n_arr, rl))
    elif freq_mode == "discrete":
        # (modem id + fresh MIC) mod 256 is uniform on 0..255 every attempt
        residue = rng.integers(0, 256, (n_arr, rl))
        offset = g * residue / 255.0
        if jitter_hz > 0:
            offset = offset + rng.uniform(-jitter_hz, jitter_hz, (n_arr, rl))
    else:
        raise ValueError(f"unknown freq_mode {freq_mode!r}")
    freq = np.ascontiguousarray(b / 2 + sign * offset)
    ubk = rng.random((n_arr, rl))
    return _Draws(arr_t, arr_s.astype(np.int64), parity, freq, ubk)


# --------------------------------------------------------------------------
# single run


@dataclass(frozen=True)
class RunCounts:
    """Raw counters of one run. ``counts`` is 4 x 9, one row per BN."""

    duration: float
    n_sensors: int
    n_by_bn: np.ndarray
    counts: np.ndarray
    delay_sum: np.ndarray
    airtime: np.ndarray
    hist: np.ndarray

    def total(self, col: int) -> int:
        return int(self.counts[:, col].sum())

    def conserved(self) -> bool:
        c = self.counts
        lhs = c[:, C_GENERATED]
        rhs = c[:, C_DELIVERED] + c[:, C_LOST_RL] + c[:, C_LOST_PRE] + c[:, C_IN_FLIGHT]
        return bool(np.array_equal(lhs, rhs))


def simulate_counts(
    scenario: Scenario,
    duration_s: float,
    seed: int | None = None,
    freq_mode: FreqMode = "continuous",
    jitter_hz: float = DEFAULT_JITTER_HZ,
    trace: str | None = None,
    backend: str | None = None,
) -> RunCounts:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    check_feasible(scenario)
    seed = scenario.seed if seed is None else seed
    ss_layout, ss_traffic = np.random.SeedSequence(seed).spawn(2)
    layout = place_sensors(scenario.n_sensors, scenario.radius_r1, scenario.allocation, ss_layout)
    rng = np.random.Generator(np.random.PCG64(ss_traffic))
    d = _draw_inputs(scenario, layout, duration_s, rng, freq_mode, jitter_hz)

    pw = np.asarray(rx_power_w(layout.r_km, scenario.e_t, scenario.prop), dtype=float)
    events = [] if trace else None
    out = _backend.get(backend).run_kernel(
        d.arr_t, d.arr_s, d.freq, d.ubk,
        np.ascontiguousarray(layout.bn - 1), pw,
        np.array([c.t_data for c in PALETTE]),
        np.array([c.t_ack for c in PALETTE]),
        np.array([c.w_min for c in PALETTE]),
        np.array([c.t_rnd for c in PALETTE]),
        np.array([c.delta for c in PALETTE]),
        np.array([scenario.noise.thermal_w(c.delta) for c in PALETTE]),
        scenario.nu, scenario.rl, float(duration_s), events,
    )
    if trace:
        keys = ("t", "event", "sensor", "packet", "attempt", "value")
        with open(trace, "w") as fh:
            for row in events:
                fh.write(json.dumps(dict(zip(keys, (float(row[0]), row[1], int(row[2]), int(row[3]),
                                                    int(row[4]), float(row[5]))))) + "\n")
    rc = RunCounts(
        duration=float(duration_s),
        n_sensors=scenario.n_sensors,
        n_by_bn=layout.counts(),
        counts=out["counts"],
        delay_sum=out["delay_sum"],
        airtime=out["airtime"],
        hist=out["hist"],
    )
    if not rc.conserved():
        raise ConservationError(f"packet accounting broken: {rc.counts.tolist()}")
    return rc


# --------------------------------------------------------------------------
# reports


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def _metrics(rc: RunCounts) -> dict:
    c = rc.counts
    lost = c[:, C_LOST_RL] + c[:, C_LOST_PRE]
    done = c[:, C_DELIVERED] + lost
    return {
        "per_ini": _ratio(c[:, C_INI_FAIL].sum(), c[:, C_INI_ATT].sum()),
        "per_re": _ratio(c[:, C_RE_FAIL].sum(), c[:, C_RE_ATT].sum()),
        "plr": _ratio(lost.sum(), done.sum()),
        "delay_s": _ratio(rc.delay_sum.sum(), c[:, C_DELIVERED].sum()),
        "duty_cycle": rc.airtime.sum() / (rc.n_sensors * rc.duration),
    }


@dataclass(frozen=True)
class SimReport:
    """Simulation metrics.

    Point estimates pool the counters of all runs; ``ci95`` holds Student-t
    half-widths of the per-run values (NaN for a single run).
    """

    lambda_fps: float
    runs: int
    duration_s: float
    per_ini: float
    per_re: float
    plr: float
    delay_s: float
    duty_cycle: float
    plr_by_bn: np.ndarray = field(repr=False)
    delay_by_bn: np.ndarray = field(repr=False)
    duty_by_bn: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    attempts_hist: np.ndarray = field(repr=False)
    ci95: dict = field(repr=False)

    @property
    def generated(self) -> int:
        return int(self.counts[:, C_GENERATED].sum())

    @property
    def delivered(self) -> int:
        return int(self.counts[:, C_DELIVERED].sum())

    @property
    def lost_retry_limit(self) -> int:
        return int(self.counts[:, C_LOST_RL].sum())

    @property
    def lost_preempted(self) -> int:
        return int(self.counts[:, C_LOST_PRE].sum())

    @property
    def in_flight(self) -> int:
        return int(self.counts[:, C_IN_FLIGHT].sum())

    def row(self) -> dict:
        out = {
            "lambda_fps": self.lambda_fps,
            "runs": self.runs,
            "per_ini": self.per_ini,
            "per_re": self.per_re,
            "plr": self.plr,
            "delay_s": self.delay_s,
            "duty_cycle": self.duty_cycle,
        }
        for key in ("per_ini", "per_re", "plr", "delay_s", "duty_cycle"):
            out[f"{key}_ci95"] = self.ci95[key]
        out.update(
            generated=self.generated,
            delivered=self.delivered,
            lost_retry_limit=self.lost_retry_limit,
            lost_preempted=self.lost_preempted,
            in_flight=self.in_flight,
        )
        return out


def _half_width(values: list[float]) -> float:
    v = np.asarray([x for x in values if not math.isnan(x)])
    if len(v) < 2:
        return math.nan
    return float(stats.t.ppf(0.975, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v)))


def aggregate(lambda_fps: float, runs: Sequence[RunCounts]) -> SimReport:
    counts = sum(r.counts for r in runs)
    delay_sum = sum(r.delay_sum for r in runs)
    airtime = sum(r.airtime for r in runs)
    hist = sum(r.hist for r in runs)
    sensor_time = sum(r.n_by_bn * r.duration for r in runs)
    pooled = RunCounts(
        duration=sum(r.duration for r in runs),
        n_sensors=runs[0].n_sensors,
        n_by_bn=runs[0].n_by_bn,
        counts=counts,
        delay_sum=delay_sum,
        airtime=airtime,
        hist=hist,
    )
    m = _metrics(pooled)
    per_run = [_metrics(r) for r in runs]
    ci = {k: _half_width([p[k] for p in per_run]) for k in m}

    lost = counts[:, C_LOST_RL] + counts[:, C_LOST_PRE]
    done = counts[:, C_DELIVERED] + lost
    with np.errstate(invalid="ignore", divide="ignore"):
        plr_bn = np.where(done > 0, lost / np.maximum(done, 1), math.nan)
        delay_bn = np.where(counts[:, C_DELIVERED] > 0, delay_sum / np.maximum(counts[:, C_DELIVERED], 1), math.nan)
        duty_bn = np.where(sensor_time > 0, airtime / np.where(sensor_time > 0, sensor_time, 1), math.nan)
    return SimReport(
        lambda_fps=lambda_fps,
        runs=len(runs),
        duration_s=runs[0].duration,
        per_ini=m["per_ini"],
        per_re=m["per_re"],
        plr=m["plr"],
        delay_s=m["delay_s"],
        duty_cycle=m["duty_cycle"],
        plr_by_bn=plr_bn,
        delay_by_bn=delay_bn,
        duty_by_bn=duty_bn,
        counts=counts,
        attempts_hist=hist,
        ci95=ci,
    )


def run(scenario: Scenario, duration_s: float, seed: int | None = None, runs: int = 1, **kw) -> SimReport:
    """Simulate ``runs`` independent replications with seeds ``seed + k``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    base = scenario.seed if seed is None else seed
    results = [simulate_counts(scenario, duration_s, base + k, **kw) for k in range(runs)]
    return aggregate(scenario.lambda_total, results)


def sweep(scenario: Scenario, lambdas, runs: int = 10, horizon_packets: float = 1e5,
          seed: int | None = None, **kw) -> list[SimReport]:
    """One report per rate; each run lasts ``horizon_packets / lambda`` seconds."""
    return [
        run(scenario.with_lambda(float(lam)), horizon_packets / float(lam), seed=seed, runs=runs, **kw)
        for lam in lambdas
    ]
