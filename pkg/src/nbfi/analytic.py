"""Analytic PER / PLR / delay model for a single NB-Fi base station.

The pairwise tables (Q, Q_one, Q_both, Q_re, P_int) depend only on geometry
and radio parameters, never on the traffic rate, so one table set serves a
whole lambda sweep.

Geometry integrals run over squared distance ``u = r**2`` in which the
per-ring distance law is uniform. The frequency-gap dimension is handled in
closed form through :class:`~nbfi.freqplan.FreqDiffDist`; only the two
distances are integrated numerically, with Gauss-Legendre nodes on
sub-intervals cut at the points where the integrand switches branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.optimize import bisect

from .core import N_BN, PALETTE, NbfiError, Scenario, dbm_to_w
from .freqplan import FreqDiffDist, guard_halfwidth, is_wide
from .radio import max_distances

PER_BOUND = 0.1
LAMBDA_CAP = 1e3
DEFAULT_NODES = 128
CONVERGENCE_TOL = 1e-4


class IntegrationNotConverged(NbfiError, RuntimeError):
    pass


class DegenerateTraffic(NbfiError, ValueError):
    pass


class AllLost(NbfiError, ValueError):
    pass


@dataclass(frozen=True)
class PairwiseTables:
    q: np.ndarray
    q_one: np.ndarray
    q_both: np.ndarray
    q_re: np.ndarray
    p_int: np.ndarray


@dataclass(frozen=True)
class ModelReport:
    lambda_fps: float
    per_ini: float
    per_re: float
    plr: float
    delay_s: float
    lambda_star: float
    duty_cycle: float
    plr_by_bn: np.ndarray = field(repr=False)
    delay_by_bn: np.ndarray = field(repr=False)
    p_s_ini: np.ndarray = field(repr=False)
    p_s_re: np.ndarray = field(repr=False)

    def row(self) -> dict:
        out = {
            "lambda_fps": self.lambda_fps,
            "per_ini": self.per_ini,
            "per_re": self.per_re,
            "plr": self.plr,
            "delay_s": self.delay_s,
            "lambda_star": self.lambda_star,
            "duty_cycle": self.duty_cycle,
        }
        for k in range(N_BN):
            out[f"plr_bn{k + 1}"] = self.plr_by_bn[k]
            out[f"delay_bn{k + 1}"] = self.delay_by_bn[k]
            out[f"p_s_ini_bn{k + 1}"] = self.p_s_ini[k]
            out[f"p_s_re_bn{k + 1}"] = self.p_s_re[k]
        return out


# --------------------------------------------------------------------------
# time-domain repetition probability


def _uniform_sum_cdf(t: float, widths: list[float]) -> float:
    """CDF at ``t`` of a sum of independent U[0, w] variables."""
    widths = [w for w in widths if w > 0]
    if t <= 0:
        return 0.0 if widths or t < 0 else 1.0
    total = sum(widths)
    if t >= total:
        return 1.0
    n = len(widths)
    acc = 0.0
    for k in range(n + 1):
        for sub in combinations(widths, k):
            s = t - sum(sub)
            if s > 0:
                acc += (-1) ** k * s**n
    return min(max(acc / (math.factorial(n) * math.prod(widths)), 0.0), 1.0)


def p_int(bn_i: int, bn_j: int) -> float:
    """Probability that the retries of two collided packets overlap in time again.

    The midpoint offset of the original pair is uniform on ``[-S, S]`` with
    ``S = (T_i + T_j)/2``; each retry midpoint is uniform over its backoff
    window. Overlap means the retry midpoints are within ``S`` of each other,
    so the answer is one window of the CDF of a sum of three uniforms.
    """
    ci, cj = PALETTE[bn_i - 1], PALETTE[bn_j - 1]
    s = 0.5 * (ci.t_data + cj.t_data)
    shift = -s + cj.w_min - ci.w_max
    widths = [2 * s, cj.t_rnd, ci.t_rnd]
    return _uniform_sum_cdf(s - shift, widths) - _uniform_sum_cdf(-s - shift, widths)


def p_int_matrix() -> np.ndarray:
    return np.array([[p_int(i + 1, j + 1) for j in range(N_BN)] for i in range(N_BN)])


# --------------------------------------------------------------------------
# geometry quadrature


@lru_cache(maxsize=8)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class _Radio:
    c_w: float        # received power at 1 km, watts
    beta: float       # path-loss exponent, power ~ r**-beta
    nu: float
    b_ul: float

    def power(self, u):
        return self.c_w * np.power(u, -self.beta / 2)

    def u_of_power(self, e):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(e > 0, np.power(self.c_w / e, 2.0 / self.beta), np.inf)


def _radio(scenario: Scenario) -> _Radio:
    return _Radio(
        c_w=dbm_to_w(scenario.e_t - scenario.prop.a_db),
        beta=scenario.prop.b_db / 10.0,
        nu=scenario.nu,
        b_ul=scenario.b_ul,
    )


def _phi(e_v, e_x, d_v, d_x, z_v, nu):
    eps = e_x / d_x
    half_sum = 0.5 * (d_v + d_x)
    full_ok = e_v > nu * (eps * min(d_v, d_x) + z_v)
    margin = np.maximum(e_v - z_v * nu, 0.0) / (eps * nu)
    return np.where(full_ok, 0.0, np.clip(half_sum - margin, 0.0, half_sum))


def _fail(dist: FreqDiffDist, phi):
    # f_delta < phi; the wide-wide atom at zero only counts when phi > 0
    return np.where(phi > 0, dist.cdf(phi), 0.0)


def _nodes(lo, hi, n):
    """Gauss-Legendre points/weights on rows of intervals [lo, hi]."""
    x, w = _gauss(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _outer_pieces(lo, hi, cuts):
    pts = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    return list(zip(pts[:-1], pts[1:]))


@lru_cache(maxsize=65536)
def pair_integrals(bn_i: int, bn_j: int, ring_i: tuple, ring_j: tuple, radio: _Radio, noise_k: float, n: int):
    """Geometry integrals for the ordered pair (i victim, j interferer).

    ``ring_*`` are ``(u_lo, u_hi)`` in km^2 and ``noise_k`` is k*T.
    Returns ``(fail, one, re_num, re_den)``:

    * ``fail``   - P(packet i lost when overlapped in time by j) = 1 - Q
    * ``one``    - P(i lost and j received) = Q_one
    * ``re_num`` - integral of the retry gap CDF at the threshold
    * ``re_den`` - P(i cannot survive a complete overlap)
    """
    ci, cj = PALETTE[bn_i - 1], PALETTE[bn_j - 1]
    di, dj = ci.delta, cj.delta
    zi, zj = noise_k * di, noise_k * dj
    dmin = min(di, dj)
    nu = radio.nu
    dist = FreqDiffDist.for_pair(ci, cj, radio.b_ul, "initial")
    dist_re = FreqDiffDist.for_pair(ci, cj, radio.b_ul, "retry")
    ui_lo, ui_hi = ring_i
    uj_lo, uj_hi = ring_j
    span_i, span_j = ui_hi - ui_lo, uj_hi - uj_lo

    def bound_fail(e_i):
        # j's power above this makes i's threshold positive
        return radio.u_of_power((e_i / nu - zi) * dj / dmin)

    def bound_other(e_i):
        # j's power below this makes j itself lose under complete overlap
        return radio.u_of_power(nu * (e_i * dmin / di + zj))

    cuts = []
    for uj in (uj_lo, uj_hi):
        if uj > 0:
            ej = radio.power(uj)
            cuts.append(float(radio.u_of_power(nu * (zi + ej * dmin / dj))))
            e_edge = (ej / nu - zj) * di / dmin
            if e_edge > 0:
                cuts.append(float(radio.u_of_power(e_edge)))

    totals = np.zeros(4)
    for a, b in _outer_pieces(ui_lo, ui_hi, cuts):
        ui, wi = _nodes(a, b, n)
        wi = wi / span_i
        ei = radio.power(ui)
        top = np.clip(bound_fail(ei), uj_lo, uj_hi)
        mid = np.clip(bound_other(ei), uj_lo, top)
        totals[3] += np.sum(wi * (top - uj_lo) / span_j)

        for lo, hi, j_can_fail in ((uj_lo, mid, False), (mid, top, True)):
            uj, wj = _nodes(np.broadcast_to(lo, ui.shape), hi, n)
            wj = wj / span_j
            ej = radio.power(uj)
            e_i = ei[:, None]
            phi_ij = _phi(e_i, ej, di, dj, zi, nu)
            f_ij = _fail(dist, phi_ij)
            if j_can_fail:
                f_ji = _fail(dist, _phi(ej, e_i, dj, di, zj, nu))
                one = np.maximum(f_ij - f_ji, 0.0)
            else:
                one = f_ij
            f_re = _fail(dist_re, phi_ij)
            totals[0] += np.sum(wi[:, None] * wj * f_ij)
            totals[1] += np.sum(wi[:, None] * wj * one)
            totals[2] += np.sum(wi[:, None] * wj * f_re)
    return tuple(float(t) for t in totals)


def _rings_u(scenario: Scenario) -> list[tuple[float, float]]:
    alloc = scenario.allocation
    return [tuple(r * r for r in alloc.ring(k + 1)) for k in range(N_BN)]


def check_feasible(scenario: Scenario) -> None:
    from .core import ConstraintViolation

    limits = max_distances(scenario)
    for k in range(N_BN):
        inner, outer = scenario.allocation.ring(k + 1)
        if outer > inner and outer > limits[k] * (1 + 1e-9):
            raise ConstraintViolation(
                f"BN{k + 1} ring reaches {outer:.4f} km beyond its range {limits[k]:.4f} km"
            )


def _pair_tables(scenario: Scenario, n: int):
    radio = _radio(scenario)
    noise_k = scenario.noise.thermal_w(1.0)
    rings = _rings_u(scenario)
    out = np.zeros((4, N_BN, N_BN))
    used = [rings[k][1] > rings[k][0] for k in range(N_BN)]
    for i in range(N_BN):
        for j in range(N_BN):
            if used[i] and used[j]:
                out[:, i, j] = pair_integrals(i + 1, j + 1, rings[i], rings[j], radio, noise_k, n)
    return out, used


def pairwise_tables(scenario: Scenario, n_nodes: int = DEFAULT_NODES, check: bool = True) -> PairwiseTables:
    """All λ-independent pairwise tables for the scenario's allocation.

    With ``check`` the integrals are recomputed on a doubled grid and
    :class:`IntegrationNotConverged` is raised if any entry moves by more than
    ``1e-4``; the finer result is returned.
    """
    check_feasible(scenario)
    raw, used = _pair_tables(scenario, n_nodes)
    if check:
        fine, _ = _pair_tables(scenario, 2 * n_nodes)
        diff = np.abs(fine - raw)
        # compare the derived probabilities, not the unnormalised re_num
        ratio_diff = np.abs(_retry_success(fine) - _retry_success(raw))
        worst = max(diff[:2].max(), ratio_diff.max())
        if worst > CONVERGENCE_TOL:
            raise IntegrationNotConverged(
                f"grid doubling {n_nodes}->{2 * n_nodes} moved a table entry by {worst:.2e}"
            )
        raw = fine
    fail, one, _, _ = raw
    q = 1.0 - fail
    q_one = one
    q_both = np.clip(fail - one, 0.0, 1.0)
    q_re = _retry_success(raw)
    wide = np.array([[is_wide_pair(scenario, i + 1, j + 1) for j in range(N_BN)] for i in range(N_BN)])
    q_re = np.where(wide, 0.0, q_re)
    unused = ~(np.array(used)[:, None] & np.array(used)[None, :])
    q = np.where(unused, 1.0, q)
    q_re = np.where(unused, 1.0, q_re)
    return PairwiseTables(q=q, q_one=q_one, q_both=q_both, q_re=q_re, p_int=p_int_matrix())


def _retry_success(raw):
    _, _, num, den = raw
    with np.errstate(divide="ignore", invalid="ignore"):
        q_re = 1.0 - num / den
    return np.where(den > 1e-12, np.clip(q_re, 0.0, 1.0), 1.0)


def q_matrix(scenario: Scenario, **kw) -> np.ndarray:
    return pairwise_tables(scenario, **kw).q


def q_one_both(scenario: Scenario, **kw) -> tuple[np.ndarray, np.ndarray]:
    t = pairwise_tables(scenario, **kw)
    return t.q_one, t.q_both


def q_re_matrix(scenario: Scenario, **kw) -> np.ndarray:
    return pairwise_tables(scenario, **kw).q_re


# --------------------------------------------------------------------------
# probability chain


def _t_data() -> np.ndarray:
    return np.array([c.t_data for c in PALETTE])


def collision_exponents(scenario: Scenario, tables: PairwiseTables) -> np.ndarray:
    """c[i, j] = λ_j (T_i + T_j)(1 - Q_ij)."""
    t = _t_data()
    lam = np.asarray(scenario.lambdas())
    return lam[None, :] * (t[:, None] + t[None, :]) * (1.0 - tables.q)


def p_data_ini(scenario: Scenario, tables: PairwiseTables) -> np.ndarray:
    return np.exp(-collision_exponents(scenario, tables).sum(axis=1))


def per_ini(scenario: Scenario, tables: PairwiseTables) -> float:
    p = np.asarray(scenario.p)
    return float(1.0 - p @ p_data_ini(scenario, tables))


def _partner_rows(scenario: Scenario, tables: PairwiseTables):
    c = collision_exponents(scenario, tables)
    num = np.expm1(c)
    den = num.sum(axis=1, keepdims=True)
    ok = den[:, 0] > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        pcs = np.where(ok[:, None], num / den, 0.0)
    return pcs, ok


def collision_partner_dist(scenario: Scenario, tables: PairwiseTables) -> np.ndarray:
    """P^cs[i, j]: given packet i collided, the partner used BN j."""
    pcs, ok = _partner_rows(scenario, tables)
    if not ok.all():
        raise DegenerateTraffic(f"no collision intensity for BN rows {np.flatnonzero(~ok) + 1}")
    return pcs


def p_data_re(scenario: Scenario, tables: PairwiseTables) -> np.ndarray:
    ini = p_data_ini(scenario, tables)
    pcs, ok = _partner_rows(scenario, tables)
    lost = 1.0 - tables.q
    again = tables.q_one + tables.q_both * (1.0 - (1.0 - tables.q_re) * tables.p_int)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(lost > 0, again / lost, 1.0)
    factor = (pcs * frac).sum(axis=1)
    return np.where(ok, factor * ini, ini)


def per_re(scenario: Scenario, tables: PairwiseTables) -> float:
    p = np.asarray(scenario.p)
    ini = p_data_ini(scenario, tables)
    re = p_data_re(scenario, tables)
    weight = p * (1.0 - ini)
    total = weight.sum()
    if total <= 0:
        raise DegenerateTraffic("initial attempts never fail, so no retries exist")
    return float(1.0 - (weight / total) @ re)


def survival_probs(scenario: Scenario, bn: int) -> tuple[float, float]:
    """(P^G_ini, P^G_re): probability the sensor generates no newer frame
    before the failure is noticed, resp. before the retry is sent."""
    c = PALETTE[bn - 1]
    a = scenario.lambda_total / scenario.n_sensors
    g_ini = math.exp(-a * c.w_min)
    x = a * c.t_rnd
    g_re = g_ini * (-math.expm1(-x) / x if x > 0 else 1.0)
    return g_ini, g_re


def _geometric(q: np.ndarray, m: int):
    """sum_{r<m} q^r and sum_{r<m} (r+1) q^r, elementwise."""
    q = np.asarray(q, dtype=float)
    # the retry limit is small, and direct summation avoids the cancellation
    # the closed form suffers near q = 1
    s0 = np.zeros_like(q)
    s1 = np.zeros_like(q)
    term = np.ones_like(q)
    for r in range(max(m, 0)):
        s0 += term
        s1 += (r + 1) * term
        term = term * q
    return s0, s1


def _chain(scenario: Scenario, tables: PairwiseTables):
    ini = p_data_ini(scenario, tables)
    re = p_data_re(scenario, tables)
    g = np.array([survival_probs(scenario, k + 1)[0] for k in range(N_BN)])
    ratio = (1.0 - re) * g
    s0, s1 = _geometric(ratio, scenario.rl - 1)
    return ini, re, g, ratio, s0, s1


def plr(scenario: Scenario, tables: PairwiseTables) -> tuple[float, np.ndarray]:
    ini, re, g, _, s0, _ = _chain(scenario, tables)
    by_bn = 1.0 - ini - (1.0 - ini) * re * g * s0
    by_bn = np.clip(by_bn, 0.0, 1.0)
    return float(np.asarray(scenario.p) @ by_bn), by_bn


def mean_delay(scenario: Scenario, tables: PairwiseTables) -> tuple[float, np.ndarray]:
    ini, re, g, _, _, s1 = _chain(scenario, tables)
    d_s = np.array([c.t_data + c.t_ack for c in PALETTE])
    d_re = np.array([c.w_min + c.t_rnd / 2 for c in PALETTE])
    by_bn = d_s + (1.0 - ini) * re * g * d_re * s1
    total, plr_bn = plr(scenario, tables)
    if total >= 1.0:
        raise AllLost("every packet is lost; delay undefined")
    p = np.asarray(scenario.p)
    return float((p * (1.0 - plr_bn)) @ by_bn / (1.0 - total)), by_bn


def duty_cycle(scenario: Scenario, tables: PairwiseTables) -> float:
    """Mean fraction of time a sensor spends transmitting uplink frames."""
    ini, _, g, _, s0, _ = _chain(scenario, tables)
    attempts = 1.0 + (1.0 - ini) * g * s0
    t = _t_data()
    per_sensor = scenario.lambda_total / scenario.n_sensors
    return float(per_sensor * np.asarray(scenario.p) @ (t * attempts))


def lambda_star(scenario: Scenario, tables: PairwiseTables | None = None, bound: float = PER_BOUND) -> float:
    """Rate at which the initial-attempt PER reaches ``bound``; inf if never below the cap."""
    if tables is None:
        tables = pairwise_tables(scenario)

    def f(lam):
        return per_ini(scenario.with_lambda(lam), tables) - bound

    if f(LAMBDA_CAP) < 0:
        return math.inf
    return float(bisect(f, 1e-12, LAMBDA_CAP, xtol=1e-12, rtol=1e-9, maxiter=500))


def evaluate(scenario: Scenario, tables: PairwiseTables | None = None, lam_star: float | None = None) -> ModelReport:
    if tables is None:
        tables = pairwise_tables(scenario)
    if lam_star is None:
        lam_star = lambda_star(scenario, tables)
    ini = p_data_ini(scenario, tables)
    re = p_data_re(scenario, tables)
    try:
        pre = per_re(scenario, tables)
    except DegenerateTraffic:
        pre = 0.0
    total_plr, plr_bn = plr(scenario, tables)
    try:
        delay, delay_bn = mean_delay(scenario, tables)
    except AllLost:
        delay, delay_bn = math.nan, np.full(N_BN, math.nan)
    return ModelReport(
        lambda_fps=scenario.lambda_total,
        per_ini=per_ini(scenario, tables),
        per_re=pre,
        plr=total_plr,
        delay_s=delay,
        lambda_star=lam_star,
        duty_cycle=duty_cycle(scenario, tables),
        plr_by_bn=plr_bn,
        delay_by_bn=delay_bn,
        p_s_ini=ini,
        p_s_re=re,
    )


def sweep(scenario: Scenario, lambdas, tables: PairwiseTables | None = None) -> list[ModelReport]:
    if tables is None:
        tables = pairwise_tables(scenario)
    lam_star = lambda_star(scenario, tables)
    return [evaluate(scenario.with_lambda(float(lam)), tables, lam_star) for lam in lambdas]


def is_wide_pair(scenario: Scenario, bn_i: int, bn_j: int) -> bool:
    return is_wide(guard_halfwidth(PALETTE[bn_i - 1]), scenario.b_ul) and is_wide(
        guard_halfwidth(PALETTE[bn_j - 1]), scenario.b_ul
    )
