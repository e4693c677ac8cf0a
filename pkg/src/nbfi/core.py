"""Shared constants, units and scenario types.

Everything inside the package works in SI units (seconds, hertz, watts).
Kilometres and dBm appear only on the public constructors and in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

BOLTZMANN = 1.380649e-23
FRAME_BITS = 288  # 36-byte frames
N_BN = 4
MIN_UL_BAND_HZ = 51_200.0


class NbfiError(Exception):
    """Base class for every error raised by this package."""


class ConstraintViolation(NbfiError, ValueError):
    pass


class DomainError(NbfiError, ValueError):
    pass


class Infeasible(NbfiError, ValueError):
    pass


def dbm_to_w(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(w):
    return 10.0 * math.log10(w) + 30.0


def db_to_lin(db):
    return 10.0 ** (db / 10.0)


def lin_to_db(x):
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class BitrateClass:
    bn: int
    bitrate: float
    delta: float
    t_data: float
    s_crit: float
    t_delay: float
    t_listen: float
    t_rnd: float
    snr_rxtx: float
    r_star: float

    @property
    def t_ack(self) -> float:
        # downlink ACKs are 36-byte frames sent at the uplink bitrate
        return self.t_data

    @property
    def w_min(self) -> float:
        return self.t_delay + self.t_listen

    @property
    def w_max(self) -> float:
        return self.t_delay + self.t_listen + self.t_rnd


# bn, bps, delta Hz, frame ms, dBm, T_delay ms, T_listen ms, T_rnd ms, SNR dB, R* km
_TABLE1 = (
    (1, 50, 50, 5760, -150, 5900, 60000, 5000, 0, 10.869),
    (2, 400, 400, 720, -141, 740, 30000, 1000, 9, 6.023),
    (3, 3200, 3200, 90, -132, 95, 6000, 100, 18, 3.337),
    (4, 25600, 25600, 11.25, -123, 15, 6000, 100, 27, 1.849),
)


def table1_palette() -> list[BitrateClass]:
    """The four NB-Fi bitrate classes with timings converted to seconds."""
    return [
        BitrateClass(
            bn=bn,
            bitrate=float(bps),
            delta=float(delta),
            t_data=t_ms / 1000.0,
            s_crit=float(s),
            t_delay=td / 1000.0,
            t_listen=tl / 1000.0,
            t_rnd=tr / 1000.0,
            snr_rxtx=float(snr),
            r_star=r_star,
        )
        for bn, bps, delta, t_ms, s, td, tl, tr, snr, r_star in _TABLE1
    ]


PALETTE = tuple(table1_palette())


@dataclass(frozen=True)
class Allocation:
    """Ring radii R_1..R_4 in km (R_5 = 0 implied) and the induced BN shares."""

    r_max: tuple[float, float, float, float]
    p: tuple[float, float, float, float]

    def ring(self, bn: int) -> tuple[float, float]:
        """(inner, outer) radius in km of the ring served by ``bn``."""
        k = bn - 1
        inner = self.r_max[k + 1] if k < N_BN - 1 else 0.0
        return inner, self.r_max[k]

    @property
    def used(self) -> list[int]:
        return [k + 1 for k in range(N_BN) if self.p[k] > 0.0]

    def label(self) -> str:
        return "+".join(f"BN{b}" for b in self.used)


def allocation_from_radii(
    r_max: Sequence[float],
    r1: float,
    r_star: Sequence[float] | None = None,
) -> Allocation:
    """Build an :class:`Allocation` from ring radii.

    ``r_star`` are the per-BN range limits; the palette values when omitted.
    The outermost radius must coincide with the deployment radius so that
    every sensor lies inside some ring.
    """
    radii = tuple(float(r) for r in r_max)
    if len(radii) != N_BN:
        raise ConstraintViolation(f"need {N_BN} radii, got {len(radii)}")
    if r1 <= 0:
        raise ConstraintViolation("deployment radius must be positive")
    if r_star is None:
        r_star = [c.r_star for c in PALETTE]
    if any(r < 0 for r in radii):
        raise ConstraintViolation(f"negative radius in {radii}")
    for k in range(N_BN - 1):
        if radii[k + 1] > radii[k]:
            raise ConstraintViolation(f"radii must be non-increasing: {radii}")
    if not math.isclose(radii[0], r1, rel_tol=1e-12, abs_tol=0.0):
        raise ConstraintViolation(
            f"outer radius {radii[0]} km must equal deployment radius {r1} km"
        )
    for k, (r, lim) in enumerate(zip(radii, r_star)):
        if r > lim * (1 + 1e-12) and r > 0:
            raise ConstraintViolation(
                f"BN{k + 1} ring radius {r:.4f} km exceeds its range {lim:.4f} km"
            )
    ext = radii + (0.0,)
    p = [(ext[k] ** 2 - ext[k + 1] ** 2) / r1**2 for k in range(N_BN)]
    if any(x < 0 for x in p):
        raise ConstraintViolation(f"negative share in {p}")
    return Allocation(r_max=radii, p=tuple(p))


def single_bn_allocation(bn: int, r1: float, r_star=None) -> Allocation:
    if not 1 <= bn <= N_BN:
        raise ConstraintViolation(f"bn must be in 1..{N_BN}, got {bn}")
    radii = [r1 if k < bn else 0.0 for k in range(N_BN)]
    return allocation_from_radii(radii, r1, r_star)


@dataclass(frozen=True)
class PropagationParams:
    """Log-distance path loss ``A + B log10(r_km)`` from the Okumura-Hata model."""

    f_mhz: float = 868.8
    h_b: float = 30.0
    h_m: float = 1.0

    @property
    def a_db(self) -> float:
        # large-city urban form, mobile antenna correction for f >= 300 MHz
        a_hm = 3.2 * math.log10(11.75 * self.h_m) ** 2 - 4.97
        return (
            69.55
            + 26.16 * math.log10(self.f_mhz)
            - 13.82 * math.log10(self.h_b)
            - a_hm
        )

    @property
    def b_db(self) -> float:
        return 44.9 - 6.55 * math.log10(self.h_b)


@dataclass(frozen=True)
class NoiseModel:
    temp_k: float = 290.0
    n_base_db: float = 2.0
    snr_ber_db: float = 5.0

    def thermal_w(self, delta: float) -> float:
        return BOLTZMANN * self.temp_k * delta


@dataclass(frozen=True)
class Scenario:
    n_sensors: int
    radius_r1: float
    lambda_total: float
    allocation: Allocation
    e_t: float = 14.0
    nu_db: float = 7.0
    b_ul: float = MIN_UL_BAND_HZ
    rl: int = 7
    seed: int = 0
    prop: PropagationParams = field(default_factory=PropagationParams)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.n_sensors < 1:
            raise ConstraintViolation("n_sensors must be >= 1")
        if self.radius_r1 <= 0:
            raise ConstraintViolation("radius_r1 must be positive")
        if not self.lambda_total > 0:
            raise ConstraintViolation("lambda_total must be positive")
        if self.rl < 1:
            raise ConstraintViolation("rl must be >= 1")
        if self.b_ul < MIN_UL_BAND_HZ:
            raise ConstraintViolation(
                f"UL band {self.b_ul} Hz is below the {MIN_UL_BAND_HZ:.0f} Hz minimum"
            )

    @property
    def nu(self) -> float:
        return db_to_lin(self.nu_db)

    @property
    def p(self) -> tuple[float, ...]:
        return self.allocation.p

    def lambdas(self) -> list[float]:
        return [self.lambda_total * p for p in self.allocation.p]

    def with_lambda(self, lam: float) -> "Scenario":
        return replace(self, lambda_total=lam)

    def with_allocation(self, alloc: Allocation) -> "Scenario":
        return replace(self, allocation=alloc)
