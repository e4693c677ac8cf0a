"""Uplink centre-frequency selection and frequency-gap distributions.

Frequencies used by the model are relative to the lower subband edge, so a
subband is the interval ``(0, b_ul)``. A packet is *wide* when its two guard
half-widths do not fit in the subband (``b_ul <= 2*omega``); a wide packet is
always sent at the subband centre.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import BitrateClass, ConstraintViolation

Variant = Literal["initial", "retry"]

GUARD_HZ = 1000.0


def guard_halfwidth(bn: BitrateClass) -> float:
    return bn.delta + GUARD_HZ


def is_wide(omega: float, b_ul: float) -> bool:
    return b_ul <= 2.0 * omega


@dataclass(frozen=True)
class SubbandPlan:
    f_base: float
    w_ul: int = 0
    o_ul: int = 0

    def __post_init__(self):
        if not 0 <= self.w_ul <= 7:
            raise ConstraintViolation("W_UL must be in 0..7")
        if not -63 <= self.o_ul <= 63:
            raise ConstraintViolation("O_UL must be in -63..63")

    @property
    def b_ul(self) -> float:
        return 6400.0 * 2**self.w_ul

    @property
    def o_ul_band(self) -> float:
        return self.b_ul * self.o_ul

    @property
    def center(self) -> float:
        return self.f_base + self.o_ul_band


def ul_gain(delta: float, b_ul: float) -> float:
    """Half-span G_UL available for pseudo-random placement."""
    if b_ul > 2 * delta + 2 * GUARD_HZ:
        return (b_ul - 2 * delta - 2 * GUARD_HZ) / 2
    return 0.0


def ul_offset(delta: float, b_ul: float, parity, residue):
    """Offset from the subband centre for a parity bit and (id+MIC) mod 256."""
    sign = np.where(np.asarray(parity) == 1, 1.0, -1.0)
    return sign * ul_gain(delta, b_ul) * np.asarray(residue, dtype=float) / 255.0


def ul_center_frequency(plan: SubbandPlan, bn: BitrateClass, parity: int, modem_id: int, mic0_7: int) -> float:
    residue = (modem_id + mic0_7) % 256
    return plan.center + float(ul_offset(bn.delta, plan.b_ul, parity, residue))


def sample_center_frequency(bn: BitrateClass, b_ul: float, variant: Variant, rng: np.random.Generator, size=None):
    """Continuous centre-frequency draw within ``(0, b_ul)``.

    Initial attempts are uniform over ``[omega, b_ul - omega]``; retries are
    confined to the upper half, the half being fixed by the frame parity.
    """
    omega = guard_halfwidth(bn)
    if is_wide(omega, b_ul):
        return np.full(size, b_ul / 2) if size is not None else b_ul / 2
    lo = omega if variant == "initial" else b_ul / 2
    return rng.uniform(lo, b_ul - omega, size)


@dataclass(frozen=True)
class FreqDiffDist:
    """Distribution of ``|f_i - f_j|`` for two packets in one subband."""

    variant: Variant
    omega_i: float
    omega_j: float
    b_ul: float

    @classmethod
    def for_pair(cls, bn_i: BitrateClass, bn_j: BitrateClass, b_ul: float, variant: Variant = "initial"):
        return cls(variant, guard_halfwidth(bn_i), guard_halfwidth(bn_j), b_ul)

    @property
    def wide_i(self) -> bool:
        return is_wide(self.omega_i, self.b_ul)

    @property
    def wide_j(self) -> bool:
        return is_wide(self.omega_j, self.b_ul)

    @property
    def case_id(self) -> int:
        """1 both wide, 2 only j wide, 3 only i wide, 4 both narrow."""
        if self.wide_i and self.wide_j:
            return 1
        if self.wide_j:
            return 2
        if self.wide_i:
            return 3
        return 4

    def _halfspans(self) -> tuple[float, float]:
        # centre-frequency half ranges; sorted so that a >= b
        li = self.b_ul / 2 - self.omega_i
        lj = self.b_ul / 2 - self.omega_j
        return max(li, lj), min(li, lj)

    @property
    def atom_at_zero(self) -> float:
        return 1.0 if self.case_id == 1 else 0.0

    @property
    def support_max(self) -> float:
        case = self.case_id
        if case == 1:
            return 0.0
        if case == 2:
            return self.b_ul / 2 - self.omega_i
        if case == 3:
            return self.b_ul / 2 - self.omega_j
        a, b = self._halfspans()
        return a + b if self.variant == "initial" else a

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        case = self.case_id
        if case == 1:
            out = np.where(x >= 0, 1.0, 0.0)
        elif case in (2, 3):
            span = self.support_max
            out = np.clip(x / span, 0.0, 1.0)
        elif self.variant == "initial":
            out = _concentric_cdf(x, *self._halfspans())
        else:
            out = _aligned_cdf(x, *self._halfspans())
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        """Density of the continuous part (the atom of case 1 excluded)."""
        x = np.asarray(x, dtype=float)
        case = self.case_id
        if case == 1:
            out = np.zeros_like(x)
        elif case in (2, 3):
            span = self.support_max
            out = np.where((x >= 0) & (x < span), 1.0 / span, 0.0)
        elif self.variant == "initial":
            a, b = self._halfspans()
            out = np.where(
                x < 0,
                0.0,
                np.where(x < a - b, 1.0 / a, np.where(x < a + b, (a + b - x) / (2 * a * b), 0.0)),
            )
        else:
            a, b = self._halfspans()
            xp = np.clip(x, 0.0, None)
            dens = np.clip(b - xp, 0.0, None) + np.where(xp <= a - b, b, np.clip(a - xp, 0.0, None))
            out = np.where((x >= 0) & (x < a), dens / (a * b), 0.0)
        return float(out) if out.ndim == 0 else out


def _concentric_cdf(x, a, b):
    """|X - Y| for X ~ U[-a, a], Y ~ U[-b, b], a >= b > 0."""
    inner = x / a
    outer = (-(x**2) + 2 * x * (a + b) - (a - b) ** 2) / (4 * a * b)
    out = np.where(x < a - b, inner, outer)
    out = np.where(x >= a + b, 1.0, out)
    return np.where(x < 0, 0.0, out)


def _aligned_cdf(x, a, b):
    """|X - Y| for X ~ U[0, a], Y ~ U[0, b], a >= b > 0."""
    xp = np.clip(x, 0.0, None)
    upper_tri = np.clip(b - xp, 0.0, None) ** 2 / 2
    lower = np.where(xp <= a - b, b * (a - xp) - b * b / 2, np.clip(a - xp, 0.0, None) ** 2 / 2)
    out = 1.0 - (upper_tri + lower) / (a * b)
    out = np.where(x >= a, 1.0, out)
    return np.where(x < 0, 0.0, np.clip(out, 0.0, 1.0))


def sample_pair_gaps(dist: FreqDiffDist, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo draws of ``|f_i - f_j|`` straight from the selection rule."""
    def draw(omega):
        if is_wide(omega, dist.b_ul):
            return np.full(n, dist.b_ul / 2)
        lo = omega if dist.variant == "initial" else dist.b_ul / 2
        return rng.uniform(lo, dist.b_ul - omega, n)

    return np.abs(draw(dist.omega_i) - draw(dist.omega_j))
