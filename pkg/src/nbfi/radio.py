"""Link budget, rectangular-PSD interference and the SINR frequency threshold."""

from __future__ import annotations

import math

import numpy as np

from .core import (
    PALETTE,
    BitrateClass,
    DomainError,
    Infeasible,
    NoiseModel,
    PropagationParams,
    Scenario,
    dbm_to_w,
)


def sensitivity_dbm(delta: float, noise: NoiseModel = NoiseModel()) -> float:
    """Required receiver sensitivity kTΔ + N_base + SNR_BER, in dBm."""
    if delta <= 0:
        raise DomainError("bandwidth must be positive")
    return 10.0 * math.log10(noise.thermal_w(delta) * 1e3) + noise.n_base_db + noise.snr_ber_db


def rx_power_dbm(r_km, e_t: float, prop: PropagationParams = PropagationParams()):
    r = np.asarray(r_km, dtype=float)
    if np.any(r <= 0):
        raise DomainError("distance must be positive")
    out = e_t - prop.a_db - prop.b_db * np.log10(r)
    return float(out) if out.ndim == 0 else out


def rx_power_w(r_km, e_t: float, prop: PropagationParams = PropagationParams()):
    return dbm_to_w(rx_power_dbm(r_km, e_t, prop))


def max_distance_km(
    bn: BitrateClass,
    e_t: float,
    nu_db: float,
    prop: PropagationParams = PropagationParams(),
    noise: NoiseModel = NoiseModel(),
) -> float:
    """Distance at which the received power equals thermal noise times ν."""
    z_dbm = 10.0 * math.log10(noise.thermal_w(bn.delta) * 1e3)
    exponent = (e_t - prop.a_db - z_dbm - nu_db) / prop.b_db
    r = 10.0**exponent
    if not math.isfinite(r) or r <= 0:
        raise Infeasible(f"no positive range for BN{bn.bn}")
    return r


def max_distances(scenario: Scenario) -> list[float]:
    return [
        max_distance_km(c, scenario.e_t, scenario.nu_db, scenario.prop, scenario.noise)
        for c in PALETTE
    ]


def interference_power(e_j, delta_i, delta_j, f_delta):
    """Power of interferer ``j`` falling into the band of victim ``i``.

    Both spectra are rectangles; the result is the overlap width times the
    interferer's spectral density ``e_j / delta_j``. Broadcasts over arrays.
    """
    e_j = np.asarray(e_j, dtype=float)
    f = np.abs(np.asarray(f_delta, dtype=float))
    half_sum = 0.5 * (delta_i + delta_j)
    overlap = np.clip(half_sum - f, 0.0, min(delta_i, delta_j))
    out = e_j / delta_j * overlap
    return float(out) if out.ndim == 0 else out


def phi_threshold(e_i, e_j, delta_i, delta_j, z_i, nu):
    """Smallest centre-frequency gap at which victim ``i`` still reaches SINR ν.

    Arguments are linear (watts, hertz). Zero when ``i`` survives even a
    complete overlap; ``(Δi+Δj)/2`` when any overlap at all is fatal.
    """
    e_i = np.asarray(e_i, dtype=float)
    e_j = np.asarray(e_j, dtype=float)
    if np.any(e_i < z_i * nu * (1 - 1e-12)):
        raise Infeasible("victim power below noise*nu: bitrate assigned beyond its range")
    eps_j = e_j / delta_j
    half_sum = 0.5 * (delta_i + delta_j)
    full_ok = e_i > nu * (eps_j * min(delta_i, delta_j) + z_i)
    margin = np.maximum(e_i - z_i * nu, 0.0) / (eps_j * nu)
    phi = np.where(full_ok, 0.0, np.clip(half_sum - margin, 0.0, half_sum))
    return float(phi) if phi.ndim == 0 else phi


def phi_threshold_km(r_i, r_j, bn_i: BitrateClass, bn_j: BitrateClass, scenario: Scenario):
    """:func:`phi_threshold` for sensors at distances ``r_i``, ``r_j`` (km)."""
    e_i = rx_power_w(r_i, scenario.e_t, scenario.prop)
    e_j = rx_power_w(r_j, scenario.e_t, scenario.prop)
    z_i = scenario.noise.thermal_w(bn_i.delta)
    return phi_threshold(e_i, e_j, bn_i.delta, bn_j.delta, z_i, scenario.nu)
