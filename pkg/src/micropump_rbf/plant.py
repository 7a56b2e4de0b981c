"""Synthetic stand-in for the physical pump rig.

The plant defines a latent optimal overlap angle per operating point and a
closed-form shifting-point pressure drop:

    pulse = rho(point) + kappa*P*exp(-angle/tau) + gamma*P*((angle - theta*)/45)^2 + noise

Its coefficients are a calibration chosen so that the no-overlap, fixed-angle
and tuned-angle strategies land in the magnitudes reported for the real rig.
They are not physics.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PlantConfigError
from .pump import OperatingPoint, PumpParameters, WATER, plunger_speed

SWEEP_LO = 5.0
SWEEP_HI = 45.0
_RHO_TAG = 1
_NOISE_TAG = 2


@dataclass(frozen=True)
class PlantModel:
    rho_lo: float = 0.15  # MPa, residual pulse floor
    rho_hi: float = 0.25
    kappa: float = 0.735  # no-overlap severity, fraction of P
    tau: float = 2.0  # degrees, decay of the regurgitation term
    gamma: float = 1.0  # mistuning curvature
    theta0: float = 14.0  # degrees
    a: float = 6.0  # pressure coefficient
    b: float = 6.0  # plunger speed coefficient
    c: float = 1.0  # valve flow coefficient
    d: float = 1.0  # viscosity coefficient
    noise_sd: float = 0.1  # MPa
    seed: int = 0
    p_max: float = 40.0
    omega_ref: float = plunger_speed(5.0, PumpParameters())
    q_ref: float = 5.0  # mL/min
    mu_ref: float = WATER.mu

    def __post_init__(self):
        if not 0 < self.rho_lo <= self.rho_hi:
            raise PlantConfigError("need 0 < rho_lo <= rho_hi")
        for name in ("kappa", "gamma", "tau", "p_max", "omega_ref", "q_ref", "mu_ref"):
            if not getattr(self, name) > 0:
                raise PlantConfigError(f"{name} must be positive")
        if self.noise_sd < 0:
            raise PlantConfigError("noise_sd must be non-negative")


@dataclass(frozen=True)
class LabeledPoint:
    point: OperatingPoint
    angle: float  # degrees, argmin of the sweep
    min_pulse: float  # MPa


def _point_words(point: OperatingPoint) -> list[int]:
    raw = point.fluid.name.encode() + struct.pack(
        "<4d", point.fluid.mu, point.back_pressure, point.period, point.set_flow
    )
    digest = hashlib.sha256(raw).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def _angle_words(angle: float) -> list[int]:
    bits = struct.unpack("<Q", struct.pack("<d", float(angle)))[0]
    return [bits & 0xFFFFFFFF, bits >> 32]


def residual_floor(plant: PlantModel, point: OperatingPoint) -> float:
    """Point-specific pulse floor, drawn once per point from [rho_lo, rho_hi]."""
    rng = np.random.default_rng([plant.seed, _RHO_TAG, *_point_words(point)])
    return float(rng.uniform(plant.rho_lo, plant.rho_hi))


def latent_angle_unchecked(plant: PlantModel, point: OperatingPoint) -> float:
    return (
        plant.theta0
        + plant.a * point.back_pressure / plant.p_max
        + plant.b * point.omega / plant.omega_ref
        + plant.c * point.valve_flow / plant.q_ref
        + plant.d * point.mu / plant.mu_ref
    )


def latent_optimal_angle(plant: PlantModel, point: OperatingPoint) -> float:
    theta = latent_angle_unchecked(plant, point)
    if not SWEEP_LO <= theta <= SWEEP_HI:
        raise PlantConfigError(
            f"latent optimal angle {theta:.3f} deg leaves the sweep window [{SWEEP_LO}, {SWEEP_HI}]"
        )
    return theta


def pulse_mean(plant: PlantModel, point: OperatingPoint, angle: float) -> float:
    """Noise-free pressure drop at the shifting point, MPa."""
    if not 0.0 <= angle <= SWEEP_HI:
        raise DomainError(f"overlap angle {angle} outside [0, {SWEEP_HI}]")
    theta = latent_optimal_angle(plant, point)
    P = point.back_pressure
    return (
        residual_floor(plant, point)
        + plant.kappa * P * math.exp(-angle / plant.tau)
        + plant.gamma * P * ((angle - theta) / 45.0) ** 2
    )


def simulate_pulse(plant: PlantModel, point: OperatingPoint, angle: float) -> float:
    """One measured pressure drop. The noise draw is fixed by (seed, point, angle),
    and readings are clipped at zero."""
    mean = pulse_mean(plant, point, angle)
    if plant.noise_sd == 0:
        return mean
    rng = np.random.default_rng([plant.seed, _NOISE_TAG, *_point_words(point), *_angle_words(angle)])
    return max(mean + plant.noise_sd * float(rng.standard_normal()), 0.0)


def sweep_grid(lo: float = SWEEP_LO, hi: float = SWEEP_HI, step: float = 1.0) -> np.ndarray:
    if not lo < hi or not step > 0:
        raise DomainError("sweep needs lo < hi and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def sweep_angle(
    plant: PlantModel, point: OperatingPoint, lo: float = SWEEP_LO, hi: float = SWEEP_HI, step: float = 1.0
) -> LabeledPoint:
    """Label a point with the grid angle of minimum measured pulse; ties go to
    the smaller angle."""
    grid = sweep_grid(lo, hi, step)
    pulses = np.array([simulate_pulse(plant, point, float(a)) for a in grid])
    i = int(np.argmin(pulses))
    return LabeledPoint(point=point, angle=float(grid[i]), min_pulse=float(pulses[i]))
