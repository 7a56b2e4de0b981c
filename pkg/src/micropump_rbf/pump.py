"""Pump flow model: overlap time, plunger speed, correction factors and the
check-valve flow that together turn experiment settings into network features.

Internal units are mm, mm^2, mm^3 (= uL), s, MPa and degrees. Flows cross the
public boundary in mL/min and rotational speed in rev/min.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

FEATURE_NAMES = ("mu_cP", "back_pressure_MPa", "omega_rev_min", "valve_flow_mL_min")

_ML_MIN_TO_MM3_MIN = 1000.0
_MM3_S_TO_ML_MIN = 60.0 / 1000.0


@dataclass(frozen=True)
class FluidSpec:
    name: str
    mu: float  # dynamic viscosity, cP at 20 degC

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError(f"viscosity of {self.name!r} must be positive, got {self.mu}")


WATER = FluidSpec("water", 1.002)
METHANOL = FluidSpec("methanol", 0.594)
ACETONITRILE = FluidSpec("acetonitrile", 0.389)
FLUIDS = {f.name: f for f in (WATER, METHANOL, ACETONITRILE)}


def fluid_by_name(name: str) -> FluidSpec:
    try:
        return FLUIDS[name]
    except KeyError:
        raise DomainError(f"unknown fluid {name!r}; expected one of {sorted(FLUIDS)}") from None


@dataclass(frozen=True)
class PumpParameters:
    """Pump constants. ``pump_volume`` is the tabulated product A_p*V_m*S and is
    the only one of the three used in the flow equation."""

    pump_volume: float = 125.0  # uL
    plunger_area: float = 7.917  # mm^2
    step_displacement: float = 0.01  # mm per step
    rev_displacement: float = 2.0  # mm per revolution
    steps_per_cycle: int = 1580
    p_max: float = 40.0  # MPa
    motor_speed_max: float = 2000.0  # steps per second

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise DomainError(f"pump parameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class CorrectionBand:
    lo: float
    hi: float
    F: float
    Z: float


def _default_bands() -> tuple[CorrectionBand, ...]:
    z_values = (0, 6, 7, 15, 18, 25, 31, 42)
    return tuple(CorrectionBand(5.0 * i, 5.0 * (i + 1), 13.0, float(z)) for i, z in enumerate(z_values))


@dataclass(frozen=True)
class CorrectionTable:
    """Flow (F) and pressure (Z) correction constants per back-pressure band.

    F and Z are dimensionless percentages as they enter the correction factors.
    Bands are half-open ``[lo, hi)`` except the last, which is closed, so a
    boundary pressure belongs to the upper band.
    """

    bands: tuple[CorrectionBand, ...] = field(default_factory=_default_bands)

    def __post_init__(self):
        bands = tuple(self.bands)
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise DomainError("correction table needs at least one band")
        if bands[0].lo != 0.0:
            raise DomainError("correction bands must start at 0 MPa")
        for prev, nxt in zip(bands, bands[1:]):
            if prev.hi != nxt.lo:
                raise DomainError(f"correction bands not contiguous at {prev.hi} / {nxt.lo} MPa")
        for band in bands:
            if not band.hi > band.lo:
                raise DomainError(f"empty correction band [{band.lo}, {band.hi})")

    @property
    def p_upper(self) -> float:
        return self.bands[-1].hi

    @classmethod
    def from_rows(cls, rows) -> "CorrectionTable":
        return cls(tuple(CorrectionBand(float(lo), float(hi), float(f), float(z)) for lo, hi, f, z in rows))

    def to_rows(self) -> list[list[float]]:
        return [[b.lo, b.hi, b.F, b.Z] for b in self.bands]


DEFAULT_CORRECTIONS = CorrectionTable()


def overlap_time(period: float, overlap_angle: float) -> float:
    """Seconds during which both pumps transfuse for a given overlap angle."""
    if not period > 0:
        raise DomainError(f"period must be positive, got {period}")
    if not 0.0 <= overlap_angle <= 360.0:
        raise DomainError(f"overlap angle must lie in [0, 360], got {overlap_angle}")
    return period * (overlap_angle / 360.0)


def plunger_speed(set_flow: float, params: PumpParameters = PumpParameters()) -> float:
    """Plunger rotational speed in rev/min for a set flow in mL/min."""
    if not set_flow > 0:
        raise DomainError(f"set flow must be positive, got {set_flow}")
    return set_flow * _ML_MIN_TO_MM3_MIN / (params.plunger_area * params.rev_displacement)


def pressure_correction(Z: float, P: float, p_max: float) -> float:
    if not p_max > 0:
        raise DomainError(f"p_max must be positive, got {p_max}")
    if not 0.0 <= P <= p_max:
        raise DomainError(f"pressure {P} MPa outside [0, {p_max}]")
    return 1.0 + (Z / 100.0) * (P / p_max)


def flow_correction(F: float, sign: int = 1) -> float:
    if sign not in (1, -1):
        raise DomainError(f"flow correction sign must be +1 or -1, got {sign}")
    if F < 0:
        raise DomainError(f"F must be non-negative, got {F}")
    lam = 1.0 + sign * F / 100.0
    if not lam > 0:
        raise DomainError(f"flow correction factor {lam} is not positive")
    return lam


def check_valve_flow(lambda_z: float, lambda_f: float, pump_volume: float, period: float) -> float:
    """Flow through the check valve in mL/min (pump_volume in uL, period in s)."""
    if not period > 0:
        raise DomainError(f"period must be positive, got {period}")
    if not (lambda_z > 0 and lambda_f > 0 and pump_volume > 0):
        raise DomainError("correction factors and pump volume must be positive")
    return 2.0 * lambda_z * lambda_f * pump_volume / period * _MM3_S_TO_ML_MIN


def lookup_corrections(table: CorrectionTable, back_pressure: float) -> tuple[float, float]:
    """(F, Z) of the band containing ``back_pressure``."""
    if not 0.0 <= back_pressure <= table.p_upper:
        raise DomainError(f"back pressure {back_pressure} MPa outside [0, {table.p_upper}]")
    for band in table.bands:
        if band.lo <= back_pressure < band.hi:
            return band.F, band.Z
    last = table.bands[-1]
    return last.F, last.Z


@dataclass(frozen=True)
class OperatingPoint:
    fluid: FluidSpec
    back_pressure: float  # MPa
    period: float  # s
    set_flow: float  # mL/min
    omega: float  # rev/min
    valve_flow: float  # mL/min

    @property
    def mu(self) -> float:
        return self.fluid.mu

    def features(self) -> np.ndarray:
        """Network input ordered as [mu, P, omega, Q]."""
        return np.array([self.fluid.mu, self.back_pressure, self.omega, self.valve_flow])


def make_operating_point(
    fluid: FluidSpec,
    back_pressure: float,
    period: float,
    set_flow: float,
    params: PumpParameters = PumpParameters(),
    table: CorrectionTable = DEFAULT_CORRECTIONS,
    flow_sign: int = 1,
) -> OperatingPoint:
    if not 0.0 < back_pressure <= params.p_max:
        raise DomainError(f"back pressure {back_pressure} MPa outside (0, {params.p_max}]")
    if not (math.isfinite(period) and period > 0):
        raise DomainError(f"period must be positive, got {period}")
    F, Z = lookup_corrections(table, back_pressure)
    lam_z = pressure_correction(Z, back_pressure, params.p_max)
    lam_f = flow_correction(F, flow_sign)
    return OperatingPoint(
        fluid=fluid,
        back_pressure=float(back_pressure),
        period=float(period),
        set_flow=float(set_flow),
        omega=plunger_speed(set_flow, params),
        valve_flow=check_valve_flow(lam_z, lam_f, params.pump_volume, period),
    )
