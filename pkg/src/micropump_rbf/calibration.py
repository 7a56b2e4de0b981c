"""Recover the flow/pressure correction table from timed volume measurements.

A :class:`Dispenser` plays the part of the damper-tube rig: at a configured
back pressure it pumps for a fixed time while its waste-bottle volume is read
once per second. Calibration discards the start-up cycles, turns the readings
into a mean flow rate, and inverts the check-valve flow equation for F (at low
pressure) and then Z (one run per 5 MPa band).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError
from .pump import (
    DEFAULT_CORRECTIONS,
    CorrectionBand,
    CorrectionTable,
    PumpParameters,
    check_valve_flow,
    flow_correction,
    lookup_corrections,
    pressure_correction,
)

_UL_S_PER_ML_MIN = 1000.0 / 60.0


@dataclass(frozen=True)
class Dispenser:
    table: CorrectionTable = DEFAULT_CORRECTIONS
    params: PumpParameters = PumpParameters()
    flow_sign: int = 1
    noise_sd: float = 2.0  # uL, per volume reading
    warmup_cycles: int = 4
    seed: int = 0

    def flow_rate(self, back_pressure: float, period: float) -> float:
        """Steady delivered flow in uL/s."""
        F, Z = lookup_corrections(self.table, back_pressure)
        lam_z = pressure_correction(Z, back_pressure, self.params.p_max)
        lam_f = flow_correction(F, self.flow_sign)
        return check_valve_flow(lam_z, lam_f, self.params.pump_volume, period) * _UL_S_PER_ML_MIN

    def run(self, back_pressure: float, period: float = 10.0, duration: float = 600.0, dt: float = 1.0):
        """Times (s) and cumulative volume readings (uL) for one timed run.
        Flow ramps up linearly over the warm-up cycles."""
        t = np.arange(0.0, duration + 0.5 * dt, dt)
        q = self.flow_rate(back_pressure, period)
        ramp = self.warmup_cycles * period
        if ramp > 0:
            volume = np.where(t < ramp, 0.5 * q * t**2 / ramp, q * (t - 0.5 * ramp))
        else:
            volume = q * t
        if self.noise_sd > 0:
            key = struct.unpack("<2I", struct.pack("<d", float(back_pressure)))
            rng = np.random.default_rng([self.seed, *key])
            volume = volume + rng.normal(0.0, self.noise_sd, size=t.shape)
        return t, volume


@dataclass(frozen=True)
class CalibrationResult:
    table: CorrectionTable
    F_estimate: float
    Z_estimates: tuple  # raw estimate per band, first band fixed at 0
    pressures: tuple  # back pressure used per band

    def deltas(self, reference: CorrectionTable = DEFAULT_CORRECTIONS) -> list[tuple[float, float]]:
        return [(b.F - r.F, b.Z - r.Z) for b, r in zip(self.table.bands, reference.bands)]


def mean_flow(times, volumes, skip_until: float) -> float:
    """Average delivery rate (uL/s) over readings taken after ``skip_until``."""
    times = np.asarray(times, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if not (np.all(np.isfinite(times)) and np.all(np.isfinite(volumes))):
        raise CalibrationError("non-finite dispenser readings")
    keep = times >= skip_until
    if keep.sum() < 2:
        raise CalibrationError("run too short to average past the warm-up")
    t, v = times[keep], volumes[keep]
    rate = (v[-1] - v[0]) / (t[-1] - t[0])
    if not rate > 0:
        raise CalibrationError(f"dispensed volume does not increase (rate {rate:.4g} uL/s)")
    return float(rate)


def calibrate_corrections(
    dispenser: Dispenser,
    bands=None,
    period: float = 10.0,
    duration: float = 600.0,
    f_pressure: float = 2.0,
    band_pressures=None,
) -> CalibrationResult:
    """Replay the two-stage calibration against ``dispenser``.

    ``bands`` gives the pressure intervals of the output table (defaults to the
    reference 5 MPa bands); ``band_pressures`` the back pressure used for each
    band's run (defaults to band midpoints). Recovered constants are rounded to
    integers, matching the precision of the reference table.
    """
    bands = [(b.lo, b.hi) for b in (bands or DEFAULT_CORRECTIONS.bands)]
    if band_pressures is None:
        band_pressures = [0.5 * (lo + hi) for lo, hi in bands]
    if len(band_pressures) != len(bands):
        raise CalibrationError("one calibration pressure per band required")
    params = dispenser.params
    nominal = 2.0 * params.pump_volume / period  # uL/s with both factors at 1
    skip = dispenser.warmup_cycles * period

    t, v = dispenser.run(f_pressure, period, duration)
    lam_f = mean_flow(t, v, skip) / nominal
    F_est = 100.0 * dispenser.flow_sign * (lam_f - 1.0)
    if F_est < -0.5:
        raise CalibrationError(f"flow correction estimate {F_est:.3f} is negative")

    z_est = []
    for (lo, hi), p in zip(bands, band_pressures):
        if not lo <= p <= hi:
            raise CalibrationError(f"calibration pressure {p} outside band [{lo}, {hi}]")
        if lo == 0.0:
            # pressure correction is taken as zero in the low band
            z_est.append(0.0)
            continue
        t, v = dispenser.run(p, period, duration)
        lam_z = mean_flow(t, v, skip) / (nominal * lam_f)
        z_est.append(100.0 * (lam_z - 1.0) * params.p_max / p)

    F = float(max(round(F_est), 0))
    table = CorrectionTable(tuple(CorrectionBand(lo, hi, F, float(round(z))) for (lo, hi), z in zip(bands, z_est)))
    return CalibrationResult(table, F_est, tuple(z_est), tuple(float(p) for p in band_pressures))
