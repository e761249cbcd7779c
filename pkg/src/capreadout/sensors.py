"""Parametric models of the two sensing capacitors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OverRangeError

PF = 1e-12
FF = 1e-15


@dataclass(frozen=True)
class HumiditySensorModel:
    """Porous-oxide humidity capacitor, linear in relative humidity."""

    c_at_0rh: float = 180 * PF
    c_at_100rh: float = 500 * PF

    def __post_init__(self):
        if not (0 < self.c_at_0rh < self.c_at_100rh and math.isfinite(self.c_at_100rh)):
            raise ValueError(
                "need 0 < c_at_0rh < c_at_100rh, got "
                f"{self.c_at_0rh!r}, {self.c_at_100rh!r}"
            )


@dataclass(frozen=True)
class AccelHalfBridge:
    """Differential comb-drive: two capacitors moving in opposite directions.

    ``sensitivity`` is the capacitance change of each half per g.
    """

    c_rest: float = 7.048 * PF
    sensitivity: float = 61.84 * FF

    def __post_init__(self):
        if not (self.c_rest > 0 and math.isfinite(self.c_rest)):
            raise ValueError(f"c_rest must be > 0, got {self.c_rest!r}")
        if not (self.sensitivity > 0 and math.isfinite(self.sensitivity)):
            raise ValueError(f"sensitivity must be > 0, got {self.sensitivity!r}")

    @property
    def full_scale_g(self):
        """Acceleration at which one half-capacitance would reach zero."""
        return self.c_rest / self.sensitivity


def humidity_capacitance(model: HumiditySensorModel, rh):
    """Capacitance in farads at ``rh`` percent relative humidity."""
    if not 0 <= rh <= 100:
        raise ValueError(f"relative humidity must lie in [0, 100] %, got {rh}")
    return model.c_at_0rh + (rh / 100.0) * (model.c_at_100rh - model.c_at_0rh)


def halfbridge_capacitances(model: AccelHalfBridge, accel):
    """Return ``(c_plus, c_minus)`` for an acceleration in g.

    ``accel`` may be a scalar or an array (one value per sample). The larger
    half is formed first and the smaller one as ``2*c_rest - larger``; that
    subtraction is exact, so ``c_plus + c_minus == 2*c_rest`` holds bit for
    bit.
    """
    a = np.asarray(accel, dtype=float)
    delta = model.sensitivity * np.abs(a)
    if not np.all(np.isfinite(delta)) or np.any(delta >= model.c_rest):
        worst = float(np.max(np.abs(a)))
        raise OverRangeError(
            f"|accel| = {worst} g exceeds bridge range of {model.full_scale_g:.6g} g"
        )
    big = model.c_rest + delta
    small = 2.0 * model.c_rest - big
    if np.any(small <= 0):
        raise OverRangeError(f"bridge half-capacitance collapsed to zero at accel={accel!r} g")
    c_plus = np.where(a >= 0, big, small)
    c_minus = np.where(a >= 0, small, big)
    if c_plus.ndim == 0:
        return float(c_plus), float(c_minus)
    return c_plus, c_minus
