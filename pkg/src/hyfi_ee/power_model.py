"""
Transmit-signal power accounting, energy efficiency, and the LED drive bound.

Only AC signal power is modeled (circuit/illumination DC power is out of
scope): each technology consumes the squared precoder norms divided by its
amplifier efficiency.  The per-LED drive constraint caps the l1 row sums of
the LiFi precoder matrix so the biased drive current stays in [0, I_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class PowerBreakdown:
    wifi_w: float
    lifi_w: float

    def __post_init__(self):
        if self.wifi_w < 0 or self.lifi_w < 0:
            raise ValueError("powers must be >= 0")

    @property
    def total_w(self) -> float:
        return self.wifi_w + self.lifi_w


def wifi_power(precoders: np.ndarray, amp_efficiency: float) -> float:
    """(1/eta) * sum_k ||f_k||^2 over the complex WiFi precoder columns."""
    if not 0 < amp_efficiency <= 1:
        raise ValueError("amp_efficiency must lie in (0, 1]")
    precoders = np.asarray(precoders)
    return float(np.sum(np.abs(precoders) ** 2)) / amp_efficiency


def lifi_ac_power(precoders: np.ndarray, amp_efficiency: float) -> float:
    """(1/eta) * sum_k ||f_k||^2 over the real LiFi precoder columns."""
    if not 0 < amp_efficiency <= 1:
        raise ValueError("amp_efficiency must lie in (0, 1]")
    precoders = np.asarray(precoders, dtype=float)
    return float(np.sum(precoders ** 2)) / amp_efficiency


def hybrid_ee(rates, powers: PowerBreakdown) -> float:
    """System energy efficiency: sum of both techs' rates over total power.

    `rates` is an iterable of RateBreakdown (or anything with .total).
    """
    total_power = powers.total_w
    if total_power <= 0:
        raise ValueError("total power must be positive for an EE value")
    sum_rate = float(sum(r.total for r in rates))
    return sum_rate / total_power


def led_drive_bound(dc_bias_a: float, max_current_a: float) -> float:
    """min(x_DC, I_max - x_DC): largest admissible l1 row sum per LED."""
    if not 0 < dc_bias_a < max_current_a:
        raise ValueError("x_DC < I_max violated (need 0 < dc_bias_a < max_current_a)")
    return min(dc_bias_a, max_current_a - dc_bias_a)


class LedConstraintCheck(NamedTuple):
    satisfied: bool
    margin: float          # bound - worst row sum (negative when violated)
    worst_row: int


def check_led_constraint(precoders: np.ndarray, bound: float,
                         tol: float = 0.0) -> LedConstraintCheck:
    """Check sum_k |f_{l,k}| <= bound for every LED row l (closed constraint)."""
    precoders = np.asarray(precoders, dtype=float)
    if precoders.size == 0:
        return LedConstraintCheck(True, bound, -1)
    row_sums = np.sum(np.abs(precoders), axis=1)
    worst = int(np.argmax(row_sums))
    margin = float(bound - row_sums[worst])
    return LedConstraintCheck(margin >= -tol, margin, worst)
