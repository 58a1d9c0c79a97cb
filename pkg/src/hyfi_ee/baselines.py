"""
Zero-forcing and maximum-ratio benchmark precoders.

Both baselines use equal per-user norms and one common maximal scale: the
scale grows until either the technology's power budget or (for LiFi) the
first per-LED drive row binds.  ZF columns come from the right pseudo-inverse
of the stacked channel rows, so inter-user interference vanishes up to
numerical precision; MRT matches each user's own channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import ChannelSet, build_channels
from .power_model import check_led_constraint
from .rate_model import LIFI, WIFI
from .sca_core import HybridProblem
from .scenario import Scenario


class BaselineKind(str, Enum):
    ZF = "ZF"
    MRT = "MRT"


def _common_scale(directions: np.ndarray, power_budget: float, eta: float,
                  led_bound: float | None) -> float:
    """Largest t with power(t*F) <= budget and (optionally) C3 rows held."""
    total_norm_sq = float(np.sum(np.abs(directions) ** 2))
    scale = math.sqrt(power_budget * eta / total_norm_sq)
    if led_bound is not None:
        worst_row = float(np.max(np.sum(np.abs(directions), axis=1)))
        if worst_row > 0:
            scale = min(scale, led_bound / worst_row)
    return scale


def mrt_precoder(channels: np.ndarray, power_budget: float, eta: float = 1.0,
                 led_bound: float | None = None) -> np.ndarray:
    """Matched directions f_k ~ h_k (conjugate pairing), maximal common scale.

    `channels` holds one user's channel per row (K x N).
    """
    channels = np.asarray(channels)
    norms = np.linalg.norm(channels, axis=1)
    if np.any(norms == 0):
        raise ValueError("MRT requires nonzero channel vectors")
    directions = (channels / norms[:, None]).T.copy()
    return _common_scale(directions, power_budget, eta, led_bound) * directions


def zf_precoder(channels: np.ndarray, power_budget: float, eta: float = 1.0,
                led_bound: float | None = None) -> np.ndarray:
    """Interference-nulling columns from the right pseudo-inverse, rescaled.

    Row k of `channels` pairs with column j of the result through
    conj(h_k) . f_j, which vanishes for j != k.
    """
    channels = np.asarray(channels)
    k_users, dim = channels.shape
    if k_users > dim:
        raise ValueError("ZF needs at least as many antennas/LEDs as users")
    pairing = np.conj(channels) if np.iscomplexobj(channels) else channels
    gram = pairing @ np.conj(pairing).T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("channel rows are rank deficient; ZF is undefined")
    raw = np.conj(pairing).T @ np.linalg.inv(gram)
    norms = np.linalg.norm(raw, axis=0)
    directions = raw / norms[None, :]
    return _common_scale(directions, power_budget, eta, led_bound) * directions


def build_baseline(kind: BaselineKind, channels: ChannelSet, scenario: Scenario,
                   power_split: float = 0.5):
    """Hybrid baseline pair (F_wifi, F_lifi) under the split power budget."""
    cfg = scenario.config
    builder = mrt_precoder if kind == BaselineKind.MRT else zf_precoder
    f_wifi = builder(channels.wifi, power_split * cfg.p_max_w,
                     cfg.wifi.amp_efficiency)
    led_bound = min(cfg.lifi.dc_bias_a, cfg.lifi.max_current_a - cfg.lifi.dc_bias_a)
    f_lifi = builder(channels.lifi, (1.0 - power_split) * cfg.p_max_w,
                     cfg.lifi.amp_efficiency, led_bound)
    return f_wifi, f_lifi


@dataclass(frozen=True)
class PrecoderEvaluation:
    ee: float                  # nan when total power is zero
    rates: list
    power_wifi_w: float
    power_lifi_w: float
    rate_floors_met: bool
    power_budget_met: bool
    led_rows_met: bool

    @property
    def feasible(self) -> bool:
        return self.rate_floors_met and self.power_budget_met and self.led_rows_met


def evaluate_precoder(f_wifi, f_lifi, scenario: Scenario, slices,
                      channels: ChannelSet = None,
                      channel_seed=None) -> PrecoderEvaluation:
    """Rates, powers, EE, and constraint flags for any fixed precoder pair."""
    if channels is None:
        channels = build_channels(scenario, channel_seed)
    problem = HybridProblem(scenario, slices, channels)
    rates = problem.rates(f_wifi, f_lifi)
    powers = problem.powers(f_wifi, f_lifi)
    total = powers.total_w
    ee = float(sum(r.total for r in rates)) / total if total > 0 else math.nan
    led_ok = check_led_constraint(f_lifi, problem.led_bound, tol=1e-9).satisfied
    return PrecoderEvaluation(
        ee=ee,
        rates=rates,
        power_wifi_w=powers.wifi_w,
        power_lifi_w=powers.lifi_w,
        rate_floors_met=problem.rate_floors_met(rates, tol=1e-9),
        power_budget_met=total <= problem.p_max_w + 1e-9,
        led_rows_met=led_ok,
    )
