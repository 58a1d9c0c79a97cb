"""
WiFi fading/path-loss and LiFi Lambertian LoS channel generation.

WiFi links follow a Ricean model whose LoS component is active inside the
breakpoint distance, scaled by a dual-slope log-distance path loss with
optional lognormal shadowing.  LiFi links are pure LoS Lambertian gains with
an ideal optical concentrator, zero outside the receiver field of view.
Channels are frozen per (scenario, seed) realization: the optimizer treats
them as constants (block fading).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import LifiParams, Scenario


# =============================================================================
#  WiFi
# =============================================================================

def wifi_pathloss_db(distance_m: float, carrier_hz: float, breakpoint_m: float,
                     shadow_in_db: float = 0.0, shadow_out_db: float = 0.0) -> float:
    """Dual-slope path loss in dB.

    Inside the breakpoint: free-space loss plus the indoor shadow term.
    Beyond it: an extra 35*log10(d/d_BP) slope plus the outdoor shadow term.
    The shadow arguments are realized values in dB, not standard deviations.
    """
    if distance_m <= 0:
        raise ValueError("distance_m must be positive")
    if carrier_hz <= 0 or breakpoint_m <= 0:
        raise ValueError("carrier_hz and breakpoint_m must be positive")
    free_space = 20.0 * math.log10(distance_m) + 20.0 * math.log10(carrier_hz) - 147.5
    if distance_m <= breakpoint_m:
        return free_space + shadow_in_db
    return free_space + 35.0 * math.log10(distance_m / breakpoint_m) + shadow_out_db


def wifi_channel(scenario: Scenario, user_index: int, seed) -> np.ndarray:
    """Complex M-vector for one user: Ricean small-scale fading times path loss.

    The Ricean factor is 1 up to the breakpoint distance and 0 beyond it; the
    deterministic component has a common pi/4 phase across antennas.  The
    scattered part is i.i.d. standard complex normal.  Deterministic per
    (scenario, user_index, seed): each user gets an independent substream.
    """
    cfg = scenario.config.wifi
    if not 0 <= user_index < scenario.num_users:
        raise ValueError(f"user_index {user_index} out of range")
    rng = np.random.default_rng([int(seed), int(user_index)])

    diff = scenario.user_positions[user_index] - scenario.wifi_position
    distance = float(np.linalg.norm(diff))
    ricean = 1.0 if distance <= cfg.breakpoint_m else 0.0

    shadow_in = shadow_out = 0.0
    if cfg.shadowing:
        # One shadow draw per user per realization; only the active branch is used.
        shadow_in = rng.normal(0.0, cfg.shadow_in_db)
        shadow_out = rng.normal(0.0, cfg.shadow_out_db)
    loss_db = wifi_pathloss_db(distance, cfg.carrier_hz, cfg.breakpoint_m,
                               shadow_in, shadow_out)

    m = cfg.antennas
    scatter = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
    los = math.sqrt(ricean / (1.0 + ricean)) * np.exp(1j * math.pi / 4.0)
    nlos = math.sqrt(1.0 / (1.0 + ricean)) * scatter
    return (los + nlos) * 10.0 ** (-loss_db / 20.0)


# =============================================================================
#  LiFi
# =============================================================================

def lambertian_order(semiangle_deg: float) -> float:
    """m = -1 / log2(cos(half-intensity angle))."""
    return -1.0 / math.log2(math.cos(math.radians(semiangle_deg)))


def lifi_los_gain(led_pos, user_pos, params: LifiParams) -> float:
    """Lambertian LoS gain between one LED and one user (responsivity included).

    Transceiver normals are vertical, so irradiance and incidence angles
    coincide.  Returns 0 when the incidence angle exceeds the field of view.
    """
    led_pos = np.asarray(led_pos, dtype=float)
    user_pos = np.asarray(user_pos, dtype=float)
    diff = led_pos - user_pos
    distance = float(np.linalg.norm(diff))
    if distance <= 0:
        raise ValueError("LED and user positions coincide")

    cos_angle = diff[2] / distance
    fov_rad = math.radians(params.fov_deg)
    # cos(angle) <= cos(FoV) means the incidence angle is outside the FoV
    # (covers LEDs below the user plane, where cos_angle <= 0 < cos(FoV)).
    if cos_angle < math.cos(fov_rad):
        return 0.0

    order = lambertian_order(params.semiangle_deg)
    concentrator = params.refractive_index ** 2 / math.sin(fov_rad) ** 2
    front = ((order + 1.0) * params.detector_area_m2 * params.filter_gain
             * params.responsivity_a_w) / (2.0 * math.pi * distance ** 2)
    return front * cos_angle ** order * cos_angle * concentrator


def lifi_channel(scenario: Scenario, user_index: int) -> np.ndarray:
    """Nonnegative gain vector over all LEDs, in LED-grid order."""
    if not 0 <= user_index < scenario.num_users:
        raise ValueError(f"user_index {user_index} out of range")
    user = scenario.user_positions[user_index]
    params = scenario.config.lifi
    return np.array([lifi_los_gain(led, user, params)
                     for led in scenario.led_positions])


# =============================================================================
#  Frozen per-realization channel set
# =============================================================================

@dataclass(frozen=True)
class ChannelSet:
    """All channels of one realization plus the per-tech noise variances."""

    wifi: np.ndarray        # (K, M) complex
    lifi: np.ndarray        # (K, L) real, entries >= 0
    noise_wifi: float       # sigma^2 in W
    noise_lifi: float       # sigma^2 in A^2

    @property
    def num_users(self) -> int:
        return self.wifi.shape[0]


def build_channels(scenario: Scenario, seed=None) -> ChannelSet:
    """Realize every user's WiFi and LiFi channel (deterministic per seed)."""
    if seed is None:
        seed = scenario.config.seed
    k = scenario.num_users
    wifi = np.stack([wifi_channel(scenario, i, seed) for i in range(k)])
    lifi = np.stack([lifi_channel(scenario, i) for i in range(k)])
    return ChannelSet(
        wifi=wifi,
        lifi=lifi,
        noise_wifi=scenario.config.wifi_noise_w,
        noise_lifi=scenario.config.lifi_noise_a2,
    )


def dump_channels_rows(channels: ChannelSet):
    """Rows (user, tech, index, re, im) for the optional channel-dump CSV."""
    rows = []
    for k in range(channels.num_users):
        for idx, val in enumerate(channels.wifi[k]):
            rows.append((k, "wifi", idx, float(val.real), float(val.imag)))
        for idx, val in enumerate(channels.lifi[k]):
            rows.append((k, "lifi", idx, float(val), 0.0))
    return rows
