"""
Room, transmitter, and user geometry for the hybrid WiFi/LiFi downlink.

The simulated environment is a rectangular room (length x width x height)
with an I x I LED grid on the ceiling plane, a single multi-antenna WiFi
transmitter at the room center, and K users dropped uniformly over the
floor area at a fixed receiver height (binomial point process).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml


class ConfigError(ValueError):
    """A scenario parameter violates its documented invariant."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


# =============================================================================
#  Parameter containers (defaults follow the simulation-parameter table)
# =============================================================================

@dataclass(frozen=True)
class RoomGeometry:
    """Rectangular room with an I x I ceiling LED grid."""

    length_m: float = 10.0
    width_m: float = 10.0
    height_m: float = 5.0
    led_grid_count: int = 3          # I LEDs per axis -> I^2 total
    transmitter_height_m: float | None = None  # defaults to height - 1

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0 or self.height_m <= 0:
            raise ConfigError("room dimensions must be positive")
        if self.led_grid_count < 1:
            raise ConfigError("led_grid_count must be >= 1")
        if self.transmitter_height_m is None:
            object.__setattr__(self, "transmitter_height_m", self.height_m - 1.0)
        if not 0 < self.transmitter_height_m < self.height_m:
            raise ConfigError(
                "transmitter_height_m must lie strictly inside (0, height_m)"
            )


@dataclass(frozen=True)
class WifiParams:
    antennas: int = 8                  # M
    carrier_hz: float = 2.4e9          # f_c
    breakpoint_m: float = 5.0          # d_BP
    shadow_in_db: float = 3.0          # std of the indoor shadow term
    shadow_out_db: float = 5.0         # std beyond the breakpoint
    shadowing: bool = False            # off by default for reproducible runs
    bandwidth_hz: float = 10e6
    noise_psd_w_hz: float = dbm_to_watts(-174.0)  # -174 dBm/Hz
    amp_efficiency: float = 0.5        # eta

    def __post_init__(self):
        if self.antennas < 1:
            raise ConfigError("antennas must be >= 1")
        if self.carrier_hz <= 0 or self.breakpoint_m <= 0:
            raise ConfigError("carrier_hz and breakpoint_m must be positive")
        if self.bandwidth_hz <= 0 or self.noise_psd_w_hz <= 0:
            raise ConfigError("bandwidth_hz and noise_psd_w_hz must be positive")
        if not 0 < self.amp_efficiency <= 1:
            raise ConfigError("amp_efficiency must lie in (0, 1]")
        if self.shadow_in_db < 0 or self.shadow_out_db < 0:
            raise ConfigError("shadow standard deviations must be >= 0")


@dataclass(frozen=True)
class LifiParams:
    semiangle_deg: float = 70.0        # LED half-intensity angle
    fov_deg: float = 60.0              # receiver field of view
    detector_area_m2: float = 1e-4     # 1 cm^2 photodiode
    filter_gain: float = 1.0
    responsivity_a_w: float = 0.54
    refractive_index: float = 1.5
    bandwidth_hz: float = 20e6
    noise_psd_a2_hz: float = 1e-19
    dc_bias_a: float = math.sqrt(6.0)  # x_DC
    max_current_a: float = 5.0         # I_max
    amp_efficiency: float = 0.5

    def __post_init__(self):
        if not 0 < self.semiangle_deg < 90:
            raise ConfigError("semiangle_deg must lie in (0, 90)")
        if not 0 < self.fov_deg <= 90:
            raise ConfigError("fov_deg must lie in (0, 90]")
        for name in ("detector_area_m2", "filter_gain", "responsivity_a_w",
                     "refractive_index", "bandwidth_hz", "noise_psd_a2_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.amp_efficiency <= 1:
            raise ConfigError("amp_efficiency must lie in (0, 1]")
        if not 0 < self.dc_bias_a < self.max_current_a:
            raise ConfigError("x_DC < I_max violated (need 0 < dc_bias_a < max_current_a)")


@dataclass(frozen=True)
class ScenarioConfig:
    room: RoomGeometry = field(default_factory=RoomGeometry)
    num_users: int = 3                 # K
    receiver_height_m: float = 1.0     # user plane (desk height)
    wifi: WifiParams = field(default_factory=WifiParams)
    lifi: LifiParams = field(default_factory=LifiParams)
    p_max_w: float = dbm_to_watts(38.0)
    seed: int = 1

    def __post_init__(self):
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if not 0 <= self.receiver_height_m < self.room.height_m:
            raise ConfigError("receiver_height_m must lie in [0, room height)")
        if self.receiver_height_m >= self.room.transmitter_height_m:
            raise ConfigError("receiver_height_m must be below the transmitter plane")
        if self.p_max_w <= 0:
            raise ConfigError("p_max_w must be positive")

    @property
    def wifi_noise_w(self) -> float:
        return self.wifi.noise_psd_w_hz * self.wifi.bandwidth_hz

    @property
    def lifi_noise_a2(self) -> float:
        return self.lifi.noise_psd_a2_hz * self.lifi.bandwidth_hz


@dataclass(frozen=True)
class Scenario:
    """A realized drop: geometry plus all transmitter/user positions."""

    config: ScenarioConfig
    led_positions: np.ndarray    # (I^2, 3)
    wifi_position: np.ndarray    # (3,)
    user_positions: np.ndarray   # (K, 3)

    @property
    def num_leds(self) -> int:
        return self.led_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]


# =============================================================================
#  Placement
# =============================================================================

def place_leds(room: RoomGeometry) -> np.ndarray:
    """LED grid: width/length split into I equal segments, LEDs at segment centers.

    Centering keeps every LED strictly inside the footprint and makes the grid
    symmetric under x <-> W - x and y <-> L - y.
    """
    count = room.led_grid_count
    xs = (np.arange(count) + 0.5) * (room.width_m / count)
    ys = (np.arange(count) + 0.5) * (room.length_m / count)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    z = np.full(count * count, room.transmitter_height_m)
    return np.column_stack([gx.ravel(), gy.ravel(), z])


def place_users(room: RoomGeometry, num_users: int, seed,
                receiver_height_m: float = 1.0) -> np.ndarray:
    """K i.i.d. uniform points over the floor rectangle at receiver height."""
    if num_users < 1:
        raise ConfigError("num_users must be >= 1")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 1.0, size=(num_users, 2))
    xy[:, 0] *= room.width_m
    xy[:, 1] *= room.length_m
    z = np.full(num_users, receiver_height_m)
    return np.column_stack([xy, z])


def build_scenario(config: ScenarioConfig, seed=None) -> Scenario:
    """Compose LED grid, center WiFi transmitter, and random user drop."""
    if seed is None:
        seed = config.seed
    leds = place_leds(config.room)
    wifi = np.array([
        config.room.width_m / 2.0,
        config.room.length_m / 2.0,
        config.room.transmitter_height_m,
    ])
    users = place_users(config.room, config.num_users, seed,
                        config.receiver_height_m)
    return Scenario(config=config, led_positions=leds,
                    wifi_position=wifi, user_positions=users)


# =============================================================================
#  Config file loading (YAML; keys mirror the dataclass fields)
# =============================================================================

_WIFI_KEYS = {f: f for f in (
    "antennas", "carrier_hz", "breakpoint_m", "shadow_in_db", "shadow_out_db",
    "shadowing", "bandwidth_hz", "amp_efficiency",
)}
_LIFI_KEYS = {f: f for f in (
    "semiangle_deg", "fov_deg", "detector_area_m2", "filter_gain",
    "responsivity_a_w", "refractive_index", "bandwidth_hz", "noise_psd_a2_hz",
    "dc_bias_a", "max_current_a", "amp_efficiency",
)}
_ROOM_KEYS = {f: f for f in (
    "length_m", "width_m", "height_m", "led_grid_count", "transmitter_height_m",
)}


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return dict(sec)


def _pick(sec: dict, mapping: dict, section_name: str) -> dict:
    out = {}
    for key in list(sec):
        if key not in mapping:
            raise ConfigError(f"unknown key '{key}' in config section '{section_name}'")
        out[mapping[key]] = sec.pop(key)
    return out


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a nested dict; missing fields take defaults."""
    raw = dict(raw or {})

    room_kwargs = _pick(_section(raw, "room"), _ROOM_KEYS, "room")
    wifi_sec = _section(raw, "wifi")
    if "noise_psd_dbm_hz" in wifi_sec:
        wifi_sec["noise_psd_w_hz"] = dbm_to_watts(float(wifi_sec.pop("noise_psd_dbm_hz")))
    wifi_keys = dict(_WIFI_KEYS, noise_psd_w_hz="noise_psd_w_hz")
    wifi_kwargs = _pick(wifi_sec, wifi_keys, "wifi")
    lifi_kwargs = _pick(_section(raw, "lifi"), _LIFI_KEYS, "lifi")

    users_sec = _section(raw, "users")
    power_sec = _section(raw, "power")
    top = {}
    if "count" in users_sec:
        top["num_users"] = int(users_sec.pop("count"))
    if "receiver_height_m" in users_sec:
        top["receiver_height_m"] = float(users_sec.pop("receiver_height_m"))
    if users_sec:
        raise ConfigError(f"unknown key '{next(iter(users_sec))}' in config section 'users'")
    if "p_max_dbm" in power_sec and "p_max_w" in power_sec:
        raise ConfigError("give either power.p_max_dbm or power.p_max_w, not both")
    if "p_max_dbm" in power_sec:
        top["p_max_w"] = dbm_to_watts(float(power_sec.pop("p_max_dbm")))
    if "p_max_w" in power_sec:
        top["p_max_w"] = float(power_sec.pop("p_max_w"))
    if power_sec:
        raise ConfigError(f"unknown key '{next(iter(power_sec))}' in config section 'power'")
    if "seed" in raw:
        top["seed"] = int(raw.pop("seed"))
    for key in ("room", "wifi", "lifi", "users", "power"):
        raw.pop(key, None)
    if raw:
        raise ConfigError(f"unknown top-level config key '{next(iter(raw))}'")

    return ScenarioConfig(
        room=RoomGeometry(**room_kwargs),
        wifi=WifiParams(**wifi_kwargs),
        lifi=LifiParams(**lifi_kwargs),
        **top,
    )


def load_config(path) -> ScenarioConfig:
    """Load a YAML scenario config; unknown keys and invariant breaks are errors."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    return config_from_dict(raw or {})


def with_overrides(config: ScenarioConfig, **kwargs) -> ScenarioConfig:
    """Functional update helper (e.g. with_overrides(cfg, num_users=4))."""
    room_updates = {k[len("room_"):]: v for k, v in kwargs.items() if k.startswith("room_")}
    wifi_updates = {k[len("wifi_"):]: v for k, v in kwargs.items() if k.startswith("wifi_")}
    lifi_updates = {k[len("lifi_"):]: v for k, v in kwargs.items() if k.startswith("lifi_")}
    top = {k: v for k, v in kwargs.items()
           if not k.startswith(("room_", "wifi_", "lifi_"))}
    if room_updates:
        top["room"] = replace(config.room, **room_updates)
    if wifi_updates:
        top["wifi"] = replace(config.wifi, **wifi_updates)
    if lifi_updates:
        top["lifi"] = replace(config.lifi, **lifi_updates)
    return replace(config, **top)
