import math

import numpy as np
import pytest

from hyfi_ee.channel import (build_channels, lambertian_order, lifi_channel,
                             lifi_los_gain, wifi_channel, wifi_pathloss_db)
from hyfi_ee.scenario import LifiParams, ScenarioConfig, build_scenario, with_overrides

from conftest import make_scenario


# ---------------------------------------------------------------- WiFi path loss

def test_free_space_reference_value():
    # 20 log10(1) + 20 log10(2.4e9) - 147.5
    assert math.isclose(wifi_pathloss_db(1.0, 2.4e9, 5.0), 40.1042, abs_tol=1e-3)


def test_pathloss_continuous_at_breakpoint():
    inside = wifi_pathloss_db(5.0, 2.4e9, 5.0)
    outside = wifi_pathloss_db(5.0 + 1e-12, 2.4e9, 5.0)
    assert math.isclose(inside, outside, abs_tol=1e-6)


def test_pathloss_extra_slope_beyond_breakpoint():
    base = 20 * math.log10(10.0) + 20 * math.log10(2.4e9) - 147.5
    assert math.isclose(wifi_pathloss_db(10.0, 2.4e9, 5.0),
                        base + 35 * math.log10(2.0), rel_tol=1e-12)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        wifi_pathloss_db(0.0, 2.4e9, 5.0)


# ---------------------------------------------------------------- WiFi channel

def test_wifi_channel_los_component_inside_breakpoint():
    scenario = make_scenario(seed=2)
    # pick a user near the transmitter so the Ricean factor is 1
    user = int(np.argmin(np.linalg.norm(
        scenario.user_positions - scenario.wifi_position, axis=1)))
    distance = np.linalg.norm(scenario.user_positions[user] - scenario.wifi_position)
    if distance > scenario.config.wifi.breakpoint_m:
        pytest.skip("seed placed every user beyond the breakpoint")
    draws = np.stack([wifi_channel(scenario, user, seed) for seed in range(400)])
    loss = wifi_pathloss_db(distance, 2.4e9, 5.0)
    expected = math.sqrt(0.5) * 10 ** (-loss / 20)
    np.testing.assert_allclose(np.abs(draws.mean(axis=0)), expected, rtol=0.15)


def test_wifi_channel_mean_power_matches_pathloss():
    scenario = make_scenario(seed=2, antennas=4)
    user = 0
    distance = np.linalg.norm(scenario.user_positions[user] - scenario.wifi_position)
    loss = wifi_pathloss_db(distance, scenario.config.wifi.carrier_hz,
                            scenario.config.wifi.breakpoint_m)
    draws = np.stack([wifi_channel(scenario, user, seed)
                      for seed in range(10_000)])
    mean_power = float(np.mean(np.abs(draws) ** 2))
    assert math.isclose(mean_power, 10 ** (-loss / 10), rel_tol=0.05)


def test_wifi_channel_deterministic_per_seed():
    scenario = make_scenario(seed=3)
    a = wifi_channel(scenario, 1, seed=11)
    b = wifi_channel(scenario, 1, seed=11)
    c = wifi_channel(scenario, 1, seed=12)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_wifi_channel_rayleigh_beyond_breakpoint():
    # place the single user in a far corner: distance > 5 m kills the LoS term
    cfg = with_overrides(ScenarioConfig(), num_users=1)
    scenario = build_scenario(cfg, seed=0)
    scenario.user_positions[0][:] = (0.2, 0.2, 1.0)
    draws = np.stack([wifi_channel(scenario, 0, seed) for seed in range(4000)])
    # zero-mean scattered field: the empirical mean shrinks with the sample size
    mean_mag = np.abs(draws.mean(axis=0))
    rms = np.sqrt(np.mean(np.abs(draws) ** 2, axis=0))
    assert np.all(mean_mag < 0.1 * rms)


# ---------------------------------------------------------------- LiFi

def test_lambertian_order_value():
    assert math.isclose(lambertian_order(70.0), 0.6461, abs_tol=1e-4)


def test_on_axis_gain_closed_form():
    params = LifiParams()
    gain = lifi_los_gain([5, 5, 4], [5, 5, 1], params)
    order = lambertian_order(70.0)
    concentrator = 1.5 ** 2 / math.sin(math.radians(60)) ** 2
    assert math.isclose(concentrator, 3.0, rel_tol=1e-12)
    expected = ((order + 1) * 1e-4 * 1.0 * 0.54 / (2 * math.pi * 9.0)) * concentrator
    assert math.isclose(gain, expected, rel_tol=1e-12)


def test_gain_zero_outside_fov():
    params = LifiParams()
    # horizontal offset 3 m / height 0.8 m -> incidence angle ~75 deg > 60 deg
    assert lifi_los_gain([5, 5, 1.8], [8, 5, 1.0], params) == 0.0


def test_gain_rejects_coincident_positions():
    with pytest.raises(ValueError):
        lifi_los_gain([5, 5, 4], [5, 5, 4], LifiParams())


def test_gain_monotone_in_horizontal_distance():
    params = LifiParams()
    gains = [lifi_los_gain([5, 5, 4], [5 + dx, 5, 1], params)
             for dx in np.linspace(0, 1.5, 12)]
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_lifi_channel_center_symmetry():
    cfg = with_overrides(ScenarioConfig(), num_users=1, room_led_grid_count=3)
    scenario = build_scenario(cfg, seed=0)
    scenario.user_positions[0][:] = (5.0, 5.0, 1.0)
    gains = lifi_channel(scenario, 0).reshape(3, 3)
    np.testing.assert_allclose(gains, gains[::-1, :], rtol=1e-12)
    np.testing.assert_allclose(gains, gains[:, ::-1], rtol=1e-12)
    assert gains[1, 1] > 0


def test_lifi_channel_nonnegative_for_random_users():
    cfg = with_overrides(ScenarioConfig(), num_users=50, room_led_grid_count=4)
    for seed in range(20):
        scenario = build_scenario(cfg, seed=seed)
        for k in range(0, 50, 10):
            assert np.all(lifi_channel(scenario, k) >= 0)


def test_corner_user_narrow_fov_sees_no_far_leds():
    cfg = with_overrides(ScenarioConfig(), num_users=1, room_led_grid_count=3,
                         lifi_fov_deg=35.0)
    scenario = build_scenario(cfg, seed=0)
    scenario.user_positions[0][:] = (0.5, 0.5, 1.0)
    gains = lifi_channel(scenario, 0)
    # the far corner LED (8.33, 8.33) is 11 m away horizontally: far outside FoV
    assert gains[-1] == 0.0


# ---------------------------------------------------------------- channel set

def test_build_channels_shapes_and_noise(small_scenario):
    channels = build_channels(small_scenario, seed=1)
    assert channels.wifi.shape == (3, 8)
    assert channels.lifi.shape == (3, 9)
    assert math.isclose(channels.noise_wifi,
                        10 ** ((-174 - 30) / 10) * 10e6, rel_tol=1e-9)
    assert math.isclose(channels.noise_lifi, 1e-19 * 20e6, rel_tol=1e-12)
    assert np.all(channels.lifi >= 0)
