import numpy as np
import pytest

from hyfi_ee.channel import build_channels
from hyfi_ee.rate_model import default_slices
from hyfi_ee.scenario import ScenarioConfig, build_scenario, with_overrides


@pytest.fixture(scope="session")
def table_config():
    """Defaults mirror the simulation-parameter table."""
    return ScenarioConfig()


@pytest.fixture(scope="session")
def small_scenario(table_config):
    """K=3, M=8, 3x3 LED grid; fixed seed."""
    return build_scenario(table_config, seed=1)


@pytest.fixture(scope="session")
def small_channels(small_scenario):
    return build_channels(small_scenario, seed=1)


@pytest.fixture(scope="session")
def mixed_slices():
    return default_slices(3)


def make_scenario(seed=1, grid=3, users=3, antennas=8, **overrides):
    cfg = with_overrides(ScenarioConfig(), room_led_grid_count=grid,
                         num_users=users, wifi_antennas=antennas, **overrides)
    return build_scenario(cfg, seed)


def random_precoders(problem, rng, power_scale=0.1):
    """Random precoder pair with roughly `power_scale` of the budget."""
    m = problem.scenario.config.wifi.antennas
    k = problem.num_users
    f_wifi = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    f_wifi *= np.sqrt(power_scale * problem.p_max_w * problem.eta["wifi"] / 2
                      / np.sum(np.abs(f_wifi) ** 2))
    f_lifi = np.zeros((problem.num_leds, k))
    if problem.use_lifi:
        f_lifi = rng.standard_normal((problem.num_leds, k))
        f_lifi *= np.sqrt(power_scale * problem.p_max_w * problem.eta["lifi"] / 2
                          / np.sum(f_lifi ** 2))
        worst = np.max(np.sum(np.abs(f_lifi), axis=1))
        if worst > 0.95 * problem.led_bound:
            f_lifi *= 0.95 * problem.led_bound / worst
    return f_wifi, f_lifi
