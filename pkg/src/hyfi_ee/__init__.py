"""Energy-efficient precoding and slice prediction for hybrid WiFi/LiFi downlinks."""

from .scenario import (ConfigError, LifiParams, RoomGeometry, Scenario,
                       ScenarioConfig, WifiParams, build_scenario, load_config,
                       place_leds, place_users, with_overrides)
from .channel import (ChannelSet, build_channels, lambertian_order,
                      lifi_channel, lifi_los_gain, wifi_channel,
                      wifi_pathloss_db)
from .rate_model import (LIFI, WIFI, RateBreakdown, Slice, SliceAssignment,
                         default_assignment, default_slices, dispersion,
                         fbl_rate, inverse_q, shannon_rate, sinr, user_rate)
from .power_model import (PowerBreakdown, check_led_constraint, hybrid_ee,
                          led_drive_bound, lifi_ac_power, wifi_power)
from .latency_model import (LatencyBudget, check_latency, mm1_wait,
                            total_latency)
from .convex_solver import (ConvexProgram, SocConstraint, SolveResult,
                            SolverOptions, solve)
from .sca_core import (ExpansionPoint, HybridProblem, InfeasibleProblemError,
                       OptimizationError, OptimizeOptions, PrecodingState,
                       assemble_subproblem, bilinear_linearization,
                       dispersion_upper_bound, initial_point, optimize_ee,
                       shannon_lower_bound, trust_region_constraints)
from .baselines import (BaselineKind, build_baseline, evaluate_precoder,
                        mrt_precoder, zf_precoder)

__version__ = "0.1.0"
