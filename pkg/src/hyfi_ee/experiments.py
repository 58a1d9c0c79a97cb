"""
Reproducible experiment pipelines emitting CSV artifacts.

Every pipeline is a pure function of (config, seeds): channels, placement,
and initialization derive deterministically from the seed, solver runs are
deterministic, and CSV rows are assembled in sorted order with full-precision
repr formatting, so reruns are byte-identical.  Cross-method comparisons
reuse the same channel realization per seed.  Sweep points are independent
and run on a small thread pool.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor

from .baselines import BaselineKind, build_baseline, evaluate_precoder
from .channel import build_channels
from .latency_model import LatencyBudget, mm1_wait, total_latency
from .rate_model import (Slice, default_assignment, default_slices,
                         SLICE_LATENCY_MAX_S)
from .sca_core import InfeasibleProblemError, OptimizeOptions, optimize_ee
from .scenario import ScenarioConfig, build_scenario, with_overrides

PLATEAU_REL_TOL = 1e-4
DEFAULT_WORKERS = 4


def emit_csv(rows, path, header) -> str:
    """Write rows with full-precision, locale-independent number formatting."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])
    return path


def _format_cell(cell):
    if isinstance(cell, bool):
        return "true" if cell else "false"
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


def _map_points(fn, points, workers):
    if workers <= 1:
        return [fn(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, points))


def _grid_config(base: ScenarioConfig, num_leds: int, num_users: int,
                 antennas: int) -> ScenarioConfig:
    grid = int(round(math.sqrt(num_leds)))
    if grid * grid != num_leds:
        raise ValueError(f"LED count {num_leds} is not a square grid")
    return with_overrides(base, room_led_grid_count=grid, num_users=num_users,
                          wifi_antennas=antennas)


def plateau_iteration(ee_values, rel_tol=PLATEAU_REL_TOL):
    """First iteration whose relative EE improvement drops below rel_tol."""
    for t in range(1, len(ee_values)):
        prev = ee_values[t - 1]
        if ee_values[t] - prev <= rel_tol * max(abs(prev), 1e-12):
            return t
    return len(ee_values) - 1 if len(ee_values) > 1 else 0


# =============================================================================
#  Convergence traces (per-iteration EE for several LED grids)
# =============================================================================

def run_convergence(out_dir, config: ScenarioConfig = None,
                    l_values=(9, 16, 25), num_users=3, antennas=8,
                    seeds=(1,), workers=DEFAULT_WORKERS):
    base = config or ScenarioConfig()

    def point(args):
        num_leds, seed = args
        cfg = _grid_config(base, num_leds, num_users, antennas)
        scenario = build_scenario(cfg, seed)
        result = optimize_ee(scenario, default_slices(num_users),
                             OptimizeOptions(channel_seed=seed))
        return args, result

    points = [(l, s) for l in l_values for s in seeds]
    results = dict(_map_points(point, points, workers))

    rows, summary = [], []
    for num_leds, seed in points:
        result = results[(num_leds, seed)]
        ee_values = [r.ee for r in result.trace]
        for r in result.trace:
            rows.append([num_leds, seed, r.iteration, r.ee, r.power_bound,
                         r.sum_rate_nats, r.power_wifi_w, r.power_lifi_w,
                         r.solver_status])
        summary.append([num_leds, seed, plateau_iteration(ee_values),
                        result.state.iteration, result.state.ee_bound,
                        result.stop_reason])

    trace_path = emit_csv(rows, os.path.join(out_dir, "convergence.csv"),
                          ["l_leds", "seed", "iteration", "ee_nats_per_joule",
                           "power_bound_w", "sum_rate_nats", "power_wifi_w",
                           "power_lifi_w", "solver_status"])
    summary_path = emit_csv(summary,
                            os.path.join(out_dir, "convergence_summary.csv"),
                            ["l_leds", "seed", "plateau_iteration",
                             "iterations_run", "final_ee", "stop_reason"])
    return {"trace": trace_path, "summary": summary_path, "results": results}


# =============================================================================
#  Proposed vs ZF vs MRT
# =============================================================================

def run_benchmark_comparison(out_dir, config: ScenarioConfig = None,
                             l_values=(9, 16, 25), num_users=3, antennas=8,
                             seeds=tuple(range(1, 21)),
                             workers=DEFAULT_WORKERS):
    base = config or ScenarioConfig()

    def point(args):
        num_leds, seed = args
        cfg = _grid_config(base, num_leds, num_users, antennas)
        scenario = build_scenario(cfg, seed)
        slices = default_slices(num_users)
        channels = build_channels(scenario, seed)
        entries = {}
        result = optimize_ee(scenario, slices,
                             OptimizeOptions(channel_seed=seed),
                             channels=channels)
        proposed = evaluate_precoder(result.state.f_wifi, result.state.f_lifi,
                                     scenario, slices, channels)
        entries["proposed"] = proposed
        for kind in (BaselineKind.ZF, BaselineKind.MRT):
            f_wifi, f_lifi = build_baseline(kind, channels, scenario)
            entries[kind.value] = evaluate_precoder(f_wifi, f_lifi, scenario,
                                                    slices, channels)
        return args, entries

    points = [(l, s) for l in l_values for s in seeds]
    results = dict(_map_points(point, points, workers))

    rows = []
    for num_leds, seed in points:
        for method in ("proposed", "ZF", "MRT"):
            ev = results[(num_leds, seed)][method]
            rows.append([num_leds, seed, method, ev.ee,
                         float(sum(r.total for r in ev.rates)),
                         ev.power_wifi_w + ev.power_lifi_w,
                         ev.rate_floors_met, ev.led_rows_met])
    path = emit_csv(rows, os.path.join(out_dir, "benchmark.csv"),
                    ["l_leds", "seed", "method", "ee_nats_per_joule",
                     "sum_rate_nats", "power_w", "rate_floors_met",
                     "led_rows_met"])
    return {"benchmark": path, "results": results}


# =============================================================================
#  EE vs transmission time (FBL slices)
# =============================================================================

def run_tx_time_sweep(out_dir, config: ScenarioConfig = None,
                      tt_values_ms=tuple(round(0.01 * i, 2) for i in range(1, 11)),
                      l_values=(9,), num_users=3, antennas=8,
                      seeds=tuple(range(1, 11)), workers=DEFAULT_WORKERS):
    base = config or ScenarioConfig()
    fbl_pattern = (Slice.URLLC, Slice.MMTC)

    def point(args):
        num_leds, tt_ms, seed = args
        cfg = _grid_config(base, num_leds, num_users, antennas)
        scenario = build_scenario(cfg, seed)
        slices = [default_assignment(fbl_pattern[k % 2], tx_time_s=tt_ms * 1e-3)
                  for k in range(num_users)]
        result = optimize_ee(scenario, slices,
                             OptimizeOptions(channel_seed=seed))
        return args, result

    points = [(l, tt, s) for l in l_values for tt in tt_values_ms
              for s in seeds]
    results = dict(_map_points(point, points, workers))

    rows = []
    for num_leds, tt_ms, seed in points:
        result = results[(num_leds, tt_ms, seed)]
        rows.append([num_leds, tt_ms, seed, result.state.ee_bound,
                     result.trace[-1].sum_rate_nats,
                     result.state.power_bound])
    path = emit_csv(rows, os.path.join(out_dir, "tx_time.csv"),
                    ["l_leds", "tt_ms", "seed", "ee_nats_per_joule",
                     "sum_rate_nats", "power_w"])
    return {"tx_time": path, "results": results}


# =============================================================================
#  M/M/1 waiting time sweep
# =============================================================================

def run_latency_experiment(out_dir,
                           service_rates_hz=(1500.0, 2000.0, 2500.0, 3000.0),
                           arrival_rates_hz=tuple(100.0 * i for i in range(1, 13)),
                           user_counts=(1, 2, 4, 8),
                           tx_time_s=0.05e-3):
    """Waiting time per (mu, per-user arrival rate, user count) grid point.

    Unstable points (total arrivals at or above the service rate) are
    flagged rather than dropped.  The URLLC column applies the composed
    end-to-end latency against the 1 ms ceiling.
    """
    rows = []
    for mu in service_rates_hz:
        for alpha in arrival_rates_hz:
            for users in user_counts:
                lam = alpha * users
                stable = lam < mu
                if stable:
                    wait = mm1_wait(mu, lam)
                    budget = LatencyBudget(wait_s=wait, tx_s=tx_time_s)
                    total = total_latency(budget)
                    urllc_ok = total <= SLICE_LATENCY_MAX_S[Slice.URLLC]
                    rows.append([mu, alpha, users, lam, wait, total,
                                 urllc_ok, True])
                else:
                    rows.append([mu, alpha, users, lam, math.inf, math.inf,
                                 False, False])
    path = emit_csv(rows, os.path.join(out_dir, "latency.csv"),
                    ["service_rate_hz", "arrival_rate_hz", "users",
                     "lambda_hz", "wait_s", "total_latency_s", "urllc_ok",
                     "stable"])
    return {"latency": path, "rows": rows}


# =============================================================================
#  Hybrid vs WiFi-only user scaling
# =============================================================================

def run_user_scaling(out_dir, config: ScenarioConfig = None,
                     user_counts=(2, 3, 4, 5, 6), num_leds=16, antennas=4,
                     seeds=(1, 2, 3), rate_min_nats=None,
                     workers=DEFAULT_WORKERS):
    """EE of the full hybrid vs a WiFi-only system over growing user counts.

    An optional common rate floor replaces the per-slice defaults; the floor
    is what anchors the optimum once the antenna array runs out of spatial
    degrees of freedom (K > M).
    """
    base = config or ScenarioConfig()
    pattern = (Slice.EMBB, Slice.URLLC, Slice.MMTC)

    def point(args):
        k_users, seed, wifi_only = args
        cfg = _grid_config(base, num_leds, k_users, antennas)
        scenario = build_scenario(cfg, seed)
        slices = [default_assignment(pattern[k % 3],
                                     rate_min_nats=rate_min_nats)
                  for k in range(k_users)]
        try:
            result = optimize_ee(scenario, slices,
                                 OptimizeOptions(channel_seed=seed,
                                                 wifi_only=wifi_only))
        except InfeasibleProblemError:
            return args, None
        return args, result

    points = [(k, s, w) for k in user_counts for s in seeds
              for w in (False, True)]
    results = dict(_map_points(point, points, workers))

    rows = []
    for k_users, seed, wifi_only in points:
        result = results[(k_users, seed, wifi_only)]
        system = "wifi_only" if wifi_only else "hybrid"
        if result is None:
            rows.append([k_users, seed, system, math.nan, math.nan, math.nan,
                         False])
            continue
        rows.append([k_users, seed, system, result.state.ee_bound,
                     result.trace[-1].sum_rate_nats, result.state.power_bound,
                     True])
    path = emit_csv(rows, os.path.join(out_dir, "user_scaling.csv"),
                    ["k_users", "seed", "system", "ee_nats_per_joule",
                     "sum_rate_nats", "power_w", "feasible"])
    return {"user_scaling": path, "results": results}


EXPERIMENTS = {
    "convergence": run_convergence,
    "benchmark": run_benchmark_comparison,
    "tx-time": run_tx_time_sweep,
    "latency": run_latency_experiment,
    "user-scaling": run_user_scaling,
}
