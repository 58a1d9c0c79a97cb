import math

import numpy as np
import pytest

from hyfi_ee.convex_solver import OPTIMAL, solve
from hyfi_ee.rate_model import LIFI, WIFI, Slice, default_assignment, default_slices
from hyfi_ee.sca_core import (DegenerateExpansionError, ExpansionPoint,
                              HybridProblem, InfeasibleProblemError,
                              OptimizeOptions, PrecodingState, VariableLayout,
                              assemble_subproblem, bilinear_linearization,
                              dispersion_upper_bound, initial_point,
                              latency_gate, optimize_ee, shannon_lower_bound,
                              trust_region_constraints)
from hyfi_ee.latency_model import LatencyBudget

from conftest import make_scenario, random_precoders


def _problem(seed=1, grid=3, users=3, antennas=8, slices=None):
    scenario = make_scenario(seed=seed, grid=grid, users=users, antennas=antennas)
    return HybridProblem(scenario, slices or default_slices(users),
                         channel_seed=seed)


def _state(problem, rng, power_scale=0.1):
    f_wifi, f_lifi = random_precoders(problem, rng, power_scale)
    return PrecodingState(
        f_wifi=f_wifi, f_lifi=f_lifi,
        ee_bound=problem.energy_efficiency(f_wifi, f_lifi),
        power_bound=problem.powers(f_wifi, f_lifi).total_w)


def _true_log_term(problem, tech, k, f_wifi, f_lifi):
    sig, intf = problem.link_quads(tech, k, f_wifi, f_lifi)
    return math.log1p(sig / intf)


def _true_sqrt_disp(problem, tech, k, f_wifi, f_lifi):
    sig, intf = problem.link_quads(tech, k, f_wifi, f_lifi)
    return math.sqrt(1.0 - (intf / (sig + intf)) ** 2)


# ---------------------------------------------------------------- tangency

def test_surrogates_tangent_at_expansion_point():
    rng = np.random.default_rng(0)
    problem = _problem()
    for _ in range(5):
        state = _state(problem, rng)
        expansion = ExpansionPoint(problem, state)
        for (tech, k), link in expansion.links.items():
            h = problem.h_norm[tech][k]
            surrogate = shannon_lower_bound(h, expansion, k, tech)
            value = surrogate.value(state.f_wifi, state.f_lifi, problem)
            truth = _true_log_term(problem, tech, k, state.f_wifi, state.f_lifi)
            assert math.isclose(value, truth, rel_tol=1e-9)
            if link.beta is not None:
                disp = dispersion_upper_bound(h, expansion, k, tech)
                dv = disp.value(state.f_wifi, state.f_lifi, problem)
                dt = _true_sqrt_disp(problem, tech, k, state.f_wifi, state.f_lifi)
                assert math.isclose(dv, dt, rel_tol=1e-9)


def test_shannon_bound_never_above_truth():
    rng = np.random.default_rng(1)
    problem = _problem()
    state = _state(problem, rng)
    expansion = ExpansionPoint(problem, state)
    for _ in range(300):
        g_w, g_l = random_precoders(problem, rng,
                                    power_scale=float(rng.uniform(0.01, 0.4)))
        for (tech, k), link in expansion.links.items():
            h = problem.h_norm[tech][k]
            surrogate = shannon_lower_bound(h, expansion, k, tech)
            value = surrogate.value(g_w, g_l, problem)
            truth = _true_log_term(problem, tech, k, g_w, g_l)
            assert value <= truth + 1e-9 * max(1.0, abs(truth))


def test_dispersion_bound_never_below_truth():
    rng = np.random.default_rng(2)
    problem = _problem()
    state = _state(problem, rng)
    expansion = ExpansionPoint(problem, state)
    fbl = [(t, k) for (t, k), l in expansion.links.items() if l.beta is not None]
    for _ in range(300):
        g_w, g_l = random_precoders(problem, rng,
                                    power_scale=float(rng.uniform(0.01, 0.4)))
        for tech, k in fbl:
            h = problem.h_norm[tech][k]
            disp = dispersion_upper_bound(h, expansion, k, tech)
            value = disp.value(g_w, g_l, problem)
            truth = _true_sqrt_disp(problem, tech, k, g_w, g_l)
            assert value >= truth - 1e-9


def test_shannon_bound_errors_on_dropped_link():
    problem = _problem()
    rng = np.random.default_rng(3)
    state = _state(problem, rng)
    zeroed = PrecodingState(state.f_wifi, np.zeros_like(state.f_lifi),
                            state.ee_bound, state.power_bound)
    expansion = ExpansionPoint(problem, zeroed)
    with pytest.raises(DegenerateExpansionError):
        shannon_lower_bound(problem.h_norm[LIFI][0], expansion, 0, LIFI)


# ---------------------------------------------------------------- bilinear

def test_bilinear_tangent_value():
    assert bilinear_linearization(2.0, 3.0)(2.0, 3.0) == 6.0


def test_bilinear_examples():
    rhs = bilinear_linearization(2.0, 3.0)
    assert rhs(3.0, 3.0) == 9.0
    assert rhs(3.0, 4.0) == 11.0 < 12.0


def test_bilinear_requires_positive_psi():
    with pytest.raises(ValueError):
        bilinear_linearization(1.0, 0.0)


# ---------------------------------------------------------------- trust regions

def test_trust_constraints_hold_at_expansion_point():
    rng = np.random.default_rng(4)
    problem = _problem()
    state = _state(problem, rng)
    expansion = ExpansionPoint(problem, state)
    for constraint in trust_region_constraints(expansion):
        margin = constraint.margin(state.f_wifi, state.f_lifi, problem)
        assert margin > 0  # strictly feasible with slack


def test_trust_quad_cap_violated_by_doubling():
    rng = np.random.default_rng(5)
    problem = _problem()
    state = _state(problem, rng, power_scale=0.2)
    expansion = ExpansionPoint(problem, state)
    doubled_w, doubled_l = 2 * state.f_wifi, 2 * state.f_lifi
    caps = [c for c in trust_region_constraints(expansion)
            if c.kind == "quad_cap" and c.tech == WIFI]
    # X+Y quadruples when the signal dominates the noise floor
    violated = [not c.satisfied(doubled_w, doubled_l, problem) for c in caps]
    assert any(violated)


def test_trust_positivity_violated_at_zero():
    rng = np.random.default_rng(6)
    problem = _problem()
    state = _state(problem, rng)
    expansion = ExpansionPoint(problem, state)
    zeros_w = np.zeros_like(state.f_wifi)
    zeros_l = np.zeros_like(state.f_lifi)
    for constraint in trust_region_constraints(expansion):
        if constraint.kind == "positivity":
            assert not constraint.satisfied(zeros_w, zeros_l, problem)


# ---------------------------------------------------------------- gradients

def _fd_grad(fn, f_wifi, f_lifi, tech, step=1e-7):
    """Central-difference gradient w.r.t. the real embedding of one tech."""
    base = f_wifi if tech == WIFI else f_lifi
    grads = np.zeros(base.size * (2 if tech == WIFI else 1))
    flat = base.ravel()
    idx = 0
    for i in range(flat.size):
        for part in ((1.0, 1j) if tech == WIFI else (1.0,)):
            delta = np.zeros_like(flat)
            delta[i] = part * step
            plus = flat + delta
            minus = flat - delta
            if tech == WIFI:
                up = fn(plus.reshape(base.shape), f_lifi)
                dn = fn(minus.reshape(base.shape), f_lifi)
            else:
                up = fn(f_wifi, plus.reshape(base.shape))
                dn = fn(f_wifi, minus.reshape(base.shape))
            grads[idx] = (up - dn) / (2 * step)
            idx += 1
    return grads


def test_surrogate_gradients_match_truth_at_expansion():
    rng = np.random.default_rng(7)
    problem = _problem()
    state = _state(problem, rng)
    expansion = ExpansionPoint(problem, state)
    for (tech, k), link in list(expansion.links.items())[:4]:
        h = problem.h_norm[tech][k]
        surrogate = shannon_lower_bound(h, expansion, k, tech)
        g_true = _fd_grad(lambda w, l: _true_log_term(problem, tech, k, w, l),
                          state.f_wifi, state.f_lifi, tech)
        g_surr = _fd_grad(lambda w, l: surrogate.value(w, l, problem),
                          state.f_wifi, state.f_lifi, tech)
        scale = max(np.linalg.norm(g_true), 1e-12)
        assert np.linalg.norm(g_true - g_surr) / scale < 1e-4
        if link.beta is not None:
            disp = dispersion_upper_bound(h, expansion, k, tech)
            g_true = _fd_grad(
                lambda w, l: _true_sqrt_disp(problem, tech, k, w, l),
                state.f_wifi, state.f_lifi, tech)
            g_surr = _fd_grad(lambda w, l: disp.value(w, l, problem),
                              state.f_wifi, state.f_lifi, tech)
            scale = max(np.linalg.norm(g_true), 1e-12)
            assert np.linalg.norm(g_true - g_surr) / scale < 1e-4


# ---------------------------------------------------------------- assembly

def test_variable_count_matches_dimension_pattern():
    problem = _problem(users=3, antennas=8, grid=3)
    layout = VariableLayout(problem)
    k, m, l = 3, 8, 9
    base = 2 * k * m + l * k + 2      # real WiFi embedding + real LiFi + phi,psi
    fbl_users = 2                     # URLLC + mMTC in the default mix
    slacks = 2 * k + 2 * 2 * fbl_users + l * k
    assert layout.n == base + slacks


def test_embb_only_has_no_dispersion_epigraphs():
    slices = [default_assignment(Slice.EMBB) for _ in range(3)]
    problem = _problem(slices=slices)
    layout = VariableLayout(problem)
    assert not layout.intf and not layout.intf_sq


def _floor_feasible_state(problem, rng, power_scale=0.001, tries=50):
    for _ in range(tries):
        state = _state(problem, rng, power_scale)
        if problem.rate_floors_met(problem.rates(state.f_wifi, state.f_lifi)):
            return state
    raise AssertionError("no floor-feasible random state found")


def test_assembled_solution_satisfies_independent_checks():
    rng = np.random.default_rng(11)
    problem = _problem(seed=2)
    state = _floor_feasible_state(problem, rng)
    program = assemble_subproblem(problem, state)
    result = solve(program)
    assert result.status == OPTIMAL
    assert float(np.max(program.residuals(result.x))) <= 1e-6

    layout = VariableLayout(problem)
    f_wifi, f_lifi = layout.decode(result.x)
    report = problem.constraint_report(f_wifi, f_lifi)
    assert report["c2"] <= 1e-6
    assert report["c3"] <= 1e-6
    # independent trust-region evaluator agrees with the emitted constraints
    # (margins are relative to each constraint's natural quadratic scale)
    expansion = ExpansionPoint(problem, state)
    for constraint in trust_region_constraints(expansion):
        margin = constraint.margin(f_wifi, f_lifi, problem)
        assert margin / constraint.link.quad_total >= -1e-6


def test_assembled_full_power_solution_salvageable():
    """At the full-power initialization the IPM may stop with reduced
    accuracy, but the returned iterate must still be primal feasible."""
    problem = _problem(seed=2)
    state = initial_point(problem.scenario, problem.slices, problem=problem)
    program = assemble_subproblem(problem, state)
    result = solve(program)
    assert result.x is not None
    assert float(np.max(program.residuals(result.x))) <= 1e-6


def test_assemble_rejects_nonpositive_expansion_scalars():
    problem = _problem()
    rng = np.random.default_rng(8)
    f_wifi, f_lifi = random_precoders(problem, rng)
    with pytest.raises(ValueError):
        assemble_subproblem(problem, PrecodingState(f_wifi, f_lifi, 1.0, 0.0))
    with pytest.raises(ValueError):
        assemble_subproblem(problem, PrecodingState(f_wifi, f_lifi, -1.0, 1.0))


# ---------------------------------------------------------------- initial point

def test_initial_point_single_user_matched_direction():
    problem = _problem(users=1, antennas=4, slices=[default_assignment(Slice.EMBB)])
    state = initial_point(problem.scenario, problem.slices, problem=problem)
    h = problem.h_norm[WIFI][0]
    f = state.f_wifi[:, 0]
    # full power on the matched direction: |h^H f| / (||h|| ||f||) -> 1
    alignment = abs(np.vdot(h, f)) / (np.linalg.norm(h) * np.linalg.norm(f))
    assert alignment > 0.999
    budget = 0.5 * problem.p_max_w
    assert math.isclose(np.sum(np.abs(f) ** 2) / problem.eta[WIFI], budget,
                        rel_tol=1e-6)
    rates = problem.rates(state.f_wifi, state.f_lifi)
    assert math.isclose(
        rates[0].wifi.shannon,
        math.log1p(problem.gamma(WIFI, 0, state.f_wifi, state.f_lifi)),
        rel_tol=1e-12)


def test_initial_point_within_budgets():
    for seed in (1, 2, 3):
        problem = _problem(seed=seed)
        state = initial_point(problem.scenario, problem.slices, problem=problem)
        powers = problem.powers(state.f_wifi, state.f_lifi)
        assert powers.wifi_w <= 0.5 * problem.p_max_w * (1 + 1e-9)
        assert powers.lifi_w <= 0.5 * problem.p_max_w * (1 + 1e-9)


def test_initial_point_fbl_rates_positive_over_scenarios():
    for seed in range(1, 21):
        problem = _problem(seed=seed)
        state = initial_point(problem.scenario, problem.slices, problem=problem)
        rates = problem.rates(state.f_wifi, state.f_lifi)
        for assignment, rate in zip(problem.slices, rates):
            if assignment.slice.finite_blocklength:
                assert rate.wifi.rate > 0
                assert rate.lifi.rate > 0


# ---------------------------------------------------------------- outer loop

def test_latency_gate_blocks_oversized_wait():
    slices = default_slices(3)
    with pytest.raises(InfeasibleProblemError, match="latency gate"):
        latency_gate(slices, LatencyBudget(wait_s=0.9e-3))


def test_optimize_monotone_and_feasible():
    scenario = make_scenario(seed=2)
    slices = default_slices(3)
    result = optimize_ee(scenario, slices, OptimizeOptions(channel_seed=2))
    ees = [row.ee for row in result.trace]
    assert all(b >= a for a, b in zip(ees, ees[1:]))
    problem = HybridProblem(scenario, slices, channel_seed=2)
    report = problem.constraint_report(result.state.f_wifi, result.state.f_lifi)
    assert report["c1"] <= 1e-6 and report["c2"] <= 1e-6 and report["c3"] <= 1e-6
    # the returned EE bound is exactly the EE of the returned precoders
    assert math.isclose(
        result.state.ee_bound,
        problem.energy_efficiency(result.state.f_wifi, result.state.f_lifi),
        rel_tol=1e-12)


def test_optimize_wifi_only_never_touches_lifi():
    scenario = make_scenario(seed=3)
    slices = default_slices(3)
    result = optimize_ee(scenario, slices,
                         OptimizeOptions(channel_seed=3, wifi_only=True))
    assert np.all(result.state.f_lifi == 0.0)
    assert result.trace[-1].power_lifi_w == 0.0


def test_optimize_trace_iterations_are_sequential():
    scenario = make_scenario(seed=4)
    result = optimize_ee(scenario, default_slices(3),
                         OptimizeOptions(channel_seed=4))
    iters = [row.iteration for row in result.trace]
    assert iters[0] == 0
    assert iters == sorted(iters)
