"""
Sequential convex approximation for hybrid energy-efficiency precoding.

The fractional EE objective is lifted with two scalars (an EE bound phi and a
power bound psi) whose bilinear product is linearized at the current iterate.
Each outer iteration builds concave lower bounds on the Shannon log terms,
convex upper bounds on the dispersion square roots, and trust-region
constraints that keep the surrogates valid, then solves one second-order-cone
program.  Accepted iterates keep the power and LED-drive constraints feasible
and never decrease the true system EE.

Both technologies share one surrogate core: LiFi quantities enter scaled by
e (signal quadratic) and 2*pi (interference-plus-noise quadratic), which
turns the LiFi log term ln(1 + (e/2pi) X/Y) into the WiFi form ln(1 + X'/Y').

All SINR math runs on noise-normalized channels (h / sigma), so the noise
variance is 1 in solver units while precoders stay in physical units.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet, build_channels
from .convex_solver import (ConvexProgram, SocConstraint, SolverOptions,
                            OPTIMAL, INFEASIBLE, solve)
from .latency_model import LatencyBudget, check_latency, total_latency
from .power_model import (PowerBreakdown, check_led_constraint, hybrid_ee,
                          led_drive_bound, lifi_ac_power, wifi_power)
from .rate_model import (LIFI, WIFI, RateBreakdown, SliceAssignment, inverse_q,
                         user_rate)
from .scenario import Scenario

E_CONST = math.e
TWO_PI = 2.0 * math.pi

# Strict positivity margin for the linearized trust constraints, in
# noise-normalized SINR units (sigma^2 = 1 after channel scaling).
POSITIVITY_MARGIN = 1e-8


class OptimizationError(RuntimeError):
    """The SCA loop could not produce a usable iterate."""


class InfeasibleProblemError(OptimizationError):
    """No feasible precoding exists for the requested constraints."""


class DegenerateExpansionError(OptimizationError):
    """An expansion point has a zero signal term on an active link."""


# =============================================================================
#  Problem container
# =============================================================================

@dataclass(frozen=True)
class TechModel:
    """Per-technology constants of the surrogate machinery."""

    name: str
    sig_scale: float      # multiplies the signal quadratic X
    noise_scale: float    # multiplies the interference-plus-noise quadratic Y
    rate_factor: float    # nats/s per unit log term (BW or BW/2)
    is_complex: bool


class HybridProblem:
    """Static data of one optimization instance (channels frozen)."""

    def __init__(self, scenario: Scenario, slices, channels: ChannelSet = None,
                 channel_seed=None, wifi_only: bool = False):
        cfg = scenario.config
        if len(slices) != scenario.num_users:
            raise ValueError("one slice assignment per user is required")
        if channels is None:
            channels = build_channels(scenario, channel_seed)
        self.scenario = scenario
        self.slices = list(slices)
        self.channels = channels
        self.num_users = scenario.num_users
        self.use_lifi = (not wifi_only) and channels.lifi.shape[1] > 0

        self.tech = {
            WIFI: TechModel(WIFI, 1.0, 1.0, cfg.wifi.bandwidth_hz, True),
        }
        # Noise-normalized channels: SINR denominators become (interf + 1).
        self.h_norm = {WIFI: channels.wifi / math.sqrt(channels.noise_wifi)}
        if self.use_lifi:
            self.tech[LIFI] = TechModel(LIFI, E_CONST, TWO_PI,
                                        0.5 * cfg.lifi.bandwidth_hz, False)
            self.h_norm[LIFI] = channels.lifi / math.sqrt(channels.noise_lifi)

        self.p_max_w = cfg.p_max_w
        self.eta = {WIFI: cfg.wifi.amp_efficiency, LIFI: cfg.lifi.amp_efficiency}
        self.led_bound = led_drive_bound(cfg.lifi.dc_bias_a, cfg.lifi.max_current_a)
        self.num_leds = channels.lifi.shape[1]

        # Dispersion penalty coefficient per (tech, user); 0 for eMBB.
        self.chi = {name: np.zeros(self.num_users) for name in self.tech}
        self.blocklength = {name: np.zeros(self.num_users, dtype=int)
                            for name in self.tech}
        for k, assignment in enumerate(self.slices):
            if not assignment.slice.finite_blocklength:
                continue
            qinv = inverse_q(assignment.error_prob)
            for name, model in self.tech.items():
                bw = cfg.wifi.bandwidth_hz if name == WIFI else cfg.lifi.bandwidth_hz
                length = assignment.blocklength(bw)
                self.blocklength[name][k] = length
                half = 1.0 if name == WIFI else math.sqrt(0.5)
                self.chi[name][k] = qinv * half / math.sqrt(length)

        # Links with an identically-zero channel can carry no rate and are
        # excluded from the surrogate machinery (e.g. a user outside every
        # LED's field of view).
        self.active = {name: np.linalg.norm(self.h_norm[name], axis=1) > 0
                       for name in self.tech}

    # ---- true (non-surrogate) evaluation -----------------------------------

    def pair_gains(self, tech: str, k: int, f_wifi, f_lifi) -> np.ndarray:
        h = self.h_norm[tech][k]
        if tech == WIFI:
            return np.conj(h) @ f_wifi
        return h @ f_lifi

    def link_quads(self, tech: str, k: int, f_wifi, f_lifi):
        """Scaled signal and interference-plus-noise quadratics (X', Y')."""
        model = self.tech[tech]
        power = np.abs(self.pair_gains(tech, k, f_wifi, f_lifi)) ** 2
        sig = model.sig_scale * float(power[k])
        intf = model.noise_scale * (float(power.sum() - power[k]) + 1.0)
        return sig, intf

    def gamma(self, tech: str, k: int, f_wifi, f_lifi) -> float:
        if tech not in self.tech or not self.active[tech][k]:
            return 0.0
        power = np.abs(self.pair_gains(tech, k, f_wifi, f_lifi)) ** 2
        return float(power[k]) / (float(power.sum() - power[k]) + 1.0)

    def rates(self, f_wifi, f_lifi) -> list[RateBreakdown]:
        cfg = self.scenario.config
        out = []
        for k, assignment in enumerate(self.slices):
            g_w = self.gamma(WIFI, k, f_wifi, f_lifi)
            g_l = self.gamma(LIFI, k, f_wifi, f_lifi) if self.use_lifi else 0.0
            out.append(user_rate(assignment, g_w, g_l,
                                 cfg.wifi.bandwidth_hz, cfg.lifi.bandwidth_hz))
        return out

    def powers(self, f_wifi, f_lifi) -> PowerBreakdown:
        p_w = wifi_power(f_wifi, self.eta[WIFI])
        p_l = lifi_ac_power(f_lifi, self.eta[LIFI]) if self.use_lifi else 0.0
        return PowerBreakdown(p_w, p_l)

    def energy_efficiency(self, f_wifi, f_lifi) -> float:
        return hybrid_ee(self.rates(f_wifi, f_lifi), self.powers(f_wifi, f_lifi))

    def rate_floors_met(self, rates, tol: float = 0.0) -> bool:
        return all(r.total >= s.rate_min_nats - tol
                   for r, s in zip(rates, self.slices))

    def constraint_report(self, f_wifi, f_lifi):
        """C1/C2/C3 residuals at a concrete precoder pair (<= 0 is feasible)."""
        rates = self.rates(f_wifi, f_lifi)
        powers = self.powers(f_wifi, f_lifi)
        c1 = max(s.rate_min_nats - r.total
                 for r, s in zip(rates, self.slices))
        c2 = powers.total_w - self.p_max_w
        if self.use_lifi:
            c3 = -check_led_constraint(f_lifi, self.led_bound).margin
        else:
            c3 = -self.led_bound
        return {"c1": c1, "c2": c2, "c3": c3}


# =============================================================================
#  State, expansion point, and surrogate expressions
# =============================================================================

@dataclass(frozen=True)
class PrecodingState:
    """One accepted iterate of the outer loop."""

    f_wifi: np.ndarray             # (M, K) complex
    f_lifi: np.ndarray             # (L, K) real; zero columns when LiFi is off
    ee_bound: float                # phi: EE value certified at this iterate
    power_bound: float             # psi: total transmit power at this iterate
    iteration: int = 0


@dataclass(frozen=True)
class LinkExpansion:
    """Cached per-link values at the expansion point (scaled units)."""

    gains: np.ndarray          # h_k paired with every user's precoder
    sig_q: float               # X' at the iterate
    int_q: float               # Y' at the iterate
    gamma_eff: float           # X'/Y'
    log_term: float            # ln(1 + X'/Y')
    disp: float                # channel dispersion D at the iterate
    beta: float | None = None  # 1 / (2 sqrt(D)); None when no FBL penalty
    alpha: float | None = None
    c_tau: float | None = None     # 4 Y' / (X'+Y')^2
    c_sum: float | None = None     # 2 Y'^2 / (X'+Y')^3
    c_sq: float | None = None      # 1 / (X'+Y')^2

    @property
    def quad_total(self) -> float:
        return self.sig_q + self.int_q

    @property
    def shannon_b_coef(self) -> float:
        return self.sig_q / (self.int_q * (self.sig_q + self.int_q))


class ExpansionPoint:
    """All per-link caches plus the (phi, psi) pair of the iterate.

    Links whose effective SINR has collapsed below `drop_threshold` are
    dropped: the iterate has de-powered them, their rate contribution is
    negligible, and the dispersion surrogate would degenerate (beta -> inf
    as D -> 0).  Dropped links get pinned to zero in the subproblem.
    """

    def __init__(self, problem: HybridProblem, state: PrecodingState,
                 techs=None, with_dispersion: bool = True,
                 drop_threshold: float = 1e-6):
        self.problem = problem
        self.phi_t = state.ee_bound
        self.psi_t = state.power_bound
        self.links: dict[tuple[str, int], LinkExpansion] = {}
        self.dropped: list[tuple[str, int]] = []
        for tech, model in problem.tech.items():
            if techs is not None and tech not in techs:
                continue
            for k in range(problem.num_users):
                if not problem.active[tech][k]:
                    continue
                gains = problem.pair_gains(tech, k, state.f_wifi, state.f_lifi)
                power = np.abs(gains) ** 2
                sig_q = model.sig_scale * float(power[k])
                int_q = model.noise_scale * (float(power.sum() - power[k]) + 1.0)
                gamma_eff = sig_q / int_q
                if gamma_eff <= drop_threshold:
                    self.dropped.append((tech, k))
                    continue
                disp = 1.0 - 1.0 / (1.0 + gamma_eff) ** 2
                extras = {}
                if with_dispersion and problem.chi[tech][k] > 0:
                    if disp <= 0.0:
                        raise DegenerateExpansionError(
                            f"zero dispersion for FBL user {k} on {tech}")
                    total = sig_q + int_q
                    beta = 1.0 / (2.0 * math.sqrt(disp))
                    extras = dict(
                        beta=beta,
                        alpha=math.sqrt(disp) / 2.0 + beta,
                        c_tau=4.0 * int_q / total ** 2,
                        c_sum=2.0 * int_q ** 2 / total ** 3,
                        c_sq=1.0 / total ** 2,
                    )
                self.links[(tech, k)] = LinkExpansion(
                    gains=gains, sig_q=sig_q, int_q=int_q, gamma_eff=gamma_eff,
                    log_term=math.log1p(gamma_eff), disp=disp, **extras)

    def link(self, tech: str, k: int) -> LinkExpansion:
        try:
            return self.links[(tech, k)]
        except KeyError:
            raise DegenerateExpansionError(
                f"link ({tech}, {k}) is inactive or dropped at this expansion point")


def _scaled_quads(problem, tech, k, f_wifi, f_lifi):
    return problem.link_quads(tech, k, f_wifi, f_lifi)


def _tau_value(problem, link: LinkExpansion, tech, k, f_wifi, f_lifi) -> float:
    """Affine tangent lower bound of the scaled interference quadratic Y'."""
    model = problem.tech[tech]
    gains = problem.pair_gains(tech, k, f_wifi, f_lifi)
    total = 1.0
    for j in range(problem.num_users):
        if j == k:
            continue
        a_t = link.gains[j]
        total += 2.0 * float(np.real(np.conj(a_t) * gains[j])) - abs(a_t) ** 2
    return model.noise_scale * total


@dataclass(frozen=True)
class ShannonSurrogate:
    """Concave lower bound on the log term: const + linear - b_coef*(X'+Y')."""

    tech: str
    k: int
    const: float               # S^t - gamma_eff^t
    lin_vec: np.ndarray        # pairs with f_k (complex for WiFi)
    b_coef: float

    def value(self, f_wifi, f_lifi, problem: HybridProblem) -> float:
        f_k = (f_wifi if self.tech == WIFI else f_lifi)[:, self.k]
        lin = float(np.real(np.vdot(self.lin_vec, f_k)))
        sig, intf = _scaled_quads(problem, self.tech, self.k, f_wifi, f_lifi)
        return self.const + lin - self.b_coef * (sig + intf)


@dataclass(frozen=True)
class DispersionSurrogate:
    """Convex upper bound on sqrt(D): alpha - beta*(c_tau*tau - c_sum*(X'+Y') - c_sq*Y'^2)."""

    tech: str
    k: int
    link: LinkExpansion

    def value(self, f_wifi, f_lifi, problem: HybridProblem) -> float:
        link = self.link
        sig, intf = _scaled_quads(problem, self.tech, self.k, f_wifi, f_lifi)
        tau = _tau_value(problem, link, self.tech, self.k, f_wifi, f_lifi)
        bracket = link.c_tau * tau - link.c_sum * (sig + intf) - link.c_sq * intf ** 2
        return link.alpha - link.beta * bracket


def shannon_lower_bound(h, expansion: ExpansionPoint, k: int, tech: str) -> ShannonSurrogate:
    """Build the concave Shannon surrogate of one link at the expansion point.

    `h` must be the noise-normalized channel the expansion was built with.
    """
    problem = expansion.problem
    model = problem.tech[tech]
    link = expansion.link(tech, k)
    a_t = link.gains[k]
    coeff = 2.0 * model.sig_scale / link.int_q
    h = np.asarray(h)
    # coeff * Re{conj(a_t) * (h . f)} == Re{vdot(coeff * a_t * h, f)}.
    lin_vec = coeff * a_t * h
    return ShannonSurrogate(
        tech=tech, k=k,
        const=link.log_term - link.gamma_eff,
        lin_vec=lin_vec,
        b_coef=link.shannon_b_coef,
    )


def dispersion_upper_bound(h, expansion: ExpansionPoint, k: int, tech: str) -> DispersionSurrogate:
    """Build the convex sqrt-dispersion surrogate of one FBL link."""
    link = expansion.link(tech, k)
    if link.beta is None:
        raise DegenerateExpansionError(
            f"dispersion surrogate requested for non-FBL link ({tech}, {k})")
    return DispersionSurrogate(tech=tech, k=k, link=link)


@dataclass(frozen=True)
class BilinearRhs:
    """First-order expansion of phi*psi around the iterate values."""

    phi_t: float
    psi_t: float

    def __call__(self, phi: float, psi: float) -> float:
        return (self.phi_t * self.psi_t
                + self.psi_t * (phi - self.phi_t)
                + self.phi_t * (psi - self.psi_t))


def bilinear_linearization(phi_t: float, psi_t: float) -> BilinearRhs:
    if psi_t <= 0:
        raise ValueError("psi_t must be positive")
    return BilinearRhs(phi_t, psi_t)


@dataclass(frozen=True)
class TrustConstraint:
    """One evaluable trust-region condition of the subproblem."""

    kind: str        # "positivity" | "quad_cap" | "interference_link"
    tech: str
    k: int
    link: LinkExpansion

    def margin(self, f_wifi, f_lifi, problem: HybridProblem) -> float:
        """Slack at a concrete precoder pair (>= 0 means satisfied)."""
        model = problem.tech[self.tech]
        if self.kind == "positivity":
            gains = problem.pair_gains(self.tech, self.k, f_wifi, f_lifi)
            a_t = self.link.gains[self.k]
            lin = 2.0 * float(np.real(np.conj(a_t) * gains[self.k]))
            value = model.sig_scale * (lin - abs(gains[self.k]) ** 2)
            return value - POSITIVITY_MARGIN
        sig, intf = _scaled_quads(problem, self.tech, self.k, f_wifi, f_lifi)
        if self.kind == "quad_cap":
            return 2.0 * self.link.quad_total - (sig + intf)
        tau = _tau_value(problem, self.link, self.tech, self.k, f_wifi, f_lifi)
        return (2.0 * self.link.quad_total / self.link.int_q) * tau - (sig + intf)

    def satisfied(self, f_wifi, f_lifi, problem: HybridProblem,
                  tol: float = 1e-12) -> bool:
        return self.margin(f_wifi, f_lifi, problem) >= -tol


def trust_region_constraints(expansion: ExpansionPoint) -> list[TrustConstraint]:
    """All trust conditions emitted into the subproblem, as evaluable checks."""
    out = []
    for (tech, k), link in expansion.links.items():
        out.append(TrustConstraint("positivity", tech, k, link))
        out.append(TrustConstraint("quad_cap", tech, k, link))
        out.append(TrustConstraint("interference_link", tech, k, link))
    return out


# =============================================================================
#  Canonical subproblem assembly
# =============================================================================

class VariableLayout:
    """Index map of the real decision vector of one subproblem.

    Per user: the complex WiFi precoder becomes a [Re; Im] block of 2M reals
    and the LiFi precoder an L-real block.  Slacks: one normalized quadratic
    epigraph q per active link, an interference epigraph y and its square u
    per FBL link, and one absolute-value slack per LiFi matrix entry.
    """

    def __init__(self, problem: HybridProblem, link_keys=None):
        self.problem = problem
        m = problem.scenario.config.wifi.antennas
        k_users = problem.num_users
        self.m, self.k_users = m, k_users
        self.num_leds = problem.num_leds if problem.use_lifi else 0

        off = 0
        self.f_wifi = off
        off += 2 * m * k_users
        self.f_lifi = off if problem.use_lifi else None
        if problem.use_lifi:
            off += self.num_leds * k_users
        self.phi = off
        off += 1
        self.psi = off
        off += 1
        self.quad = {}
        self.intf = {}
        self.intf_sq = {}
        for tech in problem.tech:
            for k in range(k_users):
                if link_keys is not None:
                    if (tech, k) not in link_keys:
                        continue
                elif not problem.active[tech][k]:
                    continue
                self.quad[(tech, k)] = off
                off += 1
                if problem.chi[tech][k] > 0:
                    self.intf[(tech, k)] = off
                    self.intf_sq[(tech, k)] = off + 1
                    off += 2
        self.abs_lifi = off if problem.use_lifi else None
        if problem.use_lifi:
            off += self.num_leds * k_users
        self.n = off

    def wifi_re(self, k):
        base = self.f_wifi + 2 * self.m * k
        return slice(base, base + self.m)

    def wifi_im(self, k):
        base = self.f_wifi + 2 * self.m * k + self.m
        return slice(base, base + self.m)

    def lifi_col(self, k):
        base = self.f_lifi + self.num_leds * k
        return slice(base, base + self.num_leds)

    def abs_entry(self, led, k):
        return self.abs_lifi + self.num_leds * k + led

    def decode(self, x):
        f_wifi = np.empty((self.m, self.k_users), dtype=complex)
        for k in range(self.k_users):
            f_wifi[:, k] = x[self.wifi_re(k)] + 1j * x[self.wifi_im(k)]
        if self.problem.use_lifi:
            f_lifi = np.column_stack([x[self.lifi_col(k)]
                                      for k in range(self.k_users)])
        else:
            f_lifi = np.zeros((self.problem.num_leds, self.k_users))
        return f_wifi, f_lifi


class _RowBuilder:
    """Accumulates one affine expression coeff.x + const over the layout."""

    def __init__(self, layout: VariableLayout):
        self.layout = layout
        self.coeffs = np.zeros(layout.n)
        self.const = 0.0

    def add_pair(self, tech, k_user, j, scalar):
        """Add Re{conj(scalar) * (h_k . f_j)} (WiFi) or scalar*(h_k . f_j) (LiFi)."""
        layout = self.layout
        h = layout.problem.h_norm[tech][k_user]
        if tech == WIFI:
            w = np.conj(scalar) * np.conj(h)  # coefficient of f on Re part
            self.coeffs[layout.wifi_re(j)] += np.real(w)
            self.coeffs[layout.wifi_im(j)] += -np.imag(w)
        else:
            self.coeffs[layout.lifi_col(j)] += scalar * h

    def add_var(self, idx, coeff):
        self.coeffs[idx] += coeff


def _pair_rows(layout: VariableLayout, tech, k_user, j, weight=1.0):
    """Real row(s) of the inner product h_k . f_j for SOC vector blocks."""
    h = layout.problem.h_norm[tech][k_user]
    if tech == WIFI:
        re_row = np.zeros(layout.n)
        im_row = np.zeros(layout.n)
        re_row[layout.wifi_re(j)] = weight * np.real(h)
        re_row[layout.wifi_im(j)] = weight * np.imag(h)
        im_row[layout.wifi_re(j)] = -weight * np.imag(h)
        im_row[layout.wifi_im(j)] = weight * np.real(h)
        return [re_row, im_row]
    row = np.zeros(layout.n)
    row[layout.lifi_col(j)] = weight * h
    return [row]


def _quad_le_affine(rows, affine_coeffs, affine_const, scale: float = 1.0):
    """SOC for ||v||^2 <= a with v the stacked rows and a an affine expression.

    `scale` is the natural magnitude of a at the expansion point; dividing
    the whole constraint by it keeps the cone entries O(1) for the solver.
    """
    s = max(scale, 1e-300)
    rs = 1.0 / math.sqrt(s)
    coeffs = np.asarray(affine_coeffs) / s
    const = affine_const / s
    mat = np.vstack([2.0 * rs * np.asarray(r) for r in rows] + [-coeffs])
    vec = np.concatenate([np.zeros(len(rows)), [1.0 - const]])
    return SocConstraint(A=mat, b=vec, c=coeffs, d=const + 1.0)


def _rate_expression(problem, layout, expansion, tech, k):
    """Affine surrogate of the user-k rate on one tech (nats/s) over the layout."""
    model = problem.tech[tech]
    link = expansion.link(tech, k)
    rf = model.rate_factor
    chi = problem.chi[tech][k]
    row = _RowBuilder(layout)

    # Shannon surrogate: const + A(f_k) - b_coef * (X'+Y'); the quadratic is
    # replaced by its normalized epigraph q >= (X'+Y')/(X'+Y')^t.
    row.const += rf * (link.log_term - link.gamma_eff)
    row.add_pair(tech, k, k, rf * (2.0 * model.sig_scale / link.int_q) * link.gains[k])
    q_coef = -rf * link.shannon_b_coef * link.quad_total

    u_coef = 0.0
    if chi > 0:
        # Penalty: -chi * sqrt(D) surrogate.  tau stays affine; the quadratic
        # and quartic terms ride on the q and u epigraphs.
        row.const += -rf * chi * link.alpha
        tau_const = 1.0
        for j in range(problem.num_users):
            if j == k:
                continue
            a_t = link.gains[j]
            tau_const -= abs(a_t) ** 2
            row.add_pair(tech, k, j,
                         rf * chi * link.beta * link.c_tau
                         * model.noise_scale * 2.0 * a_t)
        row.const += rf * chi * link.beta * link.c_tau * model.noise_scale * tau_const
        q_coef += -rf * chi * link.beta * link.c_sum * link.quad_total
        u_coef = -rf * chi * link.beta * link.c_sq * link.int_q ** 2

    row.add_var(layout.quad[(tech, k)], q_coef)
    if u_coef:
        row.add_var(layout.intf_sq[(tech, k)], u_coef)
    return row


def _tau_row(problem, layout, link, tech, k):
    """Affine tangent lower bound of Y' as a row over the layout."""
    model = problem.tech[tech]
    row = _RowBuilder(layout)
    tau_const = 1.0
    for j in range(problem.num_users):
        if j == k:
            continue
        a_t = link.gains[j]
        tau_const -= abs(a_t) ** 2
        row.add_pair(tech, k, j, model.noise_scale * 2.0 * a_t)
    row.const += model.noise_scale * tau_const
    return row


def assemble_subproblem(problem: HybridProblem,
                        state: PrecodingState) -> ConvexProgram:
    """Build the canonical SOCP of one outer iteration around `state`.

    The EE and power scalars enter the program normalized by their expansion
    values (phi = phi_t * x[phi], psi = psi_t * x[psi]), which keeps every
    column near unit scale regardless of the instance's EE magnitude.
    """
    program, _, _ = _assemble(problem, state)
    return program


def _assemble(problem: HybridProblem, state: PrecodingState):
    if state.power_bound <= 0:
        raise ValueError("power bound of the expansion state must be positive")
    if state.ee_bound <= 0:
        raise ValueError("EE bound of the expansion state must be positive")
    expansion = ExpansionPoint(problem, state)
    layout = VariableLayout(problem, set(expansion.links))
    n = layout.n
    lin_rows, lin_rhs = [], []
    socs = []

    def add_row(coeffs, rhs):
        lin_rows.append(coeffs)
        lin_rhs.append(rhs)

    # Dropped links stay de-powered: pin their precoder columns to zero.
    for tech, k in expansion.dropped:
        if tech == WIFI:
            pins = (list(np.arange(*layout.wifi_re(k).indices(n)))
                    + list(np.arange(*layout.wifi_im(k).indices(n))))
        else:
            pins = list(np.arange(*layout.lifi_col(k).indices(n)))
            pins += [layout.abs_entry(led, k) for led in range(layout.num_leds)]
        for idx in pins:
            for sign in (1.0, -1.0):
                row = np.zeros(n)
                row[idx] = sign
                add_row(row, 0.0)

    # --- power constraints: C2 (<= P_max) and C7 (<= psi) -------------------
    power_rows = []
    for k in range(problem.num_users):
        w_weight = 1.0 / math.sqrt(problem.eta[WIFI])
        power_rows += _identity_rows(n, layout.wifi_re(k), w_weight)
        power_rows += _identity_rows(n, layout.wifi_im(k), w_weight)
        if problem.use_lifi:
            power_rows += _identity_rows(n, layout.lifi_col(k),
                                         1.0 / math.sqrt(problem.eta[LIFI]))
    power_mat = np.vstack(power_rows)
    socs.append(SocConstraint(A=power_mat, b=np.zeros(power_mat.shape[0]),
                              c=np.zeros(n), d=math.sqrt(problem.p_max_w)))
    psi_coeffs = np.zeros(n)
    psi_coeffs[layout.psi] = expansion.psi_t
    socs.append(_quad_le_affine(list(power_mat), psi_coeffs, 0.0,
                                scale=expansion.psi_t))

    # psi must stay positive for the next linearization.
    row = np.zeros(n)
    row[layout.psi] = -1.0
    add_row(row, -1e-9)

    # --- C3: per-LED l1 row bounds via absolute-value slacks ----------------
    if problem.use_lifi:
        for k in range(problem.num_users):
            col = layout.lifi_col(k)
            for led in range(layout.num_leds):
                idx = col.start + led
                t_idx = layout.abs_entry(led, k)
                row = np.zeros(n)
                row[idx], row[t_idx] = 1.0, -1.0
                add_row(row, 0.0)
                row = np.zeros(n)
                row[idx], row[t_idx] = -1.0, -1.0
                add_row(row, 0.0)
        for led in range(layout.num_leds):
            row = np.zeros(n)
            for k in range(problem.num_users):
                row[layout.abs_entry(led, k)] = 1.0
            add_row(row, problem.led_bound)

    # --- per-link epigraphs, positivity, and trust regions ------------------
    for (tech, k), link in expansion.links.items():
        model = problem.tech[tech]
        # q >= (X'+Y') / (X'+Y')^t  (normalized total-quadratic epigraph)
        vec_rows = []
        for j in range(problem.num_users):
            weight = math.sqrt(model.sig_scale if j == k else model.noise_scale)
            vec_rows.extend(_pair_rows(layout, tech, k, j, weight))
        a_coeffs = np.zeros(n)
        a_coeffs[layout.quad[(tech, k)]] = link.quad_total
        socs.append(_quad_le_affine(vec_rows, a_coeffs, -model.noise_scale,
                                    scale=link.quad_total))

        # Positivity trust region: |h.f_k|^2 <= 2 Re{conj(a_t)(h.f_k)} - delta.
        pos = _RowBuilder(layout)
        pos.add_pair(tech, k, k, 2.0 * link.gains[k])
        socs.append(_quad_le_affine(_pair_rows(layout, tech, k, k),
                                    pos.coeffs,
                                    -POSITIVITY_MARGIN / model.sig_scale,
                                    scale=link.sig_q / model.sig_scale))

        # Quad cap: q <= 2 (in normalized units).
        row = np.zeros(n)
        row[layout.quad[(tech, k)]] = 1.0
        add_row(row, 2.0)

        # Interference-linked cap: (X'+Y') <= (2 (X'+Y')^t / Y'^t) tau.
        tau = _tau_row(problem, layout, link, tech, k)
        row = np.zeros(n)
        row[layout.quad[(tech, k)]] = 1.0
        row -= (2.0 / link.int_q) * tau.coeffs
        add_row(row, (2.0 / link.int_q) * tau.const)

        if (tech, k) in layout.intf:
            # y >= Y' / Y'^t and u >= y^2.
            vec_rows = []
            for j in range(problem.num_users):
                if j == k:
                    continue
                vec_rows.extend(_pair_rows(layout, tech, k, j,
                                           math.sqrt(model.noise_scale)))
            a_coeffs = np.zeros(n)
            a_coeffs[layout.intf[(tech, k)]] = link.int_q
            if vec_rows:
                socs.append(_quad_le_affine(vec_rows, a_coeffs, -model.noise_scale,
                                            scale=link.int_q))
            else:
                row = np.zeros(n)
                row[layout.intf[(tech, k)]] = -link.int_q
                add_row(row, -model.noise_scale)
            y_row = np.zeros(n)
            y_row[layout.intf[(tech, k)]] = 1.0
            u_coeffs = np.zeros(n)
            u_coeffs[layout.intf_sq[(tech, k)]] = 1.0
            socs.append(_quad_le_affine([y_row], u_coeffs, 0.0))

    # --- rate constraints ----------------------------------------------------
    rate_rows = {}
    for (tech, k) in expansion.links:
        rate_rows[(tech, k)] = _rate_expression(problem, layout, expansion, tech, k)

    # Sum-rate >= linearized phi*psi  (row scaled to O(1); with the
    # normalized scalars the linearization reads phi_t psi_t (x_phi + x_psi - 1)).
    total = _RowBuilder(layout)
    for row in rate_rows.values():
        total.coeffs += row.coeffs
        total.const += row.const
    product = expansion.phi_t * expansion.psi_t
    scale = 1.0 / product
    coeffs = -total.coeffs.copy()
    coeffs[layout.phi] += product
    coeffs[layout.psi] += product
    add_row(scale * coeffs, scale * (total.const + product))

    # Per-user rate floors.
    for k, assignment in enumerate(problem.slices):
        floor = assignment.rate_min_nats
        parts = [rate_rows[(tech, k)] for tech in problem.tech
                 if (tech, k) in rate_rows]
        if not parts:
            if floor > 0:
                raise InfeasibleProblemError(
                    f"user {k} has no active link but a positive rate floor")
            continue
        coeffs = -sum(p.coeffs for p in parts)
        const = sum(p.const for p in parts)
        scale = 1.0 / max(floor, 1.0)
        add_row(scale * coeffs, scale * (const - floor))

    objective = np.zeros(n)
    objective[layout.phi] = 1.0
    a_ub, b_ub = _normalize_rows(np.array(lin_rows), np.array(lin_rhs))
    program = ConvexProgram(n=n, objective=objective, a_ub=a_ub, b_ub=b_ub,
                            socs=socs)
    return program, layout, expansion


def _normalize_rows(a_ub, b_ub):
    """Scale each inequality row to unit infinity norm (pure row scaling)."""
    norms = np.max(np.abs(a_ub), axis=1)
    norms[norms == 0] = 1.0
    return a_ub / norms[:, None], b_ub / norms


def _identity_rows(n, index_slice, weight=1.0):
    """One row per variable in the slice, `weight` on its own column."""
    idx = np.arange(*index_slice.indices(n))
    block = np.zeros((idx.size, n))
    block[np.arange(idx.size), idx] = weight
    return list(block)


def subproblem_layout(problem: HybridProblem) -> VariableLayout:
    return VariableLayout(problem)


# =============================================================================
#  Initial feasible point (max-min Shannon stage, per technology)
# =============================================================================

class _MaxminLayout:
    """Tech-local layout for the initialization stage.

    Variables: the single technology's precoder block, one normalized
    quadratic epigraph per participating user, the min-rate epigraph r,
    and (LiFi only) absolute-value slacks for the LED drive rows.
    Exposes the same accessor names as VariableLayout so the row helpers
    can be shared; only the chosen technology's accessors are valid.
    """

    def __init__(self, problem: HybridProblem, tech: str, users):
        self.problem = problem
        self.tech = tech
        self.k_users = problem.num_users
        self.m = problem.scenario.config.wifi.antennas
        self.num_leds = problem.num_leds
        per_user = 2 * self.m if tech == WIFI else self.num_leds
        self.f_wifi = 0
        self.f_lifi = 0
        off = per_user * self.k_users
        self.quad = {}
        for k in users:
            self.quad[(tech, k)] = off
            off += 1
        self.r = off
        off += 1
        self.abs_lifi = off if tech == LIFI else None
        if tech == LIFI:
            off += self.num_leds * self.k_users
        self.n = off

    def wifi_re(self, k):
        base = 2 * self.m * k
        return slice(base, base + self.m)

    def wifi_im(self, k):
        base = 2 * self.m * k + self.m
        return slice(base, base + self.m)

    def lifi_col(self, k):
        base = self.num_leds * k
        return slice(base, base + self.num_leds)

    def abs_entry(self, led, k):
        return self.abs_lifi + self.num_leds * k + led

    def decode(self, x):
        if self.tech == WIFI:
            f = np.empty((self.m, self.k_users), dtype=complex)
            for k in range(self.k_users):
                f[:, k] = x[self.wifi_re(k)] + 1j * x[self.wifi_im(k)]
            return f
        return np.column_stack([x[self.lifi_col(k)] for k in range(self.k_users)])


def _maxmin_subproblem(problem, tech, f_wifi, f_lifi, budget, users):
    """One SCA iteration of: maximize min_k Shannon surrogate, power-capped."""
    model = problem.tech[tech]
    layout = _MaxminLayout(problem, tech, users)
    n = layout.n
    lin_rows, lin_rhs, socs = [], [], []
    state = PrecodingState(f_wifi, f_lifi, 1.0, 1.0)
    expansion = ExpansionPoint(problem, state, techs=[tech],
                               with_dispersion=False)

    for k in users:
        link = expansion.link(tech, k)
        # r <= Shannon surrogate of user k.
        row = _RowBuilder(layout)
        row.add_pair(tech, k, k,
                     (2.0 * model.sig_scale / link.int_q) * link.gains[k])
        coeffs = -row.coeffs
        coeffs[layout.quad[(tech, k)]] = link.shannon_b_coef * link.quad_total
        coeffs[layout.r] = 1.0
        lin_rows.append(coeffs)
        lin_rhs.append(link.log_term - link.gamma_eff)

        vec_rows = [r for j in range(problem.num_users)
                    for r in _pair_rows(layout, tech, k, j,
                                        math.sqrt(model.sig_scale if j == k
                                                  else model.noise_scale))]
        a_coeffs = np.zeros(n)
        a_coeffs[layout.quad[(tech, k)]] = link.quad_total
        socs.append(_quad_le_affine(vec_rows, a_coeffs, -model.noise_scale,
                                    scale=link.quad_total))

        pos = _RowBuilder(layout)
        pos.add_pair(tech, k, k, 2.0 * link.gains[k])
        socs.append(_quad_le_affine(_pair_rows(layout, tech, k, k),
                                    pos.coeffs,
                                    -POSITIVITY_MARGIN / model.sig_scale,
                                    scale=link.sig_q / model.sig_scale))

    # Per-tech power budget (in squared precoder units: eta * budget).
    power_rows = []
    for k in range(problem.num_users):
        if tech == WIFI:
            power_rows += _identity_rows(n, layout.wifi_re(k))
            power_rows += _identity_rows(n, layout.wifi_im(k))
        else:
            power_rows += _identity_rows(n, layout.lifi_col(k))
    socs.append(SocConstraint(A=np.vstack(power_rows),
                              b=np.zeros(len(power_rows)), c=np.zeros(n),
                              d=math.sqrt(budget * problem.eta[tech])))

    if tech == LIFI:
        for k in range(problem.num_users):
            col = layout.lifi_col(k)
            for led in range(layout.num_leds):
                idx = col.start + led
                t_idx = layout.abs_entry(led, k)
                for sign in (1.0, -1.0):
                    row = np.zeros(n)
                    row[idx], row[t_idx] = sign, -1.0
                    lin_rows.append(row)
                    lin_rhs.append(0.0)
            if k not in users:
                # Dead link (outside every FoV): pin the column to zero.
                for led in range(layout.num_leds):
                    row = np.zeros(n)
                    row[layout.abs_entry(led, k)] = 1.0
                    lin_rows.append(row)
                    lin_rhs.append(0.0)
        for led in range(layout.num_leds):
            row = np.zeros(n)
            for k in range(problem.num_users):
                row[layout.abs_entry(led, k)] = 1.0
            lin_rows.append(row)
            lin_rhs.append(problem.led_bound)

    objective = np.zeros(n)
    objective[layout.r] = 1.0
    a_ub, b_ub = _normalize_rows(np.array(lin_rows), np.array(lin_rhs))
    program = ConvexProgram(n=n, objective=objective, a_ub=a_ub, b_ub=b_ub,
                            socs=socs)
    return program, layout


def _random_feasible(problem, tech, budget, rng, snr_target: float = 1e4):
    """Random start strictly inside the per-tech power (and C3) constraints.

    The draw is rescaled so the strongest link sits near `snr_target`
    (any downscaled point stays feasible); starting at full power would put
    the first expansion at SINRs around 1e7 where the log-bound surrogates
    are numerically ill-conditioned.
    """
    m = (problem.scenario.config.wifi.antennas if tech == WIFI
         else problem.num_leds)
    k_users = problem.num_users
    if tech == WIFI:
        f = rng.standard_normal((m, k_users)) + 1j * rng.standard_normal((m, k_users))
    else:
        f = rng.standard_normal((m, k_users))
    norm = np.linalg.norm(f)
    f *= math.sqrt(0.9 * budget * problem.eta[tech]) / norm
    if tech == LIFI:
        worst = float(np.max(np.sum(np.abs(f), axis=1)))
        if worst > 0.9 * problem.led_bound:
            f *= 0.9 * problem.led_bound / worst
    zeros_w = np.zeros((problem.scenario.config.wifi.antennas, k_users), complex)
    zeros_l = np.zeros((problem.num_leds, k_users))
    f_w, f_l = (f, zeros_l) if tech == WIFI else (zeros_w, f)
    top = max((problem.gamma(tech, k, f_w, f_l)
               for k in range(k_users) if problem.active[tech][k]),
              default=0.0)
    if top > snr_target:
        f *= math.sqrt(snr_target / top)
    return f


def initial_point(scenario: Scenario, slices, channels: ChannelSet = None,
                  channel_seed=None, wifi_only: bool = False,
                  power_split: float = 0.5, max_rounds: int = 25,
                  tol: float = 1e-3, rng_seed: int = 0,
                  solver: SolverOptions = SolverOptions(),
                  problem: HybridProblem = None) -> PrecodingState:
    """Appendix-style max-min initialization, one stage per technology.

    Starting from a random power-feasible point, each stage repeatedly
    maximizes the minimum Shannon surrogate under its own power budget
    (plus the LED drive bound for LiFi) until the minimum log term
    stabilizes.  The combined point has strictly positive SINR for every
    active link, which keeps the finite-blocklength rates positive.
    """
    if problem is None:
        problem = HybridProblem(scenario, slices, channels, channel_seed,
                                wifi_only)
    rng = np.random.default_rng([rng_seed, 0xFEA51B1E])
    budgets = {WIFI: problem.p_max_w * power_split,
               LIFI: problem.p_max_w * (1.0 - power_split)}
    if not problem.use_lifi:
        budgets[WIFI] = problem.p_max_w

    f_wifi = _random_feasible(problem, WIFI, budgets[WIFI], rng)
    f_lifi = np.zeros((problem.num_leds, problem.num_users))
    if problem.use_lifi and problem.active[LIFI].any():
        f_lifi = _random_feasible(problem, LIFI, budgets[LIFI], rng)

    for tech in problem.tech:
        users = [k for k in range(problem.num_users) if problem.active[tech][k]]
        if not users:
            continue
        best = -np.inf
        rounds_done = 0
        while rounds_done < max_rounds:
            program, layout = _maxmin_subproblem(
                problem, tech, f_wifi, f_lifi, budgets[tech], users)
            result = solve(program, solver)
            usable = result.status == OPTIMAL
            if not usable and result.x is not None:
                # A stalled interior-point run near the power ceiling can
                # still hand back a near-feasible iterate worth keeping.
                usable = float(np.max(program.residuals(result.x))) <= 1e-6
            if not usable:
                if rounds_done > 0:
                    break  # keep the last good iterate
                raise OptimizationError(
                    f"max-min initialization failed on {tech}: {result.status}")
            decoded = layout.decode(result.x)
            if tech == WIFI:
                f_wifi = decoded
            else:
                f_lifi = decoded
            rounds_done += 1
            current = min(
                math.log1p(problem.tech[tech].sig_scale * g
                           / problem.tech[tech].noise_scale)
                for g in (problem.gamma(tech, k, f_wifi, f_lifi) for k in users))
            if result.status != OPTIMAL:
                break
            if best > -np.inf and current - best <= tol * max(abs(best), 1e-9):
                break
            best = max(best, current)

    # Exhaust the per-tech budget: the minimum log term is monotone in a
    # common precoder scale, so scaling up to the first binding constraint
    # (power, or a LED drive row for LiFi) only improves the max-min value
    # and pins the initial point's power level independently of where the
    # interior-point iterations stalled.
    norm_sq = float(np.sum(np.abs(f_wifi) ** 2))
    if norm_sq > 0:
        f_wifi = f_wifi * math.sqrt(budgets[WIFI] * problem.eta[WIFI] / norm_sq)
    if problem.use_lifi:
        norm_sq = float(np.sum(f_lifi ** 2))
        if norm_sq > 0:
            scale = math.sqrt(budgets[LIFI] * problem.eta[LIFI] / norm_sq)
            worst_row = float(np.max(np.sum(np.abs(f_lifi), axis=1)))
            if worst_row > 0:
                scale = min(scale, problem.led_bound / worst_row)
            if scale > 1.0:
                f_lifi = f_lifi * scale

    for tech in problem.tech:
        for k in range(problem.num_users):
            if problem.active[tech][k] and \
                    problem.gamma(tech, k, f_wifi, f_lifi) <= 0.0:
                raise OptimizationError(
                    f"initialization left a zero SINR on {tech} user {k}")

    powers = problem.powers(f_wifi, f_lifi)
    ee = problem.energy_efficiency(f_wifi, f_lifi)
    return PrecodingState(f_wifi=f_wifi, f_lifi=f_lifi, ee_bound=ee,
                          power_bound=powers.total_w, iteration=0)


# =============================================================================
#  Outer loop
# =============================================================================

@dataclass(frozen=True)
class TraceRow:
    iteration: int
    ee: float
    power_bound: float
    sum_rate_nats: float
    power_wifi_w: float
    power_lifi_w: float
    solver_status: str
    wall_ms: float


@dataclass(frozen=True)
class OptimizeOptions:
    tol: float = 1e-4
    max_outer: int = 50
    wifi_only: bool = False
    channel_seed: int | None = None
    power_split: float = 0.5
    init_rng_seed: int = 0
    latency: LatencyBudget | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class OptimizeResult:
    state: PrecodingState
    trace: list
    converged: bool
    stop_reason: str

    def __iter__(self):  # unpack as (state, trace)
        return iter((self.state, self.trace))


def latency_gate(slices, latency: LatencyBudget | None = None):
    """C4 pre-solve check: every user's composed latency meets its ceiling."""
    base = latency if latency is not None else LatencyBudget()
    for k, assignment in enumerate(slices):
        budget = base.with_tx_time(assignment.tx_time_s)
        if not check_latency(assignment.slice, budget, assignment.latency_max_s):
            raise InfeasibleProblemError(
                f"latency gate failed for user {k}: "
                f"{total_latency(budget) * 1e3:.3f} ms exceeds "
                f"{assignment.latency_max_s * 1e3:.3f} ms")


def optimize_ee(scenario: Scenario, slices, options: OptimizeOptions = OptimizeOptions(),
                channels: ChannelSet = None) -> OptimizeResult:
    """Run the full SCA loop; returns the final state and per-iteration trace."""
    problem = HybridProblem(scenario, slices, channels,
                            options.channel_seed, options.wifi_only)
    latency_gate(slices, options.latency)

    t0 = time.perf_counter()
    state = initial_point(scenario, slices, problem=problem,
                          power_split=options.power_split,
                          rng_seed=options.init_rng_seed,
                          solver=options.solver)
    trace = [_trace_row(problem, state, "init", (time.perf_counter() - t0) * 1e3)]

    converged = False
    reason = "max_outer"
    for iteration in range(1, options.max_outer + 1):
        t0 = time.perf_counter()
        program, layout, _ = _assemble(problem, state)
        result = solve(program, options.solver)
        wall_ms = (time.perf_counter() - t0) * 1e3

        usable = result.status == OPTIMAL
        if not usable and result.x is not None:
            # Reduced-accuracy terminations still carry the last iterate;
            # keep it when it is primal feasible (EE acceptance below guards
            # against any loss of monotonicity).
            usable = float(np.max(program.residuals(result.x))) <= 1e-6
        if not usable:
            reason = f"solver_{result.status}"
            trace.append(_trace_row(problem, state, result.status, wall_ms,
                                    iteration))
            if result.status == INFEASIBLE and iteration == 1:
                raise InfeasibleProblemError(
                    "first subproblem infeasible: rate floors or latency "
                    "cannot be met from the initial point")
            break

        f_wifi, f_lifi = layout.decode(result.x)
        ee_new = problem.energy_efficiency(f_wifi, f_lifi)
        if ee_new < state.ee_bound:
            reason = "no_progress"
            trace.append(_trace_row(problem, state, "no_progress", wall_ms,
                                    iteration))
            break
        previous = state.ee_bound
        state = PrecodingState(
            f_wifi=f_wifi, f_lifi=f_lifi, ee_bound=ee_new,
            power_bound=problem.powers(f_wifi, f_lifi).total_w,
            iteration=iteration)
        trace.append(_trace_row(problem, state, result.status, wall_ms, iteration))
        if ee_new - previous <= options.tol * max(abs(previous), 1e-12):
            converged = True
            reason = "converged"
            break

    return OptimizeResult(state=state, trace=trace, converged=converged,
                          stop_reason=reason)


def _trace_row(problem, state, status, wall_ms, iteration=None):
    rates = problem.rates(state.f_wifi, state.f_lifi)
    powers = problem.powers(state.f_wifi, state.f_lifi)
    return TraceRow(
        iteration=state.iteration if iteration is None else iteration,
        ee=state.ee_bound,
        power_bound=state.power_bound,
        sum_rate_nats=float(sum(r.total for r in rates)),
        power_wifi_w=powers.wifi_w,
        power_lifi_w=powers.lifi_w,
        solver_status=status,
        wall_ms=wall_ms,
    )
