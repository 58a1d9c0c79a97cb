"""
SINR, Shannon, and finite-blocklength achievable rates for both technologies.

Rates are in nats/s.  WiFi uses the plain log SINR expression; LiFi uses the
real-signal lower bound 0.5*ln(1 + (e/2pi)*gamma) plus a 0.5 dispersion scale
from Hermitian symmetry.  URLLC/mMTC slices subtract the finite-blocklength
dispersion penalty Q^{-1}(eps)*sqrt(D/L); eMBB keeps the Shannon term only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

E_OVER_2PI = math.e / (2.0 * math.pi)

WIFI = "wifi"
LIFI = "lifi"


class Slice(str, Enum):
    EMBB = "eMBB"
    URLLC = "URLLC"
    MMTC = "mMTC"

    @property
    def finite_blocklength(self) -> bool:
        return self is not Slice.EMBB

    @classmethod
    def parse(cls, label: str) -> "Slice":
        for member in cls:
            if member.value.lower() == str(label).lower():
                return member
        raise ValueError(f"unknown slice label '{label}'")


# Default per-slice latency ceilings (seconds).
SLICE_LATENCY_MAX_S = {
    Slice.EMBB: 4e-3,
    Slice.URLLC: 1e-3,
    Slice.MMTC: 5e-3,
}

# Default rate floors in nats/s.
SLICE_RATE_MIN_NATS = {
    Slice.EMBB: 1e6,
    Slice.URLLC: 1e5,
    Slice.MMTC: 1e5,
}

DEFAULT_ERROR_PROB = 1e-5
DEFAULT_TX_TIME_FBL_S = 0.05e-3
DEFAULT_TX_TIME_EMBB_S = 0.5e-3


@dataclass(frozen=True)
class SliceAssignment:
    """Per-user slice plus the transmission parameters it implies."""

    slice: Slice
    tx_time_s: float
    error_prob: float = DEFAULT_ERROR_PROB
    rate_min_nats: float | None = None
    latency_max_s: float | None = None

    def __post_init__(self):
        if self.tx_time_s <= 0:
            raise ValueError("tx_time_s must be positive")
        if not 0 < self.error_prob < 0.5:
            raise ValueError("error_prob must lie in (0, 0.5)")
        if self.rate_min_nats is None:
            object.__setattr__(self, "rate_min_nats", SLICE_RATE_MIN_NATS[self.slice])
        if self.rate_min_nats < 0:
            raise ValueError("rate_min_nats must be >= 0")
        if self.latency_max_s is None:
            object.__setattr__(self, "latency_max_s", SLICE_LATENCY_MAX_S[self.slice])

    def blocklength(self, bandwidth_hz: float) -> int:
        """L = round(BW * T^t) channel uses; must be >= 1 for FBL slices."""
        length = int(round(bandwidth_hz * self.tx_time_s))
        if self.slice.finite_blocklength and length < 1:
            raise ValueError("blocklength below 1; increase tx_time_s or bandwidth")
        return max(length, 1)


def default_assignment(slice_: Slice, tx_time_s: float | None = None,
                       **kwargs) -> SliceAssignment:
    if tx_time_s is None:
        tx_time_s = (DEFAULT_TX_TIME_FBL_S if slice_.finite_blocklength
                     else DEFAULT_TX_TIME_EMBB_S)
    return SliceAssignment(slice=slice_, tx_time_s=tx_time_s, **kwargs)


def default_slices(num_users: int, pattern=(Slice.EMBB, Slice.URLLC, Slice.MMTC)):
    """Cycle a slice pattern over the users (mixed traffic by default)."""
    return [default_assignment(pattern[k % len(pattern)]) for k in range(num_users)]


# =============================================================================
#  SINR
# =============================================================================

class SinrParts(NamedTuple):
    gamma: float
    signal: float        # X: |h . f_k|^2
    interference: float  # Y: sum_{j != k} |h . f_j|^2 + sigma^2


def sinr(h: np.ndarray, precoders: np.ndarray, k: int, noise_var: float,
         tech: str) -> SinrParts:
    """SINR of user k under the given precoder matrix (columns = users).

    WiFi pairs conjugated channels with complex precoders; LiFi uses the real
    inner product.  Returns the numerator X and denominator Y alongside gamma.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    h = np.asarray(h)
    precoders = np.asarray(precoders)
    if precoders.ndim != 2 or precoders.shape[0] != h.shape[0]:
        raise ValueError("precoder matrix must be (len(h), K)")
    if not 0 <= k < precoders.shape[1]:
        raise ValueError("user index out of range")
    if tech == WIFI:
        gains = np.conj(h) @ precoders
    elif tech == LIFI:
        gains = h @ precoders
    else:
        raise ValueError(f"unknown tech '{tech}'")
    powers = np.abs(gains) ** 2
    signal = float(powers[k])
    interference = float(powers.sum() - powers[k] + noise_var)
    return SinrParts(signal / interference, signal, interference)


# =============================================================================
#  Rate expressions
# =============================================================================

def shannon_term(gamma: float, tech: str) -> float:
    """Dimensionless log term: ln(1+gamma) for WiFi, ln(1+(e/2pi)gamma) for LiFi."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if tech == WIFI:
        return math.log1p(gamma)
    if tech == LIFI:
        return math.log1p(E_OVER_2PI * gamma)
    raise ValueError(f"unknown tech '{tech}'")


def shannon_rate(gamma: float, bandwidth_hz: float, tech: str) -> float:
    """Long-blocklength achievable rate in nats/s (LiFi carries the 1/2 factor)."""
    scale = bandwidth_hz if tech == WIFI else 0.5 * bandwidth_hz
    return scale * shannon_term(gamma, tech)


def q_function(x: float) -> float:
    """Gaussian tail Q(x) = 0.5 * erfc(x / sqrt(2))."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def inverse_q(eps: float) -> float:
    """Solve Q(x) = eps by bisection plus Newton refinement (<= 1e-10 abs)."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > eps:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    x = 0.5 * (lo + hi)
    for _ in range(8):
        # Q'(x) = -phi(x)
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        step = (q_function(x) - eps) / pdf
        x += step
        if abs(step) < 1e-13:
            break
    return x


def dispersion(gamma: float, tech: str) -> float:
    """Channel dispersion D in [0, 1): 1 - (1 + gamma_eff)^(-2)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    gamma_eff = gamma if tech == WIFI else E_OVER_2PI * gamma
    return 1.0 - 1.0 / (1.0 + gamma_eff) ** 2


def fbl_rate(gamma: float, bandwidth_hz: float, eps: float, blocklength: int,
             tech: str) -> float:
    """Finite-blocklength rate in nats/s; may be negative for tiny gamma."""
    if blocklength < 1:
        raise ValueError("blocklength must be >= 1")
    s_term = shannon_term(gamma, tech)
    d_term = dispersion(gamma, tech)
    qinv = inverse_q(eps)
    if tech == WIFI:
        return bandwidth_hz * (s_term - qinv * math.sqrt(d_term / blocklength))
    return 0.5 * bandwidth_hz * (s_term - qinv * math.sqrt(0.5 * d_term / blocklength))


# =============================================================================
#  Per-user rate breakdown
# =============================================================================

class TechRate(NamedTuple):
    gamma: float
    shannon: float     # S, dimensionless log term
    penalty: float     # V, dispersion term (0 for eMBB)
    rate: float        # nats/s, BW-scaled (S - V)


@dataclass(frozen=True)
class RateBreakdown:
    wifi: TechRate
    lifi: TechRate

    @property
    def total(self) -> float:
        return self.wifi.rate + self.lifi.rate


def _tech_rate(assignment: SliceAssignment, gamma: float, bandwidth_hz: float,
               tech: str) -> TechRate:
    s_term = shannon_term(gamma, tech)
    if assignment.slice.finite_blocklength:
        blocklength = assignment.blocklength(bandwidth_hz)
        d_term = dispersion(gamma, tech)
        qinv = inverse_q(assignment.error_prob)
        if tech == WIFI:
            penalty = qinv * math.sqrt(d_term / blocklength)
        else:
            penalty = qinv * math.sqrt(0.5 * d_term / blocklength)
    else:
        penalty = 0.0
    scale = bandwidth_hz if tech == WIFI else 0.5 * bandwidth_hz
    return TechRate(gamma, s_term, penalty, scale * (s_term - penalty))


def user_rate(assignment: SliceAssignment, gamma_wifi: float, gamma_lifi: float,
              bandwidth_wifi_hz: float, bandwidth_lifi_hz: float) -> RateBreakdown:
    """Slice-appropriate rates per tech; the total sums both links."""
    return RateBreakdown(
        wifi=_tech_rate(assignment, gamma_wifi, bandwidth_wifi_hz, WIFI),
        lifi=_tech_rate(assignment, gamma_lifi, bandwidth_lifi_hz, LIFI),
    )
