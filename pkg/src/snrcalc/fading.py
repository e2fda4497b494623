"""Rayleigh channel model and the upper incomplete Gamma kernel behind it.

The per-slot channel gain is g(gamma) = 1 + gamma with gamma = gbar * |h|^2
and |h|^2 ~ Exponential(1), so the Mellin transform of the gain is

    M_g(s) = e^{1/gbar} * gbar^{s-1} * Gamma(s, 1/gbar),

where Gamma(a, x) = int_x^inf t^{a-1} e^{-t} dt.  The bounds evaluate this at
a = 1 - s for s > 0, i.e. at zero and negative first arguments, which common
library routines (regularized P/Q) do not cover, so the kernel is implemented
here.  Every quantity is also exposed in log space: for large |s| the plain
value overflows double precision while the SNR-domain combination
gbar^{s-1} Gamma(s, 1/gbar) stays moderate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError

_EPS = 1e-16
_ITMAX = 10_000
_FPMIN = 1e-300
_EULER = 0.5772156649015329  # Euler-Mascheroni constant
_EXP_MAX = 700.0  # math.exp overflow guard


def _cf_lentz_ln(a, x):
    # Continued fraction for Gamma(a,x) = e^{-x} x^a * h, evaluated with the
    # modified Lentz method.  Valid for x > a+1; also converges for a <= 0
    # whenever x is not small (we route x >= ~1 here).
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _EPS:
            break
    return -x + a * math.log(x) + math.log(h)


def _pseries_ln(a, x):
    # Series for the regularized lower tail P(a,x); then
    # ln Gamma(a,x) = lgamma(a) + log1p(-P).  Used for a > 0.25, x < a+1,
    # where P stays far enough from 1 that the subtraction is benign.
    ap = a
    total = 1.0 / a
    delt = total
    for _ in range(_ITMAX):
        ap += 1.0
        delt *= x / ap
        total += delt
        if abs(delt) < abs(total) * _EPS:
            break
    ln_p = math.log(total) + a * math.log(x) - x - math.lgamma(a)
    if ln_p >= 0.0:  # P rounded to >= 1 cannot happen in this region
        ln_p = -_EPS
    return math.lgamma(a) + math.log1p(-math.exp(ln_p))


# zeta(k)/k for k = 2..26; coefficients of lgamma(1+a)/a = -Euler
# + sum_k (-1)^k (zeta(k)/k) a^{k-1}, convergent for |a| < 1.
_ZETA_OVER_K = (
    0.8224670334241132, 0.40068563438653143, 0.27058080842778454,
    0.20738555102867398, 0.1695571769974082, 0.1440498967688461,
    0.12550966952474304, 0.11133426586956469, 0.1000994575127818,
    0.09095401714582904, 0.083353840546109, 0.0769325164113522,
    0.07143294629536133, 0.06666870588242046, 0.06250095514121304,
    0.058823978658684585, 0.055555767627403614, 0.05263167937961666,
    0.05000004769810169, 0.047619070330142226, 0.04545455629320467,
    0.04347826605304026, 0.04166666915034121, 0.04000000119214014,
    0.03846153903467518,
)


def _lgamma1p_over_a(a):
    # lgamma(1 + a)/a evaluated without the catastrophic a -> 0 division;
    # needed to 1e-14 absolute so that expm1(u)/a keeps full accuracy.
    out = -_EULER
    pw = 1.0
    sign = 1.0
    for coef in _ZETA_OVER_K:
        pw *= a
        out += sign * coef * pw
        sign = -sign
        if abs(coef * pw) < 1e-18:
            break
    return out


def _small_a_ln(a, x):
    # For |a| <= 0.25 and x <= 1.25, split off the n = 0 term of
    #   gamma(a,x) = x^a sum_n (-x)^n / (n! (a+n))
    # and pair it with Gamma(a) so the a -> 0 pole cancels analytically:
    #   Gamma(a,x) = x^a * [ expm1(u)/a - S1 ],  u = lgamma(1+a) - a ln x,
    # with S1 the n >= 1 tail.  The bracket tends to -ln x - Euler as a -> 0.
    lnx = math.log(x)
    u_over_a = _lgamma1p_over_a(a) - lnx
    u = a * u_over_a
    if u == 0.0:
        lead = u_over_a
    else:
        lead = (math.expm1(u) / u) * u_over_a
    s1 = 0.0
    pw = 1.0  # (-x)^n / n!
    for n in range(1, _ITMAX):
        pw *= -x / n
        term = pw / (a + n)
        s1 += term
        if abs(term) < _EPS * max(abs(s1), abs(lead), 1e-30):
            break
    return a * lnx + math.log(lead - s1)


def _recurrence_ln(a, x):
    # a < -0.25, x <= 1.  Work with the scaled value
    #   G_b = Gamma(b,x) * x^{-b} * e^{x},
    # for which the downward recurrence Gamma(b,x) = (Gamma(b+1,x) - x^b e^-x)/b
    # becomes G_b = (x G_{b+1} - 1) / b.  Since Gamma(b+1,x) < x^b e^{-x} for
    # b < 0, the numerator keeps a fixed sign and the iteration contracts:
    # no overflow and no catastrophic cancellation at any depth.
    m = int(math.floor(-0.25 - a)) + 1  # a + m in (-0.25, 0.75]
    a0 = a + m
    lnx = math.log(x)
    g = math.exp(upper_incomplete_gamma_ln(a0, x) - a0 * lnx + x)
    for k in range(1, m + 1):
        b = a0 - k
        g = (x * g - 1.0) / b
    return math.log(g) + a * lnx - x


def upper_incomplete_gamma_ln(a, x) -> float:
    """Natural log of Gamma(a, x) for real a and x > 0 (x = 0 needs a > 0).

    Gamma(a, x) itself is always positive, so the log is well defined; this
    form stays finite where the plain value would over- or underflow.
    """
    a = float(a)
    x = float(x)
    if math.isnan(a) or math.isnan(x):
        raise DomainError("nan argument to upper incomplete gamma")
    if x < 0.0:
        raise DomainError("upper incomplete gamma requires x >= 0")
    if x == 0.0:
        if a <= 0.0:
            raise DomainError("Gamma(a, 0) diverges for a <= 0")
        return math.lgamma(a)
    if a > 0.25:
        if x < a + 1.0:
            return _pseries_ln(a, x)
        return _cf_lentz_ln(a, x)
    if a >= -0.25:
        if x <= 1.25:
            return _small_a_ln(a, x)
        return _cf_lentz_ln(a, x)
    if x <= 1.0:
        return _recurrence_ln(a, x)
    return _cf_lentz_ln(a, x)


def upper_incomplete_gamma(a, x) -> float:
    """Gamma(a, x) = int_x^inf t^{a-1} e^{-t} dt; +inf on double overflow."""
    ln_val = upper_incomplete_gamma_ln(a, x)
    if ln_val > _EXP_MAX:
        return math.inf
    return math.exp(ln_val)


def rayleigh_g_mellin_ln(gamma_bar, s) -> float:
    """ln of the Mellin transform of the per-slot gain 1 + gamma."""
    if gamma_bar <= 0:
        raise DomainError("average SNR must be positive")
    y = 1.0 / gamma_bar
    return y + (s - 1.0) * math.log(gamma_bar) + upper_incomplete_gamma_ln(s, y)


def rayleigh_g_mellin(gamma_bar, s) -> float:
    """Mellin transform of the per-slot gain: e^{1/gbar} gbar^{s-1} Gamma(s, 1/gbar)."""
    ln_val = rayleigh_g_mellin_ln(gamma_bar, s)
    if ln_val > _EXP_MAX:
        return math.inf
    return math.exp(ln_val)


def rayleigh_service_mellin(gamma_bar, s, tau, t) -> float:
    """Mellin transform of the cumulative service over [tau, t): the per-slot
    transform raised to the power t - tau."""
    if not 0 <= tau <= t:
        raise DomainError("need 0 <= tau <= t")
    if t == tau:
        return 1.0
    ln_val = (t - tau) * rayleigh_g_mellin_ln(gamma_bar, s)
    if ln_val > _EXP_MAX:
        return math.inf
    return math.exp(ln_val)


def rayleigh_service_model(gamma_bar):
    """The cumulative service as a per-slot Mellin model (finite for all s)."""
    from .mellin import IidSlotPower

    return IidSlotPower(log_base=lambda s: rayleigh_g_mellin_ln(gamma_bar, s))


def sample_gamma(gamma_bar, rng, size=None):
    """Draw instantaneous SNR values gbar * E, E ~ Exponential(1).

    ``rng`` is a numpy Generator owned by the caller; the draw sequence is
    fully determined by its state.
    """
    if gamma_bar <= 0:
        raise DomainError("average SNR must be positive")
    return gamma_bar * rng.standard_exponential(size)


def mean_capacity_nats(gamma_bar) -> float:
    """E[ln(1 + gamma)] per slot: e^{1/gbar} Gamma(0, 1/gbar)."""
    if gamma_bar <= 0:
        raise DomainError("average SNR must be positive")
    y = 1.0 / gamma_bar
    return math.exp(upper_incomplete_gamma_ln(0.0, y) + y)


@dataclass(frozen=True)
class FadingModel:
    """A fading model is a (sampler, gain-Mellin) pair.

    ``g_mellin_ln(gamma_bar, s)`` is ln E[g(gamma)^{s-1}] for one slot and
    ``sample(gamma_bar, rng, size)`` draws instantaneous SNRs.  Only Rayleigh
    ships; Rician/Nakagami variants plug in through the same interface.
    """

    name: str
    g_mellin_ln: Callable[[float, float], float]
    sample: Callable
    mean_capacity: Callable[[float], float]


RAYLEIGH = FadingModel(
    name="rayleigh",
    g_mellin_ln=rayleigh_g_mellin_ln,
    sample=sample_gamma,
    mean_capacity=mean_capacity_nats,
)

FADING_MODELS = {"rayleigh": RAYLEIGH}


@dataclass(frozen=True)
class ChannelSpec:
    """Channel parameters: average SNR (linear) and bandwidth in Hz.

    Bandwidth only matters for unit conversion; internally one slot carries
    ln(1 + gamma) nats.
    """

    gamma_bar: float
    bandwidth_hz: float = 20_000.0
    model: str = "rayleigh"

    def __post_init__(self):
        if self.gamma_bar <= 0:
            raise DomainError("average SNR must be positive")
        if self.bandwidth_hz <= 0:
            raise DomainError("bandwidth must be positive")
        if self.model not in FADING_MODELS:
            raise ConfigError(f"unknown fading model: {self.model!r}")

    @property
    def fading(self) -> FadingModel:
        return FADING_MODELS[self.model]

    def capacity_slots(self, rng, shape):
        """Per-slot capacities ln g(gamma) in nats for the given array shape."""
        gammas = self.fading.sample(self.gamma_bar, rng, shape)
        return np.log1p(gammas)
