"""Closed-form Mellin models of SNR processes and the bounding calculus.

A model represents s |-> an upper bound on M_X(s, tau, t) = E[X(tau,t)^{s-1}]
for a whole process class.  Evaluation outside a model's validity interval
returns +inf rather than raising, so optimizers can sweep s and treat
infeasibility uniformly.
"""

from __future__ import annotations

import math
from typing import Callable

from .errors import DomainError, PreconditionError

_EXP_MAX = 700.0
_INF = math.inf


def _exp(ln_val):
    if ln_val == -_INF:
        return 0.0
    if ln_val > _EXP_MAX:
        return _INF
    return math.exp(ln_val)


def _log_geom_sum(log_r, n):
    """log( sum_{k=0}^{n-1} e^{k log_r} ), stable for any real log_r, n >= 1."""
    if n <= 0:
        return -_INF
    if n == 1:
        return 0.0
    if abs(log_r) * n < 1e-8:
        return math.log(n) + (n - 1) * log_r / 2.0
    if log_r > 0:
        # (e^{n r} - 1)/(e^r - 1) = e^{(n-1) r} (1 - e^{-n r})/(1 - e^{-r})
        return (n - 1) * log_r + math.log1p(-math.exp(-n * log_r)) - math.log1p(-math.exp(-log_r))
    return math.log1p(-math.exp(n * log_r)) - math.log1p(-math.exp(log_r))


def _log_binomial(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


class MellinModel:
    """Base class: a bound family (s, tau, t) |-> value with an s-validity set."""

    validity = (-_INF, _INF)  # open interval of s where the model is finite

    def in_validity(self, s) -> bool:
        lo, hi = self.validity
        return lo < s < hi

    def log_value(self, s, tau, t) -> float:
        raise NotImplementedError

    def value(self, s, tau, t) -> float:
        return _exp(self.log_value(s, tau, t))

    def at(self, s) -> float:
        """Single-slot (or single-variable) evaluation, M(s, 0, 1)."""
        return self.value(s, 0, 1)

    def per_slot(self, s):
        """(log slot factor, log prefactor) if the model factors per slot, else None."""
        return None


def _check_interval(tau, t):
    if not 0 <= tau <= t:
        raise DomainError("need 0 <= tau <= t")


class IidSlotPower(MellinModel):
    """M(s, tau, t) = prefactor(s) * base(s)^(t - tau); base is the per-slot
    transform of an i.i.d. slot process.  Without a prefactor M(s, t, t) = 1."""

    def __init__(self, base=None, *, log_base=None, log_prefactor=None,
                 validity=(-_INF, _INF)):
        if base is None and log_base is None:
            raise DomainError("IidSlotPower needs base or log_base")
        if log_base is None:
            def log_base(s, _b=base):
                v = _b(s)
                if v < 0:
                    raise DomainError("Mellin base must be nonnegative")
                return math.log(v) if v > 0 else -_INF
        self._log_base = log_base
        self._log_prefactor = log_prefactor
        self.validity = validity

    def log_value(self, s, tau, t):
        _check_interval(tau, t)
        if not self.in_validity(s):
            return _INF
        out = 0.0 if self._log_prefactor is None else self._log_prefactor(s)
        if t > tau:
            lb = self._log_base(s)
            out += (t - tau) * lb
        return out

    def per_slot(self, s):
        if not self.in_validity(s):
            return None
        pre = 0.0 if self._log_prefactor is None else self._log_prefactor(s)
        return self._log_base(s), pre


class SigmaRho(MellinModel):
    """Exponential envelope of (sigma, rho)-bounded arrivals:
    M(s, tau, t) <= e^{(s-1) (rho(s-1) (t-tau) + sigma(s-1))}, valid for s > 1."""

    validity = (1.0, _INF)

    def __init__(self, sigma, rho):
        self._sigma = sigma if callable(sigma) else (lambda _s, _v=float(sigma): _v)
        self._rho = rho if callable(rho) else (lambda _s, _v=float(rho): _v)

    def log_value(self, s, tau, t):
        _check_interval(tau, t)
        if not self.in_validity(s):
            return _INF
        theta = s - 1.0
        return theta * (self._rho(theta) * (t - tau) + self._sigma(theta))

    def per_slot(self, s):
        if not self.in_validity(s):
            return None
        theta = s - 1.0
        return theta * self._rho(theta), theta * self._sigma(theta)


class CascadeBinomial(MellinModel):
    """Service bound for a cascade of N i.i.d. slot servers:
    M(s, tau, t) <= C(N-1+t-tau, t-tau) * base(s)^(t-tau), for s < 1."""

    validity = (-_INF, 1.0)

    def __init__(self, log_base, hops, *, log_prefactor=None):
        if hops < 1:
            raise DomainError("hop count must be >= 1")
        self._log_base = log_base
        self._hops = int(hops)
        self._log_prefactor = log_prefactor

    def log_value(self, s, tau, t):
        _check_interval(tau, t)
        if not self.in_validity(s):
            return _INF
        span = t - tau
        out = _log_binomial(self._hops - 1 + span, span)
        if self._log_prefactor is not None:
            out += self._log_prefactor(s)
        if span > 0:
            out += span * self._log_base(s)
        return out


class Tabulated(MellinModel):
    """Per-slot base sampled on a geometric s-grid, log-linearly interpolated.

    ``interpolation_error`` is a curvature-based estimate of the worst-case
    relative interpolation error of the base, surfaced for diagnostics.
    """

    def __init__(self, s_grid, base_values):
        import numpy as np

        s = np.asarray(s_grid, dtype=float)
        v = np.asarray(base_values, dtype=float)
        if s.ndim != 1 or s.size < 2 or s.shape != v.shape:
            raise DomainError("need matching 1-d grids with >= 2 points")
        if s.min() <= 0 or np.any(np.diff(s) <= 0):
            raise DomainError("s grid must be positive and increasing")
        if v.min() <= 0:
            raise DomainError("base values must be positive")
        self._ln_s = np.log(s)
        self._ln_v = np.log(v)
        self.validity = (float(s[0]), float(s[-1]))
        d2 = np.diff(self._ln_v, 2)
        self.interpolation_error = float(np.abs(d2).max() / 8.0) if d2.size else 0.0
        self._np = np

    def in_validity(self, s):
        lo, hi = self.validity
        return lo <= s <= hi  # closed: the grid endpoints are usable

    def log_base(self, s):
        if not self.in_validity(s):
            return _INF
        return float(self._np.interp(math.log(s), self._ln_s, self._ln_v))

    def log_value(self, s, tau, t):
        _check_interval(tau, t)
        lb = self.log_base(s)
        if lb == _INF:
            return _INF
        return (t - tau) * lb

    def per_slot(self, s):
        lb = self.log_base(s)
        if lb == _INF:
            return None
        return lb, 0.0


def mellin_constant(c) -> IidSlotPower:
    """Model of a degenerate (constant) positive slot variable: M(s) = c^{s-1}."""
    if not c > 0:
        raise DomainError("constant must be positive")
    ln_c = math.log(c)
    return IidSlotPower(log_base=lambda s: (s - 1.0) * ln_c)


def mellin_product(x: MellinModel, y: MellinModel, s, tau=0, t=1) -> float:
    """Transform of a product of independent variables: M_X(s) * M_Y(s).

    Independence of the underlying processes is the caller's obligation.
    """
    return _exp(x.log_value(s, tau, t) + y.log_value(s, tau, t))


def mellin_quotient(x: MellinModel, y: MellinModel, s, tau=0, t=1) -> float:
    """Transform of a quotient of independent variables: M_X(s) * M_Y(2 - s)."""
    return _exp(x.log_value(s, tau, t) + y.log_value(2.0 - s, tau, t))


def moment_bound(x: MellinModel, a, s, tau=0, t=1) -> float:
    """Chernoff-type tail bound: P(X >= a) <= min(1, a^{-s} M_X(1+s))."""
    if a <= 0:
        raise DomainError("threshold must be positive")
    if s <= 0:
        raise PreconditionError("moment bound needs s > 0")
    ln_val = x.log_value(1.0 + s, tau, t) - s * math.log(a)
    if ln_val >= 0.0:
        return 1.0
    return math.exp(ln_val)


def _log_sum(terms):
    m = max(terms)
    if m == _INF:
        return _INF
    if m == -_INF:
        return -_INF
    return m + math.log(sum(math.exp(v - m) for v in terms))


def conv_bound(x: MellinModel, y: MellinModel, s, tau, t) -> float:
    """Bound on the transform of X (x) Y for s < 1:
    sum_{u=tau}^{t} M_X(s, tau, u) * M_Y(s, u, t).

    Uses the closed geometric form when both models factor per slot, direct
    summation otherwise.
    """
    if s >= 1:
        raise PreconditionError("convolution bound needs s < 1")
    _check_interval(tau, t)
    px, py = x.per_slot(s), y.per_slot(s)
    if px is not None and py is not None:
        (lbx, lpx), (lby, lpy) = px, py
        span = t - tau
        # sum_u bx^{u-tau} by^{t-u} = by^span * sum_{k=0}^{span} (bx/by)^k
        ln = lpx + lpy + span * lby + _log_geom_sum(lbx - lby, span + 1)
        return _exp(ln)
    terms = [x.log_value(s, tau, u) + y.log_value(s, u, t) for u in range(tau, t + 1)]
    return _exp(_log_sum(terms))


def deconv_bound(x: MellinModel, y: MellinModel, s, tau, t) -> float:
    """Bound on the transform of X (/) Y for s > 1:
    sum_{u=0}^{min(tau,t)} M_X(s, u, t) * M_Y(2-s, u, tau).

    The summation cap min(tau, t) keeps the first factor inside its domain
    and matches the tightened kernel used by the delay bound; for tau <= t
    it coincides with the plain deconvolution bound.
    """
    if s <= 1:
        raise PreconditionError("deconvolution bound needs s > 1")
    if tau < 0 or t < 0:
        raise DomainError("tau and t must be nonnegative")
    cap = min(tau, t)
    px, py = x.per_slot(s), y.per_slot(2.0 - s)
    if px is not None and py is not None:
        (lbx, lpx), (lby, lpy) = px, py
        # term(u) = bx^{t-u} by^{tau-u}; with v = tau - u the sum is geometric
        # in r = bx * by over v = tau - cap .. tau.
        log_r = lbx + lby
        v0 = tau - cap
        ln = (lpx + lpy + (t - tau) * lbx
              + v0 * log_r + _log_geom_sum(log_r, cap + 1))
        return _exp(ln)
    terms = [x.log_value(s, u, t) + y.log_value(2.0 - s, u, tau) for u in range(cap + 1)]
    return _exp(_log_sum(terms))
