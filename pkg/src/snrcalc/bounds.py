"""End-to-end bound computation for tandems of fading channels.

The stability kernel is

    V(s) = e^{s rho(s)} * M_g(1 - s),

with rho the aggregate (through + cross) rate; the network bounds follow
from the geometric-series form of the deconvolution kernel

    M(s, tau, t) <= e^{s (rho(s)(t-tau) + sigma(s) + N sigma_c(s))} / (1 - V(s))^N

for tau <= t, and for delay probes (tau = t + w) from the tightened
two-branch tail estimate with the min{1, V^w w^{N-1}} factor.  Everything is
evaluated in log space and optimized over s > 0 by a coarse log-spaced scan
followed by golden-section refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, PreconditionError
from .fading import ChannelSpec
from .mellin import IidSlotPower, MellinModel, _log_binomial
from .traffic import TrafficSpec, traffic_model

_INF = math.inf
_EXP_MAX = 700.0
# V must clear 1 by this margin before log(1 - V) is evaluated.
_STABILITY_MARGIN = 1e-12
_LN_ONE_MINUS_MARGIN = math.log1p(-_STABILITY_MARGIN)

_SCAN_LO = 1e-6
_SCAN_HI = 64.0
_SCAN_POINTS = 256
_SCAN_HI_MAX = 4096.0
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NetworkSpec:
    """An N-hop tandem of i.i.d. channels with a through flow and optional
    per-hop cross traffic (identical envelope at every hop)."""

    hops: int
    channel: ChannelSpec
    through: TrafficSpec
    cross: TrafficSpec | None = None
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.hops < 1:
            raise DomainError("hop count must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("violation probability must lie in (0, 1)")

    def rho_total(self, s) -> float:
        rho = self.through.rho_at(s)
        if self.cross is not None:
            rho += self.cross.rho_at(s)
        return rho

    def sigma_total(self, s) -> float:
        sig = self.through.sigma_at(s)
        if self.cross is not None:
            sig += self.hops * self.cross.sigma_at(s)
        return sig


@dataclass(frozen=True)
class OptReport:
    """Diagnostics of one s-optimization."""

    feasible_s: tuple | None
    evaluations: int
    s_hi_used: float
    refined: bool = False


@dataclass(frozen=True)
class BoundResult:
    value: float
    s_star: float
    stable: bool
    kernel_at_s_star: float
    unit: str
    diagnostics: OptReport = field(default=None)

    def __post_init__(self):
        if not self.stable and self.value != _INF:
            raise DomainError("unstable results must carry an infinite value")


def kernel_V_ln(net: NetworkSpec, s, _cache=None) -> float:
    """ln V(s); with cross traffic this is ln V_o(s) (aggregate rate inside)."""
    if _cache is not None:
        hit = _cache.get(s)
        if hit is not None:
            return hit
    g_ln = net.channel.fading.g_mellin_ln(net.channel.gamma_bar, 1.0 - s)
    out = s * net.rho_total(s) + g_ln
    if _cache is not None:
        _cache[s] = out
    return out


def kernel_V(net: NetworkSpec, s) -> float:
    """Per-slot stability kernel V(s) (V_o(s) with cross traffic)."""
    if s <= 0:
        raise PreconditionError("kernel needs s > 0")
    ln_v = kernel_V_ln(net, s)
    if ln_v > _EXP_MAX:
        return _INF
    return math.exp(ln_v)


def m_kernel_ln(net: NetworkSpec, s, tau, t, _cache=None) -> float:
    """ln of the geometric-form deconvolution kernel; +inf when V(s) >= 1.

    For tau <= t this is the N-hop closed form; for tau = t + w it is the
    tightened delay estimate with the min{1, V^w w^{N-1}} branch (the branch
    only applies for w >= 1).
    """
    if s <= 0:
        raise PreconditionError("kernel needs s > 0")
    if tau < 0 or t < 0:
        raise DomainError("tau and t must be nonnegative")
    ln_v = kernel_V_ln(net, s, _cache)
    if ln_v >= _LN_ONE_MINUS_MARGIN:
        return _INF
    n = net.hops
    log1m_v = math.log1p(-math.exp(ln_v))
    out = s * (net.through.rho_at(s) * (t - tau) + net.sigma_total(s)) - n * log1m_v
    w = tau - t
    if w > 0:
        out += min(0.0, w * ln_v + (n - 1) * math.log(w))
    return out


def m_kernel(net: NetworkSpec, s, tau, t) -> float:
    ln_val = m_kernel_ln(net, s, tau, t)
    if ln_val > _EXP_MAX:
        return _INF
    return math.exp(ln_val)


def cascade_mellin_ln(net: NetworkSpec, s, tau, t) -> float:
    """ln of the N-channel cascade service bound (s < 1):
    C(N-1+t-tau, t-tau) * (M_g(s) e^{(1-s) rho_c(1-s)})^{t-tau}, with an
    e^{(1-s) N sigma_c(1-s)} prefactor when cross traffic is present."""
    if s >= 1:
        raise PreconditionError("cascade bound needs s < 1")
    if not 0 <= tau <= t:
        raise DomainError("need 0 <= tau <= t")
    span = t - tau
    out = _log_binomial(net.hops - 1 + span, span)
    if net.cross is not None:
        theta = 1.0 - s
        out += theta * net.hops * net.cross.sigma_at(theta)
    if span > 0:
        base = net.channel.fading.g_mellin_ln(net.channel.gamma_bar, s)
        if net.cross is not None:
            theta = 1.0 - s
            base += theta * net.cross.rho_at(theta)
        out += span * base
    return out


def cascade_mellin(net: NetworkSpec, s, tau, t) -> float:
    ln_val = cascade_mellin_ln(net, s, tau, t)
    if ln_val > _EXP_MAX:
        return _INF
    return math.exp(ln_val)


def leftover_service(service: MellinModel, cross: TrafficSpec, s, tau, t) -> float:
    """Mellin bound of the leftover server S / A_c for s < 1:
    M_S(s, tau, t) * M_{A_c}(2 - s, tau, t)."""
    if s >= 1:
        raise PreconditionError("leftover service bound needs s < 1")
    sv = service.log_value(s, tau, t)
    cv = traffic_model(cross).log_value(2.0 - s, tau, t)
    ln_val = sv + cv
    if ln_val > _EXP_MAX:
        return _INF
    return math.exp(ln_val)


def leftover_service_model(channel: ChannelSpec, cross: TrafficSpec) -> IidSlotPower:
    """Per-hop leftover service as a slot-power model with the burst prefactor
    e^{(1-s) sigma_c(1-s)} and base M_g(s) e^{(1-s) rho_c(1-s)}; s < 1."""
    g_ln = channel.fading.g_mellin_ln
    gbar = channel.gamma_bar
    return IidSlotPower(
        log_base=lambda s: g_ln(gbar, s) + (1.0 - s) * cross.rho_at(1.0 - s),
        log_prefactor=lambda s: (1.0 - s) * cross.sigma_at(1.0 - s),
        validity=(-_INF, 1.0),
    )


def optimize_s(objective, s_lo=_SCAN_LO, s_hi=_SCAN_HI, points=_SCAN_POINTS,
               rel_tol=1e-6, s_hi_max=_SCAN_HI_MAX):
    """Minimize a +inf-extended objective over s > 0.

    Log-spaced scan, automatic doubling of the upper limit while the minimum
    sits on a finite boundary, then golden-section refinement in ln s down to
    relative width ``rel_tol``.  Returns (s_star, value, report); an entirely
    infeasible objective yields (nan, +inf, report).
    """
    ln_lo, ln_hi = math.log(s_lo), math.log(s_hi)
    step = (ln_hi - ln_lo) / (points - 1)
    grid = [ln_lo + i * step for i in range(points)]
    vals = [objective(math.exp(g)) for g in grid]
    evals = points

    while True:
        finite = [i for i, v in enumerate(vals) if v < _INF]
        if not finite:
            return math.nan, _INF, OptReport(None, evals, math.exp(grid[-1]))
        best = min(finite, key=lambda i: vals[i])
        if best == len(grid) - 1 and math.exp(grid[-1]) < s_hi_max:
            top = grid[-1]
            extra = [top + (i + 1) * step for i in range(points // 2)]
            extra = [g for g in extra if math.exp(g) <= s_hi_max * (1 + 1e-9)]
            if not extra:
                break
            grid.extend(extra)
            vals.extend(objective(math.exp(g)) for g in extra)
            evals += len(extra)
            continue
        break

    feasible = (math.exp(grid[finite[0]]), math.exp(grid[finite[-1]]))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    best_x, best_v = grid[best], vals[best]

    # Golden-section on ln s; tolerance in ln units equals relative width.
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = objective(math.exp(c))
    fd = objective(math.exp(d))
    evals += 2
    while b - a > rel_tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(math.exp(d))
        evals += 1
        if fc < best_v:
            best_x, best_v = c, fc
        if fd < best_v:
            best_x, best_v = d, fd

    report = OptReport(feasible, evals, math.exp(grid[-1]), refined=True)
    return math.exp(best_x), best_v, report


def _stability_objective(net, cache):
    def f(s):
        return kernel_V_ln(net, s, cache)

    return f


def _tail_term(net, s, cache, ln_eps):
    ln_v = kernel_V_ln(net, s, cache)
    if ln_v >= _LN_ONE_MINUS_MARGIN:
        return None
    log1m_v = math.log1p(-math.exp(ln_v))
    return -(net.hops * log1m_v + ln_eps) / s


def _finish(net, s_star, value, report, unit, cache):
    stable = value < _INF
    kernel = math.exp(kernel_V_ln(net, s_star, cache)) if stable else _INF
    return BoundResult(value=value, s_star=s_star, stable=stable,
                       kernel_at_s_star=kernel, unit=unit, diagnostics=report)


def backlog_bound(net: NetworkSpec) -> BoundResult:
    """Backlog quantile bound b_eps in nats:
    inf_{s>0} { sigma(s) + N sigma_c(s) - (N log(1 - V(s)) + log eps)/s }."""
    cache = {}
    ln_eps = math.log(net.epsilon)

    def objective(s):
        tail = _tail_term(net, s, cache, ln_eps)
        if tail is None:
            return _INF
        return net.sigma_total(s) + tail

    s_star, value, report = optimize_s(objective)
    return _finish(net, s_star, value, report, "nats", cache)


def output_bound(net: NetworkSpec, tau, t) -> BoundResult:
    """Output burstiness bound d_eps(tau, t) in nats; for tau = t it equals
    the backlog bound."""
    if not 0 <= tau <= t:
        raise PreconditionError("need 0 <= tau <= t")
    cache = {}
    ln_eps = math.log(net.epsilon)
    span = t - tau

    def objective(s):
        tail = _tail_term(net, s, cache, ln_eps)
        if tail is None:
            return _INF
        return net.through.rho_at(s) * span + net.sigma_total(s) + tail

    s_star, value, report = optimize_s(objective)
    return _finish(net, s_star, value, report, "nats", cache)


def delay_violation_ln(net: NetworkSpec, w, _cache=None):
    """ln of the optimized bound on P(delay > w): inf_s ln M(s, t+w, t).

    Returns (ln bound, s_star, report)."""
    cache = {} if _cache is None else _cache

    def objective(s):
        return m_kernel_ln(net, s, w, 0, _cache=cache)

    s_star, value, report = optimize_s(objective)
    return value, s_star, report


def delay_bound(net: NetworkSpec) -> BoundResult:
    """Smallest integer w (slots) whose optimized violation bound is <= eps.

    Exponential ramp to bracket, integer bisection, then a short downward
    walk in case the two-branch bound is locally non-monotone in w.
    """
    cache = {}
    ln_eps = math.log(net.epsilon)

    def ln_bound(w):
        value, s_star, report = delay_violation_ln(net, w, _cache=cache)
        return value, s_star, report

    v0, s0, rep0 = ln_bound(0)
    if v0 == _INF and rep0.feasible_s is None:
        return BoundResult(value=_INF, s_star=math.nan, stable=False,
                           kernel_at_s_star=_INF, unit="slots", diagnostics=rep0)
    if v0 <= ln_eps:
        return _finish(net, s0, 0.0, rep0, "slots", cache)

    lo, hi = 0, 1
    v_hi, s_hi, rep_hi = ln_bound(hi)
    while v_hi > ln_eps:
        lo, hi = hi, hi * 2
        if hi > 2 ** 41:
            return BoundResult(value=_INF, s_star=math.nan, stable=False,
                               kernel_at_s_star=_INF, unit="slots",
                               diagnostics=rep_hi)
        v_hi, s_hi, rep_hi = ln_bound(hi)

    while hi - lo > 1:
        mid = (lo + hi) // 2
        v_mid, s_mid, rep_mid = ln_bound(mid)
        if v_mid <= ln_eps:
            hi, v_hi, s_hi, rep_hi = mid, v_mid, s_mid, rep_mid
        else:
            lo = mid

    for _ in range(1024):  # guard against local non-monotonicity near the kink
        if hi == 0:
            break
        v_prev, s_prev, rep_prev = ln_bound(hi - 1)
        if v_prev <= ln_eps:
            hi, v_hi, s_hi, rep_hi = hi - 1, v_prev, s_prev, rep_prev
        else:
            break

    return _finish(net, s_hi, float(hi), rep_hi, "slots", cache)


def min_stability_kernel(net: NetworkSpec):
    """(s, V(s)) at the scan minimum of the kernel; V < 1 means stable."""
    cache = {}
    s_star, ln_v, _ = optimize_s(_stability_objective(net, cache))
    return s_star, math.exp(ln_v) if ln_v < _EXP_MAX else _INF
