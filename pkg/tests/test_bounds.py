"""Tests for the bounds engine: kernels, closed forms, optimizers, and the
end-to-end backlog/delay/output bounds."""

import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from snrcalc import (ChannelSpec, DomainError, NetworkSpec, PreconditionError,
                     TrafficSpec, backlog_bound, cascade_mellin, delay_bound,
                     delay_violation_ln, kernel_V, leftover_service,
                     leftover_service_model, m_kernel, min_stability_kernel,
                     optimize_s, output_bound, rayleigh_service_mellin)
import snrcalc.bounds as B

NATS = math.log(2.0)
SIGMA_FIG4 = 50_000 * NATS          # 50 kb
RHO_FIG4 = 1.5 * NATS               # 30 kbps at 20 kHz
RHO_20 = 1.0 * NATS                 # 20 kbps at 20 kHz


def make_net(db=10.0, hops=1, eps=1e-4, sigma=SIGMA_FIG4, rho=RHO_FIG4, cross=None):
    return NetworkSpec(hops=hops, channel=ChannelSpec(gamma_bar=10 ** (db / 10)),
                       through=TrafficSpec(sigma, rho), cross=cross, epsilon=eps)


class TestKernelV:
    def test_boundary_at_zero_rate(self):
        net = make_net(rho=0.0, sigma=0.0)
        # V(s) -> M_g(1) = 1 as s -> 0+
        assert kernel_V(net, 1e-9) == pytest.approx(1.0, abs=1e-6)

    def test_against_quadrature(self):
        # V(0.5) = e^{0.5 rho} e^{1/10} 10^{-0.5} Gamma(0.5, 0.1)
        gamma_half, _ = integrate.quad(lambda t: t ** (-0.5) * math.exp(-t), 0.1, np.inf)
        expect = math.exp(0.5 * RHO_FIG4) * math.exp(0.1) * 10 ** -0.5 * gamma_half
        assert kernel_V(make_net(10.0), 0.5) == pytest.approx(expect, rel=1e-9)

    def test_zero_cross_rate_reduces(self):
        plain = make_net(12.0)
        crossed = make_net(12.0, cross=TrafficSpec(0.0, 0.0))
        for s in np.geomspace(0.01, 8.0, 30):
            assert kernel_V(crossed, s) == kernel_V(plain, s)

    def test_cross_rate_enters_exponent(self):
        crossed = make_net(12.0, cross=TrafficSpec(0.0, 0.4))
        plain = make_net(12.0)
        s = 1.1
        assert kernel_V(crossed, s) == pytest.approx(
            kernel_V(plain, s) * math.exp(s * 0.4), rel=1e-12)


class TestMKernel:
    def test_point_interval_single_hop(self):
        net = make_net(sigma=3.0, rho=0.5)
        for s in (0.4, 1.1, 2.0):
            v = kernel_V(net, s)
            expect = math.exp(s * 3.0) / (1.0 - v)
            assert m_kernel(net, s, 6, 6) == pytest.approx(expect, rel=1e-12)

    def test_single_hop_formula_all_offsets(self):
        net = make_net(sigma=2.0, rho=0.8)
        for tau, t, s in [(3, 9, 0.7), (9, 9, 1.3), (15, 4, 0.9)]:
            ln_v = B.kernel_V_ln(net, s)
            v = math.exp(ln_v)
            w = max(tau - t, 0)
            ln_single = s * (0.8 * (t - tau) + 2.0) + w * ln_v - math.log1p(-v)
            assert B.m_kernel_ln(net, s, tau, t) == pytest.approx(ln_single, rel=1e-9)

    def test_unstable_s_gives_inf(self):
        net = make_net(db=0.0)  # unstable at every s
        assert m_kernel(net, 0.5, 2, 5) == math.inf

    def test_partial_binomial_sums_converge(self):
        # sum_u C(N-1+u, u) x^u -> (1-x)^{-N}
        n, x = 5, 0.7
        total, term = 0.0, 1.0
        u = 0
        while True:
            total += math.comb(n - 1 + u, u) * x ** u
            u += 1
            if math.comb(n - 1 + u, u) * x ** u < 1e-12 * total * (1 - x):
                break
        assert total == pytest.approx((1 - x) ** -n, rel=1e-9)


class TestCascade:
    def test_single_hop_reduction(self):
        net = make_net(db=10.0, hops=1)
        for s in (0.2, 0.6, 0.95):
            assert cascade_mellin(net, s, 2, 7) == pytest.approx(
                rayleigh_service_mellin(10.0, s, 2, 7), rel=1e-12)

    def test_empty_interval(self):
        assert cascade_mellin(make_net(hops=2), 0.5, 4, 4) == 1.0

    def test_split_enumeration(self):
        # brute force over all monotone split sequences tau=u0<=...<=uN=t
        hops, span, s = 3, 4, 0.5
        net = make_net(db=8.0, hops=hops)
        base = math.exp(net.channel.fading.g_mellin_ln(net.channel.gamma_bar, s))
        splits = list(itertools.combinations_with_replacement(range(span + 1), hops - 1))
        total = 0.0
        count = 0
        for mids in splits:
            pts = [0, *mids, span]
            total += math.prod(base ** (b - a) for a, b in zip(pts, pts[1:]))
            count += 1
        assert count == math.comb(hops - 1 + span, span)
        assert cascade_mellin(net, s, 0, span) == pytest.approx(total, rel=1e-12)

    def test_requires_s_below_one(self):
        with pytest.raises(PreconditionError):
            cascade_mellin(make_net(), 1.0, 0, 3)

    def test_nondecreasing_in_hops(self):
        for s in (0.3, 0.8):
            vals = [cascade_mellin(make_net(hops=n), s, 0, 6) for n in (1, 2, 5, 9)]
            assert all(a <= b for a, b in zip(vals, vals[1:]))


class TestLeftoverService:
    def test_zero_cross_reduces_to_service(self):
        net = make_net(db=9.0)
        model = leftover_service_model(net.channel, TrafficSpec(0.0, 0.0))
        for s in (0.2, 0.7):
            assert model.value(s, 1, 5) == pytest.approx(
                rayleigh_service_mellin(net.channel.gamma_bar, s, 1, 5), rel=1e-12)

    def test_point_interval_burst_prefactor(self):
        cross = TrafficSpec(2.0, 0.3)
        model = leftover_service_model(ChannelSpec(gamma_bar=5.0), cross)
        s = 0.4
        assert model.value(s, 3, 3) == pytest.approx(math.exp((1 - s) * 2.0), rel=1e-12)

    def test_matches_product_form(self):
        channel = ChannelSpec(gamma_bar=7.0)
        cross = TrafficSpec(1.0, 0.5)
        from snrcalc.fading import rayleigh_service_model
        svc = rayleigh_service_model(7.0)
        model = leftover_service_model(channel, cross)
        for s, tau, t in [(0.3, 0, 4), (0.8, 2, 6)]:
            assert model.value(s, tau, t) == pytest.approx(
                leftover_service(svc, cross, s, tau, t), rel=1e-12)

    def test_requires_s_below_one(self):
        from snrcalc.fading import rayleigh_service_model
        with pytest.raises(PreconditionError):
            leftover_service(rayleigh_service_model(5.0), TrafficSpec(1.0, 1.0), 1.2, 0, 3)


class TestOptimizeS:
    def test_known_quadratic(self):
        s_star, value, report = optimize_s(lambda s: (s - 2.0) ** 2)
        assert s_star == pytest.approx(2.0, abs=1e-5)
        assert value == pytest.approx(0.0, abs=1e-9)
        assert report.refined

    def test_infeasible(self):
        s_star, value, report = optimize_s(lambda s: math.inf)
        assert math.isnan(s_star) and value == math.inf
        assert report.feasible_s is None

    def test_beats_dense_grid(self):
        net = make_net(10.0, hops=3, eps=1e-3)
        cache = {}
        ln_eps = math.log(net.epsilon)

        def objective(s):
            tail = B._tail_term(net, s, cache, ln_eps)
            if tail is None:
                return math.inf
            return net.sigma_total(s) + tail

        _, engine, _ = optimize_s(objective)
        grid = np.geomspace(1e-6, 64.0, 10_000)
        dense = min(objective(float(s)) for s in grid)
        assert engine <= dense * (1 + 1e-6)

    def test_boundary_extension(self):
        # minimum beyond the default 64 cap: extension finds it
        s_star, value, report = optimize_s(lambda s: (math.log(s) - math.log(100.0)) ** 2)
        assert s_star == pytest.approx(100.0, rel=1e-4)
        assert report.s_hi_used > 64.0


class TestBacklogBound:
    def test_epsilon_one_sanity(self):
        # with log eps = 0 the bound reduces to sigma - (N/s) log(1 - V) >= sigma
        net = make_net(10.0, eps=1.0 - 1e-12)
        res = backlog_bound(net)
        assert res.stable
        assert res.value >= SIGMA_FIG4 - 1e-6

    def test_nonincreasing_in_snr(self):
        vals = [backlog_bound(make_net(db)).value for db in (6.0, 8.0, 10.0, 14.0, 20.0, 30.0)]
        assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_saturation_threshold_fig4_regime(self):
        # engine-determined saturation on the 1 dB figure grid: first stable
        # point at 4 dB, unstable from 3 dB down, independent of hop count
        for hops in (1, 5, 20):
            stable = {db: backlog_bound(make_net(db, hops=hops)).stable
                      for db in (0.0, 3.0, 4.0, 5.0, 6.0, 10.0)}
            assert not stable[0.0] and not stable[3.0]
            assert stable[4.0] and stable[5.0] and stable[6.0] and stable[10.0]

    def test_unstable_contract(self):
        res = backlog_bound(make_net(0.0, hops=20))
        assert not res.stable and res.value == math.inf
        assert math.isnan(res.s_star)

    def test_result_invariants(self):
        res = backlog_bound(make_net(10.0))
        assert res.stable and res.kernel_at_s_star < 1.0
        assert res.diagnostics.feasible_s is not None


class TestOutputBound:
    def test_point_interval_equals_backlog(self):
        net = make_net(11.0, hops=2)
        assert output_bound(net, 5, 5).value == backlog_bound(net).value

    def test_nondecreasing_in_span(self):
        net = make_net(11.0)
        vals = [output_bound(net, 0, t).value for t in (0, 1, 5, 20, 100)]
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_single_hop_dual_path(self):
        # independent single-hop evaluation of the same objective
        net = make_net(9.0, hops=1, eps=1e-3)
        span = 7
        engine = output_bound(net, 0, span)
        grid = np.geomspace(1e-6, 64, 4000)
        best = math.inf
        for s in grid:
            v = kernel_V(net, float(s))
            if v >= 1.0 - 1e-12:
                continue
            val = (RHO_FIG4 * span + SIGMA_FIG4
                   - (math.log1p(-v) + math.log(net.epsilon)) / s)
            best = min(best, val)
        assert engine.value <= best * (1 + 1e-9)
        assert engine.value >= best * (1 - 1e-6)


class TestDelayBound:
    def test_matches_linear_scan(self):
        # oracle: scan w upward using the same per-w optimized violation bound
        net = make_net(10.0, hops=1, eps=1e-2, sigma=30.0, rho=1.0)
        res = delay_bound(net)
        ln_eps = math.log(net.epsilon)
        scan = next(w for w in range(0, 10_000)
                    if delay_violation_ln(net, w)[0] <= ln_eps)
        assert res.value == scan

    def test_epsilon_one_boundary(self):
        # at eps = 1 the bound is the smallest w with optimized kernel <= 1
        net = make_net(25.0, hops=1, eps=1.0 - 1e-9, sigma=0.0, rho=0.1)
        res = delay_bound(net)
        ln_eps = math.log(net.epsilon)
        scan = next(w for w in range(0, 100)
                    if delay_violation_ln(net, w)[0] <= ln_eps)
        assert res.value == scan
        assert res.value <= 1

    def test_unstable(self):
        res = delay_bound(make_net(0.0))
        assert not res.stable and res.value == math.inf

    def test_monotone_sweeps(self):
        base = delay_bound(make_net(12.0, hops=2, eps=1e-3)).value
        assert delay_bound(make_net(16.0, hops=2, eps=1e-3)).value <= base
        assert delay_bound(make_net(12.0, hops=4, eps=1e-3)).value >= base
        assert delay_bound(make_net(12.0, hops=2, eps=1e-3,
                                    rho=RHO_FIG4 * 1.2)).value >= base
        assert delay_bound(make_net(12.0, hops=2, eps=1e-5)).value >= base


class TestReductions:
    def test_hundred_point_grid(self):
        # N=1 cascade vs single hop and zero-cross vs plain, across a grid
        rng = np.random.default_rng(31)
        for _ in range(100):
            db = rng.uniform(6.0, 25.0)
            s = rng.uniform(0.05, 0.95)
            span = rng.integers(0, 8)
            gbar = 10 ** (db / 10)
            net1 = make_net(db, hops=1)
            assert cascade_mellin(net1, s, 0, span) == pytest.approx(
                rayleigh_service_mellin(gbar, s, 0, span), rel=1e-9)
            eps = 10 ** rng.uniform(-8, -2)
            hops = int(rng.integers(1, 6))
            plain = make_net(db, hops=hops, eps=eps)
            crossed = make_net(db, hops=hops, eps=eps, cross=TrafficSpec(0.0, 0.0))
            b1, b2 = backlog_bound(plain), backlog_bound(crossed)
            assert b1.value == pytest.approx(b2.value, rel=1e-9)


class TestCrossTraffic:
    def test_cross_traffic_increases_bounds(self):
        plain = make_net(14.0, hops=3, eps=1e-3)
        crossed = make_net(14.0, hops=3, eps=1e-3,
                           cross=TrafficSpec(5000 * NATS, 0.5 * NATS))
        assert backlog_bound(crossed).value > backlog_bound(plain).value
        assert delay_bound(crossed).value >= delay_bound(plain).value

    def test_burst_adds_per_hop(self):
        sigma_c = 1000 * NATS
        for hops in (1, 4):
            crossed = make_net(14.0, hops=hops, eps=1e-3, cross=TrafficSpec(sigma_c, 0.0))
            plain = make_net(14.0, hops=hops, eps=1e-3)
            gap = backlog_bound(crossed).value - backlog_bound(plain).value
            assert gap >= hops * sigma_c - 1e-6


class TestStabilityDichotomy:
    def test_finite_iff_kernel_below_one(self):
        for db in (2.0, 3.5, 4.0, 7.0, 15.0):
            net = make_net(db, hops=2)
            _, vmin = min_stability_kernel(net)
            res = backlog_bound(net)
            assert res.stable == (vmin < 1.0)
            assert res.stable == (res.value < math.inf)


class TestNetworkSpecValidation:
    def test_bad_hops(self):
        with pytest.raises(DomainError):
            make_net(hops=0)

    def test_bad_epsilon(self):
        with pytest.raises(DomainError):
            make_net(eps=0.0)
        with pytest.raises(DomainError):
            make_net(eps=1.0)
