"""Tests for bit/SNR sample-path arithmetic.

Brute-force loop oracles are implemented locally and kept independent of the
vectorized library paths they check.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snrcalc import (BitProcess, DimensionError, DomainError, SnrProcess,
                     TraceError, aggregate_snr, backlog_of, delay_of,
                     minplus_convolve, mx_convolve, mx_deconvolve,
                     null_process, pointwise_min, to_bit, to_snr,
                     unity_process)


def random_bit(rng, horizon, scale=2.0):
    return BitProcess.from_increments(rng.random(horizon) * scale)


def random_snr(rng, horizon, scale=1.0):
    return to_snr(random_bit(rng, horizon, scale))


def brute_minplus(a, s, tau, t):
    return min(a.value(tau, u) + s.value(u, t) for u in range(tau, t + 1))


def brute_mx(x, y, tau, t):
    return min(x.value(tau, u) * y.value(u, t) for u in range(tau, t + 1))


def brute_deconv(x, y, tau, t):
    return max(x.value(u, t) / y.value(u, tau) for u in range(tau + 1))


class TestMinplusConvolve:
    def test_zero_arrivals(self):
        rng = np.random.default_rng(0)
        a = BitProcess.zero(6)
        s = random_bit(rng, 6)
        out = minplus_convolve(a, s)
        for tau in range(7):
            for t in range(tau, 7):
                expect = min(s.value(u, t) for u in range(tau, t + 1))
                assert out.value(tau, t) == pytest.approx(expect, abs=1e-15)

    def test_linear_rates(self):
        # A(tau,t) = t - tau against S(tau,t) = 2(t - tau): candidates are
        # (u - tau) + 2(t - u), minimized at the latest u, so result(0,4) = 4.
        a = BitProcess.from_increments(np.ones(4))
        s = BitProcess.from_increments(2 * np.ones(4))
        out, wit = minplus_convolve(a, s, return_witness=True)
        assert out.value(0, 4) == pytest.approx(4.0)
        assert wit[0, 4] == 4

    def test_earliest_witness_on_tie(self):
        # all-zero operands tie at every u; the reported index is the earliest
        a = BitProcess.zero(5)
        out, wit = minplus_convolve(a, a, return_witness=True)
        assert wit[1, 4] == 1

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            a = random_bit(rng, 8)
            s = random_bit(rng, 8)
            out = minplus_convolve(a, s)
            for tau in range(9):
                for t in range(tau, 9):
                    assert out.value(tau, t) == pytest.approx(
                        brute_minplus(a, s, tau, t), rel=1e-13, abs=1e-13)

    def test_horizon_mismatch(self):
        with pytest.raises(DimensionError):
            minplus_convolve(BitProcess.zero(3), BitProcess.zero(4))


class TestMxConvolve:
    def test_unity_element(self):
        rng = np.random.default_rng(2)
        x = random_snr(rng, 7)
        delta = unity_process(7)
        out = mx_convolve(delta, x)
        for tau in range(8):
            for t in range(tau, 8):
                assert out.value(tau, t) == pytest.approx(x.value(tau, t), rel=1e-15)

    def test_homomorphism(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_bit(rng, 10)
            s = random_bit(rng, 10)
            lhs = to_snr(minplus_convolve(a, s))
            rhs = mx_convolve(to_snr(a), to_snr(s))
            assert np.allclose(np.triu(lhs.matrix()), np.triu(rhs.matrix()), rtol=1e-12)

    def test_powers(self):
        x = SnrProcess.from_factors([2.0] * 3)
        y = SnrProcess.from_factors([3.0] * 3)
        out = mx_convolve(x, y)
        # inf_u 2^u 3^{3-u} = 2^3 = 8
        assert out.value(0, 3) == pytest.approx(8.0)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = random_snr(rng, 8)
            y = random_snr(rng, 8)
            out = mx_convolve(x, y)
            for tau in range(9):
                for t in range(tau, 9):
                    assert out.value(tau, t) == pytest.approx(
                        brute_mx(x, y, tau, t), rel=1e-12)

    def test_nonpositive_rejected(self):
        with pytest.raises(DomainError):
            SnrProcess.from_factors([1.0, 0.0, 2.0])


class TestMxDeconvolve:
    def test_unit_denominator(self):
        rng = np.random.default_rng(5)
        x = random_snr(rng, 8)
        ones = SnrProcess.ones(8)
        for tau in range(9):
            for t in range(9):
                expect = max(x.value(u, t) for u in range(tau + 1))
                assert mx_deconvolve(x, ones, tau, t) == pytest.approx(expect, rel=1e-15)

    def test_self_ratio(self):
        rng = np.random.default_rng(6)
        x = random_snr(rng, 8)
        for tau in range(9):
            assert mx_deconvolve(x, x, tau, tau) == pytest.approx(1.0, rel=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = random_snr(rng, 8)
            y = random_snr(rng, 8)
            for tau in range(9):
                for t in range(9):
                    assert mx_deconvolve(x, y, tau, t) == pytest.approx(
                        brute_deconv(x, y, tau, t), rel=1e-12)

    def test_bound_semantics_on_queue_traces(self):
        # For a work-conserving queue D = A * S, so D(tau,t) <= A (/) S (tau,t)
        # and the backlog in the SNR domain is bounded by the t,t evaluation.
        rng = np.random.default_rng(8)
        horizon = 24
        for _ in range(10):
            arr = rng.random(horizon) * 1.5
            cap = rng.random(horizon) * 2.0
            q = 0.0
            dep = []
            for t in range(horizon):
                tot = q + arr[t]
                served = min(tot, cap[t])
                dep.append(served)
                q = tot - served
            a = BitProcess.from_increments(arr)
            s = BitProcess.from_increments(cap)
            d = BitProcess.from_increments(dep)
            sa, ss, sd = to_snr(a), to_snr(s), to_snr(d)
            for tau in range(0, horizon + 1, 4):
                for t in range(tau, horizon + 1, 4):
                    assert sd.value(tau, t) <= mx_deconvolve(sa, ss, tau, t) * (1 + 1e-12)
            for t in range(horizon + 1):
                ratio = sa.value(0, t) / sd.value(0, t)
                assert ratio <= mx_deconvolve(sa, ss, t, t) * (1 + 1e-12)


class TestBacklogDelay:
    def test_backlog_trivial(self):
        a = BitProcess.from_cumulative([0.0, 4.0, 10.0])
        d = BitProcess.from_cumulative([0.0, 3.0, 7.0])
        assert backlog_of(a, a, 2) == 0.0
        assert backlog_of(a, d, 2) == pytest.approx(3.0)

    def test_backlog_causality(self):
        a = BitProcess.from_cumulative([0.0, 1.0, 2.0])
        d = BitProcess.from_cumulative([0.0, 1.5, 3.0])
        with pytest.raises(TraceError):
            backlog_of(a, d, 2)

    def test_backlog_matches_incremental_queue(self):
        rng = np.random.default_rng(9)
        horizon = 50
        arr = rng.random(horizon)
        cap = rng.random(horizon)
        q = 0.0
        dep = []
        queues = [0.0]
        for t in range(horizon):
            tot = q + arr[t]
            served = min(tot, cap[t])
            dep.append(served)
            q = tot - served
            queues.append(q)
        a = BitProcess.from_increments(arr)
        d = BitProcess.from_increments(dep)
        for t in range(horizon + 1):
            assert backlog_of(a, d, t) == pytest.approx(queues[t], abs=1e-12)

    def test_delay_zero_for_identity(self):
        a = BitProcess.from_increments([1.0, 2.0, 3.0])
        res = delay_of(a, a, 2)
        assert res.slots == 0 and not res.censored

    def test_delay_linear_scan_example(self):
        # A(0,2) = 5 with D(0, 2..4) = (4, 4, 6): first u with D >= 5 is u = 2
        a = BitProcess.from_cumulative([0.0, 5.0, 5.0, 5.0, 5.0, 5.0])
        d = BitProcess.from_cumulative([0.0, 2.0, 4.0, 4.0, 6.0, 8.0])
        assert delay_of(a, d, 2).slots == 2

    def test_delay_censored(self):
        a = BitProcess.from_cumulative([0.0, 5.0, 5.0])
        d = BitProcess.from_cumulative([0.0, 1.0, 2.0])
        res = delay_of(a, d, 1)
        assert res.censored and res.slots == 2

    def test_delay_matches_forward_scan(self):
        rng = np.random.default_rng(10)
        horizon = 40
        arr = rng.random(horizon) * 0.8
        cap = rng.random(horizon)
        q = 0.0
        dep = []
        for t in range(horizon):
            tot = q + arr[t]
            served = min(tot, cap[t])
            dep.append(served)
            q = tot - served
        a = BitProcess.from_increments(arr)
        d = BitProcess.from_increments(dep)
        for t in range(horizon + 1):
            res = delay_of(a, d, t)
            if res.censored:
                continue
            target = a.value(0, t)
            slack = 1e-9 * abs(target) + 1e-12
            scan = next(u for u in range(horizon - t + 1)
                        if target <= d.value(0, t + u) + slack)
            assert res.slots == scan


class TestDomainTransfer:
    def test_zero_path_maps_to_ones(self):
        q = to_snr(BitProcess.zero(5))
        assert np.allclose(q.matrix(), 1.0)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = random_bit(rng, 30)
            back = to_bit(to_snr(p))
            assert np.allclose(back.cumulative(), p.cumulative(), rtol=1e-12)

    def test_unit_rate(self):
        p = BitProcess.from_increments(np.ones(6))
        q = to_snr(p)
        for tau in range(7):
            for t in range(tau, 7):
                assert q.value(tau, t) == pytest.approx(math.exp(t - tau), rel=1e-12)

    def test_overflow_guard(self):
        with pytest.raises(DomainError):
            to_snr(BitProcess.from_increments([800.0]))


class TestAggregate:
    def test_single_flow(self):
        rng = np.random.default_rng(12)
        x = random_snr(rng, 6)
        agg = aggregate_snr([x])
        assert np.allclose(agg.matrix(), x.matrix())

    def test_two_unit_rate_flows(self):
        f = to_snr(BitProcess.from_increments(np.ones(5)))
        agg = aggregate_snr([f, f])
        for tau in range(6):
            for t in range(tau, 6):
                assert agg.value(tau, t) == pytest.approx(math.exp(2 * (t - tau)), rel=1e-12)

    def test_matches_log_sum(self):
        rng = np.random.default_rng(13)
        bits = [random_bit(rng, 8, scale=1.0) for _ in range(4)]
        agg = aggregate_snr([to_snr(b) for b in bits])
        total = np.sum([b.cumulative() for b in bits], axis=0)
        expect = to_snr(BitProcess.from_cumulative(total))
        assert np.allclose(agg.matrix(), expect.matrix(), rtol=1e-12)

    def test_empty_needs_horizon(self):
        with pytest.raises(DimensionError):
            aggregate_snr([])
        agg = aggregate_snr([], horizon=4)
        assert np.allclose(agg.matrix(), 1.0)


@st.composite
def snr_triples(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return tuple(random_snr(rng, 6) for _ in range(3))


class TestDioidLaws:
    @settings(max_examples=60, deadline=None)
    @given(snr_triples())
    def test_associativity(self, triple):
        x, y, z = triple
        lhs = mx_convolve(mx_convolve(x, y), z)
        rhs = mx_convolve(x, mx_convolve(y, z))
        assert np.allclose(np.triu(lhs.matrix()), np.triu(rhs.matrix()), rtol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(snr_triples())
    def test_distributivity_over_min(self, triple):
        x, y, z = triple
        lhs = mx_convolve(pointwise_min(x, y), z)
        rhs = pointwise_min(mx_convolve(x, z), mx_convolve(y, z))
        assert np.allclose(np.triu(lhs.matrix()), np.triu(rhs.matrix()), rtol=1e-12)

    def test_null_absorption(self):
        rng = np.random.default_rng(14)
        x = random_snr(rng, 5)
        n = null_process(5)
        out = mx_convolve(n, x)
        iu = np.triu_indices(6)
        assert np.all(np.isinf(out.matrix()[iu]))
