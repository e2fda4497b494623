"""Sample-path arithmetic for bivariate traffic and service processes.

Two domains are supported.  In the bit domain a process F(tau, t) holds
cumulative amounts in nats over the slot interval [tau, t), is nonnegative,
increasing in t, and vanishes on the diagonal.  In the SNR domain a process
X(tau, t) is the elementwise exponential of a bit-domain process: positive,
increasing in t, and equal to 1 on the diagonal.  Composition uses (min,+)
convolution in the bit domain and (min,x) convolution / deconvolution in the
SNR domain; the two are linked by ``to_snr`` / ``to_bit``.

All values are plain floats; +inf is a legal saturating value (it absorbs
under x and + and loses under min), which is how the null element and the
(min,x) unity element Delta are represented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, TraceError

# Maximum horizon for which convolution uses a single 3-d broadcast; larger
# horizons fall back to a row-by-row loop to bound peak memory.
_BROADCAST_LIMIT = 128

# Relative slack for monotonicity / causality checks on float inputs.
_REL_TOL = 1e-12


def _check_cumulative(cum, start, name):
    cum = np.asarray(cum, dtype=float)
    if cum.ndim != 1 or cum.size < 1:
        raise DimensionError(f"{name}: cumulative vector must be 1-d and non-empty")
    if cum[0] != start:
        raise DomainError(f"{name}: cumulative path must start at {start}, got {cum[0]}")
    diffs = np.diff(cum)
    scale = np.maximum(np.abs(cum[:-1]), 1.0)
    if diffs.size and np.any(diffs < -_REL_TOL * scale):
        raise DomainError(f"{name}: cumulative path must be nondecreasing")
    return cum


def _check_matrix(mat, diag, name, monotone=True):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name}: matrix form must be square")
    if not np.allclose(np.diag(mat), diag, rtol=0, atol=1e-12):
        raise DomainError(f"{name}: diagonal must equal {diag}")
    if monotone:
        d = np.diff(mat, axis=1)
        iu = np.triu_indices(mat.shape[0] - 1)
        scale = np.maximum(np.abs(mat[:-1, :-1][iu]), 1.0)
        if np.any(d[iu] < -_REL_TOL * scale):
            raise DomainError(f"{name}: values must be nondecreasing in t")
    return mat


class BitProcess:
    """Bivariate cumulative process in nats.

    Additive paths (built from per-slot increments) are stored as a single
    cumulative vector F(0, .) and reconstructed as F(0,t) - F(0,tau), so the
    memory cost is O(T).  Genuinely bivariate paths (e.g. convolution
    outputs) are stored as a full upper-triangular matrix.
    """

    __slots__ = ("_cum", "_mat")

    def __init__(self, cum=None, mat=None):
        self._cum = cum
        self._mat = mat

    @classmethod
    def from_increments(cls, increments) -> "BitProcess":
        inc = np.asarray(increments, dtype=float)
        if inc.ndim != 1:
            raise DimensionError("increments must be a 1-d array")
        if inc.size and inc.min() < 0:
            raise DomainError("per-slot increments must be nonnegative")
        cum = np.concatenate(([0.0], np.cumsum(inc)))
        return cls(cum=cum)

    @classmethod
    def from_cumulative(cls, cumulative) -> "BitProcess":
        return cls(cum=_check_cumulative(cumulative, 0.0, "BitProcess"))

    @classmethod
    def from_matrix(cls, values, validate=True) -> "BitProcess":
        mat = np.asarray(values, dtype=float)
        if validate:
            mat = _check_matrix(mat, 0.0, "BitProcess")
            if np.any(np.triu(mat) < 0):
                raise DomainError("BitProcess: values must be nonnegative")
        mat = np.triu(mat)
        return cls(mat=mat)

    @classmethod
    def zero(cls, horizon) -> "BitProcess":
        return cls(cum=np.zeros(horizon + 1))

    @property
    def horizon(self) -> int:
        base = self._cum if self._cum is not None else self._mat
        return base.shape[0] - 1

    @property
    def is_additive(self) -> bool:
        return self._cum is not None

    def cumulative(self) -> np.ndarray:
        """The ingress row F(0, .) as a vector."""
        if self._cum is not None:
            return self._cum
        return self._mat[0]

    def value(self, tau, t) -> float:
        if tau >= t:
            return 0.0
        if self._cum is not None:
            return float(self._cum[t] - self._cum[tau])
        return float(self._mat[tau, t])

    def matrix(self) -> np.ndarray:
        if self._mat is None:
            self._mat = np.triu(self._cum[None, :] - self._cum[:, None])
        return self._mat

    def __repr__(self):
        form = "additive" if self.is_additive else "matrix"
        return f"BitProcess(horizon={self.horizon}, {form})"


class SnrProcess:
    """Bivariate process of positive reals, increasing in t, 1 on the diagonal.

    ``validate=False`` on :meth:`from_matrix` skips the monotonicity check;
    this is needed for leftover-service sample paths, which are legitimate
    (min,x) operands but need not be increasing in t.
    """

    __slots__ = ("_cum", "_mat")

    def __init__(self, cum=None, mat=None):
        self._cum = cum
        self._mat = mat

    @classmethod
    def from_factors(cls, factors) -> "SnrProcess":
        fac = np.asarray(factors, dtype=float)
        if fac.ndim != 1:
            raise DimensionError("factors must be a 1-d array")
        if fac.size and fac.min() <= 0:
            raise DomainError("per-slot factors must be positive")
        cum = np.concatenate(([1.0], np.cumprod(fac)))
        return cls(cum=cum)

    @classmethod
    def from_cumulative(cls, cumulative) -> "SnrProcess":
        cum = _check_cumulative(cumulative, 1.0, "SnrProcess")
        if cum.min() <= 0:
            raise DomainError("SnrProcess: cumulative values must be positive")
        return cls(cum=cum)

    @classmethod
    def from_matrix(cls, values, validate=True) -> "SnrProcess":
        mat = np.asarray(values, dtype=float)
        if validate:
            mat = _check_matrix(mat, 1.0, "SnrProcess")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("SnrProcess: matrix form must be square")
        if np.any(mat[np.triu_indices(mat.shape[0])] <= 0):
            raise DomainError("SnrProcess: values must be positive")
        out = np.tril(np.ones_like(mat)) + np.triu(mat, k=1)
        np.fill_diagonal(out, np.diag(mat))
        return cls(mat=out)

    @classmethod
    def ones(cls, horizon) -> "SnrProcess":
        return cls(cum=np.ones(horizon + 1))

    @property
    def horizon(self) -> int:
        base = self._cum if self._cum is not None else self._mat
        return base.shape[0] - 1

    @property
    def is_additive(self) -> bool:
        return self._cum is not None

    def cumulative(self) -> np.ndarray:
        if self._cum is not None:
            return self._cum
        return self._mat[0]

    def value(self, tau, t) -> float:
        if tau >= t:
            return 1.0
        if self._cum is not None:
            return float(self._cum[t] / self._cum[tau])
        return float(self._mat[tau, t])

    def matrix(self) -> np.ndarray:
        if self._mat is None:
            ratio = self._cum[None, :] / self._cum[:, None]
            self._mat = np.triu(ratio, k=1) + np.tril(np.ones_like(ratio))
        return self._mat

    def __repr__(self):
        form = "additive" if self.is_additive else "matrix"
        return f"SnrProcess(horizon={self.horizon}, {form})"


def unity_process(horizon) -> SnrProcess:
    """The (min,x) unity element: Delta(tau,t) = 1 if tau >= t, +inf otherwise."""
    n = horizon + 1
    mat = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), np.inf, 1.0)
    proc = SnrProcess(mat=mat)
    return proc


def null_process(horizon) -> SnrProcess:
    """The (min,x) null element: +inf everywhere; absorbs under convolution."""
    n = horizon + 1
    return SnrProcess(mat=np.full((n, n), np.inf))


@dataclass(frozen=True)
class DelaySample:
    """Virtual delay in slots; ``censored`` means the true delay is >= slots."""

    slots: int
    censored: bool = False


def _require_same_horizon(x, y):
    if x.horizon != y.horizon:
        raise DimensionError(f"horizon mismatch: {x.horizon} != {y.horizon}")


def _masked(mat):
    # Entries with first index > second index are outside the candidate range
    # of the convolution sums; saturate them so they lose every min.
    n = mat.shape[0]
    return np.where(np.tri(n, k=-1, dtype=bool), np.inf, mat)


def _min_matmul(a, b, combine):
    """out[i, j] = min_u combine(a[i, u], b[u, j]), with earliest-u witness."""
    n = a.shape[0]
    if n <= _BROADCAST_LIMIT + 1:
        cand = combine(a[:, :, None], b[None, :, :])
        return cand.min(axis=1), cand.argmin(axis=1)
    out = np.empty((n, n))
    wit = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        cand = combine(a[i][:, None], b)
        out[i] = cand.min(axis=0)
        wit[i] = cand.argmin(axis=0)
    return out, wit


def minplus_convolve(a: BitProcess, s: BitProcess, return_witness=False):
    """(min,+) convolution: result(tau,t) = inf_{tau<=u<=t} A(tau,u) + S(u,t).

    Ties resolve at the earliest u; the realized index is available through
    ``return_witness``.
    """
    _require_same_horizon(a, s)
    am = _masked(a.matrix())
    sm = _masked(s.matrix())
    out, wit = _min_matmul(am, sm, np.add)
    out = np.triu(out)
    proc = BitProcess(mat=out)
    if return_witness:
        return proc, wit
    return proc


def mx_convolve(x: SnrProcess, y: SnrProcess, return_witness=False):
    """(min,x) convolution: result(tau,t) = inf_{tau<=u<=t} X(tau,u) * Y(u,t)."""
    _require_same_horizon(x, y)
    xm = _masked(x.matrix())
    ym = _masked(y.matrix())
    out, wit = _min_matmul(xm, ym, np.multiply)
    n = out.shape[0]
    below = np.tri(n, k=-1, dtype=bool)
    out = np.where(below, 1.0, out)
    proc = SnrProcess(mat=out)
    if return_witness:
        return proc, wit
    return proc


def mx_deconvolve(x: SnrProcess, y: SnrProcess, tau, t, return_witness=False):
    """(min,x) deconvolution evaluated at one point:
    sup_{0<=u<=tau} X(u,t) / Y(u,tau).

    ``t`` may be smaller than ``tau`` (delay probes); X(u,t) is 1 for u >= t.
    """
    _require_same_horizon(x, y)
    if not 0 <= tau <= x.horizon or not 0 <= t <= x.horizon:
        raise DimensionError("tau and t must lie within the horizon")
    best = -np.inf
    best_u = 0
    for u in range(tau + 1):
        den = y.value(u, tau)
        if den <= 0:
            raise DomainError("deconvolution denominator must be positive")
        ratio = x.value(u, t) / den
        if ratio > best:
            best = ratio
            best_u = u
    if return_witness:
        return float(best), best_u
    return float(best)


def backlog_of(a: BitProcess, d: BitProcess, t) -> float:
    """Backlog at slot t: A(0,t) - D(0,t), in nats."""
    av = a.value(0, t)
    dv = d.value(0, t)
    if dv > av + _REL_TOL * max(1.0, abs(av)) + 1e-12:
        raise TraceError(f"causality violated at t={t}: departures {dv} > arrivals {av}")
    return max(0.0, av - dv)


def delay_of(a: BitProcess, d: BitProcess, t) -> DelaySample:
    """Virtual delay at slot t: the smallest u >= 0 with A(0,t) <= D(0,t+u),
    up to a relative rounding slack of 1e-9 (cumulative paths from different
    summation orders differ by that much on long traces).

    If the horizon is too short to resolve the delay, the result is censored
    and ``slots`` is the implied lower bound.
    """
    _require_same_horizon(a, d)
    horizon = a.horizon
    if not 0 <= t <= horizon:
        raise DimensionError("t must lie within the horizon")
    target = a.value(0, t)
    target -= 1e-9 * abs(target) + 1e-12
    dcum = d.cumulative()
    idx = int(np.searchsorted(dcum[t:], target, side="left"))
    if t + idx > horizon:
        return DelaySample(slots=horizon - t + 1, censored=True)
    return DelaySample(slots=idx)


def to_snr(p: BitProcess) -> SnrProcess:
    """Exponential domain transfer, elementwise exp of the cumulative path."""
    if p.is_additive:
        with np.errstate(over="ignore"):
            cum = np.exp(p.cumulative())
        if not np.all(np.isfinite(cum)):
            raise DomainError("bit-domain values too large to exponentiate; use a shorter window")
        return SnrProcess(cum=cum)
    return SnrProcess(mat=np.exp(p.matrix()))


def to_bit(q: SnrProcess) -> BitProcess:
    """Logarithmic domain transfer; inverse of :func:`to_snr` to ~1e-15."""
    if q.is_additive:
        cum = q.cumulative()
        if cum.min() <= 0:
            raise DomainError("nonpositive value in SNR process")
        return BitProcess(cum=np.log(cum))
    mat = q.matrix()
    if mat[np.triu_indices(mat.shape[0])].min() <= 0:
        raise DomainError("nonpositive value in SNR process")
    return BitProcess(mat=np.triu(np.log(mat)))


def aggregate_snr(flows, horizon=None) -> SnrProcess:
    """Elementwise product of SNR arrival processes (flow aggregation).

    An empty list aggregates to the all-ones process (no traffic), which
    requires an explicit horizon.
    """
    flows = list(flows)
    if not flows:
        if horizon is None:
            raise DimensionError("empty aggregate needs an explicit horizon")
        return SnrProcess.ones(horizon)
    for f in flows[1:]:
        _require_same_horizon(flows[0], f)
    if all(f.is_additive for f in flows):
        cum = flows[0].cumulative().copy()
        for f in flows[1:]:
            cum = cum * f.cumulative()
        return SnrProcess(cum=cum)
    mat = flows[0].matrix().copy()
    for f in flows[1:]:
        mat = mat * f.matrix()
    return SnrProcess(mat=mat)


def pointwise_min(x, y):
    """Pointwise minimum of two processes of the same kind."""
    _require_same_horizon(x, y)
    if isinstance(x, SnrProcess) != isinstance(y, SnrProcess):
        raise DimensionError("operands must live in the same domain")
    mat = np.minimum(x.matrix(), y.matrix())
    if isinstance(x, SnrProcess):
        return SnrProcess(mat=mat)
    return BitProcess(mat=mat)
