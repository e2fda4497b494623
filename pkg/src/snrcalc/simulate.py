"""Discrete-time fluid Monte-Carlo simulation of the N-hop tandem.

Each hop is a work-conserving infinite-buffer server whose slot capacity is
ln(1 + gamma) nats with gamma drawn i.i.d. per hop and slot.  Departures of
hop n are the arrivals of hop n+1 within the same slot, which realizes the
cumulative input/output relation D = A * S exactly at every hop.  Optional
per-hop cross traffic is served either with strict priority over the through
flow (the conservative counterpart of the leftover-service bound) or FIFO
within the aggregate.

Replications are independent; replication r uses the PCG64 stream seeded by
splitmix64(seed + r), so results are bit-reproducible and independent of how
replications are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import NetworkSpec, delay_bound
from .errors import ConfigError, DomainError, TraceError

_M64 = (1 << 64) - 1

SCHEDULES = ("priority-to-cross", "fifo-aggregate")
SOURCES = ("constant-rate", "token-bucket-greedy", "periodic-burst")

# Trace retention guard: reps * hops * slots of per-hop float64 series.
_TRACE_CELL_LIMIT = 50_000_000


def replication_seed(master_seed: int, index: int) -> int:
    """Per-replication seed: splitmix64 of (master seed + replication index)."""
    z = (int(master_seed) + int(index)) & _M64
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def source_increments(sigma: float, rho: float, kind: str, slots: int) -> np.ndarray:
    """Per-slot arrival increments of an envelope-compliant source path.

    constant-rate: rho every slot (no burst).
    token-bucket-greedy: sigma at t=0, then rho every slot (the path that
        meets A(0,t) = sigma + rho t with equality).
    periodic-burst: sigma every ceil(sigma/rho) slots and nothing in between;
        compliant because consecutive bursts are at least sigma/rho apart.
    """
    if kind not in SOURCES:
        raise ConfigError(f"unknown source kind: {kind!r}")
    a = np.zeros(slots)
    if kind == "constant-rate":
        a[:] = rho
    elif kind == "token-bucket-greedy":
        a[:] = rho
        if slots:
            a[0] += sigma
    else:  # periodic-burst
        if sigma <= 0:
            a[:] = rho
        elif rho <= 0:
            if slots:
                a[0] = sigma
        else:
            period = max(1, int(math.ceil(sigma / rho)))
            a[0::period] = sigma
    return a


@dataclass
class SimConfig:
    net: NetworkSpec
    slots: int
    replications: int = 16
    warmup: int | None = None  # None -> auto rule
    seed: int = 20_240_901
    scheduling: str = "priority-to-cross"
    source: str = "token-bucket-greedy"
    retain_hop_traces: bool = False

    def __post_init__(self):
        if self.slots < 2:
            raise ConfigError("need at least 2 slots")
        if self.replications < 1:
            raise ConfigError("need at least one replication")
        if self.scheduling not in SCHEDULES:
            raise ConfigError(f"unknown scheduling: {self.scheduling!r}")
        if self.source not in SOURCES:
            raise ConfigError(f"unknown source kind: {self.source!r}")

    def burst_period(self) -> int:
        sig = self.net.through.sigma_at(1.0)
        rho = self.net.through.rho_at(1.0)
        if self.source == "periodic-burst" and sig > 0 and rho > 0:
            return max(1, int(math.ceil(sig / rho)))
        return 1

    def resolve_warmup(self) -> int:
        """Auto warmup: 10x the delay-bound estimate or 1e4 slots, whichever is
        larger (plus one burst period for the periodic source), capped to keep
        a nonempty steady-state window."""
        if self.warmup is not None:
            if self.warmup >= self.slots:
                raise ConfigError("warmup must be smaller than the horizon")
            return self.warmup
        w = 10_000.0
        try:
            db = delay_bound(self.net)
            if db.stable and math.isfinite(db.value):
                w = max(w, 10.0 * db.value)
        except Exception:
            pass
        w = max(w, float(self.burst_period()))
        w = min(w, 0.5 * self.slots)
        return int(w)


@dataclass(frozen=True)
class ViolationEstimate:
    """Empirical violation frequency with a Wilson 95% CI half-width computed
    on the autocorrelation-deflated effective sample count."""

    frequency: float
    ci_halfwidth: float
    n_effective: float
    n_raw: int
    censored: int = 0


def _wilson_halfwidth(p_hat: float, n: float, z: float = 1.959963984540054) -> float:
    if n <= 0:
        return 1.0
    z2 = z * z
    return (z / (1.0 + z2 / n)) * math.sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4 * n * n))


def integrated_autocorr(series: np.ndarray, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time via FFT, summed over the initial
    positive window (cut at the first lag with autocorr below 0.05)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = np.dot(x, x)
    if var <= 0:
        return 1.0
    if max_lag is None:
        max_lag = n // 4
    m = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[: max_lag + 1] / var
    tau = 1.0
    for k in range(1, max_lag + 1):
        if acf[k] < 0.05:
            break
        tau += 2.0 * acf[k]
    return max(1.0, float(tau))


@dataclass
class SimOutcome:
    """Arrays retained from a run plus derived statistics.

    ``departure_cum[r, t]`` is the network egress D(0, t) of replication r;
    ``arrival_cum[t]`` is the (deterministic) ingress A(0, t).  The steady
    window [warmup, sample_end) is where violation frequencies are counted.
    """

    config: SimConfig
    arrival_cum: np.ndarray
    departure_cum: np.ndarray
    warmup: int
    sample_end: int
    hop_queue_stride: int
    hop_queues: np.ndarray  # (reps, hops, anchors), through queue in nats
    traces: dict | None = None
    _delay_cache: dict = field(default_factory=dict, repr=False)

    @property
    def slots(self) -> int:
        return self.arrival_cum.size - 1

    @property
    def replications(self) -> int:
        return self.departure_cum.shape[0]

    def backlog_series(self) -> np.ndarray:
        """End-to-end backlog B(t) over the steady window, shape (reps, window)."""
        sl = slice(self.warmup, self.sample_end)
        return self.arrival_cum[None, sl] - self.departure_cum[:, sl]

    def delay_series(self):
        """Virtual delays W(t) over the steady window plus a censoring mask."""
        key = "delay"
        if key not in self._delay_cache:
            t_idx = np.arange(self.warmup, self.sample_end)
            # cumulative sums of arrivals and departures round differently;
            # nudge targets down by a relative epsilon so exact drains
            # register as caught-up instead of censored
            targets = self.arrival_cum[t_idx]
            targets = targets - (1e-9 * np.abs(targets) + 1e-12)
            reps = self.replications
            delays = np.empty((reps, t_idx.size), dtype=np.int64)
            censored = np.zeros((reps, t_idx.size), dtype=bool)
            horizon = self.slots
            for r in range(reps):
                pos = np.searchsorted(self.departure_cum[r], targets, side="left")
                cen = pos > horizon
                w = np.minimum(pos, horizon + 1) - t_idx
                delays[r] = np.maximum(w, 0)
                censored[r] = cen
            self._delay_cache[key] = (delays, censored)
        return self._delay_cache[key]

    def output_series(self, window: int) -> np.ndarray:
        """Departures over sliding windows of the given slot length."""
        if window < 0:
            raise DomainError("window must be nonnegative")
        lo = max(self.warmup, window)
        sl_hi = self.sample_end
        t_idx = np.arange(lo, sl_hi)
        return self.departure_cum[:, t_idx] - self.departure_cum[:, t_idx - window]

    def violation(self, metric: str, threshold: float, window: int = 0) -> ViolationEstimate:
        return empirical_violation(self, metric, threshold, window)

    def backlog_quantiles(self, qs=(0.5, 0.9, 0.99, 0.999)) -> dict:
        b = self.backlog_series().ravel()
        return {q: float(np.quantile(b, q)) for q in qs}

    def delay_quantiles(self, qs=(0.5, 0.9, 0.99, 0.999)) -> dict:
        d, _ = self.delay_series()
        d = d.ravel()
        return {q: float(np.quantile(d, q)) for q in qs}

    def hop_backlog_quantiles(self, qs=(0.5, 0.9, 0.99)) -> list:
        """Through-queue quantiles per hop from the subsampled anchors."""
        out = []
        anchors = self.hop_queues.shape[2]
        start = min(self.warmup // max(self.hop_queue_stride, 1), anchors - 1)
        for n in range(self.hop_queues.shape[1]):
            h = self.hop_queues[:, n, start:].ravel()
            out.append({q: float(np.quantile(h, q)) for q in qs})
        return out


def empirical_violation(outcome: SimOutcome, metric: str, threshold: float,
                        window: int = 0) -> ViolationEstimate:
    """Fraction of steady-state slots whose metric exceeds the threshold.

    Censored delays count as violations (their lower bound exceeds any
    threshold they are compared against in practice), which errs against the
    bound and keeps domination tests honest.
    """
    if metric == "backlog":
        data = outcome.backlog_series()
        viol = data > threshold
        cen = 0
    elif metric == "delay":
        delays, censored = outcome.delay_series()
        viol = (delays > threshold) | censored
        cen = int(censored.sum())
        data = delays
    elif metric == "output":
        data = outcome.output_series(window)
        viol = data > threshold
        cen = 0
    else:
        raise ConfigError(f"unknown metric: {metric!r}")

    n_raw = viol.size
    if n_raw == 0:
        raise TraceError("empty steady-state window")
    p_hat = float(viol.mean())
    # Effective sample count: deflate by the per-replication autocorrelation
    # time of the metric series (replications themselves are independent).
    reps = data.shape[0]
    taus = [integrated_autocorr(data[r]) for r in range(min(reps, 8))]
    tau = float(np.mean(taus))
    n_eff = max(float(reps), n_raw / tau)
    return ViolationEstimate(
        frequency=p_hat,
        ci_halfwidth=_wilson_halfwidth(p_hat, n_eff),
        n_effective=n_eff,
        n_raw=n_raw,
        censored=cen,
    )


def _chunk_payload(cfg: SimConfig, rep_indices):
    return {
        "gamma_bar": cfg.net.channel.gamma_bar,
        "hops": cfg.net.hops,
        "slots": cfg.slots,
        "seeds": [replication_seed(cfg.seed, r) for r in rep_indices],
        "scheduling": cfg.scheduling,
        "retain": cfg.retain_hop_traces,
        "through": source_increments(cfg.net.through.sigma_at(1.0),
                                     cfg.net.through.rho_at(1.0),
                                     cfg.source, cfg.slots),
        "cross": (source_increments(cfg.net.cross.sigma_at(1.0),
                                    cfg.net.cross.rho_at(1.0),
                                    "token-bucket-greedy", cfg.slots)
                  if cfg.net.cross is not None else None),
        "stride": max(1, cfg.slots // 8192),
    }


def _run_chunk(payload: dict) -> dict:
    gamma_bar = payload["gamma_bar"]
    hops = payload["hops"]
    slots = payload["slots"]
    seeds = payload["seeds"]
    a_through = payload["through"]
    a_cross = payload["cross"]
    stride = payload["stride"]
    retain = payload["retain"]
    reps = len(seeds)

    caps = np.empty((reps, hops, slots))
    for i, seed in enumerate(seeds):
        rng = np.random.Generator(np.random.PCG64(seed))
        caps[i] = np.log1p(gamma_bar * rng.standard_exponential((hops, slots)))

    dep_cum = np.zeros((reps, slots + 1))
    anchors = np.arange(0, slots, stride)
    hop_q = np.zeros((reps, hops, anchors.size))
    traces = None
    if retain:
        if reps * hops * slots > _TRACE_CELL_LIMIT:
            raise ConfigError("trace retention over the size guard; shrink the run")
        traces = {
            "capacity": caps,
            "arrival_o": np.zeros((reps, hops, slots)),
            "arrival_c": np.zeros((reps, hops, slots)),
            "served_o": np.zeros((reps, hops, slots)),
            "served_c": np.zeros((reps, hops, slots)),
            "queue_o": np.zeros((reps, hops, slots)),
            "queue_c": np.zeros((reps, hops, slots)),
        }

    if payload["scheduling"] == "priority-to-cross":
        _run_priority(caps, a_through, a_cross, dep_cum, hop_q, anchors, traces)
    else:
        _run_fifo(caps, a_through, a_cross, dep_cum, hop_q, anchors, traces)

    out = {"dep_cum": dep_cum, "hop_q": hop_q}
    if retain:
        out["traces"] = traces
    return out


def _run_priority(caps, a_through, a_cross, dep_cum, hop_q, anchors, traces):
    reps, hops, slots = caps.shape
    qo = np.zeros((reps, hops))
    qc = np.zeros((reps, hops))
    anchor_set = {int(t): j for j, t in enumerate(anchors)}
    for t in range(slots):
        in_o = np.full(reps, a_through[t])
        for n in range(hops):
            c = caps[:, n, t]
            in_c = a_cross[t] if a_cross is not None else 0.0
            tot_c = qc[:, n] + in_c
            served_c = np.minimum(tot_c, c)
            tot_o = qo[:, n] + in_o
            served_o = np.minimum(tot_o, c - served_c)
            if traces is not None:
                traces["arrival_o"][:, n, t] = in_o
                traces["arrival_c"][:, n, t] = in_c
                traces["served_o"][:, n, t] = served_o
                traces["served_c"][:, n, t] = served_c
            qc[:, n] = tot_c - served_c
            qo[:, n] = tot_o - served_o
            if traces is not None:
                traces["queue_o"][:, n, t] = qo[:, n]
                traces["queue_c"][:, n, t] = qc[:, n]
            in_o = served_o
        dep_cum[:, t + 1] = dep_cum[:, t] + in_o
        j = anchor_set.get(t)
        if j is not None:
            hop_q[:, :, j] = qo


def _run_fifo(caps, a_through, a_cross, dep_cum, hop_q, anchors, traces):
    """FIFO within the aggregate: per hop, a Lindley pass for the aggregate
    queue followed by a fluid FIFO split of departures back into flows."""
    reps, hops, slots = caps.shape
    in_o = np.broadcast_to(a_through, (reps, slots)).copy()
    a_c = a_cross if a_cross is not None else np.zeros(slots)
    for n in range(hops):
        agg_in = in_o + a_c[None, :]
        agg_cum = np.concatenate(
            [np.zeros((reps, 1)), np.cumsum(agg_in, axis=1)], axis=1)
        o_cum = np.concatenate(
            [np.zeros((reps, 1)), np.cumsum(in_o, axis=1)], axis=1)
        q = np.zeros(reps)
        dagg_cum = np.zeros((reps, slots + 1))
        for t in range(slots):
            tot = q + agg_in[:, t]
            served = np.minimum(tot, caps[:, n, t])
            q = tot - served
            dagg_cum[:, t + 1] = dagg_cum[:, t] + served
        out_o_cum = np.empty_like(dagg_cum)
        for r in range(reps):
            # FIFO: the served amount equals the oldest prefix of aggregate
            # arrivals; the through share of a partially served slot is
            # pro-rated within the slot (fluid traffic has no packet edges).
            pos = np.searchsorted(agg_cum[r], dagg_cum[r], side="right") - 1
            pos = np.clip(pos, 0, slots)
            base = agg_cum[r, pos]
            nxt = np.minimum(pos + 1, slots)
            denom = agg_cum[r, nxt] - base
            frac = np.where(denom > 0, (dagg_cum[r] - base) / np.where(denom > 0, denom, 1.0), 0.0)
            out_o_cum[r] = o_cum[r, pos] + frac * (o_cum[r, nxt] - o_cum[r, pos])
        if traces is not None:
            traces["arrival_o"][:, n, :] = in_o
            traces["arrival_c"][:, n, :] = a_c[None, :]
            traces["served_o"][:, n, :] = np.diff(out_o_cum, axis=1)
            traces["served_c"][:, n, :] = np.diff(dagg_cum - out_o_cum, axis=1)
            traces["queue_o"][:, n, :] = (o_cum - out_o_cum)[:, 1:]
            traces["queue_c"][:, n, :] = (agg_cum - o_cum - (dagg_cum - out_o_cum))[:, 1:]
        hop_q[:, n, :] = (o_cum - out_o_cum)[:, 1:][:, anchors]
        in_o = np.diff(out_o_cum, axis=1)
    dep_cum[:, :] = np.concatenate(
        [np.zeros((reps, 1)), np.cumsum(in_o, axis=1)], axis=1)


def run_tandem(cfg: SimConfig, jobs: int = 1) -> SimOutcome:
    """Run all replications and assemble the outcome (deterministic reduce in
    replication order, independent of worker scheduling)."""
    warmup = cfg.resolve_warmup()
    if warmup >= cfg.slots:
        raise ConfigError("warmup leaves no steady-state window")

    rep_indices = list(range(cfg.replications))
    if jobs <= 1 or cfg.replications == 1:
        chunks = [_run_chunk(_chunk_payload(cfg, rep_indices))]
    else:
        jobs = min(jobs, cfg.replications)
        split = [rep_indices[i::jobs] for i in range(jobs)]
        # interleaved split keeps chunk sizes balanced; order restored below
        payloads = [_chunk_payload(cfg, idxs) for idxs in split]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, payloads))
        chunks = results
        order = np.argsort(np.concatenate([np.array(ix) for ix in split]))
        dep = np.concatenate([c["dep_cum"] for c in chunks])[order]
        hq = np.concatenate([c["hop_q"] for c in chunks])[order]
        traces = None
        if cfg.retain_hop_traces:
            traces = {k: np.concatenate([c["traces"][k] for c in chunks])[order]
                      for k in chunks[0]["traces"]}
        return _assemble(cfg, warmup, dep, hq, traces)

    chunk = chunks[0]
    traces = chunk.get("traces")
    return _assemble(cfg, warmup, chunk["dep_cum"], chunk["hop_q"], traces)


def _assemble(cfg, warmup, dep_cum, hop_q, traces):
    a_inc = source_increments(cfg.net.through.sigma_at(1.0),
                              cfg.net.through.rho_at(1.0),
                              cfg.source, cfg.slots)
    arrival_cum = np.concatenate(([0.0], np.cumsum(a_inc)))
    return SimOutcome(
        config=cfg,
        arrival_cum=arrival_cum,
        departure_cum=dep_cum,
        warmup=warmup,
        sample_end=cfg.slots + 1,
        hop_queue_stride=max(1, cfg.slots // 8192),
        hop_queues=hop_q,
        traces=traces,
    )


def write_trace_csv(outcome: SimOutcome, path, replication: int = 0):
    """Dump one replication's per-hop trace: slot, hop, arrivals, capacity,
    served, queue (nats).  Requires the run to have retained hop traces."""
    if outcome.traces is None:
        raise ConfigError("run with retain_hop_traces=True to dump traces")
    tr = outcome.traces
    r = replication
    hops = tr["capacity"].shape[1]
    slots = tr["capacity"].shape[2]
    with open(path, "w") as fh:
        fh.write("slot,hop,arrivals_nats,capacity_nats,served_nats,queue_nats\n")
        for t in range(slots):
            for n in range(hops):
                arr = tr["arrival_o"][r, n, t] + tr["arrival_c"][r, n, t]
                served = tr["served_o"][r, n, t] + tr["served_c"][r, n, t]
                queue = tr["queue_o"][r, n, t] + tr["queue_c"][r, n, t]
                fh.write(f"{t},{n},{arr:.9g},{tr['capacity'][r, n, t]:.9g},"
                         f"{served:.9g},{queue:.9g}\n")
