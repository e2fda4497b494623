"""Traffic envelopes and unit conversion.

Internally everything is nats and slots with one slot = 1/W seconds, so a
slot carries exactly ln(1 + gamma) nats of capacity.  Engineering units
(kb, kbps, dB, ms) exist only at the configuration boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError, PreconditionError
from .mellin import SigmaRho

NATS_PER_BIT = math.log(2.0)


@dataclass(frozen=True)
class TrafficSpec:
    """(sigma(s), rho(s))-bounded arrivals: burst sigma in nats, rate rho in
    nats/slot.  Constants by default; callables of s are accepted for
    envelope families."""

    sigma: object = 0.0
    rho: object = 0.0

    def __post_init__(self):
        for name in ("sigma", "rho"):
            v = getattr(self, name)
            if not callable(v):
                v = float(v)
                if v < 0:
                    raise DomainError(f"{name} must be nonnegative")
                object.__setattr__(self, name, v)

    def sigma_at(self, s) -> float:
        return self.sigma(s) if callable(self.sigma) else self.sigma

    def rho_at(self, s) -> float:
        return self.rho(s) if callable(self.rho) else self.rho


@dataclass(frozen=True)
class UnitContext:
    """Unit conversion context; slot duration is pinned to 1/W seconds."""

    bandwidth_hz: float

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise DomainError("bandwidth must be positive")

    @property
    def slot_seconds(self) -> float:
        return 1.0 / self.bandwidth_hz


def to_internal(value, unit, ctx: UnitContext) -> float:
    """Engineering units -> internal nats/slots/linear quantities.

    kb -> nats; kbps -> nats/slot; dB -> linear SNR; ms -> slots (exact
    float; callers round up when an integer slot count is required);
    kHz -> Hz.
    """
    value = float(value)
    if unit == "kb":
        return value * 1000.0 * NATS_PER_BIT
    if unit == "kbps":
        return value * 1000.0 * NATS_PER_BIT * ctx.slot_seconds
    if unit == "dB":
        return 10.0 ** (value / 10.0)
    if unit == "ms":
        return value * 1e-3 / ctx.slot_seconds
    if unit == "kHz":
        return value * 1000.0
    raise ConfigError(f"unknown unit: {unit!r}")


def to_external(value, unit, ctx: UnitContext) -> float:
    """Inverse of :func:`to_internal`; exact round trip up to rounding."""
    value = float(value)
    if unit == "kb":
        return value / (1000.0 * NATS_PER_BIT)
    if unit == "kbps":
        return value / (1000.0 * NATS_PER_BIT * ctx.slot_seconds)
    if unit == "dB":
        if value <= 0:
            raise DomainError("linear SNR must be positive")
        return 10.0 * math.log10(value)
    if unit == "ms":
        return value * ctx.slot_seconds * 1e3
    if unit == "kHz":
        return value / 1000.0
    raise ConfigError(f"unknown unit: {unit!r}")


def traffic_model(spec: TrafficSpec) -> SigmaRho:
    """SNR-domain Mellin model of the envelope (valid for s > 1)."""
    return SigmaRho(spec.sigma, spec.rho)


def traffic_mellin(spec: TrafficSpec, s, tau, t) -> float:
    """Arrival Mellin bound e^{(s-1)(rho(s-1)(t-tau) + sigma(s-1))}, s > 1."""
    if s <= 1:
        raise PreconditionError("traffic Mellin bound needs s > 1")
    return traffic_model(spec).value(s, tau, t)


def aggregate_traffic(specs) -> TrafficSpec:
    """Aggregate flows by summing burst and rate envelopes pointwise in s."""
    specs = list(specs)
    if not specs:
        return TrafficSpec(0.0, 0.0)
    if all(not callable(sp.sigma) and not callable(sp.rho) for sp in specs):
        return TrafficSpec(sum(sp.sigma for sp in specs), sum(sp.rho for sp in specs))
    return TrafficSpec(
        sigma=lambda s: sum(sp.sigma_at(s) for sp in specs),
        rho=lambda s: sum(sp.rho_at(s) for sp in specs),
    )
