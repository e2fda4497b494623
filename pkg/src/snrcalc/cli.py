"""Command-line frontend: bound, sweep, simulate, validate.

Configuration is a flat ``key = value`` text file with dotted section keys
(``channel.snr_db = 10``); CLI ``--set key=value`` flags override file keys.
Exit codes: 0 success, 2 config error, 3 instability (with --strict for
bound; always for validate), 4 validation FAIL.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .bounds import (BoundResult, NetworkSpec, backlog_bound, delay_bound,
                     min_stability_kernel, output_bound)
from .errors import ConfigError, SnrCalcError
from .fading import ChannelSpec, mean_capacity_nats
from .simulate import SimConfig, run_tandem, write_trace_csv
from .traffic import TrafficSpec, UnitContext, to_external, to_internal

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_UNSTABLE = 3
_EXIT_FAIL = 4

DEFAULTS = {
    "channel.snr_db": 10.0,
    "channel.bandwidth_khz": 20.0,
    "traffic.sigma_kb": 50.0,
    "traffic.rho_kbps": 30.0,
    "cross.sigma_kb": None,
    "cross.rho_kbps": None,
    "net.hops": 1,
    "net.epsilon": 1e-4,
    "sim.slots": None,
    "sim.replications": 16,
    "sim.warmup": None,
    "sim.seed": 20240901,
    "sim.scheduling": "priority-to-cross",
    "sim.source": "token-bucket-greedy",
}

_INT_KEYS = {"net.hops", "sim.slots", "sim.replications", "sim.warmup", "sim.seed"}
_STR_KEYS = {"sim.scheduling", "sim.source"}


def parse_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key] = val
    return out


def _coerce(key, raw):
    if raw is None:
        return None
    if key in _STR_KEYS:
        return str(raw)
    try:
        if key in _INT_KEYS:
            return int(float(raw))
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, val in parse_config_file(args.config).items():
            if key not in cfg:
                raise ConfigError(f"unknown config key: {key!r}")
            cfg[key] = val
    for pair in getattr(args, "set", None) or []:
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, val = (part.strip() for part in pair.split("=", 1))
        if key not in cfg:
            raise ConfigError(f"unknown config key: {key!r}")
        cfg[key] = val
    if getattr(args, "seed", None) is not None:
        cfg["sim.seed"] = args.seed
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    if (cfg["cross.sigma_kb"] is None) != (cfg["cross.rho_kbps"] is None):
        missing = "cross.rho_kbps" if cfg["cross.rho_kbps"] is None else "cross.sigma_kb"
        raise ConfigError(f"cross traffic needs both burst and rate; missing {missing!r}")
    return cfg


def build_network(cfg: dict):
    ctx = UnitContext(bandwidth_hz=to_internal(cfg["channel.bandwidth_khz"], "kHz",
                                               UnitContext(1.0)))
    gamma_bar = to_internal(cfg["channel.snr_db"], "dB", ctx)
    channel = ChannelSpec(gamma_bar=gamma_bar, bandwidth_hz=ctx.bandwidth_hz)
    through = TrafficSpec(sigma=to_internal(cfg["traffic.sigma_kb"], "kb", ctx),
                          rho=to_internal(cfg["traffic.rho_kbps"], "kbps", ctx))
    cross = None
    if cfg["cross.sigma_kb"] is not None:
        cross = TrafficSpec(sigma=to_internal(cfg["cross.sigma_kb"], "kb", ctx),
                            rho=to_internal(cfg["cross.rho_kbps"], "kbps", ctx))
    net = NetworkSpec(hops=cfg["net.hops"], channel=channel, through=through,
                      cross=cross, epsilon=cfg["net.epsilon"])
    return net, ctx


def _resolved_lines(cfg, net, ctx):
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg) if cfg[k] is not None]
    lines.append(f"internal.gamma_bar_linear = {net.channel.gamma_bar:.12g}")
    lines.append(f"internal.sigma_nats = {net.through.sigma_at(1.0):.12g}")
    lines.append(f"internal.rho_nats_per_slot = {net.through.rho_at(1.0):.12g}")
    if net.cross is not None:
        lines.append(f"internal.cross_sigma_nats = {net.cross.sigma_at(1.0):.12g}")
        lines.append(f"internal.cross_rho_nats_per_slot = {net.cross.rho_at(1.0):.12g}")
    lines.append(f"internal.slot_seconds = {ctx.slot_seconds:.12g}")
    lines.append(f"internal.mean_capacity_nats = {mean_capacity_nats(net.channel.gamma_bar):.12g}")
    return lines


def _fmt(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".10g")
    return str(x)


def _print_bound(name, res: BoundResult, extra=""):
    print(f"{name}: value={_fmt(res.value)} {res.unit}{extra} "
          f"s_star={_fmt(res.s_star)} stable={res.stable} "
          f"kernel={_fmt(res.kernel_at_s_star)}")


def cmd_bound(args) -> int:
    cfg = resolve_config(args)
    net, ctx = build_network(cfg)
    b = backlog_bound(net)
    w = delay_bound(net)
    windows = [int(x) for x in (args.windows.split(",") if args.windows else ["0"])]
    outs = [(win, output_bound(net, 0, win)) for win in windows]

    b_kb = to_external(b.value, "kb", ctx) if b.stable else math.inf
    w_ms = to_external(w.value, "ms", ctx) if w.stable else math.inf
    print(f"network: hops={net.hops} snr_db={cfg['channel.snr_db']} "
          f"epsilon={net.epsilon:g} cross={'yes' if net.cross else 'no'}")
    _print_bound("backlog", b, f" ({_fmt(b_kb)} kb)")
    _print_bound("delay", w, f" ({_fmt(w_ms)} ms)")
    for win, res in outs:
        d_kb = to_external(res.value, "kb", ctx) if res.stable else math.inf
        _print_bound(f"output[{win} slots]", res, f" ({_fmt(d_kb)} kb)")

    if args.csv:
        rows = [("metric", "window_slots", "value_internal", "unit",
                 "value_engineering", "eng_unit", "s_star", "stable")]
        rows.append(("backlog", "", _fmt(b.value), "nats", _fmt(b_kb), "kb",
                     _fmt(b.s_star), str(b.stable)))
        rows.append(("delay", "", _fmt(w.value), "slots", _fmt(w_ms), "ms",
                     _fmt(w.s_star), str(w.stable)))
        for win, res in outs:
            d_kb = to_external(res.value, "kb", ctx) if res.stable else math.inf
            rows.append(("output", str(win), _fmt(res.value), "nats",
                         _fmt(d_kb), "kb", _fmt(res.s_star), str(res.stable)))
        _write_csv(args.csv, rows, _resolved_lines(cfg, net, ctx))

    if args.strict and not (b.stable and w.stable):
        print("unstable at the requested parameters", file=sys.stderr)
        return _EXIT_UNSTABLE
    return _EXIT_OK


def _write_csv(path, rows, header_lines):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


_SWEEP_AXES = ("channel.snr_db", "traffic.rho_kbps", "traffic.sigma_kb",
               "net.epsilon", "cross.rho_kbps", "cross.sigma_kb")


def _sweep_point(payload):
    cfg, axis, value, hops, metric = payload
    cfg = dict(cfg)
    cfg[axis] = value
    cfg["net.hops"] = hops
    net, ctx = build_network(cfg)
    if metric == "backlog":
        res = backlog_bound(net)
        eng = to_external(res.value, "kb", ctx) if res.stable else math.inf
    elif metric == "delay":
        res = delay_bound(net)
        eng = to_external(res.value, "ms", ctx) if res.stable else math.inf
    else:
        res = output_bound(net, 0, 0)
        eng = to_external(res.value, "kb", ctx) if res.stable else math.inf
    return (value, hops, res.value, eng, res.s_star, res.stable)


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.axis not in _SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis: {args.axis!r}")
    if args.step <= 0:
        raise ConfigError("sweep step must be positive")
    if args.metric not in ("backlog", "delay", "output"):
        raise ConfigError(f"unknown metric: {args.metric!r}")
    hops_list = [int(x) for x in args.hops.split(",")] if args.hops else [cfg["net.hops"]]

    values = []
    v = args.start
    while v <= args.stop + 1e-12:
        values.append(round(v, 12))
        v += args.step

    jobs = args.jobs
    for hops in hops_list:
        payloads = [(cfg, args.axis, val, hops, args.metric) for val in values]
        if jobs > 1 and len(payloads) > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_point, payloads))
        else:
            results = [_sweep_point(p) for p in payloads]
        rows = [(args.axis, "hops", f"{args.metric}_internal",
                 f"{args.metric}_engineering", "s_star", "stable")]
        for value, n, internal, eng, s_star, stable in results:
            rows.append((_fmt(float(value)), str(n), _fmt(internal), _fmt(eng),
                         _fmt(s_star), str(stable)))
        path = _per_hop_path(args.csv, hops)
        net, ctx = build_network({**cfg, "net.hops": hops})
        header = _resolved_lines({**cfg, "net.hops": hops}, net, ctx)
        header.append(f"sweep.axis = {args.axis}")
        header.append(f"sweep.range = {args.start}:{args.stop}:{args.step}")
        header.append(f"sweep.metric = {args.metric}")
        _write_csv(path, rows, header)
        print(f"wrote {path} ({len(rows) - 1} rows)")
    return _EXIT_OK


def _per_hop_path(template, hops):
    if "{n}" in template:
        return template.replace("{n}", str(hops))
    root, ext = os.path.splitext(template)
    return f"{root}_n{hops}{ext or '.csv'}"


def _build_sim_config(cfg, net, args, source_override=None) -> SimConfig:
    slots = cfg["sim.slots"]
    if slots is None:
        raise ConfigError("sim.slots must be set for simulation commands")
    return SimConfig(
        net=net,
        slots=slots,
        replications=cfg["sim.replications"],
        warmup=cfg["sim.warmup"],
        seed=cfg["sim.seed"],
        scheduling=cfg["sim.scheduling"],
        source=source_override or cfg["sim.source"],
        retain_hop_traces=bool(getattr(args, "trace_csv", None)),
    )


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    net, ctx = build_network(cfg)
    sim = _build_sim_config(cfg, net, args)
    outcome = run_tandem(sim, jobs=args.jobs)
    print(f"simulated {sim.replications} replications x {sim.slots} slots "
          f"(warmup {outcome.warmup}, scheduling {sim.scheduling}, source {sim.source})")
    for q, val in outcome.backlog_quantiles().items():
        print(f"backlog q{q}: {_fmt(val)} nats ({_fmt(to_external(val, 'kb', ctx))} kb)")
    for q, val in outcome.delay_quantiles().items():
        print(f"delay q{q}: {_fmt(val)} slots ({_fmt(to_external(val, 'ms', ctx))} ms)")
    for n, qs in enumerate(outcome.hop_backlog_quantiles()):
        pretty = ", ".join(f"q{q}={_fmt(v)}" for q, v in qs.items())
        print(f"hop {n} queue nats: {pretty}")
    if args.trace_csv:
        write_trace_csv(outcome, args.trace_csv)
        print(f"wrote {args.trace_csv}")
    return _EXIT_OK


def cmd_validate(args) -> int:
    cfg = resolve_config(args)
    net, ctx = build_network(cfg)

    b = backlog_bound(net)
    w = delay_bound(net)
    if not (b.stable and w.stable):
        print("validation refused: the configured network is unstable "
              "(no s > 0 gives a stability kernel below 1)", file=sys.stderr)
        return _EXIT_UNSTABLE

    # The periodic-burst source exercises the envelope in steady state, which
    # is what makes the corrupted-bound negative control able to fail.
    source = cfg["sim.source"] if args.source_from_config else "periodic-burst"
    sim = _build_sim_config(cfg, net, args, source_override=source)
    outcome = run_tandem(sim, jobs=args.jobs)

    divisor = args.corrupt_bound_divisor
    checks = [
        ("backlog", b.value / divisor, "nats"),
        ("delay", w.value / divisor, "slots"),
    ]
    all_pass = True
    eps = net.epsilon
    print(f"validation: eps={eps:g} steady window="
          f"[{outcome.warmup}, {outcome.sample_end}) "
          f"reps={sim.replications} source={source}")
    for metric, threshold, unit in checks:
        est = outcome.violation(metric, threshold)
        ok = est.frequency <= eps + est.ci_halfwidth
        all_pass = all_pass and ok
        print(f"{metric}: threshold={_fmt(threshold)} {unit} "
              f"freq={est.frequency:.3e} ci={est.ci_halfwidth:.3e} "
              f"n_eff={est.n_effective:.3g} n_raw={est.n_raw} "
              f"{'PASS' if ok else 'FAIL'}")
    if not all_pass:
        return _EXIT_FAIL
    return _EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="master RNG seed")
    p.add_argument("--jobs", type=int,
                   default=int(os.environ.get("SNRCALC_JOBS", "1")),
                   help="parallel workers (default $SNRCALC_JOBS or 1)")
    p.add_argument("--csv", help="write machine-readable CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="snrcalc",
        description="Statistical backlog/delay/output bounds for multi-hop "
                    "fading channels, with Monte-Carlo validation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="compute bounds for one configuration")
    _add_common(p)
    p.add_argument("--windows", help="comma list of output-bound window lengths in slots")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when the configuration is unstable")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="sweep one axis and write CSV per hop count")
    _add_common(p)
    p.add_argument("--axis", required=True, help=f"one of {', '.join(_SWEEP_AXES)}")
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--hops", help="comma list of hop counts (one CSV each)")
    p.add_argument("--metric", default="backlog",
                   help="backlog (default), delay, or output")
    p.set_defaults(func=cmd_sweep)
    # sweep requires an output location
    p.set_defaults(_csv_required=True)

    p = sub.add_parser("simulate", help="run the tandem simulator")
    _add_common(p)
    p.add_argument("--trace-csv", dest="trace_csv",
                   help="dump per-hop traces of replication 0 to this CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check that bounds dominate the simulator")
    _add_common(p)
    p.add_argument("--source-from-config", action="store_true",
                   help="use sim.source instead of the periodic-burst default")
    p.add_argument("--corrupt-bound-divisor", type=float, default=1.0,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "_csv_required", False) and not args.csv:
            raise ConfigError("this command needs --csv")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except SnrCalcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
