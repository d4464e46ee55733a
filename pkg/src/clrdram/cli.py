"""``clr-sim`` command-line entry point."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, SimConfig, WorkloadConfig, load_config
from .sim import Simulation, _report, check_report, load_traces, run, run_name, sweep_fraction, \
    sweep_refresh, write_outputs
from .workload import GENERATORS, gen_mixed, write_trace


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI configuration file (defaults when omitted)")
    p.add_argument("--trace", action="append", default=[], help="trace file, one per core")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--commands", action="store_true", help="also write the command log")


def _load(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.trace:
        changes["workload"] = WorkloadConfig(**{**cfg.workload.__dict__,
                                                "traces": tuple(args.trace)})
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["out_dir"] = args.out
    if args.commands:
        changes["commands"] = True
    if getattr(args, "hp_fraction", None) is not None:
        changes["hp_fraction"] = args.hp_fraction
        changes["clr"] = True
    if getattr(args, "trefw", None) is not None:
        changes["trefw_ms"] = args.trefw
        changes["clr"] = True
    if getattr(args, "baseline", False):
        changes.update(clr=False, hp_fraction=0.0, trefw_ms=64.0)
    return cfg.replace(**changes) if changes else cfg


def _emit(reports, out_dir, sims=None):
    for r in reports:
        ipc = " ".join(f"{v:.4f}" for v in r.ipc)
        line = f"{r.name:>14}  ipc {ipc}  capacity {r.capacity * 100:.1f}%"
        if "speedup" in r.extra:
            line += f"  speedup {r.extra['speedup']:.4f}"
            line += f"  refresh-energy cut {r.extra['refresh_energy_reduction'] * 100:.1f}%"
        print(line)
    if out_dir:
        write_outputs(reports, out_dir, sims)
        print(f"wrote {out_dir}")


def cmd_run(args) -> int:
    cfg = _load(args)
    traces = load_traces(cfg)
    sims = None
    if cfg.commands:
        sim = Simulation(cfg, traces, log=True).run()
        alone = None
        if len(traces) > 1:
            alone = [run(cfg, [t]).ipc[0] for t in traces]
        rep = _report(cfg, sim, run_name(cfg), alone)
        check_report(rep)
        sims = {rep.name: sim}
    else:
        rep = run(cfg, traces, run_name(cfg))
    _emit([rep], cfg.out_dir, sims)
    return 0


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep_fraction(args) -> int:
    cfg = _load(args)
    reports = sweep_fraction(cfg, _floats(args.fractions))
    _emit(reports, cfg.out_dir)
    return 0


def cmd_sweep_refresh(args) -> int:
    cfg = _load(args)
    reports = sweep_refresh(cfg, _floats(args.trefws))
    _emit(reports, cfg.out_dir)
    return 0


def cmd_gen_trace(args) -> int:
    footprint = int(args.footprint_mb * (1 << 20))
    if args.kind == "mixed":
        recs = gen_mixed(args.seed, args.records, footprint, args.bubbles, args.write_ratio)
    else:
        recs = GENERATORS[args.kind](args.seed, args.records, footprint, args.bubbles,
                                     args.write_ratio)
    if args.output == "-":
        from .workload import format_trace
        sys.stdout.write(format_trace(recs))
    else:
        write_trace(recs, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clr-sim", description=(
        "Cycle-level DRAM simulator with per-row capacity/latency modes."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _common(p)
    p.add_argument("--hp-fraction", type=float, help="percent of rows in high-performance mode")
    p.add_argument("--trefw", type=float, help="refresh window of high-performance rows (ms)")
    p.add_argument("--baseline", action="store_true", help="conventional DDR4 timing")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-fraction", help="baseline plus one run per HP percentage")
    _common(p)
    p.add_argument("--fractions", default="0,25,50,75,100")
    p.set_defaults(func=cmd_sweep_fraction)

    p = sub.add_parser("sweep-refresh", help="baseline plus all-HP runs per refresh window")
    _common(p)
    p.add_argument("--trefws", default="64,114,124,184,194")
    p.set_defaults(func=cmd_sweep_refresh)

    p = sub.add_parser("gen-trace", help="write a synthetic trace")
    p.add_argument("--kind", choices=sorted([*GENERATORS, "mixed"]), default="random")
    p.add_argument("--records", type=int, default=10000)
    p.add_argument("--footprint-mb", type=float, default=64.0)
    p.add_argument("--bubbles", default="poisson:4")
    p.add_argument("--write-ratio", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"clr-sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
