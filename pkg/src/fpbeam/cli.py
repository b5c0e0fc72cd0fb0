"""Command-line front end.

Commands: convergence, utility, power-sweep, joint-vs-perband, bench.
Defaults reproduce the reference parameter profile (20 MHz bands, 43 dBm
per-band budget, 9 dB noise figure, pathloss exponent 3.76, reference
distance 0.392 m); a JSON config and explicit flags override it.  Every
run writes a manifest with the full config snapshot and root seed so it
can be replayed exactly.
"""

import argparse
import dataclasses
import json
import pathlib
import sys
import time

import numpy as np

from . import baselines as bl
from . import fp
from . import network as net
from . import simulator as sim

DEFAULT_SCHEMES = list(sim.SCHEMES)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="fpbeam",
        description="Downlink multicell beamforming/scheduling experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("convergence", "single-slot objective traces per scheme"),
            ("utility", "multi-slot PF experiment with sum-log metrics"),
            ("power-sweep", "sum-rate versus transmit power"),
            ("joint-vs-perband", "joint against per-band power budgets"),
            ("bench", "per-iteration wall-clock comparison")]:
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", type=pathlib.Path,
                       help="JSON file with NetworkConfig fields")
        c.add_argument("--out", type=pathlib.Path, default=pathlib.Path("out"))
        c.add_argument("--seed", type=int)
        c.add_argument("--schemes", nargs="+", choices=DEFAULT_SCHEMES)
        c.add_argument("--M", type=int)
        c.add_argument("--K", type=int)
        c.add_argument("--F", type=int)
        c.add_argument("--cells", type=int)
        c.add_argument("--iters", type=int, default=15)
        c.add_argument("--slots", type=int, default=100)
        c.add_argument("--drops", type=int, default=10)
        c.add_argument("--power-mode", choices=["joint", "perband"],
                       default="joint")
        c.add_argument("--pt-dbm", type=float, action="append",
                       help="repeatable; sweep points for power-sweep")
    return p


def parse_args(argv):
    """argv (no program name) -> parsed run spec. Raises SystemExit on usage."""
    args = _build_parser().parse_args(argv)
    cfg = net.NetworkConfig()
    if args.config is not None:
        cfg = net.NetworkConfig.from_json(args.config.read_text())
    overrides = {"antennas_M": args.M, "users_per_cell_K": args.K,
                 "bands_F": args.F, "num_cells": args.cells,
                 "rng_seed": args.seed}
    cfg = dataclasses.replace(
        cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.pt_dbm:
        cfg = dataclasses.replace(cfg,
                                  power_PT=net.dbm_to_watts(args.pt_dbm[0]))
    cfg.validate()
    args.cfg = cfg
    args.scheme_list = args.schemes or DEFAULT_SCHEMES
    return args


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.12g}" if isinstance(x, float) else str(x)
                              for x in row) + "\n")


def _single_instance(cfg):
    topo = net.build_topology(cfg)
    H = net.generate_channels(topo, cfg, cfg.rng_seed).h
    sigma2 = net.noise_power(cfg).sigma2
    w = np.ones((cfg.num_cells, cfg.users_per_cell_K))
    return H, sigma2, w


def cmd_convergence(args, out):
    cfg = args.cfg
    H, sigma2, w = _single_instance(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    summary = []
    for scheme in args.scheme_list:
        if scheme == "proposed":
            U0, V0 = fp.initialize(H, sigma2, w, cfg.power_PT, cfg.antennas_M)
            _, _, trace = fp.fp_iterate(U0, V0, H, sigma2, w, cfg.power_PT,
                                        args.iters, mode=args.power_mode,
                                        rel_tol=None)
            rows = trace.rows()
            _write_csv(out / f"trace_{scheme}.csv", rows[0], rows[1:])
            f0s = trace.f0
        else:
            _, _, f0s = sim.run_slot(scheme, 0, H, sigma2, w, cfg, rng,
                                     args.iters, args.power_mode)
            _write_csv(out / f"trace_{scheme}.csv", ["iter", "f0"],
                       list(enumerate(f0s)))
        summary.append((scheme, f0s[-1]))
    return summary, ["scheme", "final_f0"]


def cmd_utility(args, out):
    results = []
    for scheme in args.scheme_list:
        r = sim.run_experiment(args.cfg, scheme, args.slots, args.iters,
                               args.drops, power_mode=args.power_mode)
        results.append(r)
        _write_csv(out / f"rate_cdf_{scheme}.csv", ["rate_mbps", "percentile"],
                   sim.rate_cdf(r["rate_pool_mbps"]))
        rows = [(d, s, f0, ms) for d, tr in enumerate(r["slot_traces"])
                for (s, f0, ms) in tr]
        _write_csv(out / f"slots_{scheme}.csv",
                   ["drop", "slot", "f0", "wall_ms"], rows)
    (out / "metrics.json").write_text(sim.metrics_to_json(results))
    summary = [(r["scheme"], r["sumlog"], r["edge_rate_mbps"],
                r["mean_wall_ms_per_slot"]) for r in results]
    return summary, ["scheme", "sumlog", "edge_rate_mbps", "wall_ms_per_slot"]


def cmd_power_sweep(args, out):
    pts = args.pt_dbm or [20, 30, 40, 50, 60, 70]
    rows = sim.power_sweep(args.cfg, args.scheme_list, pts,
                           n_slots=max(1, args.slots // 20),
                           n_iterations=args.iters, n_drops=args.drops)
    table = [(r["scheme"], r["PT_dBm"], r["sumrate_mbps"]) for r in rows]
    _write_csv(out / "power_sweep.csv", ["scheme", "PT_dBm", "sumrate_mbps"],
               table)
    return table, ["scheme", "PT_dBm", "sumrate_mbps"]


def cmd_joint_vs_perband(args, out):
    r = sim.joint_vs_perband(args.cfg, n_slots=args.slots,
                             n_iterations=args.iters, n_drops=args.drops)
    (out / "joint_vs_perband.json").write_text(json.dumps(
        {k: v for k, v in r.items() if not isinstance(v, dict)} |
        {m: {kk: r[m][kk] for kk in ("sumlog", "edge_rate_mbps")}
         for m in ("joint", "perband")}, indent=2))
    summary = [(m, r[m]["sumlog"], r[m]["edge_rate_mbps"])
               for m in ("joint", "perband")]
    summary.append(("delta_rel", r["sumlog_delta_rel"], r["edge_delta_mbps"]))
    return summary, ["mode", "sumlog", "edge_rate_mbps"]


def cmd_bench(args, out):
    times = sim.bench_per_iteration(args.cfg, n_iterations=min(args.iters, 5))
    _write_csv(out / "timing.csv",
               ["scheme", "ms_per_iteration"],
               [("proposed", times["proposed"]),
                ("multicell_wmmse", times["multicell_wmmse"])])
    return [("proposed", times["proposed"]),
            ("multicell_wmmse", times["multicell_wmmse"]),
            ("ratio", times["ratio"])], ["scheme", "ms_per_iteration"]


COMMANDS = {
    "convergence": cmd_convergence,
    "utility": cmd_utility,
    "power-sweep": cmd_power_sweep,
    "joint-vs-perband": cmd_joint_vs_perband,
    "bench": cmd_bench,
}


def run(args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        summary, header = COMMANDS[args.command](args, out)
    except Exception as exc:  # surface context, nonzero status
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "command": args.command,
        "config": dataclasses.asdict(args.cfg),
        "schemes": args.scheme_list,
        "iters": args.iters, "slots": args.slots, "drops": args.drops,
        "power_mode": args.power_mode,
        "root_seed": args.cfg.rng_seed,
        "wall_s": time.time() - t0,
        "version": "0.1.0",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    widths = [max(len(str(h)), 14) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in summary:
        print("  ".join((f"{x:.6g}" if isinstance(x, float) else str(x)).ljust(w)
                        for x, w in zip(row, widths)))
    return 0


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
