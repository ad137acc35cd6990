"""Command line front end: deployment/pilot inspection, single solves, sweeps,
and the statistical validation oracles."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import harness
from .channels import estimation_stats, noise_power_mw, sample_channels
from .feedback import FeedbackConfig, build_feedback, mc_quantization_constants
from .pilots import build_conflict_graph, dsatur_color
from .statistics import (
    BeliefModel,
    build_statset,
    mean_cdi_alignment,
    mean_cdi_error,
    mc_desired_matrix,
    mc_interference_matrix,
)
from .topology import NetworkConfig, generate


def _load_config(args) -> harness.ExperimentConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = harness.ExperimentConfig.from_json(fh.read())
    else:
        cfg = harness.ExperimentConfig()
    overrides = {}
    for name in ("trials", "base_seed", "r_min", "n_max", "engine", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    net_over = {}
    for src, dst in (("rrh", "num_rrh"), ("ue", "num_ue"), ("area", "area_side_m")):
        value = getattr(args, src, None)
        if value is not None:
            net_over[dst] = value
    if net_over:
        overrides["network"] = dataclasses.replace(cfg.network, **net_over)
    fb_over = {}
    for name in ("b_cdi", "b_pa"):
        value = getattr(args, name, None)
        if value is not None:
            fb_over[name] = None if value < 0 else value
    if fb_over:
        overrides["feedback"] = dataclasses.replace(cfg.feedback, **fb_over)
    if getattr(args, "methods", None):
        overrides["methods"] = tuple(args.methods.split(","))
    if getattr(args, "beliefs", None):
        overrides["beliefs"] = tuple(args.beliefs.split(","))
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_topo(args):
    cfg = _load_config(args)
    net = dataclasses.replace(cfg.network, seed=args.seed)
    topo = generate(net)
    print(topo.to_json())
    return 0


def _cmd_pilots(args):
    cfg = _load_config(args)
    net = dataclasses.replace(cfg.network, seed=args.seed)
    topo = generate(net)
    pa = dsatur_color(build_conflict_graph(topo), cfg.n_max, net.antennas)
    print(json.dumps({
        "color": [int(c) for c in pa.color],
        "num_colors": pa.num_colors,
        "tau": pa.tau,
        "reuse_sets": [list(s) for s in pa.reuse_sets],
    }, indent=1))
    return 0


def _run_single(args, keep_detail):
    cfg = _load_config(args)
    return cfg, harness.run_trial(cfg, args.seed, keep_detail=keep_detail)


def _cmd_solve(args):
    _, records = _run_single(args, keep_detail=True)
    for rec in records:
        doc = {
            "method": rec.method, "belief": rec.belief,
            "admitted": list(rec.admitted_set), "power_mw": rec.power_mw,
            "min_rate": rec.min_rate, "mean_rate": rec.mean_rate,
            "iters": rec.iters, "ok": rec.ok, "detail": rec.detail,
        }
        print(json.dumps(doc, indent=1, default=str))
    return 0


def _cmd_admit(args):
    _, records = _run_single(args, keep_detail=True)
    for rec in records:
        print(json.dumps({
            "method": rec.method, "belief": rec.belief,
            "admitted": list(rec.admitted_set), "p8_solves": rec.p8_solves,
            "slacks": (rec.detail or {}).get("slacks"),
        }, indent=1, default=str))
    return 0


def _cmd_sweep(args):
    cfg = _load_config(args)
    if args.axis:
        values = tuple(float(v) for v in args.values.split(","))
        cfg = dataclasses.replace(cfg, sweep_axis=args.axis, sweep_values=values)
    records, summary = harness.run_sweep(cfg, out_csv=args.out, out_json=args.json,
                                         workers=args.workers)
    for row in summary:
        print(json.dumps(row))
    return 0


def _cmd_validate_stats(args):
    """Monte Carlo oracles for channels, feedback and statistics closed forms."""
    draws = args.draws
    rng = np.random.default_rng(args.seed)
    failures = 0

    def check(name, value, tol):
        nonlocal failures
        ok = value <= tol
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e} (tol {tol:.1e})")

    net = NetworkConfig(num_rrh=6, num_ue=3, cluster_size=2, seed=args.seed)
    topo = generate(net)
    pa = dsatur_color(build_conflict_graph(topo), 2, net.antennas)
    noise = noise_power_mw()
    est = estimation_stats(topo, pa, 200.0, noise)

    # channels: sampled per-antenna variances against the closed forms
    reps = int(np.clip(draws // 100, 200, 2000))
    acc_o = np.zeros_like(est.omega)
    for _ in range(reps):
        d = sample_channels(topo, est, rng)
        acc_o += (np.abs(d.h_hat) ** 2).mean(axis=2)
    intra = topo.intra_mask()
    rel_o = np.abs(acc_o / reps - est.omega)[intra] / est.omega[intra]
    # |h|^2 is Exp(omega): the mean of reps*M draws has sd omega/sqrt(n)
    bound = 4.0 / np.sqrt(reps * topo.antennas)
    check("estimate variance vs closed form", float(rel_o.max()), bound)

    # feedback: realized quantization error stats vs the lemma constants
    for b in (1, 2):
        a_hat, align_hat = mc_quantization_constants(net.antennas, b, draws, rng)
        check(f"mean cdi error (b={b})",
              abs(a_hat - mean_cdi_error(b, net.antennas)) / mean_cdi_error(b, net.antennas),
              0.01)
        check(f"mean cdi alignment (b={b})",
              abs(align_hat - mean_cdi_alignment(b, net.antennas))
              / mean_cdi_alignment(b, net.antennas), 0.01)

    # statistics: conditional sampler vs assembled matrices
    fb = build_feedback(FeedbackConfig(b_cdi=2, b_pa=1, codebook_seed=args.seed),
                        topo, sample_channels(topo, est, rng))
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo, noise_mw=noise)
    mc = mc_desired_matrix(fb, est, topo, 0, draws, rng)
    ref = stats.a_kk[0]
    check("desired matrix vs sampler",
          float(np.linalg.norm(mc - ref) / np.linalg.norm(ref)), 0.02)
    mc = mc_interference_matrix(fb, est, topo, 1, 0, draws, rng)
    ref = stats.a_cross[1, 0]
    check("interference matrix vs sampler",
          float(np.linalg.norm(mc - ref) / np.linalg.norm(ref)), 0.02)

    print("validate-stats:", "PASS" if failures == 0 else f"FAIL ({failures})")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cranbeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--config", help="JSON experiment config file")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--rrh", type=int)
        p.add_argument("--ue", type=int)
        p.add_argument("--area", type=float)
        p.add_argument("--r-min", dest="r_min", type=float)
        p.add_argument("--n-max", dest="n_max", type=int)
        p.add_argument("--b-cdi", dest="b_cdi", type=int,
                       help="CDI bits (negative = exact feedback)")
        p.add_argument("--b-pa", dest="b_pa", type=int,
                       help="PA bits (negative = exact feedback)")
        p.add_argument("--methods", help="comma list: successive,bisection,exhaustive")
        p.add_argument("--beliefs", help="comma list of belief models")
        p.add_argument("--engine", help="dual engine: auto|lbfgs|ellipsoid|subgradient")

    p = sub.add_parser("topo", help="print a generated deployment as JSON")
    common(p)
    p.set_defaults(func=_cmd_topo)

    p = sub.add_parser("pilots", help="print the pilot coloring and training length")
    common(p)
    p.set_defaults(func=_cmd_pilots)

    p = sub.add_parser("solve", help="run one trial end to end and print reports")
    common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("admit", help="run user selection only and print the outcome")
    common(p)
    p.set_defaults(func=_cmd_admit)

    p = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    common(p)
    p.add_argument("--axis", choices=("r_min", "b_cdi", "b_pa"))
    p.add_argument("--values", default="", help="comma list of sweep values")
    p.add_argument("--trials", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate-stats",
                       help="run the Monte Carlo oracles and print pass/fail")
    p.add_argument("--draws", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_validate_stats)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
