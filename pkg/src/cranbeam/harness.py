"""Seeded Monte Carlo experiment driver: trials, sweeps, CSV/JSON emission.

One trial runs the full pipeline (deployment, pilot coloring, estimation,
channel draw, feedback, per-belief statistics, admission, power solve) and
audits the achieved rates of every produced design under the full robust
statistics, regardless of which belief designed it. A sweep repeats trials
over one axis (rate target or feedback bit budgets) with paired seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import admission as adm
from .channels import ChannelDraw, estimation_stats, noise_power_mw, sample_channels
from .feedback import FeedbackConfig, build_feedback
from .pilots import build_conflict_graph, dsatur_color
from .ratemodel import RateConfig, all_net_rates
from .solver import ConvergenceFailure, NumericalFailure, SolverOptions, fota_solve
from .statistics import BeliefModel, build_statset
from .topology import NetworkConfig, generate

__all__ = [
    "PERFECT_CSI",
    "ExperimentConfig",
    "TrialRecord",
    "CSV_HEADER",
    "small_scenario",
    "large_scenario",
    "run_trial",
    "run_sweep",
]

PERFECT_CSI = "perfect_csi"

CSV_HEADER = [
    "seed", "sweep_axis", "sweep_value", "method", "belief",
    "admitted", "power_mw", "min_rate", "mean_rate", "iters", "ok",
]

_METHODS = {
    "successive": adm.successive_deletion,
    "bisection": adm.bisection_selection,
    "exhaustive": adm.exhaustive_selection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; scalars follow the reference setup."""

    network: NetworkConfig = NetworkConfig()
    feedback: FeedbackConfig = FeedbackConfig()
    frame_slots: int = 200
    r_min: float = 3.0
    c_tilde_max: float = 3.0          # fronthaul limit in units of the rate target
    p_max_mw: float = 100.0
    pilot_power_mw: float = 200.0
    bandwidth_hz: float = 20e6
    n_max: int = 2
    trials: int = 100
    base_seed: int = 0
    sweep_axis: "str | None" = None   # r_min | b_cdi | b_pa
    sweep_values: tuple = ()
    methods: tuple = ("successive",)
    beliefs: tuple = ("full_robust",)
    perfect_estimation: bool = False
    engine: str = "auto"
    workers: int = 1

    def solver_options(self) -> SolverOptions:
        return SolverOptions(engine=self.engine)

    def to_json(self) -> str:
        doc = dataclasses.asdict(self)
        return json.dumps(doc, indent=2, default=str)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        net = NetworkConfig(**doc.pop("network", {}))
        fb = FeedbackConfig(**doc.pop("feedback", {}))
        for key in ("sweep_values", "methods", "beliefs"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        return ExperimentConfig(network=net, feedback=fb, **doc)


def small_scenario(**overrides) -> ExperimentConfig:
    """Default desk-scale deployment: 14 RRHs, 8 UEs in a 400 m square."""
    return ExperimentConfig(**overrides)


def large_scenario(**overrides) -> ExperimentConfig:
    """Denser deployment: 42 RRHs, 24 UEs in a 700 m square, reuse limit 3."""
    base = dict(
        network=NetworkConfig(area_side_m=700.0, num_rrh=42, num_ue=24),
        n_max=3,
        trials=20,
        methods=("bisection",),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass
class TrialRecord:
    """One (trial, method, belief) outcome; rates audited under full robust."""

    seed: int
    sweep_axis: str
    sweep_value: object
    method: str
    belief: str
    admitted: int
    power_mw: float
    min_rate: float
    mean_rate: float
    iters: int
    ok: bool
    wall_s: float = 0.0
    admitted_set: tuple = ()
    p8_solves: int = 0
    rates: tuple = ()
    detail: "dict | None" = None

    def csv_row(self):
        return [
            self.seed, self.sweep_axis, _fmt_value(self.sweep_value), self.method,
            self.belief, self.admitted,
            _fmt_float(self.power_mw), _fmt_float(self.min_rate),
            _fmt_float(self.mean_rate), self.iters, int(self.ok),
        ]


def _fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, float) and np.isinf(v):
        return "inf"
    return v


def _fmt_float(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.6g}"


def _apply_sweep(cfg: ExperimentConfig, value) -> ExperimentConfig:
    if value is None or cfg.sweep_axis is None:
        return cfg
    axis = cfg.sweep_axis
    if axis == "r_min":
        return dataclasses.replace(cfg, r_min=float(value))
    if axis in ("b_cdi", "b_pa"):
        bits = None if (value is None or (isinstance(value, float) and np.isinf(value))) \
            else int(value)
        fb = dataclasses.replace(cfg.feedback, **{axis: bits})
        return dataclasses.replace(cfg, feedback=fb)
    raise ValueError(f"unknown sweep axis {axis!r}")


def trial_seeds(base_seed: int, trial_index: int):
    """Counter-split child seeds: (topology, channels, codebooks, admission)."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,))
    children = ss.spawn(4)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def rate_config(cfg: ExperimentConfig, tau: int) -> RateConfig:
    K, I = cfg.network.num_ue, cfg.network.num_rrh
    return RateConfig(
        frame_slots=cfg.frame_slots,
        train_slots=tau,
        r_min=np.full(K, cfg.r_min),
        c_max=np.full(I, cfg.c_tilde_max * cfg.r_min),
        p_max=np.full(I, cfg.p_max_mw),
    )


def run_trial(cfg: ExperimentConfig, trial_index: int, sweep_value=None,
              keep_detail: bool = False):
    """Run one seeded trial; returns a list of TrialRecord (method x belief)."""
    cfg = _apply_sweep(cfg, sweep_value)
    topo_seed, chan_seed, cb_seed, adm_seed = trial_seeds(cfg.base_seed, trial_index)
    net = dataclasses.replace(cfg.network, seed=topo_seed)
    topo = generate(net)
    pa = dsatur_color(build_conflict_graph(topo), cfg.n_max, net.antennas)
    if pa.tau >= cfg.frame_slots:
        raise ValueError(f"training length {pa.tau} does not fit the frame")
    rcfg = rate_config(cfg, pa.tau)
    noise = noise_power_mw(cfg.bandwidth_hz)
    opts = cfg.solver_options()

    est = estimation_stats(topo, pa, cfg.pilot_power_mw, noise,
                           perfect=cfg.perfect_estimation)
    rng = np.random.default_rng(chan_seed)
    draw = sample_channels(topo, est, rng)
    fb_cfg = dataclasses.replace(cfg.feedback, codebook_seed=cb_seed)
    fb = build_feedback(fb_cfg, topo, draw)
    eval_stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo, noise_mw=noise)

    records = []
    all_ues = tuple(range(net.num_ue))
    for belief_name in cfg.beliefs:
        belief_name = getattr(belief_name, "value", belief_name)
        if belief_name == PERFECT_CSI:
            est_b = estimation_stats(topo, pa, cfg.pilot_power_mw, noise, perfect=True)
            draw_b = ChannelDraw(h=draw.h, h_hat=draw.h, e=np.zeros_like(draw.h))
            fb_b = build_feedback(FeedbackConfig(b_cdi=None, b_pa=None), topo, draw_b)
            stats_b = build_statset(BeliefModel.FULL_ROBUST, fb_b, est_b, topo,
                                    noise_mw=noise)
            audit_stats = stats_b        # the reference system's knowledge is correct
        else:
            stats_b = build_statset(BeliefModel(belief_name), fb, est, topo,
                                    noise_mw=noise)
            audit_stats = eval_stats
        cache = adm._P8Cache(stats_b, rcfg, opts, "cm", adm_seed)
        for method in cfg.methods:
            t0 = time.perf_counter()
            ok = True
            detail = None
            try:
                result = _METHODS[method](all_ues, stats_b, rcfg, opts, cache=cache,
                                          seed=adm_seed)
                report = fota_solve(result.admitted, stats_b, rcfg, result.warm_start,
                                    options=opts)
                rates = all_net_rates(report.beams, audit_stats, rcfg)
                power = report.objective
                iters = report.iterations
                admitted = result.admitted
                if keep_detail:
                    detail = {"solve": report.to_jsonable(),
                              "slacks": {int(k): float(v)
                                         for k, v in result.slacks.items()}}
            except (ConvergenceFailure, NumericalFailure) as err:
                ok = False
                rates = np.array([])
                power = float("nan")
                iters = 0
                admitted = ()
                detail = {"error": str(err)}
                result = None
            wall = time.perf_counter() - t0
            records.append(TrialRecord(
                seed=trial_index,
                sweep_axis=cfg.sweep_axis or "",
                sweep_value=sweep_value,
                method=method,
                belief=belief_name,
                admitted=len(admitted),
                power_mw=power,
                min_rate=float(rates.min()) if rates.size else float("nan"),
                mean_rate=float(rates.mean()) if rates.size else float("nan"),
                iters=iters,
                ok=ok,
                wall_s=wall,
                admitted_set=tuple(admitted),
                p8_solves=result.p8_solve_count if result is not None else 0,
                rates=tuple(float(r) for r in rates),
                detail=detail,
            ))
    return records


def _run_task(args):
    cfg, trial_index, value, keep_detail = args
    return run_trial(cfg, trial_index, sweep_value=value, keep_detail=keep_detail)


def run_sweep(cfg: ExperimentConfig, out_csv: "str | None" = None,
              out_json: "str | None" = None, keep_detail: bool = False,
              workers: "int | None" = None):
    """All trials x sweep values; returns (records, aggregates).

    Trials share seeds across sweep values (paired comparisons). Aggregates
    are mean/std of admitted count and power per (sweep value, method, belief).
    A failing trial is recorded with ok=0 and does not abort the sweep.
    """
    values = list(cfg.sweep_values) if cfg.sweep_axis and cfg.sweep_values else [None]
    tasks = [(cfg, t, v, keep_detail) for v in values for t in range(cfg.trials)]
    workers = workers if workers is not None else cfg.workers
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_run_task, tasks, chunksize=1):
                records.extend(recs)
    else:
        for task in tasks:
            records.extend(_run_task(task))
    records.sort(key=lambda r: (str(r.sweep_value), r.seed, r.method, r.belief))

    aggregates = {}
    for rec in records:
        key = (_fmt_value(rec.sweep_value), rec.method, rec.belief)
        aggregates.setdefault(key, []).append(rec)
    summary = []
    for (value, method, belief), recs in sorted(aggregates.items(),
                                                key=lambda kv: tuple(map(str, kv[0]))):
        admitted = np.array([r.admitted for r in recs if r.ok], dtype=float)
        power = np.array([r.power_mw for r in recs if r.ok], dtype=float)
        summary.append({
            "sweep_value": value, "method": method, "belief": belief,
            "trials": len(recs), "failed": sum(not r.ok for r in recs),
            "admitted_mean": float(admitted.mean()) if admitted.size else float("nan"),
            "admitted_std": float(admitted.std()) if admitted.size else float("nan"),
            "power_mean_mw": float(power.mean()) if power.size else float("nan"),
            "power_std_mw": float(power.std()) if power.size else float("nan"),
        })

    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in records:
                writer.writerow(rec.csv_row())
        agg_path = out_csv.rsplit(".", 1)[0] + ".agg.csv"
        with open(agg_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(summary[0].keys()) if summary else [])
            for row in summary:
                writer.writerow(list(row.values()))
    if out_json:
        doc = [{**{k: getattr(r, k) for k in
                   ("seed", "sweep_axis", "method", "belief", "admitted",
                    "power_mw", "iters", "ok", "wall_s", "p8_solves")},
                "sweep_value": _fmt_value(r.sweep_value),
                "admitted_set": list(r.admitted_set),
                "rates": list(r.rates),
                "detail": r.detail} for r in records]
        with open(out_json, "w") as fh:
            json.dump(doc, fh, indent=1, default=str)
    return records, summary
