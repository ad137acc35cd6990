"""Stage-I user selection through the slack-variable feasibility problem.

Each candidate UE gets a nonnegative slack measuring how far its SINR target
is from being met; minimizing the slack sum with the same SCA/dual machinery
as the power solver yields (a) an admissibility certificate (all slacks zero)
and (b) beams that serve as the warm start of the power minimization stage.
Three selection strategies are provided: successive deletion of the
worst-slack UE, bisection over a one-shot slack ordering, and exhaustive
subset search for benchmarking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ratemodel import BeamSet, RateConfig, smooth_indicator
from .solver import (
    SolverOptions,
    _indicator_drops,
    _maximize_dual,
    _reseed_dead,
    _Subproblem,
    linearize,
)
from .statistics import StatSet

__all__ = [
    "P8Report",
    "AdmissionResult",
    "initial_beams",
    "solve_p8",
    "successive_deletion",
    "bisection_selection",
    "exhaustive_selection",
]

EXHAUSTIVE_GUARD = 12


@dataclass
class P8Report:
    """Outcome of one slack-minimization solve over a candidate set."""

    candidates: tuple
    slacks: np.ndarray          # per candidate, noise-normalized SINR units
    beams: BeamSet
    iterations: int
    trace: list
    converged: bool
    zero_slack: bool


@dataclass
class AdmissionResult:
    """Selected UE set, final slacks, and a feasible warm start for stage II."""

    admitted: tuple
    slacks: dict
    warm_start: BeamSet
    method: str
    p8_solve_count: int


def initial_beams(candidates, stats: StatSet, cfg: RateConfig, scheme: str = "cm",
                  rng: "np.random.Generator | None" = None) -> BeamSet:
    """Feasible starting beams for the slack solve.

    "cm": each RRH splits its full power equally over its strongest candidates
    (believed gain), keeping only as many as its fronthaul limit can carry,
    with slice directions along the believed channel so the cluster combines
    coherently. "rand": random directions and random powers over the same
    kept sets. Candidates dropped everywhere get a tiny seed beam later.
    """
    candidates = tuple(sorted(int(k) for k in candidates))
    n = len(candidates)
    M = stats.antennas
    L = len(stats.clusters[0]) if stats.clusters else 0
    D = M * L
    w = np.zeros((n, D), dtype=complex)
    beams = BeamSet(candidates, w, stats.clusters, M)
    if n == 0:
        return beams
    if scheme not in ("cm", "rand"):
        raise ValueError(f"unknown initialization scheme {scheme!r}")
    if scheme == "rand" and rng is None:
        rng = np.random.default_rng(0)

    row_of = {k: r for r, k in enumerate(candidates)}
    num_rrh = len(cfg.p_max)
    r_min = np.asarray(cfg.r_min)

    # believed per-slice strength and direction from the statistics
    strength = np.zeros((n, L))
    for r, k in enumerate(candidates):
        for s in range(L):
            blk = stats.a_kk[k][s * M:(s + 1) * M, s * M:(s + 1) * M]
            strength[r, s] = np.trace(blk).real / M

    served = [[] for _ in range(num_rrh)]
    for r, k in enumerate(candidates):
        for s, i in enumerate(stats.clusters[k]):
            served[i].append((strength[r, s], k, s))
    for i in range(num_rrh):
        cand = sorted(served[i], key=lambda t: (-t[0], t[1]))
        kept = []
        budget = cfg.c_max[i]
        for _, k, s in cand:
            if r_min[k] <= budget:
                kept.append((k, s))
                budget -= r_min[k]
        if not kept:
            continue
        for k, s in kept:
            r = row_of[k]
            if scheme == "cm":
                power = cfg.p_max[i] / len(kept)
                direction = stats.believed_dir[k, s]
            else:
                power = rng.uniform(0.0, cfg.p_max[i] / len(kept))
                g = rng.standard_normal(M) + 1j * rng.standard_normal(M)
                direction = g / np.linalg.norm(g)
            beams.w[r, s * M:(s + 1) * M] = np.sqrt(power) * direction
    return beams


def _true_slacks(problem: _Subproblem, w: np.ndarray) -> np.ndarray:
    """Exact target shortfalls at the given beams (noise-normalized)."""
    _, _, den, _ = problem.quantities(w)
    sig = np.einsum("ki,kij,kj->k", w.conj(), problem.a_kk, w).real
    return np.maximum(problem.eta * den - sig, 0.0)


def solve_p8(candidates, stats: StatSet, cfg: RateConfig,
             options: "SolverOptions | None" = None, init_scheme: str = "cm",
             seed: int = 0, repair: bool = True) -> P8Report:
    """Minimize the sum of SINR-target slacks over a candidate set.

    Always feasible. The SCA loop exits early as soon as every intermediate
    slack is (numerically) zero; otherwise it runs until the regularized
    objective settles. Reported slacks are re-evaluated exactly at the
    returned beams.
    """
    opts = options or SolverOptions()
    candidates = tuple(sorted(int(k) for k in candidates))
    n = len(candidates)
    if n == 0:
        empty = BeamSet((), np.zeros((0, stats.dim)), stats.clusters, stats.antennas)
        return P8Report(candidates=(), slacks=np.zeros(0), beams=empty, iterations=0,
                        trace=[0.0], converged=True, zero_slack=True)

    rng = np.random.default_rng(seed)
    beams = initial_beams(candidates, stats, cfg, scheme=init_scheme, rng=rng)
    support = np.ones_like(beams.w, dtype=bool)
    warm = np.zeros(2 * len(cfg.p_max) + n)
    iterations = 0
    converged = False
    zero_slack = False
    trace = []

    def objective(problem, w):
        return float(_true_slacks(problem, w).sum()) + opts.p8_ridge * float(
            (np.abs(w) ** 2).sum())

    for round_ in range(opts.max_repair_rounds + 1):
        while iterations < opts.max_outer:
            iterations += 1
            _reseed_dead(beams, stats, cfg, opts, support)
            beams.w *= support
            sca = linearize(beams, stats, cfg, opts.theta)
            problem = _Subproblem(stats, cfg, sca, support=support, p8=True,
                                  ridge=opts.p8_ridge)
            if not trace:
                trace.append(objective(problem, beams.w))
            w_new, dual = _maximize_dual(problem, warm, opts, strict=False)
            warm = dual.as_vector()
            obj = objective(problem, w_new)
            if obj <= trace[-1] * (1.0 + 1e-12) + 1e-15:
                beams = BeamSet(beams.ues, w_new, beams.clusters, beams.antennas)
                obj = min(obj, trace[-1])
            else:
                obj = trace[-1]
            trace.append(obj)
            slack_now = _true_slacks(problem, beams.w)
            if float(slack_now.max(initial=0.0)) <= opts.phi_tol:
                zero_slack = True
                converged = True
                break
            if abs(trace[-2] - trace[-1]) <= opts.delta_tol * max(trace[-1], 1e-12):
                converged = True
                break
        if not (repair and zero_slack):
            break
        drops = _indicator_drops(beams, cfg, opts)
        if not drops or round_ == opts.max_repair_rounds:
            break
        M = beams.antennas
        for row, slot in drops:
            support[row, slot * M:(slot + 1) * M] = False
        beams.w *= support
        zero_slack = False
        converged = False

    sca = linearize(beams, stats, cfg, opts.theta)
    problem = _Subproblem(stats, cfg, sca, support=support, p8=True, ridge=opts.p8_ridge)
    slacks = _true_slacks(problem, beams.w)
    # admissibility also demands physically feasible beams, audited exactly
    power = beams.rrh_powers(len(cfg.p_max))
    power_ok = float(((power - cfg.p_max) / cfg.p_max).max(initial=0.0)) <= opts.tol_feas
    zero_slack = bool(slacks.max(initial=0.0) <= opts.phi_tol) and power_ok
    return P8Report(candidates=candidates, slacks=slacks, beams=beams,
                    iterations=iterations, trace=trace, converged=converged,
                    zero_slack=zero_slack)


class _P8Cache:
    """Memoizes slack solves per candidate set within one trial."""

    def __init__(self, stats, cfg, options, init_scheme, seed):
        self.stats = stats
        self.cfg = cfg
        self.options = options
        self.init_scheme = init_scheme
        self.seed = seed
        self.store: dict = {}

    def solve(self, candidates) -> P8Report:
        key = tuple(sorted(int(k) for k in candidates))
        if key not in self.store:
            self.store[key] = solve_p8(key, self.stats, self.cfg, self.options,
                                       init_scheme=self.init_scheme, seed=self.seed)
        return self.store[key]


def _result(method, admitted_rep: P8Report, slack_history: dict,
            count: int) -> AdmissionResult:
    return AdmissionResult(
        admitted=admitted_rep.candidates,
        slacks=dict(slack_history),
        warm_start=admitted_rep.beams,
        method=method,
        p8_solve_count=count,
    )


def successive_deletion(candidates, stats: StatSet, cfg: RateConfig,
                        options: "SolverOptions | None" = None,
                        init_scheme: str = "cm", seed: int = 0,
                        cache: "_P8Cache | None" = None) -> AdmissionResult:
    """Drop the worst-slack UE (ties to the lowest index) until all slacks vanish."""
    opts = options or SolverOptions()
    cache = cache or _P8Cache(stats, cfg, opts, init_scheme, seed)
    current = tuple(sorted(int(k) for k in candidates))
    history: dict = {}
    count = 0
    while current:
        rep = cache.solve(current)
        count += 1
        history.update(dict(zip(rep.candidates, rep.slacks)))
        if rep.zero_slack:
            return _result("successive", rep, history, count)
        worst = max(zip(rep.slacks, [-k for k in rep.candidates]))
        drop = -worst[1]
        current = tuple(k for k in current if k != drop)
    return _result("successive", cache.solve(()), history, count)


def bisection_selection(candidates, stats: StatSet, cfg: RateConfig,
                        options: "SolverOptions | None" = None,
                        init_scheme: str = "cm", seed: int = 0,
                        cache: "_P8Cache | None" = None) -> AdmissionResult:
    """Remove a prefix of the one-shot descending slack order, sized by bisection.

    The initial solve fixes the ordering; feasibility of a retained tail is
    monotone in its size, so the minimal removal count is found with at most
    ceil(log2(K)) further solves.
    """
    opts = options or SolverOptions()
    cache = cache or _P8Cache(stats, cfg, opts, init_scheme, seed)
    cands = tuple(sorted(int(k) for k in candidates))
    history: dict = {}
    count = 0
    if not cands:
        return _result("bisection", cache.solve(()), history, count)
    rep0 = cache.solve(cands)
    count += 1
    history.update(dict(zip(rep0.candidates, rep0.slacks)))
    if rep0.zero_slack:
        return _result("bisection", rep0, history, count)
    order = [k for _, k in sorted(zip(-rep0.slacks, rep0.candidates))]
    K = len(cands)
    lo, hi = 1, K            # removing all K is vacuously feasible
    best = None
    while lo < hi:
        mid = (lo + hi) // 2
        tail = tuple(sorted(order[mid:]))
        rep = cache.solve(tail)
        count += 1
        history.update(dict(zip(rep.candidates, rep.slacks)))
        if rep.zero_slack:
            hi, best = mid, rep
        else:
            lo = mid + 1
    if best is None or lo == K:
        return _result("bisection", cache.solve(()), history, count)
    return _result("bisection", best, history, count)


def exhaustive_selection(candidates, stats: StatSet, cfg: RateConfig,
                         options: "SolverOptions | None" = None,
                         init_scheme: str = "cm", seed: int = 0,
                         cache: "_P8Cache | None" = None) -> AdmissionResult:
    """Largest zero-slack subset by enumeration (lexicographically smallest tie).

    Guarded to at most 12 candidates. Subsets containing a UE that is
    infeasible on its own are skipped without solving.
    """
    opts = options or SolverOptions()
    cands = tuple(sorted(int(k) for k in candidates))
    if len(cands) > EXHAUSTIVE_GUARD:
        raise ValueError(
            f"exhaustive search refuses {len(cands)} candidates (> {EXHAUSTIVE_GUARD})")
    cache = cache or _P8Cache(stats, cfg, opts, init_scheme, seed)
    history: dict = {}
    count = 0
    hopeless = set()
    for k in cands:
        rep = cache.solve((k,))
        count += 1
        history.setdefault(k, float(rep.slacks[0]))
        if not rep.zero_slack:
            hopeless.add(k)
    for size in range(len(cands), 0, -1):
        for subset in itertools.combinations(cands, size):
            if hopeless.intersection(subset):
                continue
            rep = cache.solve(subset)
            count += 1
            history.update(dict(zip(rep.candidates, rep.slacks)))
            if rep.zero_slack:
                return _result("exhaustive", rep, history, count)
    return _result("exhaustive", cache.solve(()), history, count)
