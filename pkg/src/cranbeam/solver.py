"""Power-minimization beamforming by successive convex approximation.

Outer loop: the smoothed fronthaul load and the desired-signal quadratic are
replaced by tangent surrogates at the previous iterate, yielding a convex
quadratically-constrained subproblem. Inner loop: the subproblem is solved
through its Lagrange dual; for fixed multipliers the minimizing beamformers
are closed form, ``w_k = ups_k J_k^{-1} A_kk w_k(t)``, and the smooth concave
dual is maximized over the nonnegative multiplier box.

All SINR-type quantities are handled in noise-normalized units internally
(statistics divided by the noise power) so that multipliers, gradients and
search radii live on a sane numeric scale; beams, powers and the objective
stay in physical mW.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .ratemodel import (
    BeamSet,
    RateConfig,
    smooth_indicator,
    smooth_indicator_slope,
)
from .statistics import StatSet

__all__ = [
    "SolverOptions",
    "ScaState",
    "DualState",
    "SolveReport",
    "NumericalFailure",
    "ConvergenceFailure",
    "linearize",
    "taylor_signal_bound",
    "inner_beamformer",
    "solve_dual",
    "fota_solve",
    "verify_kkt",
]


class NumericalFailure(RuntimeError):
    """Inner linear algebra produced non-finite results."""


class ConvergenceFailure(RuntimeError):
    """Dual maximization exhausted every engine; carries the best iterate."""

    def __init__(self, message, beams=None, dual=None):
        super().__init__(message)
        self.beams = beams
        self.dual = dual


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and engine knobs. Defaults follow the simulation parameters."""

    theta: float = 1e-5            # smoothing constant of the indicator surrogate
    delta_tol: float = 1e-5        # outer relative objective tolerance
    tol_feas: float = 1e-6         # relative primal feasibility at the dual solution
    tol_cs: float = 1e-5           # complementary slackness residual
    max_outer: int = 60
    engine: str = "auto"           # auto | lbfgs | ellipsoid | subgradient
    ellipsoid_radius: float = 1e3
    ellipsoid_budget: int = 50     # steps = budget * dim^2
    subgradient_steps: int = 10_000
    lbfgs_maxiter: int = 3000
    reseed_power_fraction: float = 1e-3
    p8_ridge: float = 1e-8
    p8_tol_feas: float = 1e-4      # surrogate certification for the slack problem;
    p8_tol_cs: float = 1e-3        # its ridge makes the dual too spiky for 1e-6,
                                   # physical contracts are audited exactly instead
    phi_tol: float = 1e-6          # zero-slack tolerance, noise-normalized units
    tol_zero_mw: float = 1e-9      # indicator threshold for "beam is off"
    dead_beam_mw: float = 1e-12
    max_repair_rounds: int = 3

    def feas_tol_for(self, p8: bool) -> float:
        return self.p8_tol_feas if p8 else self.tol_feas

    def cs_tol_for(self, p8: bool) -> float:
        return self.p8_tol_cs if p8 else self.tol_cs


@dataclass
class ScaState:
    """Linearization data at the current iterate w(t)."""

    beams: BeamSet                 # w(t)
    beta: np.ndarray               # (n, L) slope of the smooth indicator
    tau_lin: np.ndarray            # (n, L) beta * r_min
    c_tilde: np.ndarray            # (I,) remaining fronthaul budget after linearizing
    zeta: np.ndarray               # (n,) w(t)^H A_kk w(t), physical units


@dataclass
class DualState:
    """Multipliers of the power (lam), fronthaul (mu) and SINR (ups) constraints.

    SINR multipliers are reported in the noise-normalized convention.
    """

    lam: np.ndarray
    mu: np.ndarray
    ups: np.ndarray
    engine: str = ""
    iterations: int = 0
    feas_residual: float = np.inf
    cs_residual: float = np.inf

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu, self.ups])


@dataclass
class SolveReport:
    beams: BeamSet
    objective: float
    trace: list
    iterations: int
    converged: bool
    kkt: dict
    dual: "DualState | None"
    sca: "ScaState | None"         # linearization that produced ``beams``
    support: "np.ndarray | None" = None
    reseeds: int = 0
    repairs: int = 0
    message: str = ""

    def to_jsonable(self) -> dict:
        return {
            "objective_mw": self.objective,
            "trace_mw": [float(v) for v in self.trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt": {k: float(v) for k, v in self.kkt.items()},
            "multipliers": None if self.dual is None else {
                "power": self.dual.lam.tolist(),
                "fronthaul": self.dual.mu.tolist(),
                "sinr": self.dual.ups.tolist(),
            },
            "reseeds": self.reseeds,
            "repairs": self.repairs,
            "message": self.message,
        }


def taylor_signal_bound(a_kk: np.ndarray, w: np.ndarray, w_prev: np.ndarray) -> float:
    """Tangent lower bound of the convex quadratic w^H A w at w_prev.

    Returns ``2 Re(w_prev^H A w) - w_prev^H A w_prev``; equals the quadratic at
    ``w = w_prev`` and never exceeds it for Hermitian PSD ``A``.
    """
    lead = 2.0 * np.real(np.vdot(w_prev, a_kk @ w))
    anchor = np.real(np.vdot(w_prev, a_kk @ w_prev))
    return float(lead - anchor)


def linearize(beams: BeamSet, stats: StatSet, cfg: RateConfig, theta: float) -> ScaState:
    """Build the SCA surrogate data at the given iterate."""
    n = len(beams.ues)
    if n == 0:
        return ScaState(beams=beams, beta=np.zeros((0, 0)), tau_lin=np.zeros((0, 0)),
                        c_tilde=np.asarray(cfg.c_max, dtype=float).copy(),
                        zeta=np.zeros(0))
    sp = beams.slice_powers()
    beta = smooth_indicator_slope(sp, theta)
    r = np.asarray(cfg.r_min)[list(beams.ues)][:, None]
    tau_lin = beta * r
    c_tilde = np.asarray(cfg.c_max, dtype=float).copy()
    offset = (smooth_indicator(sp, theta) - beta * sp) * r
    np.add.at(c_tilde, beams.cluster_index(), -offset)
    a_kk = stats.a_kk[list(beams.ues)]
    zeta = np.einsum("ki,kij,kj->k", beams.w.conj(), a_kk, beams.w).real
    return ScaState(beams=beams, beta=beta, tau_lin=tau_lin, c_tilde=c_tilde, zeta=zeta)


class _Subproblem:
    """One convex subproblem in noise-normalized units, vectorized over UEs.

    For the slack-minimization variant (``p8=True``) the identity term of the
    inner matrix is replaced by a small ridge and the SINR multipliers are
    boxed to [0, 1] (the slack coefficients in the Lagrangian must stay
    nonnegative).
    """

    def __init__(self, stats: StatSet, cfg: RateConfig, sca: ScaState,
                 support: "np.ndarray | None" = None, p8: bool = False,
                 ridge: float = 0.0):
        beams = sca.beams
        self.ues = beams.ues
        self.n = len(beams.ues)
        self.clusters = beams.clusters
        self.antennas = beams.antennas
        idx = list(beams.ues)
        sigma2 = stats.noise_mw
        self.a_kk = stats.a_kk[idx] / sigma2
        self.e_diag = stats.e_diag[idx] / sigma2
        self.a_cross = stats.a_cross[np.ix_(idx, idx)] / sigma2 if self.n else \
            np.zeros((0, 0, stats.dim, stats.dim))
        self.eta = cfg.eta_min[idx]
        self.cl = beams.cluster_index()
        self.num_rrh = len(cfg.p_max)
        self.p_max = np.asarray(cfg.p_max, dtype=float)
        self.tau_lin = sca.tau_lin
        self.c_tilde = sca.c_tilde
        self.zeta = sca.zeta / sigma2
        self.dim = stats.dim
        self.p8 = p8
        self.base = ridge if p8 else 1.0
        self.ups_cap = 1.0 if p8 else np.inf
        if support is None:
            support = np.ones((self.n, self.dim), dtype=bool)
        self.support = support
        self.s = np.einsum("kij,kj->ki", self.a_kk, beams.w * support) * support
        # engine coordinates y = x * scale so every gradient entry is a
        # relative violation of order one (mW, bit/s/Hz and SINR constraints
        # otherwise live on wildly different scales)
        self.scale = np.concatenate([
            self.p_max,
            np.maximum(np.asarray(cfg.c_max, dtype=float), 1.0),
            self.eta if self.n else np.zeros(0),
        ])
        self.y_cap = np.full(2 * self.num_rrh + self.n, np.inf)
        if np.isfinite(self.ups_cap):
            self.y_cap[2 * self.num_rrh:] = self.ups_cap * self.scale[2 * self.num_rrh:]

    # -- inner minimization ---------------------------------------------------

    def inner(self, lam, mu, ups):
        """Closed-form inner beams for fixed multipliers; returns (w, x)."""
        n, D, M = self.n, self.dim, self.antennas
        if n == 0:
            z = np.zeros((0, D), dtype=complex)
            return z, z
        diag_slot = lam[self.cl] + mu[self.cl] * self.tau_lin       # (n, L)
        d = self.base + np.repeat(diag_slot, M, axis=1) + (ups * self.eta)[:, None] * self.e_diag
        J = np.einsum("l,klij->kij", ups * self.eta, self.a_cross)
        J *= self.support[:, :, None] * self.support[:, None, :]
        J[:, np.arange(D), np.arange(D)] += np.where(self.support, d, 1.0)
        x = np.linalg.solve(J, self.s[..., None])[..., 0]
        if not np.isfinite(x).all():
            raise NumericalFailure("inner solve produced non-finite beams")
        return ups[:, None] * x, x

    # -- dual function ----------------------------------------------------------

    def unpack(self, vec):
        I = self.num_rrh
        return vec[:I], vec[I:2 * I], vec[2 * I:]

    def quantities(self, w):
        """Powers, fronthaul loads and SINR constraint pieces at given beams."""
        M = self.antennas
        power = np.zeros(self.num_rrh)
        load = np.zeros(self.num_rrh)
        if self.n == 0:
            return power, load, np.zeros(0), np.zeros(0)
        sp = (np.abs(w) ** 2).reshape(self.n, -1, M).sum(axis=2)
        np.add.at(power, self.cl, sp)
        np.add.at(load, self.cl, self.tau_lin * sp)
        resid = (self.e_diag * np.abs(w) ** 2).sum(axis=1)
        cross = np.einsum("lkij,li,lj->lk", self.a_cross, w.conj(), w).real
        den = resid + cross.sum(axis=0) + 1.0
        sig_lin = 2.0 * np.einsum("ki,ki->k", self.s.conj(), w).real
        return power, load, den, sig_lin

    def value_and_grad(self, vec):
        lam, mu, ups = self.unpack(vec)
        w, x = self.inner(lam, mu, ups)
        power, load, den, sig_lin = self.quantities(w)
        quad = np.einsum("ki,ki->k", self.s.conj(), x).real
        g = (
            -float((ups**2 * quad).sum())
            - float(lam @ self.p_max)
            - float(mu @ self.c_tilde)
            + float((ups * (self.eta + self.zeta)).sum())
        )
        grad = np.concatenate([
            power - self.p_max,
            load - self.c_tilde,
            self.eta * den + self.zeta - sig_lin,
        ])
        return g, grad, w

    def value_and_grad_scaled(self, y):
        g, grad, w = self.value_and_grad(y / self.scale)
        return g, grad / self.scale, w

    def residuals(self, w, lam, mu, ups):
        """Relative feasibility and complementary-slackness residuals."""
        power, load, den, sig_lin = self.quantities(w)
        feas = float(((power - self.p_max) / self.p_max).max(initial=0.0))
        load_scale = np.maximum(np.abs(self.c_tilde), 1.0)
        feas = max(feas, float(((load - self.c_tilde) / load_scale).max(initial=0.0)))
        cs = float(np.abs(lam * (power - self.p_max)).max(initial=0.0)
                   / max(1.0, float(self.p_max.max(initial=1.0))))
        cs = max(cs, float(np.abs(mu * (load - self.c_tilde)).max(initial=0.0))
                 / max(1.0, float(np.abs(self.c_tilde).max(initial=1.0))))
        if self.n:
            gap = self.eta * den + self.zeta - sig_lin
            gap_scale = np.maximum(self.eta * den, 1.0)
            if self.p8:
                # slacks absorb positive gaps; CS couples ups with the clipped
                # gap and couples (1 - ups) with the slack value
                cs = max(cs, float((np.abs((1.0 - ups) * np.maximum(gap, 0.0)) / gap_scale).max()))
                cs = max(cs, float((np.abs(ups * np.minimum(gap, 0.0)) / gap_scale).max()))
            else:
                feas = max(feas, float((gap / (self.eta * den)).max(initial=0.0)))
                cs = max(cs, float((np.abs(ups * gap) / gap_scale).max()))
        return feas, cs


# ---------------------------------------------------------------------------
# Dual maximization engines
# ---------------------------------------------------------------------------

def _project(problem, y):
    return np.clip(np.asarray(y, dtype=float), 0.0, problem.y_cap)


def _certify(problem, y):
    lam, mu, ups = problem.unpack(_project(problem, y) / problem.scale)
    w, _ = problem.inner(lam, mu, ups)
    feas, cs = problem.residuals(w, lam, mu, ups)
    return w, lam, mu, ups, feas, cs


def _dual_lbfgs(problem: _Subproblem, y0, opts: SolverOptions):
    bounds = [(0.0, None if np.isinf(cap) else cap) for cap in problem.y_cap]

    def negated(y):
        g, grad, _ = problem.value_and_grad_scaled(y)
        return -g, -grad

    y = _project(problem, y0)
    total = 0
    for attempt in range(3):
        res = optimize.minimize(
            negated, y, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opts.lbfgs_maxiter, "ftol": 1e-18, "gtol": 1e-12,
                     "maxfun": 10 * opts.lbfgs_maxiter, "maxcor": 30},
        )
        y = _project(problem, np.asarray(res.x))
        total += int(res.nit)
        w, lam, mu, ups, feas, cs = _certify(problem, y)
        if feas <= opts.feas_tol_for(problem.p8) and cs <= opts.cs_tol_for(problem.p8):
            break
    return y, total


def _dual_ellipsoid(problem: _Subproblem, y0, opts: SolverOptions,
                    radius: "float | None" = None, budget: "int | None" = None):
    """Deep-cut ellipsoid ascent over the multiplier box (scaled coordinates).

    Nonnegativity (and the multiplier cap in the slack variant) is enforced by
    coordinate feasibility cuts; elsewhere a supergradient cut is applied.
    Stops as soon as the recovered beams pass the feasibility and
    complementary slackness tolerances, or when the step budget is exhausted.
    """
    dim = y0.size
    if budget is None:
        budget = opts.ellipsoid_budget * dim * dim
    if radius is None:
        radius = opts.ellipsoid_radius
    c = np.asarray(y0, dtype=float).copy()
    P = np.eye(dim) * radius**2
    best = (-np.inf, c.copy())
    for it in range(budget):
        neg = np.flatnonzero(c < 0)
        over = np.flatnonzero(c > problem.y_cap)
        if neg.size:
            a = np.zeros(dim)
            a[neg[0]] = -1.0
            depth = -c[neg[0]]
        elif over.size:
            a = np.zeros(dim)
            j = over[0]
            a[j] = 1.0
            depth = c[j] - problem.y_cap[j]
        else:
            g, grad, w = problem.value_and_grad_scaled(c)
            lam, mu, ups = problem.unpack(c / problem.scale)
            feas, cs = problem.residuals(w, lam, mu, ups)
            if feas <= opts.feas_tol_for(problem.p8) and cs <= opts.cs_tol_for(problem.p8):
                return c, it, True
            if g > best[0]:
                best = (g, c.copy())
            a = -grad  # keep the halfspace grad^T (y - c) >= 0
            depth = 0.0
        Pa = P @ a
        denom = float(np.sqrt(max(a @ Pa, 0.0)))
        if not np.isfinite(denom) or denom < 1e-300:
            break
        alpha = max(depth / denom, 0.0)
        if alpha >= 1.0:
            break  # cut excludes the whole ellipsoid: numerical dead end
        an = Pa / denom
        c = c - (1.0 + dim * alpha) / (dim + 1.0) * an
        P = (dim * dim * (1.0 - alpha * alpha) / (dim * dim - 1.0)) * (
            P - (2.0 * (1.0 + dim * alpha) / ((dim + 1.0) * (1.0 + alpha))) * np.outer(an, an)
        )
    return best[1], budget, False


def _dual_newton(problem: _Subproblem, y0, opts: SolverOptions, rounds: int = 6):
    """Damped Newton polish on the free coordinates of the smooth dual.

    L-BFGS-B stalls once objective differences fall below float resolution;
    Newton steps on the gradient (finite-difference Hessian over the free
    set) close the last few digits of primal feasibility.
    """
    y = _project(problem, y0)
    g0, grad, _ = problem.value_and_grad_scaled(y)
    nit = 0
    for _ in range(rounds):
        free = np.flatnonzero((y > 1e-11) | (grad > 1e-11))
        if free.size == 0 or free.size > 160:
            break
        h = 1e-7 * (1.0 + np.abs(y[free]))
        H = np.empty((free.size, free.size))
        for j, idx in enumerate(free):
            yj = y.copy()
            yj[idx] += h[j]
            _, gj, _ = problem.value_and_grad_scaled(yj)
            H[:, j] = (gj[free] - grad[free]) / h[j]
            nit += 1
        H = (H + H.T) / 2.0
        try:
            step = np.linalg.solve(H, -grad[free])
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -grad[free], rcond=None)[0]
        if not np.isfinite(step).all():
            break
        improved = False
        for t in (1.0, 0.5, 0.25, 0.1):
            y_try = y.copy()
            y_try[free] = y[free] + t * step
            y_try = _project(problem, y_try)
            g_try, grad_try, _ = problem.value_and_grad_scaled(y_try)
            ok_try = np.linalg.norm(grad_try[free]) < np.linalg.norm(grad[free])
            if g_try >= g0 or ok_try:
                y, g0, grad = y_try, g_try, grad_try
                improved = True
                break
        if not improved:
            break
        w, lam, mu, ups, feas, cs = _certify(problem, y)
        if feas <= opts.feas_tol_for(problem.p8) and cs <= opts.cs_tol_for(problem.p8):
            break
    return y, nit


def _dual_subgradient(problem: _Subproblem, y0, opts: SolverOptions):
    """Projected supergradient ascent with diminishing steps; fallback engine."""
    c = _project(problem, y0)
    best = (-np.inf, c.copy())
    step0 = max(1.0, float(np.linalg.norm(c)))
    for it in range(1, opts.subgradient_steps + 1):
        g, grad, w = problem.value_and_grad_scaled(c)
        lam, mu, ups = problem.unpack(c / problem.scale)
        feas, cs = problem.residuals(w, lam, mu, ups)
        if feas <= opts.feas_tol_for(problem.p8) and cs <= opts.cs_tol_for(problem.p8):
            return c, it, True
        if g > best[0]:
            best = (g, c.copy())
        norm = float(np.linalg.norm(grad))
        if norm == 0.0:
            return c, it, True
        c = _project(problem, c + (step0 / np.sqrt(it)) * grad / norm)
    return best[1], opts.subgradient_steps, False


_ENGINE_CHAINS = {
    "auto": ("lbfgs", "newton", "ellipsoid_polish", "subgradient"),
    "lbfgs": ("lbfgs", "newton"),
    "ellipsoid": ("ellipsoid", "subgradient"),
    "subgradient": ("subgradient",),
}


def _maximize_dual(problem: _Subproblem, x0, opts: SolverOptions, strict: bool = True):
    """Run the configured engine chain until the dual point certifies.

    ``x0`` holds warm-start multipliers in their physical convention; engines
    work on the rescaled coordinates internally. With ``strict`` (the power
    subproblems) an uncertified chain raises; without it (slack subproblems,
    whose ridge-regularized dual has a genuine polish floor) the best point is
    returned and the caller audits the physical constraints exactly.
    """
    chain = _ENGINE_CHAINS[opts.engine]
    if problem.p8 and opts.engine == "auto":
        chain = ("lbfgs", "newton")
    y = _project(problem, np.asarray(x0, dtype=float) * problem.scale)
    best = None
    total_it = 0
    for engine in chain:
        if engine == "lbfgs":
            y, nit = _dual_lbfgs(problem, y, opts)
        elif engine == "newton":
            y, nit = _dual_newton(problem, y, opts)
        elif engine == "ellipsoid":
            y, nit, _ = _dual_ellipsoid(problem, y, opts)
        elif engine == "ellipsoid_polish":
            # second-chance polish around the current point, bounded budget
            y, nit, _ = _dual_ellipsoid(problem, y, opts,
                                        radius=max(1.0, 0.05 * float(np.linalg.norm(y))),
                                        budget=min(4 * y.size * y.size, 20_000))
        else:
            y, nit, _ = _dual_subgradient(problem, y, opts)
        total_it += nit
        w, lam, mu, ups, feas, cs = _certify(problem, y)
        state = DualState(lam=lam, mu=mu, ups=ups, engine=engine, iterations=total_it,
                          feas_residual=feas, cs_residual=cs)
        if best is None or feas + cs < best[2] + best[3]:
            best = (w, state, feas, cs)
        if feas <= opts.feas_tol_for(problem.p8) and cs <= opts.cs_tol_for(problem.p8):
            return w, state
        y = _project(problem, state.as_vector() * problem.scale)
    w, state, feas, cs = best
    if not strict:
        return w, state
    raise ConvergenceFailure(
        f"dual maximization stalled (feas={feas:.2e}, cs={cs:.2e})",
        beams=BeamSet(problem.ues, w, problem.clusters, problem.antennas),
        dual=state,
    )


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def inner_beamformer(dual: DualState, sca: ScaState, stats: StatSet,
                     cfg: RateConfig, support=None) -> BeamSet:
    """Closed-form minimizer of the inner Lagrangian at the given multipliers."""
    problem = _Subproblem(stats, cfg, sca, support=support)
    w, _ = problem.inner(dual.lam, dual.mu, dual.ups)
    return BeamSet(sca.beams.ues, w, sca.beams.clusters, sca.beams.antennas)


def solve_dual(sca: ScaState, stats: StatSet, cfg: RateConfig,
               options: "SolverOptions | None" = None,
               warm: "np.ndarray | None" = None, support=None):
    """Maximize the dual of one subproblem; returns certified (BeamSet, DualState).

    Raises :class:`ConvergenceFailure` (with the best iterate attached) if no
    engine reaches the feasibility and slackness tolerances.
    """
    opts = options or SolverOptions()
    problem = _Subproblem(stats, cfg, sca, support=support)
    if warm is None:
        warm = np.zeros(2 * problem.num_rrh + problem.n)
    w, state = _maximize_dual(problem, warm, opts)
    return BeamSet(sca.beams.ues, w, sca.beams.clusters, sca.beams.antennas), state


def _reseed_dead(beams: BeamSet, stats: StatSet, cfg: RateConfig,
                 opts: SolverOptions, support=None) -> int:
    """Give an all-zero UE a tiny beam along its strongest signal direction.

    The inner update maps w_k(t)=0 to w_k=0 forever, so a dead UE can never
    recover; the seed is scaled down until the smoothed fronthaul load and the
    power budgets of its cluster stay satisfied.
    """
    n = len(beams.ues)
    if n == 0:
        return 0
    count = 0
    idx = list(beams.ues)
    for row, k in enumerate(idx):
        if (np.abs(beams.w[row]) ** 2).sum() > opts.dead_beam_mw:
            continue
        a_kk = stats.a_kk[k].copy()
        if support is not None:
            z = support[row]
            a_kk = a_kk * np.outer(z, z)
        vals, vecs = np.linalg.eigh(a_kk)
        direction = vecs[:, -1]
        if vals[-1] <= 0:
            continue
        target = opts.reseed_power_fraction * float(np.min(cfg.p_max))
        for _ in range(10):
            cand = beams.copy()
            cand.w[row] = np.sqrt(target) * direction
            power = cand.rrh_powers(len(cfg.p_max))
            sp = cand.slice_powers()
            load = np.zeros(len(cfg.p_max))
            r = np.asarray(cfg.r_min)[idx][:, None]
            np.add.at(load, cand.cluster_index(), smooth_indicator(sp, opts.theta) * r)
            if (power <= cfg.p_max + 1e-12).all() and (load <= cfg.c_max + 1e-12).all():
                beams.w[row] = cand.w[row]
                count += 1
                break
            target *= 0.1
    return count


def _indicator_drops(beams: BeamSet, cfg: RateConfig, opts: SolverOptions):
    """Slices to hard-zero so every RRH meets its exact fronthaul limit.

    At each violating RRH the smallest active slices are dropped until the
    indicator load fits; a UE's last remaining slice is never dropped.
    """
    if len(beams.ues) == 0:
        return []
    sp = beams.slice_powers()
    cl = beams.cluster_index()
    r = np.asarray(cfg.r_min)[list(beams.ues)]
    active = sp > opts.tol_zero_mw
    alive = active.sum(axis=1)
    drops = []
    for i in range(len(cfg.p_max)):
        rows, slots = np.nonzero((cl == i) & active)
        if rows.size == 0:
            continue
        load = float(r[rows].sum())
        limit = cfg.c_max[i] * (1.0 + opts.tol_feas)
        if load <= limit:
            continue
        for j in np.argsort(sp[rows, slots]):
            row, slot = int(rows[j]), int(slots[j])
            if alive[row] <= 1:
                continue
            drops.append((row, slot))
            alive[row] -= 1
            load -= float(r[row])
            if load <= limit:
                break
    return drops


def fota_solve(admitted, stats: StatSet, cfg: RateConfig, init: BeamSet,
               theta: "float | None" = None, delta_tol: "float | None" = None,
               options: "SolverOptions | None" = None) -> SolveReport:
    """Iterate linearization and dual solves until the power objective settles.

    ``init`` must be feasible for the power, smoothed-fronthaul and SINR
    constraints (the admission stage's beams are). The objective trace is
    non-increasing by construction; if a converged solution still violates the
    exact (indicator) fronthaul limit somewhere, the smallest offending slices
    are pinned to zero and the solve continues on the restricted support.
    """
    opts = options or SolverOptions()
    if theta is not None:
        opts = dataclasses.replace(opts, theta=theta)
    if delta_tol is not None:
        opts = dataclasses.replace(opts, delta_tol=delta_tol)
    admitted = tuple(sorted(int(k) for k in admitted))
    if admitted != tuple(init.ues):
        raise ValueError("init beams must cover exactly the admitted set")
    n = len(admitted)
    if n == 0:
        empty = BeamSet((), np.zeros((0, stats.dim)), stats.clusters, stats.antennas)
        dual = DualState(lam=np.zeros(len(cfg.p_max)), mu=np.zeros(len(cfg.p_max)),
                         ups=np.zeros(0), feas_residual=0.0, cs_residual=0.0)
        report = SolveReport(beams=empty, objective=0.0, trace=[0.0], iterations=0,
                             converged=True, kkt={}, dual=dual,
                             sca=linearize(empty, stats, cfg, opts.theta))
        report.kkt = verify_kkt(report, report.sca, stats, cfg, options=opts)
        return report

    beams = init.copy()
    support = np.ones_like(beams.w, dtype=bool)
    warm = np.zeros(2 * len(cfg.p_max) + n)
    trace = [beams.total_power()]
    reseeds = 0
    repairs = 0
    iterations = 0
    converged = False
    used_dual = None
    used_sca = None

    for round_ in range(opts.max_repair_rounds + 1):
        while iterations < opts.max_outer:
            iterations += 1
            reseeds += _reseed_dead(beams, stats, cfg, opts, support)
            beams.w *= support
            sca = linearize(beams, stats, cfg, opts.theta)
            problem = _Subproblem(stats, cfg, sca, support=support)
            try:
                w_new, dual = _maximize_dual(problem, warm, opts)
            except ConvergenceFailure as err:
                err.beams = beams
                raise
            warm = dual.as_vector()
            cand = BeamSet(beams.ues, w_new, beams.clusters, beams.antennas)
            obj = cand.total_power()
            if obj <= trace[-1] * (1.0 + 1e-12) + 1e-15:
                beams = cand
                used_dual, used_sca = dual, sca
                obj = min(obj, trace[-1])
            else:
                obj = trace[-1]  # keep previous iterate: still subproblem-feasible
            trace.append(obj)
            if abs(trace[-2] - trace[-1]) <= opts.delta_tol * max(trace[-1], 1e-12):
                converged = True
                break
        drops = _indicator_drops(beams, cfg, opts)
        if not drops or round_ == opts.max_repair_rounds:
            break
        repairs += 1
        M = beams.antennas
        for row, slot in drops:
            support[row, slot * M:(slot + 1) * M] = False
        beams.w *= support
        trace.append(beams.total_power())
        converged = False

    if used_sca is None:
        used_sca = linearize(beams, stats, cfg, opts.theta)
    report = SolveReport(beams=beams, objective=trace[-1], trace=trace,
                         iterations=iterations, converged=converged,
                         kkt={}, dual=used_dual, sca=used_sca, support=support,
                         reseeds=reseeds, repairs=repairs)
    report.kkt = verify_kkt(report, used_sca, stats, cfg, options=opts)
    return report


def verify_kkt(report: SolveReport, sca: ScaState, stats: StatSet, cfg: RateConfig,
               options: "SolverOptions | None" = None) -> dict:
    """Audit a solution: primal feasibility, dual signs, stationarity, slackness.

    All residuals are relative; the returned dict also carries their maximum.
    ``sca`` must be the linearization whose subproblem produced the beams.
    """
    opts = options or SolverOptions()
    beams = report.beams
    dual = report.dual
    n = len(beams.ues)
    problem = _Subproblem(stats, cfg, sca, support=report.support)
    w = beams.w
    power, load, den, sig_lin = problem.quantities(w)
    out = {}
    out["primal_power"] = float(((power - problem.p_max) / problem.p_max).max(initial=0.0))
    load_scale = np.maximum(np.abs(problem.c_tilde), 1.0)
    out["primal_fronthaul"] = float(((load - problem.c_tilde) / load_scale).max(initial=0.0))
    if n:
        gap = problem.eta * den + problem.zeta - sig_lin
        out["primal_sinr"] = float((gap / (problem.eta * den)).max(initial=0.0))
    else:
        out["primal_sinr"] = 0.0
    if dual is not None:
        out["dual_nonneg"] = float(max(
            np.maximum(-dual.lam, 0.0).max(initial=0.0),
            np.maximum(-dual.mu, 0.0).max(initial=0.0),
            np.maximum(-dual.ups, 0.0).max(initial=0.0),
        ))
        w_opt, _ = problem.inner(dual.lam, dual.mu, dual.ups)
        if n:
            diff = np.linalg.norm(w - w_opt, axis=1)
            scale = 1.0 + np.linalg.norm(w_opt, axis=1)
            out["stationarity"] = float((diff / scale).max())
        else:
            out["stationarity"] = 0.0
        _, cs = problem.residuals(w, dual.lam, dual.mu, dual.ups)
        out["comp_slack"] = cs
    else:
        out["dual_nonneg"] = 0.0
        out["stationarity"] = 0.0
        out["comp_slack"] = 0.0
    out["max"] = max(abs(v) for v in out.values())
    return out
