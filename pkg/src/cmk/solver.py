"""Damped Newton, homotopy continuation in t and the eps-regularization march."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np
import scipy.sparse.linalg as spla

from . import spheregrid as sg
from .errors import (
    AdmissibleStartRequired,
    ContinuationStuck,
    NoConvergence,
    OutOfRange,
    SolverError,
    StepCollapse,
)
from .problem import ProblemSpec, _discrete_f, residual_and_jacobian, residual_raw
from .symfun import in_gamma_k

__all__ = [
    "SolveOptions",
    "SolveReport",
    "newton_solve",
    "continuation_solve",
    "epsilon_continuation",
    "manufacture_f",
    "random_admissible_starts",
    "eps_lower_bound",
]

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    """Solver knobs.  ``newton_tol=None`` picks 1e-10 on axisymmetric grids
    and 1e-8 on latitude-longitude grids."""

    newton_tol: float | None = None
    max_newton_iters: int = 30
    line_search_shrink: float = 0.5
    max_backtracks: int = 40
    t_step_init: float = 0.1
    t_step_min: float = 1e-4
    eps_start: float = 0.1
    eps_ratio: float = 0.25
    eps_count: int = 8
    enforce_even: bool = False

    def __post_init__(self):
        if self.newton_tol is not None and self.newton_tol <= 0:
            raise OutOfRange("newton_tol must be positive")
        if not 0 < self.line_search_shrink < 1:
            raise OutOfRange("line_search_shrink must lie in (0, 1)")
        if not 0 < self.t_step_min <= self.t_step_init <= 1:
            raise OutOfRange("need 0 < t_step_min <= t_step_init <= 1")
        if self.max_newton_iters < 1 or self.max_backtracks < 1:
            raise OutOfRange("iteration caps must be positive")
        if not 0 < self.eps_ratio < 1 or self.eps_start < 0 or self.eps_count < 1:
            raise OutOfRange("eps schedule needs eps_start >= 0, 0 < eps_ratio < 1, eps_count >= 1")

    def tol_for(self, grid: sg.SphereGrid) -> float:
        if self.newton_tol is not None:
            return self.newton_tol
        return 1e-10 if grid.kind == sg.AXISYM else 1e-8

    def eps_schedule(self) -> list:
        return [self.eps_start * self.eps_ratio**m for m in range(self.eps_count)]


@dataclass
class SolveReport:
    converged: bool = False
    t_final: float = 0.0
    eps: float = 0.0
    iterations: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    min_u: float = float("nan")
    max_u: float = float("nan")
    admissible: bool = False
    convex: bool = False
    near_degenerate: bool = False
    t_values: list = field(default_factory=list)
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def absorb(self, other: "SolveReport", t: float) -> None:
        self.iterations.extend(other.iterations)
        self.residual_history.extend(other.residual_history)
        self.t_values.append(t)


def _finalize(report: SolveReport, u: np.ndarray, spec: ProblemSpec) -> SolveReport:
    W = sg.assemble_w(spec.grid, u, spec.eps)
    report.min_u = float(u.min())
    report.max_u = float(u.max())
    report.admissible = bool(np.all(in_gamma_k(W, spec.k)))
    report.convex = bool(np.all(np.linalg.eigvalsh(W)[:, 0] > 0))
    report.eps = spec.eps
    report.near_degenerate = bool(spec.t == 1.0 and spec.eps == 0 and u.min() < 1e-2 * u.max())
    return report


def _admissible(u, spec):
    if np.any(u <= 0):
        return False
    W = sg.assemble_w(spec.grid, u, spec.eps)
    return bool(np.all(in_gamma_k(W, spec.k)))


def _solve_linear(J, rhs):
    return spla.spsolve(J.tocsc(), rhs)


def newton_solve(spec: ProblemSpec, u0: sg.ScalarField, opts: SolveOptions | None = None):
    """Damped Newton for the discrete equation at the problem's ``t`` and ``eps``.

    Each step is halved until the sup-norm residual decreases and the trial
    iterate is positive with ``W`` in Gamma_k at every node.  Returns
    ``(u, report)``.
    """
    opts = opts or SolveOptions()
    grid = spec.grid
    tol = opts.tol_for(grid)
    anti = grid.antipodal
    u = np.array(u0.values, dtype=float)
    if opts.enforce_even:
        u = 0.5 * (u + u[anti])
    if not _admissible(u, spec):
        raise AdmissibleStartRequired("start is not positive and k-admissible at every node", u=u)
    ft = spec.f_t()
    report = SolveReport(t_final=spec.t, eps=spec.eps)
    hist = report.residual_history
    R, J, _ = residual_and_jacobian(u, spec, ft)
    r = float(np.abs(R).max())
    hist.append(r)
    it = 0
    while r > tol:
        if it >= opts.max_newton_iters:
            report.iterations.append(it)
            _finalize(report, u, spec)
            raise NoConvergence(f"no convergence after {it} iterations (residual {r:.3e})", report, u)
        du = _solve_linear(J, -R)
        if not np.all(np.isfinite(du)):
            report.iterations.append(it)
            raise StepCollapse("singular Newton system", _finalize(report, u, spec), u)
        lam = 1.0
        for _ in range(opts.max_backtracks):
            trial = u + lam * du
            if opts.enforce_even:
                trial = 0.5 * (trial + trial[anti])
            if trial.min() > 0:
                Rt, ok = residual_raw(trial, spec, ft)
                rt = float(np.abs(Rt).max())
                if ok and rt < r:
                    break
            lam *= opts.line_search_shrink
        else:
            report.iterations.append(it)
            _finalize(report, u, spec)
            raise StepCollapse(f"line search failed at residual {r:.3e}", report, u)
        u, r = trial, rt
        R, J, _ = residual_and_jacobian(u, spec, ft)
        hist.append(r)
        it += 1
    report.iterations.append(it)
    report.converged = True
    _finalize(report, u, spec)
    return grid.field(u), report


def continuation_solve(spec: ProblemSpec, opts: SolveOptions | None = None, u0: sg.ScalarField | None = None):
    """March the homotopy parameter from 0 to ``spec.t`` (normally 1).

    The path starts from ``u = 1``, which solves the ``t = 0`` problem exactly.
    Steps start at ``t_step_init``, halve on failure and regrow after
    successes, never exceeding ``t_step_init``.
    """
    opts = opts or SolveOptions()
    grid = spec.grid
    target = spec.t
    u = u0 if u0 is not None else grid.field(np.ones(grid.size))
    total = SolveReport(eps=spec.eps)
    u, rep = newton_solve(spec.with_(t=0.0), u, opts)
    total.absorb(rep, 0.0)
    t, step = 0.0, opts.t_step_init
    while t < target:
        t_next = min(target, t + step)
        try:
            u_new, rep = newton_solve(spec.with_(t=t_next), u, opts)
        except SolverError as exc:
            log.debug("t=%.5f failed (%s); halving step", t_next, exc)
            step *= 0.5
            if step < opts.t_step_min:
                total.t_final = t
                _finalize(total, u.values, spec.with_(t=t))
                total.near_degenerate = bool(u.values.min() < 1e-2 * u.values.max())
                total.message = f"step underflow after t={t:.6f}"
                raise ContinuationStuck(total.message, total, u, last_t=t) from exc
            continue
        u, t = u_new, t_next
        total.absorb(rep, t)
        step = min(opts.t_step_init, 2 * step)
    total.t_final = t
    total.converged = True
    _finalize(total, u.values, spec)
    return u, total


def eps_lower_bound(spec: ProblemSpec) -> float:
    """``(C(n, k) eps^k / max f)^(1/p0)``; any eps-solution stays above it."""
    return (comb(spec.n, spec.k) * spec.eps**spec.k / float(spec.f.values.max())) ** (1.0 / spec.p0)


def _eps_step(spec, u_prev, e_prev, e_new, opts, depth=0):
    # u + eps is the natural variable: shifting by e_prev - e_new keeps W fixed
    start = u_prev.with_values(u_prev.values + (e_prev - e_new))
    try:
        return newton_solve(spec.with_(eps=e_new), start, opts)
    except SolverError:
        if depth >= 10:
            raise
    e_mid = np.sqrt(e_prev * e_new) if e_new > 0 else 0.5 * e_prev
    u_mid, rep_mid = _eps_step(spec, u_prev, e_prev, e_mid, opts, depth + 1)
    u_out, rep = _eps_step(spec, u_mid, e_mid, e_new, opts, depth + 1)
    rep.iterations = rep_mid.iterations + rep.iterations
    rep.residual_history = rep_mid.residual_history + rep.residual_history
    return u_out, rep


def epsilon_continuation(spec: ProblemSpec, opts: SolveOptions | None = None, schedule=None, monitors=None):
    """Solve the regularized equation along a decreasing eps schedule.

    The first entry is reached by t-continuation; later entries warm-start
    from the previous solution shifted by the eps decrement, with geometric
    sub-steps if Newton fails, and a fresh t-continuation as last resort.
    Returns a list of ``(eps, u, report)``; ``u`` is None where every attempt
    failed.  ``monitors(u, spec)`` may return a dict stored under
    ``report.extra["monitors"]``.
    """
    opts = opts or SolveOptions()
    sched = list(opts.eps_schedule() if schedule is None else schedule)
    if any(b >= a for a, b in zip(sched, sched[1:])) or min(sched) < 0:
        raise OutOfRange("eps schedule must be strictly decreasing and nonnegative")
    out = []
    prev = None
    for e in sched:
        sp_e = spec.with_(eps=e, t=1.0)
        u = rep = None
        if prev is not None:
            try:
                u, rep = _eps_step(sp_e, prev[1], prev[0], e, opts)
                rep.t_values = [1.0]
            except SolverError as exc:
                log.info("warm start at eps=%.3e failed: %s", e, exc)
        if u is None:
            try:
                u, rep = continuation_solve(sp_e, opts)
            except SolverError as exc:
                rep = exc.report or SolveReport(eps=e)
                rep.message = str(exc)
                out.append((e, None, rep))
                continue
        bound = eps_lower_bound(sp_e)
        rep.extra["lower_bound"] = bound
        rep.extra["lower_bound_holds"] = bool(u.values.min() >= bound)
        if monitors is not None:
            rep.extra["monitors"] = monitors(u, sp_e)
        out.append((e, u, rep))
        prev = (e, u)
    return out


def manufacture_f(u_target: sg.ScalarField, spec: ProblemSpec) -> sg.ScalarField:
    """``sigma_k(W_h) / u^p0`` with the solver's own discrete ``W``."""
    vals = _discrete_f(u_target.values, u_target.grid, spec.k, spec.p0, spec.eps)
    return u_target.with_values(vals)


def random_admissible_starts(grid: sg.SphereGrid, k: int, count: int, seed: int = 0, eps: float = 0.0,
                             scale=(0.5, 3.0), amplitude: float = 0.05) -> list:
    """Seeded random positive, k-admissible starting fields.

    Each start is ``c (1 + small combination of degree <= 2 polynomials in x)``;
    draws that leave Gamma_k are rejected.
    """
    rng = np.random.default_rng(seed)
    X = grid.ambient()
    if grid.kind == sg.AXISYM:
        X = X[:, -1:]
    d = X.shape[1]
    starts = []
    while len(starts) < count:
        c = rng.uniform(*scale)
        lin = X @ rng.uniform(-1, 1, d)
        Q = rng.uniform(-1, 1, (d, d))
        quad = np.einsum("ni,ij,nj->n", X, Q + Q.T, X) / 2
        v = c * (1 + amplitude * (lin + quad))
        W = sg.assemble_w(grid, v, eps)
        if v.min() > 0 and np.all(in_gamma_k(W, k)):
            starts.append(grid.field(v))
    return starts
