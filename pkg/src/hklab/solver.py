"""Damped Newton-Krylov solver for f(lambda(g_phi)) = h + b on the torus.

Unknowns are a mean-zero potential ``phi`` and the constant ``b``.  Each
Newton step solves the bordered system

    (1/2) Re tr(F Hc(u)) - db = -residual,    mean(u) = 0,

by GMRES, right-hand side preconditioned with the exact spectral inverse of
the same operator with coefficients frozen at their grid average.  The
factor 1/2 is the first variation of the quaternionic spectrum in the
coefficient convention of :mod:`hklab.quatlin`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import fields as fl
from . import quatlin
from .cones import ConeFunction, coefficient_field
from .errors import (
    LinearSolveStalled,
    LineSearchFailed,
    MaxIterationsExceeded,
    NoAdmissibleStart,
    NotAdmissible,
    SolverError,
)

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    family: ConeFunction
    chi: fl.HermField
    h: fl.ScalarField
    tol_residual: float = 1e-9
    max_newton: int = 50
    shrink: float = 0.5
    min_step: float = 2.0**-20
    margin_keep: float = 0.1
    continuity_steps: int = 4
    max_bisections: int = 6
    linear_max_iter: int = 200
    linear_tol: float = 1e-12
    phi0: fl.ScalarField | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.continuity_steps < 1:
            raise ValueError("continuity_steps must be >= 1")
        if self.chi.grid != self.h.grid:
            raise ValueError("chi and h live on different grids")


@dataclass
class SolveReport:
    phi: fl.ScalarField
    b: float
    residual_history: list[float] = field(default_factory=list)
    cone_margin_history: list[float] = field(default_factory=list)
    step_history: list[float] = field(default_factory=list)
    newton_iters: int = 0
    linear_iters: int = 0
    continuity_stages: int = 0
    status: str = "converged"
    wall_time_s: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "status": self.status,
            "b": self.b,
            "newton_iters": self.newton_iters,
            "linear_iters": self.linear_iters,
            "continuity_stages": self.continuity_stages,
            "residual_history": list(self.residual_history),
            "cone_margin_history": list(self.cone_margin_history),
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time_s
        return out


@dataclass
class NewtonState:
    phi: np.ndarray
    b: float
    residual: np.ndarray
    margin: float
    F: np.ndarray
    step: float = 1.0
    linear_iters: int = 0
    linear_history: list[float] = field(default_factory=list)
    update_norm: float = 0.0

    @property
    def res_sup(self) -> float:
        return float(np.abs(self.residual).max())


class Problem:
    """Discrete operator for one (f, chi, h) triple."""

    def __init__(self, f: ConeFunction, chi: fl.HermField, h_values):
        self.f = f
        self.chi = chi
        self.grid = chi.grid
        fl.check_chi(chi)
        fl._check_spectral(self.grid)
        self.h = np.broadcast_to(np.asarray(h_values, dtype=float), self.grid.shape)
        m = 2 * self.grid.n
        S = fl.symbols(self.grid)
        self._pairs = [(a, b) for a in range(m) for b in range(a, m)]
        self._S = {ab: S.complex_hessian(*ab) for ab in self._pairs}

    # -- forward operator --------------------------------------------------
    def g_phi(self, phi) -> np.ndarray:
        Hc = fl.complex_hessian_values(self.grid, phi)
        return self.chi.values + 0.5 * (Hc + quatlin.j_twist(Hc))

    def evaluate(self, phi, b):
        """Residual, margin, coefficients, lambda, argmin index of the margin."""
        g = self.g_phi(phi)
        F, lam, mfield = coefficient_field(self.f, g)
        i = int(np.argmin(np.where(np.isnan(mfield), -np.inf, mfield)))
        margin = float(mfield.reshape(-1)[i])
        if not margin > 0:
            return None, margin, None, lam, np.unravel_index(i, mfield.shape)
        res = self.f.value(lam) - self.h - b
        return res, margin, F, lam, None

    # -- linearization -----------------------------------------------------
    def jac_apply(self, F, u) -> np.ndarray:
        """(1/2) Re tr(F Hc(u))."""
        uh = fl.fft(u)
        acc = np.zeros(self.grid.shape)
        for a, b in self._pairs:
            hab = fl.ifft(self._S[(a, b)] * uh)
            if a == b:
                acc += F[..., a, a].real * hab.real
            else:
                acc += 2.0 * (F[..., b, a] * hab).real
        return 0.5 * acc

    def frozen_symbol(self, F) -> np.ndarray:
        Fbar = F.reshape((-1,) + F.shape[-2:]).mean(axis=0)
        sym = np.zeros(self.grid.shape)
        for a, b in self._pairs:
            if a == b:
                sym = sym + Fbar[a, a].real * self._S[(a, b)].real
            else:
                sym = sym + 2.0 * (Fbar[b, a] * self._S[(a, b)]).real
        return 0.5 * sym


def residual(f: ConeFunction, chi: fl.HermField, phi: fl.ScalarField, h, b: float) -> fl.ScalarField:
    """Pointwise ``f(lambda(g_phi)) - h - b``; raises NotAdmissible off the cone."""
    prob = Problem(f, chi, getattr(h, "values", h))
    res, margin, _, _, where = prob.evaluate(phi.values, b)
    if res is None:
        raise NotAdmissible(f"phi is not admissible at grid point {where} (margin {margin:.3e})", witness=where)
    return fl.ScalarField(phi.grid, res)


def _linear_solve(prob: Problem, F, rhs, cfg: SolverConfig):
    shape = prob.grid.shape
    N = prob.grid.size
    sym = prob.frozen_symbol(F)
    nz = sym != 0
    inv = np.zeros_like(sym)
    inv[nz] = 1.0 / sym[nz]
    inv.reshape(-1)[0] = 0.0

    def matvec(z):
        u = z[:N].reshape(shape)
        out = np.empty(N + 1)
        out[:N] = (prob.jac_apply(F, u)).reshape(-1) - z[N]
        out[N] = u.mean()
        return out

    def precond(y):
        r = y[:N].reshape(shape)
        mr = r.mean()
        u = fl.ifft(inv * fl.fft(r - mr)).real + y[N]
        out = np.empty(N + 1)
        out[:N] = u.reshape(-1)
        out[N] = -mr
        return out

    A = spla.LinearOperator((N + 1, N + 1), matvec=matvec, dtype=float)
    M = spla.LinearOperator((N + 1, N + 1), matvec=precond, dtype=float)
    b = np.concatenate([rhs.reshape(-1), [0.0]])
    hist: list[float] = []
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(shape), 0.0, 0, hist
    z, info = spla.gmres(
        A,
        b,
        M=M,
        rtol=cfg.linear_tol,
        atol=0.0,
        restart=min(cfg.linear_max_iter, 60),
        maxiter=max(1, cfg.linear_max_iter // min(cfg.linear_max_iter, 60)),
        callback=lambda pr: hist.append(float(pr)),
        callback_type="pr_norm",
    )
    true_rel = np.linalg.norm(matvec(z) - b) / bnorm
    if info != 0 and true_rel > 1e-6:
        raise LinearSolveStalled(f"GMRES stopped at relative residual {true_rel:.3e} after {len(hist)} iterations")
    return z[:N].reshape(shape), float(z[N]), len(hist), hist


def newton_step(prob: Problem, state: NewtonState, cfg: SolverConfig) -> NewtonState:
    u, db, its, hist = _linear_solve(prob, state.F, -state.residual, cfg)
    old = state.res_sup
    s = 1.0
    while s >= cfg.min_step:
        phi = state.phi + s * u
        phi = phi - phi.mean()
        b = state.b + s * db
        res, margin, F, _, _ = prob.evaluate(phi, b)
        if res is not None and margin > cfg.margin_keep * state.margin:
            new = float(np.abs(res).max())
            if new < old or new <= cfg.tol_residual:
                return NewtonState(
                    phi, float(b), res, margin, F, s, its, hist, float(s * max(np.abs(u).max(), abs(db)))
                )
        s *= cfg.shrink
    raise LineSearchFailed(f"no acceptable step down to {cfg.min_step:.2e} (residual {old:.3e})")


def _newton_loop(prob: Problem, state: NewtonState, cfg: SolverConfig, report: SolveReport) -> NewtonState:
    for _ in range(cfg.max_newton):
        if state.res_sup <= cfg.tol_residual:
            return state
        state = newton_step(prob, state, cfg)
        report.newton_iters += 1
        report.linear_iters += state.linear_iters
        report.residual_history.append(state.res_sup)
        report.cone_margin_history.append(state.margin)
        report.step_history.append(state.step)
        log.debug("newton %d: residual %.3e margin %.3e step %.3g", report.newton_iters, state.res_sup, state.margin, state.step)
    if state.res_sup <= cfg.tol_residual:
        return state
    raise MaxIterationsExceeded(f"residual {state.res_sup:.3e} after {cfg.max_newton} Newton steps")


def _initial_state(prob: Problem, phi0, b0: float) -> NewtonState:
    res, margin, F, _, where = prob.evaluate(phi0, b0)
    if res is None:
        raise NoAdmissibleStart(f"initial potential leaves the cone at grid point {where}")
    return NewtonState(phi0, b0, res, margin, F)


def solve(cfg: SolverConfig) -> SolveReport:
    t0 = time.perf_counter()
    grid = cfg.chi.grid
    phi0 = np.zeros(grid.shape) if cfg.phi0 is None else cfg.phi0.values - cfg.phi0.values.mean()
    target = Problem(cfg.family, cfg.chi, cfg.h.values)
    start = _initial_state(target, phi0, 0.0)
    report = SolveReport(phi=fl.ScalarField(grid, phi0), b=0.0)
    report.residual_history.append(start.res_sup)
    report.cone_margin_history.append(start.margin)

    try:
        state = _newton_loop(target, start, cfg, report)
    except SolverError as exc:
        if cfg.continuity_steps <= 1:
            report.status = "failed"
            report.wall_time_s = time.perf_counter() - t0
            exc.report = report
            raise
        log.info("direct Newton failed (%s); following the continuity path", exc)
        state = _continuity(cfg, phi0, report)

    report.phi = fl.ScalarField(grid, state.phi - state.phi.mean())
    report.b = float(state.b)
    report.status = "converged"
    report.wall_time_s = time.perf_counter() - t0
    return report


def _continuity(cfg: SolverConfig, phi0, report: SolveReport) -> NewtonState:
    """Track h_t = (1 - t) F(A_{phi0}) + t h from t = 0 to 1, halving failed increments."""
    start_prob = Problem(cfg.family, cfg.chi, 0.0)
    _, _, _, lam0, _ = start_prob.evaluate(phi0, 0.0)
    h0 = cfg.family.value(lam0)
    h1 = np.broadcast_to(cfg.h.values, h0.shape)

    def stage(t):
        return Problem(cfg.family, cfg.chi, (1 - t) * h0 + t * h1)

    state = _initial_state(stage(0.0), phi0, 0.0)
    t = 0.0
    dt = 1.0 / cfg.continuity_steps
    halvings = 0
    report.residual_history.append(state.res_sup)
    report.cone_margin_history.append(state.margin)
    while t < 1.0 - 1e-15:
        t_next = min(1.0, t + dt)
        prob = stage(t_next)
        try:
            trial = _initial_state(prob, state.phi, state.b)
            state = _newton_loop(prob, trial, cfg, report)
        except SolverError:
            halvings += 1
            if halvings > cfg.max_bisections:
                report.status = "failed"
                raise
            dt *= 0.5
            continue
        t = t_next
        report.continuity_stages += 1
    return state


def manufactured_h(f: ConeFunction, chi: fl.HermField, phi_star: fl.ScalarField) -> fl.ScalarField:
    """Right-hand side for which ``phi_star`` solves the discrete equation with b = 0."""
    prob = Problem(f, chi, 0.0)
    res, margin, _, _, where = prob.evaluate(phi_star.values, 0.0)
    if res is None:
        raise NotAdmissible(f"manufactured potential leaves the cone at {where}", witness=where)
    return fl.ScalarField(phi_star.grid, res)
