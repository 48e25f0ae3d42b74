"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Expected values come from independent oracles: the dense eigensolver,
central finite differences, sympy, brute-force pair enumeration and
hand-computed closed forms.
"""

import math
import time

import numpy as np
import pytest
import sympy as sp

from hklab import cones
from hklab import estimates as es
from hklab import fields as fl
from hklab import quatlin as ql
from hklab import solver as sv
from hklab.errors import NotAdmissible
from hklab.quatlin import EKind

LOG2_HALF = 0.5 * math.log(2.0)


# 1 -------------------------------------------------------------------------


def test_c01_spectral_pairing(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (1, 2, 3):
        H = ql.random_hyperhermitian(n, rng, size=(1000,))
        assert np.all(ql.hyperhermitian_defect(H) <= 1e-12)
        w = np.linalg.eigvalsh(H)[..., ::-1]
        gap = np.abs(w[..., 0::2] - w[..., 1::2]).max(axis=-1)
        worst = max(worst, float((gap / np.abs(w).max(axis=-1)).max()))
        _, g2 = ql.paired_spectrum(H)
        assert np.all(g2 <= 1e-9 * np.abs(w).max(axis=-1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 10
    criterion(1, ok, f"max relative pair gap {worst:.2e}, {dt:.2f}s")
    assert ok


# 2 -------------------------------------------------------------------------


def _diag_instance(rng, n):
    lam = np.sort(rng.uniform(-2.0, 2.0, n))[::-1]
    lam[0] = lam[1] + rng.uniform(0.5, 2.0)
    return np.diag(np.repeat(lam, 2)).astype(complex), lam


def test_c02_lambda1_calculus(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    closed_err = grad_err = hess_err = 0.0
    h = 1e-4
    top = lambda M: np.linalg.eigvalsh(M)[-1]
    for k in range(100):
        n = 2 + k % 2
        A, lam = _diag_instance(rng, n)
        gap = lam[0] - lam[1]
        G = ql.lambda1_gradient(A)
        m = 2 * n
        for idx in ql.all_e_indices(n):
            E = ql.e_basis(n, idx)
            for t in np.linspace(-0.45 * gap, 0.45 * gap, 9):
                ref = top(A + t * E)
                closed_err = max(closed_err, abs(ql.lambda1_perturbed(A, t, idx) - ref) / max(1.0, abs(ref)))
            fd1 = (top(A + h * E) - top(A - h * E)) / (2 * h)
            g = 0.5 * ql.contract(G, E)
            grad_err = max(grad_err, abs(g - fd1) / max(1.0, abs(fd1)))
            fd2 = (top(A + h * E) - 2 * top(A) + top(A - h * E)) / h**2
            q = 0.5 * sum(ql.lambda1_hessian_coeff(A, i, j, i, j) * abs(E[i, j]) ** 2 for i in range(m) for j in range(m))
            hess_err = max(hess_err, abs(q - fd2) / max(1.0, abs(fd2)))
    dt = time.perf_counter() - t0
    ok = closed_err <= 1e-9 and grad_err <= 1e-5 and hess_err <= 1e-5 and dt < 30
    criterion(2, ok, f"closed form {closed_err:.1e}, gradient {grad_err:.1e}, hessian {hess_err:.1e}, {dt:.2f}s")
    assert ok


# 3 -------------------------------------------------------------------------


def test_c03_determinant_inequalities(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_b = worst_s = math.inf
    for n in (1, 2):
        A = rng.standard_normal((10_000, 4 * n, 4 * n)) / math.sqrt(4 * n)
        N = A @ np.swapaxes(A, -1, -2)
        worst_b = min(worst_b, float(np.min(ql.blocki_gap(N))))
        B = (rng.standard_normal((10_000, 2 * n, 2 * n)) + 1j * rng.standard_normal((10_000, 2 * n, 2 * n))) / math.sqrt(4 * n)
        Hc = B @ np.conj(np.swapaxes(B, -1, -2))
        worst_s = min(worst_s, float(np.min(ql.sroka_gap(Hc))))
    dt = time.perf_counter() - t0
    ok = worst_b >= -1e-9 and worst_s >= -1e-9 and dt < 60
    criterion(3, ok, f"min blocki gap {worst_b:.2e}, min sroka gap {worst_s:.2e}, {dt:.2f}s")
    assert ok


# 4 -------------------------------------------------------------------------


def test_c04_concavity_trace_bound(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    n = 3
    fams = [cones.QMA(n), cones.HessianK(n, 1), cones.HessianK(n, 2), cones.NMinus1(n)]
    worst = math.inf
    at_one = []
    for f in fams:
        lam = cones.sample_interior(f, 1000, rng)
        worst = min(worst, float(np.min(cones.concavity_trace_gap(f, lam))))
        at_one.append(cones.concavity_trace_gap(f, np.ones(n)))
    dt = time.perf_counter() - t0
    ok = worst >= -1e-12 and all(v == 0.0 for v in at_one) and dt < 10
    criterion(4, ok, f"min gap {worst:.2e}, values at 1: {at_one}, {dt:.2f}s")
    assert ok


# 5 -------------------------------------------------------------------------


def _wirtinger_hessian(expr, xs, n):
    m = 2 * n
    d = lambda a, f: (sp.diff(f, xs[a]) - sp.I * sp.diff(f, xs[m + a])) / 2
    db = lambda b, f: (sp.diff(f, xs[b]) + sp.I * sp.diff(f, xs[m + b])) / 2
    return np.array([[complex(sp.simplify(d(a, db(b, expr)))) for b in range(m)] for a in range(m)])


def test_c05_real_representation_maps(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    err = 0.0
    for n in (1, 2):
        m = 2 * n
        for _ in range(20):
            A = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            B = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            err = max(err, np.abs(ql.iota(A @ B) - ql.iota(A) @ ql.iota(B)).max() / max(1, np.abs(A @ B).max()))
            N = rng.standard_normal((4 * n, 4 * n))
            N = N + N.T
            P = ql.proj_p(N)
            err = max(err, np.abs(ql.proj_p(P) - P).max())
            T = ql.iota_inverse(ql.proj_T(N))
            err = max(err, float(ql.hyperhermitian_defect(T)))
        xs = sp.symbols(f"x0:{4 * n}", real=True)
        z1 = xs[0] + sp.I * xs[m]
        corpus = [xs[0] ** 2, xs[0] * xs[1], sp.expand(z1 * sp.conjugate(z1)), sp.expand(sp.re(sp.expand(z1**2)))]
        for u in corpus:
            D2 = np.array(sp.hessian(u, xs), dtype=float)
            Hc = _wirtinger_hessian(u, xs, n)
            err = max(err, np.abs(ql.iota(Hc) - 0.5 * ql.proj_p(D2)).max())
            Tu = ql.proj_T(D2)
            twist = 0.5 * (Hc + ql.j_twist(Hc))
            err = max(err, np.abs(Tu - ql.iota(twist)).max())
            err = max(err, float(ql.hyperhermitian_defect(ql.iota_inverse(Tu))))
    dt = time.perf_counter() - t0
    ok = err <= 1e-12 and dt < 5
    criterion(5, ok, f"max deviation {err:.1e}, {dt:.2f}s")
    assert ok


# 6 and 7 -----------------------------------------------------------------


@pytest.fixture(scope="module")
def manufactured16():
    grid = fl.TorusGrid.cube(1, 16)
    f = cones.QMA(1)
    chi = fl.identity_chi(grid)
    star = fl.cosine_field(grid, 0.05)
    h = sv.manufactured_h(f, chi, star)
    return grid, f, chi, star, h


def test_c06_manufactured_solution(criterion, manufactured16):
    grid, f, chi, star, h = manufactured16
    t0 = time.perf_counter()
    rep = sv.solve(sv.SolverConfig(f, chi, h))
    dt = time.perf_counter() - t0
    err = float(np.abs(rep.phi.values - (star.values - star.values.mean())).max())
    ok = (
        rep.newton_iters <= 12
        and rep.final_residual <= 1e-9
        and err <= 1e-6
        and abs(rep.b) <= 1e-9
        and min(rep.cone_margin_history) > 0
        and dt < 60
    )
    criterion(
        6,
        ok,
        f"{rep.newton_iters} Newton steps, residual {rep.final_residual:.1e}, |phi-phi*| {err:.1e}, "
        f"|b| {abs(rep.b):.1e}, min margin {min(rep.cone_margin_history):.3f}, {dt:.2f}s",
    )
    assert ok


def test_c07_gauge(criterion, manufactured16):
    grid, f, chi, star, h = manufactured16
    zero_h = fl.ScalarField(grid, np.zeros(grid.shape))
    a = sv.solve(sv.SolverConfig(f, chi, zero_h))
    b = sv.solve(sv.SolverConfig(f, chi, zero_h + 0.1))
    triv = max(abs(b.b - (a.b - 0.1)), float(np.abs(a.phi.values - b.phi.values).max()))
    a = sv.solve(sv.SolverConfig(f, chi, h))
    b = sv.solve(sv.SolverConfig(f, chi, h + 0.1))
    manu = max(abs(b.b - (a.b - 0.1)), float(np.abs(a.phi.values - b.phi.values).max()))
    ok = triv <= 1e-12 and manu <= 1e-9
    criterion(7, ok, f"trivial deviation {triv:.1e}, manufactured deviation {manu:.1e}")
    assert ok


# 8 -------------------------------------------------------------------------


@pytest.mark.slow
def test_c08_estimate_stability(criterion):
    t0 = time.perf_counter()
    grid = fl.TorusGrid.cube(1, 16)
    amps = [0.01, 0.02, 0.05, 0.1, 0.2]
    tab = es.laplacian_ratio_sweep(amps, fl.cosine_field(grid), refinements=1)
    dt = time.perf_counter() - t0
    assert all(r.status == "ok" for r in tab.rows), [r.status for r in tab.rows]
    spread = {}
    for col in ("lap_ratio", "lam1_ratio"):
        vals = np.array([getattr(r, col) for r in tab.at_resolution(16)])
        spread[col] = float(vals.max() / vals.min())
    refine = 0.0
    for a, b in zip(tab.at_resolution(16), tab.at_resolution(32)):
        for col in ("lap_ratio", "lam1_ratio"):
            refine = max(refine, abs(getattr(b, col) - getattr(a, col)) / abs(getattr(a, col)))
    alpha_ok = all(0.0 <= r.report.alpha_range[0] and r.report.alpha_range[1] <= LOG2_HALF for r in tab.rows)
    ok = max(spread.values()) < 10 and refine < 0.05 and alpha_ok and dt < 600
    criterion(
        8,
        ok,
        f"spread lap {spread['lap_ratio']:.2f}x lam1 {spread['lam1_ratio']:.2f}x, refinement change {refine:.1e}, "
        f"alpha ok {alpha_ok}, {dt:.0f}s",
    )
    assert ok


# 9 -------------------------------------------------------------------------


def _level_point(f, sigma, R, rng):
    """Hyperhermitian A with f(lambda(A)) = sigma and |lambda(A)| > R."""
    for _ in range(100_000):
        # widely spread entries of both signs reach the far parts of the cone
        lam0 = rng.standard_normal(f.n) * 10.0 ** rng.uniform(-2.0, 3.0, f.n)
        if not f.margin(lam0) > 0:
            continue
        lo, hi = 1e-8, 1.0
        while f.value(hi * lam0) < sigma:
            hi *= 2
        while f.value(lo * lam0) > sigma:
            lo /= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if f.value(mid * lam0) < sigma else (lo, mid)
        lam = hi * lam0
        if np.linalg.norm(lam) > R:
            return ql.with_spectrum(ql.random_hyperhermitian(f.n, rng), np.sort(lam)[::-1])
    raise RuntimeError("no level-set point beyond R found")


def test_c09_dichotomy_probe(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    n = 2
    fams = [cones.QMA(n), cones.HessianK(n, 1), cones.HessianK(n, 2), cones.NMinus1(n)]
    worst = math.inf
    exact = True
    count = 0
    for f in fams:
        for _ in range(100):
            lamB = rng.uniform(0.5, 2.0, n)
            B = ql.with_spectrum(ql.random_hyperhermitian(n, rng), np.sort(lamB)[::-1])
            sigma = float(f.value(lamB) + rng.uniform(-0.5, 0.5))
            cert = cones.subsolution_check(f, lamB, sigma, set_samples=16, max_set_points=1)
            assert isinstance(cert, cones.SubsolutionCertificate)
            A = _level_point(f, sigma, cert.R, rng)
            sig = float(f.value(ql.quaternionic_eigenvalues(A).values))
            k = cones.dichotomy_probe(f, A, B, sig, cert.delta, cert.R)
            worst = min(worst, k)
            kk = cones.dichotomy_probe(f, A, A, sig, cert.delta, cert.R)
            lc = cones.linearized_coeffs(f, A)
            exact &= kk == float(np.diagonal(lc.F).real.min() / lc.trace_F)
            count += 1
    dt = time.perf_counter() - t0
    ok = worst > 0 and exact and dt < 30
    criterion(9, ok, f"{count} configurations, min kappa {worst:.3e}, A=B exact {exact}, {dt:.2f}s")
    assert ok


# 10 ------------------------------------------------------------------------


def test_c10_subsolution_checker(criterion, saturating):
    t0 = time.perf_counter()
    cert = cones.subsolution_check(cones.QMA(2), np.ones(2), 0.0)
    accepted = isinstance(cert, cones.SubsolutionCertificate) and cert.verified and math.isfinite(cert.R)
    try:
        cones.subsolution_check(cones.QMA(2), np.array([[1.0, 1.0], [-1.0, 1.0]]), np.zeros(2))
        witness = None
    except NotAdmissible as exc:
        witness = exc.witness
    rng = np.random.default_rng(10)
    f = saturating(2)
    mono = True
    both = {True: 0, False: 0}
    for _ in range(100):
        lam = rng.uniform(0.1, 3.0, 2)
        h = float(rng.uniform(0.5, 1.9))
        bigger = lam + rng.uniform(0.0, 2.0, 2)
        a = isinstance(cones.subsolution_check(f, lam, h, set_samples=8, max_set_points=1), cones.SubsolutionCertificate)
        b = isinstance(cones.subsolution_check(f, bigger, h, set_samples=8, max_set_points=1), cones.SubsolutionCertificate)
        mono &= b or not a
        both[a] += 1
    dt = time.perf_counter() - t0
    ok = accepted and witness == 1 and mono and min(both.values()) > 0 and dt < 10
    criterion(
        10,
        ok,
        f"QMA certificate delta={cert.delta} R={cert.R:.3f}, witness {witness}, monotone {mono} "
        f"(accepted/rejected {both[True]}/{both[False]}), {dt:.2f}s",
    )
    assert ok


# 11 ------------------------------------------------------------------------


def test_c11_abp(criterion):
    t0 = time.perf_counter()
    bg = es.BallGrid(1, 21)
    eps = 0.1
    r2 = lambda x: sum(c * c for c in x)
    corpus = {
        "constant": lambda x: 0.0 * x[0],
        "|x|^2": r2,
        "(x1)^2": lambda x: x[0] ** 2,
        "x1x2+|x|^2": lambda x: x[0] * x[1] + r2(x),
        "|z1|^2": lambda x: x[0] ** 2 + x[2] ** 2,
        "Re(z1^2)+|x|^2": lambda x: x[0] ** 2 - x[2] ** 2 + r2(x),
    }
    level_ok = gaps_ok = True
    gmin = math.inf
    for name, fn in corpus.items():
        d = es.abp_diagnostics(bg.sample(fn), eps, bg)
        level_ok &= d.contact_count > 0 and d.max_level_excess < 0
        gaps_ok &= d.nonconvex_contacts == 0 and d.min_gap_blocki >= -1e-9 and d.min_gap_sroka >= -1e-9
        gmin = min(gmin, d.min_gap_blocki, d.min_gap_sroka)
        if name == "constant":
            expected = bg.radius2() < 1 / 16
            diff = d.contact_mask ^ expected
            rr = np.sqrt(np.broadcast_to(bg.radius2(), bg.shape))
            ball_ok = bool(np.all(np.abs(rr[diff] - 0.25) <= bg.spacing))
            mismatches = int(diff.sum())
    dt = time.perf_counter() - t0
    ok = level_ok and gaps_ok and ball_ok and dt < 60
    criterion(11, ok, f"level ok {level_ok}, min gap {gmin:.2e}, constant-phi mismatches {mismatches}, {dt:.2f}s")
    assert ok
