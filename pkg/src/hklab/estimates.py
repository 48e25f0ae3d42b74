"""Measured counterparts of the a priori estimates.

Everything here is diagnostic: the constants in the estimates are not
constructive, so reports publish measured ratios and leave the judgement of
stability to the caller (see :func:`laplacian_ratio_sweep`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields as fl
from . import quatlin
from .cones import QMA, ConeFunction, SubsolutionCertificate, coefficient_field, dichotomy_values
from .errors import HKError, NoInteriorMin, NotAdmissible
from .solver import SolveReport, SolverConfig, manufactured_h, solve

# --------------------------------------------------------------------------
# Test function weights
# --------------------------------------------------------------------------


def alpha(t, N: float):
    """alpha(t) = -1/2 log(1 - t / 2N), defined for t < 2N."""
    return -0.5 * np.log1p(-np.asarray(t, dtype=float) / (2.0 * N))


def alpha_prime(t, N: float):
    return 1.0 / (4.0 * N - 2.0 * np.asarray(t, dtype=float))


def beta(t, D: float):
    """beta(t) = -2Dt + t^2 / 2."""
    t = np.asarray(t, dtype=float)
    return -2.0 * D * t + 0.5 * t * t


def beta_prime(t, D: float):
    return -2.0 * D + np.asarray(t, dtype=float)


def sup_normalize(phi: fl.ScalarField) -> fl.ScalarField:
    return fl.ScalarField(phi.grid, phi.values - phi.values.max())


# --------------------------------------------------------------------------
# Estimate report
# --------------------------------------------------------------------------


@dataclass
class EstimateReport:
    c0: float
    grad_sup: float
    lap_max: float
    lap_ratio: float
    lam1_max: float
    lam1_ratio: float
    alpha_range: tuple[float, float]
    alpha_prime_range: tuple[float, float]
    beta_prime_range: tuple[float, float]
    D: float
    N: float
    q_max: float
    q_min: float
    q_argmax: tuple[int, ...]
    margin: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("alpha_range", "alpha_prime_range", "beta_prime_range", "q_argmax"):
            d[k] = list(d[k])
        return d

    def invariant_violations(self) -> list[str]:
        """Names of the checkable bounds that fail for this report."""
        bad = []
        lo, hi = self.alpha_range
        if not (lo >= 0.0 and hi <= 0.5 * math.log(2.0) + 1e-15):
            bad.append("alpha_range")
        lo, hi = self.alpha_prime_range
        if not (lo >= 1.0 / (4 * self.N) * (1 - 1e-12) and hi <= 1.0 / (2 * self.N) * (1 + 1e-12)):
            bad.append("alpha_prime_range")
        lo, hi = self.beta_prime_range
        if not (lo >= -3 * self.D * (1 + 1e-12) and hi <= -self.D * (1 - 1e-12)):
            bad.append("beta_prime_range")
        return bad


def estimate_report(
    phi: fl.ScalarField, chi: fl.HermField, D: float | None = None, f: ConeFunction | None = None
) -> EstimateReport:
    """Sup-normalized measurements of phi together with the test function Q.

    Q = 2 sqrt(lambda_1) + alpha(|grad phi|^2) + beta(phi) with
    N = sup |grad phi|^2 + 1 and D = sup |phi| + 1 unless given.
    """
    f = f if f is not None else QMA(phi.grid.n)
    u = sup_normalize(phi)
    g = fl.assemble_g_phi(chi, u)
    eig = fl.eigenvalue_field(g, f)
    if not eig.margin > 0:
        raise NotAdmissible(f"phi is not admissible at grid point {eig.argmin}", witness=eig.argmin)

    grad2 = (fl.gradient(u) ** 2).sum(axis=-1)
    grad_sup = float(np.sqrt(grad2.max()))
    lap = fl.laplacian(u).values
    lap_max = float(lap.max())
    lam1 = eig.lam[..., 0]
    lam1_max = float(lam1.max())
    c0 = float(np.abs(u.values).max())

    N = grad_sup**2 + 1.0
    D = c0 + 1.0 if D is None else float(D)
    if not D > c0:
        raise ValueError(f"D = {D} must exceed sup|phi| = {c0}")
    a = alpha(grad2, N)
    ap = alpha_prime(grad2, N)
    bp = beta_prime(u.values, D)
    Q = 2.0 * np.sqrt(lam1) + a + beta(u.values, D)
    iq = np.unravel_index(int(np.argmax(Q)), Q.shape)
    return EstimateReport(
        c0=c0,
        grad_sup=grad_sup,
        lap_max=lap_max,
        lap_ratio=lap_max / (grad_sup + 1.0),
        lam1_max=lam1_max,
        lam1_ratio=lam1_max / (grad_sup**2 + 1.0),
        alpha_range=(float(a.min()), float(a.max())),
        alpha_prime_range=(float(ap.min()), float(ap.max())),
        beta_prime_range=(float(bp.min()), float(bp.max())),
        D=D,
        N=N,
        q_max=float(Q.max()),
        q_min=float(Q.min()),
        q_argmax=tuple(int(i) for i in iq),
        margin=float(eig.margin),
    )


# --------------------------------------------------------------------------
# Amplitude sweep
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ("amplitude", "lap_ratio", "lam1_ratio", "resolution")


@dataclass
class SweepRow:
    amplitude: float
    lap_ratio: float
    lam1_ratio: float
    resolution: int
    status: str = "ok"
    newton_iters: int = 0
    b: float = 0.0
    recovery_error: float = float("nan")
    report: EstimateReport | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("amplitude", "lap_ratio", "lam1_ratio", "resolution", "status", "newton_iters", "b", "recovery_error")}
        d["estimate"] = self.report.to_dict() if self.report is not None else None
        return d


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def at_resolution(self, res: int) -> list[SweepRow]:
        return [r for r in self.rows if r.resolution == res]

    @property
    def resolutions(self) -> list[int]:
        return sorted({r.resolution for r in self.rows})

    def blowup(self, column: str, factor: float = 10.0) -> bool:
        """True if some finite entry of ``column`` exceeds ``factor`` times the median, per resolution."""
        for res in self.resolutions:
            vals = np.array([getattr(r, column) for r in self.at_resolution(res)], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                continue
            med = float(np.median(vals))
            if vals.max() > factor * med:
                return True
        return False

    @property
    def flags(self) -> dict:
        return {c: self.blowup(c) for c in ("lap_ratio", "lam1_ratio")}

    def write_csv(self, path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config_hash is not None:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(r.amplitude)), repr(float(r.lap_ratio)), repr(float(r.lam1_ratio)), r.resolution])


def laplacian_ratio_sweep(
    amplitudes,
    base_shape: fl.ScalarField,
    family: ConeFunction | None = None,
    chi: fl.HermField | None = None,
    refinements: int = 0,
    **solver_options,
) -> SweepTable:
    """Solve manufactured problems phi* = s * base_shape and record the estimate ratios.

    With ``refinements = k`` the whole sweep is repeated on grids refined by
    2, 4, ..., 2^k, the shape being carried over by trigonometric interpolation.
    A failed solve yields a row with NaN ratios and the error in ``status``.
    """
    table = SweepTable()
    shape = base_shape
    for level in range(refinements + 1):
        if level:
            shape = fl.upsample(shape)
        grid = shape.grid
        f = family if family is not None else QMA(grid.n)
        c = fl.identity_chi(grid) if chi is None or chi.grid != grid else chi
        if chi is not None and level and np.ndim(chi.values) == 2:
            c = fl.constant_herm(grid, chi.values)
        res = max(grid.dims)
        for s in amplitudes:
            star = shape * float(s)
            try:
                h = manufactured_h(f, c, star)
                rep = solve(SolverConfig(f, c, h, **solver_options))
                est = estimate_report(rep.phi, c, f=f)
                err = float(np.abs(rep.phi.values - (star.values - star.values.mean())).max())
                table.rows.append(SweepRow(float(s), est.lap_ratio, est.lam1_ratio, res, "ok", rep.newton_iters, rep.b, err, est))
            except (HKError, RuntimeError) as exc:
                table.rows.append(
                    SweepRow(float(s), float("nan"), float("nan"), res, f"failed: {type(exc).__name__}: {exc}")
                )
    return table


# --------------------------------------------------------------------------
# ABP contact set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BallGrid:
    """Cube grid on [-1, 1]^{4n}; points with |x| < 1 form the ball."""

    n: int
    points: int = 21

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.points < 5 or self.points % 2 == 0:
            raise ValueError("points must be odd and at least 5 so the origin is a node")

    @property
    def dim(self) -> int:
        return 4 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def spacing(self) -> float:
        return 2.0 / (self.points - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.points)

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij", sparse=True)

    def radius2(self) -> np.ndarray:
        return sum(c * c for c in self.coords())

    def mask(self) -> np.ndarray:
        return self.radius2() < 1.0 - 1e-12

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x)`` where ``x`` is the list of 4n coordinate arrays."""
        return np.broadcast_to(np.asarray(func(self.coords()), dtype=float), self.shape).copy()


@dataclass
class AbpDiagnostics:
    contact_mask: np.ndarray
    epsilon: float
    min_gap_blocki: float
    min_gap_sroka: float
    measure_P: float
    contact_count: int = 0
    candidate_count: int = 0
    min_v: float = 0.0
    max_level_excess: float = float("-inf")
    integral_det: float = 0.0
    eps_power: float = 0.0
    nonconvex_contacts: int = 0

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "contact_mask"}
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def _interior(mask: np.ndarray) -> np.ndarray:
    """Ball nodes whose axis neighbours are all in the ball."""
    inner = mask.copy()
    for a in range(mask.ndim):
        for shift in (1, -1):
            nb = np.roll(mask, shift, axis=a)
            edge = [slice(None)] * mask.ndim
            edge[a] = 0 if shift == 1 else -1
            nb[tuple(edge)] = False
            inner &= nb
    return inner


def abp_diagnostics(
    phi_ball: np.ndarray, epsilon: float, grid: BallGrid | None = None, chunk: int = 256
) -> AbpDiagnostics:
    """Contact set of v = phi + eps |x|^2 on the unit ball, found by brute force.

    A node x is a contact point when |Dv(x)| < eps/2 and the supporting plane
    inequality v(y) >= v(x) + Dv(x).(y - x) holds at every ball node y.
    Derivatives are second-order finite differences on the cube grid.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    phi_ball = np.asarray(phi_ball, dtype=float)
    if grid is None:
        k = phi_ball.ndim // 4
        grid = BallGrid(k, phi_ball.shape[0])
    if phi_ball.shape != grid.shape:
        raise ValueError(f"expected values of shape {grid.shape}, got {phi_ball.shape}")
    h = grid.spacing
    mask = grid.mask()
    v = phi_ball + epsilon * grid.radius2()

    vm = np.where(mask, v, np.inf)
    imin = np.unravel_index(int(np.argmin(vm)), v.shape)
    S = float(vm[imin])
    boundary = mask & ~_interior(mask)
    if not _interior(mask)[imin] or float(np.where(boundary, v, np.inf).min()) <= S:
        raise NoInteriorMin(f"minimum of v over the ball is not attained in the interior (at node {imin})")

    Dv = np.stack(np.gradient(v, h, edge_order=2), axis=-1)
    gnorm = np.sqrt((Dv**2).sum(axis=-1))
    cand = mask & (gnorm < 0.5 * epsilon)
    cidx = np.flatnonzero(cand)

    Y = np.stack([np.broadcast_to(c, grid.shape)[mask] for c in grid.coords()], axis=-1)
    vy = v[mask]
    tol = 1e-12 * max(1.0, float(np.abs(vy).max()))
    flatv = v.reshape(-1)
    flatD = Dv.reshape(-1, grid.dim)
    Xall = np.stack([np.broadcast_to(c, grid.shape).reshape(-1) for c in grid.coords()], axis=-1)
    contact = np.zeros(v.size, dtype=bool)
    for start in range(0, cidx.size, chunk):
        sl = cidx[start : start + chunk]
        G = flatD[sl]
        plane = flatv[sl][None, :] + Y @ G.T - (Xall[sl] * G).sum(axis=-1)[None, :]
        ok = (vy[:, None] >= plane - tol).all(axis=0)
        contact[sl[ok]] = True
    contact = contact.reshape(v.shape)
    pts = np.flatnonzero(contact)

    out = AbpDiagnostics(
        contact_mask=contact,
        epsilon=float(epsilon),
        min_gap_blocki=float("inf"),
        min_gap_sroka=float("inf"),
        measure_P=float(pts.size * h**grid.dim),
        contact_count=int(pts.size),
        candidate_count=int(cidx.size),
        min_v=S,
        eps_power=float(epsilon ** grid.dim),
    )
    if pts.size == 0:
        return out
    out.max_level_excess = float(flatv[pts].max() - (S + 0.5 * epsilon))

    m = grid.dim
    D2 = np.empty((pts.size, m, m))
    for a in range(m):
        rows = np.gradient(Dv[..., a], h, edge_order=2)
        for b in range(m):
            D2[:, a, b] = rows[b].reshape(-1)[pts]
    D2 = 0.5 * (D2 + np.swapaxes(D2, -1, -2))
    w = np.linalg.eigvalsh(D2)
    scale = np.maximum(np.abs(w).max(axis=-1), 1.0)
    convex = w[:, 0] >= -1e-9 * scale
    out.nonconvex_contacts = int((~convex).sum())
    out.integral_det = float(np.linalg.det(D2).sum() * h**grid.dim)
    if convex.any():
        N = D2[convex]
        Hc = quatlin.iota_inverse(0.5 * quatlin.proj_p(N))
        out.min_gap_blocki = float(np.min(quatlin.blocki_gap(N)))
        out.min_gap_sroka = float(np.min(quatlin.sroka_gap(Hc)))
    return out


def ball_restriction(phi: fl.ScalarField, radius: float = 0.25, points: int = 21, center=None) -> np.ndarray:
    """Values of the trigonometric interpolant of phi on center + radius * B_1.

    The result lives on ``BallGrid(n, points)``; the center defaults to the
    grid minimizer of phi.  Evaluation is a sequence of one-axis contractions.
    """
    grid = phi.grid
    if center is None:
        center = np.array([grid.coord(a).reshape(-1)[i] for a, i in enumerate(np.unravel_index(np.argmin(phi.values), grid.shape))])
    center = np.asarray(center, dtype=float)
    t = np.linspace(-1.0, 1.0, points)
    coef = fl.fft(phi.values) / grid.size
    for a, d in enumerate(grid.dims):
        k = np.fft.fftfreq(d, 1.0 / d)
        if d % 2 == 0 and d > 1:
            # symmetric Nyquist treatment keeps the interpolant real
            E = np.exp(2j * np.pi * np.outer(center[a] + radius * t, k))
            E[:, d // 2] = np.cos(2 * np.pi * (d // 2) * (center[a] + radius * t))
        else:
            E = np.exp(2j * np.pi * np.outer(center[a] + radius * t, k))
        coef = np.moveaxis(np.tensordot(E, coef, axes=([1], [a])), 0, a)
    return coef.real


# --------------------------------------------------------------------------
# Dichotomy scan
# --------------------------------------------------------------------------


@dataclass
class DichotomyTable:
    indices: list[tuple[int, ...]]
    lam_norm: np.ndarray
    kappa: np.ndarray
    first: np.ndarray
    second: np.ndarray
    R: float

    @property
    def empty(self) -> bool:
        return len(self.indices) == 0

    @property
    def min_kappa(self) -> float | None:
        return float(self.kappa.min()) if self.kappa.size else None

    def to_dict(self) -> dict:
        return {"R": self.R, "count": len(self.indices), "min_kappa": self.min_kappa}


def dichotomy_scan(
    f: ConeFunction,
    report: SolveReport,
    cert: SubsolutionCertificate,
    chi: fl.HermField,
    B=None,
    R: float | None = None,
) -> DichotomyTable:
    """Probe values at grid points of the solved state with |lambda(A_phi)| > R.

    B is the matrix of the subsolution; by default the subsolution is 0, so
    B = chi.  R defaults to the certificate radius.
    """
    R = float(cert.R if R is None else R)
    g = fl.assemble_g_phi(chi, report.phi)
    _, lam, _ = coefficient_field(f, g.values)
    norm = np.linalg.norm(lam, axis=-1)
    sel = norm > R
    idx = [tuple(int(i) for i in ix) for ix in np.argwhere(sel)]
    Bv = chi.values if B is None else np.asarray(B)
    Bv = np.broadcast_to(Bv, g.values.shape)
    if not idx:
        empty = np.zeros(0)
        return DichotomyTable([], empty, empty, empty, empty, R)
    kappa, first, second = dichotomy_values(f, g.values[sel], Bv[sel])
    return DichotomyTable(idx, norm[sel], kappa, first, second, R)
