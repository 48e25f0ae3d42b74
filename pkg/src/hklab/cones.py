"""Eigenvalue operators f on cones Gamma, their linearization, and subsolution tests.

Three families are provided:

* ``QMA``      f = sum log(lam_i) on the positive orthant,
* ``HessianK`` f = log sigma_k(lam) (or sigma_k^{1/k}) on the k-th Garding cone,
* ``NMinus1``  f = sum_i log(sum_{j != i} lam_j).

All ``value``/``gradient``/``margin`` methods are vectorized over leading axes;
the module-level functions add the cone checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quatlin
from .errors import NotAdmissible, OutsideCone, PreconditionViolated

LADDER = 2.0 ** np.arange(31)
SATURATION_REL = 1e-12
LEVEL_TOL_REL = 1e-8


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------


def elementary_symmetric(lam, kmax: int) -> np.ndarray:
    """sigma_0 .. sigma_kmax of the last axis of ``lam``."""
    lam = np.asarray(lam, dtype=float)
    e = np.zeros(lam.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(lam.shape[-1]):
        x = lam[..., i : i + 1]
        e[..., 1:] = e[..., 1:] + x * e[..., :-1]
    return e


def _drop(lam, i):
    return np.delete(lam, i, axis=-1)


class ConeFunction:
    """Symmetric concave increasing function on a convex cone containing the orthant."""

    name = "abstract"

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = int(n)

    def value(self, lam):
        raise NotImplementedError

    def gradient(self, lam):
        raise NotImplementedError

    def margin(self, lam):
        """Positive exactly inside the cone."""
        raise NotImplementedError

    @property
    def label(self) -> str:
        return self.name

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, label={self.label!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.n == other.n and self.label == other.label

    def __hash__(self):
        return hash((type(self).__name__, self.n, self.label))


class QMA(ConeFunction):
    name = "qma"

    def value(self, lam):
        return np.log(np.asarray(lam, dtype=float)).sum(axis=-1)

    def gradient(self, lam):
        return 1.0 / np.asarray(lam, dtype=float)

    def margin(self, lam):
        return np.asarray(lam, dtype=float).min(axis=-1)


class HessianK(ConeFunction):
    """``log sigma_k`` (default) or ``sigma_k^{1/k}`` (``normalization="root"``)."""

    name = "hessian"

    def __init__(self, n: int, k: int, normalization: str = "log"):
        super().__init__(n)
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        if normalization not in ("log", "root"):
            raise ValueError(f"unknown normalization {normalization!r}")
        self.k = int(k)
        self.normalization = normalization

    @property
    def label(self):
        base = f"hessian:{self.k}"
        return base if self.normalization == "log" else base + ":root"

    def _sk(self, lam):
        return elementary_symmetric(lam, self.k)[..., self.k]

    def value(self, lam):
        sk = self._sk(lam)
        if self.normalization == "log":
            return np.log(sk)
        with np.errstate(invalid="ignore"):
            return np.where(sk >= 0, np.abs(sk) ** (1.0 / self.k), np.nan)

    def gradient(self, lam):
        lam = np.asarray(lam, dtype=float)
        sk = self._sk(lam)
        dsk = np.stack(
            [elementary_symmetric(_drop(lam, i), self.k - 1)[..., self.k - 1] for i in range(self.n)],
            axis=-1,
        )
        if self.normalization == "log":
            return dsk / sk[..., None]
        return (np.abs(sk) ** (1.0 / self.k - 1.0) / self.k)[..., None] * dsk

    def margin(self, lam):
        return elementary_symmetric(lam, self.k)[..., 1:].min(axis=-1)


class NMinus1(ConeFunction):
    name = "nminus1"

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("the (n-1) family needs n >= 2")
        super().__init__(n)

    @staticmethod
    def _mu(lam):
        lam = np.asarray(lam, dtype=float)
        return lam.sum(axis=-1, keepdims=True) - lam

    def value(self, lam):
        return np.log(self._mu(lam)).sum(axis=-1)

    def gradient(self, lam):
        inv = 1.0 / self._mu(lam)
        return inv.sum(axis=-1, keepdims=True) - inv

    def margin(self, lam):
        return self._mu(lam).min(axis=-1)


def make_family(family: str, n: int) -> ConeFunction:
    """Parse ``"qma"``, ``"hessian:k"``, ``"hessian:k:root"`` or ``"nminus1"``."""
    parts = family.strip().lower().split(":")
    if parts[0] == "qma" and len(parts) == 1:
        return QMA(n)
    if parts[0] == "nminus1" and len(parts) == 1:
        return NMinus1(n)
    if parts[0] == "hessian" and len(parts) in (2, 3):
        norm = parts[2] if len(parts) == 3 else "log"
        return HessianK(n, int(parts[1]), norm)
    raise ValueError(f"unknown family {family!r}")


def _check_inside(f: ConeFunction, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != f.n:
        raise ValueError(f"expected {f.n} eigenvalues, got shape {lam.shape}")
    m = f.margin(lam)
    if np.any(~(m > 0)):
        raise OutsideCone(f"lambda outside the cone of {f.label} (margin {np.min(m):.3e})")
    return lam


def eval_f(f: ConeFunction, lam):
    lam = _check_inside(f, lam)
    v = f.value(lam)
    return float(v) if np.ndim(v) == 0 else v


def grad_f(f: ConeFunction, lam) -> np.ndarray:
    return f.gradient(_check_inside(f, lam))


def concavity_trace_gap(f: ConeFunction, lam):
    """``2 f(lam) - 2 f(1) + 2 sum f_j - 2 sum f_j lam_j``, nonnegative by concavity."""
    lam = _check_inside(f, lam)
    g = f.gradient(lam)
    f1 = f.value(np.ones(f.n))
    gap = 2 * f.value(lam) - 2 * f1 + 2 * g.sum(axis=-1) - 2 * (g * lam).sum(axis=-1)
    return float(gap) if np.ndim(gap) == 0 else gap


# --------------------------------------------------------------------------
# Ladder limits
# --------------------------------------------------------------------------


def ladder_limit(values) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the limit of sequences along the last axis.

    Returns ``(limit, diverged)``.  A sequence has a finite limit when its last
    increment is below ``1e-12 max(1, |f|)`` or when the increments decay
    geometrically (the tail is then summed, Richardson style).  Otherwise it
    diverges and the limit is +-inf according to the direction of travel.
    """
    v = np.asarray(values, dtype=float)
    inc = np.diff(v, axis=-1)
    last = v[..., -1]
    d1, d2, d3 = inc[..., -1], inc[..., -2], inc[..., -3]
    saturated = np.abs(d1) <= SATURATION_REL * np.maximum(1.0, np.abs(last))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = d1 / d2
        r2 = d2 / d3
    geometric = (np.abs(r1) < 0.9) & (np.abs(r2) < 0.9) & (np.abs(r1 - r2) < 0.05 * np.abs(r2) + 1e-3)
    finite = saturated | geometric
    with np.errstate(divide="ignore", invalid="ignore"):
        extrap = np.where(geometric & ~saturated, last + d1 * r1 / (1 - r1), last)
    lim = np.where(finite, extrap, np.where(d1 > 0, np.inf, -np.inf))
    lim = np.where(np.isfinite(v).all(axis=-1), lim, np.nan)
    return lim, ~finite


# --------------------------------------------------------------------------
# Structure checks
# --------------------------------------------------------------------------


@dataclass
class StructureReport:
    family: str
    n: int
    samples: int
    symmetric: bool
    orthant_inside: bool
    min_grad_component: float
    max_hessian_eig: float
    sup_boundary: float
    inf_h: float
    ray_limits_min: float
    sup_gamma: float
    cond1: bool
    cond2_positive: bool
    cond2_concave: bool
    cond3: bool
    cond4: bool

    @property
    def all_pass(self) -> bool:
        return self.cond1 and self.cond2_positive and self.cond2_concave and self.cond3 and self.cond4

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["all_pass"] = self.all_pass
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return out


def sample_interior(f: ConeFunction, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points of Gamma: half log-normal (orthant), half Gaussian accepted by margin."""
    n_pos = (count + 1) // 2
    pos = np.exp(rng.normal(0.0, 1.0, size=(n_pos, f.n)))
    out = [pos]
    need = count - n_pos
    while need > 0:
        cand = rng.normal(1.0, 1.5, size=(4 * need + 8, f.n))
        scale = np.abs(cand).max(axis=-1)
        ok = f.margin(cand) > 1e-2 * scale ** (_margin_degree(f))
        good = cand[ok][:need]
        out.append(good)
        need -= len(good)
    return np.concatenate(out)[:count]


def _margin_degree(f: ConeFunction) -> float:
    return float(f.k) if isinstance(f, HessianK) else 1.0


def numerical_hessian(f: ConeFunction, lam, rel_step: float = 1e-5) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    h = rel_step * (1.0 + np.abs(lam).max(axis=-1, keepdims=True))
    cols = []
    for i in range(f.n):
        e = np.zeros(f.n)
        e[i] = 1.0
        gp = f.gradient(lam + h * e)
        gm = f.gradient(lam - h * e)
        cols.append((gp - gm) / (2 * h))
    H = np.stack(cols, axis=-1)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _boundary_point(f, lam, d, iters=80):
    """Exit parameter s_b of the ray lam + s d (assumes it exits)."""
    lo = np.zeros(lam.shape[0])
    hi = np.ones(lam.shape[0])
    for _ in range(60):
        inside = f.margin(lam + hi[:, None] * d) > 0
        if not inside.any():
            break
        hi = np.where(inside, 2 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = f.margin(lam + mid[:, None] * d) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo


def check_structure(
    f: ConeFunction,
    sample_count: int = 200,
    h_range: tuple[float, float] = (0.0, 0.0),
    seed: int = 0,
) -> StructureReport:
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    lam = sample_interior(f, sample_count, rng)

    perm = np.stack([rng.permutation(f.n) for _ in range(len(lam))])
    shuffled = np.take_along_axis(lam, perm, axis=-1)
    v = f.value(lam)
    symmetric = bool(np.allclose(v, f.value(shuffled), rtol=1e-12, atol=1e-12))
    orthant_inside = bool(np.all(f.margin(np.exp(rng.normal(0, 2, size=(sample_count, f.n)))) > 0))

    g = f.gradient(lam)
    min_grad = float(g.min())

    H = numerical_hessian(f, lam)
    eig = np.linalg.eigvalsh(H)
    scale = np.maximum(np.abs(eig).max(axis=-1), np.abs(g).max(axis=-1) / (1 + np.abs(lam).max(axis=-1)))
    max_eig_rel = float((eig[..., -1] / scale).max())

    # condition 3: sup of f approaching the boundary along random exit rays
    d = rng.normal(size=lam.shape)
    d = d - np.abs(d).max(axis=-1, keepdims=True) * 1.5  # has a negative component, so rays exit
    sb = _boundary_point(f, lam, d)
    eps = 2.0 ** -np.arange(1, 41)
    pts = lam[:, None, :] + (sb[:, None] * (1 - eps))[..., None] * d[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        bvals = f.value(pts)
    blim, _ = ladder_limit(bvals)
    sup_boundary = float(np.nanmax(blim))

    # condition 4: limits along t * lam
    with np.errstate(over="ignore"):
        rvals = f.value(lam[:, None, :] * LADDER[:, None])
    rlim, _ = ladder_limit(rvals)
    sup_gamma = float(max(np.nanmax(rlim), np.nanmax(v)))
    ray_min = float(np.nanmin(rlim))
    if math.isfinite(sup_gamma):
        cond4 = bool(ray_min >= sup_gamma - 1e-8 * (1 + abs(sup_gamma)))
    else:
        cond4 = bool(np.all(np.isposinf(rlim)))

    h_min = float(min(h_range))
    return StructureReport(
        family=f.label,
        n=f.n,
        samples=int(sample_count),
        symmetric=symmetric,
        orthant_inside=orthant_inside,
        min_grad_component=min_grad,
        max_hessian_eig=max_eig_rel,
        sup_boundary=sup_boundary,
        inf_h=h_min,
        ray_limits_min=ray_min,
        sup_gamma=sup_gamma,
        cond1=symmetric and orthant_inside,
        cond2_positive=min_grad > 0,
        cond2_concave=max_eig_rel <= 1e-6,
        cond3=sup_boundary < h_min,
        cond4=cond4,
    )


# --------------------------------------------------------------------------
# Linearization
# --------------------------------------------------------------------------


@dataclass
class LinearizedCoeffs:
    """``F = sum_j f_j(lam) P_j`` with ``P_j`` the spectral projectors; ``trace_F = 2 sum f_j``."""

    F: np.ndarray
    trace_F: np.ndarray | float
    lam: np.ndarray


def coefficient_field(f: ConeFunction, H) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``(F, lam, margin)`` without cone checks (F is NaN outside)."""
    H = np.asarray(H)
    w, V = np.linalg.eigh(H)
    w = w[..., ::-1]
    V = V[..., ::-1]
    n = H.shape[-1] // 2
    lam = w.reshape(w.shape[:-1] + (n, 2)).mean(axis=-1)
    margin = f.margin(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = f.gradient(lam)
    if n > 1:
        tol = 1e-8 * np.maximum(np.abs(H).max(axis=(-2, -1)), 1.0)
        gaps = lam[..., :-1] - lam[..., 1:]
        label = np.concatenate(
            [np.zeros(lam.shape[:-1] + (1,), dtype=int), np.cumsum(gaps > tol[..., None], axis=-1)], axis=-1
        )
        merged = np.empty_like(g)
        for c in range(n):
            mask = label == c
            cnt = mask.sum(axis=-1, keepdims=True)
            mean = np.where(cnt > 0, (g * mask).sum(axis=-1, keepdims=True) / np.maximum(cnt, 1), 0.0)
            merged = np.where(mask, mean, merged)
        g = merged
    gg = np.repeat(g, 2, axis=-1)
    F = (V * gg[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    F = quatlin.symmetrize(F)
    return F, lam, margin


def linearized_coeffs(f: ConeFunction, H) -> LinearizedCoeffs:
    H = np.asarray(H, dtype=np.complex128)
    if H.shape[-1] != 2 * f.n:
        raise ValueError(f"expected {2 * f.n}x{2 * f.n} matrices, got {H.shape}")
    F, lam, margin = coefficient_field(f, H)
    if np.any(~(margin > 0)):
        raise OutsideCone(f"spectrum outside the cone of {f.label}")
    trace = 2.0 * f.gradient(lam).sum(axis=-1)
    if np.ndim(trace) == 0:
        trace = float(trace)
    return LinearizedCoeffs(F, trace, lam)


# --------------------------------------------------------------------------
# C-subsolutions
# --------------------------------------------------------------------------


@dataclass
class SubsolutionCertificate:
    delta: float
    R: float
    min_margin: float
    set_sample_max: float = 0.0
    dense_sample_max: float = 0.0
    verified: bool = True


@dataclass
class Rejection:
    point: int
    direction: int
    limit: float
    h_value: float


def directional_limits(f: ConeFunction, lam) -> np.ndarray:
    """``lim_t f(lam + t e_i)`` for every direction i; shape (..., n).

    Rays that never enter the cone on the ladder give -inf (no level set hit);
    rays that enter late are evaluated on their in-cone tail.
    """
    lam = np.asarray(lam, dtype=float)
    eye = np.eye(f.n)
    pts = lam[..., None, None, :] + LADDER[:, None, None] * eye[None]  # (..., rung, dir, n)
    pts = np.moveaxis(pts, -3, -2)  # (..., dir, rung, n)
    inside = f.margin(pts) > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.where(inside, f.value(np.where(inside[..., None], pts, 1.0)), np.nan)
    # fill the leading out-of-cone rungs with the first valid value so the
    # tail drives the limit estimate
    first_valid = np.argmax(inside, axis=-1)
    any_inside = inside.any(axis=-1)
    fill = np.take_along_axis(vals, first_valid[..., None], axis=-1)
    vals = np.where(inside, vals, fill)
    tail_ok = inside[..., -4:].all(axis=-1)
    lim, _ = ladder_limit(np.nan_to_num(vals, nan=0.0))
    return np.where(any_inside & tail_ok, lim, np.inf)


def _as_points(lam_sub, h, n):
    lam_sub = np.asarray(lam_sub, dtype=float)
    h_arr = np.asarray(getattr(h, "values", h), dtype=float)
    if lam_sub.shape[-1] != n:
        raise ValueError(f"subsolution eigenvalues need trailing axis {n}")
    if lam_sub.ndim == 1:
        lam_pts = lam_sub[None, :]
    else:
        lam_pts = lam_sub.reshape(-1, n)
    h_pts = h_arr.reshape(-1)
    if lam_pts.shape[0] == 1 and h_pts.size > 1:
        lam_pts = np.broadcast_to(lam_pts, (h_pts.size, n))
    elif h_pts.size == 1:
        h_pts = np.broadcast_to(h_pts, (lam_pts.shape[0],))
    if lam_pts.shape[0] != h_pts.size:
        raise ValueError("subsolution and h live on different grids")
    return lam_pts, h_pts


def _unique_limits(f, lam_pts):
    uniq, inv = np.unique(lam_pts, axis=0, return_inverse=True)
    return directional_limits(f, uniq)[inv.reshape(-1)]


def _set_crossings(f, base, h, w, iters=100):
    """Points base + s w on the level set f = h, for w >= 0 (NaN if the ray misses)."""
    P, K = base.shape[0], w.shape[0]
    b = np.broadcast_to(base[:, None, :], (P, K, f.n))
    hh = np.broadcast_to(h[:, None], (P, K))
    ww = np.broadcast_to(w[None], (P, K, f.n))

    def at(s):
        return b + s[..., None] * ww

    # entry parameter into the cone
    lo = np.zeros((P, K))
    hi = np.ones((P, K))
    for _ in range(60):
        out = ~(f.margin(at(hi)) > 0)
        if not out.any():
            break
        hi = np.where(out, 2 * hi, hi)
    entered = f.margin(at(hi)) > 0
    inside0 = f.margin(at(lo)) > 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ins = f.margin(at(mid)) > 0
        hi = np.where(ins, mid, hi)
        lo = np.where(ins, lo, mid)
    s_in = np.where(inside0, 0.0, hi)

    def g(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            return f.value(at(s)) - hh

    lo = s_in.copy()
    hi = np.maximum(2 * s_in, 1.0)
    for _ in range(80):
        below = g(hi) <= 0
        if not below.any():
            break
        hi = np.where(below, 2 * hi, hi)
    hit = entered & (g(hi) > 0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        up = ~(gm > 0)
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    pts = at(hi)
    return np.where(hit[..., None], pts, np.nan)


def _simplex_directions(n, count, rng):
    w = rng.dirichlet(np.ones(n), size=count)
    return np.concatenate([np.eye(n), np.full((1, n), 1.0 / n), w])


def subsolution_check(
    f: ConeFunction,
    lam_sub,
    h,
    m0: float = 1e-9,
    delta_max: float = 0.5,
    set_samples: int = 256,
    max_set_points: int = 8,
    seed: int = 0,
) -> SubsolutionCertificate | Rejection:
    """Decide whether the eigenvalue field ``lam_sub`` is a C-subsolution for level ``h``.

    Raises :class:`NotAdmissible` when ``lam_sub`` leaves the cone.
    """
    lam_pts, h_pts = _as_points(lam_sub, h, f.n)
    m = f.margin(lam_pts)
    if np.any(~(m > 0)):
        bad = int(np.argmin(np.where(np.isnan(m), -np.inf, m)))
        raise NotAdmissible(f"subsolution leaves the cone at point {bad}", witness=bad)

    lims = _unique_limits(f, lam_pts)
    margins = lims - h_pts[:, None]
    min_margin = float(np.min(margins))
    if not min_margin >= m0:
        p, i = np.unravel_index(int(np.argmin(margins)), margins.shape)
        return Rejection(int(p), int(i), float(lims[p, i]), float(h_pts[p]))

    def passes(delta):
        lims_d = _unique_limits(f, lam_pts - delta)
        return bool(np.min(lims_d - h_pts[:, None]) >= m0)

    if passes(delta_max):
        delta = float(delta_max)
    else:
        lo, hi = 0.0, float(delta_max)
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if passes(mid) else (lo, mid)
        delta = lo

    rng = np.random.default_rng(seed)
    order = np.argsort(-h_pts, kind="stable")
    pick = order[: max(1, max_set_points // 2)]
    if len(order) > len(pick):
        extra = rng.choice(len(order), size=min(len(order), max_set_points - len(pick)), replace=False)
        pick = np.unique(np.concatenate([pick, extra]))
    base = lam_pts[pick] - delta
    hp = h_pts[pick]
    coarse = _set_crossings(f, base, hp, _simplex_directions(f.n, set_samples, rng))
    coarse_max = float(np.nanmax(np.linalg.norm(coarse, axis=-1), initial=0.0))
    R = 1.25 * coarse_max if coarse_max > 0 else 1.0
    dense = _set_crossings(f, base, hp, _simplex_directions(f.n, 8 * set_samples, np.random.default_rng(seed + 1)))
    dense_max = float(np.nanmax(np.linalg.norm(dense, axis=-1), initial=0.0))
    return SubsolutionCertificate(
        delta=delta,
        R=float(R),
        min_margin=min_margin,
        set_sample_max=coarse_max,
        dense_sample_max=dense_max,
        verified=bool(np.isfinite(R) and dense_max <= R),
    )


# --------------------------------------------------------------------------
# Dichotomy probe
# --------------------------------------------------------------------------


def level_tolerance(sigma) -> np.ndarray:
    return LEVEL_TOL_REL * (1.0 + np.abs(sigma))


def dichotomy_values(f: ConeFunction, A, B) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``(kappa_hat, first, second)`` without preconditions."""
    F, lam, _ = coefficient_field(f, A)
    trace = 2.0 * f.gradient(lam).sum(axis=-1)
    first = quatlin.contract(F, np.asarray(B) - np.asarray(A)) / trace
    second = np.diagonal(F, axis1=-2, axis2=-1).real.min(axis=-1) / trace
    return np.maximum(first, second), first, second


def dichotomy_probe(f: ConeFunction, A, B, sigma: float, delta: float, R: float) -> float:
    """kappa_hat = max(F(A).(B - A) / tr F, min_j F^{jj} / tr F) at a level-set point A."""
    A = np.asarray(A, dtype=np.complex128)
    lam = quatlin.quaternionic_eigenvalues(A).values
    if not f.margin(lam) > 0:
        raise OutsideCone("lambda(A) is outside the cone")
    if abs(f.value(lam) - sigma) > level_tolerance(sigma):
        raise PreconditionViolated(f"f(lambda(A)) = {f.value(lam):.6g} is off the level {sigma:.6g}")
    if not np.linalg.norm(lam) > R:
        raise PreconditionViolated(f"|lambda(A)| = {np.linalg.norm(lam):.6g} does not exceed R = {R}")
    if delta <= 0:
        raise PreconditionViolated("delta must be positive")
    kappa, _, _ = dichotomy_values(f, A, np.asarray(B, dtype=np.complex128))
    return float(kappa)


__all__ = [
    "ConeFunction",
    "QMA",
    "HessianK",
    "NMinus1",
    "make_family",
    "eval_f",
    "grad_f",
    "check_structure",
    "StructureReport",
    "linearized_coeffs",
    "LinearizedCoeffs",
    "coefficient_field",
    "concavity_trace_gap",
    "subsolution_check",
    "SubsolutionCertificate",
    "Rejection",
    "dichotomy_probe",
    "ladder_limit",
    "elementary_symmetric",
    "NotAdmissible",
]
