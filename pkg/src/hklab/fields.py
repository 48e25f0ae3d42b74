"""Periodic fields on the flat torus R^{4n} / Z^{4n} and spectral complex Hessians.

Axis ``a`` (0 <= a < 2n) carries x^a = Re z^a and axis ``2n + a`` carries
Im z^a.  The metric is the identity and J is the constant standard structure,
so every Christoffel and curvature term vanishes and covariant derivatives
are plain partial derivatives.

Axes with a single grid point are inactive: fields are constant along them.
This is how n = 2 problems are embedded with at most four active coordinates.
"""

from __future__ import annotations

import functools
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import quatlin
from .errors import FormatError, GridError, InvalidChi, NotQuaternionic

MAGIC = b"HKTG"
VERSION = 1


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HKT_THREADS", "1")))
    except ValueError:
        return 1


def _is_pow2(d: int) -> bool:
    return d >= 1 and (d & (d - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    n: int
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise GridError("n must be >= 1")
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 4 * self.n:
            raise GridError(f"need {4 * self.n} axis counts for n={self.n}, got {len(dims)}")
        if not all(_is_pow2(d) for d in dims):
            raise GridError("dims must be powers of two")

    @classmethod
    def cube(cls, n: int, points: int) -> "TorusGrid":
        return cls(n, (points,) * (4 * n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / d for d in self.dims)

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(a for a, d in enumerate(self.dims) if d > 1)

    def coord(self, axis: int) -> np.ndarray:
        """Coordinate x^axis broadcast against the grid shape."""
        d = self.dims[axis]
        shape = [1] * len(self.dims)
        shape[axis] = d
        return (np.arange(d) / d).reshape(shape)

    def meshgrid(self) -> list[np.ndarray]:
        return [np.broadcast_to(self.coord(a), self.dims) for a in range(len(self.dims))]


@dataclass
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), self.grid.shape).copy()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field has non-finite values")

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - o)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__


@dataclass
class HermField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        m = 2 * self.grid.n
        v = np.asarray(self.values, dtype=np.complex128)
        self.values = np.broadcast_to(v, self.grid.shape + (m, m)).copy()


def constant_herm(grid: TorusGrid, M) -> HermField:
    return HermField(grid, np.asarray(M, dtype=np.complex128))


def identity_chi(grid: TorusGrid) -> HermField:
    return constant_herm(grid, np.eye(2 * grid.n))


# --------------------------------------------------------------------------
# Spectral symbols
# --------------------------------------------------------------------------


class _Symbols:
    def __init__(self, grid: TorusGrid):
        self.grid = grid
        nd = len(grid.dims)
        self.K = []  # 2 pi k, Nyquist kept (second derivatives along one axis)
        self.Kt = []  # 2 pi k, Nyquist zeroed (first derivatives)
        for a, d in enumerate(grid.dims):
            k = sfft.fftfreq(d, 1.0 / d) if d > 1 else np.zeros(1)
            shape = [1] * nd
            shape[a] = d
            K = (2 * np.pi * k).reshape(shape)
            Kt = K.copy()
            if d > 1 and d % 2 == 0:
                Kt.reshape(-1)[d // 2] = 0.0
            self.K.append(K)
            self.Kt.append(Kt)

    def second(self, a: int, b: int) -> np.ndarray:
        """Symbol of d^2 / dx^a dx^b."""
        if a == b:
            return -(self.K[a] ** 2)
        return -self.Kt[a] * self.Kt[b]

    def complex_hessian(self, a: int, b: int) -> np.ndarray:
        """Symbol of d_a d_{bbar} with d_a = (d_{x^a} - i d_{x^{2n+a}}) / 2."""
        m = 2 * self.grid.n
        ap, bp = a + m, b + m
        re = self.second(a, b) + self.second(ap, bp)
        im = self.second(a, bp) - self.second(ap, b)
        return 0.25 * (re + 1j * im)

    def trace_symbol(self) -> np.ndarray:
        """Symbol of 2 sum_k d_k d_{kbar} (= half the Euclidean Laplacian)."""
        return 0.5 * sum(self.second(a, a) for a in range(len(self.grid.dims)))


@functools.lru_cache(maxsize=8)
def symbols(grid: TorusGrid) -> _Symbols:
    return _Symbols(grid)


def _check_spectral(grid: TorusGrid) -> None:
    bad = [d for d in grid.dims if 1 < d < 4]
    if bad:
        raise GridError(f"active axes need at least 4 points, got {bad}")


def fft(values) -> np.ndarray:
    return sfft.fftn(values, workers=_workers())


def ifft(values_hat) -> np.ndarray:
    return sfft.ifftn(values_hat, workers=_workers())


def complex_hessian_values(grid: TorusGrid, values, values_hat=None) -> np.ndarray:
    _check_spectral(grid)
    S = symbols(grid)
    m = 2 * grid.n
    uh = fft(values) if values_hat is None else values_hat
    out = np.empty(grid.shape + (m, m), dtype=np.complex128)
    for a in range(m):
        out[..., a, a] = ifft(S.complex_hessian(a, a) * uh).real
        for b in range(a + 1, m):
            hab = ifft(S.complex_hessian(a, b) * uh)
            out[..., a, b] = hab
            out[..., b, a] = np.conj(hab)
    return out


def complex_hessian(phi: ScalarField) -> HermField:
    return HermField(phi.grid, complex_hessian_values(phi.grid, phi.values))


def real_hessian(phi: ScalarField) -> np.ndarray:
    """Real Hessian D^2 phi, shape grid + (4n, 4n)."""
    grid = phi.grid
    _check_spectral(grid)
    S = symbols(grid)
    uh = fft(phi.values)
    nd = len(grid.dims)
    out = np.empty(grid.shape + (nd, nd))
    for a in range(nd):
        for b in range(a, nd):
            out[..., a, b] = out[..., b, a] = ifft(S.second(a, b) * uh).real
    return out


def gradient(phi: ScalarField) -> np.ndarray:
    """Euclidean gradient, shape grid + (4n,)."""
    grid = phi.grid
    S = symbols(grid)
    uh = fft(phi.values)
    return np.stack([ifft(1j * S.Kt[a] * uh).real for a in range(len(grid.dims))], axis=-1)


def grad_norm(phi: ScalarField) -> ScalarField:
    g = gradient(phi)
    return ScalarField(phi.grid, np.sqrt((g**2).sum(axis=-1)))


def laplacian(phi: ScalarField) -> ScalarField:
    """``2 sum_k phi_{k kbar}``, i.e. twice the trace of the complex Hessian."""
    _check_spectral(phi.grid)
    S = symbols(phi.grid)
    return ScalarField(phi.grid, ifft(S.trace_symbol() * fft(phi.values)).real)


def check_chi(chi: HermField) -> None:
    v = chi.values
    defect = quatlin.hyperhermitian_defect(v)
    tol = quatlin.TOL_HERM_REL * max(float(np.abs(v).max()), 1.0)
    if np.any(defect > tol):
        idx = np.unravel_index(int(np.argmax(defect)), defect.shape)
        raise InvalidChi(f"chi is not hyperhermitian at grid point {idx}")


def assemble_g_phi(chi: HermField, phi: ScalarField, check: bool = True) -> HermField:
    """``chi + (Hc + twist Hc) / 2`` with ``Hc`` the complex Hessian of ``phi``."""
    if chi.grid != phi.grid:
        raise GridError("chi and phi live on different grids")
    if check:
        check_chi(chi)
    Hc = complex_hessian_values(phi.grid, phi.values)
    return HermField(phi.grid, chi.values + 0.5 * (Hc + quatlin.j_twist(Hc)))


@dataclass
class EigenField:
    lam: np.ndarray  # grid + (n,), non-increasing
    pairing_gap: float
    margin: float | None = None
    margin_field: np.ndarray | None = None
    argmin: tuple | None = None


def eigenvalue_field(A: HermField, f=None) -> EigenField:
    """Pointwise quaternionic spectra; with a cone function also the admissibility margin.

    A negative margin is reported, not raised.
    """
    vals, gap = quatlin.paired_spectrum(A.values)
    tol = quatlin.TOL_PAIR_REL * (1.0 + float(np.abs(A.values).max()))
    g = float(gap.max())
    if g > tol:
        raise NotQuaternionic(f"pairing gap {g:.3e} exceeds {tol:.3e}")
    out = EigenField(vals, g)
    if f is not None:
        mf = f.margin(vals)
        i = int(np.argmin(np.where(np.isnan(mf), -np.inf, mf)))
        out.margin_field = mf
        out.margin = float(mf.reshape(-1)[i])
        out.argmin = np.unravel_index(i, mf.shape)
    return out


# --------------------------------------------------------------------------
# Test-field helpers
# --------------------------------------------------------------------------


def cosine_field(grid: TorusGrid, amplitude: float = 1.0, axis: int = 0, k: int = 1) -> ScalarField:
    return ScalarField(grid, amplitude * np.cos(2 * np.pi * k * grid.coord(axis)))


def upsample(phi: ScalarField, factor: int = 2) -> ScalarField:
    """Trigonometric interpolation onto a grid refined by ``factor`` along active axes.

    Exact for fields whose spectrum vanishes at the Nyquist index; a Nyquist
    mode is split evenly between the two aliases.
    """
    if factor < 1 or not _is_pow2(factor):
        raise GridError("refinement factor must be a power of two")
    grid = phi.grid
    new_dims = tuple(d * factor if d > 1 else 1 for d in grid.dims)
    out = fft(phi.values)
    for a, d in enumerate(grid.dims):
        if d == 1 or factor == 1:
            continue
        D = d * factor
        half = d // 2
        moved = np.moveaxis(out, a, 0)
        big = np.zeros((D,) + moved.shape[1:], dtype=np.complex128)
        big[:half] = moved[:half]
        big[D - half + 1 :] = moved[half + 1 :]
        big[half] = 0.5 * moved[half]
        big[D - half] = 0.5 * moved[half]
        out = np.moveaxis(big, 0, a)
    scale = np.prod([n // o for n, o in zip(new_dims, grid.dims)])
    return ScalarField(TorusGrid(grid.n, new_dims), ifft(out).real * scale)


def band_limited_random(grid: TorusGrid, rng: np.random.Generator, kmax: int | None = None, amplitude: float = 1.0) -> ScalarField:
    """Random real field with |k_a| <= kmax on every active axis (default dims/4)."""
    shape = grid.shape
    coeff = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = np.ones(shape, dtype=bool)
    for a, d in enumerate(grid.dims):
        k = sfft.fftfreq(d, 1.0 / d) if d > 1 else np.zeros(1)
        lim = (d // 4) if kmax is None else kmax
        sh = [1] * len(shape)
        sh[a] = d
        mask &= (np.abs(k) <= lim).reshape(sh)
    vals = ifft(np.where(mask, coeff, 0)).real
    vals -= vals.mean()
    scale = np.abs(vals).max()
    return ScalarField(grid, amplitude * vals / (scale if scale > 0 else 1.0))


# --------------------------------------------------------------------------
# HKTG dumps
# --------------------------------------------------------------------------


def write_hktg(path, field) -> None:
    """Write a ScalarField or HermField in the HKTG binary layout."""
    grid = field.grid
    header = MAGIC + struct.pack("<II", VERSION, grid.n) + struct.pack(f"<{len(grid.dims)}I", *grid.dims)
    if isinstance(field, HermField):
        v = np.asarray(field.values, dtype="<c16").view("<f8")
    else:
        v = np.asarray(field.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(v).tobytes(order="C"))


def read_hktg(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n < 1:
        raise FormatError(f"{path}: bad dimension {n}")
    off = 12 + 16 * n
    if len(data) < off:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{4 * n}I", data, 12)
    try:
        grid = TorusGrid(n, dims)
    except GridError as exc:
        raise FormatError(f"{path}: {exc}") from None
    body = data[off:]
    if len(body) % 8:
        raise FormatError(f"{path}: payload is not a whole number of float64 values")
    vals = np.frombuffer(body, dtype="<f8")
    m = 2 * n
    if vals.size == grid.size:
        return ScalarField(grid, vals.reshape(grid.shape))
    if vals.size == grid.size * m * m * 2:
        cv = vals.view("<c16").reshape(grid.shape + (m, m))
        return HermField(grid, cv)
    raise FormatError(f"{path}: payload size {vals.size} matches neither a scalar nor a matrix field")
