"""Hyperhermitian matrix kernel.

Quaternionic n x n matrices are always handled through their complex
2n x 2n representation.  A Hermitian matrix ``H`` is hyperhermitian when it
is fixed by the J-twist ``H -> J conj(H) J^T`` with the standard block
J = diag([[0, -1], [1, 0]], ...).  Its complex spectrum then consists of n
values, each repeated twice; those n values are the quaternionic eigenvalues.

Matrix and block indices are 0-based throughout.  The block ``r`` covers
rows/columns ``2r`` and ``2r + 1``.

Derivative coefficient arrays (``lambda1_gradient``, ``lambda1_hessian_coeff``
and the linearized coefficients in :mod:`hklab.cones`) follow the convention
in which a diagonal entry and its J-twin count as a single coordinate.  In
that convention a first variation along a hyperhermitian direction ``X`` is
``contract(G, X) / 2`` rather than ``contract(G, X)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateTopEigenvalue,
    InvalidDimension,
    InvalidIndex,
    NotQuaternionic,
    PreconditionViolated,
    ShapeError,
)

TOL_HERM_REL = 1e-10
TOL_PAIR_REL = 1e-8
TOL_DET_REL = 1e-9


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def tol_herm(H) -> float:
    return TOL_HERM_REL * max(_maxabs(H), 1.0)


def tol_pair(H) -> float:
    return TOL_PAIR_REL * (1.0 + _maxabs(H))


# --------------------------------------------------------------------------
# J and the twist
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardJ:
    """Standard quaternionic structure on C^{2n} as a real 2n x 2n matrix."""

    n: int
    matrix: np.ndarray = field(repr=False, compare=False)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def dim(self) -> int:
        return 2 * self.n


def standard_j(n: int) -> StandardJ:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidDimension(f"quaternionic dimension must be >= 1, got {n!r}")
    n = int(n)
    m = np.zeros((2 * n, 2 * n), dtype=np.int64)
    for r in range(n):
        m[2 * r, 2 * r + 1] = -1
        m[2 * r + 1, 2 * r] = 1
    m.setflags(write=False)
    return StandardJ(n, m)


def _square_even(H) -> np.ndarray:
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {H.shape}")
    if H.shape[-1] % 2:
        raise ShapeError(f"expected even dimension, got {H.shape[-1]}")
    return H


def _j_matrix(J, dim: int) -> np.ndarray:
    if J is None:
        return standard_j(dim // 2).matrix
    Jm = np.asarray(J)
    if Jm.shape != (dim, dim):
        raise ShapeError(f"J has shape {Jm.shape}, matrices have dimension {dim}")
    return Jm


def j_twist(H, J=None) -> np.ndarray:
    """Return ``J conj(H) J^T``; broadcasts over leading axes."""
    H = _square_even(H)
    Jm = _j_matrix(J, H.shape[-1])
    return Jm @ np.conj(H) @ Jm.T


def hyperhermitian_defect(H, J=None) -> np.ndarray:
    """Per-matrix max of ``|H - H*|`` and ``|H - twist(H)|`` (elementwise)."""
    H = _square_even(H)
    herm = np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max(axis=(-2, -1))
    tw = np.abs(H - j_twist(H, J)).max(axis=(-2, -1))
    return np.maximum(herm, tw)


def is_hyperhermitian(H, tol: float | None = None, J=None) -> bool:
    H = _square_even(H)
    if H.ndim != 2:
        raise ShapeError("is_hyperhermitian takes a single matrix")
    if tol is None:
        tol = tol_herm(H)
    return bool(hyperhermitian_defect(H, J) <= tol)


def symmetrize(H, J=None) -> np.ndarray:
    """Nearest hyperhermitian matrix in Frobenius norm (average over the group)."""
    H = _square_even(H)
    Hh = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    return 0.5 * (Hh + j_twist(Hh, J))


@dataclass(frozen=True)
class HyperhermMatrix:
    """Validated hyperhermitian matrix; ``np.asarray`` gives the entries."""

    entries: np.ndarray

    def __post_init__(self):
        H = _square_even(np.asarray(self.entries, dtype=np.complex128))
        if H.ndim != 2:
            raise ShapeError("HyperhermMatrix holds a single matrix")
        if not is_hyperhermitian(H):
            raise PreconditionViolated("matrix is not hyperhermitian")
        object.__setattr__(self, "entries", H)

    @property
    def n(self) -> int:
        return self.entries.shape[0] // 2

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def spectrum(self) -> "QuatSpectrum":
        return quaternionic_eigenvalues(self.entries)


# --------------------------------------------------------------------------
# Spectra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuatSpectrum:
    """Quaternionic eigenvalues, non-increasing, plus the observed pairing gap."""

    values: np.ndarray
    pairing_gap: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def paired_spectrum(H) -> tuple[np.ndarray, np.ndarray]:
    """Quaternionic eigenvalues and intra-pair gaps, vectorized over leading axes.

    The 2n complex eigenvalues are sorted descending and consecutive entries
    are paired; each pair is reported by its mean.
    """
    H = _square_even(H)
    w = np.linalg.eigvalsh(H)[..., ::-1]
    pairs = w.reshape(w.shape[:-1] + (w.shape[-1] // 2, 2))
    vals = pairs.mean(axis=-1)
    gap = np.abs(pairs[..., 0] - pairs[..., 1]).max(axis=-1)
    return vals, gap


def quaternionic_eigenvalues(H, tol: float | None = None) -> QuatSpectrum:
    H = _square_even(np.asarray(H))
    if H.ndim != 2:
        raise ShapeError("quaternionic_eigenvalues takes a single matrix")
    limit = tol_pair(H) if tol is None else tol
    if hyperhermitian_defect(H) > limit:
        raise NotQuaternionic("input is not hyperhermitian")
    vals, gap = paired_spectrum(H)
    if gap > limit:
        raise NotQuaternionic(f"pairing gap {float(gap):.3e} exceeds {limit:.3e}")
    return QuatSpectrum(vals, float(gap))


def random_hyperhermitian(n: int, rng: np.random.Generator, size=(), scale: float = 1.0) -> np.ndarray:
    """Random hyperhermitian matrices with Gaussian entries before projection."""
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    X = rng.standard_normal(shape + (2 * n, 2 * n)) + 1j * rng.standard_normal(shape + (2 * n, 2 * n))
    return scale * symmetrize(X)


def with_spectrum(H, values) -> np.ndarray:
    """Replace the quaternionic spectrum of ``H`` by ``values``, keeping eigenspaces.

    ``values`` must be ordered like the non-increasing spectrum of ``H``.
    """
    H = _square_even(H)
    w, V = np.linalg.eigh(H)
    V = V[..., ::-1]
    lam = np.repeat(np.asarray(values, dtype=float), 2, axis=-1)
    return symmetrize((V * lam[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2)))


# --------------------------------------------------------------------------
# Perturbation basis and eigenvalue calculus at diagonal matrices
# --------------------------------------------------------------------------


class EKind(enum.Enum):
    ODD_EVEN = "odd_even"  # +1 at (2r, 2s+1), -1 at (2r+1, 2s)
    EVEN_EVEN = "even_even"  # +1 at (2r+1, 2s+1) and (2r, 2s)
    DIAG = "diag"  # identity on block r


@dataclass(frozen=True)
class EBasisIndex:
    kind: EKind
    r: int
    s: int = -1

    def __post_init__(self):
        if self.kind is EKind.DIAG and self.s == -1:
            object.__setattr__(self, "s", self.r)

    def validate(self, n: int) -> None:
        if not 0 <= self.r < n or not 0 <= self.s < n:
            raise InvalidIndex(f"block indices {self.r}, {self.s} out of range for n={n}")
        if self.kind is EKind.DIAG:
            if self.r != self.s:
                raise InvalidIndex("DIAG index needs r == s")
        elif self.r >= self.s:
            raise InvalidIndex(f"{self.kind.name} index needs r < s, got r={self.r}, s={self.s}")


def e_basis(n: int, idx: EBasisIndex) -> np.ndarray:
    if n < 1:
        raise InvalidDimension(f"n must be >= 1, got {n}")
    idx.validate(n)
    E = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    r, s = idx.r, idx.s
    if idx.kind is EKind.ODD_EVEN:
        E[2 * r, 2 * s + 1] = E[2 * s + 1, 2 * r] = 1.0
        E[2 * r + 1, 2 * s] = E[2 * s, 2 * r + 1] = -1.0
    else:
        E[2 * r + 1, 2 * s + 1] = E[2 * s + 1, 2 * r + 1] = 1.0
        E[2 * r, 2 * s] = E[2 * s, 2 * r] = 1.0
    return E


def all_e_indices(n: int) -> list[EBasisIndex]:
    out = [EBasisIndex(EKind.DIAG, r) for r in range(n)]
    for r in range(n):
        for s in range(r + 1, n):
            out.append(EBasisIndex(EKind.ODD_EVEN, r, s))
            out.append(EBasisIndex(EKind.EVEN_EVEN, r, s))
    return out


def _diagonal_spectrum(A) -> np.ndarray:
    A = _square_even(np.asarray(A))
    if A.ndim != 2:
        raise ShapeError("expected a single matrix")
    tol = tol_herm(A)
    off = A - np.diag(np.diag(A))
    if _maxabs(off) > tol or _maxabs(np.diag(A).imag) > tol:
        raise PreconditionViolated("matrix must be real diagonal")
    d = np.diag(A).real
    lam = d[0::2]
    if _maxabs(lam - d[1::2]) > tol:
        raise PreconditionViolated("diagonal entries must come in equal pairs")
    if len(lam) > 1:
        rest = lam[1:].max()
        if abs(lam[0] - rest) <= tol_pair(A):
            raise DegenerateTopEigenvalue("top quaternionic eigenvalue is repeated")
        if lam[0] < rest:
            raise PreconditionViolated("largest eigenvalue must occupy the first block")
    return lam


def lambda1_perturbed(A, t: float, idx: EBasisIndex) -> float:
    """Largest quaternionic eigenvalue of ``A + t E`` for diagonal ``A``.

    Closed form valid while the perturbed top eigenvalue stays on the branch
    emanating from the first block (e.g. ``|t|`` below the spectral gap).
    """
    lam = _diagonal_spectrum(A)
    idx.validate(len(lam))
    if idx.kind is EKind.DIAG:
        return float(lam[0] + t) if idx.r == 0 else float(lam[0])
    if idx.r == 0:
        ls = lam[idx.s]
        return float(0.5 * (lam[0] + ls) + np.hypot(0.5 * (lam[0] - ls), t))
    return float(lam[0])


def lambda1_gradient(A) -> np.ndarray:
    lam = _diagonal_spectrum(A)
    G = np.zeros((2 * len(lam), 2 * len(lam)))
    G[0, 0] = G[1, 1] = 1.0
    return G


def lambda1_hessian_coeff(A, i: int, j: int, a: int, b: int) -> float:
    lam = _diagonal_spectrum(A)
    dim = 2 * len(lam)
    for v in (i, j, a, b):
        if not 0 <= v < dim:
            raise InvalidIndex(f"entry index {v} out of range for dimension {dim}")
    if (i, j) == (a, b) and i in (0, 1) and j >= 2:
        return float(2.0 / (lam[0] - lam[j // 2]))
    return 0.0


def contract(G, X) -> np.ndarray:
    """``Re tr(G X)``, i.e. the full index contraction of coefficients against entries."""
    G = np.asarray(G)
    X = np.asarray(X)
    return np.einsum("...ij,...ji->...", G, X).real


# --------------------------------------------------------------------------
# Real representation
# --------------------------------------------------------------------------


def iota(H) -> np.ndarray:
    """``[[Re H, Im H], [-Im H, Re H]]``; broadcasts over leading axes."""
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ShapeError(f"expected square matrices, got {H.shape}")
    re, im = H.real, H.imag
    top = np.concatenate([re, im], axis=-1)
    bot = np.concatenate([-im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def iota_inverse(N) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    if N.ndim < 2 or N.shape[-1] != N.shape[-2] or N.shape[-1] % 2:
        raise ShapeError(f"expected even square real matrices, got {N.shape}")
    m = N.shape[-1] // 2
    return N[..., :m, :m] + 1j * N[..., :m, m:]


def complex_structure_I(n: int) -> np.ndarray:
    """Real matrix of I for coordinates z^k = x^k + i x^{2n+k}.

    Sends the basis vector of x^k to that of x^{2n+k}.
    """
    m = 2 * n
    I = np.zeros((2 * m, 2 * m))
    I[m:, :m] = np.eye(m)
    I[:m, m:] = -np.eye(m)
    return I


def real_j(J) -> np.ndarray:
    """Real 4n x 4n matrix of J acting on C^{2n} = R^{4n}.

    J is antilinear, v -> J conj(v), so its real matrix is diag(J, -J); it
    anticommutes with I.
    """
    Jm = np.asarray(J, dtype=float)
    m = Jm.shape[0]
    out = np.zeros((2 * m, 2 * m))
    out[:m, :m] = Jm
    out[m:, m:] = -Jm
    return out


def _check_symmetric(N) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    if N.ndim < 2 or N.shape[-1] != N.shape[-2] or N.shape[-1] % 4:
        raise ShapeError(f"expected 4n x 4n matrices, got {N.shape}")
    if _maxabs(N - np.swapaxes(N, -1, -2)) > TOL_HERM_REL * max(_maxabs(N), 1.0):
        raise PreconditionViolated("matrix must be symmetric")
    return N


def proj_p(N) -> np.ndarray:
    N = _check_symmetric(N)
    I = complex_structure_I(N.shape[-1] // 4)
    return 0.5 * (N + I.T @ N @ I)


def proj_T(N, J=None) -> np.ndarray:
    N = _check_symmetric(N)
    n = N.shape[-1] // 4
    Jr = real_j(_j_matrix(J, 2 * n))
    P = proj_p(N)
    return 0.25 * (P + Jr.T @ P @ Jr)


# --------------------------------------------------------------------------
# Determinant inequalities
# --------------------------------------------------------------------------


def _check_psd(M, what: str) -> None:
    w = np.linalg.eigvalsh(M)
    scale = np.maximum(np.abs(w).max(axis=-1), 1.0)
    if np.any(w[..., 0] < -TOL_HERM_REL * 100 * scale):
        raise PreconditionViolated(f"{what} must be positive semidefinite")


def blocki_gap(N) -> np.ndarray | float:
    """``2^{4n} det(Hc)^2 - det(N)`` with ``Hc = iota^{-1}(p(N)/2)``; >= 0 for PSD N."""
    N = _check_symmetric(N)
    _check_psd(N, "N")
    n = N.shape[-1] // 4
    Hc = iota_inverse(0.5 * proj_p(N))
    dc = np.linalg.det(Hc).real
    gap = 2.0 ** (4 * n) * dc**2 - np.linalg.det(N)
    return float(gap) if np.ndim(gap) == 0 else gap


def sroka_gap(Hc, J=None) -> np.ndarray | float:
    """``2^{2n} det((Hc + twist Hc)/2) - det(Hc)``; >= 0 for Hermitian PSD Hc."""
    Hc = _square_even(np.asarray(Hc, dtype=np.complex128))
    if _maxabs(Hc - np.conj(np.swapaxes(Hc, -1, -2))) > tol_herm(Hc):
        raise PreconditionViolated("Hc must be Hermitian")
    _check_psd(Hc, "Hc")
    n = Hc.shape[-1] // 2
    avg = 0.5 * (Hc + j_twist(Hc, J))
    gap = 2.0 ** (2 * n) * np.linalg.det(avg).real - np.linalg.det(Hc).real
    return float(gap) if np.ndim(gap) == 0 else gap
