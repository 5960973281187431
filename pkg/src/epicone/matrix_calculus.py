"""Spectral calculus for phi(W) = tr g(W) on positive definite matrices.

Symmetric matrices are plain ``numpy`` arrays, symmetrized on entry. Every
routine broadcasts over leading axes, so a stack of shape (..., d, d) is
handled in one call. The packed ("svec") form stores the row-major upper
triangle with off-diagonal entries scaled by sqrt(2), so packed dot
products equal tr(XY).

Derivatives use the Daleckii-Krein formulas. With W = U diag(lam) U^T and
X~ = U^T X U::

    D phi(W)[X]        = sum_i g'(lam_i) X~_ii
    D2 phi(W)[X, X]    = sum_ij g'[lam_i, lam_j] X~_ij^2
    D3 phi(W)[X, X, X] = 2 sum_ijk g'[lam_i, lam_j, lam_k] X~_ij X~_jk X~_ki

where g'[.,.] and g'[.,.,.] are divided differences of g'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceFailure, DomainError
from .spectral_functions import FunctionFamily, _deriv, derivative_function

SQRT2 = math.sqrt(2.0)

# Relative node spread below which divided differences switch from the
# difference quotient to a Taylor series about the node mean.
PAIR_TIE = 1e-3
TRIPLE_TIE = 1e-2
TAYLOR_TERMS = 12

PD_GATE = 1e-12


def _t(X):
    return np.swapaxes(X, -1, -2)


def sym(M) -> np.ndarray:
    """Return (M + M^T)/2 as a float array; M must be (a stack of) square."""
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + _t(M))


def packed_dim(d: int) -> int:
    return d * (d + 1) // 2


def side_from_packed(n: int) -> int:
    d = int(round((math.sqrt(8 * n + 1) - 1) / 2))
    if d < 1 or packed_dim(d) != n:
        raise ValueError(f"length {n} is not a triangular number d(d+1)/2")
    return d


@lru_cache(maxsize=None)
def _triu(d):
    rows, cols = np.triu_indices(d)
    scale = np.where(rows == cols, 1.0, SQRT2)
    for arr in (rows, cols, scale):
        arr.setflags(write=False)
    return rows, cols, scale


@lru_cache(maxsize=None)
def _unit_matrices(d):
    """smat of every packed unit vector, shape (d(d+1)/2, d, d); read-only."""
    F = smat(np.eye(packed_dim(d)))
    F.setflags(write=False)
    return F


def svec(W) -> np.ndarray:
    """Packed vector of a symmetric matrix (or a stack of them)."""
    W = np.asarray(W, dtype=float)
    rows, cols, scale = _triu(W.shape[-1])
    return W[..., rows, cols] * scale


def smat(x) -> np.ndarray:
    """Inverse of :func:`svec`; accepts a stack of packed vectors."""
    x = np.asarray(x, dtype=float)
    d = side_from_packed(x.shape[-1])
    rows, cols, scale = _triu(d)
    out = np.zeros(x.shape[:-1] + (d, d))
    vals = x / scale
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def inner(X, Y):
    """Trace inner product tr(XY) for symmetric X, Y (batched on leading axes)."""
    return np.einsum("...ij,...ij->...", X, Y)


class EigDecomp(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues[..., None, :]) @ _t(U)


def _rayleigh_quotients(W, U):
    """Eigenvalues recomputed as u^T W u / u^T u in extended precision.

    LAPACK eigenvalues carry absolute errors of order eps ||W||, which is
    large relative to the small eigenvalues that dominate log-type kernels.
    The Rayleigh quotient error is quadratic in the eigenvector error.
    """
    Ul = U.astype(np.longdouble)
    num = np.einsum("...ji,...jk,...ki->...i", Ul, W.astype(np.longdouble), Ul)
    den = np.einsum("...ji,...ji->...i", Ul, Ul)
    return (num / den).astype(float)


def sym_eig(W) -> EigDecomp:
    """Eigendecomposition with eigenvalues sorted in descending order.

    Each eigenvector is sign-normalized so that its largest-magnitude
    entry is positive, which makes the output deterministic.
    """
    W = sym(W)
    if not np.all(np.isfinite(W)):
        raise DomainError("matrix has non-finite entries")
    try:
        _, U = np.linalg.eigh(W)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    lam = _rayleigh_quotients(W, U)[..., ::-1]
    U = U[..., ::-1]
    if np.any(np.diff(lam, axis=-1) > 0.0):
        # refinement can swap nearly equal eigenvalues
        order = np.argsort(-lam, axis=-1, kind="stable")
        lam = np.take_along_axis(lam, order, axis=-1)
        U = np.take_along_axis(U, order[..., None, :], axis=-1)
    pivots = np.argmax(np.abs(U), axis=-2)
    signs = np.sign(np.take_along_axis(U, pivots[..., None, :], axis=-2)[..., 0, :])
    signs[signs == 0] = 1.0
    return EigDecomp(lam, U * signs[..., None, :])


def spectral_norm(lam):
    return np.max(np.abs(lam), axis=-1)


def is_positive_definite(lam, gate: float = PD_GATE):
    """lambda_min > gate (1 + ||W||), elementwise over a stack of spectra."""
    lam = np.asarray(lam, dtype=float)
    return lam[..., -1] > gate * (1.0 + spectral_norm(lam))


def _require_pd(lam):
    ok = is_positive_definite(lam)
    if not np.all(ok):
        raise DomainError(
            f"matrix is not positive definite (lambda_min = {np.min(lam[..., -1]):.3e})"
        )


def _pair_series(h, a, b):
    m = 0.5 * (a + b)
    e2 = (0.5 * (a - b)) ** 2
    series = np.zeros_like(m)
    epow = np.ones_like(m)
    for k in range(1, TAYLOR_TERMS, 2):
        series = series + h(m, k) / math.factorial(k) * epow
        epow = epow * e2
    return series


def pair_divided_difference(h, a, b):
    """Elementwise first divided difference h[a, b] for positive a, b.

    ``h(x, k)`` returns the k-th derivative of the underlying function.
    Nearly coincident nodes use the series
    h[a, b] = sum_{k odd} h^(k)(m) e^(k-1) / k!,  m = (a+b)/2, e = (a-b)/2.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    diff = a - b
    near = np.abs(diff) <= PAIR_TIE * np.maximum(a, b)
    out = np.array((h(a, 0) - h(b, 0)) / np.where(near, 1.0, diff), dtype=float, copy=True)
    if np.any(near):
        # exact ties (every diagonal entry of a table) need only h'
        tie = diff == 0.0
        out[tie] = h(a[tie], 1)
        close = near & ~tie
        if np.any(close):
            out[close] = _pair_series(h, a[close], b[close])
    return out


def _triple_series(h, x):
    """Series about the mean for node triples x of shape (n, 3)."""
    m = x.mean(axis=-1)
    e = x - m[:, None]
    nmax = TAYLOR_TERMS - 2
    epow = np.ones_like(e)
    power_sums = [None]
    for _ in range(nmax):
        epow = epow * e
        power_sums.append(epow.sum(axis=-1))
    complete = [np.ones_like(m)]
    for n in range(1, nmax + 1):
        acc = np.zeros_like(m)
        for i in range(1, n + 1):
            acc = acc + power_sums[i] * complete[n - i]
        complete.append(acc / n)
    series = np.zeros_like(m)
    for k in range(2, TAYLOR_TERMS):
        series = series + h(m, k) / math.factorial(k) * complete[k - 2]
    return series


def triple_divided_difference(h, a, b, c):
    """Elementwise second divided difference h[a, b, c] for positive nodes.

    Well-separated triples use (h[hi, mid] - h[mid, lo]) / (hi - lo) on the
    sorted nodes. Clustered triples use the Taylor series about the mean m:
    h[a, b, c] = sum_{k>=2} h^(k)(m)/k! * H_{k-2}(a-m, b-m, c-m), with H_n
    the complete homogeneous symmetric polynomial of degree n.
    """
    x = np.stack(np.broadcast_arrays(*(np.asarray(t, float) for t in (a, b, c))), -1)
    x = np.sort(x, axis=-1)
    lo, mid, hi = x[..., 0], x[..., 1], x[..., 2]
    spread = hi - lo
    near = spread <= TRIPLE_TIE * hi
    out = np.array(
        (pair_divided_difference(h, hi, mid) - pair_divided_difference(h, mid, lo))
        / np.where(near, 1.0, spread),
        dtype=float,
        copy=True,
    )
    if np.any(near):
        out[near] = _triple_series(h, x[near])
    return out


@dataclass(frozen=True)
class DividedDiffTables:
    dd1: np.ndarray
    dd2: Optional[np.ndarray] = None


def divided_diffs(f: FunctionFamily, eigenvalues, shift: int = 0, second: bool = True) -> DividedDiffTables:
    """Divided-difference tables of g^(shift) over all index pairs/triples.

    ``shift=0`` tabulates g itself; ``shift=1`` tabulates g', which is what
    the Hessian and third-order forms of phi consume. ``eigenvalues`` may
    be a stack of shape (..., d); tables then have shape (..., d, d) and
    (..., d, d, d).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim == 0:
        lam = lam[None]
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise DomainError("divided differences need strictly positive nodes")
    h = derivative_function(f, shift)
    dd1 = pair_divided_difference(h, lam[..., :, None], lam[..., None, :])
    dd2 = None
    if second:
        dd2 = triple_divided_difference(
            h, lam[..., :, None, None], lam[..., None, :, None], lam[..., None, None, :]
        )
    return DividedDiffTables(dd1, dd2)


class SpectralContext:
    """Cached spectral data of phi at a positive definite matrix (or stack).

    Holds the eigendecomposition and lazily builds the divided-difference
    tables of g'. Direction arguments X broadcast against the stack: for
    a stack of shape (n, d, d), X may be (n, d, d) or (k, n, d, d).
    """

    def __init__(self, f: FunctionFamily, W=None, eig: Optional[EigDecomp] = None):
        self.family = f
        self.eig = eig if eig is not None else sym_eig(W)
        _require_pd(self.eig.eigenvalues)

    @property
    def eigenvalues(self):
        return self.eig.eigenvalues

    @property
    def eigenvectors(self):
        return self.eig.eigenvectors

    @property
    def side(self) -> int:
        return self.eig.eigenvalues.shape[-1]

    @cached_property
    def gvals(self):
        return _deriv(self.family, self.eigenvalues, 0)

    @cached_property
    def dgvals(self):
        return _deriv(self.family, self.eigenvalues, 1)

    @cached_property
    def hess_table(self):
        return divided_diffs(self.family, self.eigenvalues, shift=1, second=False).dd1

    @cached_property
    def d3_table(self):
        return divided_diffs(self.family, self.eigenvalues, shift=1, second=True).dd2

    def value(self):
        return np.sum(self.gvals, axis=-1)

    def grad(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.dgvals[..., None, :]) @ _t(U)

    def rotate(self, X):
        """X~ = U^T X U."""
        U = self.eigenvectors
        return _t(U) @ X @ U

    def hess_apply(self, X):
        U = self.eigenvectors
        return U @ (self.hess_table * self.rotate(X)) @ _t(U)

    def hess_form(self, X):
        Xt = self.rotate(X)
        return np.einsum("...ij,...ij,...ij->...", self.hess_table, Xt, Xt)

    def d3_form(self, X):
        Xt = self.rotate(X)
        return 2.0 * np.einsum("...ijk,...ij,...jk,...ki->...", self.d3_table, Xt, Xt, Xt)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def phi_value(f: FunctionFamily, W):
    """phi(W) = sum_i g(lam_i)."""
    return _scalar(SpectralContext(f, W).value())


def phi_grad(f: FunctionFamily, W) -> np.ndarray:
    return SpectralContext(f, W).grad()


def phi_hess_apply(f: FunctionFamily, W, X) -> np.ndarray:
    """Hessian of phi at W applied to the symmetric direction X."""
    return SpectralContext(f, W).hess_apply(sym(X))


def phi_d3_form(f: FunctionFamily, W, X):
    return _scalar(SpectralContext(f, W).d3_form(sym(X)))


def matrix_function(f: FunctionFamily, W, order: int = 0) -> np.ndarray:
    """U diag(g^(order)(lam)) U^T for positive definite W."""
    eig = sym_eig(W)
    _require_pd(eig.eigenvalues)
    U = eig.eigenvectors
    return (U * _deriv(f, eig.eigenvalues, order)[..., None, :]) @ _t(U)
