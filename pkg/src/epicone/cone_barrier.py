"""The cone K = cl{(u, v, W) : v > 0, W > 0, u - v phi(W/v) >= 0} and its barrier.

Barrier::

    Gamma(u, v, W) = -log(zeta) - log(v) - logdet(W),   zeta = u - v phi(W/v)

A point and a direction are stored as (scalar, scalar, symmetric matrix)
triples; their packed form is ``[u, v, svec(W)]`` of length 2 + d(d+1)/2.
Both may also carry leading batch axes (``u`` of shape (n,), ``W`` of shape
(n, d, d)); every oracle below then evaluates all points at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, NotInterior
from .matrix_calculus import (
    PD_GATE,
    EigDecomp,
    SpectralContext,
    _triu,
    _unit_matrices,
    inner,
    is_positive_definite,
    packed_dim,
    pair_divided_difference,
    side_from_packed,
    smat,
    spectral_norm,
    svec,
    sym,
    sym_eig,
)
from .spectral_functions import FunctionFamily, _deriv, derivative_function

DEFAULT_INTERIOR_TOL = 1e-12


def cone_dim(d: int) -> int:
    return 2 + packed_dim(d)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _num(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _split_packed(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 3:
        raise ValueError("packed vector needs at least 3 entries")
    return _num(x[..., 0]), _num(x[..., 1]), smat(x[..., 2:])


def _pack(a, b, M):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.concatenate((a[..., None], b[..., None], svec(M)), axis=-1)


def _col(x):
    """Append two axes so a batch-shaped array broadcasts against matrices."""
    return np.asarray(x)[..., None, None]


@dataclass(frozen=True)
class ConePoint:
    """A point (u, v, W); W is symmetrized on construction.

    ``u`` and ``v`` are floats for a single point, or arrays of a common
    batch shape with ``W`` of shape batch + (d, d).
    """

    u: float
    v: float
    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _num(self.u))
        object.__setattr__(self, "v", _num(self.v))
        W = np.asarray(self.W, dtype=float)
        if W.ndim < 2:
            W = W.reshape(np.shape(self.u) + (1, 1))
        object.__setattr__(self, "W", sym(W))

    @property
    def side(self) -> int:
        return self.W.shape[-1]

    @property
    def dim(self) -> int:
        return cone_dim(self.side)

    @property
    def batch_shape(self) -> tuple:
        return self.W.shape[:-2]

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("single ConePoint has no length")
        return self.batch_shape[0]

    def __getitem__(self, idx) -> "ConePoint":
        return ConePoint(np.asarray(self.u)[idx], np.asarray(self.v)[idx], self.W[idx])

    @classmethod
    def stack(cls, points) -> "ConePoint":
        points = list(points)
        return cls(
            np.array([p.u for p in points]),
            np.array([p.v for p in points]),
            np.stack([p.W for p in points]),
        )

    def packed(self) -> np.ndarray:
        return _pack(self.u, self.v, self.W)

    @classmethod
    def from_packed(cls, x) -> "ConePoint":
        return cls(*_split_packed(x))

    def scaled(self, theta) -> "ConePoint":
        return ConePoint(theta * np.asarray(self.u), theta * np.asarray(self.v), _col(theta) * self.W)

    def moved(self, direction: "Direction", t: float) -> "ConePoint":
        return ConePoint(self.u + t * direction.p, self.v + t * direction.q, self.W + t * direction.R)

    def to_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "W_packed": svec(self.W).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ConePoint":
        if not isinstance(data, dict):
            raise ValueError("point must be a JSON object")
        missing = [k for k in ("u", "v", "W_packed") if k not in data]
        if missing:
            raise ValueError(f"point is missing field(s): {', '.join(missing)}")
        W_packed = data["W_packed"]
        if not isinstance(W_packed, list) or not W_packed:
            raise ValueError("W_packed must be a non-empty list of numbers")
        try:
            return cls(float(data["u"]), float(data["v"]), smat(np.asarray(W_packed, dtype=float)))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad point data: {exc}") from None


@dataclass(frozen=True)
class Direction:
    """A direction (p, q, R) in the ambient space of K (batchable like ConePoint)."""

    p: float
    q: float
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _num(self.p))
        object.__setattr__(self, "q", _num(self.q))
        R = np.asarray(self.R, dtype=float)
        if R.ndim < 2:
            R = R.reshape(np.shape(self.p) + (1, 1))
        object.__setattr__(self, "R", sym(R))

    @property
    def side(self) -> int:
        return self.R.shape[-1]

    def __getitem__(self, idx) -> "Direction":
        return Direction(np.asarray(self.p)[idx], np.asarray(self.q)[idx], self.R[idx])

    def packed(self) -> np.ndarray:
        return _pack(self.p, self.q, self.R)

    @classmethod
    def from_packed(cls, x) -> "Direction":
        return cls(*_split_packed(x))

    @classmethod
    def radial(cls, point: ConePoint) -> "Direction":
        return cls(point.u, point.v, point.W)

    def __mul__(self, c) -> "Direction":
        return Direction(c * np.asarray(self.p), c * np.asarray(self.q), _col(c) * self.R)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "R_packed": svec(self.R).tolist()}


@dataclass(frozen=True)
class BarrierEval:
    value: float
    gradient: np.ndarray
    hessian: Optional[np.ndarray] = None


def _scaled_spectrum(f, point, eig):
    """Spectral context of W/v from the eigendecomposition of W."""
    lam_t = eig.eigenvalues / np.asarray(point.v)[..., None]
    return SpectralContext(f, eig=EigDecomp(lam_t, eig.eigenvectors))


def zeta(f: FunctionFamily, point: ConePoint):
    """zeta(u, v, W) = u - v phi(W/v); needs v > 0 and W > 0."""
    if not np.all(np.asarray(point.v) > 0.0):
        raise DomainError("zeta needs v > 0")
    eig = sym_eig(point.W)
    if not np.all(is_positive_definite(eig.eigenvalues)):
        raise DomainError("zeta needs W positive definite")
    return _scalar(point.u - point.v * _scaled_spectrum(f, point, eig).value())


class _InteriorState:
    """Membership mask plus the spectral data computed while testing it."""

    def __init__(self, f, point, tol):
        u = np.asarray(point.u, dtype=float)
        v = np.asarray(point.v, dtype=float)
        W = point.W
        finite = np.isfinite(u) & np.isfinite(v) & np.all(np.isfinite(W), axis=(-2, -1))
        W_safe = np.where(_col(finite), W, np.eye(point.side))
        eig = sym_eig(W_safe)
        lam = eig.eigenvalues
        ok = finite & (v > tol * (1.0 + np.abs(v)))
        ok &= lam[..., -1] > tol * (1.0 + spectral_norm(lam))
        # Substitute harmless values where the mask already failed so the
        # kernel is only ever evaluated on positive arguments.
        v_safe = np.where(ok, v, 1.0)
        lam_safe = np.where(ok[..., None], lam, 1.0)
        lam_t = lam_safe / v_safe[..., None]
        ok &= is_positive_definite(lam_t)
        lam_t = np.where(ok[..., None], lam_t, 1.0)
        with np.errstate(all="ignore"):
            vphi = v_safe * np.sum(_deriv(f, lam_t, 0), axis=-1)
            z = u - vphi
            ok &= np.isfinite(z) & (z > tol * (1.0 + np.abs(u) + np.abs(vphi)))
        self.mask = ok
        self.eig = EigDecomp(lam_safe, eig.eigenvectors)
        self.lam_t = lam_t
        self.vphi = vphi


def in_interior(f: FunctionFamily, point: ConePoint, tol: float = DEFAULT_INTERIOR_TOL):
    """Tolerance-gated membership in int(K). Never raises.

    Requires v > tol (1 + |v|), lambda_min(W) > tol (1 + ||W||) and
    zeta > tol (1 + |u| + |v phi(W/v)|). Returns a boolean array for
    batched points.
    """
    try:
        mask = _InteriorState(f, point, tol).mask
    except (DomainError, ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError):
        return False if not point.batch_shape else np.zeros(point.batch_shape, dtype=bool)
    return bool(mask) if mask.ndim == 0 else mask


def xi_of(point: ConePoint, direction: Direction) -> np.ndarray:
    """xi = (R - q W/v) / v, the derivative of W/v along (q, R)."""
    v = np.asarray(point.v)
    if not np.all(v > 0.0):
        raise DomainError("xi needs v > 0")
    q = np.asarray(direction.q)
    return (direction.R - _col(q / v) * point.W) / _col(v)


class BarrierOracle:
    """Value and derivative oracles of Gamma at an interior point (or batch).

    The eigendecomposition of W (hence of W/v) is computed once and shared
    by every oracle. Scalar results are floats for a single point and
    arrays of the batch shape otherwise. Instances are immutable apart
    from lazily cached tables.
    """

    def __init__(self, f: FunctionFamily, point: ConePoint, tol: float = DEFAULT_INTERIOR_TOL):
        state = _InteriorState(f, point, tol)
        if not np.all(state.mask):
            bad = int(np.size(state.mask) - np.count_nonzero(state.mask))
            raise NotInterior(f"{bad} point(s) not in the interior of K")
        self.family = f
        self.point = point
        self.d = point.side
        self.nu = 2 + self.d
        self.batch_shape = point.batch_shape
        self._lam_W = state.eig.eigenvalues
        self._U = state.eig.eigenvectors
        self.spec = SpectralContext(f, eig=EigDecomp(state.lam_t, self._U))

        self.v = np.asarray(point.v, dtype=float)
        self.Wt = point.W / _col(self.v)
        self.phi = state.vphi / self.v
        self.gphi = self.spec.grad()
        self.zeta = np.asarray(point.u, dtype=float) - state.vphi
        # d zeta / d v
        self.dzeta_v = -self.phi + inner(self.gphi, self.Wt)

    @cached_property
    def W_inv(self):
        U = self._U
        return (U / self._lam_W[..., None, :]) @ np.swapaxes(U, -1, -2)

    @cached_property
    def W_half(self):
        U = self._U
        return (U * np.sqrt(self._lam_W)[..., None, :]) @ np.swapaxes(U, -1, -2)

    @cached_property
    def W_inv_half(self):
        U = self._U
        return (U / np.sqrt(self._lam_W)[..., None, :]) @ np.swapaxes(U, -1, -2)

    @cached_property
    def value(self):
        val = -np.log(self.zeta) - np.log(self.v) - np.sum(np.log(self._lam_W), axis=-1)
        return _scalar(val)

    @cached_property
    def zeta_gradient(self) -> np.ndarray:
        return _pack(np.ones_like(self.zeta), self.dzeta_v, -self.gphi)

    @cached_property
    def gradient(self) -> np.ndarray:
        g = -self.zeta_gradient / self.zeta[..., None]
        g[..., 1] -= 1.0 / self.v
        g[..., 2:] -= svec(self.W_inv)
        return g

    def hess_apply_packed(self, P) -> np.ndarray:
        """Hessian times packed direction(s).

        P has shape extra + batch + (n,): any leading ``extra`` axes index
        several directions at the same point(s).
        """
        P = np.asarray(P, dtype=float)
        if P.shape[-1] != cone_dim(self.d):
            raise ValueError(f"direction length {P.shape[-1]} != {cone_dim(self.d)}")
        p, q, R = P[..., 0], P[..., 1], smat(P[..., 2:])
        v, z = self.v, self.zeta
        dz = p + q * self.dzeta_v - inner(self.gphi, R)
        xi = (R - _col(q / v) * self.point.W) / _col(v)
        Y = self.spec.hess_apply(xi)
        Winv = self.W_inv
        coef = dz / z**2
        out_v = coef * self.dzeta_v - inner(Y, self.Wt) / z + q / v**2
        out_W = -_col(coef) * self.gphi + Y / _col(z) + Winv @ R @ Winv
        return _pack(coef, out_v, out_W)

    def hess_apply(self, direction: Direction) -> np.ndarray:
        return self.hess_apply_packed(direction.packed())

    @cached_property
    def hessian(self) -> np.ndarray:
        """Dense packed Hessian(s), assembled from actions on basis vectors."""
        n = cone_dim(self.d)
        E = np.eye(n).reshape((n,) + (1,) * len(self.batch_shape) + (n,))
        cols = self.hess_apply_packed(np.broadcast_to(E, (n,) + self.batch_shape + (n,)))
        H = np.moveaxis(cols, 0, -1)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    @cached_property
    def adapted_basis(self) -> np.ndarray:
        """Packed basis in which the Hessian is well conditioned and explicit.

        Shape (n,) + batch + (n,), column index first. With W = U L U^T
        and F_k the packed unit matrices, the columns are

        - zeta e_u, which moves zeta alone;
        - v (e_v - dzeta/dv e_u);
        - (<grad phi, R_k>, 0, R_k) with R_k = U L^(1/2) F_k L^(1/2) U^T.

        All but the first keep zeta fixed to first order. The Hessian in
        this basis is given in closed form by :attr:`adapted_hessian` and
        its condition number does not grow as zeta -> 0 or as W nears the
        boundary. In packed coordinates it grows like 1/zeta^2 and
        1/lambda_min(W)^2.
        """
        d, n = self.d, cone_dim(self.d)
        batch = self.batch_shape
        rows, cols, _ = _triu(d)
        F = _unit_matrices(d).reshape((n - 2,) + (1,) * len(batch) + (d, d))
        s = np.sqrt(self._lam_W)
        U = self._U
        R = U @ (F * (s[..., :, None] * s[..., None, :])) @ np.swapaxes(U, -1, -2)
        # <grad phi, R_k> = g'(lam~_a) lam_a on diagonal units, 0 otherwise
        dg_lam = self.spec.dgvals * self._lam_W
        diag = (rows == cols).reshape((n - 2,) + (1,) * len(batch))
        u_part = np.where(diag, np.moveaxis(dg_lam[..., rows], -1, 0), 0.0)
        w_cols = _pack(u_part, np.zeros((n - 2,) + batch), R)
        u_col = np.zeros(batch + (n,))
        u_col[..., 0] = self.zeta
        v_col = np.zeros(batch + (n,))
        v_col[..., 0] = -self.dzeta_v * self.v
        v_col[..., 1] = self.v
        return np.concatenate((u_col[None], v_col[None], w_cols), axis=0)

    @cached_property
    def adapted_hessian(self) -> np.ndarray:
        """T^T H T for T = adapted_basis, in closed form.

        It equals 1 (+) (I + K). With c = v/zeta, lam~ the eigenvalues of
        W/v and G the divided-difference table of g' (G_aa = g''(lam~_a)),
        the nonzero entries of K are

        - K_vv = c sum_a G_aa lam~_a^2,
        - K_kk = c G_ab lam~_a lam~_b for the unit matrix F_k at (a, b),
        - K_vk = -c G_aa lam~_a^2 for diagonal units k = (a, a).

        :meth:`adapted_hessian_from_actions` computes the same matrix from
        the generic Hessian action and serves as its cross-check.
        """
        d, n = self.d, cone_dim(self.d)
        rows, cols, _ = _triu(d)
        lt = self.spec.eigenvalues
        G = self.spec.hess_table
        c = (self.v / self.zeta)[..., None]
        kdiag = c * G[..., rows, cols] * lt[..., rows] * lt[..., cols]
        H = np.zeros(self.batch_shape + (n, n))
        idx = np.arange(2, n)
        H[..., 0, 0] = 1.0
        H[..., 1, 1] = 1.0 + c[..., 0] * np.sum(np.diagonal(G, axis1=-2, axis2=-1) * lt * lt, axis=-1)
        H[..., idx, idx] = 1.0 + kdiag
        diag_units = idx[rows == cols]
        H[..., 1, diag_units] = -kdiag[..., rows == cols]
        H[..., diag_units, 1] = H[..., 1, diag_units]
        return H

    @cached_property
    def adapted_gradient(self) -> np.ndarray:
        """T^T grad Gamma in closed form: -(1, 1, packed identity)."""
        n = cone_dim(self.d)
        rows, cols, _ = _triu(self.d)
        g = np.concatenate(([-1.0, -1.0], np.where(rows == cols, -1.0, 0.0)))
        return np.broadcast_to(g, self.batch_shape + (n,)).copy()

    def adapted_hessian_from_actions(self) -> np.ndarray:
        """T^T H T assembled from :meth:`hess_apply_packed` on the columns of T."""
        T = self.adapted_basis
        Ht = np.einsum("i...k,j...k->...ij", T, self.hess_apply_packed(T))
        return 0.5 * (Ht + np.swapaxes(Ht, -1, -2))

    def in_adapted_basis(self, y) -> np.ndarray:
        """T^T y for packed covector(s) y (shape batch + (n,))."""
        return np.einsum("i...k,...k->...i", self.adapted_basis, y)

    def from_adapted_basis(self, z) -> np.ndarray:
        """T z: packed direction(s) from adapted-basis coordinates."""
        return np.einsum("i...k,...i->...k", self.adapted_basis, z)

    # Line derivatives along a direction (one per point for batches).

    def xi(self, direction: Direction) -> np.ndarray:
        return xi_of(self.point, direction)

    def zeta_d1(self, direction: Direction):
        return _scalar(direction.p + direction.q * self.dzeta_v - inner(self.gphi, direction.R))

    def _phi_forms(self, direction):
        xi = self.xi(direction)
        return self.spec.hess_form(xi), self.spec.d3_form(xi)

    def zeta_d2(self, direction: Direction):
        return _scalar(-self.v * self.spec.hess_form(self.xi(direction)))

    def zeta_d3(self, direction: Direction):
        d2phi, d3phi = self._phi_forms(direction)
        return _scalar(-self.v * d3phi + 3.0 * np.asarray(direction.q) * d2phi)

    def zeta_d2_d3(self, direction: Direction):
        d2phi, d3phi = self._phi_forms(direction)
        return _scalar(-self.v * d2phi), _scalar(-self.v * d3phi + 3.0 * np.asarray(direction.q) * d2phi)

    def line_derivatives(self, direction: Direction):
        """Second and third derivatives of t -> Gamma(point + t direction) at 0."""
        z, v = self.zeta, self.v
        q = np.asarray(direction.q, dtype=float)
        d2phi, d3phi = self._phi_forms(direction)
        z1 = direction.p + q * self.dzeta_v - inner(self.gphi, direction.R)
        z2 = -v * d2phi
        z3 = -v * d3phi + 3.0 * q * d2phi
        M = self.W_inv_half @ direction.R @ self.W_inv_half
        tr2 = np.sum(M * M, axis=(-2, -1))
        tr3 = np.einsum("...ij,...jk,...ki->...", M, M, M)
        r = z1 / z
        d2 = -z2 / z + r * r + (q / v) ** 2 + tr2
        d3 = -z3 / z + 3.0 * r * z2 / z - 2.0 * r**3 - 2.0 * (q / v) ** 3 - 2.0 * tr3
        return _scalar(d2), _scalar(d3)


class AdaptedModel(NamedTuple):
    """Second-order model of Gamma at one point, in the adapted basis T.

    ``basis`` holds the columns of T as rows (shape (n, n)); ``hessian``
    is T^T H T and ``gradient`` is T^T grad Gamma.
    """

    basis: np.ndarray
    hessian: np.ndarray
    gradient: np.ndarray
    zeta: float


def adapted_model(f: FunctionFamily, x, tol: float = DEFAULT_INTERIOR_TOL) -> AdaptedModel:
    """:class:`AdaptedModel` at a single packed point ``x``.

    Applies the same interior gates as :func:`in_interior` and raises
    :class:`NotInterior` on failure. The result matches
    ``BarrierOracle.adapted_basis`` / ``adapted_hessian`` /
    ``adapted_gradient``. This is the unbatched fast path used inside
    Newton loops, where per-call overhead dominates at small d.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("adapted_model takes a single packed point")
    n = x.shape[0]
    d = side_from_packed(n - 2)
    rows, cols, scale = _triu(d)
    u, v = float(x[0]), float(x[1])
    if not (math.isfinite(u) and math.isfinite(v) and np.all(np.isfinite(x[2:]))):
        raise NotInterior("point has non-finite entries")
    if not v > tol * (1.0 + abs(v)):
        raise NotInterior("v is not positive")
    W = np.empty((d, d))
    W[rows, cols] = W[cols, rows] = x[2:] / scale
    U = np.linalg.eigh(W)[1]
    Ul = U.astype(np.longdouble)
    lam = np.einsum("ji,jk,ki->i", Ul, W.astype(np.longdouble), Ul).astype(float)
    lam_max = float(np.max(np.abs(lam)))
    if not float(np.min(lam)) > tol * (1.0 + lam_max):
        raise NotInterior("W is not positive definite")
    lt = lam / v
    if not float(np.min(lt)) > PD_GATE * (1.0 + lam_max / v):
        raise NotInterior("W/v is not positive definite")
    vphi = v * float(np.sum(_deriv(f, lt, 0)))
    z = u - vphi
    if not (math.isfinite(z) and z > tol * (1.0 + abs(u) + abs(vphi))):
        raise NotInterior("zeta is not positive")

    diag = rows == cols
    dg = _deriv(f, lt, 1)
    s = np.sqrt(lam)
    R = U @ (_unit_matrices(d) * np.outer(s, s)) @ U.T
    T = np.zeros((n, n))
    T[0, 0] = z
    T[1, 0] = -v * (float(np.sum(dg * lt)) - vphi / v)  # -v dzeta/dv
    T[1, 1] = v
    T[2:, 0] = np.where(diag, (dg * lam)[rows], 0.0)
    T[2:, 2:] = R[:, rows, cols] * scale

    G = pair_divided_difference(derivative_function(f, 1), lt[rows], lt[cols])
    k = (v / z) * G * lt[rows] * lt[cols]
    H = np.eye(n)
    idx = np.arange(2, n)
    H[idx, idx] += k
    H[1, 1] += float(np.sum(k[diag]))
    H[1, idx[diag]] = H[idx[diag], 1] = -k[diag]
    g = np.concatenate(([-1.0, -1.0], np.where(diag, -1.0, 0.0)))
    return AdaptedModel(T, H, g, z)


def barrier_value(f, point):
    return BarrierOracle(f, point).value


def barrier_grad(f, point):
    """Packed gradient of Gamma:

    d/du = -1/zeta,
    d/dv = -(-phi(W~) + <grad phi(W~), W~>)/zeta - 1/v,
    d/dW = grad phi(W~)/zeta - W^-1,   with W~ = W/v.
    """
    return BarrierOracle(f, point).gradient.copy()


def barrier_hess_apply(f, point, direction: Direction):
    return BarrierOracle(f, point).hess_apply(direction)


def barrier_hess_dense(f, point):
    return BarrierOracle(f, point).hessian.copy()


def barrier_eval(f, point, hessian: bool = False) -> BarrierEval:
    oracle = BarrierOracle(f, point)
    H = oracle.hessian.copy() if hessian else None
    return BarrierEval(oracle.value, oracle.gradient.copy(), H)


def zeta_d2(f, point, direction):
    """D2 zeta[p, p] = -v D2 phi(W/v)[xi, xi]."""
    return BarrierOracle(f, point).zeta_d2(direction)


def zeta_d3(f, point, direction):
    """D3 zeta[p, p, p] = -v D3 phi(W/v)[xi, xi, xi] + 3 q D2 phi(W/v)[xi, xi]."""
    return BarrierOracle(f, point).zeta_d3(direction)


def barrier_d2_dir(f, point, direction):
    return BarrierOracle(f, point).line_derivatives(direction)[0]


def barrier_d3_dir(f, point, direction):
    """D3 Gamma[p, p, p] from the chain rule on the three log terms."""
    return BarrierOracle(f, point).line_derivatives(direction)[1]
