"""Feasible-start path-following interior-point method over K.

Solves  min <c, x>  s.t.  A x = b,  x in K  by following the central path
x(t) = argmin t <c, x> + Gamma(x) on {A x = b}. Each centering stage takes
damped Newton steps until the Newton decrement drops below
``center_tol``; then t grows by 1 + 0.2/sqrt(nu), nu = 2 + d. The run
stops once the gap bound nu/t is below ``gap_tol``.

Newton systems are assembled in the barrier's adapted basis
(:func:`adapted_model`), where the Hessian has a closed form. That is an exact change of
variables, but it keeps the KKT matrix well conditioned as the iterates
approach the boundary, where the Hessian in packed coordinates has
condition numbers of order t^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from .cone_barrier import ConePoint, adapted_model, cone_dim, in_interior
from .errors import (
    ConfigError,
    DomainError,
    InvalidProblem,
    IterationLimit,
    NumericalFailure,
    SingularKKT,
)
from .matrix_calculus import phi_value, svec, sym
from .spectral_functions import FunctionFamily

FEAS_TOL = 1e-8
MAX_BACKTRACKS = 40
STALL_RATIO = 0.5


def _family_from_json(data) -> FunctionFamily:
    if isinstance(data, FunctionFamily):
        return data
    if isinstance(data, str):
        return FunctionFamily.parse(data)
    return FunctionFamily.from_dict(data)


@dataclass(frozen=True)
class ConicProblem:
    """min <c, x> s.t. A x = b, x in K, with a strictly feasible start x0.

    All vectors use the packed layout [u, v, svec(W)] of length
    2 + d(d+1)/2. Validation happens on construction and raises
    :class:`InvalidProblem`.
    """

    family: FunctionFamily
    side: int
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        if not isinstance(self.family, FunctionFamily):
            raise InvalidProblem("family must be a FunctionFamily")
        if isinstance(self.side, bool) or not isinstance(self.side, (int, np.integer)) or self.side < 1:
            raise InvalidProblem(f"side must be an integer >= 1, got {self.side!r}")
        n = cone_dim(self.side)
        try:
            c = np.asarray(self.c, dtype=float).reshape(-1)
            A = np.asarray(self.A, dtype=float)
            b = np.asarray(self.b, dtype=float).reshape(-1)
            x0 = self.x0.packed() if isinstance(self.x0, ConePoint) else np.asarray(self.x0, dtype=float)
        except (TypeError, ValueError) as exc:
            raise InvalidProblem(f"non-numeric problem data: {exc}") from None
        if A.ndim == 1 and A.size == 0:
            A = A.reshape(0, n)
        if c.shape != (n,):
            raise InvalidProblem(f"c has length {c.size}, expected {n}")
        if A.ndim != 2 or A.shape[1] != n:
            raise InvalidProblem(f"A has shape {A.shape}, expected (m, {n})")
        if b.shape != (A.shape[0],):
            raise InvalidProblem(f"b has length {b.size}, expected {A.shape[0]}")
        if x0.shape != (n,):
            raise InvalidProblem(f"x0 has length {x0.size}, expected {n}")
        for name, arr in (("c", c), ("A", A), ("b", b), ("x0", x0)):
            if not np.all(np.isfinite(arr)):
                raise InvalidProblem(f"{name} has non-finite entries")
        m = A.shape[0]
        if m > n or (m and np.linalg.matrix_rank(A) < m):
            raise InvalidProblem("A does not have full row rank")
        resid = float(np.linalg.norm(A @ x0 - b))
        if resid > FEAS_TOL * (1.0 + np.linalg.norm(b)):
            raise InvalidProblem(f"x0 violates A x = b (residual {resid:.3e})")
        if not in_interior(self.family, ConePoint.from_packed(x0)):
            raise InvalidProblem("x0 is not in the interior of K")
        for name, arr in (("c", c), ("A", A), ("b", b), ("x0", x0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nu(self) -> int:
        return 2 + self.side

    def to_dict(self) -> dict:
        return {
            "family": self.family.to_dict(),
            "d": int(self.side),
            "c": self.c.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "x0": ConePoint.from_packed(self.x0).to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConicProblem":
        if not isinstance(data, dict):
            raise InvalidProblem("problem must be a JSON object")
        missing = [k for k in ("family", "d", "c", "A", "b", "x0") if k not in data]
        if missing:
            raise InvalidProblem(f"problem is missing field(s): {', '.join(missing)}")
        try:
            family = _family_from_json(data["family"])
        except ValueError as exc:
            raise InvalidProblem(f"bad family: {exc}") from None
        x0 = data["x0"]
        try:
            x0 = ConePoint.from_dict(x0).packed() if isinstance(x0, dict) else np.asarray(x0, dtype=float)
        except (TypeError, ValueError) as exc:
            raise InvalidProblem(f"bad x0: {exc}") from None
        d = data["d"]
        if not isinstance(d, int) or isinstance(d, bool):
            raise InvalidProblem(f"d must be an integer, got {d!r}")
        return cls(family, d, data["c"], data["A"], data["b"], x0)


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 1.0
    gap_tol: float = 1e-8
    max_iters: int = 5000
    center_tol: float = 1e-6
    damping_threshold: float = 0.25
    growth: Optional[float] = None  # default 1 + 0.2/sqrt(2+d)

    def __post_init__(self):
        for name in ("t0", "gap_tol", "center_tol", "damping_threshold"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be a positive number, got {val!r}")
        if isinstance(self.max_iters, bool) or not isinstance(self.max_iters, (int, np.integer)) or self.max_iters < 1:
            raise ConfigError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if self.growth is not None and not (math.isfinite(self.growth) and self.growth > 1.0):
            raise ConfigError(f"growth must exceed 1, got {self.growth!r}")

    def growth_for(self, nu: int) -> float:
        return self.growth if self.growth is not None else 1.0 + 0.2 / math.sqrt(nu)


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective: float
    t: float
    iterations: int
    history: list = field(default_factory=list)
    message: str = ""

    @property
    def point(self) -> ConePoint:
        return ConePoint.from_packed(self.x)

    def raise_for_status(self) -> "SolveResult":
        if self.status == "iteration_limit":
            raise IterationLimit(self.message or "iteration limit reached", self)
        if self.status == "numerical_failure":
            raise NumericalFailure(self.message or "numerical failure", self)
        return self

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": float(self.objective),
            "x": ConePoint.from_packed(self.x).to_dict(),
            "x_packed": [float(v) for v in self.x],
            "t": float(self.t),
            "iterations": int(self.iterations),
            "message": self.message,
            "history": self.history,
        }


def residuals(problem: ConicProblem, x, t: float):
    """(||A x - b||, nu / t): primal residual and the central-path gap bound."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(problem.A @ x - problem.b)), problem.nu / t


_SYTRF, _SYTRS = scipy.linalg.lapack.get_lapack_funcs(("sytrf", "sytrs"), (np.zeros(1),))


def _kkt_solve(K, rhs):
    """Symmetric indefinite (Bunch-Kaufman) solve with one refinement step."""
    if not np.all(np.isfinite(K)) or not np.all(np.isfinite(rhs)):
        raise SingularKKT("KKT system has non-finite entries")
    lu, piv, info = _SYTRF(K, lower=1)
    if info != 0:
        raise SingularKKT(f"KKT factorization failed (sytrf info={info})")
    sol, info = _SYTRS(lu, piv, rhs, lower=1)
    if info == 0:
        corr, info = _SYTRS(lu, piv, rhs - K @ sol, lower=1)
        sol = sol + corr
    if info != 0 or not np.all(np.isfinite(sol)):
        raise SingularKKT("KKT solve produced non-finite values")
    return sol


def _newton(problem, model, t):
    n = cone_dim(problem.side)
    m = problem.A.shape[0]
    T = model.basis  # (n, n): row k is the k-th basis direction
    AT = problem.A @ T.T
    K = np.zeros((n + m, n + m))
    K[:n, :n] = model.hessian
    K[:n, n:] = AT.T
    K[n:, :n] = AT
    rhs = np.zeros(n + m)
    rhs[:n] = -(t * (T @ problem.c) + model.gradient)
    z = _kkt_solve(K, rhs)[:n]
    lam = math.sqrt(max(float(z @ model.hessian @ z), 0.0))
    return z @ T, lam


def newton_step(problem: ConicProblem, x, t: float):
    """Newton direction and decrement for t <c, x> + Gamma(x) on {A x = b}.

    The direction solves [H A^T; A 0][dx; y] = [-(t c + grad Gamma); 0];
    the decrement is sqrt(<dx, H dx>).
    """
    model = adapted_model(problem.family, np.asarray(x, dtype=float))
    return _newton(problem, model, t)


class _Projector:
    """Least-squares correction x -> x - A^+ (A x - b) against rounding drift."""

    def __init__(self, A, b):
        self.A, self.b = A, b
        self.pinv = np.linalg.pinv(A) if A.shape[0] else None

    def __call__(self, x):
        if self.pinv is None:
            return x
        return x - self.pinv @ (self.A @ x - self.b)


def solve(problem: ConicProblem, config: Optional[SolverConfig] = None, strict: bool = False) -> SolveResult:
    """Run the path-following method from ``problem.x0``.

    Returns a :class:`SolveResult` whose status is ``optimal``,
    ``iteration_limit`` or ``numerical_failure``; with ``strict=True`` the
    last two raise (the result rides on the exception). ``history`` holds
    one record per centering stage.
    """
    cfg = config or SolverConfig()
    if not isinstance(problem, ConicProblem):
        raise InvalidProblem("solve expects a ConicProblem")
    f, nu = problem.family, problem.nu
    growth = cfg.growth_for(nu)
    project = _Projector(problem.A, problem.b)
    x = np.array(problem.x0, dtype=float)
    t = float(cfg.t0)
    iters = 0
    history = []

    def finish(status, message=""):
        res = SolveResult(status, x.copy(), float(problem.c @ x), t, iters, history, message)
        return res.raise_for_status() if strict else res

    try:
        model = adapted_model(f, x)
    except DomainError as exc:
        return finish("numerical_failure", f"start point rejected: {exc}")

    while True:
        steps = 0
        prev = math.inf
        while True:
            try:
                dx, lam = _newton(problem, model, t)
            except (SingularKKT, np.linalg.LinAlgError, FloatingPointError) as exc:
                return finish("numerical_failure", str(exc))
            if lam <= cfg.center_tol:
                break
            # Inside the quadratic region the decrement must at least halve
            # per full step. When it does not, it has reached the rounding
            # floor set by zeta ~ 1/t and the point is as central as the
            # arithmetic allows.
            if prev <= cfg.damping_threshold and lam > STALL_RATIO * prev:
                break
            if iters >= cfg.max_iters:
                return finish("iteration_limit", f"no convergence within {cfg.max_iters} Newton steps")
            alpha = 1.0 / (1.0 + lam) if lam > cfg.damping_threshold else 1.0
            for _ in range(MAX_BACKTRACKS):
                try:
                    trial = project(x + alpha * dx)
                    model = adapted_model(f, trial)
                    break
                except DomainError:
                    alpha *= 0.5
            else:
                return finish("numerical_failure", "could not keep the iterate inside the cone")
            x = trial
            iters += 1
            steps += 1
            prev = lam
        primal, gap = residuals(problem, x, t)
        history.append({
            "t": t,
            "objective": float(problem.c @ x),
            "decrement": lam,
            "newton_steps": steps,
            "primal_residual": primal,
            "gap_bound": gap,
        })
        if gap <= cfg.gap_tol:
            if primal > FEAS_TOL * (1.0 + np.linalg.norm(problem.b)):
                return finish("numerical_failure", f"primal residual {primal:.3e} too large")
            return finish("optimal")
        t *= growth


# Reference problems


def trace_entropy_problem(d: int = 2) -> ConicProblem:
    """min u over K(negentropy) with v = 1 and tr W = 1.

    The optimum is phi(I/d) = -log d at W = I/d. The start point is
    (1 - log d, 1, I/d).
    """
    f = FunctionFamily("negentropy")
    n = cone_dim(d)
    c = np.zeros(n)
    c[0] = 1.0
    A = np.zeros((2, n))
    A[0, 1] = 1.0
    A[1, 2:] = svec(np.eye(d))
    b = np.array([1.0, 1.0])
    x0 = ConePoint(1.0 - math.log(d), 1.0, np.eye(d) / d).packed()
    return ConicProblem(f, d, c, A, b, x0)


def epigraph_pinning_problem(f: FunctionFamily, W0, slack: float = 1.0) -> ConicProblem:
    """min u over K with v = 1 and every entry of W pinned to W0.

    The feasible set is the ray u > phi(W0), so the optimum is phi(W0).
    """
    W0 = sym(np.atleast_2d(np.asarray(W0, dtype=float)))
    d = W0.shape[0]
    n = cone_dim(d)
    c = np.zeros(n)
    c[0] = 1.0
    A = np.eye(n)[1:]
    b = np.concatenate(([1.0], svec(W0)))
    try:
        u0 = phi_value(f, W0) + slack
    except DomainError as exc:
        raise InvalidProblem(f"W0 must be positive definite: {exc}") from None
    return ConicProblem(f, d, c, A, b, ConePoint(u0, 1.0, W0).packed())
