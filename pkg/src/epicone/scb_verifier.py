"""Randomized numerical certification of the barrier's LHSCB properties.

Each check produces a signed margin: nonnegative means the property holds
exactly, and a trial passes when ``margin >= -slack`` with a slack scaled
to the magnitudes involved. ``run_suite`` drives all checks for one
(family, side) configuration.

Trial ``i`` draws all of its random inputs from its own generator seeded
by ``(seed, family key, side, i)``. The draws are then completed into
points and directions in batches, and the checks are evaluated on whole
chunks of trials at once. Any chunk that raises is re-evaluated trial by
trial so an error is charged only to the trial that caused it. Reports are
therefore independent of chunking and of the number of worker processes.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .cone_barrier import BarrierOracle, ConePoint, Direction, _InteriorState, cone_dim
from .errors import ConfigError, EpiconeError, InvalidDirection, NotInterior, SingularHessian
from .matrix_calculus import SpectralContext, matrix_function, svec, sym, sym_eig
from .spectral_functions import ADMISSIBLE_DEFAULTS, NEGATIVE_CONTROL, FunctionFamily

DEFAULT_SEED = 20240917
DEFAULT_THETAS = (0.1, 0.5, 2.0, 10.0)
CHUNK = 256

CHECKS = (
    "log_homogeneity",
    "barrier_parameter",
    "euler_gradient",
    "euler_hessian",
    "concavity",
    "compatibility",
    "self_concordance",
    "fd_gradient",
    "fd_hessian",
    "fd_d3",
    "matrix_monotonicity",
)

POINT_CHECKS = CHECKS[:-1]


@dataclass(frozen=True)
class Tolerances:
    log_homogeneity: float = 1e-10
    barrier_parameter: float = 1e-6
    euler_gradient: float = 1e-8
    euler_hessian: float = 1e-8
    concavity: float = 1e-10
    compatibility: float = 1e-8
    self_concordance: float = 1e-6
    fd_gradient: float = 1e-6
    fd_hessian: float = 1e-5
    fd_d3: float = 1e-4
    matrix_monotonicity: float = 1e-10
    interior: float = 1e-10

    def __post_init__(self):
        for fld in fields(self):
            val = getattr(self, fld.name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"tolerance {fld.name} must be a positive number, got {val!r}")

    def replace(self, **overrides) -> "Tolerances":
        known = {fld.name for fld in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown tolerance(s): {', '.join(sorted(unknown))}")
        values = {name: getattr(self, name) for name in known}
        try:
            values.update({k: float(v) for k, v in overrides.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tolerance value: {exc}") from None
        return Tolerances(**values)


@dataclass(frozen=True)
class TrialConfig:
    family: FunctionFamily
    side: int
    trials: int = 1000
    seed: int = DEFAULT_SEED
    tolerances: Tolerances = field(default_factory=Tolerances)
    checks: tuple = CHECKS
    thetas: tuple = DEFAULT_THETAS

    def __post_init__(self):
        if not isinstance(self.family, FunctionFamily):
            raise ConfigError("family must be a FunctionFamily")
        if isinstance(self.side, bool) or not isinstance(self.side, (int, np.integer)) or self.side < 1:
            raise ConfigError(f"side must be an integer >= 1, got {self.side!r}")
        if isinstance(self.trials, bool) or not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ConfigError(f"trials must be an integer >= 1, got {self.trials!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.tolerances, Tolerances):
            raise ConfigError("tolerances must be a Tolerances instance")
        object.__setattr__(self, "checks", tuple(self.checks))
        unknown = set(self.checks) - set(CHECKS)
        if unknown or not self.checks:
            raise ConfigError(f"unknown or empty check selection: {sorted(unknown)}")
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if not self.thetas or any(not (math.isfinite(t) and t > 0) for t in self.thetas):
            raise ConfigError("theta values must be positive and finite")


# Sampling. Every sampler draws from ``rng`` in a fixed order, so a trial
# can be regenerated from its seed alone.

LOG_V = (math.log(0.1), math.log(10.0))
LOG_S = (math.log(1e-2), math.log(1e2))
LOG_C = (math.log(0.1), math.log(10.0))
MONOTONICITY_SIDES = (2, 3)


def _points_from_draws(f, M, a_v, a_s) -> ConePoint:
    d = M.shape[-1]
    W = np.swapaxes(M, -1, -2) @ M + 1e-2 * np.eye(d)
    v = np.exp(a_v)
    s = np.exp(a_s)
    spec = SpectralContext(f, W / np.asarray(v)[..., None, None])
    return ConePoint(v * spec.value() + s, v, W)


def _directions_from_draws(point: ConePoint, p, q_frac, S) -> Direction:
    eig = sym_eig(point.W)
    U = eig.eigenvectors
    W_half = (U * np.sqrt(eig.eigenvalues)[..., None, :]) @ np.swapaxes(U, -1, -2)
    q = np.asarray(q_frac) * np.asarray(point.v)
    return Direction(p, q, W_half @ S @ W_half)


def _scaled_symmetric(G, scale):
    """sym(G) rescaled to spectral norm ``scale`` (zero stays zero)."""
    S = sym(G)
    norm = np.max(np.abs(np.linalg.eigvalsh(S)), axis=-1)
    factor = np.where(norm > 0, np.asarray(scale) / np.where(norm > 0, norm, 1.0), 0.0)
    return S * factor[..., None, None]


def sample_interior_point(f: FunctionFamily, d: int, rng) -> ConePoint:
    """W = M^T M + 0.01 I, v log-uniform on [0.1, 10], u = v phi(W/v) + s.

    The slack s is log-uniform on [1e-2, 1e2].
    """
    if d < 1:
        raise ValueError("side must be >= 1")
    M = rng.standard_normal((d, d))
    a_v = rng.uniform(*LOG_V)
    a_s = rng.uniform(*LOG_S)
    return _points_from_draws(f, M, a_v, a_s)


def sample_compat_direction(point: ConePoint, rng, S=None) -> Direction:
    """Direction with |q| <= v and -W <= R <= W.

    R = W^(1/2) S W^(1/2) with ||S||_2 <= 1, so W +- R = W^(1/2)(I +- S)W^(1/2)
    is positive semidefinite by congruence. When ``S`` is omitted a random
    symmetric matrix is rescaled to a spectral norm drawn from U(0, 1].
    """
    d = point.side
    p = rng.standard_normal()
    q_frac = rng.uniform(-1.0, 1.0)
    if S is None:
        G = rng.standard_normal((d, d))
        scale = 1.0 - rng.uniform(0.0, 1.0)
        S = _scaled_symmetric(G, scale)
    else:
        S = sym(np.atleast_2d(np.asarray(S, dtype=float)))
        if S.shape != (d, d):
            raise ValueError(f"S must be {d}x{d}")
    return _directions_from_draws(point, p, q_frac, S)


def sample_direction(d: int, rng) -> Direction:
    """Standard normal direction in packed coordinates."""
    return Direction.from_packed(rng.standard_normal(cone_dim(d)))


def _pair_from_draws(G, C, a_c):
    side = G.shape[-1]
    C = C * np.exp(np.asarray(a_c))[..., None, None]
    B = np.swapaxes(G, -1, -2) @ G + 1e-2 * np.eye(side)
    return B + np.swapaxes(C, -1, -2) @ C, B


def sample_ordered_pair(side: int, rng):
    """Random A >= B > 0 with B = G^T G + 0.01 I and A = B + c^2 C^T C."""
    G = rng.standard_normal((side, side))
    C = rng.standard_normal((side, side))
    a_c = rng.uniform(*LOG_C)
    return _pair_from_draws(G, C, a_c)


# Individual checks. The point-based checks broadcast over batched points
# and directions; scalar results are floats for single points.


def _float(x):
    return float(x) if np.ndim(x) == 0 else x


def direction_ok(point: ConePoint, direction: Direction, tol: float = 1e-10):
    """Mask of directions with v +- q >= 0 and W +- R >= 0 (within tol)."""
    v = np.asarray(point.v)
    q = np.asarray(direction.q)
    ok = v - np.abs(q) >= -tol * v
    wnorm = np.max(np.abs(np.linalg.eigvalsh(point.W)), axis=-1)
    for sign in (1.0, -1.0):
        lam = np.linalg.eigvalsh(point.W + sign * direction.R)[..., 0]
        ok = ok & (lam >= -tol * wnorm)
    return ok


def check_direction(point: ConePoint, direction: Direction, tol: float = 1e-10) -> None:
    """Raise InvalidDirection unless v +- q >= 0 and W +- R >= 0 (within tol)."""
    ok = direction_ok(point, direction, tol)
    if not np.all(ok):
        bad = int(np.size(ok) - np.count_nonzero(ok))
        raise InvalidDirection(f"{bad} direction(s) violate v +- q >= 0 or W +- R >= 0")


def _homogeneity_errors(f, point, thetas, base_value, nu, tol):
    rows = []
    for theta in thetas:
        if not theta > 0:
            raise ValueError("theta must be positive")
        if theta == 1.0:
            rows.append(np.zeros(np.shape(base_value)))
            continue
        scaled = BarrierOracle(f, point.scaled(theta), tol=tol).value
        rows.append(np.abs(scaled - base_value + nu * math.log(theta)))
    return np.array(rows)


def check_log_homogeneity(f, point: ConePoint, thetas=DEFAULT_THETAS):
    """max over theta of |Gamma(theta u) - Gamma(u) + (2+d) log theta|."""
    base = BarrierOracle(f, point)
    errs = _homogeneity_errors(f, point, thetas, base.value, base.nu, 1e-12)
    return _float(errs.max(axis=0))


def compatibility_terms(f, point, direction, oracle=None):
    """(D2 zeta[p,p], D3 zeta[p,p,p]) after validating the direction."""
    oracle = oracle or BarrierOracle(f, point)
    check_direction(point, direction)
    return oracle.zeta_d2_d3(direction)


def check_compatibility(f, point: ConePoint, direction: Direction):
    """Margin -3 D2 zeta - D3 zeta of the compatibility inequality (beta = 1)."""
    d2, d3 = compatibility_terms(f, point, direction)
    return _float(-3.0 * np.asarray(d2) - d3)


def check_self_concordance_line(f, point: ConePoint, direction: Direction):
    """2 (D2 Gamma[p,p])^(3/2) - |D3 Gamma[p,p,p]|."""
    d2, d3 = BarrierOracle(f, point).line_derivatives(direction)
    return _float(2.0 * np.maximum(d2, 0.0) ** 1.5 - np.abs(d3))


def _cholesky(H):
    try:
        return np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(f"Hessian is not positive definite: {exc}") from exc


def _barrier_parameter(oracle):
    """<g, H^-1 g> by a Cholesky factorization of the Hessian.

    H and g are taken to the congruent basis T of
    :meth:`BarrierOracle.adapted_basis` (T^T H T and T^T g), which leaves
    <g, H^-1 g> unchanged but keeps the factorization well conditioned.
    T^T H T is assembled from the generic Hessian action rather than the
    oracle's closed form, so the check exercises the action directly.
    """
    gt = oracle.in_adapted_basis(oracle.gradient)
    L = _cholesky(oracle.adapted_hessian_from_actions())
    z = np.linalg.solve(L, gt[..., None])[..., 0]
    return _float(np.sum(z * z, axis=-1))


def check_barrier_parameter(f, point: ConePoint):
    """<grad, H^-1 grad>; equals 2+d for this barrier."""
    return _barrier_parameter(BarrierOracle(f, point))


def monotonicity_margin(f, A, B):
    """(lambda_min(g'(A) - g'(B)), ||g'(A)||_2) for A >= B > 0 (batchable)."""
    gA = matrix_function(f, A, order=1)
    gB = matrix_function(f, B, order=1)
    lam = np.linalg.eigvalsh(sym(gA - gB))[..., 0]
    norm = np.max(np.abs(np.linalg.eigvalsh(gA)), axis=-1)
    return _float(lam), _float(norm)


class MonotonicityReport(NamedTuple):
    worst: float
    worst_scaled: float
    A: Optional[np.ndarray]
    B: Optional[np.ndarray]


def check_matrix_monotonicity(f, rng, trials: int, sides=MONOTONICITY_SIDES) -> MonotonicityReport:
    """Search random ordered pairs A >= B > 0 for a decrease of g'.

    Pair ``i`` has side ``sides[i % len(sides)]``. The pair minimizing
    lambda_min / (1 + ||g'(A)||) is kept as witness.
    """
    pairs = [sample_ordered_pair(sides[i % len(sides)], rng) for i in range(trials)]
    best = MonotonicityReport(math.inf, math.inf, None, None)
    for side in sorted(set(sides)):
        idx = [i for i in range(trials) if sides[i % len(sides)] == side]
        if not idx:
            continue
        A = np.stack([pairs[i][0] for i in idx])
        B = np.stack([pairs[i][1] for i in idx])
        lam, norm = monotonicity_margin(f, A, B)
        scaled = lam / (1.0 + norm)
        k = int(np.argmin(scaled))
        if scaled[k] < best.worst_scaled:
            best = MonotonicityReport(float(lam[k]), float(scaled[k]), A[k], B[k])
    return best


# Finite-difference consistency. Directions are normalized to unit local
# norm (D2 Gamma[p, p] = 1), so steps are affine invariant and the unit
# Dikin ellipsoid keeps every stencil node inside the cone. Step sizes
# balance the O(h^4) truncation against the ~1e-12 evaluation noise that
# rounding of the shifted inputs induces near the boundary.

FD_STEP = 2e-3
FD3_STEP = 2e-2

_D1_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_D1_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_D3_OFFSETS = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
_D3_WEIGHTS = np.array([1.0, -8.0, 13.0, -13.0, 8.0, -1.0]) / 8.0


def _unit(oracle, P):
    """Rescale packed direction(s) P to unit local norm at the oracle's point(s)."""
    P = np.asarray(P, dtype=float)
    sq = np.sum(P * oracle.hess_apply_packed(P), axis=-1)
    return P / np.sqrt(sq)[..., None]


def _combine(weights, vals):
    """sum_k weights[k] vals[k], accumulated in a fixed order.

    BLAS-backed contractions may change their summation order with the
    batch width, which would make results depend on how trials are chunked.
    """
    out = weights[0] * vals[0]
    for w, v in zip(weights[1:], vals[1:]):
        out = out + w * v
    return out


def _stencil(x, P, offsets, h):
    """Packed points x + k h P for every offset k, stacked on a new leading axis."""
    return x + (offsets * h).reshape((-1,) + (1,) * P.ndim) * P


def fd_gradient_error(f, point: ConePoint, directions=None, h: float = FD_STEP):
    """Worst relative error of <grad, p> against central differences of Gamma.

    Defaults to every packed coordinate direction. Errors are relative to
    max(1, |<grad, p>|) for locally unit p.
    """
    oracle = BarrierOracle(f, point)
    x = point.packed()
    n = x.shape[-1]
    if directions is None:
        directions = np.eye(n)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    # directions index the leading axis; broadcast them over the batch
    D = np.broadcast_to(D.reshape((D.shape[0],) + (1,) * (x.ndim - 1) + (n,)), (D.shape[0],) + x.shape)
    P = _unit(oracle, D)
    exact = np.sum(oracle.gradient * P, axis=-1)
    vals = BarrierOracle(f, ConePoint.from_packed(_stencil(x, P, _D1_OFFSETS, h))).value
    approx = _combine(_D1_WEIGHTS, vals) / h
    err = np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))
    return _float(err.max(axis=0))


def fd_hessian_error(f, point: ConePoint, direction: Direction, h: float = FD_STEP):
    """Relative error of H p against central differences of the gradient.

    Measured in the dual local norm ||r||_{H^-1}, relative to
    ||H p||_{H^-1} = 1.
    """
    oracle = BarrierOracle(f, point)
    x = point.packed()
    P = _unit(oracle, direction.packed())
    grads = BarrierOracle(f, ConePoint.from_packed(_stencil(x, P, _D1_OFFSETS, h))).gradient
    resid = _combine(_D1_WEIGHTS, grads) / h - oracle.hess_apply_packed(P)
    z = np.linalg.solve(_cholesky(oracle.hessian), resid[..., None])[..., 0]
    return _float(np.sqrt(np.sum(z * z, axis=-1)))


def fd_d3_error(f, point: ConePoint, direction: Direction, h: float = FD3_STEP):
    """Relative error of D3 Gamma[p,p,p] against a 7-point stencil on Gamma.

    The direction is normalized to D2 Gamma[p,p] = 1, so the reference
    scale is max(1, |D3|).
    """
    oracle = BarrierOracle(f, point)
    x = point.packed()
    P = _unit(oracle, direction.packed())
    _, exact = oracle.line_derivatives(Direction.from_packed(P))
    vals = BarrierOracle(f, ConePoint.from_packed(_stencil(x, P, _D3_OFFSETS, h))).value
    approx = _combine(_D3_WEIGHTS, vals) / h**3
    return _float(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact)))


# Suite


@dataclass
class CheckResult:
    """Aggregate of one check over a configuration.

    ``witness`` identifies the trial with the smallest margin relative to
    its scale (errors rank below every finite margin); the full witness
    record is rebuilt from the seed by :func:`witness_record`.
    """

    name: str
    tolerance: float
    trials: int = 0
    passes: int = 0
    worst_margin: float = math.inf
    worst_relative: float = math.inf
    witness_trial: Optional[int] = None
    witness_extra: dict = field(default_factory=dict)
    witness: Optional[dict] = None
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.trials > 0 and self.passes == self.trials

    def record(self, trial, margin, scale, slack, extra=None):
        self.trials += 1
        finite = math.isfinite(margin)
        self.passes += bool(finite and margin >= -slack)
        rel = margin / scale if finite else -math.inf
        if self.witness_trial is None or rel < self.worst_relative:
            self.worst_relative = rel
            self.worst_margin = margin
            self.witness_trial = trial
            self.witness_extra = dict(extra or {})

    def record_error(self, trial, message):
        self.trials += 1
        if len(self.errors) < 5:
            self.errors.append(f"trial {trial}: {message}")
        if self.worst_relative != -math.inf or self.witness_trial is None:
            self.worst_relative = -math.inf
            self.worst_margin = -math.inf
            self.witness_trial = trial
            self.witness_extra = {"error": message}

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "passes": self.passes,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "worst_margin": _json_float(self.worst_margin),
            "worst_relative": _json_float(self.worst_relative),
            "witness": self.witness,
            "errors": list(self.errors),
        }


def _json_float(x):
    if x is None or math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


@dataclass
class TrialReport:
    config: TrialConfig
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def failed_checks(self) -> list:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "family": cfg.family.to_dict(),
            "label": cfg.family.label,
            "control": cfg.family.control,
            "side": int(cfg.side),
            "trials": int(cfg.trials),
            "seed": int(cfg.seed),
            "passed": self.passed,
            "failed_checks": self.failed_checks,
            "checks": {name: c.to_dict() for name, c in self.checks.items()},
        }


def trial_rng(cfg: TrialConfig, index: int):
    key = zlib.crc32(cfg.family.label.encode())
    return np.random.default_rng([int(cfg.seed), key, int(cfg.side), int(index)])


class _Draws(NamedTuple):
    M: np.ndarray
    a_v: np.ndarray
    a_s: np.ndarray
    p: np.ndarray
    q_frac: np.ndarray
    G: np.ndarray
    s_scale: np.ndarray
    line: np.ndarray
    fd: np.ndarray
    pair_G: list
    pair_C: list
    pair_a: np.ndarray


def _draw_trial(cfg: TrialConfig, index: int):
    """Raw random numbers of one trial, in the order the samplers consume them."""
    rng = trial_rng(cfg, index)
    d, n = cfg.side, cone_dim(cfg.side)
    M = rng.standard_normal((d, d))
    a_v = rng.uniform(*LOG_V)
    a_s = rng.uniform(*LOG_S)
    p = rng.standard_normal()
    q_frac = rng.uniform(-1.0, 1.0)
    G = rng.standard_normal((d, d))
    s_scale = 1.0 - rng.uniform(0.0, 1.0)
    line = rng.standard_normal(n)
    fd = rng.standard_normal(n)
    side = MONOTONICITY_SIDES[index % len(MONOTONICITY_SIDES)]
    pG = rng.standard_normal((side, side))
    pC = rng.standard_normal((side, side))
    pa = rng.uniform(*LOG_C)
    return (M, a_v, a_s, p, q_frac, G, s_scale, line, fd, pG, pC, pa)


def _draw_batch(cfg, indices) -> _Draws:
    rows = [_draw_trial(cfg, i) for i in indices]
    cols = list(zip(*rows))
    stacked = [np.array(c) for c in cols[:9]]
    return _Draws(*stacked, list(cols[9]), list(cols[10]), np.array(cols[11]))


class TrialSample(NamedTuple):
    point: ConePoint
    compat_direction: Direction
    line_direction: Direction
    fd_direction: Direction
    pair: tuple


def _complete(cfg: TrialConfig, draws: _Draws):
    point = _points_from_draws(cfg.family, draws.M, draws.a_v, draws.a_s)
    S = _scaled_symmetric(draws.G, draws.s_scale)
    compat = _directions_from_draws(point, draws.p, draws.q_frac, S)
    return point, compat, Direction.from_packed(draws.line), Direction.from_packed(draws.fd)


def replay_trial(cfg: TrialConfig, index: int) -> TrialSample:
    """Regenerate the random inputs of trial ``index``."""
    draws = _draw_batch(cfg, [index])
    point, compat, line, fd_dir = _complete(cfg, draws)
    pair = _pair_from_draws(draws.pair_G[0], draws.pair_C[0], draws.pair_a[0])
    return TrialSample(point[0], compat[0], line[0], fd_dir[0], pair)


_RECOVERABLE = (EpiconeError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _describe(exc):
    return f"{type(exc).__name__}: {exc}"


class _Outcomes:
    """Per-check outcome arrays for a chunk of trials."""

    def __init__(self, indices):
        self.indices = list(indices)
        self.rows = {}  # name -> list of (trial, margin, scale, slack, extra)
        self.errors = {}  # name -> list of (trial, message)

    def emit(self, name, sel, margin, scale, slack, extra=None):
        margin = np.broadcast_to(np.asarray(margin, float), (len(sel),))
        scale = np.broadcast_to(np.asarray(scale, float), (len(sel),))
        slack = np.broadcast_to(np.asarray(slack, float), (len(sel),))
        rows = self.rows.setdefault(name, [])
        for k, j in enumerate(sel):
            ext = {key: val[k] for key, val in (extra or {}).items()}
            rows.append((self.indices[j], float(margin[k]), float(scale[k]), float(slack[k]), ext))

    def fail(self, name, sel, message):
        errs = self.errors.setdefault(name, [])
        for j in sel:
            errs.append((self.indices[j], message))


def _point_checks(cfg, point, compat, line, fd_dir, sel, compat_ok, out: _Outcomes):
    """Evaluate the selected point checks on the trials ``sel`` (all interior).

    Compatibility-type checks only use the trials flagged in ``compat_ok``.
    """
    f, tol, chosen = cfg.family, cfg.tolerances, set(cfg.checks)
    oracle = BarrierOracle(f, point, tol=tol.interior)
    nu = oracle.nu
    x = point.packed()
    if "log_homogeneity" in chosen:
        errs = _homogeneity_errors(f, point, cfg.thetas, oracle.value, nu, tol.interior)
        worst = errs.argmax(axis=0)
        out.emit("log_homogeneity", sel, -errs.max(axis=0), 1.0, tol.log_homogeneity,
                 {"theta": [cfg.thetas[k] for k in worst]})
    if "barrier_parameter" in chosen:
        err = np.abs(_barrier_parameter(oracle) - nu) / nu
        out.emit("barrier_parameter", sel, -err, 1.0, tol.barrier_parameter)
    if "euler_gradient" in chosen:
        err = np.abs(np.sum(oracle.gradient * x, axis=-1) + nu)
        out.emit("euler_gradient", sel, -err, 1.0, tol.euler_gradient)
    if "euler_hessian" in chosen:
        g = oracle.gradient
        err = np.linalg.norm(oracle.hess_apply_packed(x) + g, axis=-1) / np.linalg.norm(g, axis=-1)
        out.emit("euler_hessian", sel, -err, 1.0, tol.euler_hessian)
    if "concavity" in chosen or "compatibility" in chosen:
        d2, d3 = oracle.zeta_d2_d3(compat)
        d2, d3, csel = d2[compat_ok], d3[compat_ok], sel[compat_ok]
        if "concavity" in chosen:
            scale = 1.0 + np.abs(d2)
            out.emit("concavity", csel, -d2, scale, tol.concavity * scale)
        if "compatibility" in chosen:
            scale = 1.0 + np.abs(3.0 * d2) + np.abs(d3)
            out.emit("compatibility", csel, -3.0 * d2 - d3, scale, tol.compatibility * scale)
    if "self_concordance" in chosen:
        unit = Direction.from_packed(_unit(oracle, line.packed()))
        d2, d3 = oracle.line_derivatives(unit)
        lhs, rhs = np.abs(d3), 2.0 * np.maximum(d2, 0.0) ** 1.5
        scale = 1.0 + lhs + rhs
        out.emit("self_concordance", sel, rhs - lhs, scale, tol.self_concordance * scale)
    if "fd_gradient" in chosen:
        out.emit("fd_gradient", sel, -fd_gradient_error(f, point), 1.0, tol.fd_gradient)
    if "fd_hessian" in chosen:
        out.emit("fd_hessian", sel, -fd_hessian_error(f, point, fd_dir), 1.0, tol.fd_hessian)
    if "fd_d3" in chosen:
        out.emit("fd_d3", sel, -fd_d3_error(f, point, fd_dir), 1.0, tol.fd_d3)


def _monotonicity_checks(cfg, draws: _Draws, out: _Outcomes):
    tol = cfg.tolerances.matrix_monotonicity
    sides = np.array([G.shape[0] for G in draws.pair_G])
    for side in np.unique(sides):
        sel = np.flatnonzero(sides == side)
        A, B = _pair_from_draws(
            np.stack([draws.pair_G[j] for j in sel]),
            np.stack([draws.pair_C[j] for j in sel]),
            draws.pair_a[sel],
        )
        lam, norm = monotonicity_margin(cfg.family, A, B)
        out.emit("matrix_monotonicity", sel, lam, 1.0 + norm, tol * (1.0 + norm))


def _evaluate(cfg: TrialConfig, indices) -> _Outcomes:
    """Outcomes of every selected check on the trials ``indices``."""
    out = _Outcomes(indices)
    draws = _draw_batch(cfg, indices)
    chosen = [c for c in POINT_CHECKS if c in cfg.checks]
    if chosen:
        point, compat, line, fd_dir = _complete(cfg, draws)
        mask = _InteriorState(cfg.family, point, cfg.tolerances.interior).mask
        sel = np.flatnonzero(mask)
        bad = np.flatnonzero(~mask)
        for name in chosen:
            out.fail(name, bad, "NotInterior: sampled point failed the interior test")
        if sel.size:
            ok = np.ones(sel.size, dtype=bool)
            if "concavity" in chosen or "compatibility" in chosen:
                ok = direction_ok(point[sel], compat[sel])
                for name in ("concavity", "compatibility"):
                    if name in chosen:
                        out.fail(name, sel[~ok], "InvalidDirection: sampled direction violates the constraints")
            _point_checks(cfg, point[sel], compat[sel], line[sel], fd_dir[sel], sel, ok, out)
    if "matrix_monotonicity" in cfg.checks:
        _monotonicity_checks(cfg, draws, out)
    return out


def _evaluate_single_checks(cfg: TrialConfig, index: int) -> _Outcomes:
    """Per-check evaluation of one trial, so one failing check spares the others."""
    out = _Outcomes([index])
    for name in cfg.checks:
        sub = TrialConfig(cfg.family, cfg.side, 1, cfg.seed, cfg.tolerances, (name,), cfg.thetas)
        try:
            part = _evaluate(sub, [index])
        except _RECOVERABLE as exc:
            out.fail(name, [0], _describe(exc))
            continue
        for key, rows in part.rows.items():
            out.rows.setdefault(key, []).extend(rows)
        for key, errs in part.errors.items():
            out.errors.setdefault(key, []).extend(errs)
    return out


def _run_indices(cfg: TrialConfig, indices: Sequence[int], chunk: int = CHUNK) -> list:
    parts = []
    for start in range(0, len(indices), chunk):
        block = list(indices[start:start + chunk])
        try:
            parts.append(_evaluate(cfg, block))
        except _RECOVERABLE:
            parts.extend(_evaluate_single_checks(cfg, i) for i in block)
    return parts


def witness_record(cfg: TrialConfig, name: str, trial: int, extra: Optional[dict] = None) -> dict:
    """Reproduction record of one trial of one check, rebuilt from the seed."""
    sample = replay_trial(cfg, trial)
    rec = {"trial": int(trial), "seed": int(cfg.seed)}
    if name == "matrix_monotonicity":
        A, B = sample.pair
        rec.update(A_packed=svec(A).tolist(), B_packed=svec(B).tolist())
    else:
        rec["point"] = sample.point.to_dict()
        if name in ("concavity", "compatibility"):
            rec["direction"] = sample.compat_direction.to_dict()
        elif name == "self_concordance":
            rec["direction"] = sample.line_direction.to_dict()
        elif name in ("fd_hessian", "fd_d3"):
            rec["direction"] = sample.fd_direction.to_dict()
    for key, val in (extra or {}).items():
        rec[key] = val.item() if isinstance(val, np.generic) else val
    return rec


def run_suite(cfg: TrialConfig, workers: int = 1, chunk: int = CHUNK) -> TrialReport:
    """Run every selected check over ``cfg.trials`` independent trials.

    Check errors are recorded as failures; the suite never aborts early.
    ``workers > 1`` spreads chunks of trials over processes without
    changing the report.
    """
    if not isinstance(cfg, TrialConfig):
        raise ConfigError("run_suite expects a TrialConfig")
    if chunk < 1:
        raise ConfigError("chunk must be >= 1")
    indices = list(range(cfg.trials))
    if workers > 1 and cfg.trials > chunk:
        blocks = [indices[k:k + chunk] for k in range(0, len(indices), chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = [p for ps in pool.map(_run_indices, [cfg] * len(blocks), blocks) for p in ps]
    else:
        parts = _run_indices(cfg, indices, chunk)

    per_check = {name: [] for name in cfg.checks}
    for part in parts:
        for name, rows in part.rows.items():
            per_check[name].extend((t, r) for t, *r in rows)
        for name, errs in part.errors.items():
            per_check[name].extend((t, msg) for t, msg in errs)

    results = {}
    for name in CHECKS:
        if name not in cfg.checks:
            continue
        res = CheckResult(name, getattr(cfg.tolerances, name))
        for trial, payload in sorted(per_check[name], key=lambda item: item[0]):
            if isinstance(payload, str):
                res.record_error(trial, payload)
            else:
                margin, scale, slack, extra = payload
                res.record(trial, margin, scale, slack, extra)
        if res.witness_trial is not None:
            res.witness = witness_record(cfg, name, res.witness_trial, res.witness_extra)
        results[name] = res
    return TrialReport(cfg, results)


def default_configs(
    families: Sequence[FunctionFamily] = ADMISSIBLE_DEFAULTS,
    sides: Sequence[int] = range(1, 7),
    trials: int = 1000,
    seed: int = DEFAULT_SEED,
    tolerances: Optional[Tolerances] = None,
    include_control: bool = False,
    checks=CHECKS,
) -> list:
    tolerances = tolerances or Tolerances()
    fams = list(families) + ([NEGATIVE_CONTROL] if include_control else [])
    return [
        TrialConfig(fam, int(d), trials, seed, tolerances, tuple(checks))
        for fam in fams
        for d in sides
    ]


def run_campaign(configs: Sequence[TrialConfig], workers: int = 1) -> dict:
    """Run several configurations and summarize them as one JSON-ready dict.

    ``passed`` covers admissible families only; negative controls are
    reported under ``controls`` with the checks they tripped.
    """
    reports = [run_suite(cfg, workers=workers) for cfg in configs]
    regular = [r for r in reports if not r.config.family.control]
    controls = [r for r in reports if r.config.family.control]
    return {
        "passed": all(r.passed for r in regular),
        "configurations": [r.to_dict() for r in reports],
        "controls": [
            {
                "label": r.config.family.label,
                "side": int(r.config.side),
                "flagged": r.failed_checks,
                "detected": "matrix_monotonicity" in r.failed_checks,
            }
            for r in controls
        ],
    }
