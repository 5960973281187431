import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epicone.cone_barrier import (
    BarrierOracle,
    ConePoint,
    Direction,
    adapted_model,
    barrier_d2_dir,
    barrier_d3_dir,
    barrier_eval,
    barrier_grad,
    barrier_hess_apply,
    barrier_hess_dense,
    barrier_value,
    cone_dim,
    in_interior,
    xi_of,
    zeta,
    zeta_d2,
    zeta_d3,
)
from epicone.errors import DomainError, NotInterior
from epicone.matrix_calculus import phi_value
from epicone.scb_verifier import TrialConfig, replay_trial, sample_direction, sample_interior_point
from epicone.spectral_functions import ADMISSIBLE_DEFAULTS, FunctionFamily

NEGLOG = FunctionFamily("neglog")
NEGENT = FunctionFamily("negentropy")
QUAD = FunctionFamily("power", 2.0)
UNIT = ConePoint(1.0, 1.0, [[1.0]])


def sampled(f, d, count, seed=0):
    rng = np.random.default_rng(seed)
    return [sample_interior_point(f, d, rng) for _ in range(count)]


def fd_line(fn, x, p, h=1e-4):
    return (fn(x - 2 * h * p) - 8 * fn(x - h * p) + 8 * fn(x + h * p) - fn(x + 2 * h * p)) / (12 * h)


# points and membership


def test_point_round_trips():
    pt = ConePoint(0.5, 2.0, np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert pt.dim == cone_dim(2) == 5
    back = ConePoint.from_packed(pt.packed())
    np.testing.assert_allclose(back.W, pt.W, rtol=1e-15)
    again = ConePoint.from_dict(pt.to_dict())
    np.testing.assert_array_equal(again.packed(), pt.packed())
    with pytest.raises(ValueError):
        ConePoint.from_dict({"u": 1.0, "v": 1.0})


def test_zeta_examples():
    for d in (1, 3):
        assert zeta(NEGLOG, ConePoint(1.0, 1.0, np.eye(d))) == 1.0
        assert zeta(NEGENT, ConePoint(0.0, 2.0, 2 * np.eye(d))) == 0.0
    assert zeta(QUAD, ConePoint(3.0, 1.0, np.eye(2))) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        zeta(NEGLOG, ConePoint(1.0, 0.0, np.eye(2)))


def test_in_interior_examples(family):
    assert in_interior(NEGLOG, ConePoint(1.0, 1.0, np.eye(2)), 1e-12)
    assert not in_interior(NEGLOG, ConePoint(-1.0, 1.0, np.eye(2)), 1e-12)
    assert not in_interior(family, ConePoint(5.0, 0.0, np.eye(2)))
    assert not in_interior(family, ConePoint(5.0, 1.0, np.diag([1.0, -1.0])))
    assert not in_interior(family, ConePoint(math.nan, 1.0, np.eye(2)))
    assert not in_interior(NEGENT, ConePoint(0.0, 2.0, 2 * np.eye(3)))


def test_in_interior_batched():
    pts = ConePoint.stack([ConePoint(1.0, 1.0, np.eye(2)), ConePoint(-1.0, 1.0, np.eye(2))])
    np.testing.assert_array_equal(in_interior(NEGLOG, pts), [True, False])


def test_oracle_rejects_exterior():
    with pytest.raises(NotInterior):
        BarrierOracle(NEGLOG, ConePoint(-1.0, 1.0, np.eye(2)))


# value, gradient, Hessian


def test_barrier_value_examples():
    assert barrier_value(NEGLOG, UNIT) == 0.0
    assert barrier_value(NEGLOG, ConePoint(2.0, 2.0, [[2.0]])) == pytest.approx(-3 * math.log(2), abs=1e-15)
    assert barrier_value(NEGENT, ConePoint(5.0, 1.0, np.eye(3))) == pytest.approx(-math.log(5), abs=1e-15)


def test_gradient_and_hessian_at_unit_point():
    g = barrier_grad(NEGLOG, UNIT)
    np.testing.assert_allclose(g, [-1.0, 0.0, -2.0], atol=1e-15)
    assert g @ UNIT.packed() == pytest.approx(-3.0)
    H = barrier_hess_dense(NEGLOG, UNIT)
    np.testing.assert_allclose(H, [[1, -1, 1], [-1, 3, -2], [1, -2, 3]], atol=1e-14)
    assert barrier_hess_apply(NEGLOG, UNIT, Direction(1.0, 0.0, [[0.0]]))[0] == pytest.approx(1.0)
    # finite differences of the value confirm the hand-derived gradient
    for k in range(3):
        e = np.eye(3)[k]
        fd = fd_line(lambda x: barrier_value(NEGLOG, ConePoint.from_packed(x)), UNIT.packed(), e)
        assert fd == pytest.approx(g[k], abs=1e-10)


@pytest.mark.parametrize("d", [1, 2, 4])
def test_gradient_and_hessian_against_fd(family, d):
    for pt in sampled(family, d, 3, seed=d):
        x = pt.packed()
        oracle = BarrierOracle(family, pt)
        for p in np.random.default_rng(d).standard_normal((3, x.size)):
            p /= math.sqrt(p @ oracle.hess_apply_packed(p))
            fd = fd_line(lambda y: barrier_value(family, ConePoint.from_packed(y)), x, p, 1e-3)
            exact = oracle.gradient @ p
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))
            hfd = fd_line(lambda y: barrier_grad(family, ConePoint.from_packed(y)), x, p, 1e-3)
            hp = oracle.hess_apply_packed(p)
            resid = np.linalg.solve(oracle.hessian, hfd - hp)
            assert math.sqrt(resid @ (hfd - hp)) <= 1e-5


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 6])
def test_euler_identities(family, d):
    pts = ConePoint.stack(sampled(family, d, 100, seed=10 + d))
    oracle = BarrierOracle(family, pts)
    g, x = oracle.gradient, pts.packed()
    np.testing.assert_allclose(np.sum(g * x, axis=-1), -(2 + d), rtol=1e-8)
    Hx = oracle.hess_apply_packed(x)
    err = np.linalg.norm(Hx + g, axis=-1) / np.linalg.norm(g, axis=-1)
    assert np.max(err) <= 1e-8


def test_dense_hessian_properties(family):
    pt = sampled(family, 3, 1, seed=4)[0]
    oracle = BarrierOracle(family, pt)
    H = barrier_hess_dense(family, pt)
    P = np.random.default_rng(5).standard_normal((50, pt.dim))
    actions = oracle.hess_apply_packed(P)
    assert np.max(np.abs(P @ H - actions)) <= 1e-12 * np.max(np.abs(actions))
    raw = np.moveaxis(oracle.hess_apply_packed(np.eye(pt.dim)), 0, -1)
    assert np.max(np.abs(raw - raw.T)) <= 1e-10 * np.linalg.norm(H, 2)
    assert np.linalg.eigvalsh(H)[0] > 0
    assert np.all(np.einsum("ij,ij->i", P, actions) > 0)


def test_barrier_eval_bundle():
    ev = barrier_eval(NEGLOG, UNIT, hessian=True)
    assert ev.value == 0.0 and ev.hessian.shape == (3, 3)
    assert barrier_eval(NEGLOG, UNIT).hessian is None


def test_degenerate_linear_family():
    lin = FunctionFamily("power", 1.0)
    pt = ConePoint(4.0, 1.5, np.diag([1.0, 2.0]))
    direction = Direction(0.3, 0.2, np.array([[0.1, 0.4], [0.4, -0.2]]))
    assert zeta(lin, pt) == pytest.approx(1.0)
    assert zeta_d2(lin, pt, direction) == 0.0
    assert zeta_d3(lin, pt, direction) == 0.0
    assert math.isfinite(barrier_d3_dir(lin, pt, direction))


# directional derivatives of zeta


def test_xi_examples():
    W = np.array([[2.0, 0.5], [0.5, 1.0]])
    R = np.array([[0.3, -0.1], [-0.1, 0.7]])
    np.testing.assert_array_equal(xi_of(ConePoint(0.0, 1.0, W), Direction(0.0, 0.0, R)), R)
    pt = ConePoint(1.0, 2.0, W)
    np.testing.assert_array_equal(xi_of(pt, Direction.radial(pt)), np.zeros((2, 2)))
    np.testing.assert_array_equal(xi_of(ConePoint(1.0, 1.0, np.eye(2)), Direction(0.0, 1.0, np.zeros((2, 2)))), -np.eye(2))


def test_zeta_derivative_examples(family):
    p = Direction(0.0, 0.0, [[0.5]])
    assert zeta_d2(NEGLOG, UNIT, p) == pytest.approx(-0.25)
    assert zeta_d3(NEGLOG, UNIT, p) == pytest.approx(0.25)
    pt = sampled(family, 3, 1, seed=2)[0]
    assert abs(zeta_d2(family, pt, Direction.radial(pt))) <= 1e-12 * (1 + abs(pt.u))


@pytest.mark.parametrize("d", [1, 3])
def test_zeta_derivatives_against_fd(family, d):
    for pt in sampled(family, d, 3, seed=30 + d):
        oracle = BarrierOracle(family, pt)
        R = np.random.default_rng(d).standard_normal((d, d))
        direction = Direction(0.0, 0.2 * pt.v, 0.05 * np.linalg.eigvalsh(pt.W)[0] * (R + R.T))
        x, P = pt.packed(), direction.packed()

        def line(s):
            return zeta(family, ConePoint.from_packed(x + s * P))

        h = 0.05
        d2 = (-line(2 * h) + 16 * line(h) - 30 * line(0) + 16 * line(-h) - line(-2 * h)) / (12 * h * h)
        d3 = (line(-3 * h) - 8 * line(-2 * h) + 13 * line(-h) - 13 * line(h) + 8 * line(2 * h) - line(3 * h)) / (8 * h**3)
        scale = 1 + abs(pt.u)
        assert oracle.zeta_d2(direction) == pytest.approx(d2, rel=1e-5, abs=1e-9 * scale)
        assert oracle.zeta_d3(direction) == pytest.approx(d3, rel=1e-3, abs=1e-7 * scale)


# barrier line derivatives


def test_radial_line_derivatives(family):
    for d in (1, 2, 5):
        pt = sampled(family, d, 1, seed=d)[0]
        radial = Direction.radial(pt)
        assert barrier_d2_dir(family, pt, radial) == pytest.approx(2 + d, rel=1e-10)
        # Gamma(x + t x) = Gamma(x) - (2+d) log(1+t): third derivative -2(2+d)
        assert barrier_d3_dir(family, pt, radial) == pytest.approx(-2 * (2 + d), rel=1e-10)


def test_d3_against_fd_neglog_d3():
    pt = sampled(NEGLOG, 3, 1, seed=8)[0]
    oracle = BarrierOracle(NEGLOG, pt)
    P = sample_direction(3, np.random.default_rng(8)).packed()
    P /= math.sqrt(P @ oracle.hess_apply_packed(P))
    x = pt.packed()

    def line(s):
        return barrier_value(NEGLOG, ConePoint.from_packed(x + s * P))

    h = 2e-2
    fd = (line(-3 * h) - 8 * line(-2 * h) + 13 * line(-h) - 13 * line(h) + 8 * line(2 * h) - line(3 * h)) / (8 * h**3)
    exact = barrier_d3_dir(NEGLOG, pt, Direction.from_packed(P))
    assert abs(fd - exact) <= 1e-4 * max(1.0, abs(exact))
    assert barrier_d2_dir(NEGLOG, pt, Direction.from_packed(P)) == pytest.approx(1.0)


# homogeneity


@given(theta=st.floats(0.1, 10.0), seed=st.integers(0, 1000), d=st.integers(1, 5))
def test_homogeneity(theta, seed, d):
    for fam in ADMISSIBLE_DEFAULTS:
        pt = sample_interior_point(fam, d, np.random.default_rng(seed))
        z, zt = zeta(fam, pt), zeta(fam, pt.scaled(theta))
        assert abs(zt - theta * z) <= 1e-12 * theta * (abs(z) + abs(pt.u))
        gap = barrier_value(fam, pt.scaled(theta)) + (2 + d) * math.log(theta) - barrier_value(fam, pt)
        assert abs(gap) <= 1e-10


# batching and the adapted basis


def test_batched_oracle_matches_single(family):
    pts = sampled(family, 3, 4, seed=21)
    dirs = [sample_direction(3, np.random.default_rng(k)) for k in range(4)]
    batch = BarrierOracle(family, ConePoint.stack(pts))
    bdir = Direction(np.array([q.p for q in dirs]), np.array([q.q for q in dirs]), np.stack([q.R for q in dirs]))
    d2b, d3b = batch.line_derivatives(bdir)
    for k, (pt, q) in enumerate(zip(pts, dirs)):
        single = BarrierOracle(family, pt)
        assert batch.value[k] == pytest.approx(single.value, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(batch.gradient[k], single.gradient, rtol=1e-12, atol=1e-12)
        d2, d3 = single.line_derivatives(q)
        assert d2b[k] == pytest.approx(d2, rel=1e-12)
        assert d3b[k] == pytest.approx(d3, rel=1e-11)


@pytest.mark.parametrize("d", [1, 2, 4, 6])
def test_adapted_hessian_closed_form_matches_actions(family, d):
    cfg = TrialConfig(family, d, 20)
    pts = ConePoint.stack([replay_trial(cfg, i).point for i in range(20)])
    oracle = BarrierOracle(family, pts)
    closed = oracle.adapted_hessian
    actions = oracle.adapted_hessian_from_actions()
    scale = np.max(np.abs(closed), axis=(-2, -1))
    assert np.max(np.max(np.abs(closed - actions), axis=(-2, -1)) / scale) <= 1e-10
    np.testing.assert_allclose(oracle.adapted_gradient, oracle.in_adapted_basis(oracle.gradient), atol=1e-9)
    # T is a change of basis: H^-1 = T Ht^-1 T^T
    k = 0
    T = oracle.adapted_basis[:, k]
    Hinv = T.T @ np.linalg.solve(closed[k], T)
    np.testing.assert_allclose(Hinv @ oracle.hessian[k], np.eye(cone_dim(d)), atol=1e-7)


@pytest.mark.parametrize("d", [1, 3, 5])
def test_adapted_model_matches_oracle(family, d):
    for pt in sampled(family, d, 3, seed=50 + d):
        oracle = BarrierOracle(family, pt)
        model = adapted_model(family, pt.packed())
        assert model.zeta == pytest.approx(oracle.zeta, rel=1e-12)
        np.testing.assert_allclose(model.gradient, oracle.adapted_gradient)
        # eigenvector signs may differ; compare basis-free H^-1
        a = oracle.adapted_basis.T @ np.linalg.solve(oracle.adapted_hessian, oracle.adapted_basis)
        b = model.basis.T @ np.linalg.solve(model.hessian, model.basis)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.max(np.abs(a)))


def test_adapted_model_rejects_exterior():
    with pytest.raises(NotInterior):
        adapted_model(NEGLOG, ConePoint(-1.0, 1.0, np.eye(2)).packed())
    with pytest.raises(NotInterior):
        adapted_model(NEGLOG, np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        adapted_model(NEGLOG, np.zeros((2, 3)))
