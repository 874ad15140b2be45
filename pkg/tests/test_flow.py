import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp

from nilstab.actions import Bump, Y1, Z, fields_from_family, identity_family, linear_family, perturb_mixed
from nilstab.flow import (GPath, act, flow_const, generator_path, group_development, integrate,
                          left_path, lift_many, lift_path)
from nilstab.heis import IDENTITY, alg_exp, mul
from nilstab.nilmanifold import MPoint, NilPoint, canonicalize, lift, quotient_dist
from tests.conftest import C, LAM, mixed_f2

SQRT2 = np.sqrt(2.0)


def const_field(v):
    v = np.asarray([*v, 0.0], dtype=float)
    return lambda y, z: v


def test_flow_const_examples():
    p = NilPoint(0.3, 0.6, 0.9)
    assert_allclose(flow_const((1, 2, 3), p, 0.0), p)
    t, v2, v3 = 0.7, 0.4, -0.3
    y1, y2, y3 = p
    expected = (y1 + t, y2 + v2 * t, y3 + v3 * t + v2 * y1 * t + 0.5 * v2 * t * t)
    assert quotient_dist(flow_const((1, v2, v3), p, t), canonicalize(expected)) < 1e-12
    q = flow_const((1, SQRT2, 0), (0, 0, 0), 1.0)
    assert quotient_dist(q, canonicalize((1, SQRT2, SQRT2 / 2))) < 1e-12
    rk = integrate(const_field((1, SQRT2, 0)), MPoint(NilPoint(0, 0, 0), 0.0), 1.0, 1e-3)
    assert quotient_dist(rk.end.base, q) < 1e-9


def test_flow_const_is_one_parameter_group(rng):
    for v, p, (s, t) in zip(rng.normal(size=(20, 3)), rng.random((20, 3)), rng.uniform(-3, 3, (20, 2))):
        a = flow_const(v, p, s + t)
        b = flow_const(v, flow_const(v, p, s), t)
        assert quotient_dist(a, b) < 1e-10


def test_integrate_unit_period():
    p = MPoint(NilPoint(0.25, 0.0, 0.75), 0.1)
    traj = integrate(Y1, p, 1.0)
    assert quotient_dist(traj.end.base, p.base) < 1e-12
    assert traj.end.z == p.z
    # off y2 = 0 the Y1 orbit is sheared by y2 each period: (y1 + 1, y2, y3) ~ (y1, y2, y3 - y2)
    q = MPoint(NilPoint(0.25, 0.5, 0.75), 0.1)
    assert quotient_dist(integrate(Y1, q, 1.0).end.base, (0.25, 0.5, 0.25)) < 1e-12
    assert quotient_dist(integrate(Y1, q, 2.0).end.base, q.base) < 1e-12


def test_integrate_matches_closed_form():
    v = (1.0, SQRT2, 0.3)
    p = MPoint(NilPoint(0.1, 0.2, 0.3), 0.0)
    traj = integrate(const_field(v), p, 10.0, 1e-3, sample_every=100)
    err = max(quotient_dist(row[:3], flow_const(v, p.base, t)) for t, row in zip(traj.t, traj.points))
    assert err < 1e-6


def test_integrate_mixed_z_monotone():
    X2 = perturb_mixed(LAM, C).field(1)
    traj = integrate(X2, MPoint(NilPoint(0.1, 0.1, 0.1), 0.0), 2.0, 1e-3, sample_every=10)
    assert np.all(np.diff(traj.points[:, 3]) < 0)
    # dz/dt = -(c/lam) e^{lam z}  =>  e^{-lam z} = 1 + c t
    assert_allclose(traj.points[:, 3], -np.log(1 + C * traj.t) / LAM, atol=1e-10)


def test_integrate_strip_exit():
    traj = integrate(Z, MPoint(NilPoint(0, 0, 0), 0.9), 1.0, 1e-3)
    assert traj.exited
    assert traj.exit_time == pytest.approx(0.1, abs=1e-3)
    assert np.all(np.abs(traj.points[:, 3]) < 1.0)


def test_act_identity_action_is_left_translation(rng):
    X = fields_from_family(identity_family())
    for g, base in zip(rng.uniform(-1, 1, (5, 3)), rng.random((5, 3))):
        q = act(X, g, MPoint(NilPoint(*base), 0.2))
        assert quotient_dist(q.base, canonicalize(mul(g, base))) < 1e-9
        assert q.z == 0.2


def test_generator_path_shapes():
    g0 = (0.3, 0.7, -0.2)
    for i in (1, 2, 3):
        gp = generator_path(g0, i, -1)
        assert_allclose(gp.point(0.0), g0)
        # velocity is the derivative of the point
        t, h = 0.4, 1e-6
        assert_allclose((gp.point(t + h) - gp.point(t - h)) / (2 * h), gp.velocity(t), atol=1e-8)
        # closes up in G/H
        assert quotient_dist(canonicalize(gp.point(1.0)), canonicalize(g0)) < 1e-12
    with pytest.raises(ValueError):
        generator_path(g0, 4)
    lp = left_path((0.5, -1.0, 2.0), g0)
    assert isinstance(lp, GPath) and lp.start == g0


def test_lift_horizontal_keeps_z():
    X = fields_from_family(linear_family([[0.3, 1.0], [-1.0, 0.2]]))
    for i in (1, 2, 3):
        traj = lift_path(X, generator_path(IDENTITY, i), MPoint(NilPoint(0, 0, 0), 0.3))
        assert np.all(traj.points[:, 3] == 0.3)
    # gamma_3 closes exactly
    assert abs(traj.end.z - 0.3) < 1e-10 and quotient_dist(traj.end.base, (0, 0, 0)) < 1e-10


def test_lift_thm1_gamma2_matches_scalar_ode(thm1_fields):
    psi = Bump(0.05, 0.2)
    traj = lift_path(thm1_fields, generator_path(IDENTITY, 2), MPoint(NilPoint(0, 0, 0), 0.0))
    ref = solve_ivp(lambda t, z: psi(z), (0, 1), [0.0], rtol=1e-12, atol=1e-14).y[0, -1]
    assert traj.end.z > 0
    assert traj.end.z == pytest.approx(ref, abs=1e-9)


def test_lift_projection_tracks_path(thm2_fields):
    g0 = (0.2, 0.4, 0.6)
    gp = generator_path(g0, 2)
    traj = lift_path(thm2_fields, gp, MPoint(canonicalize(g0), 0.1))
    err = max(quotient_dist(row[:3], canonicalize(gp.point(t))) for t, row in zip(traj.t, traj.points))
    assert err < 1e-6


def test_lift_checks_start(thm2_fields):
    gp = generator_path(IDENTITY, 1)
    with pytest.raises(ValueError):
        lift_path(thm2_fields, gp, MPoint(NilPoint(0, 0, 0), 0.6))
    with pytest.raises(ValueError):
        lift_path(thm2_fields, gp, MPoint(NilPoint(0.5, 0, 0), 0.0))


def test_lift_many_reports_exits():
    X = perturb_mixed(1.0, 0.9)      # gamma_2 lift drives z down fast
    _, exit_times, _ = lift_many(X, generator_path(IDENTITY, 2), [0.0, 0.4], 1e-3)
    assert not np.isnan(exit_times[0]) and 0 < exit_times[0] < 1


def test_lift_convergence_order():
    X = perturb_mixed(1.0, 0.3)
    z0 = np.array([0.2])
    exact = np.log(np.exp(0.2) - 0.3)
    errs = [abs(lift_many(X, generator_path(IDENTITY, 2), z0, dt)[0][0, 3] - exact) for dt in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5), orders


def test_development_of_y1_flow():
    X = fields_from_family(identity_family())
    traj = integrate(Y1, MPoint(NilPoint(0.1, 0.2, 0.3), 0.0), 0.7, 1e-3)
    assert_allclose(group_development(X, traj), alg_exp((0.7, 0, 0)), atol=1e-12)


@pytest.mark.parametrize("z", [-0.2, 0.0, 0.15])
def test_development_of_mixed_gamma3(thm2_fields, z):
    p = MPoint(NilPoint(0.3, 0.1, 0.5), z)
    traj = lift_path(thm2_fields, generator_path(lift(p.base), 3), p)
    expected = (C, 0.0, np.exp(-LAM * z))
    assert_allclose(group_development(thm2_fields, traj), expected, atol=1e-9)
    assert_allclose(traj.development[-1], expected, atol=1e-12)
    # the developed element carries the start to the end
    q = act(thm2_fields, group_development(thm2_fields, traj), p)
    assert quotient_dist(q.base, traj.end.base) < 1e-5 and abs(q.z - traj.end.z) < 1e-5


def test_development_cocycle(thm2_fields):
    p = MPoint(NilPoint(0.3, 0.1, 0.5), 0.1)
    t1 = lift_path(thm2_fields, generator_path(lift(p.base), 1), p)
    e = t1.end
    t2 = lift_path(thm2_fields, generator_path(lift(e.base), 2), e)
    xi1, xi2 = group_development(thm2_fields, t1), group_development(thm2_fields, t2)
    both = group_development(thm2_fields, t1.then(t2))
    assert_allclose(both, mul(xi2, xi1), atol=1e-6)
    assert t2.end.z == pytest.approx(float(mixed_f2(0.1)), abs=1e-9)


def test_trajectory_csv(tmp_path):
    traj = integrate(Y1, MPoint(NilPoint(0, 0, 0), 0.0), 0.01, 1e-3)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "y1", "y2", "y3", "z"]
    assert len(rows) == len(traj.t) + 1
    assert_allclose(np.array(rows[1:], dtype=float), np.column_stack([traj.t, traj.points]))
