import numpy as np
import pytest

from bregman_control.bench import build_case
from bregman_control.fem import FeFunction, FeSpace, Mesh, interpolate
from bregman_control.problem import BoxConstraints, ControlProblem, constant


@pytest.fixture(scope="module")
def ex2():
    return build_case("ex2", 129)


def test_adjoint_identity(ex2):
    P, _ = ex2
    rng = np.random.default_rng(3)
    u = rng.standard_normal(P.space.weights.shape)
    v = rng.standard_normal(P.space.m)
    lhs = float(P.apply_S(u) @ (P.M @ v))
    rhs = P.space.quad_inner(u, P.apply_S_adjoint(v))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_state_of_exact_control(ex2):
    P, case = ex2
    y = P.solve_state(interpolate(case.u_dagger, P.space))
    yd = interpolate(case.y_dagger, P.space)
    assert np.max(np.abs(y.coeffs - yd.coeffs)) < 1e-3


def test_ex3_adjoint_recovers_closed_form():
    P, case = build_case("ex3", 513)
    y = interpolate(case.y_dagger, P.space)
    p = P.solve_adjoint(y)
    ref = interpolate(case.computation_adjoint, P.space)
    assert np.max(np.abs(p.coeffs - ref.coeffs)) < 1e-4


def test_bounds_validation():
    space = FeSpace(Mesh.interval(0, 1, 4))
    with pytest.raises(ValueError):
        ControlProblem(space, BoxConstraints(1.0, 0.0), constant(space, 0.0))


def test_projection_and_admissibility():
    space = FeSpace(Mesh.interval(0, 1, 4))
    P = ControlProblem(space, BoxConstraints(-1.0, 1.0), constant(space, 0.0))
    v = FeFunction(space, np.array([-3.0, 0.5, 2.0, 0.0, 1.0]))
    np.testing.assert_array_equal(P.project_admissible(v).coeffs, [-1, 0.5, 1, 0, 1])
    assert P.is_admissible_quad(P.project_quad(space.eval_quad(3 * v.coeffs)))


def test_with_data_shares_factorization(ex2):
    P, _ = ex2
    Q = P.with_data(constant(P.space, 0.0))
    assert Q.factor is P.factor
    assert not np.array_equal(Q.z.coeffs, P.z.coeffs)


def test_space_mismatch():
    s1 = FeSpace(Mesh.interval(0, 1, 4))
    s2 = FeSpace(Mesh.interval(0, 1, 4))
    with pytest.raises(ValueError):
        ControlProblem(s1, BoxConstraints(0.0, 1.0), constant(s2, 0.0))
