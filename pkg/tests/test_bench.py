import numpy as np
import pytest

from bregman_control.bench import (
    CASE_IDS,
    build_case,
    control_error,
    exact_control_quad,
    get_case,
    verify_case,
)
from bregman_control.fem import interpolate


def test_ex2_control_norm():
    P, case = build_case("ex2", 257)
    u = exact_control_quad(case, P.space)
    assert P.space.quad_norm(u) == pytest.approx(np.sqrt(2.0), rel=1e-14)
    assert control_error(np.zeros_like(u), case, P.space) == pytest.approx(np.sqrt(2.0))
    assert control_error(u, case, P.space) == 0.0


def test_ex1_control_formula():
    case = get_case("ex1")
    x = np.array([-1.0, -0.75, -0.5, 0.0, 0.25])
    np.testing.assert_allclose(case.u_dagger(x), [0.1, 0.1, 0.1, 0.0, 0.0], atol=1e-15)


def test_ex3_adjoint_sign_change_within_one_cell():
    P, case = build_case("ex3", 1025)
    p = interpolate(case.p_dagger, P.space).coeffs
    x = P.space.mesh.nodes[:, 0]
    inner = (x > 0.05) & (x < 0.95)
    changes = np.flatnonzero(np.diff(np.sign(p[inner])) != 0)
    assert len(changes) == 1
    xl = x[inner][changes[0]]
    assert xl <= 1 / 3 <= xl + 1 / 1024 + 1e-15


@pytest.mark.parametrize("case_id", CASE_IDS)
def test_exact_control_admissible(case_id):
    P, case = build_case(case_id, 81 if case_id == "ex4" else 201)
    assert P.is_admissible_quad(exact_control_quad(case, P.space), tol=1e-14)
    node_u = interpolate(case.u_dagger, P.space).coeffs
    assert np.all(node_u >= P.lower - 1e-14) and np.all(node_u <= P.upper + 1e-14)


@pytest.mark.parametrize("case_id", ["ex2", "ex3", "ex4"])
def test_verification_passes(case_id):
    report = verify_case(get_case(case_id), 1000)
    assert report.check("state").passed
    assert report.check("adjoint").passed
    assert report.passed


def test_ex1_sign_finding_is_reported():
    report = verify_case(get_case("ex1"), 1000)
    assert report.check("state").passed and report.check("adjoint").passed
    assert not report.check("sign").passed
    assert verify_case(get_case("ex1", consistent_sign=True), 1000).passed


def test_ex2_state_residual_identity():
    case = get_case("ex2")
    x = np.linspace(-0.9, 0.9, 11)
    np.testing.assert_allclose(case.u_dagger(x) + case.e_omega(x), 2.0)


def test_errors():
    with pytest.raises(ValueError):
        get_case("ex9")
    with pytest.raises(ValueError):
        build_case("ex2", 2)
    with pytest.raises(ValueError):
        build_case("ex4", 80)
    with pytest.raises(ValueError):
        verify_case(get_case("ex2"), 50)


def test_defaults_attached():
    P, case = build_case("ex4")
    assert case.dim == 2 and P.space.m == 65 * 65
    assert case.alpha == 0.1 and case.tau == 1e7
    assert get_case("ex1").tau == 5e3 and get_case("ex3").kappa == pytest.approx(1 / 3)
