"""Box-constrained Poisson control problem: data, solution operator and projection.

The state equation is ``-Laplace(y) = u + e_omega`` with ``y = 0`` (or given
Dirichlet data) on the boundary.  Adjoints follow ``p(u) = S*(S u - z)``, i.e. ``-Laplace(p) = y - z``.

Controls appear in two forms.  Nodal ones are ordinary
:class:`~bregman_control.fem.FeFunction` objects.  The controls produced by
the optimality system, ``P(-p/alpha + lambda)``, are not piecewise linear;
they are carried as arrays of values at the quadrature points, with the
quadrature-weighted inner product as the L2 inner product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fem import FeFunction, FeSpace, assemble_stiffness, interpolate
from .linalg import factorize


@dataclass(frozen=True)
class BoxConstraints:
    """Lower and upper bounds, each a constant or an :class:`FeFunction`."""

    lower: float | FeFunction
    upper: float | FeFunction

    def nodal(self, space):
        return _nodal(self.lower, space), _nodal(self.upper, space)

    def at_quadrature(self, space):
        lo = self.lower
        hi = self.upper
        lo = lo.at_quadrature() if isinstance(lo, FeFunction) else np.full(space.weights.shape, float(lo))
        hi = hi.at_quadrature() if isinstance(hi, FeFunction) else np.full(space.weights.shape, float(hi))
        return lo, hi

    def validate(self, space):
        lo, hi = self.nodal(space)
        qlo, qhi = self.at_quadrature(space)
        if np.any(lo > hi) or np.any(qlo > qhi):
            raise ValueError("lower bound exceeds upper bound somewhere")


def _nodal(bound, space):
    if isinstance(bound, FeFunction):
        return bound.coeffs
    return np.full(space.m, float(bound))


class ControlProblem:
    """Assembled operators and data for one discretized control problem.

    Parameters
    ----------
    space : FeSpace
    bounds : BoxConstraints
    z : FeFunction
        Desired state (exact or perturbed).
    e_omega : FeFunction, optional
        Fixed source added to the control in the state equation.
    boundary_state : FeFunction, optional
        Dirichlet data for the state; only its boundary coefficients are used.
        Defaults to zero.  The adjoint always has homogeneous conditions.
    """

    def __init__(self, space: FeSpace, bounds: BoxConstraints, z: FeFunction,
                 e_omega: FeFunction | None = None, boundary_state: FeFunction | None = None,
                 *, _operators=None):
        if z.space is not space:
            raise ValueError("target z lives in a different space")
        if e_omega is None:
            e_omega = FeFunction(space, np.zeros(space.m))
        elif e_omega.space is not space:
            raise ValueError("e_omega lives in a different space")
        bounds.validate(space)
        self.boundary_values = np.zeros(space.m)
        if boundary_state is not None:
            if boundary_state.space is not space:
                raise ValueError("boundary_state lives in a different space")
            self.boundary_values[space.mesh.boundary] = boundary_state.coeffs[space.mesh.boundary]
        self.boundary_state = boundary_state
        self.space = space
        self.bounds = bounds
        self.z = z
        self.e_omega = e_omega
        if _operators is None:
            K = assemble_stiffness(space)
            K_red = K.submatrix(space.interior)
            _operators = (K, K_red, factorize(K_red))
        self.K, self.K_reduced, self.factor = _operators
        self.M = space.mass
        self.lower, self.upper = bounds.nodal(space)
        self.lower_q, self.upper_q = bounds.at_quadrature(space)

    def with_data(self, z: FeFunction) -> "ControlProblem":
        """Same operators and bounds, different desired state."""
        return ControlProblem(self.space, self.bounds, z, self.e_omega, self.boundary_state,
                              _operators=(self.K, self.K_reduced, self.factor))

    # -- linear algebra building blocks -------------------------------------

    def poisson(self, rhs):
        """Apply ``K^{-1}`` to a full load vector (boundary entries ignored, result zero there)."""
        rhs = np.asarray(rhs, dtype=float)
        return self.space.extend(self.factor.solve(rhs[self.space.interior]))

    @cached_property
    def state_offset(self):
        """State generated by ``e_omega`` and the Dirichlet data alone."""
        yb = self.boundary_values
        if not yb.any():
            return self.poisson(self.M @ self.e_omega.coeffs)
        return self.poisson(self.M @ self.e_omega.coeffs - self.K @ yb) + yb

    def apply_S(self, u_quad):
        """Linear part of the control-to-state map for a quadrature-valued control."""
        return self.poisson(self.space.load(u_quad))

    def apply_S_adjoint(self, v):
        """Adjoint of :meth:`apply_S` w.r.t. the mass and quadrature inner products.

        Returns quadrature values of ``K^{-1} M v``.
        """
        return self.space.eval_quad(self.poisson(self.M @ np.asarray(v, dtype=float)))

    # -- state / adjoint --------------------------------------------------

    def solve_state(self, u: FeFunction) -> FeFunction:
        if u.space is not self.space:
            raise ValueError("control lives in a different space")
        return FeFunction(self.space, self.poisson(self.M @ u.coeffs) + self.state_offset)

    def solve_adjoint(self, y: FeFunction, z: FeFunction | None = None) -> FeFunction:
        z = self.z if z is None else z
        if y.space is not self.space or z.space is not self.space:
            raise ValueError("state or target lives in a different space")
        return FeFunction(self.space, self.poisson(self.M @ (y.coeffs - z.coeffs)))

    def state_from_quad(self, u_quad):
        return self.apply_S(u_quad) + self.state_offset

    def adjoint_from_quad(self, u_quad):
        """Nodal adjoint ``p(u)`` for a quadrature-valued control."""
        y = self.state_from_quad(u_quad)
        return self.poisson(self.M @ (y - self.z.coeffs))

    # -- admissible set ----------------------------------------------------

    def project_admissible(self, v: FeFunction) -> FeFunction:
        if v.space is not self.space:
            raise ValueError("function lives in a different space")
        return FeFunction(self.space, np.clip(v.coeffs, self.lower, self.upper))

    def project_quad(self, values):
        """Pointwise projection of quadrature values onto the box."""
        return np.clip(values, self.lower_q, self.upper_q)

    def is_admissible_quad(self, values, tol=0.0):
        return bool(np.all(values >= self.lower_q - tol) and np.all(values <= self.upper_q + tol))

    def tracking(self, u_quad):
        """``1/2 ||S u - z||^2``."""
        r = self.state_from_quad(u_quad) - self.z.coeffs
        return 0.5 * float(r @ (self.M @ r))


def constant(space: FeSpace, c: float) -> FeFunction:
    return interpolate(lambda *xs: np.full(xs[0].shape, float(c)), space)
