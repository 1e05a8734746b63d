"""Semi-smooth Newton (primal-dual active set) solver for one Bregman subproblem.

The subproblem is

    min_u  1/2 ||S u - z||^2 + alpha (1/2 ||u||^2 - (lambda, u))   s.t. u_a <= u <= u_b

whose solution is the fixed point ``u = P(-p(u)/alpha + lambda)``.  Each
Newton step fixes the active sets from the current adjoint and solves the
reduced system for the control on the inactive set with CG; only the adjoint
is carried between steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fem import (
    FeFunction,
    Label,
    PointwiseClassification,
    assemble_truncated_mass,
)
from .linalg import CGNotConverged, cg_solve
from .problem import BoxConstraints, ControlProblem

log = logging.getLogger(__name__)


class NewtonNotConverged(RuntimeError):
    def __init__(self, message, last):
        super().__init__(message)
        self.last = last


class GlobalizationStalled(RuntimeError):
    pass


@dataclass(frozen=True)
class SubproblemSpec:
    """One instance of the subproblem: problem data, ``alpha`` and the nodal subgradient."""

    problem: ControlProblem
    alpha: float
    lam: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (self.problem.space.m,):
            raise ValueError("subgradient has wrong length")
        object.__setattr__(self, "lam", lam)

    @property
    def lam_quad(self):
        return self.problem.space.eval_quad(self.lam)

    def objective(self, u_quad):
        space = self.problem.space
        reg = 0.5 * space.quad_inner(u_quad, u_quad) - space.quad_inner(self.lam_quad, u_quad)
        return self.problem.tracking(u_quad) + self.alpha * reg

    def fixed_point_map(self, p):
        """Quadrature values of ``P(-p/alpha + lambda)`` for a nodal adjoint ``p``."""
        return self.problem.project_quad(self.problem.space.eval_quad(-p / self.alpha + self.lam))

    def residual(self, u_quad, p=None):
        """L2 norm of ``u - P(-p(u)/alpha + lambda)``; ``p`` is recomputed unless given."""
        if p is None:
            p = self.problem.adjoint_from_quad(u_quad)
        return self.problem.space.quad_norm(u_quad - self.fixed_point_map(p))


@dataclass
class NewtonResult:
    p: np.ndarray
    u: np.ndarray
    classification: PointwiseClassification
    iterations: int
    cg_iterations: int
    residual: float
    fallback_steps: int = 0


def classify_values(values, lower, upper) -> PointwiseClassification:
    """Label each point by comparing ``values`` with the bounds; ties count as active."""
    labels = np.full(np.shape(values), Label.INACTIVE, dtype=np.int8)
    labels[values <= lower] = Label.ACTIVE_LOWER
    labels[values >= upper] = Label.ACTIVE_UPPER
    return PointwiseClassification(labels)


def classify(p: FeFunction, lam: FeFunction, alpha: float, bounds: BoxConstraints) -> PointwiseClassification:
    space = p.space
    lo, hi = bounds.at_quadrature(space)
    return classify_values(space.eval_quad(-p.coeffs / alpha + lam.coeffs), lo, hi)


def _classify(spec: SubproblemSpec, p):
    P = spec.problem
    return classify_values(P.space.eval_quad(-p / spec.alpha + spec.lam), P.lower_q, P.upper_q)


class ReducedSystem:
    """Newton system ``(M_I + 1/alpha M_I K^-1 M K^-1 M_I) u = rhs`` for fixed active sets.

    Unknowns are the DOFs whose basis support touches an inactive
    quadrature point (nonzero rows of ``M_I``).
    """

    def __init__(self, spec: SubproblemSpec, cls: PointwiseClassification):
        P = spec.problem
        space = P.space
        self.spec = spec
        self.cls = cls
        self.M_I = assemble_truncated_mass(space, cls, Label.INACTIVE)
        M_lo = assemble_truncated_mass(space, cls, Label.ACTIVE_LOWER)
        M_hi = assemble_truncated_mass(space, cls, Label.ACTIVE_UPPER)
        self.g = M_lo @ P.lower + M_hi @ P.upper
        diag = self.M_I.diagonal()
        self.index = np.flatnonzero(diag > 0.0)
        self.precond = diag[self.index]

    def full(self, x):
        v = np.zeros(self.spec.problem.space.m)
        v[self.index] = x
        return v

    def apply_full(self, x):
        P = self.spec.problem
        w = self.M_I @ x
        return w + (self.M_I @ P.poisson(P.M @ P.poisson(w))) / self.spec.alpha

    def apply(self, x):
        return self.apply_full(self.full(x))[self.index]

    def rhs(self):
        P = self.spec.problem
        y_fixed = P.poisson(self.g) + P.state_offset
        t = P.poisson(P.M @ (y_fixed - P.z.coeffs))
        return (-(self.M_I @ t) / self.spec.alpha + self.M_I @ self.spec.lam)[self.index]

    def control(self, x):
        """Quadrature values of ``u = u_a on A_a, u_b on A_b, x on I``."""
        P = self.spec.problem
        u = P.space.eval_quad(self.full(x))
        labels = self.cls.labels
        u = np.where(labels == Label.ACTIVE_LOWER, P.lower_q, u)
        return np.where(labels == Label.ACTIVE_UPPER, P.upper_q, u)

    def solve(self, tol=1e-12, max_iter=None):
        n = self.index.size
        if n == 0:
            return np.zeros(0), 0
        if max_iter is None:
            max_iter = 10 * self.spec.problem.space.m
        return cg_solve(self.apply, self.rhs(), tol=tol, max_iter=max_iter, precond=self.precond)


def apply_reduced_operator(spec: SubproblemSpec, cls: PointwiseClassification, x):
    """Apply the reduced Newton matrix to a full-length coefficient vector."""
    return ReducedSystem(spec, cls).apply_full(np.asarray(x, dtype=float))


def projected_gradient_step(spec: SubproblemSpec, u, step, armijo=1e-4):
    """One projected-gradient step with backtracking on the subproblem objective.

    ``u`` holds quadrature values.  The step is halved until the projected
    Armijo condition holds.  Returns ``(u_new, step_used)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    P = spec.problem
    space = P.space
    p = P.adjoint_from_quad(u)
    direction = -space.eval_quad(p) - spec.alpha * (u - spec.lam_quad)
    f0 = spec.objective(u)
    while step >= 1e-14:
        cand = P.project_quad(u + step * direction)
        diff = cand - u
        if not np.any(diff):
            return u, step
        if spec.objective(cand) <= f0 - armijo / step * space.quad_inner(diff, diff):
            return cand, step
        step *= 0.5
    raise GlobalizationStalled("globalization stalled")


def _globalize(spec, u, steps):
    step = 1.0 / spec.alpha
    for _ in range(steps):
        u_new, step = projected_gradient_step(spec, u, step)
        if u_new is u:
            break
        u = u_new
        step *= 2.0
    return u


def newton_solve(spec: SubproblemSpec, tol_inner=1e-10, max_newton=50, p_init=None,
                 cg_tol=1e-12, globalization_steps=20) -> NewtonResult:
    """Solve the subproblem by semi-smooth Newton.

    Parameters
    ----------
    spec : SubproblemSpec
    tol_inner : float
        Required L2 fixed-point residual at exit.
    max_newton : int
        Newton iteration cap.
    p_init : ndarray, optional
        Nodal adjoint used for the first active-set guess (warm start).

    Raises
    ------
    NewtonNotConverged
        After ``max_newton`` iterations; ``.last`` holds the last iterate.
    """
    if not tol_inner > 0:
        raise ValueError("tol_inner must be positive")
    P = spec.problem
    p = np.zeros(P.space.m) if p_init is None else np.asarray(p_init, dtype=float)
    cls = _classify(spec, p)
    seen = {cls.labels.tobytes()}
    cg_total = 0
    fallback = 0
    last = None
    for it in range(1, max_newton + 1):
        system = ReducedSystem(spec, cls)
        try:
            x, n_cg = system.solve(tol=cg_tol)
            u = system.control(x)
        except CGNotConverged as exc:
            log.debug("CG stalled in Newton step %d: %s", it, exc)
            cg_total += exc.iterations
            u = _globalize(spec, spec.fixed_point_map(p), globalization_steps)
            fallback += globalization_steps
            p = P.adjoint_from_quad(u)
            cls = _classify(spec, p)
            continue
        cg_total += n_cg
        p_new = P.adjoint_from_quad(u)
        cls_new = _classify(spec, p_new)
        res = spec.residual(u, p_new)
        last = NewtonResult(p_new, u, cls, it, cg_total, res, fallback)
        if cls_new == cls and res <= tol_inner:
            return last
        key = cls_new.labels.tobytes()
        if cls_new != cls and key in seen:
            # active sets cycle; take gradient steps before trying Newton again
            u = _globalize(spec, u, globalization_steps)
            fallback += globalization_steps
            p_new = P.adjoint_from_quad(u)
            cls_new = _classify(spec, p_new)
            key = cls_new.labels.tobytes()
        seen.add(key)
        cls, p = cls_new, p_new
    raise NewtonNotConverged(
        f"semi-smooth Newton did not converge in {max_newton} iterations", last
    )
