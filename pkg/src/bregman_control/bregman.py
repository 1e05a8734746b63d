"""Outer Bregman iteration driven by the adjoint/subgradient update.

Each step solves the subproblem with ``alpha_k`` and the previous subgradient,
then sets ``lambda_k = lambda_{k-1} - p_k / alpha_k``.  The control itself is
never needed inside the loop; ``u_k = P(lambda_k)`` recovers it on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .fem import FeFunction
from .problem import ControlProblem
from .ssn import NewtonNotConverged, SubproblemSpec, newton_solve
from .stopping import RegularizationSchedule


class BregmanStepError(RuntimeError):
    def __init__(self, k, cause):
        super().__init__(f"Bregman step {k} failed: {cause}")
        self.k = k
        self.cause = cause


@dataclass(frozen=True)
class IterationRecord:
    k: int
    alpha: float
    gamma: float
    newton_iterations: int
    cg_iterations: int
    residual: float
    fallback_steps: int


@dataclass(frozen=True)
class BregmanState:
    k: int
    lam: np.ndarray
    p: np.ndarray
    gamma: float
    history: tuple = field(default=(), repr=False)

    @classmethod
    def initial(cls, problem: ControlProblem):
        zero = np.zeros(problem.space.m)
        return cls(k=0, lam=zero, p=zero.copy(), gamma=0.0)


def bregman_step(state: BregmanState, problem: ControlProblem, sched: RegularizationSchedule,
                 tol_inner=1e-10, max_newton=50) -> BregmanState:
    k = state.k + 1
    alpha = sched(k)
    spec = SubproblemSpec(problem, alpha, state.lam)
    try:
        res = newton_solve(spec, tol_inner=tol_inner, max_newton=max_newton, p_init=state.p)
    except (NewtonNotConverged, ArithmeticError, RuntimeError) as exc:
        raise BregmanStepError(k, exc) from exc
    gamma = state.gamma + 1.0 / alpha
    rec = IterationRecord(k, alpha, gamma, res.iterations, res.cg_iterations,
                          res.residual, res.fallback_steps)
    return replace(state, k=k, lam=state.lam - res.p / alpha, p=res.p, gamma=gamma,
                   history=state.history + (rec,))


def iterate(problem, sched, k_max, state=None, **solver_opts) -> Iterator[BregmanState]:
    """Yield the states after steps ``1, ..., k_max``."""
    state = BregmanState.initial(problem) if state is None else state
    while state.k < k_max:
        state = bregman_step(state, problem, sched, **solver_opts)
        yield state


def recover_control(state: BregmanState, problem: ControlProblem) -> FeFunction:
    """Nodal control ``P(lambda_k)``; for ``k = 0`` this is ``u_0 = P(0)``."""
    return problem.project_admissible(FeFunction(problem.space, state.lam))


def control_quad(state: BregmanState, problem: ControlProblem):
    """Control ``P(lambda_k)`` evaluated pointwise at the quadrature points."""
    return problem.project_quad(problem.space.eval_quad(state.lam))


def _as_quad(v, space):
    if isinstance(v, FeFunction):
        return v.at_quadrature()
    v = np.asarray(v, dtype=float)
    return space.eval_quad(v) if v.shape == (space.m,) else v


def bregman_distance(u, v, lam, problem: ControlProblem) -> float:
    """``J(u) - J(v) - (u - v, lam)`` with ``J = 1/2 ||.||^2 + indicator of the box``.

    Arguments may be FeFunctions, nodal vectors or quadrature-value arrays.
    Returns ``inf`` when ``u`` or ``v`` is not admissible.
    """
    space = problem.space
    uq, vq, lq = (_as_quad(a, space) for a in (u, v, lam))
    if not (problem.is_admissible_quad(uq) and problem.is_admissible_quad(vq)):
        return np.inf
    return (0.5 * space.quad_inner(uq, uq) - 0.5 * space.quad_inner(vq, vq)
            - space.quad_inner(uq - vq, lq))
