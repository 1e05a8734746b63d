"""Regularization schedules, data perturbation and the a priori stopping rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FeFunction, l2_norm

SOURCE_CONDITION = "SC"


@dataclass(frozen=True)
class RegularizationSchedule:
    """Sequence ``alpha_1, alpha_2, ...`` of positive parameters bounded by ``bound``.

    ``rule="constant"`` uses ``alpha`` throughout; ``rule="geometric"`` uses
    ``min(alpha * ratio**(k-1), bound)``.
    """

    rule: str = "constant"
    alpha: float = 1.0
    ratio: float = 1.0
    bound: float | None = None

    def __post_init__(self):
        if self.rule not in ("constant", "geometric"):
            raise ValueError(f"unknown schedule rule {self.rule!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.ratio > 0:
            raise ValueError("ratio must be positive")
        if self.bound is None:
            if self.rule == "geometric" and self.ratio > 1:
                raise ValueError("an increasing geometric schedule needs an explicit bound")
            object.__setattr__(self, "bound", self.alpha)
        elif not self.bound > 0:
            raise ValueError("bound must be positive")

    def __call__(self, k):
        if k < 1:
            raise ValueError("alpha(k) is defined for k >= 1")
        return float(self.alphas(k)[-1])

    def alphas(self, k):
        """Array ``[alpha_1, ..., alpha_k]``."""
        if self.rule == "constant":
            return np.full(k, min(self.alpha, self.bound))
        return np.minimum(self.alpha * self.ratio ** np.arange(k), self.bound)

    def gammas(self, k):
        """Array ``[gamma_1, ..., gamma_k]`` with ``gamma_k = sum 1/alpha_j``."""
        return np.cumsum(1.0 / self.alphas(k))


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    seed: int = 0

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")


def perturb(z: FeFunction, spec: NoiseSpec) -> FeFunction:
    """Return ``z + delta * n / ||n||`` with ``n`` uniform in [-1, 1] per coefficient.

    Draws come from a Philox stream keyed by the seed, so ``(seed, delta)``
    fixes the result on every platform.
    """
    if spec.delta == 0:
        return FeFunction(z.space, z.coeffs.copy())
    seed = spec.seed
    while True:
        rng = np.random.Generator(np.random.Philox(seed))
        n = FeFunction(z.space, rng.uniform(-1.0, 1.0, z.space.m))
        norm = l2_norm(n)
        if norm > 0:
            break
        seed += 1
    return FeFunction(z.space, z.coeffs + (spec.delta / norm) * n.coeffs)


def noise_bounds(k, sched: RegularizationSchedule, delta):
    """Array ``[e_1^n, ..., e_k^n]`` of cumulative noise error bounds."""
    alphas = sched.alphas(k)
    gam_prev = np.concatenate([[0.0], np.cumsum(1.0 / alphas)[:-1]])
    return delta**2 * np.cumsum(1.0 / alphas**2 + gam_prev**2)


def reg_bounds(k, sched: RegularizationSchedule, kappa):
    """Array ``[e_1^r, ..., e_k^r]``; identically one under the source condition."""
    if kappa == SOURCE_CONDITION:
        return np.ones(k)
    if not kappa > 0:
        raise ValueError("kappa must be positive or 'SC'")
    alphas = sched.alphas(k)
    return 1.0 + np.cumsum(1.0 / alphas * np.cumsum(1.0 / alphas) ** (-kappa))


def noise_bound(k, sched, delta):
    if k < 1:
        raise ValueError("k must be at least 1")
    return float(noise_bounds(k, sched, delta)[-1])


def reg_bound(k, sched, kappa):
    if k < 1:
        raise ValueError("k must be at least 1")
    return float(reg_bounds(k, sched, kappa)[-1])


def stop_index(sched, delta, tau, kappa, k_max):
    """A priori stopping index plus a flag telling whether ``k_max`` capped it.

    The index is the largest ``k <= k_max`` with ``e_i^n <= tau e_i^r`` for
    all ``i <= k``, and zero if the first step already violates it.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    ok = noise_bounds(k_max, sched, delta) <= tau * reg_bounds(k_max, sched, kappa)
    if ok.all():
        return k_max, True
    return int(np.argmin(ok)), False


def decide_stop(sched, delta, tau, kappa, k_max) -> int:
    return stop_index(sched, delta, tau, kappa, k_max)[0]


class StoppingState:
    """Online evaluation of the stopping rule during a noisy run."""

    def __init__(self, sched: RegularizationSchedule, delta, tau, kappa, k_max=750):
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.sched = sched
        self.delta = delta
        self.tau = tau
        self.kappa = kappa
        self.k_max = k_max
        self.e_n = noise_bounds(k_max, sched, delta)
        self.e_r = reg_bounds(k_max, sched, kappa)
        self.k_delta, self.reached_k_max = stop_index(sched, delta, tau, kappa, k_max)

    def within(self, k):
        """True while step ``k`` still satisfies the rule for every ``i <= k``."""
        return k <= self.k_delta
