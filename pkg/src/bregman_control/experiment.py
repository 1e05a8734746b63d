"""Noisy benchmark runs with the a priori stopping rule, and their CSV/JSON output."""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bench import build_case, control_error, exact_control_quad, get_case, verify_case
from .bregman import BregmanStepError, control_quad, iterate
from .config import ConfigError, ExperimentConfig
from .stopping import NoiseSpec, noise_bounds, perturb, reg_bounds, stop_index

log = logging.getLogger(__name__)

CSV_HEADER = ("k", "alpha_k", "gamma_k", "err_exact", "e_n", "e_r", "stopped")


@dataclass
class RunRecord:
    """Per-iteration history of one ``(delta, seed)`` run.

    Row ``k = 0`` is the initial control ``u_0 = P(0)``; its ``alpha_k`` is NaN.
    ``k_delta`` is ``None`` for exact data, where the stopping rule does not apply.
    """

    delta: float
    seed: int
    tau: float
    k_delta: int | None
    reached_k_max: bool
    alpha: np.ndarray
    gamma: np.ndarray
    error: np.ndarray
    e_n: np.ndarray
    e_r: np.ndarray
    newton_iterations: int = 0
    noise_sum: np.ndarray | None = None
    first_step_gap: float | None = None
    controls: dict = field(default_factory=dict, repr=False)

    @property
    def k_last(self):
        return len(self.error) - 1

    @property
    def stopped(self):
        flags = np.zeros(len(self.error), dtype=bool)
        if self.k_delta is not None and self.k_delta <= self.k_last:
            flags[self.k_delta] = True
        return flags

    @property
    def min_error(self):
        """Smallest error over ``k >= 1`` (or the initial error if nothing ran)."""
        errs = self.error[1:] if self.k_last >= 1 else self.error
        return float(errs.min())

    @property
    def argmin(self):
        return int(np.argmin(self.error[1:])) + 1 if self.k_last >= 1 else 0

    def min_error_to_stop(self):
        """``min_{1 <= j <= k(delta)}`` of the error; the initial error when ``k(delta) = 0``."""
        k = self.k_last if self.k_delta is None else min(self.k_delta, self.k_last)
        return float(self.error[1:k + 1].min()) if k >= 1 else float(self.error[0])

    def error_at_stop(self):
        if self.k_delta is None or self.k_delta > self.k_last:
            return None
        return float(self.error[self.k_delta])

    def noise_slack(self):
        """``e_k^n - sum (1/alpha_i) ||u_i - u_i^delta||^2`` for ``k >= 1``."""
        if self.noise_sum is None:
            return None
        return self.e_n[1:] - self.noise_sum[1:]

    def rows(self):
        stopped = self.stopped
        for k in range(len(self.error)):
            yield (k, self.alpha[k], self.gamma[k], self.error[k], self.e_n[k], self.e_r[k],
                   bool(stopped[k]))


def _trajectory(problem, sched, k_last, tol_inner, max_newton):
    """Quadrature-valued controls ``u_0, ..., u_k_last`` and the Newton iteration count."""
    controls = [problem.project_quad(np.zeros(problem.space.weights.shape))]
    newton = 0
    state = None
    for state in iterate(problem, sched, k_last, tol_inner=tol_inner, max_newton=max_newton):
        controls.append(control_quad(state, problem))
        newton += state.history[-1].newton_iterations
    return controls, newton, state


def run_single(problem, case, sched, delta, seed=0, tau=1.0, kappa=1.0, k_max=750,
               run_to_k_max=False, paired=False, tol_inner=1e-10, max_newton=50,
               store_controls=False) -> RunRecord:
    """Run the Bregman iteration on data perturbed at level ``delta``.

    The iteration halts at ``k(delta)`` unless ``run_to_k_max`` is set.  With
    ``paired`` an exact-data run of the same length is made as well and the
    noise-error sums are recorded.

    Raises
    ------
    BregmanStepError
        When a subproblem cannot be solved.
    """
    noisy = problem.with_data(perturb(problem.z, NoiseSpec(delta, seed)))
    if delta > 0:
        k_delta, capped = stop_index(sched, delta, tau, kappa, k_max)
    else:
        k_delta, capped = None, False
    k_last = k_max if (run_to_k_max or k_delta is None) else k_delta

    controls, newton, state = _trajectory(noisy, sched, k_last, tol_inner, max_newton)
    space = problem.space
    exact = exact_control_quad(case, space)
    error = np.array([control_error(u, case, space, exact) for u in controls])
    zero = np.zeros(1)
    alpha = np.concatenate([[np.nan], sched.alphas(k_last)]) if k_last else np.array([np.nan])
    gamma = np.concatenate([zero, sched.gammas(k_last)]) if k_last else zero
    e_n = np.concatenate([zero, noise_bounds(k_last, sched, delta)]) if k_last else zero
    e_r = np.concatenate([[1.0], reg_bounds(k_last, sched, kappa)]) if k_last else np.ones(1)

    rec = RunRecord(delta, seed, tau, k_delta, capped, alpha, gamma, error, e_n, e_r, newton)
    if paired and k_last >= 1:
        ref, _, _ = _trajectory(problem, sched, k_last, tol_inner, max_newton)
        gaps = np.array([space.quad_norm(a - b) for a, b in zip(controls, ref)])
        terms = gaps[1:] ** 2 / alpha[1:]
        rec.noise_sum = np.concatenate([zero, np.cumsum(terms)])
        rec.first_step_gap = float(gaps[1])
    if store_controls:
        rec.controls = {"quad_points": space.quad_points, "u_final": controls[-1],
                        "lambda_final": state.lam if state is not None else np.zeros(space.m)}
        if k_delta is not None and k_delta <= k_last:
            rec.controls["u_stop"] = controls[k_delta]
    return rec


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(rec: RunRecord, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rec.rows():
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Read a run CSV back into column arrays (``stopped`` as bool)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in CSV_HEADER:
        vals = [r[key] for r in rows]
        if key == "k":
            out[key] = np.array([int(v) for v in vals])
        elif key == "stopped":
            out[key] = np.array([v == "true" for v in vals])
        else:
            out[key] = np.array([float(v) for v in vals])
    return out


def run_name(delta, seed):
    return f"delta_{delta!r}_seed_{seed}"


@functools.lru_cache(maxsize=4)
def _cached_case(case_id, dof, consistent_sign, lift_boundary):
    return build_case(case_id, dof, consistent_sign=consistent_sign, lift_boundary=lift_boundary)


def _problem(cfg):
    return _cached_case(cfg.case, cfg.dof, cfg.consistent_sign, cfg.lift_boundary)


def _run_task(cfg: ExperimentConfig, delta, seed, out_dir):
    """Run one ``(delta, seed)`` job and write its files; returns a summary entry."""
    problem, case = _problem(cfg)
    t0 = time.perf_counter()
    entry = {"delta": delta, "seed": seed, "csv": run_name(delta, seed) + ".csv"}
    try:
        rec = run_single(problem, case, cfg.schedule_obj(), delta, seed, cfg.tau, cfg.kappa,
                         cfg.k_max, cfg.run_to_k_max, cfg.noise_check, cfg.tol_inner,
                         cfg.max_newton, cfg.store_controls)
    except BregmanStepError as exc:
        log.error("run delta=%r seed=%d failed: %s", delta, seed, exc)
        entry.update(error=str(exc), failed_step=exc.k, wall_time=time.perf_counter() - t0)
        return entry
    write_csv(rec, os.path.join(out_dir, entry["csv"]))
    if rec.controls:
        name = run_name(delta, seed) + "_controls.npz"
        np.savez(os.path.join(out_dir, name), **rec.controls)
        entry["controls"] = name
    entry.update(
        k_delta=rec.k_delta,
        reached_k_max=rec.reached_k_max,
        iterations=rec.k_last,
        min_error=rec.min_error,
        argmin_error=rec.argmin,
        min_error_to_stop=rec.min_error_to_stop(),
        err_at_stop=rec.error_at_stop(),
        err_final=float(rec.error[-1]),
        newton_iterations=rec.newton_iterations,
    )
    if rec.noise_sum is not None:
        slack = rec.noise_slack()
        entry["noise_bound_check"] = {
            "min_slack": float(slack.min()),
            "holds": bool(slack.min() >= -1e-12),
            "first_step_gap": rec.first_step_gap,
            "first_step_bound": delta / math.sqrt(rec.alpha[1]),
        }
    entry["wall_time"] = time.perf_counter() - t0
    return entry


def _map(fn, jobs, tasks):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def _version():
    from . import __version__
    return __version__


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run every ``(delta, seed)`` pair and write CSVs plus ``summary.json``.

    Returns ``(summary, status)`` where ``status`` is 0 when every run
    finished and 2 when at least one solver failure was recorded.
    """
    cfg = cfg.resolved()
    out_dir = out_dir or cfg.output_dir()
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    tasks = [(cfg, d, s, out_dir) for d in cfg.deltas for s in cfg.seeds]
    runs = _map(_run_task, cfg.jobs, tasks)
    summary = {
        "version": _version(),
        "config": cfg.to_dict(),
        "runs": runs,
        "wall_time": time.perf_counter() - t0,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, allow_nan=True)
        fh.write("\n")
    status = 2 if any("error" in r for r in runs) else 0
    return summary, status


def _sweep_task(cfg, taus, delta, seed):
    problem, case = _problem(cfg)
    sched = cfg.schedule_obj()
    stops = [stop_index(sched, delta, t, cfg.kappa, cfg.k_max)[0] for t in taus]
    try:
        rec = run_single(problem, case, sched, delta, seed, max(taus), cfg.kappa,
                         max(max(stops), 1), run_to_k_max=True,
                         tol_inner=cfg.tol_inner, max_newton=cfg.max_newton)
    except BregmanStepError as exc:
        log.error("sweep run delta=%r seed=%d failed: %s", delta, seed, exc)
        return [(t, delta, seed, k, None) for t, k in zip(taus, stops)], str(exc)
    return [(t, delta, seed, k, float(rec.error[k])) for t, k in zip(taus, stops)], None


def sweep_tau(cfg: ExperimentConfig, taus=None, out_dir=None):
    """Stopping index and error at the stop for each ``tau`` and ``(delta, seed)``.

    One run per ``(delta, seed)`` reaches the largest stopping index among the
    ``tau`` values; the other indices read off the same trajectory.  Writes
    ``sweep_tau.csv``; returns ``(rows, status)``.
    """
    cfg = cfg.resolved()
    taus = tuple(taus) if taus else cfg.taus
    if not taus:
        raise ConfigError("tau list is empty", "taus")
    if any(d <= 0 for d in cfg.deltas):
        raise ConfigError("a tau sweep needs positive noise levels", "deltas")
    out_dir = out_dir or cfg.output_dir()
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(cfg, taus, d, s) for d in cfg.deltas for s in cfg.seeds]
    results = _map(_sweep_task, cfg.jobs, tasks)
    rows = [r for part, _ in results for r in part]
    with open(os.path.join(out_dir, "sweep_tau.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tau", "delta", "seed", "k_delta", "err_at_stop"))
        for t, d, s, k, e in rows:
            w.writerow((_fmt(t), _fmt(d), s, k, "nan" if e is None else _fmt(e)))
    status = 2 if any(err for _, err in results) else 0
    return rows, status


def verify(cfg: ExperimentConfig, sample_count=1000):
    """Check the closed-form benchmark formulas; returns the report."""
    return verify_case(get_case(cfg.case, consistent_sign=cfg.consistent_sign), sample_count)
