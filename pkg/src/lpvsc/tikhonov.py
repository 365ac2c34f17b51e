"""Tikhonov minimization and convergence-rate experiments.

Two solve paths.  For a linear diagonal operator (a sequence of singular
values) with quadratic penalty the minimizer is componentwise explicit and
used as the fast benchmark model.  For the elliptic coefficient problem the
objective

    (1/ell) ||S(a) - u_delta||_Y^ell + (alpha/p_hat) ||a - a_star||_p^p_hat

is minimized by projected gradient descent: a spectral (secant-quotient)
step proposal safeguarded by Armijo backtracking, with alpha times the
generalized duality map as the penalty gradient and every iterate pushed
back into the feasible set.  The descent is monotone on accepted steps;
exhausted backtracking returns the best iterate carrying a stall flag
rather than raising.

Noise is componentwise Gaussian rescaled so the observation-space distance
equals the requested level exactly, which keeps the deterministic noise
model honest.  Rate experiments sweep a noise grid, pick alpha from the
index function, and fit the log-log slope of errors against noise by
ordinary least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    EllipticProblem,
    FeasibleSet,
    ObservationNorm,
    adjoint_gradient,
    assemble,
    project_feasible,
    solve,
)
from .grids import GridFunction
from .lebesgue import Exponents, duality_map, lp_norm


@dataclass
class TikhonovConfig:
    """Exponents, regularization weight, prior guess and descent controls."""

    ell: float
    p: float
    alpha: float
    a_star: GridFunction
    max_iterations: int = 300
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    tolerance: float = 1e-10
    starts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.ell <= 1.0:
            raise ValueError(f"ell must exceed 1, got {self.ell}")
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        Exponents(self.p)  # range check


def diagonal_solve(singular_values, y_delta, alpha: float):
    """Componentwise Tikhonov minimizer for a diagonal linear operator.

    Returns the unique minimizer of 0.5 ||T x - y||^2 + (alpha/2) ||x||^2,
    which is x_k = sigma_k y_k / (sigma_k^2 + alpha).
    """
    sigma = np.asarray(singular_values, dtype=np.float64)
    y = np.asarray(y_delta, dtype=np.float64)
    if sigma.shape != y.shape:
        raise ValueError(
            f"shape mismatch: {sigma.shape} singular values, {y.shape} data"
        )
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return sigma * y / (sigma**2 + alpha)


def add_noise(u: GridFunction, delta: float, y_spec: ObservationNorm,
              seed: int) -> GridFunction:
    """Perturb u so that the Y-distance to the original is exactly delta."""
    if delta < 0.0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if delta == 0.0:
        return u.copy()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(u.grid.shape)
    size = y_spec.norm(GridFunction(u.grid, noise))
    while size == 0.0:  # absurdly unlikely, but keeps the scaling defined
        noise = rng.standard_normal(u.grid.shape)
        size = y_spec.norm(GridFunction(u.grid, noise))
    return GridFunction(u.grid, u.values + (delta / size) * noise)


@dataclass
class SolverResult:
    a: GridFunction
    objective: float
    iterations: int
    stalled: bool
    trace: list = field(default_factory=list)


def _objective_terms(problem: EllipticProblem, cfg: TikhonovConfig,
                     u_delta: GridFunction, a: GridFunction, e: Exponents):
    op = assemble(problem.kappa, a, problem.grid)
    sol = solve(problem.kappa, a, problem.mu, operator=op)
    residual = sol.u - u_delta
    fidelity = problem.obs.fidelity(residual)
    penalty = (cfg.alpha / e.p_hat) * lp_norm(a - cfg.a_star, cfg.p) ** e.p_hat
    return fidelity + penalty, sol, residual, op


def _descent_from(problem: EllipticProblem, u_delta: GridFunction,
                  cfg: TikhonovConfig, D: FeasibleSet, a0: GridFunction,
                  e: Exponents) -> SolverResult:
    grid = problem.grid
    measure = grid.cell_measure
    smoothing = 1e-12 if cfg.p < 2.0 else 0.0
    a = project_feasible(a0, D)
    value, sol, residual, op = _objective_terms(problem, cfg, u_delta, a, e)
    trace = [value]
    step = cfg.initial_step
    prev_values = None
    prev_grad = None
    stalled = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        grad_fid = adjoint_gradient(problem.kappa, a, sol, residual,
                                    problem.obs, operator=op)
        grad_pen = duality_map(a - cfg.a_star, e, smoothing=smoothing)
        grad = grad_fid.values + cfg.alpha * grad_pen.values
        # spectral (quotient of secants) step proposal, Armijo-safeguarded
        if prev_grad is not None:
            da = a.values - prev_values
            dg = grad - prev_grad
            curvature = float(np.sum(da * dg))
            if curvature > 0.0:
                step = float(np.sum(da * da)) / curvature
        step = min(max(step, 1e-8), 1e8)
        prev_values, prev_grad = a.values, grad
        accepted = False
        fixed_point = False
        for _ in range(cfg.max_backtracks):
            trial = project_feasible(GridFunction(grid, a.values - step * grad), D)
            move = trial.values - a.values
            move_sq = float(np.sum(move * move)) * measure
            if move_sq == 0.0:
                # the projected step does not move the iterate at a positive
                # step size: first-order optimality, not a failure
                fixed_point = True
                break
            trial_value, trial_sol, trial_res, trial_op = _objective_terms(
                problem, cfg, u_delta, trial, e
            )
            if trial_value <= value - (cfg.armijo / step) * move_sq:
                a, value = trial, trial_value
                sol, residual, op = trial_sol, trial_res, trial_op
                trace.append(value)
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            if not fixed_point:
                stalled = len(trace) == 1 or abs(
                    trace[-2] - trace[-1]
                ) > cfg.tolerance * (1.0 + abs(value))
            break
        if len(trace) >= 2 and trace[-2] - trace[-1] <= cfg.tolerance * (
            1.0 + abs(value)
        ):
            break
    return SolverResult(a=a, objective=value, iterations=iterations,
                        stalled=stalled, trace=trace)


def solve_nonlinear(problem: EllipticProblem, u_delta: GridFunction,
                    cfg: TikhonovConfig, D: FeasibleSet) -> SolverResult:
    """Projected gradient descent on the Tikhonov objective, multi-start.

    Start points: the prior guess, the feasibility floor, and seeded random
    perturbations of the prior for the remaining starts.  Returns the best
    result by final objective; the stall flag survives only if the winning
    start stalled before meeting the decrease tolerance.
    """
    if u_delta.grid != problem.grid:
        raise ValueError("data grid does not match the problem grid")
    e = Exponents(cfg.p)
    rng = np.random.default_rng(cfg.seed)
    starts = [cfg.a_star]
    if cfg.starts >= 2:
        starts.append(GridFunction.constant(problem.grid, D.a_lower))
    while len(starts) < cfg.starts:
        bump = 0.25 * rng.standard_normal(problem.grid.shape)
        starts.append(GridFunction(problem.grid, cfg.a_star.values * (1.0 + bump)))
    best = None
    for a0 in starts:
        result = _descent_from(problem, u_delta, cfg, D, a0, e)
        if best is None or result.objective < best.objective:
            best = result
    return best


@dataclass
class RateRow:
    delta: float
    alpha: float
    error: float
    iterations: int
    stalled: bool


@dataclass
class RateReport:
    """Noise-versus-error table with its fitted log-log slope."""

    rows: list
    fitted_slope: float
    theoretical_exponent: float
    intercept: float
    r_squared: float
    excluded: int = 0

    @property
    def pairs(self):
        return [(row.delta, row.error) for row in self.rows]

    @property
    def margin(self) -> float:
        return self.fitted_slope - self.theoretical_exponent

    def summary(self) -> dict:
        return {
            "fitted_slope": self.fitted_slope,
            "theoretical_exponent": self.theoretical_exponent,
            "margin": self.margin,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": len(self.rows),
            "excluded": self.excluded,
        }


def fit_rate(pairs) -> dict:
    """Least-squares slope of log(error) against log(delta)."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 pairs to fit, got {len(pairs)}")
    deltas = np.array([d for d, _ in pairs], dtype=np.float64)
    errors = np.array([r for _, r in pairs], dtype=np.float64)
    if np.any(deltas <= 0.0) or np.any(errors <= 0.0):
        raise ValueError("rate fitting needs strictly positive deltas and errors")
    x = np.log(deltas)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept),
            "r_squared": r_squared}


def rate_experiment(run_single, deltas, alpha_rule,
                    theoretical_exponent: float) -> RateReport:
    """Sweep a noise grid and fit the observed convergence rate.

    ``run_single(delta, alpha)`` must return (error, iterations, stalled);
    ``alpha_rule(delta)`` supplies the regularization weight.  Stalled rows
    stay in the table but are excluded from the fit.  The grid must span at
    least five decades or contain at least six points.
    """
    deltas = sorted((float(d) for d in deltas), reverse=True)
    if len(deltas) < 2:
        raise ValueError("need at least two noise levels")
    span = deltas[0] / deltas[-1]
    if len(deltas) < 6 and span < 1e5 * (1.0 - 1e-9):
        raise ValueError(
            "noise grid too small: need >= 6 points or >= 5 decades of span"
        )
    rows = []
    for delta in deltas:
        alpha = float(alpha_rule(delta))
        error, iterations, stalled = run_single(delta, alpha)
        rows.append(RateRow(delta=delta, alpha=alpha, error=float(error),
                            iterations=int(iterations), stalled=bool(stalled)))
    usable = [(row.delta, row.error) for row in rows if not row.stalled]
    excluded = len(rows) - len(usable)
    if len(usable) >= 3:
        fit = fit_rate(usable)
    else:  # too many stalls to fit; report survives with flagged rows
        nan = float("nan")
        fit = {"slope": nan, "intercept": nan, "r_squared": nan}
    return RateReport(rows=rows, fitted_slope=fit["slope"],
                      theoretical_exponent=float(theoretical_exponent),
                      intercept=fit["intercept"], r_squared=fit["r_squared"],
                      excluded=excluded)


@dataclass
class DiagonalModel:
    """Compact linear benchmark: T diagonal with geometrically decaying spectrum.

    The truth is generated through the spectral source condition at
    smoothness s, so the optimal-rate exponent s/(1+s) is the target for the
    plain-norm error slope.
    """

    mode_count: int = 128
    ratio: float = 2.0 ** -0.5
    smoothness: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("singular-value ratio must lie in (0, 1)")
        if self.smoothness <= 0.0:
            raise ValueError("smoothness must be positive")

    @property
    def singular_values(self):
        k = np.arange(self.mode_count)
        return self.ratio**k

    @property
    def x_dag(self):
        return self.scale * self.singular_values**self.smoothness

    @property
    def y_exact(self):
        return self.singular_values * self.x_dag

    def run_single(self, delta: float, alpha: float, seed: int = 0):
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(self.mode_count)
        noise *= delta / np.linalg.norm(noise)
        x = diagonal_solve(self.singular_values, self.y_exact + noise, alpha)
        error = float(np.linalg.norm(x - self.x_dag))
        return error, 1, False
