"""Index functions and variational source-condition checking.

An index function Psi is concave, strictly increasing and vanishes at 0+.
Given a base function Psi0(delta) = delta^mu from a conditional stability
estimate, smoothness s in (0, 1] of the source element f* = J(x_true - x_prior)
and the dual-norm order theta, the rate-generating index function is

    Psi(delta) = C ||f*||_theta Psi0(delta)                       if s = 1 or theta = 0,
    Psi(delta) = C inf_{lam >= 1} [ 2^(-lam qhat s theta) ||f*||^qhat
                 + 2^((lam+1) theta (1-s)) ||f*|| Psi0(delta) ]   otherwise,

where ||f*|| abbreviates the square-function norm of smoothness s*theta.  The
infimum is attained at the unique stationary point of a strictly convex
exponential sum and is evaluated in closed form (clamped to lam >= 1), which
matches a dense-grid minimization to rounding.  For small delta the function
obeys  Psi(delta) = O(Psi0(delta)^(qhat s / (1 + (qhat-1) s))).

The source condition itself, for beta in (0, c_p), reads

    <x_true - x, J(x_true - x_prior)>
        <= ((c_p - beta)/p_hat) ||x - x_true||_p^p_hat + Psi(||T(x)-T(x_true)||_Y)

and is checked sample-wise; the margin is right side minus left side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import LPDecomposition, tl_dual_norm
from .grids import GridFunction
from .lebesgue import Exponents, duality_map, duality_product, lp_norm


@dataclass(frozen=True)
class HolderIndex:
    """Base index function Psi0(delta) = delta^mu with mu in (0, 1]."""

    mu: float

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError(f"Hoelder exponent mu must lie in (0, 1], got {self.mu}")

    def __call__(self, delta):
        return delta**self.mu


@dataclass(frozen=True)
class SourceNorms:
    """Square-function norms of the source element: at order s*theta and at order theta."""

    F_s_theta: float
    F_theta: float


class IndexFunction:
    """Evaluable concave rate function; see the module docstring for the formula."""

    def __init__(self, kind, C, s, theta, q_hat, f_norms: SourceNorms,
                 psi0: HolderIndex):
        self.kind = kind
        self.C = float(C)
        self.s = float(s)
        self.theta = float(theta)
        self.q_hat = float(q_hat)
        self.f_norms = f_norms
        self.psi0 = psi0
        self._validate()

    def inf_argument(self, delta: float) -> float:
        """Minimizing lam >= 1 of the inf-form integrand (inf-form kind only)."""
        u = self.q_hat * self.s * self.theta
        v = self.theta * (1.0 - self.s)
        A = self.f_norms.F_s_theta**self.q_hat
        B = 2.0**v * self.f_norms.F_s_theta * self.psi0(delta)
        return max(1.0, float(np.log2(u * A / (v * B)) / (u + v)))

    def __call__(self, delta: float) -> float:
        if delta < 0.0:
            raise ValueError("delta must be nonnegative")
        if delta == 0.0:
            return 0.0
        if self.kind == "linear-in-psi0":
            return self.C * self.f_norms.F_theta * self.psi0(delta)
        u = self.q_hat * self.s * self.theta
        v = self.theta * (1.0 - self.s)
        A = self.f_norms.F_s_theta**self.q_hat
        B = 2.0**v * self.f_norms.F_s_theta * self.psi0(delta)
        lam = self.inf_argument(delta)
        return self.C * (A * 2.0 ** (-u * lam) + B * 2.0 ** (v * lam))

    def _validate(self):
        """Numerical check of the index-function axioms on a log grid."""
        grid = np.geomspace(1e-12, 1e2, 57)
        vals = np.array([self(d) for d in grid])
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise ValueError("index function must be finite and positive")
        if not np.all(np.diff(vals) > 0.0):
            raise ValueError("index function must be strictly increasing")
        coarse = grid[::4]
        cvals = vals[::4]
        for i in range(len(coarse)):
            for j in range(i + 1, len(coarse)):
                for t in (0.25, 0.5, 0.75):
                    mid = t * coarse[i] + (1.0 - t) * coarse[j]
                    bound = t * cvals[i] + (1.0 - t) * cvals[j]
                    if self(mid) < bound - 1e-10 * max(1.0, bound):
                        raise ValueError("index function failed the concavity check")
        tail = [self(d) for d in (1e-20, 1e-40, 1e-60)]
        if not tail[0] > tail[1] > tail[2] > 0.0:
            raise ValueError("index function must decay to zero at 0+")


def make_psi(C, s, theta, q_hat, f_dag_norms: SourceNorms,
             psi0: HolderIndex) -> IndexFunction:
    """Build the rate-generating index function.

    The linear branch applies when s = 1 or theta = 0; otherwise the inf-form
    branch with the closed-form minimizer is used.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0, 1], got {s}")
    if theta < 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if C <= 0.0:
        raise ValueError(f"C must be positive, got {C}")
    if not 1.0 < q_hat <= 2.0:
        raise ValueError(f"q_hat must lie in (1, 2], got {q_hat}")
    if s == 1.0 or theta == 0.0:
        if f_dag_norms.F_theta <= 0.0:
            raise ValueError("the order-theta source norm must be positive")
        kind = "linear-in-psi0"
    else:
        if f_dag_norms.F_s_theta <= 0.0:
            raise ValueError("the order-s*theta source norm must be positive")
        kind = "inf-form"
    return IndexFunction(kind, C, s, theta, q_hat, f_dag_norms, psi0)


def psi_decay_ratio(psi: IndexFunction, delta: float) -> float:
    """Psi(delta) divided by its theoretical small-delta envelope.

    The envelope is Psi0(delta)^(qhat s / (1 + (qhat - 1) s)); the ratio is
    bounded for small delta and exactly constant on the unclamped branch.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    expo = psi.q_hat * psi.s / (1.0 + (psi.q_hat - 1.0) * psi.s)
    return psi(delta) / psi.psi0(delta) ** expo


def alpha_choice(delta: float, ell: float, psi: IndexFunction) -> float:
    """A-priori regularization parameter delta^ell / Psi(delta)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if ell <= 1.0:
        raise ValueError(f"ell must exceed 1, got {ell}")
    val = psi(delta)
    if val == 0.0:
        raise ArithmeticError("degenerate parameter choice: Psi(delta) = 0")
    return delta**ell / val


@dataclass
class StabilityReport:
    least_constant: float
    sample_count: int
    skipped: int
    non_identifiable: list

    @property
    def flagged(self):
        return bool(self.non_identifiable)


def check_stability(samples, x_dag: GridFunction, psi0: HolderIndex,
                    theta: float, decomp: LPDecomposition,
                    e: Exponents) -> StabilityReport:
    """Least constant of the conditional stability estimate over samples.

    Each sample is a pair (x, distance) with distance the observation-space
    misfit to the true solution.  The returned constant is the maximum of
    dual_norm(x_true - x) / Psi0(distance); coincident samples are skipped,
    and a zero distance with a nonzero numerator is recorded as an exact
    non-identifiability flag.
    """
    best = 0.0
    used = 0
    skipped = 0
    flags = []
    for i, (x, dist) in enumerate(samples):
        num = tl_dual_norm(decomp, x_dag - x, theta, e.p)
        if dist == 0.0:
            if num <= 1e-14:
                skipped += 1
            else:
                flags.append(i)
            continue
        best = max(best, num / psi0(dist))
        used += 1
    return StabilityReport(least_constant=best, sample_count=used,
                           skipped=skipped, non_identifiable=flags)


@dataclass
class VSCReport:
    beta: float
    worst_margin: float
    violating_sample: int | None
    sample_count: int

    def passes(self, tolerance: float = 0.0) -> bool:
        return self.worst_margin >= -tolerance


def check_vsc(samples, x_dag: GridFunction, x_star: GridFunction,
              psi: IndexFunction, beta: float, e: Exponents,
              c_p: float) -> VSCReport:
    """Sample-wise margins of the variational source condition.

    ``samples`` is an iterable of (x, distance) pairs.  The margin of a
    sample is the right side minus the left side of the condition; the
    report aggregates by the minimum.
    """
    if not 0.0 < beta < c_p:
        raise ValueError(f"beta must lie in (0, c_p) = (0, {c_p}), got {beta}")
    f_dag = duality_map(x_dag - x_star, e)
    quad_coeff = (c_p - beta) / e.p_hat
    worst = np.inf
    worst_index = None
    count = 0
    for i, (x, dist) in enumerate(samples):
        lhs = duality_product(x_dag - x, f_dag)
        rhs = quad_coeff * lp_norm(x - x_dag, e.p) ** e.p_hat
        rhs += psi(dist) if dist > 0.0 else 0.0
        margin = rhs - lhs
        count += 1
        if margin < worst:
            worst = margin
            worst_index = i
    return VSCReport(
        beta=beta,
        worst_margin=float(worst),
        violating_sample=worst_index if worst < 0.0 else None,
        sample_count=count,
    )


def calibrate_C(samples, x_dag: GridFunction, x_star: GridFunction,
                beta: float, e: Exponents, c_p: float, s: float, theta: float,
                q_hat: float, f_dag_norms: SourceNorms, psi0: HolderIndex):
    """Smallest power-of-two C making every sampled margin nonnegative.

    Returns the calibrated index function together with its final report.
    The existence statement behind the condition leaves C unquantified, so it
    is fixed here by the data: margins are monotone increasing in C, hence a
    threshold exists unless some sample has zero misfit but a positive left
    side, which is raised as non-identifiability.
    """
    samples = list(samples)
    f_dag = duality_map(x_dag - x_star, e)
    quad_coeff = (c_p - beta) / e.p_hat
    unit = make_psi(1.0, s, theta, q_hat, f_dag_norms, psi0)
    needed = 0.0
    for x, dist in samples:
        lhs = duality_product(x_dag - x, f_dag)
        slack = lhs - quad_coeff * lp_norm(x - x_dag, e.p) ** e.p_hat
        if slack <= 0.0:
            continue
        if dist <= 0.0:
            raise ArithmeticError(
                "sample with zero misfit but positive pairing; no C can work"
            )
        needed = max(needed, slack / unit(dist))
    C = 2.0 ** max(0, int(np.ceil(np.log2(needed)))) if needed > 0.0 else 1.0
    psi = make_psi(C, s, theta, q_hat, f_dag_norms, psi0)
    report = check_vsc(samples, x_dag, x_star, psi, beta, e, c_p)
    if report.worst_margin < 0.0:
        # one safety doubling in case the threshold landed on a rounding edge
        C *= 2.0
        psi = make_psi(C, s, theta, q_hat, f_dag_norms, psi0)
        report = check_vsc(samples, x_dag, x_star, psi, beta, e, c_p)
    return psi, report
