"""Discrete Lebesgue-space primitives.

Norms, duality products and the generalized duality map on grid functions,
together with uniform-convexity diagnostics and the scalar superposition map
phi_p(t) = |t|^(p-2) t.

For 1 < p < infinity write q = p/(p-1), p_hat = max(p, 2), q_hat = min(q, 2).
The central objects are

    J(w) = ||w||_p^(p_hat - p) |w|^(p-2) w,

which satisfies <w, J(w)> = ||w||_p^p_hat and ||J(w)||_q = ||w||_p^(p_hat-1),
and the uniform-convexity inequality

    ||w + y||_p^p_hat >= ||w||_p^p_hat + p_hat <y, J(w)> + c_p ||y||_p^p_hat

whose constant c_p has no closed form here and is estimated by sampling.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .grids import Grid, GridFunction


class Exponents:
    """Conjugate exponent bookkeeping: p, q, p_hat = max(p,2), q_hat = min(q,2)."""

    def __init__(self, p: float):
        p = float(p)
        if not 1.0 < p < np.inf:
            raise ValueError(f"p must lie in (1, inf), got {p}")
        self.p = p
        self.q = p / (p - 1.0)
        self.p_hat = max(p, 2.0)
        self.q_hat = min(self.q, 2.0)

    def __repr__(self):
        return f"Exponents(p={self.p})"


def lp_norm(f: GridFunction, p: float) -> float:
    """Midpoint-rule L^p norm, (sum |f_i|^p * cell_measure)^(1/p)."""
    if p < 1.0:
        raise ValueError(f"invalid exponent p={p}; need p >= 1")
    a = np.abs(f.values)
    if p == 2.0:
        # cheap and slightly more accurate path for the common case
        return float(np.sqrt(np.sum(a * a) * f.grid.cell_measure))
    return float((np.sum(a**p) * f.grid.cell_measure) ** (1.0 / p))


def duality_product(f: GridFunction, g: GridFunction):
    """Sesquilinear pairing sum f_i * conj(g_i) * cell_measure.

    Conjugate-linear in the second argument; reduces to the real L^2 pairing
    for real inputs, in which case a float is returned.
    """
    if f.grid != g.grid:
        raise ValueError("grid mismatch in duality product")
    out = np.sum(f.values * np.conj(g.values)) * f.grid.cell_measure
    if f.is_real and g.is_real:
        return float(out.real) if np.iscomplexobj(out) else float(out)
    return complex(out)


def phi_p_apply(f: GridFunction, p: float) -> GridFunction:
    """Pointwise |f|^(p-2) f with the convention 0 at zeros of f."""
    if p <= 1.0:
        raise ValueError(f"invalid exponent p={p}; need p > 1")
    v = f.values
    if not f.is_real:
        raise ValueError("phi_p acts on real-valued functions")
    if p == 2.0:
        return GridFunction(f.grid, v.copy())
    out = np.zeros_like(v)
    nz = v != 0.0
    out[nz] = np.abs(v[nz]) ** (p - 2.0) * v[nz]
    return GridFunction(f.grid, out)


def duality_map(w: GridFunction, e: Exponents, smoothing: float = 0.0) -> GridFunction:
    """Generalized duality map J(w) = ||w||_p^(p_hat-p) |w|^(p-2) w.

    With smoothing > 0 the modulus is replaced by sqrt(w^2 + smoothing^2),
    which regularizes the singularity at w = 0 when p < 2; the default is the
    exact map with J(w) = 0 wherever w = 0.
    """
    if not w.is_real:
        raise ValueError("duality map defined for real-valued functions here")
    p, p_hat = e.p, e.p_hat
    norm = lp_norm(w, p)
    if norm == 0.0:
        return GridFunction(w.grid, np.zeros_like(w.values))
    scale = norm ** (p_hat - p)
    v = w.values
    if smoothing > 0.0:
        mod = np.sqrt(v * v + smoothing * smoothing)
        return GridFunction(w.grid, scale * mod ** (p - 2.0) * v)
    return GridFunction(w.grid, scale * phi_p_apply(w, p).values)


def convexity_gap(w: GridFunction, y: GridFunction, e: Exponents, c: float) -> float:
    """Slack of the uniform-convexity inequality with trial constant c.

    Returns ||w+y||^p_hat - ||w||^p_hat - p_hat <y, J(w)> - c ||y||^p_hat,
    which is nonnegative whenever c <= c_p; c = 0 probes plain convexity of
    (1/p_hat) ||.||_p^p_hat, whose gradient is exactly the duality map.
    """
    p, p_hat = e.p, e.p_hat
    gap = lp_norm(w + y, p) ** p_hat - lp_norm(w, p) ** p_hat
    gap -= p_hat * duality_product(y, duality_map(w, e))
    gap -= c * lp_norm(y, p) ** p_hat
    return float(gap)


def estimate_cp(
    e: Exponents,
    sample_count: int = 10_000,
    seed: int = 0,
    grid: Grid | None = None,
) -> float:
    """Empirical lower estimate of the uniform-convexity constant c_p.

    Minimizes (||w+y||^p_hat - ||w||^p_hat - p_hat <y,J(w)>) / ||y||^p_hat
    over seeded Gaussian pairs (w, y).  For p = 2 the quotient equals 1
    identically (parallelogram identity), so the estimate is 1 up to
    rounding.  A nonpositive result signals an exponent bookkeeping bug and
    raises.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if grid is None:
        grid = Grid(1, 64)
    rng = np.random.default_rng(seed)
    p, p_hat = e.p, e.p_hat
    h = grid.cell_measure
    best = np.inf
    for _ in range(sample_count):
        w = rng.standard_normal(grid.shape)
        y = rng.standard_normal(grid.shape)
        nw = (np.sum(np.abs(w) ** p) * h) ** (1.0 / p)
        ny = (np.sum(np.abs(y) ** p) * h) ** (1.0 / p)
        if nw == 0.0 or ny == 0.0:
            continue
        nwy = (np.sum(np.abs(w + y) ** p) * h) ** (1.0 / p)
        jw = nw ** (p_hat - p) * np.abs(w) ** (p - 2.0) * w
        pairing = np.sum(y * jw) * h
        ratio = (nwy**p_hat - nw**p_hat - p_hat * pairing) / ny**p_hat
        if ratio < best:
            best = ratio
    if not best > 0.0:
        raise ArithmeticError(
            f"nonpositive convexity estimate {best} for p={p}; "
            "exponent bookkeeping is broken"
        )
    return float(best)


# ---------------------------------------------------------------------------
# The scalar map phi_p and its Hoelder regularity.
# ---------------------------------------------------------------------------


def phi_p_coefficient(p: float, order: int) -> float:
    """Falling product c_l = (p-1)(p-2)...(p-l); c_0 = 1."""
    c = 1.0
    for i in range(1, order + 1):
        c *= p - i
    return c


def phi_p_derivative(t, p: float, order: int):
    """Analytic l-th derivative of phi_p(t) = |t|^(p-2) t.

    For t > 0 the derivative is c_l t^(p-1-l); the odd symmetry of phi_p
    gives (-1)^(l+1) c_l (-t)^(p-1-l) for t < 0, and the value 0 at t = 0
    (valid for l < p - 1).
    """
    t = np.asarray(t, dtype=np.float64)
    c = phi_p_coefficient(p, order)
    expo = p - 1.0 - order
    out = np.zeros_like(t)
    pos = t > 0
    neg = t < 0
    out[pos] = c * t[pos] ** expo
    out[neg] = (-1.0) ** (order + 1) * c * (-t[neg]) ** expo
    return out if out.ndim else float(out)


class HolderEstimate(NamedTuple):
    N: int
    tau: float
    constant_estimate: float


def phi_p_holder_estimate(p: float, grid_count: int = 400) -> HolderEstimate:
    """Sampled Hoelder constant of the N-th derivative of phi_p.

    N is the largest integer strictly below p - 1 and tau = p - 1 - N is the
    matching Hoelder exponent in (0, 1].  The supremum of

        |phi_p^(N)(t1) - phi_p^(N)(t0)| / |t1 - t0|^tau

    over a sign-spanning 1-D sample set is returned; analytically it is
    bounded by 2 c_N, and a sampled supremum can only fall below that.
    """
    if p <= 1.0:
        raise ValueError(f"invalid exponent p={p}; need p > 1")
    N = int(np.ceil(p - 1.0)) - 1
    tau = p - 1.0 - N
    half = np.geomspace(1e-6, 2.0, grid_count // 2)
    ts = np.concatenate([-half[::-1], [0.0], half])
    vals = phi_p_derivative(ts, p, N)
    dv = np.abs(vals[:, None] - vals[None, :])
    dt = np.abs(ts[:, None] - ts[None, :])
    mask = dt > 0
    quot = dv[mask] / dt[mask] ** tau
    return HolderEstimate(N=N, tau=tau, constant_estimate=float(np.max(quot)))
