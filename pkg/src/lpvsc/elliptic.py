"""Neumann elliptic solver with measure data, and its inverse-problem adjoints.

The forward problem is the weak form

    integral( kappa grad(u) . grad(phi) + a u phi ) dx = integral( phi ) d(mu)

on the unit interval or square with natural (homogeneous Neumann) boundary,
where mu is a signed measure: interior point masses, an optional interior
density and a boundary density.  Discretization is cell-centered finite
volumes: a symmetric positive-definite 5-point operator (3-point in 1-D)
with harmonic averaging of kappa across cell faces, so flux continuity
survives coefficient jumps.  Point masses load the cell containing their
location with their bare weight (equivalently, weight / cell_measure as a
density); ties at cell faces go to the upper cell.

The module also provides the discrete Sobolev norms used by the stability
experiments, a dual-norm surrogate built on the cosine-basis dyadic
decomposition (the DCT-II diagonalizes the cell-centered Neumann Laplacian),
the clip-then-shrink projection onto the feasible coefficient set, and the
linearized/adjoint solves that drive descent on the Tikhonov objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .dyadic import build_dyadic_fourier, tl_dual_norm
from .grids import Grid, GridFunction
from .lebesgue import lp_norm


class DiffusionField:
    """Positive per-cell diffusion coefficient with optional subdomain labels.

    The values must stay inside [lambda0, Lambda]; continuity inside each
    labeled subdomain is realized by piecewise-constant construction (see
    :func:`piecewise_constant`).
    """

    def __init__(self, grid: Grid, values, subdomain_labels=None,
                 lambda0: float = 1.0, Lambda: float = 10.0):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError("kappa shape does not match grid")
        if not 0.0 < lambda0 < Lambda:
            raise ValueError("need 0 < lambda0 < Lambda")
        if values.min() < lambda0 or values.max() > Lambda:
            raise ValueError(
                f"kappa range [{values.min()}, {values.max()}] escapes "
                f"[{lambda0}, {Lambda}]"
            )
        if subdomain_labels is None:
            subdomain_labels = np.zeros(grid.shape, dtype=np.int64)
        self.grid = grid
        self.values = values
        self.subdomain_labels = np.asarray(subdomain_labels, dtype=np.int64)
        self.lambda0 = lambda0
        self.Lambda = Lambda


def piecewise_constant(grid: Grid, rectangles, background: float = 1.0,
                       lambda0: float = 1.0, Lambda: float = 10.0) -> DiffusionField:
    """Diffusion field constant on axis-aligned rectangles over a background.

    ``rectangles`` is a sequence of (bounds, value) with bounds (x0, x1) in
    1-D or (x0, x1, y0, y1) in 2-D; later entries overwrite earlier ones.
    """
    values = np.full(grid.shape, float(background))
    labels = np.zeros(grid.shape, dtype=np.int64)
    coords = grid.meshgrid()
    for tag, (bounds, value) in enumerate(rectangles, start=1):
        if grid.dimension == 1:
            x0, x1 = bounds
            inside = (coords[0] >= x0) & (coords[0] < x1)
        else:
            x0, x1, y0, y1 = bounds
            inside = (
                (coords[0] >= x0) & (coords[0] < x1)
                & (coords[1] >= y0) & (coords[1] < y1)
            )
        values[inside] = float(value)
        labels[inside] = tag
    return DiffusionField(grid, values, labels, lambda0=lambda0, Lambda=Lambda)


@dataclass
class MeasureData:
    """Signed measure data: point masses, interior density, boundary density.

    ``interior_masses`` is a list of (location, weight); locations are floats
    in 1-D and (x, y) pairs in 2-D, inside the domain closure.  The boundary
    density is a dict keyed by side ("left", "right" and, in 2-D, "bottom",
    "top"); 1-D sides carry scalars (atoms at the endpoints), 2-D sides carry
    one value per boundary cell.
    """

    interior_masses: list = field(default_factory=list)
    interior_density: GridFunction | None = None
    boundary_density: dict = field(default_factory=dict)

    def containing_cell(self, grid: Grid, location):
        loc = np.atleast_1d(np.asarray(location, dtype=np.float64))
        idx = []
        for axis in range(grid.dimension):
            x = loc[axis]
            if not 0.0 <= x <= grid.lengths[axis]:
                raise ValueError(f"point mass at {location} outside the domain")
            i = int(np.floor(x / grid.spacings[axis]))
            idx.append(min(i, grid.points - 1))
        return tuple(idx)

    def build_rhs(self, grid: Grid):
        """Right-hand side of the integrated (cell-wise) discrete weak form."""
        b = np.zeros(grid.shape)
        if self.interior_density is not None:
            if self.interior_density.grid != grid:
                raise ValueError("interior density lives on a different grid")
            b += self.interior_density.values * grid.cell_measure
        for location, weight in self.interior_masses:
            b[self.containing_cell(grid, location)] += weight
        for side, g in self.boundary_density.items():
            if grid.dimension == 1:
                if side == "left":
                    b[0] += float(g)
                elif side == "right":
                    b[-1] += float(g)
                else:
                    raise ValueError(f"unknown 1-D boundary side {side!r}")
            else:
                g = np.broadcast_to(np.asarray(g, dtype=np.float64), (grid.points,))
                hx, hy = grid.spacings
                if side == "left":
                    b[0, :] += g * hy
                elif side == "right":
                    b[-1, :] += g * hy
                elif side == "bottom":
                    b[:, 0] += g * hx
                elif side == "top":
                    b[:, -1] += g * hx
                else:
                    raise ValueError(f"unknown boundary side {side!r}")
        return b

    def total_variation(self, grid: Grid) -> float:
        tv = sum(abs(w) for _, w in self.interior_masses)
        if self.interior_density is not None:
            tv += lp_norm(self.interior_density, 1.0)
        for side, g in self.boundary_density.items():
            if grid.dimension == 1:
                tv += abs(float(g))
            else:
                edge = grid.spacings[1] if side in ("left", "right") else grid.spacings[0]
                g = np.broadcast_to(np.asarray(g, dtype=np.float64), (grid.points,))
                tv += float(np.sum(np.abs(g)) * edge)
        return float(tv)


class FeasibleSet:
    """Coefficients with ||a||_p_frak <= M and a >= a_lower pointwise."""

    def __init__(self, p_frak: float, M: float, a_lower: float, dimension: int = 2):
        if p_frak <= dimension / 2.0:
            raise ValueError(
                f"p_frak must exceed dimension/2 = {dimension / 2.0}, got {p_frak}"
            )
        if a_lower <= 0.0 or M <= 0.0:
            raise ValueError("a_lower and M must be positive")
        self.p_frak = float(p_frak)
        self.M = float(M)
        self.a_lower = float(a_lower)
        self.dimension = dimension

    def contains(self, a: GridFunction, tol: float = 1e-9) -> bool:
        if a.values.min() < self.a_lower - tol:
            return False
        return lp_norm(a, self.p_frak) <= self.M * (1.0 + tol)


@dataclass
class EllipticSolution:
    u: GridFunction
    residual_norm: float
    solver_iterations: int


class DiscreteOperator:
    """Assembled sparse operator with a cached sparse LU factorization."""

    def __init__(self, matrix, grid: Grid):
        self.matrix = matrix.tocsc()
        self.grid = grid
        self._lu = None

    def apply(self, values):
        return (self.matrix @ values.ravel()).reshape(self.grid.shape)

    def solve(self, rhs):
        if self._lu is None:
            self._lu = splu(self.matrix)
        return self._lu.solve(np.asarray(rhs, dtype=np.float64).ravel()).reshape(
            self.grid.shape
        )


def _harmonic(left, right):
    return 2.0 * left * right / (left + right)


def assemble(kappa: DiffusionField, a: GridFunction, grid: Grid) -> DiscreteOperator:
    """Cell-centered finite-volume operator for the weak form.

    Face transmissibilities use the harmonic mean of the adjacent kappa
    values; the Neumann boundary needs no extra terms (zero-flux closure).
    The matrix is symmetric by construction and positive definite as soon as
    a is nonnegative and not identically zero.
    """
    if kappa.grid != grid or a.grid != grid:
        raise ValueError("kappa, a and grid must agree")
    if a.values.min() < 0.0:
        raise ValueError("reaction coefficient a must be nonnegative")
    n = grid.points
    k = kappa.values
    if grid.dimension == 1:
        h = grid.spacings[0]
        t = _harmonic(k[:-1], k[1:]) / h
        main = np.zeros(n)
        main[:-1] += t
        main[1:] += t
        main += a.values * h
        A = sp.diags([-t, main, -t], offsets=[-1, 0, 1], format="csc")
        return DiscreteOperator(A, grid)

    hx, hy = grid.spacings
    idx = np.arange(n * n).reshape(n, n)
    tx = _harmonic(k[:-1, :], k[1:, :]) * hy / hx
    ty = _harmonic(k[:, :-1], k[:, 1:]) * hx / hy
    rows, cols, vals = [], [], []

    def couple(i0, i1, t):
        rows.extend([i0, i1, i0, i1])
        cols.extend([i0, i1, i1, i0])
        vals.extend([t, t, -t, -t])

    couple(idx[:-1, :].ravel(), idx[1:, :].ravel(), tx.ravel())
    couple(idx[:, :-1].ravel(), idx[:, 1:].ravel(), ty.ravel())
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append((a.values * hx * hy).ravel())
    rows = np.concatenate([np.atleast_1d(r) for r in rows])
    cols = np.concatenate([np.atleast_1d(c) for c in cols])
    vals = np.concatenate([np.atleast_1d(v) for v in vals])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n * n, n * n))
    return DiscreteOperator(A, grid)


def solve(kappa: DiffusionField, a: GridFunction, mu: MeasureData,
          feasible: FeasibleSet | None = None,
          operator: DiscreteOperator | None = None) -> EllipticSolution:
    """Solve the discrete weak form for the given measure data.

    A pure-Neumann system with a identically zero is singular and rejected
    up front.  The reported residual is relative to the load.
    """
    if np.max(a.values) <= 0.0:
        raise ValueError("a vanishes identically: pure-Neumann system is singular")
    if feasible is not None and not feasible.contains(a):
        raise ValueError("coefficient outside the feasible set")
    grid = a.grid
    op = operator if operator is not None else assemble(kappa, a, grid)
    b = mu.build_rhs(grid)
    u = op.solve(b)
    bnorm = float(np.linalg.norm(b.ravel()))
    res = float(np.linalg.norm((op.matrix @ u.ravel()) - b.ravel()))
    rel = res / bnorm if bnorm > 0.0 else res
    return EllipticSolution(u=GridFunction(grid, u), residual_norm=rel,
                            solver_iterations=1)


# ---------------------------------------------------------------------------
# Discrete Sobolev scales.
# ---------------------------------------------------------------------------


def _forward_diffs(values, grid: Grid):
    """Forward differences along every axis (one fewer sample per axis)."""
    out = []
    for axis in range(grid.dimension):
        out.append(np.diff(values, axis=axis) / grid.spacings[axis])
    return out


def _second_diffs(values, grid: Grid):
    out = []
    for axis in range(grid.dimension):
        d2 = np.diff(values, n=2, axis=axis) / grid.spacings[axis] ** 2
        out.append(d2)
    return out


def sobolev_norm(u: GridFunction, order: int, tau: float) -> float:
    """Discrete Sobolev norm at integer order 0, 1 or 2.

    Order 0 is the plain L^tau norm; order 1 adds the tau-th powers of the
    forward-difference gradient components; order 2 adds axis-wise second
    differences.  The powers are summed with the uniform cell measure, so
    the orders are monotone by construction.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if not 1.0 < tau < np.inf:
        raise ValueError(f"tau must lie in (1, inf), got {tau}")
    grid = u.grid
    total = np.sum(np.abs(u.values) ** tau) * grid.cell_measure
    if order >= 1:
        for d in _forward_diffs(u.values, grid):
            total += np.sum(np.abs(d) ** tau) * grid.cell_measure
    if order >= 2:
        for d2 in _second_diffs(u.values, grid):
            total += np.sum(np.abs(d2) ** tau) * grid.cell_measure
    return float(total ** (1.0 / tau))


@lru_cache(maxsize=8)
def neumann_decomposition(grid: Grid):
    """Cosine-basis dyadic decomposition for fields with natural boundaries."""
    return build_dyadic_fourier(grid, transform="dct")


def _neumann_eigenvalues(grid: Grid):
    parts = []
    for axis in range(grid.dimension):
        n = grid.points
        h = grid.spacings[axis]
        k = np.arange(n)
        parts.append(4.0 / h**2 * np.sin(np.pi * k / (2.0 * n)) ** 2)
    if grid.dimension == 1:
        return parts[0]
    return parts[0][:, None] + parts[1][None, :]


def dual_h1q_norm(v: GridFunction, q: float, method: str = "shells") -> float:
    """Surrogate for the dual norm of the order-1 Sobolev space at exponent q.

    ``method="shells"`` evaluates the negative-order square function of the
    cosine decomposition at order 1 and exponent p = q/(q-1).  For q = 2,
    ``method="spectral"`` instead computes || (-Lap_N + I)^(-1/2) v ||_2
    through the DCT diagonalization of the cell-centered Neumann Laplacian;
    the two agree up to a stable equivalence constant.
    """
    if not 1.0 < q < np.inf:
        raise ValueError(f"q must lie in (1, inf), got {q}")
    if method == "shells":
        d = neumann_decomposition(v.grid)
        return tl_dual_norm(d, v, theta=1.0, p=q / (q - 1.0))
    if method == "spectral":
        if q != 2.0:
            raise ValueError("the spectral formula is an L^2 construction")
        spec = scipy.fft.dctn(v.values, type=2, norm="ortho")
        eig = _neumann_eigenvalues(v.grid)
        return float(
            np.sqrt(np.sum(np.abs(spec) ** 2 / (1.0 + eig)) * v.grid.cell_measure)
        )
    raise ValueError(f"unknown method {method!r}")


def project_feasible(a: GridFunction, D: FeasibleSet) -> GridFunction:
    """Clip below the floor, then shrink toward it until the norm ball is met.

    Not the exact metric projection (that has no closed form for the joint
    constraint); the surrogate preserves feasibility, which is all the
    backtracking descent needs.
    """
    grid = a.grid
    clipped = np.maximum(a.values, D.a_lower)
    candidate = GridFunction(grid, clipped)
    if lp_norm(candidate, D.p_frak) <= D.M:
        return candidate
    floor = np.full(grid.shape, D.a_lower)
    floor_norm = lp_norm(GridFunction(grid, floor), D.p_frak)
    if floor_norm > D.M:
        raise ValueError(
            f"infeasible set: the constant floor already has norm {floor_norm} > M"
        )

    def excess(t):
        return lp_norm(GridFunction(grid, floor + t * (clipped - floor)), D.p_frak) - D.M

    t = brentq(excess, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
    out = floor + t * (clipped - floor)
    while lp_norm(GridFunction(grid, out), D.p_frak) > D.M:
        t *= 1.0 - 1e-14
        out = floor + t * (clipped - floor)
    return GridFunction(grid, out)


# ---------------------------------------------------------------------------
# Observation-space norms and derivative machinery for the inverse problem.
# ---------------------------------------------------------------------------


class ObservationNorm:
    """Norm of the observation space Y with its fidelity derivative.

    kind "l2" is the plain L^2 norm (tau = 2), "lp" the L^tau norm, "h1"
    the order-1 Sobolev norm at tau = 2 (the fast path).  The fidelity is
    (1/ell) * distance^ell and ``gradient_density`` returns its derivative
    with respect to the field, as a density against the cell measure.
    """

    def __init__(self, kind: str = "l2", tau: float = 2.0, ell: float = 2.0):
        if kind not in ("l2", "lp", "h1"):
            raise ValueError(f"unsupported observation norm kind {kind!r}")
        if kind == "l2":
            tau = 2.0
        if kind == "h1" and tau != 2.0:
            raise ValueError("the order-1 observation norm is implemented for tau = 2")
        if ell <= 1.0:
            raise ValueError(f"ell must exceed 1, got {ell}")
        self.kind = kind
        self.tau = float(tau)
        self.ell = float(ell)

    def norm(self, f: GridFunction) -> float:
        if self.kind == "h1":
            return sobolev_norm(f, 1, 2.0)
        return lp_norm(f, self.tau)

    def distance(self, u: GridFunction, v: GridFunction) -> float:
        return self.norm(u - v)

    def fidelity(self, residual: GridFunction) -> float:
        return self.norm(residual) ** self.ell / self.ell

    def gradient_density(self, residual: GridFunction):
        r = residual.values
        grid = residual.grid
        if self.kind == "h1":
            # derivative of 0.5 (||r||^2 + ||grad r||^2), ell = 2 fast path
            if self.ell != 2.0:
                raise ValueError("the order-1 observation norm requires ell = 2")
            out = r.copy()
            for axis in range(grid.dimension):
                d = np.diff(r, axis=axis) / grid.spacings[axis]
                pad = [(0, 0)] * grid.dimension
                pad[axis] = (1, 0)
                lead = np.pad(d, pad)
                pad[axis] = (0, 1)
                trail = np.pad(d, pad)
                out += (lead - trail) / grid.spacings[axis]
            return out
        nrm = self.norm(residual)
        if nrm == 0.0:
            return np.zeros(grid.shape)
        density = np.zeros(grid.shape)
        nz = r != 0.0
        density[nz] = np.abs(r[nz]) ** (self.tau - 2.0) * r[nz]
        return nrm ** (self.ell - self.tau) * density


def linearized_solve(kappa: DiffusionField, a: GridFunction, h: GridFunction,
                     u_a: EllipticSolution,
                     operator: DiscreteOperator | None = None) -> GridFunction:
    """Directional derivative of the forward map: v solves A(a) v = -h u_a."""
    grid = a.grid
    op = operator if operator is not None else assemble(kappa, a, grid)
    rhs = -(h.values * u_a.u.values) * grid.cell_measure
    return GridFunction(grid, op.solve(rhs))


def adjoint_gradient(kappa: DiffusionField, a: GridFunction,
                     u_a: EllipticSolution, residual: GridFunction,
                     y_spec: ObservationNorm,
                     operator: DiscreteOperator | None = None) -> GridFunction:
    """Gradient of the fidelity term with respect to the coefficient a.

    Solves the (self-adjoint) operator against the fidelity derivative and
    returns -u_a * w as a density.
    """
    grid = a.grid
    op = operator if operator is not None else assemble(kappa, a, grid)
    load = y_spec.gradient_density(residual) * grid.cell_measure
    w = op.solve(load)
    return GridFunction(grid, -u_a.u.values * w)


@dataclass
class EllipticProblem:
    """Bundle of everything the inverse problem needs about the forward side."""

    grid: Grid
    kappa: DiffusionField
    mu: MeasureData
    feasible: FeasibleSet
    obs: ObservationNorm

    def forward(self, a: GridFunction,
                operator: DiscreteOperator | None = None) -> EllipticSolution:
        return solve(self.kappa, a, self.mu, operator=operator)
