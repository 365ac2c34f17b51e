"""Named self-check bundles runnable through the experiment harness.

Each suite exercises one family of library guarantees at the sizes used for
sign-off and returns a flat record of measured quantities plus a pass flag.
The harness serializes the record; the test suite reuses the same entry
points so that command-line runs and pytest agree on what was checked.
"""

from __future__ import annotations

import numpy as np

from .dyadic import (
    SquareFunctionParams,
    build_dyadic_fourier,
    calibrate_decomposition,
    high_pass,
    identity_operator,
    low_pass,
    project,
    rbound_estimate,
    reconstruct,
    tl_norm,
    MultiplierOperator,
)
from .elliptic import (
    DiffusionField,
    MeasureData,
    solve,
)
from .grids import Grid, GridFunction
from .lebesgue import (
    Exponents,
    convexity_gap,
    duality_map,
    duality_product,
    estimate_cp,
    lp_norm,
    phi_p_coefficient,
    phi_p_holder_estimate,
)
from .tikhonov import fit_rate
from .vsc import HolderIndex, SourceNorms, make_psi, psi_decay_ratio


def duality_identities(trials: int = 10_000, exponents=(1.5, 2.0, 3.0, 4.0),
                       points: int = 64, seed: int = 11) -> dict:
    """Both defining identities of the duality map, in relative terms."""
    grid = Grid(1, points)
    rng = np.random.default_rng(seed)
    worst_pairing = 0.0
    worst_norm = 0.0
    for p in exponents:
        e = Exponents(p)
        for _ in range(trials):
            w = GridFunction(grid, rng.standard_normal(grid.shape))
            j = duality_map(w, e)
            target = lp_norm(w, p) ** e.p_hat
            worst_pairing = max(
                worst_pairing, abs(duality_product(w, j) - target) / target
            )
            target = lp_norm(w, p) ** (e.p_hat - 1.0)
            worst_norm = max(
                worst_norm, abs(lp_norm(j, e.q) - target) / target
            )
    passed = worst_pairing <= 1e-10 and worst_norm <= 1e-10
    return {
        "suite": "duality-identities",
        "trials": trials,
        "worst_pairing_error": worst_pairing,
        "worst_norm_error": worst_norm,
        "passed": bool(passed),
    }


def uniform_convexity(trials: int = 10_000, exponents=(1.5, 2.0, 3.0, 4.0),
                      points: int = 64, seed: int = 5) -> dict:
    """Nonnegativity of the convexity gap and the exact p = 2 modulus."""
    grid = Grid(1, points)
    rng = np.random.default_rng(seed)
    worst_gap = np.inf
    for p in exponents:
        e = Exponents(p)
        for _ in range(trials):
            w = GridFunction(grid, rng.standard_normal(grid.shape))
            y = GridFunction(grid, rng.standard_normal(grid.shape))
            worst_gap = min(worst_gap, convexity_gap(w, y, e, 0.0))
    cp_two = estimate_cp(Exponents(2.0), sample_count=2000, seed=seed)
    passed = worst_gap >= -1e-12 and abs(cp_two - 1.0) <= 1e-10
    return {
        "suite": "uniform-convexity",
        "trials": trials,
        "worst_gap": float(worst_gap),
        "cp_at_two": cp_two,
        "passed": bool(passed),
    }


def _case_table_checks(d, rng, rounds: int) -> float:
    """Worst relative error of the projection/cutoff composition tables."""
    grid = d.grid
    worst = 0.0
    for _ in range(rounds):
        z = GridFunction(grid, rng.standard_normal(grid.shape))
        scale = max(np.max(np.abs(z.values)), 1.0)
        m = int(rng.integers(1, d.j_max - 1))
        lam = m + float(rng.uniform(0.0, 1.0))
        low = low_pass(d, lam, z)
        high = high_pass(d, lam, z)
        for j in range(d.j_max + 1):
            pj_low = project(d, j, low).values
            pj_high = project(d, j, high).values
            if j <= m - 1:
                want_low = project(d, j, z).values
                want_high = np.zeros(grid.shape)
            elif j == m:
                cross = d.apply_mask(d.masks[m] * d.masks[m + 1], z).values
                want_low = project(d, j, z).values - cross
                want_high = cross
            elif j == m + 1 and j <= d.j_max:
                sym = d.masks[m + 1] * (d.masks[m + 1] + d.masks[m + 2])
                want_high = d.apply_mask(sym, z).values
                want_low = project(d, j, z).values - want_high
            else:
                want_low = np.zeros(grid.shape)
                want_high = project(d, j, z).values
            worst = max(worst,
                        np.max(np.abs(pj_low - want_low)) / scale,
                        np.max(np.abs(pj_high - want_high)) / scale)
    return worst


def decomposition_identities(points: int = 256, seed: int = 3,
                             rounds: int = 25) -> dict:
    """Partition, almost-orthogonality, norm equivalence and cutoff tables."""
    grid = Grid(1, points)
    d = build_dyadic_fourier(grid)
    rng = np.random.default_rng(seed)

    partition_exact = bool(
        np.array_equal(np.sum(np.stack(d.masks), axis=0), d.cumulative[-1])
    )

    worst_orth_symbol = 0.0
    worst_orth_applied = 0.0
    probe = GridFunction(grid, rng.standard_normal(grid.shape))
    probe_scale = np.max(np.abs(probe.values))
    for j in range(d.j_max + 1):
        for k in range(j + 2, d.j_max + 1):
            worst_orth_symbol = max(
                worst_orth_symbol, float(np.max(np.abs(d.masks[j] * d.masks[k])))
            )
            composed = project(d, j, project(d, k, probe)).values
            worst_orth_applied = max(
                worst_orth_applied, np.max(np.abs(composed)) / probe_scale
            )

    worst_recon = 0.0
    for _ in range(rounds):
        z = GridFunction(grid, rng.standard_normal(grid.shape))
        err = np.max(np.abs(reconstruct(d, z).values - z.values))
        worst_recon = max(worst_recon, err / np.max(np.abs(z.values)))

    cal = calibrate_decomposition(d, q_values=(1.5, 2.0, 3.0),
                                  sample_count=150, seed=seed + 1)
    ratio_ok = True
    for q in (1.5, 2.0, 3.0):
        params = SquareFunctionParams(0.0, q)
        for _ in range(rounds):
            z = GridFunction(grid, rng.standard_normal(grid.shape))
            r = tl_norm(d, z, params) / lp_norm(z, q)
            ratio_ok = ratio_ok and 1.0 / cal.c_star <= r <= cal.c_star

    worst_table = _case_table_checks(d, rng, rounds)

    passed = (
        partition_exact
        and worst_orth_symbol == 0.0
        and worst_orth_applied <= 1e-13
        and worst_recon <= 1e-12
        and cal.c_star <= 10.0
        and ratio_ok
        and worst_table <= 1e-12
    )
    return {
        "suite": "decomposition-identities",
        "partition_exact": partition_exact,
        "worst_orthogonality_symbol": worst_orth_symbol,
        "worst_orthogonality_applied": float(worst_orth_applied),
        "worst_reconstruction": float(worst_recon),
        "c_star": cal.c_star,
        "ratio_within_bracket": bool(ratio_ok),
        "worst_case_table": float(worst_table),
        "passed": bool(passed),
    }


def rbound_baseline(points: int = 128, seed: int = 7,
                    identity_trials: int = 100) -> dict:
    """Identity family estimates exactly 1; q = 2 estimate meets the sup bound."""
    grid = Grid(1, points)
    ident = identity_operator(grid)
    exact = all(
        rbound_estimate([ident], 2.0, trials=1, seed=seed + k) == 1.0
        for k in range(identity_trials)
    )
    exact = exact and rbound_estimate([ident], 3.0, trials=50, seed=seed) == 1.0

    k = np.abs(np.fft.fftfreq(points) * points)
    symbols = [
        1.5 * np.exp(-((k - 8.0) / 6.0) ** 2),
        0.8 * np.exp(-((k - 30.0) / 10.0) ** 2),
        0.6 + 0.2 * np.cos(2.0 * np.pi * k / points),
    ]
    ops = [MultiplierOperator(grid, s) for s in symbols]
    sup = max(float(np.max(np.abs(s))) for s in symbols)
    est = rbound_estimate(ops, 2.0, trials=200, seed=seed)
    gap = abs(est - sup) / sup
    passed = exact and gap <= 0.05
    return {
        "suite": "rbound-baseline",
        "identity_exact": bool(exact),
        "estimate_q2": est,
        "sup_magnitude": sup,
        "relative_gap": float(gap),
        "passed": bool(passed),
    }


def _psi_brute_force_gap(psi) -> float:
    """Relative gap between the closed-form infimum and a dense grid search."""
    worst = 0.0
    u = psi.q_hat * psi.s * psi.theta
    v = psi.theta * (1.0 - psi.s)
    A = psi.f_norms.F_s_theta**psi.q_hat
    for delta in (1e-8, 1e-5, 1e-2):
        B = 2.0**v * psi.f_norms.F_s_theta * psi.psi0(delta)
        top = psi.inf_argument(delta) + 40.0
        lams = np.linspace(1.0, top, 200_001)
        dense = psi.C * float(np.min(A * 2.0 ** (-u * lams) + B * 2.0 ** (v * lams)))
        worst = max(worst, abs(dense - psi(delta)) / psi(delta))
    return worst


def psi_properties(pairs=((0.5, 2.0), (1.0 / 3.0, 2.0), (0.5, 1.5))) -> dict:
    """Shape checks and brute-force inf agreement for the index functions."""
    worst_concavity = 0.0
    worst_monotone = 0.0
    worst_brute = 0.0
    worst_decay_spread = 0.0
    grid = np.geomspace(1e-10, 1e-2, 41)
    for s, q_hat in pairs:
        psi = make_psi(1.0, s, 1.0, q_hat, SourceNorms(1.0, 1.0), HolderIndex(0.5))
        values = np.array([psi(d) for d in grid])
        worst_monotone = max(worst_monotone, float(np.max(-np.diff(values))))
        for i in range(0, len(grid) - 2, 2):
            a, b = grid[i], grid[i + 2]
            for t in (0.25, 0.5, 0.75):
                mid = psi((1.0 - t) * a + t * b)
                chord = (1.0 - t) * values[i] + t * psi(b)
                worst_concavity = max(worst_concavity, chord - mid)
        if psi.kind == "inf-form":
            worst_brute = max(worst_brute, _psi_brute_force_gap(psi))
        ratios = np.array([psi_decay_ratio(psi, d) for d in grid])
        worst_decay_spread = max(
            worst_decay_spread, float(np.max(ratios) / np.median(ratios))
        )
    passed = (
        worst_monotone <= 1e-10
        and worst_concavity <= 1e-10
        and worst_brute <= 1e-6
        and worst_decay_spread <= 10.0
    )
    return {
        "suite": "psi-properties",
        "worst_monotonicity_violation": worst_monotone,
        "worst_concavity_violation": float(worst_concavity),
        "worst_brute_force_gap": worst_brute,
        "worst_decay_spread": worst_decay_spread,
        "passed": bool(passed),
    }


def _green_interval(x, source: float) -> np.ndarray:
    """Exact kernel of (-u'' + u) with zero-flux ends and a unit point load."""
    lo = np.minimum(x, source)
    hi = np.maximum(x, source)
    return np.cosh(lo) * np.cosh(1.0 - hi) / np.sinh(1.0)


def forward_orders(levels_1d=(64, 128, 256, 512),
                   levels_2d=(16, 32, 64, 128)) -> dict:
    """Observed convergence orders of the forward solver.

    1-D: unit point load against the closed-form kernel, first order in L^1
    (the load lands at a cell center, off the true location by h/2).
    2-D: manufactured cosine solution, second order in L^2.
    """
    errors_1d = []
    for n in levels_1d:
        grid = Grid(1, n)
        kappa = DiffusionField(grid, np.ones(grid.shape))
        a = GridFunction.constant(grid, 1.0)
        mu = MeasureData(interior_masses=[(0.5, 1.0)])
        u = solve(kappa, a, mu).u
        exact = _green_interval(grid.axes()[0], 0.5)
        errors_1d.append(lp_norm(u - GridFunction(grid, exact), 1.0))
    fit_1d = fit_rate(list(zip([1.0 / n for n in levels_1d], errors_1d)))

    errors_2d = []
    for n in levels_2d:
        grid = Grid(2, n)
        kappa = DiffusionField(grid, np.ones(grid.shape))
        a = GridFunction.constant(grid, 1.0)
        load = GridFunction.from_callable(
            grid,
            lambda x, y: (1.0 + 2.0 * np.pi**2)
            * np.cos(np.pi * x) * np.cos(np.pi * y),
        )
        mu = MeasureData(interior_density=load)
        u = solve(kappa, a, mu).u
        exact = GridFunction.from_callable(
            grid, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)
        )
        errors_2d.append(lp_norm(u - exact, 2.0))
    fit_2d = fit_rate(list(zip([1.0 / n for n in levels_2d], errors_2d)))

    passed = fit_1d["slope"] >= 0.9 and abs(fit_2d["slope"] - 2.0) <= 0.2
    return {
        "suite": "forward-orders",
        "order_point_load_1d": fit_1d["slope"],
        "order_manufactured_2d": fit_2d["slope"],
        "errors_1d": [float(e) for e in errors_1d],
        "errors_2d": [float(e) for e in errors_2d],
        "passed": bool(passed),
    }


def phi_holder(exponents=(1.5, 2.5, 3.5)) -> dict:
    """Sampled Hoelder constants of the last classical derivative of phi_p."""
    rows = []
    passed = True
    for p in exponents:
        est = phi_p_holder_estimate(p)
        bound = 2.0 * phi_p_coefficient(p, est.N)
        ok = est.constant_estimate <= bound * (1.0 + 1e-12)
        passed = passed and ok
        rows.append({"p": p, "order": est.N, "holder_exponent": est.tau,
                     "estimate": est.constant_estimate, "bound": bound,
                     "within_bound": bool(ok)})
    return {"suite": "phi-holder", "rows": rows, "passed": bool(passed)}


SUITES = {
    "duality-identities": duality_identities,
    "uniform-convexity": uniform_convexity,
    "decomposition-identities": decomposition_identities,
    "rbound-baseline": rbound_baseline,
    "psi-properties": psi_properties,
    "forward-orders": forward_orders,
    "phi-holder": phi_holder,
}


def run_suite(name: str, options: dict | None = None) -> dict:
    if name not in SUITES:
        raise ValueError(
            f"unknown suite {name!r}; available: {', '.join(sorted(SUITES))}"
        )
    return SUITES[name](**(options or {}))
