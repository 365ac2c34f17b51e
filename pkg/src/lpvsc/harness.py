"""Experiment orchestration: TOML specs in, CSV/JSON reports and figures out.

A spec names a model (diagonal, elliptic, vsc-check, lp-calibration or
property-suite), fixes the exponent tuple, and supplies noise grids, seeds
and acceptance thresholds.  Parsing validates the exponent relations that
the mathematics requires: the conjugate-exponent identity 1/p + 1/q = 1, the
integrability window for measure data tying tau to the coefficient exponent
and the dimension, and (for the stability experiment) the exponent balance
1 - 1/tau = 1/q + 1/r.  Violations are reported as named diagnostics and
turn into exit code 3.

Outputs are flat files in the output directory (spec setting, then the
LPVSC_OUTPUT_DIR environment variable, then the working directory):
``<name>.csv`` with the per-run table and ``<name>-summary.json`` with the
aggregated record.  Rate tables always carry the columns delta, alpha,
error, iterations, stalled; floats are written with repr-faithful precision
so reruns of the same spec are bitwise identical.

Exit codes: 0 pass, 2 acceptance failure, 3 invalid spec, 4 solver stall.
"""

from __future__ import annotations

import importlib.resources
import json
import os
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
import scipy.fft

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .dyadic import (
    SquareFunctionParams,
    build_dyadic_fourier,
    calibrate_decomposition,
    tl_norm,
)
from .elliptic import (
    EllipticProblem,
    FeasibleSet,
    MeasureData,
    ObservationNorm,
    neumann_decomposition,
    piecewise_constant,
    project_feasible,
    sobolev_norm,
)
from .grids import Grid, GridFunction
from .lebesgue import Exponents, duality_map, estimate_cp, lp_norm, phi_p_apply
from .suites import SUITES, run_suite
from .tikhonov import (
    DiagonalModel,
    TikhonovConfig,
    add_noise,
    fit_rate,
    rate_experiment,
    solve_nonlinear,
)
from .vsc import (
    HolderIndex,
    SourceNorms,
    alpha_choice,
    calibrate_C,
    check_stability,
    check_vsc,
    make_psi,
)

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_INVALID = 3
EXIT_STALLED = 4

MODELS = ("diagonal", "elliptic", "vsc-check", "lp-calibration", "property-suite")

RATE_CSV_COLUMNS = ("delta", "alpha", "error", "iterations", "stalled")


class SpecError(ValueError):
    """Invalid experiment spec; carries one diagnostic line per violation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass
class ExperimentSpec:
    """Parsed and validated experiment configuration."""

    name: str
    model: str
    dimension: int = 1
    points: int = 64
    p: float = 2.0
    q: float = 2.0
    p_frak: float | None = None
    tau: float | None = None
    r: float | None = None
    s: float = 1.0
    theta: float = 1.0
    ell: float = 2.0
    psi_constant: float = 1.0
    psi0_exponent: float = 1.0
    delta_grid: list = dataclass_field(default_factory=list)
    seed: int = 0
    M: float | None = None
    a_lower: float | None = None
    mode: str | None = None
    suite: str | None = None
    sample_count: int = 200
    model_options: dict = dataclass_field(default_factory=dict)
    acceptance: dict = dataclass_field(default_factory=dict)
    output_dir: str | None = None
    source: str | None = None


def _integrability_window(p_frak: float, dimension: int):
    """Admissible open interval for tau given the coefficient exponent."""
    n = float(dimension)
    if p_frak >= n:
        return 1.0, np.inf
    lo = n * p_frak / (n * p_frak - n + p_frak)
    hi = n * p_frak / (n - p_frak)
    return lo, hi


def validate_spec(spec: ExperimentSpec) -> ExperimentSpec:
    problems = []
    if spec.model not in MODELS:
        problems.append(
            f"unknown model {spec.model!r}; expected one of {', '.join(MODELS)}"
        )
        raise SpecError(problems)
    if not 1.0 < spec.p < np.inf:
        problems.append(f"p must lie in (1, inf), got {spec.p}")
    else:
        gap = abs(1.0 / spec.p + 1.0 / spec.q - 1.0)
        if gap > 1e-9:
            problems.append(
                "conjugate-exponent identity violated: 1/p + 1/q must equal 1, "
                f"but p={spec.p}, q={spec.q} give {1.0 / spec.p + 1.0 / spec.q:.12g}"
            )
    if not 0.0 < spec.s <= 1.0:
        problems.append(f"smoothness s must lie in (0, 1], got {spec.s}")
    if spec.theta < 0.0:
        problems.append(f"theta must be nonnegative, got {spec.theta}")
    if spec.ell <= 1.0:
        problems.append(f"ell must exceed 1, got {spec.ell}")
    if not 0.0 < spec.psi0_exponent <= 1.0:
        problems.append(
            f"base index exponent must lie in (0, 1], got {spec.psi0_exponent}"
        )
    if any(d <= 0.0 for d in spec.delta_grid):
        problems.append("noise grid entries must be positive")

    needs_pde = spec.model in ("elliptic", "vsc-check")
    if needs_pde:
        if spec.dimension != 2:
            problems.append(
                "the coefficient experiments are built on the two-dimensional "
                f"domain; got dimension {spec.dimension}"
            )
        if spec.points < 8 or spec.points & (spec.points - 1):
            problems.append(
                f"grid points must be a power of two >= 8, got {spec.points}"
            )
        if spec.M is None or spec.a_lower is None:
            problems.append("feasible-set bounds M and a_lower are required")
        if spec.p_frak is None or spec.tau is None:
            problems.append("exponents p_frak and tau are required")
        else:
            n = spec.dimension
            if spec.p_frak <= n / 2.0:
                problems.append(
                    "integrability exponent too small: the feasible set needs "
                    f"p_frak > dimension/2 = {n / 2.0}, got {spec.p_frak}"
                )
            else:
                lo, hi = _integrability_window(spec.p_frak, n)
                if not lo < spec.tau < hi:
                    problems.append(
                        "integrability window for measure data violated: with "
                        f"p_frak={spec.p_frak} in dimension {n}, tau must lie in "
                        f"({lo:.6g}, {hi:.6g}); got tau={spec.tau}"
                    )
    if spec.model == "vsc-check":
        if spec.mode not in ("margins", "stability"):
            problems.append(
                f"vsc-check needs mode 'margins' or 'stability', got {spec.mode!r}"
            )
        elif spec.mode == "stability" and spec.tau is not None:
            residual = 1.0 - 1.0 / spec.tau - 1.0 / spec.q
            if residual <= 1e-12:
                problems.append(
                    "exponent balance for the stability triple violated: "
                    "1 - 1/tau = 1/q + 1/r needs a positive 1/r, but "
                    f"1 - 1/tau - 1/q = {residual:.6g} (tau={spec.tau}, q={spec.q})"
                )
            else:
                spec.r = 1.0 / residual
    if spec.model == "property-suite":
        if spec.suite not in SUITES:
            problems.append(
                f"property-suite needs a suite out of {', '.join(sorted(SUITES))}; "
                f"got {spec.suite!r}"
            )
    if spec.model in ("diagonal", "elliptic") and len(spec.delta_grid) < 2:
        problems.append("rate experiments need a noise grid with at least 2 points")
    if problems:
        raise SpecError(problems)
    return spec


_KNOWN_SECTIONS = {
    "name", "model", "mode", "suite",
    "grid", "exponents", "psi", "noise", "feasible",
    "model_options", "acceptance", "output",
}


def spec_from_dict(data: dict, source: str | None = None) -> ExperimentSpec:
    unknown = set(data) - _KNOWN_SECTIONS
    if unknown:
        raise SpecError(
            [f"unknown spec section or key {k!r}" for k in sorted(unknown)]
        )
    missing = [k for k in ("name", "model") if k not in data]
    if missing:
        raise SpecError([f"spec is missing the required key {k!r}" for k in missing])
    grid = data.get("grid", {})
    exps = data.get("exponents", {})
    psi = data.get("psi", {})
    noise = data.get("noise", {})
    feas = data.get("feasible", {})
    out = data.get("output", {})
    p = float(exps.get("p", 2.0))
    q = float(exps.get("q", p / (p - 1.0) if p > 1.0 else 2.0))
    spec = ExperimentSpec(
        name=str(data["name"]),
        model=str(data["model"]),
        mode=data.get("mode"),
        suite=data.get("suite"),
        dimension=int(grid.get("dimension", 1)),
        points=int(grid.get("points", 64)),
        p=p,
        q=q,
        p_frak=float(exps["p_frak"]) if "p_frak" in exps else None,
        tau=float(exps["tau"]) if "tau" in exps else None,
        s=float(exps.get("s", 1.0)),
        theta=float(exps.get("theta", 1.0)),
        ell=float(exps.get("ell", 2.0)),
        psi_constant=float(psi.get("constant", 1.0)),
        psi0_exponent=float(psi.get("base_exponent", 1.0)),
        delta_grid=[float(d) for d in noise.get("delta_grid", [])],
        seed=int(noise.get("seed", 0)),
        M=float(feas["M"]) if "M" in feas else None,
        a_lower=float(feas["a_lower"]) if "a_lower" in feas else None,
        sample_count=int(data.get("model_options", {}).get("sample_count", 200)),
        model_options=dict(data.get("model_options", {})),
        acceptance=dict(data.get("acceptance", {})),
        output_dir=out.get("directory"),
        source=source,
    )
    return validate_spec(spec)


def resolve_spec_text(ref: str):
    """Spec text from a filesystem path or a shipped spec name."""
    path = Path(ref)
    if path.exists():
        return path.read_text(), str(path)
    name = ref if ref.endswith(".toml") else ref + ".toml"
    resource = importlib.resources.files("lpvsc.specs") / name
    if resource.is_file():
        return resource.read_text(), ref
    raise SpecError(
        [f"spec {ref!r} is neither a readable file nor a shipped spec name"]
    )


def load_spec(ref: str) -> ExperimentSpec:
    text, label = resolve_spec_text(ref)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise SpecError([f"TOML parse error in {label}: {err}"]) from err
    return spec_from_dict(data, source=label)


def list_specs():
    """Names of the specs shipped inside the package."""
    root = importlib.resources.files("lpvsc.specs")
    return sorted(
        entry.name[: -len(".toml")]
        for entry in root.iterdir()
        if entry.name.endswith(".toml")
    )


# ---------------------------------------------------------------------------
# Report emission.
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_summary(path: Path, record: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _rate_rows(report):
    for row in report.rows:
        yield (_fmt(row.delta), _fmt(row.alpha), _fmt(row.error),
               str(row.iterations), "1" if row.stalled else "0")


def _output_dir(spec: ExperimentSpec, override=None) -> Path:
    directory = override or spec.output_dir or os.environ.get("LPVSC_OUTPUT_DIR") or "."
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _delta_seed(base: int, delta: float) -> int:
    return int(base) + abs(int(round(1000.0 * np.log10(1.0 / delta))))


# ---------------------------------------------------------------------------
# Model runners.
# ---------------------------------------------------------------------------


def _run_diagonal(spec: ExperimentSpec):
    opts = spec.model_options
    model = DiagonalModel(
        mode_count=int(opts.get("mode_count", 128)),
        ratio=float(opts.get("ratio", 2.0 ** -0.5)),
        smoothness=spec.s,
        scale=float(opts.get("scale", 1.0)),
    )
    # Holder index function of the optimal-rate shape for the linear model
    psi = make_psi(spec.psi_constant, 1.0, 1.0, 2.0, SourceNorms(1.0, 1.0),
                   HolderIndex(2.0 * spec.s / (1.0 + spec.s)))
    theoretical = spec.s / (1.0 + spec.s)

    def alpha_rule(delta):
        return alpha_choice(delta, spec.ell, psi)

    def run_single(delta, alpha):
        return model.run_single(delta, alpha, seed=_delta_seed(spec.seed, delta))

    report = rate_experiment(run_single, spec.delta_grid, alpha_rule, theoretical)
    tolerance = float(spec.acceptance.get("slope_tolerance", 0.10))
    passed = abs(report.fitted_slope - theoretical) <= tolerance
    summary = {
        "name": spec.name,
        "model": spec.model,
        "slope_tolerance": tolerance,
        "passed": bool(passed),
        **report.summary(),
    }
    return report, summary


@dataclass
class EllipticInstance:
    """Canonical identification instance shared by the coefficient experiments."""

    problem: EllipticProblem
    a_dag: GridFunction
    a_star: GridFunction
    u_exact: GridFunction
    decomp: object
    e: Exponents
    f_norms: SourceNorms
    psi: object


def _dct_radius(grid: Grid):
    k = np.arange(grid.points, dtype=np.float64)
    if grid.dimension == 1:
        return k
    return np.hypot(k[:, None], k[None, :])


def _smooth_random_field(grid: Grid, rng, band_radius: float = 6.0,
                         decay: float = 2.0):
    """Random low-frequency cosine-series field, sup-normalized."""
    radius = _dct_radius(grid)
    coef = rng.standard_normal(grid.shape) / (1.0 + radius) ** decay
    coef[radius > band_radius] = 0.0
    values = scipy.fft.idctn(coef, type=2, norm="ortho")
    peak = np.max(np.abs(values))
    return values / peak if peak > 0.0 else values


def build_elliptic_instance(spec: ExperimentSpec) -> EllipticInstance:
    """The coefficient-identification test problem used across experiments.

    Diffusion: unit background with one high-diffusion slab.  True reaction
    coefficient: a smooth positive bump field.  Data: two interior point
    masses plus a boundary density on the left edge.  The prior guess is the
    truth minus a source direction chosen so that the duality map of the
    offset is exactly a low-frequency (band-limited) field, which makes the
    smoothness norms of the source finite by construction.
    """
    opts = spec.model_options
    grid = Grid(spec.dimension, spec.points)
    e = Exponents(spec.p)
    kappa = piecewise_constant(
        grid,
        [((0.55, 1.0, 0.0, 1.0), float(opts.get("kappa_inclusion", 3.0)))],
        background=float(opts.get("kappa_background", 1.0)),
    )
    a_dag = GridFunction.from_callable(
        grid,
        lambda x, y: 1.5 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y),
    )
    feasible = FeasibleSet(spec.p_frak, spec.M, spec.a_lower,
                           dimension=spec.dimension)
    if not feasible.contains(a_dag):
        raise SpecError(
            ["the built-in true coefficient falls outside the configured "
             "feasible set; loosen M or a_lower"]
        )
    mu = MeasureData(
        interior_masses=[((0.3, 0.7), 1.0), ((0.75, 0.25), 0.6)],
        boundary_density={"left": 0.4},
    )
    obs = ObservationNorm("l2", ell=spec.ell)
    problem = EllipticProblem(grid, kappa, mu, feasible, obs)
    u_exact = problem.forward(a_dag).u

    decomp = neumann_decomposition(grid)
    rng = np.random.default_rng(int(opts.get("truth_seed", 101)))
    f_raw = _smooth_random_field(grid, rng,
                                 band_radius=float(opts.get("band_radius", 4.0)),
                                 decay=1.0)
    # invert the pointwise power so the duality map lands back on f_raw
    w_dag = phi_p_apply(GridFunction(grid, f_raw), e.q)
    w_dag = float(opts.get("source_amplitude", 0.3)) * w_dag
    a_star = a_dag - w_dag

    f_dag = duality_map(a_dag - a_star, e)
    f_norms = SourceNorms(
        F_s_theta=tl_norm(decomp, f_dag, SquareFunctionParams(spec.s * spec.theta, e.q)),
        F_theta=tl_norm(decomp, f_dag, SquareFunctionParams(spec.theta, e.q)),
    )
    psi = make_psi(spec.psi_constant, spec.s, spec.theta, e.q_hat, f_norms,
                   HolderIndex(spec.psi0_exponent))
    return EllipticInstance(problem=problem, a_dag=a_dag, a_star=a_star,
                            u_exact=u_exact, decomp=decomp, e=e,
                            f_norms=f_norms, psi=psi)


def _run_elliptic(spec: ExperimentSpec):
    opts = spec.model_options
    inst = build_elliptic_instance(spec)
    e = inst.e
    theoretical = (spec.psi0_exponent * e.q_hat * spec.s
                   / (1.0 + (e.q_hat - 1.0) * spec.s))

    def alpha_rule(delta):
        return alpha_choice(delta, spec.ell, inst.psi)

    def run_single(delta, alpha):
        u_delta = add_noise(inst.u_exact, delta, inst.problem.obs,
                            seed=_delta_seed(spec.seed, delta))
        cfg = TikhonovConfig(
            ell=spec.ell, p=spec.p, alpha=alpha, a_star=inst.a_star,
            max_iterations=int(opts.get("max_iterations", 200)),
            tolerance=float(opts.get("tolerance", 1e-9)),
            starts=int(opts.get("starts", 3)),
            seed=spec.seed + 3,
        )
        result = solve_nonlinear(inst.problem, u_delta, cfg, inst.problem.feasible)
        error = lp_norm(result.a - inst.a_dag, spec.p) ** e.p_hat
        return error, result.iterations, result.stalled

    report = rate_experiment(run_single, spec.delta_grid, alpha_rule, theoretical)
    floor = float(spec.acceptance.get("rate_floor", 0.8))
    usable = [row.error for row in report.rows if not row.stalled]
    decreasing = all(a > b for a, b in zip(usable, usable[1:]))
    slope_ok = np.isfinite(report.fitted_slope) and (
        report.fitted_slope >= floor * theoretical
    )
    passed = decreasing and slope_ok
    summary = {
        "name": spec.name,
        "model": spec.model,
        "rate_floor": floor,
        "errors_strictly_decreasing": bool(decreasing),
        "passed": bool(passed),
        **report.summary(),
    }
    return report, summary


def _draw_coefficient_samples(inst: EllipticInstance, spec: ExperimentSpec,
                              count: int, distance):
    """Feasible random coefficients with their observation-space misfits."""
    opts = spec.model_options
    rng = np.random.default_rng(spec.seed)
    lo = float(opts.get("amplitude_low", 0.05))
    hi = float(opts.get("amplitude_high", 0.6))
    band = float(opts.get("perturbation_band", 6.0))
    samples = []
    for _ in range(count):
        direction = _smooth_random_field(inst.problem.grid, rng, band_radius=band)
        amplitude = float(rng.uniform(lo, hi))
        a = project_feasible(
            GridFunction(inst.problem.grid,
                         inst.a_dag.values + amplitude * direction),
            inst.problem.feasible,
        )
        u = inst.problem.forward(a).u
        samples.append((a, distance(u)))
    return samples


def _run_vsc_margins(spec: ExperimentSpec):
    opts = spec.model_options
    inst = build_elliptic_instance(spec)
    e = inst.e
    c_p = estimate_cp(e, sample_count=int(opts.get("cp_samples", 4000)),
                      seed=spec.seed + 17)
    beta = float(spec.acceptance.get("beta_fraction", 0.5)) * c_p
    count = spec.sample_count
    calibration_count = int(opts.get("calibration_count", max(count // 2, 50)))
    calibration_count = min(calibration_count, count)

    samples = _draw_coefficient_samples(
        inst, spec, count,
        distance=lambda u: inst.problem.obs.distance(u, inst.u_exact),
    )
    psi0 = HolderIndex(spec.psi0_exponent)
    psi, _ = calibrate_C(samples[:calibration_count], inst.a_dag, inst.a_star,
                         beta, e, c_p, spec.s, spec.theta, e.q_hat,
                         inst.f_norms, psi0)
    report = check_vsc(samples, inst.a_dag, inst.a_star, psi, beta, e, c_p)
    rows = []
    for i, sample in enumerate(samples):
        margin = check_vsc([sample], inst.a_dag, inst.a_star, psi, beta, e,
                           c_p).worst_margin
        rows.append((str(i), _fmt(sample[1]), _fmt(margin)))
    passed = report.passes()
    summary = {
        "name": spec.name,
        "model": spec.model,
        "mode": spec.mode,
        "c_p": c_p,
        "beta": beta,
        "C": psi.C,
        "worst_margin": report.worst_margin,
        "violating_sample": report.violating_sample,
        "sample_count": count,
        "calibration_count": calibration_count,
        "passed": bool(passed),
    }
    return ("sample", "distance", "margin"), rows, summary


def _run_vsc_stability(spec: ExperimentSpec):
    inst = build_elliptic_instance(spec)
    e = inst.e
    count = spec.sample_count
    samples = _draw_coefficient_samples(
        inst, spec, 2 * count,
        distance=lambda u: sobolev_norm(u - inst.u_exact, 1, spec.tau),
    )
    identity = HolderIndex(1.0)
    half = check_stability(samples[:count], inst.a_dag, identity, spec.theta,
                           inst.decomp, e)
    full = check_stability(samples, inst.a_dag, identity, spec.theta,
                           inst.decomp, e)
    growth = (full.least_constant - half.least_constant) / half.least_constant
    limit = float(spec.acceptance.get("growth_limit", 0.25))
    passed = growth < limit and not full.flagged
    rows = []
    for i, sample in enumerate(samples):
        ratio = check_stability([sample], inst.a_dag, identity, spec.theta,
                                inst.decomp, e).least_constant
        rows.append((str(i), _fmt(sample[1]), _fmt(ratio)))
    summary = {
        "name": spec.name,
        "model": spec.model,
        "mode": spec.mode,
        "max_first_half": half.least_constant,
        "max_full": full.least_constant,
        "growth": growth,
        "growth_limit": limit,
        "skipped": full.skipped,
        "non_identifiable": list(full.non_identifiable),
        "sample_count": 2 * count,
        "passed": bool(passed),
    }
    return ("sample", "distance", "ratio"), rows, summary


def _run_lp_calibration(spec: ExperimentSpec):
    opts = spec.model_options
    grid = Grid(spec.dimension, spec.points)
    d = build_dyadic_fourier(grid, transform=opts.get("transform", "fft"))
    report = calibrate_decomposition(
        d,
        q_values=tuple(opts.get("q_values", (1.5, 2.0, 3.0))),
        theta=spec.theta,
        s=spec.s,
        sample_count=int(opts.get("calibration_samples", 300)),
        seed=spec.seed,
    )
    limit = float(spec.acceptance.get("c_star_limit", 10.0))
    passed = report.c_star <= limit
    rows = [
        ("c_star", _fmt(report.c_star)),
        ("duality_K", _fmt(report.duality_K)),
        ("c_r", _fmt(report.c_r)),
    ]
    summary = {
        "name": spec.name,
        "model": spec.model,
        "c_star_limit": limit,
        "passed": bool(passed),
        **report.to_dict(),
    }
    return ("quantity", "value"), rows, summary


def _run_property_suite(spec: ExperimentSpec):
    options = {k: v for k, v in spec.model_options.items() if k != "sample_count"}
    result = run_suite(spec.suite, options)
    rows = []
    for key, value in result.items():
        if isinstance(value, bool):
            rows.append((key, "1" if value else "0"))
        elif isinstance(value, (int, float)):
            rows.append((key, _fmt(value)))
        elif isinstance(value, str):
            rows.append((key, value))
    summary = {"name": spec.name, "model": spec.model, **result}
    return ("check", "value"), rows, summary


def run_experiment(spec: ExperimentSpec, output_dir=None):
    """Execute a validated spec; returns (exit_code, summary, written paths)."""
    out = _output_dir(spec, output_dir)
    csv_path = out / f"{spec.name}.csv"
    summary_path = out / f"{spec.name}-summary.json"

    if spec.model == "diagonal":
        report, summary = _run_diagonal(spec)
        _write_csv(csv_path, RATE_CSV_COLUMNS, _rate_rows(report))
    elif spec.model == "elliptic":
        report, summary = _run_elliptic(spec)
        _write_csv(csv_path, RATE_CSV_COLUMNS, _rate_rows(report))
        if any(row.stalled for row in report.rows):
            _write_summary(summary_path, summary)
            return EXIT_STALLED, summary, [csv_path, summary_path]
    elif spec.model == "vsc-check":
        runner = _run_vsc_margins if spec.mode == "margins" else _run_vsc_stability
        header, rows, summary = runner(spec)
        _write_csv(csv_path, header, rows)
    elif spec.model == "lp-calibration":
        header, rows, summary = _run_lp_calibration(spec)
        _write_csv(csv_path, header, rows)
    elif spec.model == "property-suite":
        header, rows, summary = _run_property_suite(spec)
        _write_csv(csv_path, header, rows)
    else:  # pragma: no cover - guarded by validate_spec
        raise SpecError([f"unknown model {spec.model!r}"])

    _write_summary(summary_path, summary)
    code = EXIT_OK if summary.get("passed") else EXIT_FAILED
    return code, summary, [csv_path, summary_path]


def run(spec_ref: str, output_dir=None) -> int:
    """CLI entry for `run`: load, validate, execute, report, exit code."""
    try:
        spec = load_spec(spec_ref)
        code, summary, paths = run_experiment(spec, output_dir)
    except SpecError as err:
        for line in err.diagnostics:
            print(f"spec error: {line}")
        return EXIT_INVALID
    status = "pass" if code == EXIT_OK else ("stall" if code == EXIT_STALLED else "FAIL")
    print(f"[{spec.name}] {status}")
    for key in sorted(summary):
        if key in ("name", "model"):
            continue
        print(f"  {key} = {summary[key]}")
    for path in paths:
        print(f"wrote {path}")
    return code


def calibrate(spec_ref: str, output_dir=None) -> int:
    """CLI entry for `calibrate`: emit the calibration record for a spec.

    Works for lp-calibration specs (decomposition constants) and for
    vsc-check margin specs (the data-driven constant in the index function).
    """
    try:
        spec = load_spec(spec_ref)
    except SpecError as err:
        for line in err.diagnostics:
            print(f"spec error: {line}")
        return EXIT_INVALID
    if spec.model == "lp-calibration":
        return run_experiment(spec, output_dir)[0]
    if spec.model == "vsc-check" and spec.mode == "margins":
        _, _, summary = _run_vsc_margins(spec)
        out = _output_dir(spec, output_dir)
        path = out / f"{spec.name}-calibration.json"
        record = {k: summary[k] for k in
                  ("name", "c_p", "beta", "C", "worst_margin", "sample_count",
                   "calibration_count")}
        _write_summary(path, record)
        print(f"wrote {path}")
        return EXIT_OK
    print(f"spec error: model {spec.model!r} has no calibration flavor")
    return EXIT_INVALID


# ---------------------------------------------------------------------------
# Plotting.
# ---------------------------------------------------------------------------


def plot(report_path: str, out_path: str) -> int:
    """Log-log figure of a rate table with fitted and reference slopes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(report_path)
    if not path.exists():
        print(f"no such report: {report_path}")
        return EXIT_INVALID
    with open(path, newline="") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2:
        print(f"no data to plot in {report_path}")
        return EXIT_INVALID
    header = lines[0].split(",")
    if "delta" not in header or "error" not in header:
        print(f"report {report_path} has no delta/error columns")
        return EXIT_INVALID
    idx = {name: header.index(name) for name in header}
    deltas, errors, stalled = [], [], []
    for line in lines[1:]:
        cells = line.split(",")
        deltas.append(float(cells[idx["delta"]]))
        errors.append(float(cells[idx["error"]]))
        stalled.append(cells[idx["stalled"]] == "1" if "stalled" in idx else False)
    usable = [(d, r) for d, r, s in zip(deltas, errors, stalled) if not s]

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(deltas, errors, "o-", label="measured error")
    if len(usable) >= 3:
        fit = fit_rate(usable)
        xs = np.array([min(d for d, _ in usable), max(d for d, _ in usable)])
        ax.loglog(xs, np.exp(fit["intercept"]) * xs ** fit["slope"], "--",
                  label=f"fit: slope {fit['slope']:.3f}")
        summary_path = path.with_name(path.stem + "-summary.json")
        if summary_path.exists():
            with open(summary_path) as fh:
                summary = json.load(fh)
            theo = summary.get("theoretical_exponent")
            if theo is not None:
                d0, r0 = usable[0]
                ax.loglog(xs, r0 * (xs / d0) ** theo, ":",
                          label=f"reference: slope {theo:.3f}")
    ax.set_xlabel("noise level")
    ax.set_ylabel("reconstruction error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    print(f"wrote {out_path}")
    return EXIT_OK
