"""Command-line driver.

Subcommands: forward, diffusion, limit-study, invert, wigner-validate,
check-conditions, inequality-check.  Every run reads one config file,
writes its outputs under --out, and leaves a manifest; exit codes are 0
on success, 1 on validation problems, 2 on solver non-convergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod
from .absorption import AbsorptionModel
from .angular import build_quadrature, make_isotropic, make_linear_anisotropic
from .config import Config, ConfigError
from .errors import NonConvergenceError
from .fields import DensityField
from .gridio import read_array, write_array, write_csv
from .grids import EvolutionGrid, SpatialGrid
from .inverse import (
    ExperimentSet,
    RecoveryOptions,
    appendix_inequality_check,
    generate_data,
    reconstruct,
)
from .limits import ConvergenceStudy, run_convergence_study, run_degenerate_study
from .manifest import RunManifest
from .transport import (
    SolverOptions,
    TransportProblem,
    check_condition_i,
    check_condition_ii,
    picard_fixed_point,
    solve_semilinear_march,
)
from .wigner import (
    RandomMediumSpec,
    TransverseGrid,
    WignerConfig,
    compare_with_transport,
    ensemble_density,
    matched_transport_problem,
)

SUBCOMMANDS = ("forward", "diffusion", "limit-study", "invert",
               "wigner-validate", "check-conditions", "inequality-check")


# ---------------------------------------------------------------------------
# builders from config


def _build_grids(cfg: Config):
    d = cfg.get("grid.dimension")
    extent = cfg.get("grid.extent")
    cells = [int(c) for c in cfg.get("grid.cells")]
    if len(extent) == 1:
        extent = extent * d
    if len(cells) == 1:
        cells = cells * d
    grid = SpatialGrid(tuple(extent), tuple(cells))
    zgrid = EvolutionGrid(cfg.get("evolution.horizon"), cfg.get("evolution.steps"))
    return grid, zgrid


def _build_quadrature_phase(cfg: Config, d: int):
    quad = build_quadrature(d, cfg.get("angular.count"))
    if cfg.get("phase.family") == "isotropic":
        phase = make_isotropic(quad)
    else:
        phase = make_linear_anisotropic(cfg.get("phase.g"), quad)
    return quad, phase


def _build_absorption(cfg: Config, grid: SpatialGrid,
                      zgrid: EvolutionGrid) -> AbsorptionModel:
    order = cfg.get("absorption.order")
    if not 0 <= order <= 4:
        raise ConfigError("absorption.order must lie in 0..4")
    fields = []
    for l in range(order + 1):
        path = cfg.get(f"absorption.c{l}_file")
        if path is not None:
            values = read_array(path)
            fields.append(values)
        else:
            fields.append(np.full(grid.cells, cfg.get(f"absorption.c{l}")))
    return AbsorptionModel.from_fields(fields, grid, zgrid)


def _build_initial(cfg: Config, grid: SpatialGrid) -> np.ndarray:
    kind = cfg.get("initial.kind")
    amp = cfg.get("initial.amplitude")
    floor = cfg.get("initial.floor")
    mesh = grid.center_mesh()
    profile = np.ones(grid.cells)
    for axis, coord in enumerate(mesh):
        extent = grid.extents[axis]
        if kind == "sine":
            profile = profile * np.sin(np.pi * coord / extent)
        elif kind == "sine-squared":
            profile = profile * np.sin(np.pi * coord / extent) ** 2
        elif kind == "gaussian":
            width = cfg.get("initial.width")
            profile = profile * np.exp(-(coord - extent / 2) ** 2
                                       / (2 * width ** 2))
    return amp * profile + floor


def _build_solver_options(cfg: Config) -> SolverOptions:
    return SolverOptions(
        tol_picard=cfg.get("solver.tol_picard"),
        max_picard=cfg.get("solver.max_picard"),
        si_tol=cfg.get("solver.si_tol"),
        si_max=cfg.get("solver.si_max"),
        nonlinearity=cfg.get("solver.nonlinearity"),
    )


def _build_transport(cfg: Config) -> TransportProblem:
    grid, zgrid = _build_grids(cfg)
    quad, phase = _build_quadrature_phase(cfg, grid.dimension)
    model = _build_absorption(cfg, grid, zgrid)
    initial = _build_initial(cfg, grid)
    return TransportProblem(grid, zgrid, quad, phase,
                            cfg.get("transport.sigma_s"), model, initial,
                            cfg.get("transport.epsilon"))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_forward(cfg: Config, out: Path, record: dict) -> int:
    problem = _build_transport(cfg)
    options = _build_solver_options(cfg)
    prefix = cfg.get("output.prefix")
    if cfg.get("solver.driver") == "fixed-point":
        result = picard_fixed_point(problem, options, keep_history=False)
        density = result.density
        resid_path = out / f"{prefix}_residuals.csv"
        write_csv(resid_path, ["iteration", "residual"],
                  [np.arange(1, result.iterations + 1), result.residuals])
        record["iterations"] = {"fixed_point": result.iterations}
    else:
        result = solve_semilinear_march(problem, options, keep_history=False)
        density = result.density
        resid_path = out / f"{prefix}_iterations.csv"
        write_csv(resid_path,
                  ["step", "inner_iterations", "source_iterations"],
                  [np.arange(1, problem.zgrid.steps + 1),
                   result.inner_iterations, result.source_iterations])
        record["iterations"] = {
            "inner_total": int(result.inner_iterations.sum()),
            "source_total": int(result.source_iterations.sum()),
        }

    density_path = out / f"{prefix}_density.nlrte"
    write_array(density.values, density_path)
    center = tuple(n // 2 for n in problem.grid.cells)
    curve = density.values[(slice(None),) + center]
    curve_path = out / f"{prefix}_density_center.csv"
    write_csv(curve_path, ["z", "density"], [problem.zgrid.levels(), curve])

    record["outputs"] += [str(density_path), str(curve_path), str(resid_path)]
    return 0


def _cmd_diffusion(cfg: Config, out: Path, record: dict) -> int:
    from .limits import matched_diffusion_problem
    from .diffusion import solve_semilinear_diffusion

    problem = matched_diffusion_problem(_build_transport(cfg))
    solution = solve_semilinear_diffusion(problem, _build_solver_options(cfg))
    prefix = cfg.get("output.prefix")
    path = out / f"{prefix}_diffusion.nlrte"
    write_array(solution.values, path)
    center = tuple(n // 2 for n in problem.grid.cells)
    curve_path = out / f"{prefix}_diffusion_center.csv"
    write_csv(curve_path, ["z", "value"],
              [problem.zgrid.levels(), solution.values[(slice(None),) + center]])
    record["outputs"] += [str(path), str(curve_path)]
    return 0


def _cmd_limit_study(cfg: Config, out: Path, record: dict) -> int:
    study = ConvergenceStudy(
        base=_build_transport(cfg),
        epsilons=tuple(cfg.get("study.epsilons")),
        interior_margin=cfg.get("study.interior_margin"),
        boundary_cells=cfg.get("study.boundary_cells"),
        max_refinements=cfg.get("study.max_refinements"),
        solver=_build_solver_options(cfg),
        degenerate=cfg.get("study.degenerate"),
    )
    runner = run_degenerate_study if study.degenerate else run_convergence_study
    result = runner(study)
    prefix = cfg.get("output.prefix")
    table_path = out / f"{prefix}_study.csv"
    result.write_csv(table_path)
    record["outputs"].append(str(table_path))
    record["iterations"] = {"refinements": result.refinements}
    record["study"] = {
        "slope": None if np.isnan(result.slope) else result.slope,
        "slope_flag": result.slope_flag,
        "monotone": result.monotone,
        "errors": result.errors.tolist(),
        "witness_ok": result.witness_ok,
    }
    print(f"fitted order: {result.slope:.3f}" if result.slope_flag is None
          else f"slope flagged: {result.slope_flag}")
    return 0


def _cmd_invert(cfg: Config, out: Path, record: dict) -> int:
    template = _build_transport(cfg)
    base = _build_initial(cfg, template.grid)
    sources = tuple(s * base for s in cfg.get("inverse.sources"))
    experiment = ExperimentSet(template, sources,
                               noise_level=cfg.get("inverse.noise"),
                               seed=cfg.get("inverse.seed"))
    solver = _build_solver_options(cfg)
    experiment = generate_data(experiment, solver)
    options = RecoveryOptions(
        tol_m=cfg.get("inverse.tol_m"),
        max_iter=cfg.get("inverse.max_iter"),
        smooth=cfg.get("inverse.smooth"),
        cond_max=cfg.get("inverse.cond_max"),
        solver=solver,
    )
    result = reconstruct(experiment, options)
    prefix = cfg.get("output.prefix")
    for j, data in enumerate(experiment.data):
        path = out / f"{prefix}_data_{j}.nlrte"
        write_array(data.values, path)
        record["outputs"].append(str(path))
    for l in range(result.coefficients.shape[0]):
        path = out / f"{prefix}_coefficient_{l}.nlrte"
        write_array(result.coefficients[l], path)
        record["outputs"].append(str(path))
    resid_path = out / f"{prefix}_residuals.csv"
    write_csv(resid_path, ["experiment", "residual", "relative"],
              [np.arange(len(result.residuals)), result.residuals,
               result.relative_residuals])
    record["outputs"].append(str(resid_path))
    record["iterations"] = {"recovery": result.recovery_iterations}
    record["seeds"] = {"noise": cfg.get("inverse.seed")}
    record["sources"] = [float(np.max(s)) for s in sources]
    record["noise"] = cfg.get("inverse.noise")
    return 0


def _cmd_wigner_validate(cfg: Config, out: Path, record: dict) -> int:
    eps = cfg.get("wigner.epsilon")
    grid = TransverseGrid(cfg.get("wigner.length"), cfg.get("wigner.points"))
    spec = RandomMediumSpec(
        sigma_v=cfg.get("wigner.sigma_v"),
        correlation_length=cfg.get("wigner.correlation"),
        decorrelation_step=cfg.get("wigner.decorrelation"),
        seed=cfg.get("wigner.seed"),
    )
    wconfig = WignerConfig(epsilon=eps,
                           absorption=cfg.get("wigner.absorption"),
                           ensemble=cfg.get("wigner.ensemble"))
    x = grid.coordinates()
    width = cfg.get("wigner.beam_width")
    amp = np.exp(-x ** 2 / (2 * width ** 2))

    def initial(x_, rng):
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return amp * (np.exp(1j * x_ / eps)
                      + np.exp(-1j * x_ / eps + 1j * phi)) / np.sqrt(2.0)

    targets = cfg.get("wigner.targets")
    dz = cfg.get("wigner.dz")
    ensemble = ensemble_density(spec, wconfig, grid, initial, targets, dz)
    horizon = float(max(targets))
    problem = matched_transport_problem(spec, wconfig, grid, amp ** 2,
                                        horizon, int(round(horizon / dz)))
    report = compare_with_transport(ensemble, problem,
                                    threshold=cfg.get("wigner.threshold"),
                                    options=_build_solver_options(cfg))
    prefix = cfg.get("output.prefix")
    mean_path = out / f"{prefix}_mean_density.nlrte"
    write_array(ensemble.mean_density, mean_path)
    table_path = out / f"{prefix}_comparison.csv"
    write_csv(table_path,
              ["z", "l1_shape", "mass_wave", "mass_transport"],
              [report.z_targets, report.l1_shape_discrepancy,
               report.mass_wave, report.mass_transport])
    record["outputs"] += [str(mean_path), str(table_path)]
    record["seeds"] = {"medium": spec.seed}
    record["matching"] = {k: float(v) for k, v in report.matching.items()}
    record["comparison"] = {
        "l1_shape": report.l1_shape_discrepancy.tolist(),
        "threshold": report.threshold,
        "within_threshold": report.within_threshold,
    }
    print("L1 shape discrepancy per target:",
          ", ".join("%.4f" % v for v in report.l1_shape_discrepancy))
    if not report.within_threshold:
        print(f"warning: final discrepancy exceeds the "
              f"{report.threshold:.0%} band")
    return 0


def _cmd_check_conditions(cfg: Config, out: Path, record: dict) -> int:
    problem = _build_transport(cfg)
    f_sup = cfg.get("conditions.f_sup")
    if f_sup is None:
        f_sup = problem.f_sup
    rep_i = check_condition_i(problem.absorption, problem.nu, f_sup)
    rep_ii = check_condition_ii(problem.absorption, problem.phase,
                                problem.sigma_s, problem.nu, f_sup,
                                problem.epsilon)
    print(f"condition (i): {'pass' if rep_i.passed else 'fail'} "
          f"(bound {rep_i.bound:.6g}, margin {rep_i.margin:.6g})")
    for order, bound in (rep_i.per_order or {}).items():
        print(f"  order {order}: admissible sup {bound:.6g}")
    print(f"condition (ii): {'pass' if rep_ii.passed else 'fail'} "
          f"(margin {rep_ii.margin:.6g})")
    record["conditions"] = {
        "f_sup": float(f_sup),
        "i": {"passed": rep_i.passed, "bound": rep_i.bound,
              "margin": rep_i.margin},
        "ii": {"passed": rep_ii.passed, "margin": rep_ii.margin},
    }
    return 0


def _cmd_inequality_check(cfg: Config, out: Path, record: dict) -> int:
    d = cfg.get("grid.dimension")
    quad = build_quadrature(d, cfg.get("angular.count"))
    trials = cfg.get("inequality.trials")
    seed = cfg.get("inequality.seed")
    g = cfg.get("inequality.g")
    results = {}
    for name, phase in (("isotropic", make_isotropic(quad)),
                        (f"g={g}", make_linear_anisotropic(g, quad)),
                        (f"g={-g}", make_linear_anisotropic(-g, quad))):
        report = appendix_inequality_check(phase, quad, trials, seed)
        results[name] = {"violations": report.violations,
                         "max_slack": report.max_slack}
        print(f"{name}: {report.violations} violations over {trials} trials "
              f"(worst slack {report.max_slack:.3e})")
    record["inequality"] = results
    return 0


_HANDLERS = {
    "forward": _cmd_forward,
    "diffusion": _cmd_diffusion,
    "limit-study": _cmd_limit_study,
    "invert": _cmd_invert,
    "wigner-validate": _cmd_wigner_validate,
    "check-conditions": _cmd_check_conditions,
    "inequality-check": _cmd_inequality_check,
}


def emit_manifest(out: Path, command: str, cfg: Config | None, record: dict,
                  status: str, failure: str | None, started: float) -> Path:
    import numba
    import scipy

    results = {key: record[key] for key in
               ("study", "comparison", "conditions", "inequality", "matching",
                "sources", "noise") if key in record}

    def relativize(p: str) -> str:
        try:
            return str(Path(p).relative_to(out))
        except ValueError:
            return p

    manifest = RunManifest(
        command=command,
        config=cfg.as_dict() if cfg is not None else {},
        package_version=__version__,
        library_versions={"numpy": np.__version__,
                          "scipy": scipy.__version__,
                          "numba": numba.__version__},
        seeds=record.get("seeds", {}),
        iterations=record.get("iterations", {}),
        results=results,
        wall_clock_s=time.time() - started,
        outputs=sorted(relativize(p) for p in record.get("outputs", [])),
        status=status,
        failure=failure,
    )
    path = out / "manifest.json"
    manifest.write(path)
    return path


def run(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="nlrte",
        description="semilinear radiative transport toolbox")
    sub = parser.add_subparsers(dest="command")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a line-oriented config file")
        p.add_argument("--out", default="nlrte-out",
                       help="output directory (created if missing)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage()
        return 1

    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {"outputs": []}
    cfg = None
    try:
        cfg = config_mod.load(args.config)
        code = _HANDLERS[args.command](cfg, out, record)
        emit_manifest(out, args.command, cfg, record, "ok", None, started)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        emit_manifest(out, args.command, cfg, record, "failed",
                      f"config error: {exc}", started)
        return 1
    except NonConvergenceError as exc:
        print(f"solver failed to converge: {exc}", file=sys.stderr)
        emit_manifest(out, args.command, cfg, record, "failed", str(exc),
                      started)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        emit_manifest(out, args.command, cfg, record, "failed", str(exc),
                      started)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
