"""End-to-end pipeline and command line entry point."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import AssemblyError, BoundaryCondition, assemble_system, dump_system, make_bases
from .config import ConfigError, RunConfig, parse_config
from .mesh import MaterialTable, Mesh, MeshError, generate_cube_mesh, load_mesh
from .postprocess import ErrorNorms, ExactSolution, error_norms, manufactured_data, sample_slice, write_slice_csv
from .solve import DirectionAdaptError, SolveReport, SolverError, adapt_directions, solve

__all__ = ["RunSummary", "PipelineError", "build_problem", "run", "main", "EXIT_CODES"]

log = logging.getLogger("uwvf")

EXIT_CODES = {"ok": 0, "config": 2, "mesh": 3, "assembly": 4, "solver": 5}

COMPLEX_EPS_WARNING = "convergence unproven for complex permittivity"


class PipelineError(RuntimeError):
    def __init__(self, phase: str, exc: Exception):
        super().__init__(f"[{phase}] {exc}")
        self.phase = phase
        self.exit_code = EXIT_CODES[phase]


@dataclass
class RunSummary:
    dof_count: int
    n_elements: int
    p_histogram: dict
    report: SolveReport
    errors: ErrorNorms | None = None
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    max_condition: float = 0.0
    shape_regularity: float = 0.0

    @property
    def converged(self) -> bool:
        return self.report.converged

    def to_text(self) -> str:
        def num(x):
            return f"{float(x):.17g}"

        lines = [
            f"converged = {'true' if self.converged else 'false'}",
            f"elements = {self.n_elements}",
            f"dof_count = {self.dof_count}",
        ]
        lines += [f"p_hist.{p} = {c}" for p, c in sorted(self.p_histogram.items())]
        lines += [
            f"mesh.shape_regularity = {num(self.shape_regularity)}",
            f"cond.max = {num(self.max_condition)}",
            f"solver.method = {self.report.method}",
            f"solver.iterations = {self.report.iterations}",
            f"solver.residual = {num(self.report.residual)}",
            f"solver.residual_euclidean = {num(self.report.residual_euclidean)}",
            f"solver.residual_dweighted = {num(self.report.residual_dweighted)}",
            f"solver.restarts = {self.report.restarts}",
        ]
        if self.errors is not None:
            e = self.errors
            lines += [
                f"error.volume_abs = {num(e.volume_abs)}",
                f"error.volume_rel = {num(e.volume_rel)}",
                f"error.trace_abs = {num(e.trace_abs)}",
                f"error.trace_rel = {num(e.trace_rel)}",
            ]
        lines += [f"warning.{i} = {w}" for i, w in enumerate(self.warnings)]
        lines += [f"time.{k} = {num(v)}" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"


def _load_mesh(config: RunConfig, base: Path) -> Mesh:
    if config.mesh_cube is not None:
        return generate_cube_mesh(config.mesh_cube)
    path = Path(config.mesh_file)
    if not path.is_absolute():
        path = base / path
    return load_mesh(path.read_text())


def build_problem(config: RunConfig, mesh: Mesh):
    """Materials, boundary conditions and the exact solution (if one is implied)."""
    for tag in config.boundary:
        if tag not in mesh.boundary_tags:
            raise ConfigError(f"boundary tag {tag} does not exist in the mesh")
    for region in config.eps:
        if region not in mesh.regions:
            raise ConfigError(f"region {region} does not exist in the mesh")
    materials = MaterialTable({r: config.eps_for(r) for r in mesh.regions})
    eps_values = {materials[r] for r in mesh.regions}

    specs = {tag: config.boundary_for(tag) for tag in mesh.boundary_tags}
    waves = {}
    for tag, spec in specs.items():
        if spec.data != "planewave":
            continue
        if len(eps_values) != 1:
            raise ConfigError("planewave boundary data requires a uniform permittivity")
        d = np.asarray(spec.d) / np.linalg.norm(spec.d)
        if spec.p is None:
            wave = ExactSolution.along(d, config.kappa, next(iter(eps_values)))
        else:
            wave = ExactSolution(d, np.asarray(spec.p) / np.linalg.norm(spec.p), config.kappa, next(iter(eps_values)))
        waves[tag] = wave

    boundary = {}
    for tag, spec in specs.items():
        data = manufactured_data(waves[tag], spec.Q, spec.lam) if tag in waves else None
        boundary[tag] = BoundaryCondition(spec.Q, spec.lam, data)

    exact = None
    if waves and len(waves) == len(specs):
        first = next(iter(waves.values()))
        if all(np.array_equal(w.d, first.d) and np.array_equal(w.p, first.p) for w in waves.values()):
            exact = first
    return materials, boundary, exact


def run(config: RunConfig, workers: int = 1, dump: bool = False, base_dir: str | os.PathLike = ".") -> RunSummary:
    """Mesh, directions, assembly, solve and post-processing; writes the output files."""
    base = Path(base_dir)
    out_dir = Path(config.output_dir)
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    timings = {}
    notes = []

    t = time.perf_counter()
    try:
        mesh = _load_mesh(config, base)
    except (MeshError, OSError) as exc:
        raise PipelineError("mesh", exc) from exc
    timings["mesh"] = time.perf_counter() - t

    try:
        materials, boundary, exact = build_problem(config, mesh)
    except (ConfigError, ValueError) as exc:
        raise PipelineError("config", exc) from exc
    for tag in mesh.boundary_tags:
        if abs(boundary[tag].Q) == 1:
            notes.append(f"|Q|=1 on boundary tag {tag}: uniqueness is only guaranteed for |Q|<1")
    if materials.is_absorbing():
        notes.append(COMPLEX_EPS_WARNING)
    for note in notes:
        log.warning(note)

    t = time.perf_counter()
    try:
        if config.direction_policy == "adaptive":
            counts, _ = adapt_directions(mesh, materials, config.kappa, config.solver, boundary,
                                         config.lam_interior, workers)
        else:
            counts = np.full(mesh.n_elements, config.p)
    except DirectionAdaptError as exc:
        raise PipelineError("assembly", exc) from exc
    timings["directions"] = time.perf_counter() - t

    t = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bases = make_bases(mesh, materials, config.kappa, counts)
            system = assemble_system(mesh, bases, boundary, config.lam_interior, config.solver.cond_cap,
                                     workers, config.quadrature_safety)
    except (AssemblyError, ValueError) as exc:
        raise PipelineError("assembly", exc) from exc
    timings["assembly"] = time.perf_counter() - t

    t = time.perf_counter()
    try:
        chi, report = solve(system, config.solver)
    except SolverError as exc:
        raise PipelineError("solver", exc) from exc
    timings["solve"] = time.perf_counter() - t

    t = time.perf_counter()
    errors = error_norms(chi, mesh, bases, exact, boundary, config.lam_interior) if exact is not None else None
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.residuals:
        with open(out_dir / "residuals.csv", "w") as fh:
            fh.write("iteration,residual\n")
            for i, r in enumerate(report.residual_history):
                fh.write(f"{i},{r:.17g}\n")
    for spec in config.slices:
        samples = sample_slice(chi, mesh, bases, spec.origin, spec.u, spec.v, spec.resolution)
        (out_dir / f"slice_{spec.name}.csv").write_text(write_slice_csv(samples))
    if dump or config.dump_system:
        (out_dir / "system_dump.txt").write_text(dump_system(system))
    np.save(out_dir / "chi.npy", chi)
    timings["postprocess"] = time.perf_counter() - t

    summary = RunSummary(
        dof_count=system.dof_count,
        n_elements=mesh.n_elements,
        p_histogram=dict(Counter(int(c) for c in counts)),
        report=report,
        errors=errors,
        warnings=notes,
        timings=timings,
        max_condition=float(np.max(system.condition_numbers)),
        shape_regularity=mesh.shape_regularity(),
    )
    (out_dir / "summary.txt").write_text(summary.to_text())
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="uwvf", description="UWVF plane-wave solver for time-harmonic Maxwell")
    parser.add_argument("--config", required=True, help="key = value configuration file")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="assembly worker threads")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--dump-system", action="store_true", help="write D, C and b to system_dump.txt")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")

    try:
        path = Path(args.config)
        config = parse_config(path.read_text())
    except (OSError, ConfigError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    try:
        summary = run(config, workers=max(1, args.threads), dump=args.dump_system, base_dir=path.parent)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("dofs=%d iterations=%d residual=%.3e", summary.dof_count, summary.report.iterations,
             summary.report.residual)
    if not summary.converged:
        print("error [solver]: iteration did not reach the tolerance", file=sys.stderr)
        return EXIT_CODES["solver"]
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())
