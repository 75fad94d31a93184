"""Command line interface: ``nsmpb solve | gen-mesh | validate``.

Run configurations are flat ``key = value`` files with dotted section names::

    model = nsmpb
    molecule.charge = 1.0
    mesh.born.divisions = 12
    solvent.eps_inf = 1.8
    output.prefix = born

``#`` starts a comment. Every key not given keeps its default.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .mesh import MeshError, gen_born_mesh, read_tetgen, validate, write_tetgen
from .model import DEFAULT_SPECIES, IonSpecies, build_solvent_model, derive_constants
from .post import solvent_concentrations, trace_csv, write_vtk
from .pqr import Molecule, PQRError, read_pqr
from .solver import STEP_NAMES, LinearConfig, ModelKind, NewtonConfig, SolverError, solve

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in problems))
        self.problems = problems


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _species(text):
    """``Z:c:r`` triples separated by commas, e.g. ``-1:0.1:3.32, 1:0.1:3.31``."""
    out = []
    for item in text.split(","):
        z, c, r = item.strip().split(":")
        out.append(IonSpecies(int(z), float(c), float(r)))
    return tuple(out)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA = {
    "model": (lambda s: ModelKind(s.strip().lower()), ModelKind.NSMPB),
    "molecule.pqr": (str, None),
    "molecule.charge": (float, None),
    "molecule.position": (_floats, (0.0, 0.0, 0.0)),
    "mesh.node": (str, None),
    "mesh.ele": (str, None),
    "mesh.born.halfwidth": (float, 20.0),
    "mesh.born.radius": (float, 5.0),
    "mesh.born.divisions": (int, None),
    "mesh.born.method": (str, "warp"),
    "mesh.born.snap_fraction": (float, 0.3),
    "solvent.species": (_species, DEFAULT_SPECIES),
    "solvent.concentration_scale": (float, 1.0),
    "solvent.eps_p": (float, 2.0),
    "solvent.eps_s": (float, 80.0),
    "solvent.eps_inf": (float, 1.8),
    "solvent.lambda": (float, 15.0),
    "solvent.v0": (float, None),
    "constants.temperature": (float, None),
    "newton.tau": (float, 40.0),
    "newton.eta": (float, 0.01),
    "newton.eps_r": (float, 1e-8),
    "newton.eps_a": (float, 1e-8),
    "newton.max_newton": (int, 60),
    "newton.selection_order": (_ints, (2, 1, 3, 4)),
    "linear.rel_tol": (float, 1e-8),
    "linear.abs_tol": (float, 1e-8),
    "linear.restart": (int, 100),
    "linear.max_iter": (int, 1000),
    "fem.quad_degree": (int, 2),
    "output.prefix": (str, "nsmpb"),
    "output.timings": (_bool, True),
}


@dataclass
class RunConfig:
    values: dict
    overrides: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    def newton(self) -> NewtonConfig:
        v = self.values
        return NewtonConfig(v["newton.tau"], v["newton.eta"], v["newton.eps_r"],
                            v["newton.eps_a"], v["newton.max_newton"],
                            tuple(v["newton.selection_order"]))

    def linear(self) -> LinearConfig:
        v = self.values
        return LinearConfig(v["linear.rel_tol"], v["linear.abs_tol"], v["linear.restart"],
                            v["linear.max_iter"])

    def solvent(self):
        v = self.values
        species = v["solvent.species"]
        if v["solvent.concentration_scale"] != 1.0:
            f = v["solvent.concentration_scale"]
            species = tuple(IonSpecies(s.charge_number, s.bulk_concentration * f, s.radius)
                            for s in species)
        constants = None
        if v["constants.temperature"] is not None:
            constants = derive_constants(v["constants.temperature"])
        return build_solvent_model(species, v["solvent.eps_p"], v["solvent.eps_s"],
                                   v["solvent.eps_inf"], v["solvent.lambda"], v["solvent.v0"],
                                   constants)


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse and validate a run configuration; all problems are reported together."""
    problems = []
    overrides = {}
    values = {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"{key}: unknown key (line {lineno})")
            continue
        try:
            values[key] = SCHEMA[key][0](val)
            overrides[key] = val
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc} (line {lineno})")

    base = Path(base_dir)
    if values["molecule.pqr"] is None and values["molecule.charge"] is None:
        problems.append("molecule: give molecule.pqr or molecule.charge")
    if values["molecule.pqr"] is not None and values["molecule.charge"] is not None:
        problems.append("molecule: molecule.pqr and molecule.charge are exclusive")
    tetgen = values["mesh.node"] is not None or values["mesh.ele"] is not None
    born = values["mesh.born.divisions"] is not None
    if tetgen == born:
        problems.append("mesh: give exactly one of mesh.node/mesh.ele or mesh.born.divisions")
    if tetgen and (values["mesh.node"] is None or values["mesh.ele"] is None):
        problems.append("mesh: mesh.node and mesh.ele must be given together")
    for key in ("molecule.pqr", "mesh.node", "mesh.ele"):
        if values[key] is not None:
            p = Path(values[key])
            p = p if p.is_absolute() else base / p
            if not p.exists():
                problems.append(f"{key}: file not found: {p}")
    eps_s, eps_inf = values["solvent.eps_s"], values["solvent.eps_inf"]
    if eps_inf > eps_s:
        problems.append(f"solvent.eps_inf: eps_inf < eps_s violated ({eps_inf} > {eps_s})")
    for key in ("solvent.eps_p", "solvent.eps_s", "solvent.eps_inf", "solvent.lambda"):
        if not values[key] > 0:
            problems.append(f"{key}: must be positive")
    try:
        NewtonConfig(values["newton.tau"], values["newton.eta"], values["newton.eps_r"],
                     values["newton.eps_a"], values["newton.max_newton"],
                     tuple(values["newton.selection_order"]))
    except ValueError as exc:
        problems.append(f"newton: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(values, overrides, base)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


# -- report ---------------------------------------------------------------------

def _seconds(t):
    return f"{t:.2f}" if t < 60 else f"{t / 60:.2f} min."


def format_report(cfg: RunConfig, mesh_report, solution, timings: dict) -> str:
    lines = ["# nsmpb run report", f"# version {__version__}", "# overrides:"]
    lines += [f"#   {k} = {v}" for k, v in cfg.overrides.items()] or ["#   (none)"]
    lines += ["", "## mesh", mesh_report.to_text().rstrip(), ""]
    if cfg["output.timings"]:
        cols = ["mesh", "kernels", "psi", "initial", "newton"]
        head = " | ".join(STEP_NAMES[c] for c in cols) + " | Total CPU time"
        row = " | ".join(_seconds(timings.get(c, 0.0)) for c in cols)
        lines += ["## timings (seconds)", head, row + " | " + _seconds(timings["total"]), ""]
    tr = solution.trace
    lines.append("## solution")
    lines.append(f"model = {solution.problem.kind.value}")
    if tr is not None:
        lines += [
            f"selection = {tr.selection}",
            f"newton_iterations = {tr.iterations}",
            f"initial_residual = {tr.initial_residual:.6e}",
            f"final_residual = {tr.residuals[-1]:.6e}",
            f"threshold = {tr.threshold:.6e}",
            f"restarts = {len(tr.restarts)}",
            f"omegas = {' '.join(f'{w:g}' for w in tr.omegas)}",
        ]
    u = solution.u
    lines.append(f"u_min = {np.nanmin(u):.10g}")
    lines.append(f"u_max = {np.nanmax(u):.10g}")
    return "\n".join(lines) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_solve(config_path) -> int:
    try:
        cfg = load_config(config_path)
        solvent = cfg.solvent()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        if cfg["molecule.pqr"] is not None:
            molecule = read_pqr(cfg.path("molecule.pqr"))
        else:
            molecule = Molecule.single_ion(cfg["molecule.charge"], 0.0, cfg["molecule.position"])
        if cfg["mesh.node"] is not None:
            mesh = read_tetgen(cfg.path("mesh.node"), cfg.path("mesh.ele"))
        else:
            mesh = gen_born_mesh(cfg["mesh.born.halfwidth"], cfg["mesh.born.radius"],
                                 cfg["mesh.born.divisions"], cfg["mesh.born.snap_fraction"],
                                 cfg["mesh.born.method"])
    except (PQRError, MeshError, OSError) as exc:
        print(f"error: step 1 (input): {exc}", file=sys.stderr)
        return EXIT_INPUT
    t_mesh = time.perf_counter() - t0
    mesh_report = validate(mesh)
    if not mesh_report.ok:
        print(f"error: step 1 (mesh): {'; '.join(mesh_report.problems)}", file=sys.stderr)
        return EXIT_INPUT

    prefix = cfg["output.prefix"]
    prefix = str(prefix if Path(prefix).is_absolute() else cfg.base_dir / prefix)
    try:
        solution = solve(cfg["model"], mesh, molecule, solvent, cfg.newton(), cfg.linear(),
                         quad_degree=cfg["fem.quad_degree"])
    except SolverError as exc:
        step = {"kernels": 1, "psi": 2, "initial": 3, "linear": 4, "newton": 4}.get(exc.stage, "?")
        print(f"error: step {step} ({exc.stage}): {exc}", file=sys.stderr)
        if exc.trace is not None:
            Path(prefix + ".trace.csv").write_text(trace_csv(exc.trace))
        return EXIT_FAILED
    timings = dict(solution.timings, mesh=t_mesh)
    timings["total"] += t_mesh

    f = solution.fields
    fields = {"u": f.u, "phi_t": f.phi_t, "zeta": f.zeta, "psi": f.psi}
    fields.update(solvent_concentrations(solution, cfg["newton.tau"]))
    write_vtk(mesh, fields, prefix + ".vtk")
    if solution.trace is not None:
        Path(prefix + ".trace.csv").write_text(trace_csv(solution.trace))
    Path(prefix + ".report.txt").write_text(format_report(cfg, mesh_report, solution, timings))
    print(f"wrote {prefix}.vtk, {prefix}.report.txt")
    return EXIT_OK


def cmd_gen_mesh(args) -> int:
    try:
        mesh = gen_born_mesh(args.halfwidth, args.radius, args.divisions, args.snap, args.method)
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    node, ele = write_tetgen(mesh, args.out)
    print(f"wrote {node} and {ele}: {mesh.n_vertices} vertices, {mesh.n_tets} tetrahedra")
    return EXIT_OK


def cmd_validate(node, ele) -> int:
    try:
        mesh = read_tetgen(node, ele)
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = validate(mesh)
    print(report.to_text(), end="")
    return EXIT_OK if report.ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsmpb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run the solver on a configuration file")
    p.add_argument("config")
    p = sub.add_parser("gen-mesh", help="write a sphere-interface box mesh in TetGen format")
    p.add_argument("--halfwidth", type=float, default=20.0)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--divisions", type=int, default=12)
    p.add_argument("--snap", type=float, default=0.3)
    p.add_argument("--method", choices=("warp", "snap"), default="warp")
    p.add_argument("--out", default="born")
    p = sub.add_parser("validate", help="check a TetGen mesh and print its statistics")
    p.add_argument("node")
    p.add_argument("ele")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config)
    if args.command == "gen-mesh":
        return cmd_gen_mesh(args)
    return cmd_validate(args.node, args.ele)


if __name__ == "__main__":
    sys.exit(main())
