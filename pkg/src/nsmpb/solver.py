"""Finite element solution of the nonlocal size-modified Poisson-Boltzmann model.

The potential is split as u = G + Psi + Phi_t. G is the closed-form Coulomb
part of the fixed charges, Psi solves a linear nonlocal interface problem and
Phi_t solves the nonlinear problem. Every convolution with the Yukawa kernel
is replaced by an auxiliary field zeta solving

    lambda^2 (grad zeta, grad v) + (zeta - p, v) = 0,

so the Newton iteration works on the pair (Phi_t, zeta) and never forms a
convolution.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import linalg
from .backend import impl
from .fem import (
    AssembledSystem,
    P1Space,
    apply_dirichlet,
    assemble_interface_load,
    assemble_mass,
    assemble_stiffness,
    blocked,
)
from .kernels import KernelContext, eval_G, eval_g_gamma, eval_Ghat
from .mesh import RegionLabel, TetMesh
from .model import SolventModel
from .pqr import Molecule


class ModelKind(str, Enum):
    NSMPB = "nsmpb"
    NMPB = "nmpb"
    SMPB = "smpb"
    LINEAR = "linear"


class SolverError(RuntimeError):
    """Failure in one stage of the pipeline; ``stage`` names it."""

    def __init__(self, message, stage=None, trace=None, report=None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage
        self.trace = trace
        self.report = report


class NumericalError(SolverError):
    pass


@dataclass(frozen=True)
class NewtonConfig:
    tau: float = 40.0
    eta: float = 0.01
    eps_r: float = 1e-8
    eps_a: float = 1e-8
    max_newton: int = 60
    selection_order: tuple = (2, 1, 3, 4)

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.eps_r > 0 and self.eps_a > 0):
            raise ValueError("termination tolerances must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")
        if not self.selection_order or any(s not in (1, 2, 3, 4) for s in self.selection_order):
            raise ValueError("selection_order entries must be in {1, 2, 3, 4}")

    def threshold(self, f0: float) -> float:
        """Stopping level: ||F|| < eps_r ||F0|| + eps_a."""
        return self.eps_r * f0 + self.eps_a


@dataclass(frozen=True)
class LinearConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    restart: int = 100
    max_iter: int = 1000


@dataclass
class FieldSet:
    """Nodal fields of one solution; all sized to the vertex count."""

    phi_t: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray
    zeta_psi: np.ndarray
    g_nodes: np.ndarray

    @property
    def u(self) -> np.ndarray:
        """G + Psi + Phi_t; NaN at vertices on atom centers."""
        return self.g_nodes + self.psi + self.phi_t


@dataclass
class NewtonStep:
    iteration: int
    residual: float
    relative: float
    difference: float
    omega: float
    halvings: int
    krylov_iterations: int
    krylov_residual: float
    zeta_residual: float
    selection: int


@dataclass
class NewtonTrace:
    steps: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    initial_residual: float = float("nan")
    threshold: float = float("nan")
    converged: bool = False
    selection: Optional[int] = None

    @property
    def residuals(self) -> np.ndarray:
        """Accepted residual norms, starting with the initial one."""
        return np.array([self.initial_residual] + [s.residual for s in self.steps])

    @property
    def omegas(self) -> list:
        return [s.omega for s in self.steps]

    @property
    def iterations(self) -> int:
        return len(self.steps)


# -- problem data -------------------------------------------------------------

class Problem:
    """Discrete operators and kernel data for one mesh, molecule and solvent.

    ``kind`` selects the Boltzmann integrand and the field structure: the
    SMPB path is a single-field problem, all others carry (Phi_t, zeta).
    """

    def __init__(
        self,
        mesh: TetMesh,
        molecule: Molecule,
        solvent: SolventModel,
        kind: ModelKind = ModelKind.NSMPB,
        newton: NewtonConfig = NewtonConfig(),
        linear: LinearConfig = LinearConfig(),
        boundary_g=None,
        quad_degree: int = 2,
        _shared=None,
    ):
        kind = ModelKind(kind)
        if kind is ModelKind.NMPB and solvent.v_bar != 0.0:
            solvent = solvent.pointlike()
        if kind is ModelKind.SMPB and solvent.eps_inf != solvent.eps_s:
            solvent = solvent.local()
        self.mesh = mesh
        self.molecule = molecule
        self.solvent = solvent
        self.kind = kind
        self.newton = newton
        self.linear = linear
        self.two_field = kind is not ModelKind.SMPB
        self.timings = {}
        self._boundary_g = boundary_g
        self._psi = None
        t0 = time.perf_counter()
        if _shared is None:
            self._build_shared(quad_degree)
        else:
            self.__dict__.update(_shared)
        self._build_kernel_data()
        self.timings["kernels"] = time.perf_counter() - t0

    # shared matrices do not depend on permittivities or salt
    _SHARED = ("space", "solvent_tets", "Kp", "Ks", "K", "M", "Ms", "ctx", "g_qp", "g_nodes",
               "g_boundary", "ghat_qp")

    def _build_shared(self, quad_degree):
        mesh = self.mesh
        self.space = space = P1Space(mesh, quad_degree)
        self.solvent_tets = space.tets_in(RegionLabel.SOLVENT)
        self.Kp = assemble_stiffness(space, RegionLabel.PROTEIN)
        self.Ks = assemble_stiffness(space, RegionLabel.SOLVENT)
        self.K = (self.Kp + self.Ks).tocsr()
        self.M = assemble_mass(space)
        self.Ms = assemble_mass(space, RegionLabel.SOLVENT)
        s = self.solvent
        self.ctx = KernelContext(self.molecule, s.constants.alpha, s.eps_p, s.lam)
        pts = space.qpoints[self.solvent_tets]
        self.g_qp = eval_G(self.ctx, pts.reshape(-1, 3)).reshape(pts.shape[:2])
        self.ghat_qp = eval_Ghat(self.ctx, pts.reshape(-1, 3)).reshape(pts.shape[:2])
        self.g_nodes = nodal_G(self.ctx, mesh.vertices)
        self.g_boundary = eval_G(self.ctx, mesh.vertices[space.boundary_dofs])

    def _build_kernel_data(self):
        s = self.solvent
        self.interface_load = assemble_interface_load(
            self.space, lambda p, n: eval_g_gamma(self.ctx, s.eps_s, s.eps_inf, p, n)
        )
        self.A_phi = (s.eps_p * self.Kp + s.eps_inf * self.Ks).tocsr()
        self.C = ((s.eps_s - s.eps_inf) * self.Ks).tocsr()
        self.Y = (s.lam**2 * self.K + self.M).tocsr()
        self.charges = np.ascontiguousarray(s.charges, dtype=float)
        self.bulk = np.ascontiguousarray(s.bulk, dtype=float)

    def variant(self, solvent: SolventModel, kind: ModelKind) -> "Problem":
        """Same mesh and molecule with another solvent or model kind."""
        shared = {k: getattr(self, k) for k in self._SHARED}
        if solvent.lam != self.solvent.lam or solvent.eps_p != self.solvent.eps_p:
            shared = None
        return Problem(self.mesh, self.molecule, solvent, kind, self.newton, self.linear,
                       self._boundary_g, self.space.quad.degree, _shared=shared)

    # -- helpers --------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.space.n

    def boundary_values(self) -> np.ndarray:
        """Dirichlet data of Psi: g - G on the box boundary."""
        bd = self.space.boundary_dofs
        g = self._boundary_g
        if g is None:
            gv = np.zeros(len(bd))
        elif callable(g):
            gv = np.asarray(g(self.mesh.vertices[bd]), dtype=float)
        else:
            gv = np.asarray(g, dtype=float)
        if gv.shape != (len(bd),):
            raise ValueError("boundary data must give one value per boundary vertex")
        return gv - self.g_boundary

    def _solve(self, system: AssembledSystem, stage: str, x0=None):
        lc = self.linear
        try:
            x, rep = linalg.solve(system.matrix, system.rhs, lc.rel_tol, lc.abs_tol,
                                  lc.restart, lc.max_iter, x0=x0)
        except linalg.LinearSolveError as err:
            raise SolverError(str(err), stage=stage, report=err.report) from err
        except linalg.ZeroPivotError as err:
            raise SolverError(str(err), stage=stage) from err
        return x, rep

    def _zero_dirichlet(self, system: AssembledSystem) -> AssembledSystem:
        bd = self.space.boundary_dofs
        if system.n_fields == 2:
            bd = np.concatenate([bd, bd + self.n])
        return apply_dirichlet(system, bd, np.zeros(len(bd)))

    def _two_field(self, A11, rhs1, stage) -> tuple:
        """Solve [[A11, C], [-M, lam^2 K + M]] (phi, zeta) = (rhs1, 0), zero boundary."""
        system = blocked([[A11, self.C], [-self.M, self.Y]], [rhs1, np.zeros(self.n)])
        x, rep = self._solve(self._zero_dirichlet(system), stage)
        return x[: self.n], x[self.n:], rep

    def _single_field(self, A, rhs, stage):
        x, rep = self._solve(self._zero_dirichlet(AssembledSystem(A.tocsr(), rhs)), stage)
        return x, rep

    def solvent_load(self, values) -> np.ndarray:
        return self.space.load_from_values(self.solvent_tets, values)

    def at_solvent_qp(self, nodal) -> np.ndarray:
        return self.space.values_at_quadrature(nodal, self.solvent_tets)

    # -- Psi ------------------------------------------------------------------
    def solve_psi(self):
        """(Psi, zeta_Psi) of the linear nonlocal interface problem (cached)."""
        if self._psi is not None:
            return self._psi
        s = self.solvent
        t0 = time.perf_counter()
        rhs = self.interface_load.copy()
        if s.eps_s != s.eps_inf:
            rhs -= (s.eps_s - s.eps_inf) / s.lam**2 * self.solvent_load(self.g_qp - self.ghat_qp)
        bd = self.space.boundary_dofs
        bvals = self.boundary_values()
        if self.two_field:
            system = blocked([[self.A_phi, self.C], [-self.M, self.Y]], [rhs, np.zeros(self.n)])
            dofs = np.concatenate([bd, bd + self.n])
            vals = np.concatenate([bvals, np.zeros(len(bd))])
            x, _ = self._solve(apply_dirichlet(system, dofs, vals), "psi")
            psi, zeta_psi = x[: self.n], x[self.n:]
        else:
            system = AssembledSystem(self.A_phi, rhs)
            psi, _ = self._solve(apply_dirichlet(system, bd, bvals), "psi")
            zeta_psi = np.zeros(self.n)
        self._psi = (psi, zeta_psi)
        self.timings["psi"] = time.perf_counter() - t0
        return self._psi

    def regular_qp(self) -> np.ndarray:
        """G + Psi at the solvent quadrature points."""
        psi, _ = self.solve_psi()
        return self.g_qp + self.at_solvent_qp(psi)

    # -- Boltzmann terms ------------------------------------------------------
    def boltzmann(self, phi, with_jacobian=True):
        """Charge density rho = A2/A1 and its derivative weight W at solvent quadrature points."""
        base = (self.regular_qp() + self.at_solvent_qp(phi)).ravel()
        tau = self.newton.tau
        if self.kind is ModelKind.NMPB:
            A2, A3 = impl.boltzmann_terms_pointlike(base, self.charges, self.bulk, tau)
            rho, W = A2, A3
        else:
            sf = self.solvent.size_factor
            A1, A2, A3 = impl.boltzmann_terms(base, self.charges, self.bulk, sf, tau)
            rho = A2 / A1
            W = (A1 * A3 - sf * A2 * A2) / (A1 * A1) if with_jacobian else None
        shape = self.g_qp.shape
        bad = ~np.isfinite(rho)
        if bad.any():
            tet = int(self.solvent_tets[np.flatnonzero(bad.reshape(shape).any(axis=1))[0]])
            raise NumericalError(f"non-finite Boltzmann term in tetrahedron {tet}", stage="newton")
        return rho.reshape(shape), (W.reshape(shape) if W is not None else None)

    # -- residual and Newton system -------------------------------------------
    def residual(self, phi, zeta=None) -> np.ndarray:
        """Phi_t-row residual F with the convolution replaced by zeta; zero on the boundary."""
        rho, _ = self.boltzmann(phi, with_jacobian=False)
        F = self.A_phi @ phi - self.solvent.constants.beta * self.solvent_load(rho)
        if self.two_field:
            F = F + self.C @ zeta
        F[self.space.boundary_dofs] = 0.0
        return F

    def zeta_residual(self, phi, zeta) -> np.ndarray:
        r = self.Y @ zeta - self.M @ phi
        r[self.space.boundary_dofs] = 0.0
        return r

    def jacobian_phi(self, phi) -> sp.csr_matrix:
        """Derivative of F in Phi_t: A_phi + beta * (W phi_i, phi_j) over the solvent."""
        _, W = self.boltzmann(phi)
        beta = self.solvent.constants.beta
        return (self.A_phi + beta * self.space.weighted_mass(self.solvent_tets, W)).tocsr()

    def newton_system(self, phi, zeta=None, F=None) -> AssembledSystem:
        """Linear system for the Newton direction with zero Dirichlet data."""
        if F is None:
            F = self.residual(phi, zeta)
        J = self.jacobian_phi(phi)
        if self.two_field:
            system = blocked([[J, self.C], [-self.M, self.Y]], [-F, np.zeros(self.n)])
        else:
            system = AssembledSystem(J, -F)
        return self._zero_dirichlet(system)

    # -- linear problems ------------------------------------------------------
    def solve_linear(self):
        """(Phi_l, zeta_l) of the linearized model; zeta_l is 0 on the SMPB path."""
        ups = self.solvent.upsilon
        rhs = -ups * self.solvent_load(self.regular_qp())
        A = (self.A_phi + ups * self.Ms).tocsr()
        if not self.two_field:
            phi, _ = self._single_field(A, rhs, "linear")
            return phi, np.zeros(self.n)
        phi, zeta, _ = self._two_field(A, rhs, "linear")
        return phi, zeta

    def solve_local_linear(self):
        """Local linear source: eps_inf replaced by eps_s, nonlocal Psi kept."""
        s = self.solvent
        ups = s.upsilon
        A = (s.eps_p * self.Kp + s.eps_s * self.Ks + ups * self.Ms).tocsr()
        rhs = -ups * self.solvent_load(self.regular_qp())
        phi, _ = self._single_field(A, rhs, "local-linear")
        return phi

    def solve_fixed_source(self, varsigma):
        """Frozen Boltzmann source: Phi_t with rhs beta * (rho(G + Psi + varsigma), v)."""
        rho, _ = self.boltzmann(varsigma, with_jacobian=False)
        rhs = self.solvent.constants.beta * self.solvent_load(rho)
        if not self.two_field:
            phi, _ = self._single_field(self.A_phi, rhs, "fixed-source")
            return phi, np.zeros(self.n)
        phi, zeta, _ = self._two_field(self.A_phi, rhs, "fixed-source")
        return phi, zeta

    def yukawa(self, p):
        return yukawa_project(self.space, p, self.solvent.lam, self.linear, self.Y, self.M)

    def initial_iterate(self, selection: int):
        """(Phi_t0, zeta0) for ``selection`` in {1, 2, 3, 4}."""
        try:
            if not self.two_field:
                # on the local path selections 1/2 and 3/4 coincide
                phi, _ = self.solve_linear()
                if selection in (3, 4):
                    phi, _ = self.solve_fixed_source(phi)
                return phi, np.zeros(self.n)
            if selection == 1:
                local = self.variant(self.solvent.local(), ModelKind.SMPB)
                psi_local, _ = local.solve_psi()
                sol, _ = damped_newton(local)
                psi, _ = self.solve_psi()
                phi0 = sol.phi_t + psi_local - psi
                phi0[self.space.boundary_dofs] = 0.0
                return phi0, self.yukawa(phi0)
            if selection == 2:
                return self.solve_linear()
            if selection == 3:
                varsigma, _ = self.solve_linear()
                return self.solve_fixed_source(varsigma)
            if selection == 4:
                return self.solve_fixed_source(self.solve_local_linear())
        except SolverError as err:
            raise SolverError(f"selection {selection}: {err}", stage="initial",
                              report=err.report) from err
        raise ValueError(f"unknown selection {selection}")

    def fieldset(self, phi, zeta) -> FieldSet:
        psi, zeta_psi = self.solve_psi()
        return FieldSet(phi, zeta if zeta is not None else np.zeros(self.n), psi, zeta_psi,
                        self.g_nodes)


def nodal_G(ctx: KernelContext, points) -> np.ndarray:
    """G at mesh vertices, NaN where a vertex sits on an atom center."""
    pts = np.asarray(points, dtype=float)
    d2 = ((pts[:, None, :] - ctx.molecule.positions[None, :, :]) ** 2).sum(axis=2)
    on_atom = (d2 < ctx.delta**2).any(axis=1)
    out = np.full(len(pts), np.nan)
    if (~on_atom).any():
        out[~on_atom] = eval_G(ctx, pts[~on_atom])
    return out


def yukawa_project(space: P1Space, p, lam: float, linear: LinearConfig = LinearConfig(),
                   Y=None, M=None) -> np.ndarray:
    """q in the zero-boundary P1 space with lam^2 (grad q, grad v) + (q - p, v) = 0."""
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        return np.zeros(space.n)
    if M is None:
        M = assemble_mass(space)
    if Y is None:
        Y = (lam**2 * assemble_stiffness(space) + M).tocsr()
    bd = space.boundary_dofs
    system = apply_dirichlet(AssembledSystem(Y, M @ p), bd, np.zeros(len(bd)))
    try:
        q, _ = linalg.solve(system.matrix, system.rhs, linear.rel_tol, linear.abs_tol,
                            linear.restart, linear.max_iter)
    except linalg.LinearSolveError as err:
        raise SolverError(str(err), stage="yukawa", report=err.report) from err
    return q


# -- Newton driver --------------------------------------------------------------

def damped_newton(problem: Problem, initial=None, config: Optional[NewtonConfig] = None,
                  initial_selection: int = 0):
    """Damped modified Newton iteration with selection restarts.

    Each step solves the linearized two-field system for (p, q), starts with
    omega = 1 and halves omega until ||F|| does not increase. When omega
    falls below eta the iteration restarts from the next initial iterate of
    ``config.selection_order``. ``initial`` = (phi0, zeta0) is tried first
    and recorded as ``initial_selection`` (0 = user supplied), which is then
    skipped in the ladder. Returns ``(FieldSet, NewtonTrace)``.
    """
    cfg = config or problem.newton
    ladder = list(cfg.selection_order)
    trace = NewtonTrace()
    interior = problem.space.interior_mask
    attempts = [(s, None) for s in ladder]
    if initial is not None:
        if initial_selection in ladder:
            attempts.pop(ladder.index(initial_selection))
        attempts.insert(0, (initial_selection, initial))

    for selection, start in attempts:
        if start is None:
            start = problem.initial_iterate(selection)
        phi = np.array(start[0], dtype=float)
        zeta = np.array(start[1], dtype=float) if problem.two_field else None
        sel_id = selection
        F = problem.residual(phi, zeta)
        fnorm = float(np.linalg.norm(F[interior]))
        f0 = fnorm
        trace.initial_residual = f0
        trace.threshold = cfg.threshold(f0)
        trace.steps = []
        restarted = False
        for k in range(1, cfg.max_newton + 1):
            if fnorm < trace.threshold:
                break
            system = problem.newton_system(phi, zeta, F)
            x, rep = problem._solve(system, "newton")
            p = x[: problem.n]
            q = x[problem.n:] if problem.two_field else None
            omega, halvings = 1.0, 0
            while True:
                phi_new = phi + omega * p
                zeta_new = zeta + omega * q if problem.two_field else None
                F_new = problem.residual(phi_new, zeta_new)
                fnew = float(np.linalg.norm(F_new[interior]))
                if fnew <= fnorm:
                    break
                omega *= 0.5
                halvings += 1
                if omega < cfg.eta:
                    restarted = True
                    break
            if restarted:
                trace.restarts.append((sel_id, k, "omega below eta", trace.steps))
                break
            zres = (float(np.linalg.norm(problem.zeta_residual(phi_new, zeta_new)[interior]))
                    if problem.two_field else 0.0)
            trace.steps.append(NewtonStep(
                iteration=k, residual=fnew, relative=fnew / f0 if f0 else 0.0,
                difference=float(np.linalg.norm(phi_new - phi)), omega=omega,
                halvings=halvings, krylov_iterations=rep.iterations,
                krylov_residual=rep.residual, zeta_residual=zres, selection=sel_id,
            ))
            phi, zeta, F, fnorm = phi_new, zeta_new, F_new, fnew
        if restarted:
            continue
        if fnorm < trace.threshold:
            trace.converged = True
            trace.selection = sel_id
            return problem.fieldset(phi, zeta), trace
        raise SolverError(f"no convergence within max_newton={cfg.max_newton} iterations "
                          f"(||F|| = {fnorm:.3e}, target {trace.threshold:.3e})",
                          stage="newton", trace=trace)
    raise SolverError("initial-iterate selections exhausted", stage="newton", trace=trace)


# -- pipeline -------------------------------------------------------------------

STEP_NAMES = {
    "mesh": "Generate meshes",
    "kernels": "Calculate G, Ghat, grad G, grad Ghat",
    "psi": "Find Psi",
    "initial": "Find Phi_t(0)",
    "newton": "Find Phi_t",
}


@dataclass
class Solution:
    problem: Problem
    fields: FieldSet
    trace: Optional[NewtonTrace]
    timings: dict

    @property
    def u(self) -> np.ndarray:
        return self.fields.u

    @property
    def mesh(self) -> TetMesh:
        return self.problem.mesh


def solve(kind, mesh: TetMesh, molecule: Molecule, solvent: SolventModel,
          newton: NewtonConfig = NewtonConfig(), linear: LinearConfig = LinearConfig(),
          boundary_g=None, quad_degree: int = 2) -> Solution:
    """Run the five pipeline steps: kernels, Psi, initial iterate, Newton, recomposition."""
    kind = ModelKind(kind)
    t_start = time.perf_counter()
    problem = Problem(mesh, molecule, solvent, kind, newton, linear, boundary_g, quad_degree)
    problem.solve_psi()
    timings = dict(problem.timings)
    trace = None
    if kind is ModelKind.LINEAR:
        t0 = time.perf_counter()
        phi, zeta = problem.solve_linear()
        timings["initial"] = 0.0
        timings["newton"] = time.perf_counter() - t0
    else:
        t0 = time.perf_counter()
        first = newton.selection_order[0]
        start = problem.initial_iterate(first)
        timings["initial"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        fields, trace = damped_newton(problem, start, newton, initial_selection=first)
        timings["newton"] = time.perf_counter() - t0
        phi, zeta = fields.phi_t, fields.zeta
    fields = problem.fieldset(phi, zeta)
    timings["total"] = time.perf_counter() - t_start
    return Solution(problem, fields, trace, timings)
