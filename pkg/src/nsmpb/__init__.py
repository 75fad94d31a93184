"""Finite element solver for the nonlocal size-modified Poisson-Boltzmann model.

``NSMPB_NUM_THREADS`` caps the BLAS/OpenMP thread pools when set before import.
"""
import os

_threads = os.environ.get("NSMPB_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .backend import NAME as backend_name  # noqa: E402
from .kernels import KernelContext, eval_G, eval_gradG, eval_Ghat, eval_gradGhat, eval_g_gamma  # noqa: E402
from .mesh import RegionLabel, TetMesh, gen_born_mesh, load_tetgen, read_tetgen, validate  # noqa: E402
from .model import (  # noqa: E402
    DEFAULT_SPECIES,
    IonSpecies,
    PhysicalConstants,
    SolventModel,
    build_solvent_model,
    derive_constants,
)
from .pqr import Atom, Molecule, parse_pqr, read_pqr  # noqa: E402
from .solver import LinearConfig, ModelKind, NewtonConfig, Problem, solve  # noqa: E402
