"""Compare the compiled core with the pure-Python fallback.

Kernel timings call both backends directly on identical inputs; the
end-to-end row runs a Born NSMPB solve in a subprocess per backend, since the
backend is fixed at import time.

    python3 benchmarks/bench_core.py [--divisions 12] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np
import scipy.sparse as sp

from nsmpb import _fallback
from nsmpb.fem import P1Space, assemble_mass, assemble_stiffness
from nsmpb.linalg import _diag_positions, as_csr
from nsmpb.mesh import gen_born_mesh

try:
    from nsmpb import _core
except ImportError:
    _core = None

E2E = """
import json, time
from nsmpb import backend_name
from nsmpb.mesh import gen_born_mesh
from nsmpb.model import build_solvent_model
from nsmpb.pqr import Molecule
from nsmpb.solver import solve
m = gen_born_mesh(20, 5, {n})
t = time.perf_counter()
sol = solve("nsmpb", m, Molecule.single_ion(1.0), build_solvent_model())
print(json.dumps({{"backend": backend_name, "seconds": time.perf_counter() - t,
                  "iterations": sol.trace.iterations}}))
"""


def kernel_cases(n):
    rng = np.random.default_rng(0)
    mesh = gen_born_mesh(20, 5, n)
    space = P1Space(mesh)
    pts = np.ascontiguousarray(space.qpoints.reshape(-1, 3))
    centers = rng.uniform(-4, 4, (50, 3))
    charges = rng.uniform(-1, 1, 50)
    base = rng.uniform(-30, 30, len(pts))
    z = np.array([-1.0, -1.0, 1.0, 1.0])
    c = np.full(4, 0.1)
    A = as_csr(assemble_stiffness(space) + assemble_mass(space))
    indptr, indices = A.indptr.astype(np.intc), A.indices.astype(np.intc)
    diag = _diag_positions(A)
    factored = A.data.copy()
    _fallback.ilu0_inplace(indptr, indices, factored, diag)
    b = rng.standard_normal(A.shape[0])
    return {
        "sum_inverse (50 atoms)": lambda m: m.sum_inverse(pts, centers, charges, 1e-10),
        "grad_sum_screened (50 atoms)": lambda m: m.grad_sum_screened(pts, centers, charges, 15.0),
        "boltzmann_terms": lambda m: m.boltzmann_terms(base, z, c, 0.0425, 40.0),
        "ilu0": lambda m: m.ilu0_inplace(indptr, indices, A.data.copy(), diag),
        "lu_solve": lambda m: m.lu_solve(indptr, indices, factored, diag, b),
    }, len(pts), A.shape[0]


def end_to_end(n, backend):
    env = dict(os.environ, NSMPB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", E2E.format(n=n)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--divisions", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return 1
    cases, n_pts, n_dofs = kernel_cases(args.divisions)
    print(f"Born mesh n={args.divisions}: {n_pts} quadrature points, {n_dofs} dofs")
    print(f"{'kernel':32}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for name, fn in cases.items():
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        print(f"{name:32}{tc:14.4f}{tp:14.4f}{tp / tc:10.1f}")
    rc = end_to_end(args.divisions, "compiled")
    rp = end_to_end(args.divisions, "python")
    print(f"{'NSMPB solve (end to end)':32}{rc['seconds']:14.4f}{rp['seconds']:14.4f}"
          f"{rp['seconds'] / rc['seconds']:10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
