"""Closed-form singular potential G, its Yukawa convolution and gradients.

All functions take an ``(m, 3)`` array of points and return ``(m,)`` or
``(m, 3)`` arrays. The atom sum is a direct O(n_atoms * m) loop run by the
compiled backend when available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import impl
from .pqr import Molecule


class SingularityError(ValueError):
    """A point coincides (within delta) with an atom center."""

    def __init__(self, point, atom):
        super().__init__(f"point {point} lies within the singular guard of atom {atom}")
        self.point = point
        self.atom = atom


@dataclass(frozen=True)
class KernelContext:
    molecule: Molecule
    alpha: float
    eps_p: float
    lam: float
    delta: float = 1e-10

    def __post_init__(self):
        if not (self.lam > 0 and self.eps_p > 0 and self.delta > 0):
            raise ValueError("lambda, eps_p and delta must be positive")

    @property
    def prefactor(self) -> float:
        return self.alpha / (4.0 * math.pi * self.eps_p)

    def _args(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        return pts, np.ascontiguousarray(self.molecule.positions), np.ascontiguousarray(
            self.molecule.charges
        )


def _checked(result):
    values, i, j = result
    if i >= 0:
        raise SingularityError(i, j)
    return values


def eval_G(ctx: KernelContext, points) -> np.ndarray:
    pts, centers, z = ctx._args(points)
    return ctx.prefactor * _checked(impl.sum_inverse(pts, centers, z, ctx.delta))


def eval_gradG(ctx: KernelContext, points) -> np.ndarray:
    pts, centers, z = ctx._args(points)
    return ctx.prefactor * _checked(impl.grad_sum_inverse(pts, centers, z, ctx.delta))


def eval_Ghat(ctx: KernelContext, points) -> np.ndarray:
    """G convolved with the Yukawa kernel; finite at atom centers."""
    pts, centers, z = ctx._args(points)
    return ctx.prefactor * impl.sum_screened(pts, centers, z, ctx.lam)


def eval_gradGhat(ctx: KernelContext, points) -> np.ndarray:
    """Gradient of ``eval_Ghat``.

    The potential has a cusp at each atom center, so the gradient is
    direction dependent there; exactly at a center the atom contributes the
    zero vector.
    """
    pts, centers, z = ctx._args(points)
    return ctx.prefactor * impl.grad_sum_screened(pts, centers, z, ctx.lam)


def eval_g_gamma(ctx: KernelContext, eps_s: float, eps_inf: float, surface_points, normals):
    """Interface flux datum (eps_s - eps_inf) dGhat/dn + (eps_inf - eps_p) dG/dn."""
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    dG = np.einsum("ij,ij->i", eval_gradG(ctx, surface_points), normals)
    if eps_s == eps_inf:
        return (eps_inf - ctx.eps_p) * dG
    dGhat = np.einsum("ij,ij->i", eval_gradGhat(ctx, surface_points), normals)
    return (eps_s - eps_inf) * dGhat + (eps_inf - ctx.eps_p) * dG
