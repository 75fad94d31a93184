"""Molecule representation and PQR reading/writing."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np


class PQRError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    position: tuple
    charge: float
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("atom radius must be non-negative")
        if not all(np.isfinite(self.position)):
            raise ValueError("atom position must be finite")


class Molecule:
    """Fixed point charges of the solute.

    Positions are stored as an ``(n_p, 3)`` array, charge numbers and radii
    as length ``n_p`` arrays.
    """

    def __init__(self, atoms: Iterable[Atom]):
        atoms = list(atoms)
        if not atoms:
            raise PQRError("molecule has no atoms")
        self.atoms = tuple(atoms)
        self.positions = np.array([a.position for a in atoms], dtype=float).reshape(-1, 3)
        self.charges = np.array([a.charge for a in atoms], dtype=float)
        self.radii = np.array([a.radius for a in atoms], dtype=float)
        if len(np.unique(self.positions, axis=0)) != len(atoms):
            raise PQRError("two atoms share the same position")
        for arr in (self.positions, self.charges, self.radii):
            arr.setflags(write=False)

    @property
    def n_p(self) -> int:
        return len(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def scaled(self, factor: float) -> "Molecule":
        return Molecule(Atom(a.position, a.charge * factor, a.radius) for a in self.atoms)

    @classmethod
    def single_ion(cls, charge: float = 1.0, radius: float = 0.0, position=(0.0, 0.0, 0.0)):
        return cls([Atom(tuple(float(x) for x in position), float(charge), float(radius))])


def parse_pqr(text: str) -> Molecule:
    """Read ATOM/HETATM records from PQR text.

    Fields are whitespace separated; the last five are x, y, z, charge
    and radius, so an optional chain identifier is tolerated.
    """
    atoms = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0] not in ("ATOM", "HETATM"):
            continue
        if len(fields) < 10:
            raise PQRError(f"line {lineno}: expected at least 10 fields, got {len(fields)}")
        try:
            x, y, z, q, r = (float(f) for f in fields[-5:])
        except ValueError as exc:
            raise PQRError(f"line {lineno}: {exc}: {line.strip()!r}") from None
        atoms.append(Atom((x, y, z), q, r))
    if not atoms:
        raise PQRError("no ATOM/HETATM records found")
    return Molecule(atoms)


def read_pqr(path: Union[str, Path]) -> Molecule:
    return parse_pqr(Path(path).read_text())


def serialize_pqr(molecule: Molecule) -> str:
    lines = []
    for i, a in enumerate(molecule.atoms, start=1):
        x, y, z = a.position
        lines.append(
            f"ATOM {i} X UNK 1 {x!r} {y!r} {z!r} {a.charge!r} {a.radius!r}"
        )
    return "\n".join(lines) + "\n"
