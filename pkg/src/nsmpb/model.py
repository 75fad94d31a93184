"""Physical constants, ion species and the solvent model.

Lengths are in angstroms, concentrations in mol/L, potentials in units of
k_B T / e_c.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

# SI values used for the default constants (T = 298.15 K)
BOLTZMANN = 1.380648813e-23
AVOGADRO = 6.02214129e23
ELEM_CHARGE = 1.602176565e-19
VACUUM_PERMITTIVITY = 8.854187817e-12
DEFAULT_TEMPERATURE = 298.15


class ElectroneutralityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhysicalConstants:
    """Scaling constants of the dimensionless model.

    ``alpha`` scales atomic charges, ``beta`` ionic charge densities and
    ``gamma`` converts mol/L into 1/A^3.
    """

    alpha: float = 7042.93990033
    beta: float = 4.24135792
    gamma: float = 6.02214129e-4
    temperature: float = DEFAULT_TEMPERATURE
    boltzmann: float = BOLTZMANN
    avogadro: float = AVOGADRO
    elem_charge: float = ELEM_CHARGE
    vacuum_permittivity: float = VACUUM_PERMITTIVITY

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ValueError("alpha, beta and gamma must be positive")


def derive_constants(temperature: float = DEFAULT_TEMPERATURE) -> PhysicalConstants:
    """Recompute alpha, beta and gamma from the SI constants at ``temperature``."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    denom = VACUUM_PERMITTIVITY * BOLTZMANN * temperature
    alpha = 1e10 * ELEM_CHARGE**2 / denom
    beta = AVOGADRO * ELEM_CHARGE**2 / (1e17 * denom)
    gamma = 1e-27 * AVOGADRO
    return PhysicalConstants(alpha=alpha, beta=beta, gamma=gamma, temperature=temperature)


@dataclass(frozen=True)
class IonSpecies:
    charge_number: int
    bulk_concentration: float
    radius: float

    def __post_init__(self):
        if self.bulk_concentration < 0:
            raise ValueError("bulk concentration must be non-negative")
        # radius 0 is allowed: it encodes a point ion (no size effect)
        if self.radius < 0:
            raise ValueError("ion radius must be non-negative")

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3


# Ion mixture used in the protein experiments: 0.1 M KNO3 + 0.1 M NaCl,
# ordered Cl-, NO3-, K+, Na+.
DEFAULT_SPECIES = (
    IonSpecies(-1, 0.1, 3.32),
    IonSpecies(-1, 0.1, 3.35),
    IonSpecies(1, 0.1, 3.58),
    IonSpecies(1, 0.1, 3.31),
)


@dataclass(frozen=True)
class SolventModel:
    species: tuple
    eps_p: float
    eps_s: float
    eps_inf: float
    lam: float
    v_bar: float
    v0: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def charges(self) -> tuple:
        return tuple(float(s.charge_number) for s in self.species)

    @property
    def bulk(self) -> tuple:
        return tuple(float(s.bulk_concentration) for s in self.species)

    @property
    def size_factor(self) -> float:
        """gamma * v_bar**2 / v0; zero for point ions."""
        if self.v_bar == 0.0:
            return 0.0
        return self.constants.gamma * self.v_bar**2 / self.v0

    @property
    def ionic_strength(self) -> float:
        return 0.5 * sum(z * z * c for z, c in zip(self.charges, self.bulk))

    @property
    def kappa_sq(self) -> float:
        return 2.0 * self.constants.beta * self.ionic_strength

    @property
    def upsilon(self) -> float:
        return self.kappa_sq / (1.0 + self.size_factor * sum(self.bulk))

    @property
    def is_neutral(self) -> bool:
        total = sum(z * c for z, c in zip(self.charges, self.bulk))
        return abs(total) <= 1e-12 * max(1.0, sum(self.bulk))

    def local(self) -> "SolventModel":
        """The size-modified local reduction (eps_inf = eps_s)."""
        return replace(self, eps_inf=self.eps_s)

    def pointlike(self) -> "SolventModel":
        """The nonlocal modified reduction (all ion volumes zero)."""
        return replace(self, v_bar=0.0, v0=0.0)

    def scaled_concentrations(self, factor: float) -> "SolventModel":
        species = tuple(
            IonSpecies(s.charge_number, s.bulk_concentration * factor, s.radius)
            for s in self.species
        )
        return replace(self, species=species)


def build_solvent_model(
    species: Sequence[IonSpecies] = DEFAULT_SPECIES,
    eps_p: float = 2.0,
    eps_s: float = 80.0,
    eps_inf: float = 1.8,
    lam: float = 15.0,
    v0_override: Optional[float] = None,
    constants: Optional[PhysicalConstants] = None,
    allow_local: bool = True,
) -> SolventModel:
    """Collect the solution-side constants.

    ``eps_inf == eps_s`` is accepted (the local reduction) unless
    ``allow_local`` is false.
    """
    species = tuple(species)
    if not species:
        raise ValueError("species list is empty")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not eps_p > 0:
        raise ValueError(f"eps_p must be positive, got {eps_p}")
    if not 0 < eps_inf:
        raise ValueError(f"eps_inf must be positive, got {eps_inf}")
    if eps_inf > eps_s or (eps_inf == eps_s and not allow_local):
        raise ValueError(f"eps_inf < eps_s violated: eps_inf={eps_inf}, eps_s={eps_s}")
    volumes = [s.volume for s in species]
    v_bar = sum(volumes) / len(volumes)
    v0 = min(volumes) if v0_override is None else float(v0_override)
    if v_bar > 0 and not v0 > 0:
        raise ValueError("v0 must be positive when ions have finite size")
    model = SolventModel(
        species=species,
        eps_p=float(eps_p),
        eps_s=float(eps_s),
        eps_inf=float(eps_inf),
        lam=float(lam),
        v_bar=v_bar,
        v0=v0,
        constants=constants or PhysicalConstants(),
    )
    if not model.is_neutral:
        warnings.warn(
            "bulk concentrations are not electro-neutral; the linearized model assumes neutrality",
            ElectroneutralityWarning,
            stacklevel=2,
        )
    return model
