"""Isotropic St. Venant-Kirchhoff material."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["lame_params", "Material"]


def lame_params(young: float, poisson: float) -> tuple[float, float]:
    """First and second Lame constants from engineering constants.

    lambda = E nu / ((1 + nu)(1 - 2 nu)),  mu = E / (2 (1 + nu)).
    Units follow ``young`` (Pa in, Pa out).
    """
    if not -1.0 < poisson < 0.5:
        raise ValueError("Poisson ratio must lie in (-1, 0.5)")
    if young <= 0.0:
        raise ValueError("Young's modulus must be positive")
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


@dataclass(frozen=True)
class Material:
    """Elastic constants. ``young_modulus`` in Pa.

    ``lame_mm`` converts to N/mm^2 for use with mm geometry, so that
    energies come out in N*mm and nodal forces in N.
    """

    young_modulus: float = 3000.0
    poisson_ratio: float = 0.45

    @property
    def lame(self) -> tuple[float, float]:
        return lame_params(self.young_modulus, self.poisson_ratio)

    @property
    def lame_mm(self) -> tuple[float, float]:
        lam, mu = self.lame
        return lam * 1e-6, mu * 1e-6
