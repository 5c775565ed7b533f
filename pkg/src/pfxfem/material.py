"""Hybrid phase-field constitutive law in plane strain.

Strains are handled either as symmetric 2x2 tensors (scalar API) or in
engineering Voigt form ``(e_xx, e_yy, gamma_xy)`` with ``gamma_xy = 2 e_xy``
(vectorized API used by the assemblers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic material with phase-field parameters.

    Units follow the scenarios: E in kN/mm^2, Gc in kN/mm, l in mm.
    """

    E: float
    nu: float
    Gc: float
    l: float

    def __post_init__(self):
        for name in ("E", "nu", "Gc", "l"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.E <= 0:
            raise ValueError("E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("nu must satisfy 0 <= nu < 0.5")
        if self.Gc <= 0:
            raise ValueError("Gc must be positive")
        if self.l <= 0:
            raise ValueError("l must be positive")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    @property
    def D(self) -> np.ndarray:
        """Plane-strain elasticity matrix acting on engineering Voigt strain."""
        lam, mu = self.lam, self.mu
        return np.array(
            [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
        )


@dataclass(frozen=True)
class SplitEnergy:
    psi_plus: float
    psi_minus: float


def macaulay(x):
    """Return ``(<x>+, <x>-)`` with ``<x>+ = max(x, 0)`` and ``<x>- = min(x, 0)``."""
    return np.maximum(x, 0.0), np.minimum(x, 0.0)


def _eig_sym2(a, b, c):
    """Eigenvalues of [[a, c], [c, b]] in closed form (vectorized)."""
    mean = 0.5 * (a + b)
    rad = np.sqrt((0.5 * (a - b)) ** 2 + c * c)
    return mean + rad, mean - rad


def split_energy_voigt(eps: np.ndarray, mat: Material) -> tuple[np.ndarray, np.ndarray]:
    """Tensile and compressive energy densities for Voigt strains ``(..., 3)``."""
    eps = np.asarray(eps, dtype=float)
    exx, eyy, exy = eps[..., 0], eps[..., 1], 0.5 * eps[..., 2]
    e1, e2 = _eig_sym2(exx, eyy, exy)
    tr = exx + eyy
    trp, trm = macaulay(tr)
    e1p, e1m = macaulay(e1)
    e2p, e2m = macaulay(e2)
    psi_p = 0.5 * mat.lam * trp**2 + mat.mu * (e1p**2 + e2p**2)
    psi_m = 0.5 * mat.lam * trm**2 + mat.mu * (e1m**2 + e2m**2)
    return psi_p, psi_m


def spectral_split(strain, mat: Material) -> SplitEnergy:
    """Spectral tension/compression split of a symmetric 2x2 strain tensor."""
    s = np.asarray(strain, dtype=float)
    if s.shape != (2, 2):
        raise ValueError("strain must be a 2x2 tensor")
    scale = max(1.0, float(np.max(np.abs(s))))
    if abs(s[0, 1] - s[1, 0]) > 1e-12 * scale:
        raise ValueError("strain tensor must be symmetric")
    pp, pm = split_energy_voigt(np.array([s[0, 0], s[1, 1], 2 * s[0, 1]]), mat)
    return SplitEnergy(float(pp), float(pm))


def degradation_voigt(d, psi_plus, psi_minus):
    """Hybrid degradation, vectorized; ``d`` is clamped to [0, 1]."""
    dc = np.clip(d, 0.0, 1.0)
    return np.where(psi_plus >= psi_minus, (1.0 - dc) ** 2, 1.0)


def degradation(d: float, se: SplitEnergy) -> float:
    """``(1-d)^2`` when tension dominates, ``1`` otherwise."""
    return float(degradation_voigt(d, se.psi_plus, se.psi_minus))


def stress(strain, d: float, se: SplitEnergy, mat: Material) -> np.ndarray:
    """Degraded isotropic stress ``g(d) (lam tr(e) I + 2 mu e)`` as a 2x2 tensor."""
    s = np.asarray(strain, dtype=float)
    g = degradation(d, se)
    return g * (mat.lam * np.trace(s) * np.eye(2) + 2 * mat.mu * s)


def update_history(H_prev, psi_plus):
    """Running maximum of the tensile energy density."""
    return np.maximum(H_prev, psi_plus)
