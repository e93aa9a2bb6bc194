"""C1 smoothings of the L^p pseudo-norm integrand, applied to ``t = w**2``.

``PowerP`` (``0 < p < 1``) replaces ``t**(p/2)`` below ``t = eps**2`` by its
tangent line; ``ZeroNorm`` (``p = 0``) uses ``t / (t + eps)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import FeFunction, lumped_mass

__all__ = ["Variant", "SmoothingFamily", "psi", "psi_prime", "g_eps"]


class Variant(str, enum.Enum):
    POWER_P = "power_p"
    ZERO_NORM = "zero_norm"


@dataclass(frozen=True)
class SmoothingFamily:
    p: float
    variant: Variant = None

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")
        expected = Variant.ZERO_NORM if self.p == 0.0 else Variant.POWER_P
        if self.variant is None:
            object.__setattr__(self, "variant", expected)
        elif Variant(self.variant) is not expected:
            raise ValueError(f"variant {self.variant} does not match p = {self.p}")
        else:
            object.__setattr__(self, "variant", Variant(self.variant))

    @classmethod
    def for_p(cls, p: float) -> "SmoothingFamily":
        return cls(float(p))


def _check(t, eps):
    t = np.asarray(t, dtype=float)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if np.any(t < 0):
        raise ValueError("psi is defined for t >= 0 only")
    return t


def psi(family: SmoothingFamily, t, eps: float):
    t = _check(t, eps)
    if family.variant is Variant.ZERO_NORM:
        return t / (t + eps)
    p = family.p
    below = 0.5 * p * t / eps ** (2.0 - p) + (1.0 - 0.5 * p) * eps**p
    return np.where(t < eps * eps, below, np.maximum(t, eps * eps) ** (0.5 * p))


def psi_prime(family: SmoothingFamily, t, eps: float):
    t = _check(t, eps)
    if family.variant is Variant.ZERO_NORM:
        return eps / (t + eps) ** 2
    p = family.p
    # min(eps^(p-2), t^((p-2)/2)) == (max(t, eps^2))^((p-2)/2), finite at t = 0
    return 0.5 * p * np.maximum(t, eps * eps) ** (0.5 * (p - 2.0))


def g_eps(family: SmoothingFamily, w: FeFunction, eps: float, lumped=None, quadrature: str = "lumped",
          order: int = 6) -> float:
    """Smoothed penalty ``int psi(w^2)``.

    ``quadrature="lumped"`` is the nodal rule used inside the solver;
    ``"gauss"`` integrates the piecewise linear ``w`` elementwise and is meant
    for reporting.
    """
    if quadrature == "lumped":
        m = lumped_mass(w.mesh) if lumped is None else np.asarray(lumped)
        return float(np.sum(m * psi(family, w.values**2, eps)))
    if quadrature != "gauss":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    full = w.full_values()
    xi, wt = np.polynomial.legendre.leggauss(order)
    xi = 0.5 * (xi + 1.0)
    vals = full[:-1, None] * (1.0 - xi) + full[1:, None] * xi
    return float(0.5 * w.mesh.h * np.sum(psi(family, vals**2, eps) * wt))
