"""Uniform 1D meshes and continuous P1 finite elements.

Degrees of freedom are the interior nodes only; every discrete function is
extended by zero at the two boundary nodes and outside the interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh1D",
    "FeFunction",
    "mass_matrix",
    "stiffness_matrix",
    "lumped_mass",
    "load_vector",
    "lp_integral",
    "l2_inner",
]

GAUSS_ORDER = 6


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    n_elems: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_elems) != self.n_elems or self.n_elems < 1:
            raise ValueError(f"n_elems must be a positive integer, got {self.n_elems!r}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        object.__setattr__(self, "n_elems", int(self.n_elems))
        nodes = self.a + (self.b - self.a) * np.arange(self.n_elems + 1) / self.n_elems
        nodes[-1] = self.b
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_elems

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def interior_dof_count(self) -> int:
        return self.n_elems - 1

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]

    def nodes_in(self, intervals) -> np.ndarray:
        """Boolean mask of interior nodes lying in a union of half-open ``[l, r)``."""
        x = self.interior_nodes
        mask = np.zeros(x.shape, dtype=bool)
        for lo, hi in intervals:
            mask |= (x >= lo) & (x < hi)
        return mask

    def function(self, values) -> "FeFunction":
        return FeFunction(self, values)

    def interpolate(self, func) -> "FeFunction":
        """Nodal interpolant on the interior nodes (boundary values dropped)."""
        return FeFunction(self, np.broadcast_to(func(self.interior_nodes), (self.interior_dof_count,)))

    def check_same(self, other: "Mesh1D") -> None:
        if other is not self and other != self:
            raise MeshMismatchError(f"mesh mismatch: {self} vs {other}")


@dataclass(frozen=True)
class FeFunction:
    """P1 function given by its interior nodal values."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.interior_dof_count,):
            raise ValueError(
                f"expected {self.mesh.interior_dof_count} interior values, got shape {v.shape}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def full_values(self) -> np.ndarray:
        return np.concatenate(([0.0], self.values, [0.0]))

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.full_values(), left=0.0, right=0.0)

    def __add__(self, other: "FeFunction") -> "FeFunction":
        self.mesh.check_same(other.mesh)
        return FeFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        self.mesh.check_same(other.mesh)
        return FeFunction(self.mesh, self.values - other.values)

    def __mul__(self, c: float) -> "FeFunction":
        return FeFunction(self.mesh, c * self.values)

    __rmul__ = __mul__


def _full_mass(mesh: Mesh1D) -> sp.csr_matrix:
    n, h = mesh.n_elems, mesh.h
    diag = np.full(n + 1, 2 * h / 3)
    diag[[0, -1]] = h / 3
    off = np.full(n, h / 6)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def mass_matrix(mesh: Mesh1D) -> np.ndarray:
    """Exact P1 mass matrix on the interior degrees of freedom (dense)."""
    n, h = mesh.interior_dof_count, mesh.h
    return (
        np.diag(np.full(n, 2 * h / 3))
        + np.diag(np.full(n - 1, h / 6), 1)
        + np.diag(np.full(n - 1, h / 6), -1)
    )


def stiffness_matrix(mesh: Mesh1D) -> np.ndarray:
    """P1 Dirichlet Laplacian stiffness matrix on the interior degrees of freedom."""
    n, h = mesh.interior_dof_count, mesh.h
    return (
        np.diag(np.full(n, 2 / h))
        - np.diag(np.full(n - 1, 1 / h), 1)
        - np.diag(np.full(n - 1, 1 / h), -1)
    )


def lumped_mass(mesh: Mesh1D) -> np.ndarray:
    """Integrals of the interior hat functions, i.e. the pairing of each hat with 1 on the interval."""
    return np.full(mesh.interior_dof_count, mesh.h)


def load_vector(mesh: Mesh1D, f) -> np.ndarray:
    """Dual vector ``(<f, phi_i>)_i``.

    ``f`` may be a callable (its P1 interpolant over *all* nodes is integrated,
    so nonzero boundary values are kept), an :class:`FeFunction`, or an array
    that is already a dual vector.
    """
    if isinstance(f, FeFunction):
        mesh.check_same(f.mesh)
        return mass_matrix(mesh) @ f.values
    if callable(f):
        full = np.broadcast_to(np.asarray(f(mesh.nodes), dtype=float), mesh.nodes.shape)
        return (_full_mass(mesh) @ full)[1:-1]
    vec = np.asarray(f, dtype=float)
    if vec.shape != (mesh.interior_dof_count,):
        raise ValueError(f"dual vector has shape {vec.shape}, expected ({mesh.interior_dof_count},)")
    return vec


def l2_inner(u: FeFunction, w: FeFunction) -> float:
    u.mesh.check_same(w.mesh)
    return float(u.values @ mass_matrix(u.mesh) @ w.values)


def _element_endpoints(w: FeFunction):
    full = w.full_values()
    return full[:-1], full[1:]


def lp_integral(w: FeFunction, p: float, zero_threshold: float = 0.0, order: int = GAUSS_ORDER) -> float:
    """Integral of ``|w|^p`` for the piecewise linear ``w``, ``0 <= p < 1``.

    For ``p > 0`` elements are split at sign changes and each piece is
    integrated in closed form; nearly constant pieces, where the closed form
    cancels, use Gauss-Legendre of the given order.  For ``p = 0`` (with
    ``0^0 = 0``) the measure of ``{|w| > zero_threshold}`` is exact as well.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    h = w.mesh.h
    left, right = _element_endpoints(w)
    if p > 0.0:
        a, b = np.abs(left), np.abs(right)
        cross = left * right < 0
        frac = np.where(cross, a / np.where(cross, a + b, 1.0), 1.0)
        # crossing elements: a -> 0 on a fraction frac, 0 -> b on the rest
        whole = _mean_power(a, b, p, order)
        split = frac * _mean_power(a, 0.0 * a, p, order) + (1.0 - frac) * _mean_power(0.0 * b, b, p, order)
        return float(h * np.sum(np.where(cross, split, whole)))
    return float(h * np.sum(_fraction_above(left, right, zero_threshold)))


def _mean_power(v0, v1, p, order):
    """Mean of ``(v0 + (v1 - v0) t)^p`` over ``t in [0, 1]`` for ``v0, v1 >= 0``."""
    top = np.maximum(v0, v1)
    close = np.abs(v1 - v0) <= 1e-2 * top
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (v1 ** (p + 1) - v0 ** (p + 1)) / ((p + 1) * (v1 - v0))
    xi, wt = np.polynomial.legendre.leggauss(order)
    xi = 0.5 * (xi + 1.0)
    vals = v0[:, None] * (1.0 - xi) + v1[:, None] * xi
    gauss = 0.5 * np.sum(vals**p * wt, axis=1)
    return np.where(close, gauss, exact)


def _fraction_above(u0, u1, c):
    """Fraction of [0, 1] on which ``|u0 + (u1 - u0) t| > c``."""
    return _fraction_gt(u0, u1, c) + _fraction_gt(-u0, -u1, c)


def _fraction_gt(u0, u1, c):
    # measure of {t in [0,1]: u0 + (u1-u0) t > c}
    d = u1 - u0
    out = np.where((u0 > c) & (u1 > c), 1.0, 0.0)
    mixed = (u0 > c) != (u1 > c)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(mixed, (c - u0) / np.where(d == 0, 1.0, d), 0.0)
    out = np.where(mixed & (d > 0), 1.0 - t, out)
    out = np.where(mixed & (d < 0), t, out)
    return out
