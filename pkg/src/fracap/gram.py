"""Gram matrices of the fractional Sobolev inner products on P1 elements.

Three inner products are available on the interior degrees of freedom:

``INTEGRAL_TILDE``
    the full-line Gagliardo form of the zero extension, plus the L2 product;
``INTEGRAL_OMEGA``
    the Gagliardo form restricted to the interval, plus the L2 product;
``SPECTRAL``
    the fractional power of the discrete Dirichlet Laplacian.

The integral kinds are assembled element pair by element pair.  On a uniform
mesh the pair integrals depend only on the offset between the two elements,
so one local matrix per offset is computed and scattered along diagonals.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .mesh import FeFunction, Mesh1D, mass_matrix, stiffness_matrix

__all__ = [
    "SpaceKind",
    "GramOperator",
    "c_ds",
    "assemble",
    "assemble_integral_tilde",
    "assemble_integral_omega",
    "assemble_spectral",
    "seminorm_oracle",
    "gram_inner",
    "offered_kinds",
    "write_dense",
]

# Gauss order on well-separated element pairs and on the 1D angular integrals
# left after the Duffy transform.  Order 12 keeps the nearest disjoint pair
# (offset 2) at ~1e-14 relative.
PANEL_ORDER = 12


class SpaceKind(str, enum.Enum):
    INTEGRAL_TILDE = "integral_tilde"
    INTEGRAL_OMEGA = "integral_omega"
    SPECTRAL = "spectral"

    @classmethod
    def parse(cls, value) -> "SpaceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"tilde": "integral_tilde", "omega": "integral_omega", "spec": "spectral"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown space kind {value!r}") from None

    @property
    def is_integral(self) -> bool:
        return self is not SpaceKind.SPECTRAL


class QuadratureError(RuntimeError):
    pass


def offered_kinds(s: float) -> tuple:
    """Space kinds that give an equivalent norm on the zero-trace space for this ``s``."""
    if s == 0.5:
        return ()
    if s < 0.5:
        return (SpaceKind.INTEGRAL_TILDE, SpaceKind.INTEGRAL_OMEGA, SpaceKind.SPECTRAL)
    return (SpaceKind.INTEGRAL_TILDE, SpaceKind.SPECTRAL)


def c_ds(d: int, s: float) -> float:
    """Normalisation constant of the fractional Laplacian kernel in ``d`` dimensions."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    return s * 4.0**s * math.gamma(s + d / 2) / (math.pi ** (d / 2) * math.gamma(1.0 - s))


@dataclass(frozen=True, eq=False)
class GramOperator:
    kind: SpaceKind
    s: float
    mesh: Mesh1D
    matrix: np.ndarray
    c_ds: float | None = None

    def __post_init__(self):
        self.matrix.flags.writeable = False

    def energy(self, w) -> float:
        v = w.values if isinstance(w, FeFunction) else np.asarray(w)
        return float(v @ self.matrix @ v)

    def cholesky(self):
        return scipy.linalg.cho_factor(self.matrix)


def _check_integral_s(s: float) -> None:
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if s == 0.5:
        raise ValueError("s = 1/2 is not supported (the zero-trace space differs there)")


# -- element pair integrals ---------------------------------------------------

def _pair_identical(s: float) -> np.ndarray:
    # u(x) - u(y) = (u1 - u0)(xi - eta); the Duffy radial integral is exact:
    # int int |xi - eta|^(1-2s) = 2 / ((2-2s)(3-2s))
    val = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    return val * np.array([[1.0, -1.0], [-1.0, 1.0]])


def _pair_adjacent(s: float, order: int = PANEL_ORDER) -> np.ndarray:
    # Local dofs (u0, u1, u2); shared node u1.  With distances a, b from the
    # shared node, u(x)-u(y) = d1 a - d2 b, d1 = u0-u1, d2 = u2-u1, |x-y| = a+b.
    # Duffy split b = a t (and a = b t): radial part int_0^1 r^(2-2s) dr = 1/(3-2s),
    # angular part int_0^1 t^k (1+t)^(-1-2s) dt by Gauss.
    t, wt = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    ker = (1.0 + t) ** (-1.0 - 2.0 * s)
    j0, j1, j2 = (np.sum(wt * t**k * ker) for k in range(3))
    q = np.array([[j0 + j2, -2.0 * j1], [-2.0 * j1, j0 + j2]]) / (3.0 - 2.0 * s)
    tmat = np.array([[1.0, -1.0, 0.0], [0.0, -1.0, 1.0]])
    return tmat.T @ q @ tmat


def _pairs_separated(s: float, offsets: np.ndarray, order: int = PANEL_ORDER) -> np.ndarray:
    """Local 4x4 matrices for element pairs at offsets >= 2, dofs (k, k+1, k+m, k+m+1)."""
    g, wt = np.polynomial.legendre.leggauss(order)
    g = 0.5 * (g + 1.0)
    wt = 0.5 * wt
    xi, eta = np.meshgrid(g, g, indexing="ij")
    w2 = np.outer(wt, wt)
    basis = np.stack([1.0 - xi, xi, -(1.0 - eta), -eta])  # (4, q, q)
    dist = offsets[:, None, None] + eta[None] - xi[None]
    ker = np.abs(dist) ** (-1.0 - 2.0 * s) * w2[None]
    return np.einsum("aij,bij,mij->mab", basis, basis, ker)


def _scatter(full: np.ndarray, local: np.ndarray, dof_offsets, count: int, scale: float) -> None:
    n_full = full.shape[0]
    flat = full.reshape(-1)
    stride = n_full + 1
    for ia, oa in enumerate(dof_offsets):
        for ib, ob in enumerate(dof_offsets):
            start = oa * n_full + ob
            flat[start:start + count * stride:stride] += scale * local[ia, ib]


def _interval_seminorm(mesh: Mesh1D, s: float) -> np.ndarray:
    """Matrix of int_O int_O (u(x)-u(y))(v(x)-v(y)) |x-y|^(-1-2s) over all nodes."""
    n = mesh.n_elems
    full = np.zeros((n + 1, n + 1))
    _scatter(full, _pair_identical(s), (0, 1), n, 1.0)
    if n >= 2:
        _scatter(full, _pair_adjacent(s), (0, 1, 2), n - 1, 2.0)
    if n >= 3:
        offsets = np.arange(2, n)
        locals_ = _pairs_separated(s, offsets.astype(float))
        for m, loc in zip(offsets, locals_):
            _scatter(full, loc, (0, 1, m, m + 1), n - m, 2.0)
    return full * mesh.h ** (1.0 - 2.0 * s)


def _exterior_weighted_mass(mesh: Mesh1D, s: float, order: int = PANEL_ORDER) -> np.ndarray:
    """Interior matrix of int_O phi_i phi_j rho, rho(x) = [(x-a)^(-2s) + (b-x)^(-2s)] / (2s).

    rho(x) is the integral of |x-y|^(-1-2s) over y outside the interval.
    """
    n, h = mesh.n_elems, mesh.h
    g, wt = np.polynomial.legendre.leggauss(order)
    g = 0.5 * (g + 1.0)
    wt = 0.5 * wt
    # moments int_0^1 xi^j (k + xi)^(-2s) dxi for elements k = 0..n-1
    mom = np.empty((n, 3))
    mom[0] = [np.nan, np.nan, 1.0 / (3.0 - 2.0 * s)]  # only xi^2 pairs with an interior hat
    if n > 1:
        k = np.arange(1, n)[:, None]
        base = (k + g[None]) ** (-2.0 * s) * wt[None]
        mom[1:] = np.stack([np.sum(base * g**j, axis=1) for j in range(3)], axis=1)
    # element-local mass against (x-a)^(-2s): N0 = 1-xi, N1 = xi
    m00 = mom[:, 0] - 2 * mom[:, 1] + mom[:, 2]
    m01 = mom[:, 1] - mom[:, 2]
    m11 = mom[:, 2]
    scale = h ** (1.0 - 2.0 * s)
    left = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    left[idx[1:], idx[1:]] += m00[1:]
    left[idx + 1, idx + 1] += m11
    left[idx[1:], idx[1:] + 1] += m01[1:]
    left[idx[1:] + 1, idx[1:]] += m01[1:]
    left = left[1:-1, 1:-1] * scale
    # the right endpoint term is the mirror image on a uniform mesh
    both = left + left[::-1, ::-1]
    return both / (2.0 * s)


def _integral_gram(mesh: Mesh1D, s: float, exterior: bool) -> tuple:
    _check_integral_s(s)
    c = c_ds(1, s)
    semi = _interval_seminorm(mesh, s)[1:-1, 1:-1]
    mat = mass_matrix(mesh) + 0.5 * c * semi
    if exterior:
        mat = mat + c * _exterior_weighted_mass(mesh, s)
    mat = 0.5 * (mat + mat.T)
    if not np.all(np.isfinite(mat)):
        bad = np.argwhere(~np.isfinite(mat))[:5]
        raise QuadratureError(f"non-finite Gram entries at {bad.tolist()}")
    return mat, c


def assemble_integral_tilde(mesh: Mesh1D, s: float) -> GramOperator:
    mat, c = _integral_gram(mesh, s, exterior=True)
    return GramOperator(SpaceKind.INTEGRAL_TILDE, s, mesh, mat, c)


def assemble_integral_omega(mesh: Mesh1D, s: float) -> GramOperator:
    """Gram matrix of the L2 product plus the Gagliardo form over the interval only.

    This is an equivalent norm on the zero-trace space only for ``s < 1/2``.
    """
    if s > 0.5:
        raise ValueError("the interval-only Gagliardo norm is not offered for s > 1/2")
    mat, c = _integral_gram(mesh, s, exterior=False)
    return GramOperator(SpaceKind.INTEGRAL_OMEGA, s, mesh, mat, c)


def assemble_spectral(mesh: Mesh1D, s: float) -> GramOperator:
    """Spectral Gram matrix ``(M Phi) Lambda^s (M Phi)^T`` from ``K Phi = M Phi Lambda``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    mass = mass_matrix(mesh)
    stiff = stiffness_matrix(mesh)
    try:
        lam, phi = scipy.linalg.eigh(stiff, mass)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError(f"generalized eigensolve failed: {exc}") from exc
    mphi = mass @ phi
    mat = (mphi * lam**s) @ mphi.T
    mat = 0.5 * (mat + mat.T)
    return GramOperator(SpaceKind.SPECTRAL, s, mesh, mat)


def dirichlet_eigenvalues(mesh: Mesh1D) -> np.ndarray:
    return scipy.linalg.eigh(stiffness_matrix(mesh), mass_matrix(mesh), eigvals_only=True)


def assemble(mesh: Mesh1D, kind, s: float) -> GramOperator:
    kind = SpaceKind.parse(kind)
    if kind is SpaceKind.SPECTRAL:
        return assemble_spectral(mesh, s)
    if kind is SpaceKind.INTEGRAL_OMEGA:
        return assemble_integral_omega(mesh, s)
    return assemble_integral_tilde(mesh, s)


def gram_inner(G: GramOperator, u: FeFunction, w: FeFunction) -> float:
    G.mesh.check_same(u.mesh)
    G.mesh.check_same(w.mesh)
    return float(u.values @ G.matrix @ w.values)


def write_dense(path, matrix: np.ndarray) -> None:
    """Whitespace separated dense matrix, row-major, 17 significant digits."""
    np.savetxt(path, np.asarray(matrix), fmt="%.17g", delimiter=" ")


# -- quadrature oracle ----------------------------------------------------------

def seminorm_oracle(w: FeFunction, kind, s: float, tol: float = 1e-10, max_level: int = 12) -> float:
    """``w^T G w`` for an integral kind, computed without the assembly code.

    The double integral is rewritten with the lag ``r = x - y`` as
    ``2 int_0^inf r^(-1-2s) D(r) dr`` where ``D(r)`` integrates the squared
    increment ``(w(x+r) - w(x))^2`` in ``x``.  ``D`` is evaluated piecewise
    exactly (Gauss on the pieces between all kinks of both shifted copies);
    the lag integral is refined globally, level by level, until two
    successive levels agree to ``tol / 2`` relative.
    """
    kind = SpaceKind.parse(kind)
    if not kind.is_integral:
        raise ValueError("the oracle covers the integral kinds only")
    _check_integral_s(s)
    return piecewise_linear_energy(w.mesh.nodes, w.full_values(), kind, s, tol, max_level)


def piecewise_linear_energy(xs, vals, kind, s, tol=1e-10, max_level=12) -> float:
    """Oracle energy for the continuous piecewise linear function through ``(xs, vals)``.

    ``vals`` must vanish at both ends of ``xs``; ``xs`` need not be uniform.
    """
    kind = SpaceKind.parse(kind)
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(vals, dtype=float)
    a, b = xs[0], xs[-1]
    whole_line = kind is SpaceKind.INTEGRAL_TILDE
    l2 = _pl_l2_squared(xs, vals)
    if l2 == 0.0 and not np.any(vals):
        return 0.0
    c = c_ds(1, s)

    def increment_energy(r):
        # D(r) = int (w(x+r) - w(x))^2 dx, over the interval or the whole line
        lo = a - r if whole_line else np.full_like(r, a)
        hi = np.full_like(r, b) if whole_line else b - r
        pts = np.concatenate([np.broadcast_to(xs, (r.size, xs.size)), xs[None] - r[:, None]], axis=1)
        pts = np.clip(pts, lo[:, None], hi[:, None])
        pts = np.sort(np.concatenate([pts, lo[:, None], hi[:, None]], axis=1), axis=1)
        left, right = pts[:, :-1], pts[:, 1:]
        gx, gw = np.polynomial.legendre.leggauss(3)
        x = 0.5 * (left[..., None] + right[..., None]) + 0.5 * (right - left)[..., None] * gx
        f = np.interp(x + r[:, None, None], xs, vals, left=0.0, right=0.0)
        f -= np.interp(x, xs, vals, left=0.0, right=0.0)
        return np.sum(0.5 * (right - left)[..., None] * gw * f**2, axis=(1, 2))

    # D is polynomial between consecutive pairwise node distances
    lags = np.unique(np.abs(xs[:, None] - xs[None, :]).ravel())
    lags = lags[lags <= (b - a)]

    jx, jw = scipy.special.roots_jacobi(8, 0.0, 1.0 - 2.0 * s)  # weight (1+t)^(1-2s)
    gx, gw = np.polynomial.legendre.leggauss(8)

    def lag_integral(level):
        edges = np.concatenate(
            [np.linspace(r0, r1, 2**level + 1)[:-1] for r0, r1 in zip(lags[:-1], lags[1:])]
            + [lags[-1:]]
        )
        e0, e1 = edges[:-1], edges[1:]
        half = 0.5 * (e1 - e0)
        # first panel: int_0^e1 r^(1-2s) (D(r)/r^2) dr by a Jacobi rule
        r_first = half[0] * (jx + 1.0)
        first = np.sum(jw * increment_energy(r_first) / r_first**2) * half[0] ** (2.0 - 2.0 * s)
        r = (e0[1:, None] + half[1:, None] * (gx + 1.0)).ravel()
        wr = (half[1:, None] * gw).ravel()
        total = first + np.sum(wr * r ** (-1.0 - 2.0 * s) * increment_energy(r))
        if whole_line:
            # beyond the diameter the two copies no longer overlap: D = 2 ||w||^2
            total += 2.0 * l2 * (b - a) ** (-2.0 * s) / (2.0 * s)
        return total

    prev = lag_integral(0)
    for level in range(1, max_level + 1):
        cur = lag_integral(level)
        if abs(cur - prev) <= 0.5 * tol * abs(cur):
            return l2 + c * cur
        prev = cur
    raise QuadratureError(f"oracle did not reach tol={tol} within {max_level} levels")


def _pl_l2_squared(xs, vals) -> float:
    d = np.diff(xs)
    u0, u1 = vals[:-1], vals[1:]
    return float(np.sum(d * (u0**2 + u0 * u1 + u1**2) / 3.0))

