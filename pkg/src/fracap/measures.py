"""Nodal capacitary measures, relaxed Dirichlet problems and capacities.

A measure is represented by a density against the lumped nodal quadrature,
so ``int w v dmu`` becomes ``sum_i m_i mu_i w_i v_i`` with ``m_i`` the
integral of the i-th hat.  Nodes flagged infinite carry the hard constraint
``w_i = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .gram import GramOperator
from .mesh import FeFunction, Mesh1D, load_vector, lumped_mass, mass_matrix

__all__ = [
    "NodalMeasure",
    "RelaxedDirichletSolution",
    "CapacityResult",
    "MembershipReport",
    "GammaReport",
    "relaxed_dirichlet_solve",
    "torsion_z",
    "capacity",
    "check_K_membership",
    "measure_from_z",
    "gamma_sequence_test",
    "comparison_violations",
]


class MeasureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NodalMeasure:
    mesh: Mesh1D
    weights: np.ndarray
    infinite_set: np.ndarray = None

    def __post_init__(self):
        n = self.mesh.interior_dof_count
        w = np.array(np.broadcast_to(np.asarray(self.weights, dtype=float), (n,)))
        inf = (
            np.zeros(n, dtype=bool)
            if self.infinite_set is None
            else np.array(np.broadcast_to(np.asarray(self.infinite_set, dtype=bool), (n,)))
        )
        inf |= np.isposinf(w)
        w[inf] = 0.0
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and nonnegative off the infinite set")
        w.flags.writeable = False
        inf.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "infinite_set", inf)

    @classmethod
    def zero(cls, mesh: Mesh1D) -> "NodalMeasure":
        return cls(mesh, 0.0)

    @classmethod
    def on_intervals(cls, mesh: Mesh1D, intervals, weight) -> "NodalMeasure":
        """Constant density ``weight`` (``inf`` allowed) on the nodes in ``[l, r)`` intervals."""
        mask = mesh.nodes_in(intervals)
        if np.isposinf(weight):
            return cls(mesh, 0.0, mask)
        return cls(mesh, np.where(mask, float(weight), 0.0))

    def density(self) -> np.ndarray:
        """Weights with ``inf`` on the infinite set."""
        return np.where(self.infinite_set, np.inf, self.weights)

    def diagonal(self) -> np.ndarray:
        """Diagonal of the discrete measure term, ``m_i * mu_i`` (zero on the infinite set)."""
        return lumped_mass(self.mesh) * self.weights

    def dominated_by(self, other: "NodalMeasure") -> bool:
        """True if self <= other nodewise (infinite counts as largest)."""
        a, b = self.density(), other.density()
        return bool(np.all(a <= b))


@dataclass(frozen=True, eq=False)
class RelaxedDirichletSolution:
    w: FeFunction
    measure: NodalMeasure
    rhs: np.ndarray
    rhs_description: str
    residual_norm: float
    energy: float
    measure_energy: float
    rhs_dual_norm: float

    @property
    def w_norm(self) -> float:
        return float(np.sqrt(max(self.energy, 0.0)))

    @property
    def energy_identity_error(self) -> float:
        """Relative defect of ``w^T G w + w^T D w = rhs^T w``."""
        lhs = self.energy + self.measure_energy
        rhs = float(self.rhs @ self.w.values)
        return abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)

    @property
    def bound_satisfied(self) -> bool:
        return self.w_norm <= self.rhs_dual_norm * (1 + 1e-12) + 1e-10


def _dual_norm(G: GramOperator, rhs: np.ndarray) -> float:
    y = scipy.linalg.cho_solve(G.cholesky(), rhs)
    return float(np.sqrt(max(rhs @ y, 0.0)))


def relaxed_dirichlet_solve(G: GramOperator, M, mu: NodalMeasure, f, description: str = "") -> RelaxedDirichletSolution:
    """Solve ``(G + D_mu) w = rhs`` with ``w = 0`` on the infinite set.

    ``f`` is an FeFunction (rhs = M f), a callable of x (its interpolant on
    all nodes is integrated) or a raw dual vector.  ``M`` may be ``None``.
    """
    mesh = G.mesh
    mesh.check_same(mu.mesh)
    if M is None:
        M = mass_matrix(mesh)
    if isinstance(f, FeFunction):
        mesh.check_same(f.mesh)
        rhs = M @ f.values
    else:
        rhs = load_vector(mesh, f)
    free = ~mu.infinite_set
    w = np.zeros(mesh.interior_dof_count)
    residual = 0.0
    if free.any():
        a = G.matrix[np.ix_(free, free)] + np.diag(mu.diagonal()[free])
        try:
            factor = scipy.linalg.cho_factor(a)
        except np.linalg.LinAlgError as exc:
            raise MeasureError(f"reduced relaxed Dirichlet system is singular: {exc}") from exc
        w[free] = scipy.linalg.cho_solve(factor, rhs[free])
        r = a @ w[free] - rhs[free]
        scale = max(np.linalg.norm(rhs[free]), np.finfo(float).tiny)
        residual = float(np.linalg.norm(r) / scale)
    energy = float(w @ G.matrix @ w)
    measure_energy = float(w @ (mu.diagonal() * w))
    return RelaxedDirichletSolution(
        w=FeFunction(mesh, w),
        measure=mu,
        rhs=rhs,
        rhs_description=description or _describe(f),
        residual_norm=residual,
        energy=energy,
        measure_energy=measure_energy,
        rhs_dual_norm=_dual_norm(G, rhs),
    )


def _describe(f) -> str:
    if isinstance(f, FeFunction):
        return "fe-function"
    if callable(f):
        return getattr(f, "__name__", "callable")
    return "dual-vector"


def _one(x):
    return np.ones_like(x)


_one.__name__ = "1"


def torsion_z(G: GramOperator, M, mu: NodalMeasure, scale: float = 1.0) -> RelaxedDirichletSolution:
    """Relaxed Dirichlet solution for the right-hand side ``scale * 1``."""
    rhs = scale * lumped_mass(G.mesh)
    return relaxed_dirichlet_solve(G, M, mu, rhs, description=f"{scale:g}*1")


@dataclass(frozen=True)
class CapacityResult:
    value: float
    w: FeFunction
    within_unit_interval: bool


def capacity(G: GramOperator, K_nodes) -> CapacityResult:
    """Discrete capacity of a node set: min ``w^T G w`` subject to ``w = 1`` on the set."""
    mesh = G.mesh
    n = mesh.interior_dof_count
    K = np.zeros(n, dtype=bool)
    K[np.asarray(K_nodes)] = True
    if not K.any():
        return CapacityResult(0.0, FeFunction(mesh, np.zeros(n)), True)
    free = ~K
    w = np.zeros(n)
    w[K] = 1.0
    if free.any():
        gff = G.matrix[np.ix_(free, free)]
        w[free] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gff), -G.matrix[np.ix_(free, K)].sum(axis=1))
    value = float(w @ G.matrix @ w)
    inside = bool(np.all(w >= -1e-12) and np.all(w <= 1 + 1e-12))
    return CapacityResult(value, FeFunction(mesh, w), inside)


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    slack: np.ndarray
    min_value: float
    min_slack: float


def check_K_membership(G: GramOperator, M, z: FeFunction, tol: float = 1e-10) -> MembershipReport:
    """Test ``z >= 0`` and ``(z, v)_W <= int v`` for all nonnegative P1 ``v``.

    Nonnegative P1 functions are nonnegative combinations of hats, so both
    conditions are nodewise.
    """
    G.mesh.check_same(z.mesh)
    slack = lumped_mass(G.mesh) - G.matrix @ z.values
    min_value = float(z.values.min()) if z.values.size else 0.0
    min_slack = float(slack.min()) if slack.size else 0.0
    member = min_value >= -tol and min_slack >= -tol
    return MembershipReport(member, slack, min_value, min_slack)


def measure_from_z(G: GramOperator, M, z: FeFunction, zero_threshold: float | None = None,
                   tol: float = 1e-10) -> NodalMeasure:
    """Recover the capacitary measure whose torsion function is ``z``.

    ``eta = 1 - (z, .)_W`` is tested against each hat; the density is
    ``eta_i / (m_i z_i)`` where ``z`` is above the threshold and infinite on
    the rest.  The threshold defaults to ``1e-8 * max(z)``.
    """
    report = check_K_membership(G, M, z, tol)
    if not report.member:
        raise MeasureError(
            f"z is not in K: min z = {report.min_value:.3e}, min slack = {report.min_slack:.3e}"
        )
    if zero_threshold is None:
        zero_threshold = 1e-8 * max(float(z.values.max(initial=0.0)), 0.0)
    positive = z.values > zero_threshold
    m = lumped_mass(G.mesh)
    eta = np.maximum(report.slack, 0.0)
    weights = np.zeros_like(eta)
    weights[positive] = eta[positive] / (m[positive] * z.values[positive])
    return NodalMeasure(G.mesh, weights, ~positive)


def comparison_violations(w_small: FeFunction, w_large: FeFunction, tol: float = 1e-8) -> np.ndarray:
    """Indices where ``w_small <= w_large`` fails by more than ``tol``."""
    return np.flatnonzero(w_small.values > w_large.values + tol)


@dataclass
class GammaReport:
    z_diff: np.ndarray
    f_diff: np.ndarray  # shape (n_rhs, n_measures)
    z_norms: np.ndarray
    f_norms: np.ndarray
    bounds_ok: bool
    lipschitz_constants: np.ndarray
    z_ratio: float
    f_ratios: np.ndarray
    cauchy_consistent: bool
    solutions: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "k": list(range(len(self.z_diff))),
            "z_diff": self.z_diff.tolist(),
            "f_diff": self.f_diff.tolist(),
            "z_norm": self.z_norms.tolist(),
            "f_norm": self.f_norms.tolist(),
            "a_priori_bounds_hold": self.bounds_ok,
            "empirical_constants": self.lipschitz_constants.tolist(),
            "z_tail_ratio": self.z_ratio,
            "f_tail_ratios": self.f_ratios.tolist(),
            "z_cauchy_implies_f_cauchy": self.cauchy_consistent,
        }


def gamma_sequence_test(G: GramOperator, M, mu_seq, f_list) -> GammaReport:
    """Numerical witness of gamma-convergence of ``mu_seq`` towards its last entry.

    For every measure the torsion function and the relaxed solutions for each
    right-hand side are computed; L2 distances to the last entry's solutions
    are reported.  ``cauchy_consistent`` holds when every right-hand side's
    distances shrink by at least the same order of magnitude as the torsion
    distances, up to a factor 10.
    """
    mu_seq = list(mu_seq)
    f_list = list(f_list)
    if len(mu_seq) < 2 or not f_list:
        raise ValueError("need at least two measures and one right-hand side")
    for mu in mu_seq:
        G.mesh.check_same(mu.mesh)
    if M is None:
        M = mass_matrix(G.mesh)

    def l2(v):
        return float(np.sqrt(max(v @ M @ v, 0.0)))

    zs = [torsion_z(G, M, mu) for mu in mu_seq]
    ws = [[relaxed_dirichlet_solve(G, M, mu, f) for mu in mu_seq] for f in f_list]
    z_last = zs[-1].w.values
    z_diff = np.array([l2(z.w.values - z_last) for z in zs])
    f_diff = np.array([[l2(w.w.values - row[-1].w.values) for w in row] for row in ws])
    z_norms = np.array([l2(z.w.values) for z in zs])
    f_norms = np.array([[l2(w.w.values) for w in row] for row in ws])
    bounds_ok = all(sol.bound_satisfied for sol in zs) and all(sol.bound_satisfied for row in ws for sol in row)
    head = slice(0, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        consts = np.nanmax(np.where(z_diff[head] > 0, f_diff[:, head] / z_diff[head], 0.0), axis=1)
        z_ratio = float(z_diff[-2] / z_diff[0]) if z_diff[0] > 0 else 0.0
        f_ratios = np.where(f_diff[:, 0] > 0, f_diff[:, -2] / f_diff[:, 0], 0.0)
    consistent = bool(np.all(f_ratios <= 10.0 * z_ratio + 1e-14))
    return GammaReport(
        z_diff=z_diff,
        f_diff=f_diff,
        z_norms=z_norms,
        f_norms=f_norms,
        bounds_ok=bounds_ok,
        lipschitz_constants=np.asarray(consts),
        z_ratio=z_ratio,
        f_ratios=np.asarray(f_ratios),
        cauchy_consistent=consistent,
        solutions=[zs, ws],
    )
