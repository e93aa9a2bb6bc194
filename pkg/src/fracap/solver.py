"""Reweighted quadratic iteration for L^p-regularised tracking problems.

Minimises ``F(w) + alpha/2 ||w||_W^2 + beta int |w|^p`` over P1 functions,
``0 <= p < 1``, by repeatedly solving

    (H + alpha G + 2 beta D_k) w_{k+1} = b,   D_k = diag(m_i psi'_{eps_k}(w_{k,i}^2)),

where ``F(w) = 1/2 w^T H w - b^T w + const`` and ``eps_k`` shrinks
geometrically.  After the last step the multiplier ``lambda``, the measure
``mu`` with ``lambda = w mu`` and the torsion function ``z`` of ``mu`` are
extracted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .gram import GramOperator, SpaceKind, assemble
from .measures import NodalMeasure, torsion_z
from .mesh import FeFunction, Mesh1D, lp_integral, lumped_mass, mass_matrix, _full_mass
from .smoothing import SmoothingFamily, psi, psi_prime

__all__ = [
    "Tracking",
    "ProblemConfig",
    "SolveReport",
    "dc_solve",
    "multiplier_lambda",
    "mu_from_solution",
    "optimality_report",
    "lumped_lp",
    "support",
    "jaccard",
    "p_to_zero_continuation",
    "ContinuationResult",
]

log = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-8


class Tracking:
    """``F(w) = 1/2 ||w - w_d||^2_{L2}`` for a target given on all nodes.

    Any object exposing ``hessian``, ``load``, ``value`` and ``gradient`` with
    the same meaning can be passed to the solver instead.
    """

    quadratic = True

    def __init__(self, mesh: Mesh1D, target):
        self.mesh = mesh
        if isinstance(target, FeFunction):
            mesh.check_same(target.mesh)
            full = target.full_values()
        elif callable(target):
            full = np.broadcast_to(np.asarray(target(mesh.nodes), dtype=float), mesh.nodes.shape).copy()
        else:
            full = np.asarray(target, dtype=float)
            if full.shape == (mesh.interior_dof_count,):
                full = np.concatenate(([0.0], full, [0.0]))
        self.target_nodal = full
        mfull = _full_mass(mesh)
        self.hessian = mass_matrix(mesh)
        self.load = (mfull @ full)[1:-1]
        self.constant = float(full @ (mfull @ full))

    def value(self, w: np.ndarray) -> float:
        return 0.5 * float(w @ self.hessian @ w - 2.0 * self.load @ w + self.constant)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.hessian @ w - self.load

    def projected_target(self) -> np.ndarray:
        return scipy.linalg.solve(self.hessian, self.load, assume_a="pos")


@dataclass(frozen=True)
class ProblemConfig:
    alpha: float
    beta: float
    p: float
    s: float
    kind: SpaceKind
    mesh: Mesh1D
    w_d: object  # callable of x, FeFunction, or nodal array
    eps0: float = 1.0
    eps_factor: float = 0.4
    eps_min: float = 1e-8
    tol_step: float = 1e-10
    max_iter: int = 200
    closure_tol: float = 1e-10
    init: object = "target"  # "target" (L2 projection of w_d), "zero", or an array
    inner_loop: bool = False
    inner_max_iter: int = 50
    objective: object = None  # overrides the tracking functional

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind.parse(self.kind))
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")
        if not 0.0 < self.s < 1.0 or self.s == 0.5:
            raise ValueError(f"s must lie in (0, 1) without 1/2, got {self.s}")
        if self.eps0 <= 0 or not 0.0 < self.eps_factor < 1.0 or self.eps_min < 0:
            raise ValueError("need eps0 > 0, 0 < eps_factor < 1, eps_min >= 0")
        if self.max_iter < 1 or self.closure_tol <= 0:
            raise ValueError("max_iter must be positive")

    @property
    def family(self) -> SmoothingFamily:
        return SmoothingFamily.for_p(self.p)

    def tracking(self):
        return self.objective if self.objective is not None else Tracking(self.mesh, self.w_d)

    def with_(self, **changes) -> "ProblemConfig":
        return replace(self, **changes)


@dataclass
class SolveReport:
    config: ProblemConfig
    w_K: FeFunction
    iterations: int
    converged: bool
    eps_K: float
    eps_history: np.ndarray
    objective_history: np.ndarray
    smoothed_history: np.ndarray
    mm_decrease: np.ndarray
    step_history: np.ndarray
    lambda_K: np.ndarray
    mu_K: NodalMeasure
    z_K: FeFunction
    stationarity_residual: float
    relative_stationarity: float
    closure_residual: float
    complementarity_gap: float
    support_w: np.ndarray
    support_z: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def lambda_density(self) -> np.ndarray:
        return self.lambda_K / lumped_mass(self.w_K.mesh)

    def scalars(self) -> dict:
        mesh = self.w_K.mesh
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "eps_K": self.eps_K,
            "stationarity_residual": self.stationarity_residual,
            "relative_stationarity": self.relative_stationarity,
            "closure_residual": self.closure_residual,
            "complementarity_gap": self.complementarity_gap,
            "lambda_dot_w": float(self.lambda_K @ self.w_K.values),
            "objective": float(self.objective_history[-1]),
            "max_abs_w": float(np.abs(self.w_K.values).max(initial=0.0)),
            "support_w_measure": float(self.support_w.sum() * mesh.h),
            "support_z_measure": float(self.support_z.sum() * mesh.h),
            "jaccard_w_z": jaccard(self.support_w, self.support_z),
            **self.extras,
        }


def support(values: np.ndarray, rel: float = SUPPORT_THRESHOLD) -> np.ndarray:
    """Nodes where ``|v|`` exceeds ``rel * max|v|``."""
    a = np.abs(np.asarray(values))
    top = a.max(initial=0.0)
    if top == 0.0:
        return np.zeros(a.shape, dtype=bool)
    return a > rel * top


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union


def lumped_lp(w: FeFunction, p: float, keep=None) -> float:
    """Nodal quadrature ``sum_i m_i |w_i|^p`` (``0^0 = 0``), optionally restricted to ``keep``."""
    v = np.abs(w.values)
    terms = (v > 0).astype(float) if p == 0.0 else v**p
    if keep is not None:
        terms = np.where(keep, terms, 0.0)
    return float(np.sum(lumped_mass(w.mesh) * terms))


def multiplier_lambda(w: FeFunction, eps: float, p: float, M=None) -> np.ndarray:
    """Nodal dual vector of the smoothed penalty's derivative, ``m_i * 2 w_i psi'(w_i^2)``.

    ``M`` is accepted for interface symmetry; the lumped masses are used.
    """
    return lumped_mass(w.mesh) * w.values * mu_from_solution(w, eps, p).weights


def mu_from_solution(w: FeFunction, eps: float, p: float) -> NodalMeasure:
    """Density ``2 psi'_eps(w^2)``: ``p min(eps^(p-2), |w|^(p-2))`` or ``2 eps / (w^2 + eps)^2``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    weights = 2.0 * psi_prime(SmoothingFamily.for_p(p), w.values**2, eps)
    return NodalMeasure(w.mesh, weights)


def _true_objective(F, G, cfg, w) -> float:
    fe = FeFunction(cfg.mesh, w)
    return F.value(w) + 0.5 * cfg.alpha * float(w @ G.matrix @ w) + cfg.beta * lp_integral(fe, cfg.p)


def _smoothed_objective(F, G, cfg, w, eps, m) -> float:
    return (F.value(w) + 0.5 * cfg.alpha * float(w @ G.matrix @ w)
            + cfg.beta * float(np.sum(m * psi(cfg.family, w**2, eps))))


def dc_solve(cfg: ProblemConfig, G: GramOperator | None = None, w0=None) -> SolveReport:
    """Run the reweighting iteration; never raises on non-convergence (see ``converged``)."""
    mesh = cfg.mesh
    if G is None:
        G = assemble(mesh, cfg.kind, cfg.s)
    F = cfg.tracking()
    m = lumped_mass(mesh)
    family = cfg.family
    H, b = F.hessian, F.load
    base = H + cfg.alpha * G.matrix

    if w0 is not None:
        w = np.array(w0.values if isinstance(w0, FeFunction) else w0, dtype=float)
    elif isinstance(cfg.init, str):
        if cfg.init == "target":
            w = F.projected_target()
        elif cfg.init == "zero":
            w = np.zeros(mesh.interior_dof_count)
        else:
            raise ValueError(f"unknown init {cfg.init!r}")
    else:
        w = np.array(cfg.init, dtype=float)

    eps = cfg.eps0
    eps_hist, obj_hist, smooth_hist, mm_hist, step_hist = [], [], [], [], []
    converged = False
    inner = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        d = m * psi_prime(family, w**2, eps)
        a = base + np.diag(2.0 * cfg.beta * d)
        w_new = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
        dw = w_new - w
        step = float(np.sqrt(max(dw @ G.matrix @ dw, 0.0)))
        before = _smoothed_objective(F, G, cfg, w, eps, m)
        after = _smoothed_objective(F, G, cfg, w_new, eps, m)
        eps_hist.append(eps)
        step_hist.append(step)
        smooth_hist.append(after)
        mm_hist.append(before - after)
        obj_hist.append(_true_objective(F, G, cfg, w_new))
        w = w_new
        at_floor = eps <= cfg.eps_min * (1 + 1e-12)
        if step <= cfg.tol_step and at_floor:
            # the returned iterate must also be a fixed point of its own reweighted system
            d = m * psi_prime(family, w**2, eps)
            closure = np.linalg.norm(base @ w + 2.0 * cfg.beta * d * w - b) / max(np.linalg.norm(b), 1e-300)
            if closure <= cfg.closure_tol:
                converged = True
                break
        if cfg.inner_loop and step > cfg.tol_step and inner < cfg.inner_max_iter:
            inner += 1
            continue
        inner = 0
        if not at_floor:
            eps = max(cfg.eps_min, cfg.eps_factor * eps)
    if not converged:
        log.warning("dc_solve stopped at max_iter=%d with last step %.3e", cfg.max_iter, step_hist[-1])

    w_fe = FeFunction(mesh, w)
    lam = multiplier_lambda(w_fe, eps, cfg.p)
    mu = mu_from_solution(w_fe, eps, cfg.p)
    z = torsion_z(G, H, mu).w
    resid = cfg.alpha * (G.matrix @ w) + cfg.beta * lam + F.gradient(w)
    chol = G.cholesky()
    stat = float(np.sqrt(max(resid @ scipy.linalg.cho_solve(chol, resid), 0.0)))
    load_norm = float(np.sqrt(max(b @ scipy.linalg.cho_solve(chol, b), 0.0)))
    d = m * psi_prime(family, w**2, eps)
    closure = float(np.linalg.norm(base @ w + 2.0 * cfg.beta * d * w - b) / max(np.linalg.norm(b), 1e-300))
    supp_w = support(w)
    supp_z = support(z.values)
    if cfg.p > 0:
        gap = float(lam @ w) - cfg.p * lumped_lp(w_fe, cfg.p, keep=supp_w)
    else:
        gap = float(lam @ w)
    return SolveReport(
        config=cfg,
        w_K=w_fe,
        iterations=it,
        converged=converged,
        eps_K=eps,
        eps_history=np.array(eps_hist),
        objective_history=np.array(obj_hist),
        smoothed_history=np.array(smooth_hist),
        mm_decrease=np.array(mm_hist),
        step_history=np.array(step_hist),
        lambda_K=lam,
        mu_K=mu,
        z_K=z,
        stationarity_residual=stat,
        relative_stationarity=stat / load_norm if load_norm > 0 else stat,
        closure_residual=closure,
        complementarity_gap=gap,
        support_w=supp_w,
        support_z=supp_z,
    )


def optimality_report(cfg: ProblemConfig, report: SolveReport, G: GramOperator | None = None, M=None) -> dict:
    """Structured check of the discrete optimality system at the returned iterate."""
    mesh = cfg.mesh
    if G is None:
        G = assemble(mesh, cfg.kind, cfg.s)
    m = lumped_mass(mesh)
    w = report.w_K.values
    z = report.z_K.values
    lam = report.lambda_K
    p = cfg.p
    tol = 1e-10

    lam_w = float(lam @ w)
    out = {
        "stationarity_residual": report.stationarity_residual,
        "relative_stationarity": report.relative_stationarity,
        "lambda_dot_w": lam_w,
        "trust_region": "not enforced",
    }
    if p > 0:
        lp_supp = lumped_lp(report.w_K, p, keep=report.support_w)
        out.update(
            complementarity_target=p * lp_supp,
            complementarity_gap=lam_w - p * lp_supp,
            complementarity_tolerance=1e-6 * (1.0 + p * lp_supp),
            lp_lumped_all_nodes=lumped_lp(report.w_K, p),
            lp_elementwise=lp_integral(report.w_K, p),
        )
        out["complementarity_ok"] = abs(out["complementarity_gap"]) <= out["complementarity_tolerance"]
    else:
        out.update(complementarity_gap=lam_w, complementarity_sign="nonnegative" if lam_w >= -tol else "negative")
        out["complementarity_ok"] = lam_w >= -tol

    sw, sz = report.support_w, report.support_z
    out.update(
        jaccard_w_z=jaccard(sw, sz),
        support_w_in_support_z=bool(np.all(sz[sw])),
        support_w_measure=float(sw.sum() * mesh.h),
        support_z_measure=float(sz.sum() * mesh.h),
    )
    eta = (m - cfg.alpha * (G.matrix @ z)) / cfg.beta
    out["eta_min"] = float(eta.min(initial=0.0))
    out["eta_nonnegative"] = bool(np.all(eta >= -tol))

    weights = report.mu_K.weights
    off = ~sw
    floor = p * report.eps_K ** (p - 2.0) if p > 0 else 2.0 / report.eps_K
    out["mu_floor_formula"] = floor
    out["mu_min_off_support"] = float(weights[off].min()) if off.any() else None

    # density d lambda / d w, only under the sign hypotheses
    if np.all(lam >= -tol) and np.all(w >= -tol):
        dens = np.full(w.shape, np.inf)
        dens[sw] = lam[sw] / (m[sw] * w[sw])
        agree = float(np.max(np.abs(dens[sw] - weights[sw]) / np.maximum(weights[sw], 1e-300))) if sw.any() else 0.0
        out["mu_w"] = {"applicable": True, "max_rel_diff_on_support": agree}
    else:
        out["mu_w"] = {"applicable": False}
    return out


@dataclass
class ContinuationResult:
    p_values: list
    reports: list
    lambda_dot_w: np.ndarray
    lp_terms: np.ndarray
    gaps: np.ndarray
    gaps_ok: np.ndarray
    monotone_decay: bool


def p_to_zero_continuation(cfg: ProblemConfig, p_list, G: GramOperator | None = None) -> ContinuationResult:
    """Solve for a decreasing list of ``p``, warm-starting each run from the previous one."""
    p_list = [float(p) for p in p_list]
    if not p_list or any(p <= 0 for p in p_list) or any(b >= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p list must be strictly decreasing and positive")
    if G is None:
        G = assemble(cfg.mesh, cfg.kind, cfg.s)
    reports = []
    w0 = None
    for p in p_list:
        rep = dc_solve(cfg.with_(p=p), G, w0=w0)
        reports.append(rep)
        w0 = rep.w_K
    lw = np.array([float(r.lambda_K @ r.w_K.values) for r in reports])
    lp = np.array([p * lumped_lp(r.w_K, p, keep=r.support_w) for p, r in zip(p_list, reports)])
    gaps = lw - lp
    ok = np.abs(gaps) <= 1e-6 * (1.0 + lp)
    return ContinuationResult(
        p_values=p_list,
        reports=reports,
        lambda_dot_w=lw,
        lp_terms=lp,
        gaps=gaps,
        gaps_ok=ok,
        monotone_decay=bool(np.all(np.diff(lw) <= 0)),
    )
