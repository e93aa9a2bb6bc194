"""Command-line front end: ``fracap <command> [--config FILE] [--out DIR] [--n N] [--s S]``.

Exit codes: 0 on success (also for unconverged solves, flagged in the
report), 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .config import REPORT_SCHEMA, ConfigError, compile_expression, load_config
from .gram import QuadratureError, SpaceKind, assemble, write_dense
from .measures import MeasureError, NodalMeasure, capacity, gamma_sequence_test
from .mesh import Mesh1D, mass_matrix
from .solver import ProblemConfig, dc_solve, optimality_report

log = logging.getLogger("fracap")

COMMANDS = ("assemble", "solve", "capacity", "gamma-test", "reproduce-1d", "reproduce-spaces", "reproduce-p0")
SOLUTION_HEADER = "x,w,z,lambda,mu"
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(v) -> str:
    return "%.17g" % v


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, payload: dict, schema: dict | None = None) -> None:
    payload = _jsonable(payload)
    if schema is not None:
        jsonschema.validate(payload, schema)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _mesh(cfg) -> Mesh1D:
    m = cfg["mesh"]
    return Mesh1D(float(m["a"]), float(m["b"]), int(m["n"]))


def _problem(cfg, mesh, **changes) -> ProblemConfig:
    pr, sc = cfg["problem"], cfg["schedule"]
    fields = dict(
        alpha=float(pr["alpha"]),
        beta=float(pr["beta"]),
        p=float(pr["p"]),
        s=float(cfg["space"]["s"]),
        kind=SpaceKind.parse(cfg["space"]["kind"]),
        mesh=mesh,
        w_d=compile_expression(pr["w_d_expression"]),
        eps0=float(sc["eps0"]),
        eps_factor=float(sc["factor"]),
        eps_min=float(sc["eps_min"]),
        tol_step=float(sc["tol"]),
        max_iter=int(sc["max_iter"]),
        init=sc["init"],
        inner_loop=bool(sc["inner_loop"]),
    )
    fields.update(changes)
    return ProblemConfig(**fields)


def _run(name, problem, G, out: Path):
    rep = dc_solve(problem, G)
    opt = optimality_report(problem, rep, G)
    mesh = problem.mesh
    rows = zip(mesh.interior_nodes, rep.w_K.values, rep.z_K.values, rep.lambda_density, rep.mu_K.density())
    fname = "solution.csv" if name == "main" else f"solution_{name}.csv"
    _write_csv(out / fname, SOLUTION_HEADER, rows)
    record = {
        "name": name,
        "scalars": {**rep.scalars(), "p": problem.p, "alpha": problem.alpha, "beta": problem.beta,
                    "kind": problem.kind.value, "eps_factor": problem.eps_factor},
        "histories": {
            "eps": rep.eps_history,
            "objective": rep.objective_history,
            "smoothed_objective": rep.smoothed_history,
            "mm_decrease": rep.mm_decrease,
            "step": rep.step_history,
        },
        "optimality": opt,
    }
    if not rep.converged:
        log.warning("run %s did not converge in %d iterations", name, rep.iterations)
    return rep, opt, record


def _report(out: Path, command: str, cfg: dict, runs=(), criteria=None, name="report.json") -> None:
    payload = {"command": command, "config": cfg, "runs": list(runs)}
    if criteria is not None:
        payload["criteria"] = criteria
    _write_json(out / name, payload, REPORT_SCHEMA)


def cmd_assemble(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    G = assemble(mesh, cfg["space"]["kind"], float(cfg["space"]["s"]))
    write_dense(out / "gram.txt", G.matrix)
    write_dense(out / "mass.txt", mass_matrix(mesh))
    meta = {"kind": G.kind.value, "s": G.s, "n": mesh.n_elems, "c_ds": G.c_ds, "dofs": mesh.interior_dof_count}
    _write_json(out / "assemble.json", {"command": "assemble", "config": cfg, **meta})
    return meta


def cmd_solve(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    problem = _problem(cfg, mesh)
    G = assemble(mesh, problem.kind, problem.s)
    rep, _, record = _run("main", problem, G, out)
    _report(out, "solve", cfg, [record])
    return {"converged": rep.converged, "iterations": rep.iterations}


def _criteria_1d(problem, rep, opt) -> dict:
    off = ~rep.support_w
    floor = 0.5 * problem.p * rep.eps_K ** (problem.p - 2.0)
    return {
        "converged": rep.converged,
        "jaccard_at_least_0_95": opt["jaccard_w_z"] >= 0.95,
        "support_w_inside_support_z": opt["support_w_in_support_z"],
        "mu_blow_up_off_support": bool(np.all(rep.mu_K.weights[off] >= floor)),
    }


def cmd_reproduce_1d(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    problem = _problem(cfg, mesh)
    G = assemble(mesh, problem.kind, problem.s)
    rep, opt, record = _run("main", problem, G, out)
    criteria = _criteria_1d(problem, rep, opt)
    _report(out, "reproduce-1d", cfg, [record], criteria)
    return criteria


def _correlation(u: np.ndarray, v: np.ndarray, M: np.ndarray) -> float:
    nu, nv = float(u @ M @ u), float(v @ M @ v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ M @ v) / math.sqrt(nu * nv)


def cmd_reproduce_spaces(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    base = _problem(cfg, mesh)
    M = mass_matrix(mesh)
    g_tilde = assemble(mesh, SpaceKind.INTEGRAL_TILDE, base.s)
    g_spec = assemble(mesh, SpaceKind.SPECTRAL, base.s)
    tilde = base.with_(kind=SpaceKind.INTEGRAL_TILDE)
    r_tilde, _, rec_tilde = _run("tilde", tilde, g_tilde, out)
    w_hat = r_tilde.w_K.values
    spec_norm = float(w_hat @ g_spec.matrix @ w_hat)
    alpha_rescaled = float(w_hat @ g_tilde.matrix @ w_hat) / spec_norm if spec_norm > 0 else base.alpha
    spec = base.with_(kind=SpaceKind.SPECTRAL)
    r_spec, _, rec_spec = _run("spectral", spec, g_spec, out)
    rescaled = spec.with_(alpha=alpha_rescaled)
    r_res, _, rec_res = _run("spectral_rescaled", rescaled, g_spec, out)
    rows = []
    for name, prob, rep in (("tilde", tilde, r_tilde), ("spectral", spec, r_spec), ("spectral_rescaled", rescaled, r_res)):
        w = rep.w_K.values
        rows.append((name, prob.kind.value, prob.alpha, float(np.abs(w).max(initial=0.0)), math.sqrt(float(w @ M @ w)),
                     float(rep.support_w.sum() * mesh.h), _correlation(w, w_hat, M), "true" if rep.converged else "false"))
    _write_csv(out / "comparison.csv",
               "run,kind,alpha,max_abs_w,l2_norm,support_measure,correlation_with_tilde,converged", rows)
    summary = {
        "alpha_rescaled": alpha_rescaled,
        "correlation_spectral": rows[1][6],
        "correlation_spectral_rescaled": rows[2][6],
        "amplitude_ratio_spectral": rows[1][3] / rows[0][3] if rows[0][3] > 0 else None,
    }
    criteria = {"all_converged": all(r[7] == "true" for r in rows)}
    _report(out, "reproduce-spaces", {**cfg, "summary": summary}, [rec_tilde, rec_spec, rec_res], criteria)
    return summary


P0_RUNS = (("p0_fast", 0.0, 0.4), ("p0_slow", 0.0, 0.9), ("p01_fast", 0.1, 0.4))


def cmd_reproduce_p0(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    base = _problem(cfg, mesh)
    G = assemble(mesh, base.kind, base.s)
    reps, records, rows = {}, [], []
    for name, p, factor in P0_RUNS:
        prob = base.with_(p=p, eps_factor=factor)
        rep, _, rec = _run(name, prob, G, out)
        reps[name] = rep
        records.append(rec)
        sc = rep.scalars()
        rows.append((name, p, factor, "true" if rep.converged else "false", rep.iterations,
                     sc["support_w_measure"], sc["max_abs_w"], sc["lambda_dot_w"]))
    _write_csv(out / "support.csv",
               "run,p,eps_factor,converged,iterations,support_measure,max_abs_w,lambda_dot_w", rows)
    fast, slow, ref = (reps[n].scalars() for n, _, _ in P0_RUNS)
    criteria = {
        "slow_schedule_vanishes": slow["max_abs_w"] <= 1e-6,
        "fast_schedule_nonempty": fast["support_w_measure"] > 0,
        "p0_sparser_than_p01": fast["support_w_measure"] <= ref["support_w_measure"],
        "p0_lambda_w_nonnegative": fast["lambda_dot_w"] >= -1e-10 and slow["lambda_dot_w"] >= -1e-10,
    }
    _report(out, "reproduce-p0", cfg, records, criteria)
    return criteria


def _intervals_label(intervals) -> str:
    return "+".join(f"[{_fmt(lo)};{_fmt(hi)})" for lo, hi in intervals)


def cmd_capacity(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    kind, s = cfg["space"]["kind"], float(cfg["space"]["s"])
    G = assemble(mesh, kind, s)
    sets = cfg["capacity"]["sets"]
    masks = [mesh.nodes_in(iv) for iv in sets]
    values = [capacity(G, mk).value for mk in masks]
    rows = [(str(i), _intervals_label(iv), int(mk.sum()), v) for i, (iv, mk, v) in enumerate(zip(sets, masks, values))]
    _write_csv(out / "capacity.csv", "set,intervals,nodes,capacity", rows)

    checks = []
    tol = 1e-10
    for i in range(len(sets)):
        for j in range(len(sets)):
            if i >= j:
                continue
            a, b = masks[i], masks[j]
            union = capacity(G, a | b).value
            nested = "a_in_b" if np.all(b[a]) else ("b_in_a" if np.all(a[b]) else "none")
            mono = True
            if nested == "a_in_b":
                mono = values[i] <= values[j] + tol
            elif nested == "b_in_a":
                mono = values[j] <= values[i] + tol
            sub = union <= values[i] + values[j] + tol
            checks.append((str(i), str(j), nested, union, "true" if mono else "false", "true" if sub else "false"))
    _write_csv(out / "checks.csv", "a,b,nesting,capacity_union,monotone_ok,subadditive_ok", checks)

    ref_rows = []
    for n in cfg["capacity"]["refinement"]:
        m_n = Mesh1D(mesh.a, mesh.b, int(n))
        g_n = assemble(m_n, kind, s)
        for i, iv in enumerate(sets):
            ref_rows.append((str(i), int(n), capacity(g_n, m_n.nodes_in(iv)).value))
    _write_csv(out / "refinement.csv", "set,n,capacity", ref_rows)
    ok = all(c[4] == "true" and c[5] == "true" for c in checks)
    _write_json(out / "capacity.json", {"command": "capacity", "config": cfg, "capacities": values, "checks_ok": ok})
    return {"checks_ok": ok}


def cmd_gamma_test(cfg, out: Path) -> dict:
    mesh = _mesh(cfg)
    G = assemble(mesh, cfg["space"]["kind"], float(cfg["space"]["s"]))
    gm = cfg["gamma"]
    block = gm["block"]
    scales = [float(gm["base"]) ** float(k) for k in gm["exponents"]]
    mus = [NodalMeasure.on_intervals(mesh, block, c) for c in scales]
    labels = [_fmt(c) for c in scales]
    if gm["include_infinite_limit"]:
        mus.append(NodalMeasure.on_intervals(mesh, block, math.inf))
        labels.append("inf")
    if len(mus) < 2:
        raise ConfigError("gamma test needs at least two measures")
    rhs = [compile_expression(e) for e in gm["rhs_expressions"]]
    rep = gamma_sequence_test(G, mass_matrix(mesh), mus, rhs)
    header = "k,scale,z_diff," + ",".join(f"f{i + 1}_diff" for i in range(len(rhs)))
    rows = [(str(k), labels[k], rep.z_diff[k], *rep.f_diff[:, k]) for k in range(len(mus))]
    _write_csv(out / "gamma.csv", header, rows)
    payload = {"command": "gamma-test", "config": cfg, "rhs": gm["rhs_expressions"], "scales": labels, **rep.as_dict()}
    _write_json(out / "gamma.json", payload)
    return {"cauchy_consistent": rep.cauchy_consistent}


HANDLERS = {
    "assemble": cmd_assemble,
    "solve": cmd_solve,
    "capacity": cmd_capacity,
    "gamma-test": cmd_gamma_test,
    "reproduce-1d": cmd_reproduce_1d,
    "reproduce-spaces": cmd_reproduce_spaces,
    "reproduce-p0": cmd_reproduce_p0,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracap", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config; merged over the defaults (and the preset)")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--n", type=int, help="number of elements")
    parser.add_argument("--s", type=float, help="fractional order")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        preset = args.command if args.command.startswith("reproduce-") else None
        cfg = load_config(args.config, preset)
        if args.n is not None:
            if args.n < 2:
                raise ConfigError("--n must be at least 2")
            cfg["mesh"]["n"] = args.n
        if args.s is not None:
            cfg["space"]["s"] = args.s
        out = Path(args.out or cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"fracap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, QuadratureError, MeasureError, FloatingPointError) as exc:
        print(f"fracap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fracap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
