"""Command line interface: ``crvex study``, ``crvex solve``, ``crvex verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import fem
from .duality import audit
from .errors import ConvergenceError
from .mesh import build_criss_cross, load_mesh, refine_to, save_mesh
from .nfunction import ExponentField, discretize_exponent
from .manufactured import ManufacturedCase
from .solver import SolverConfig
from .study import AUDIT_TOL, StudyConfig, render, run_study, solve_level

SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


def _floats(text: str):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _solver_args(p):
    p.add_argument("--abs-tol", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--max-newton-iters", type=int, default=None)
    p.add_argument("--linear-solver", choices=("direct", "cg"), default=None)


def _solver_config(base: SolverConfig, args) -> SolverConfig:
    kw = {k: getattr(args, k) for k in SOLVER_KEYS if getattr(args, k, None) is not None}
    return SolverConfig(**{**base.__dict__, **kw})


def _load_json(path):
    return json.loads(Path(path).read_text()) if path else {}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crvex", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run the EOC study and write a CSV or Markdown report")
    st.add_argument("--config", help="JSON file with any of the flags below (underscored keys)")
    st.add_argument("--p-min", type=_floats, default=None)
    st.add_argument("--alpha", type=_floats, default=None)
    st.add_argument("--eps", type=_floats, default=None)
    st.add_argument("--delta", type=float, default=None)
    st.add_argument("--beta", type=float, default=None)
    st.add_argument("--levels", type=int, default=None)
    st.add_argument("--n0", type=int, default=None)
    st.add_argument("--format", choices=("csv", "markdown"), default=None)
    st.add_argument("--out", default=None)
    st.add_argument("--seed", type=int, default=None)
    st.add_argument("--workers", type=int, default=None)
    _solver_args(st)

    so = sub.add_parser("solve", help="solve one configuration and export mesh and fields")
    so.add_argument("--config", help="JSON file with any of the flags below (underscored keys)")
    so.add_argument("--p-min", type=float, default=None)
    so.add_argument("--alpha", type=float, default=None)
    so.add_argument("--eps", type=float, default=None)
    so.add_argument("--delta", type=float, default=None)
    so.add_argument("--beta", type=float, default=None)
    so.add_argument("--level", type=int, default=None)
    so.add_argument("--n0", type=int, default=None)
    so.add_argument("--out-dir", default=None)
    _solver_args(so)

    ve = sub.add_parser("verify", help="run the duality audit on fields exported by 'solve'")
    ve.add_argument("directory")
    ve.add_argument("--tol", type=float, default=AUDIT_TOL)
    return ap


def cmd_study(args) -> int:
    cfg = _load_json(args.config)
    config = StudyConfig.from_dict(cfg)
    over = {k: getattr(args, k) for k in ("p_min", "alpha", "eps", "delta", "beta", "levels",
                                          "n0", "format", "out", "seed", "workers")}
    over = {k: v for k, v in over.items() if v is not None}
    config = StudyConfig.from_dict({**config.as_dict(), **over,
                                    "solver": _solver_config(config.solver, args)})
    reports = run_study(config)
    text = render(reports, config.format)
    if config.out:
        Path(config.out).write_text(text)
    else:
        sys.stdout.write(text)
    ok = all(r.ok for r in reports)
    if not ok:
        print("study finished with failed solves or audits", file=sys.stderr)
    return 0 if ok else 1


SOLVE_DEFAULTS = dict(p_min=1.5, alpha=1.0, eps=1.0, delta=1e-4, beta=1.01, level=3, n0=2,
                      out_dir="crvex_solution")


def cmd_solve(args) -> int:
    cfg = {**SOLVE_DEFAULTS, **{k.replace("-", "_"): v for k, v in _load_json(args.config).items()}}
    solver_cfg = SolverConfig(**cfg.pop("solver", {}))
    for k in SOLVE_DEFAULTS:
        if getattr(args, k, None) is not None:
            cfg[k] = getattr(args, k)
    solver_cfg = _solver_config(solver_cfg, args)
    case = ManufacturedCase(ExponentField(cfg["p_min"], cfg["eps"], cfg["alpha"]),
                            cfg["delta"], cfg["beta"])
    mesh = refine_to(build_criss_cross(cfg["n0"]), cfg["level"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve_level(mesh, case, solver_cfg)
    except ConvergenceError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    save_mesh(mesh, out / "mesh.txt")
    fem.save_field(out / "u.txt", "CR", mesh.level, sol.u)
    fem.save_field(out / "z.txt", "RT0", mesh.level, sol.z.side_dofs())
    fem.save_field(out / "f_h.txt", "P0", mesh.level, sol.f_h)
    a = audit(mesh, sol.u, sol.z, sol.f_h, sol.exponents, case.delta)
    params = {"p_min": cfg["p_min"], "alpha": cfg["alpha"], "eps": cfg["eps"],
              "delta": cfg["delta"], "beta": cfg["beta"], "level": cfg["level"], "n0": cfg["n0"],
              "solver": solver_cfg.__dict__, "report": sol.report.as_dict(), "audit": a.as_dict()}
    (out / "params.json").write_text(json.dumps(params, indent=2) + "\n")
    print(json.dumps({"iterations": sol.report.iterations, "residual": sol.report.residual,
                      "relative_gap": a.relative_gap, "audit_passed": a.passed(AUDIT_TOL),
                      "out_dir": str(out)}))
    return 0 if a.passed(AUDIT_TOL) else 1


def cmd_verify(args) -> int:
    d = Path(args.directory)
    params = json.loads((d / "params.json").read_text())
    mesh = load_mesh(d / "mesh.txt", level=params["level"])
    tag_u, _, u = fem.load_field(d / "u.txt")
    tag_z, _, zs = fem.load_field(d / "z.txt")
    tag_f, _, f_h = fem.load_field(d / "f_h.txt")
    if (tag_u, tag_z, tag_f) != ("CR", "RT0", "P0"):
        print("unexpected field tags", file=sys.stderr)
        return 1
    if len(u) != mesh.n_sides or len(zs) != mesh.n_sides or len(f_h) != mesh.n_elements:
        print("field sizes do not match the mesh", file=sys.stderr)
        return 1
    p = ExponentField(params["p_min"], params["eps"], params["alpha"])
    ex = discretize_exponent(p, mesh)
    z = fem.RTField.from_side_dofs(mesh, zs)
    a = audit(mesh, u, z, f_h, ex, params["delta"])
    result = {k: float(v) for k, v in a.as_dict().items()}
    result["passed"] = a.passed(args.tol)
    print(json.dumps(result, indent=2))
    return 0 if result["passed"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    handler = {"study": cmd_study, "solve": cmd_solve, "verify": cmd_verify}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
