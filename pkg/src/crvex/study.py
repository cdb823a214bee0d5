"""Convergence studies for the manufactured solution on red-refined criss-cross meshes."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import fem
from .duality import DualityAudit, audit, marini_flux
from .errors import ConvergenceError
from .manufactured import ManufacturedCase, error_F, error_Fstar
from .mesh import Triangulation, build_criss_cross, red_refine
from .nfunction import ElementExponents, ExponentField, discretize_exponent
from .solver import SolveReport, SolverConfig, cr_system, newton_solve, prolong_cr

log = logging.getLogger(__name__)

AUDIT_TOL = 1e-8


def eoc(errors, hs, power: float = 1.0):
    """log(e_k / e_{k-1}) / (power * log(h_k / h_{k-1})) per level.

    ``power`` is the power of the norm contained in ``errors``: with squared
    norms and power=2 the result is the order of the norm itself. The first
    entry, and any entry involving a non-positive error, is None.
    """
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs):
        raise ValueError("errors and hs must have equal length")
    if len(errors) < 2:
        raise ValueError("at least two levels are needed")
    out = [None]
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        if not (e0 > 0 and e1 > 0) or hs[k] == hs[k - 1]:
            out.append(None)
            continue
        out.append(math.log(e1 / e0) / (power * math.log(hs[k] / hs[k - 1])))
    return out


@dataclass(frozen=True)
class StudyConfig:
    p_min: tuple = (1.5, 2.0, 2.5)
    alpha: tuple = (0.1, 0.25, 0.5, 1.0)
    eps: tuple = (1.0,)
    delta: float = 1e-4
    beta: float = 1.01
    levels: int = 6
    n0: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    format: str = "csv"
    out: str | None = None
    seed: int = 0
    quad_degree: int = 8
    workers: int = 1

    def __post_init__(self):
        for name in ("p_min", "alpha", "eps"):
            object.__setattr__(self, name, tuple(float(v) for v in _as_tuple(getattr(self, name))))
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        if self.n0 < 1:
            raise ValueError("n0 must be at least 1")
        if any(p <= 1.0 for p in self.p_min):
            raise ValueError("p_min values must exceed 1")
        if any(a <= 0.0 or a > 1.0 for a in self.alpha):
            raise ValueError("alpha values must lie in (0, 1]")
        if any(e < 0.0 for e in self.eps):
            raise ValueError("eps values must be non-negative")
        if self.delta < 0.0:
            raise ValueError("delta must be non-negative")
        if self.beta <= 1.0:
            raise ValueError("beta must exceed 1")
        if self.format not in ("csv", "markdown"):
            raise ValueError("format must be 'csv' or 'markdown'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def triples(self):
        """(p_min, alpha, eps) in table order: eps, then alpha, then p_min."""
        return [(p, a, e) for e, a, p in itertools.product(self.eps, self.alpha, self.p_min)]

    def case(self, p_min: float, alpha: float, eps: float) -> ManufacturedCase:
        return ManufacturedCase(ExponentField(p_min, eps, alpha), self.delta, self.beta)

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = {k.replace("-", "_"): v for k, v in d.items()}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("solver"), dict):
            d["solver"] = SolverConfig(**d["solver"])
        return cls(**d)

    def as_dict(self) -> dict:
        d = asdict(self)
        for name in ("p_min", "alpha", "eps"):
            d[name] = list(d[name])
        return d


def _as_tuple(v):
    if isinstance(v, str):
        return tuple(float(t) for t in v.split(",") if t.strip())
    if np.ndim(v) == 0:
        return (v,)
    return tuple(v)


@dataclass
class LevelSolution:
    mesh: Triangulation
    exponents: ElementExponents
    f_h: np.ndarray
    u: np.ndarray
    z: fem.RTField
    report: SolveReport


def solve_level(mesh: Triangulation, case: ManufacturedCase, solver: SolverConfig | None = None,
                u0=None, quad: fem.SimplexQuadrature | None = None) -> LevelSolution:
    """Discretise, solve, and reconstruct the flux on one mesh."""
    quad = quad or fem.triangle_rule(8)
    ex = discretize_exponent(case.exponent, mesh)
    f_h = fem.l2_project_pc(mesh, case.load, quad)
    u, rep = newton_solve(cr_system(mesh, ex, case.delta, f_h), solver, u0)
    return LevelSolution(mesh, ex, f_h, u, marini_flux(mesh, u, f_h, ex, case.delta), rep)


@dataclass
class LevelRecord:
    level: int
    n_elements: int
    n_sides: int
    h: float
    e_F: float
    e_Fstar: float
    eoc_F: float | None
    eoc_Fstar: float | None
    newton_its: int
    newton_res: float
    converged: bool
    audit: DualityAudit

    @property
    def audit_passed(self) -> bool:
        return self.audit.passed(AUDIT_TOL)


@dataclass
class ConvergenceReport:
    p_min: float
    alpha: float
    eps: float
    delta: float
    beta: float
    levels: list = field(default_factory=list)
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None and all(r.converged and r.audit_passed for r in self.levels)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.levels]


def run_case(p_min: float, alpha: float, eps: float, config: StudyConfig) -> ConvergenceReport:
    case = config.case(p_min, alpha, eps)
    quad = fem.triangle_rule(config.quad_degree)
    rep = ConvergenceReport(p_min, alpha, eps, config.delta, config.beta)
    mesh = build_criss_cross(config.n0)
    u = None
    errs_F, errs_Fs, hs = [], [], []
    for k in range(1, config.levels + 1):
        coarse, mesh = mesh, red_refine(mesh)
        u0 = None if u is None else prolong_cr(coarse, mesh, u)
        try:
            sol = solve_level(mesh, case, config.solver, u0, quad)
        except ConvergenceError as exc:
            r = exc.report
            rep.failure = f"level {k}: {exc} (residual {r.residual:.3e} after {r.iterations} its)"
            log.warning("p_min=%g alpha=%g eps=%g: %s", p_min, alpha, eps, rep.failure)
            break
        u = sol.u
        g = fem.cr_gradient(mesh, u)
        errs_F.append(error_F(mesh, g, case, sol.exponents, quad))
        errs_Fs.append(error_Fstar(sol.z, case, sol.exponents, quad))
        hs.append(float(mesh.side_lengths().max()))
        # errors are squared norms; report the order of the norm
        eF = eoc(errs_F, hs, power=2.0)[-1] if k > 1 else None
        eFs = eoc(errs_Fs, hs, power=2.0)[-1] if k > 1 else None
        rep.levels.append(LevelRecord(
            level=k, n_elements=mesh.n_elements, n_sides=mesh.n_sides, h=hs[-1],
            e_F=errs_F[-1], e_Fstar=errs_Fs[-1], eoc_F=eF, eoc_Fstar=eFs,
            newton_its=sol.report.iterations, newton_res=sol.report.residual,
            converged=sol.report.converged,
            audit=audit(mesh, u, sol.z, sol.f_h, sol.exponents, case.delta)))
        log.info("p_min=%g alpha=%g eps=%g level %d: e_F=%.4e e_F*=%.4e its=%d",
                 p_min, alpha, eps, k, errs_F[-1], errs_Fs[-1], sol.report.iterations)
    return rep


def _run_case_args(args):
    return run_case(*args)


def run_study(config: StudyConfig) -> list:
    """One ConvergenceReport per (p_min, alpha, eps) triple, in table order."""
    jobs = [(p, a, e, config) for p, a, e in config.triples()]
    if config.workers == 1 or len(jobs) == 1:
        return [run_case(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_run_case_args, jobs))


# ---------------------------------------------------------------- output

CSV_COLUMNS = ("p_min", "alpha", "eps", "delta", "beta", "level", "n_elements", "h",
               "e_F", "e_Fstar", "eoc_F", "eoc_Fstar", "newton_its", "newton_res", "converged",
               "gap", "rel_gap", "div_res", "proj_res", "jump_res", "fy_res", "audit_passed",
               "status")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12e}"


def report_rows(reports) -> list:
    rows = []
    for rep in reports:
        head = [rep.p_min, rep.alpha, rep.eps, rep.delta, rep.beta]
        for r in rep.levels:
            a = r.audit
            rows.append(head + [r.level, r.n_elements, r.h, r.e_F, r.e_Fstar, r.eoc_F, r.eoc_Fstar,
                                r.newton_its, r.newton_res, r.converged, a.duality_gap,
                                a.relative_gap, a.div_residual, a.projection_residual,
                                a.normal_jump_residual, a.fenchel_young_residual,
                                r.audit_passed, "ok"])
        if rep.failure is not None:
            rows.append(head + [None] * (len(CSV_COLUMNS) - 6) + [f"failed: {rep.failure}"])
    return rows


def to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report_rows(reports):
        w.writerow([v if isinstance(v, str) else _num(v) for v in row])
    return buf.getvalue()


def to_markdown(reports) -> str:
    """EOC tables with rows (alpha, k) and one column per p_min, per eps and error."""
    out = []
    for eps in sorted({r.eps for r in reports}, reverse=True):
        group = [r for r in reports if r.eps == eps]
        pmins = sorted({r.p_min for r in group})
        alphas = sorted({r.alpha for r in group})
        levels = sorted({lv.level for r in group for lv in r.levels if lv.level > 1})
        lookup = {(r.p_min, r.alpha): r for r in group}
        for key, title in (("eoc_F", "EOC_k(e_F)"), ("eoc_Fstar", "EOC_k(e_F*)")):
            out.append(f"### {title}, eps = {eps:g}, delta = {group[0].delta:g}\n")
            out.append("| alpha | k | " + " | ".join(f"p_min = {p:g}" for p in pmins) + " |")
            out.append("|---|---|" + "---|" * len(pmins))
            for a in alphas:
                for k in levels:
                    cells = []
                    for p in pmins:
                        rep = lookup.get((p, a))
                        rec = next((lv for lv in rep.levels if lv.level == k), None) if rep else None
                        val = getattr(rec, key) if rec is not None else None
                        cells.append("-" if val is None else f"{val:.3f}")
                    out.append(f"| {a:g} | {k} | " + " | ".join(cells) + " |")
            out.append("")
    failed = [r for r in reports if r.failure]
    if failed:
        out.append("Failures:\n")
        out += [f"- p_min={r.p_min:g}, alpha={r.alpha:g}, eps={r.eps:g}: {r.failure}" for r in failed]
        out.append("")
    return "\n".join(out)


def render(reports, fmt: str = "csv") -> str:
    if fmt == "csv":
        return to_csv(reports)
    if fmt == "markdown":
        return to_markdown(reports)
    raise ValueError(f"unknown format {fmt!r}")


def with_overrides(config: StudyConfig, **kw) -> StudyConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
