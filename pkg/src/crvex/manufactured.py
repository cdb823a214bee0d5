"""Manufactured solution u(x) = d(x) |x|^beta on (-1, 1)^2 and error functionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import DomainError
from .mesh import Triangulation
from .nfunction import ElementExponents, ExponentField, eval_A, eval_F, eval_Fstar


@dataclass(frozen=True)
class ManufacturedCase:
    exponent: ExponentField = field(default_factory=lambda: ExponentField(1.5, 1.0, 1.0))
    delta: float = 1e-4
    beta: float = 1.01
    cutoff: bool = True  # False drops d(x); used for symmetry checks

    def __post_init__(self):
        if self.beta <= 1.0:
            raise DomainError("beta must exceed 1 for a bounded gradient")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self._d(x) * np.power(r, self.beta)

    def _d(self, x):
        if not self.cutoff:
            return np.ones(x.shape[:-1])
        return (1.0 - x[..., 0] ** 2) * (1.0 - x[..., 1] ** 2)

    def _grad_d(self, x):
        if not self.cutoff:
            return np.zeros_like(x)
        return np.stack([-2.0 * x[..., 0] * (1.0 - x[..., 1] ** 2),
                         -2.0 * x[..., 1] * (1.0 - x[..., 0] ** 2)], axis=-1)

    def grad_u(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, self.beta * np.power(r, self.beta - 2.0), 0.0)
        return (self._grad_d(x) * np.power(r, self.beta)[..., None]
                + (self._d(x) * radial)[..., None] * x)

    def flux(self, x):
        """z(x) = A(x, grad u(x)) with the continuous exponent."""
        x = np.asarray(x, dtype=float)
        return eval_A(self.exponent(x), self.delta, self.grad_u(x))

    def load(self, x, step=None):
        """f = -div z by central differences of the closed-form flux."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0.0):
            raise DomainError("the load is not evaluated at the origin")
        h = np.maximum(1e-6, 1e-7 * r) if step is None else np.broadcast_to(step, r.shape)
        h = np.asarray(h)[..., None]
        e1 = np.zeros(x.shape)
        e1[..., 0] = 1.0
        e2 = np.zeros(x.shape)
        e2[..., 1] = 1.0
        dz1 = (self.flux(x + h * e1)[..., 0] - self.flux(x - h * e1)[..., 0]) / (2.0 * h[..., 0])
        dz2 = (self.flux(x + h * e2)[..., 1] - self.flux(x - h * e2)[..., 1]) / (2.0 * h[..., 0])
        return -(dz1 + dz2)


def eval_exact(case: ManufacturedCase, x):
    """(u, grad u, z) at the points ``x``."""
    return case.u(x), case.grad_u(x), case.flux(x)


def eval_load(case: ManufacturedCase, x, step=None):
    return case.load(x, step)


def error_F(mesh: Triangulation, grad_h, case: ManufacturedCase, exponents: ElementExponents,
            quad: fem.SimplexQuadrature | None = None) -> float:
    """|| F_h(grad_h u_h) - F_h(grad u) ||^2 with element-wise constant grad_h."""
    quad = quad or fem.triangle_rule(8)
    pts = quad.points(mesh)
    q = exponents.p_h[:, None]
    Fh = eval_F(q, case.delta, np.asarray(grad_h)[:, None, :])
    Fu = eval_F(q, case.delta, case.grad_u(pts))
    return float(np.sum(quad.integrate(mesh, np.sum((Fh - Fu) ** 2, axis=-1))))


def error_Fstar(z_h: fem.RTField, case: ManufacturedCase, exponents: ElementExponents,
                quad: fem.SimplexQuadrature | None = None) -> float:
    """|| F*_h(z_h) - F*_h(z) ||^2 with z_h evaluated point-wise."""
    quad = quad or fem.triangle_rule(8)
    mesh = z_h.mesh
    pts = quad.points(mesh)
    q = exponents.p_h[:, None]
    Fh = eval_Fstar(q, case.delta, z_h.evaluate_bary(quad.bary))
    Fz = eval_Fstar(q, case.delta, case.flux(pts))
    return float(np.sum(quad.integrate(mesh, np.sum((Fh - Fz) ** 2, axis=-1))))
