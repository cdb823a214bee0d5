"""Point-wise kernels of the (p, delta)-structured operator.

Every function is vectorised: ``q`` (the local exponent) and ``delta``
broadcast against the leading axes of ``a`` (vectors, shape (..., 2)) or
``t`` (non-negative reals).

    A(a)  = (delta + |a|)^(q-2) a
    F(a)  = (delta + |a|)^((q-2)/2) a
    F*(a) = (delta^(q-1) + |a|)^((q'-2)/2) a,        q' = q / (q-1)
    phi(t) = int_0^t (delta + s)^(q-2) s ds,          phi' = (delta + t)^(q-2) t
    phi_a(t) = phi evaluated with delta + a           (shifted N-function)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NumericalError

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 60
CONJ_RTOL = 1e-12
CONJ_MAXITER = 200


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(q <= 1.0):
        raise DomainError("exponent must exceed 1")
    return q


def _check_delta(delta):
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0.0):
        raise DomainError("delta must be non-negative")
    return delta


def conjugate_exponent(q):
    q = _check_q(q)
    return q / (q - 1.0)


def _norm(a):
    a = np.asarray(a, dtype=float)
    return a, np.sqrt(np.sum(a * a, axis=-1))


def _power_or_zero(base, expo, r):
    # base**expo where r > 0, 0 where r == 0 (the factor multiplies a zero vector)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(base, expo)
    return np.where(r > 0, out, 0.0)


def eval_A(q, delta, a):
    q, delta = _check_q(q), _check_delta(delta)
    a, r = _norm(a)
    return _power_or_zero(delta + r, q - 2.0, r)[..., None] * a


def eval_F(q, delta, a):
    q, delta = _check_q(q), _check_delta(delta)
    a, r = _norm(a)
    return _power_or_zero(delta + r, 0.5 * (q - 2.0), r)[..., None] * a


def eval_Fstar(q, delta, a):
    q, delta = _check_q(q), _check_delta(delta)
    qc = q / (q - 1.0)
    a, r = _norm(a)
    return _power_or_zero(np.power(delta, q - 1.0) + r, 0.5 * (qc - 2.0), r)[..., None] * a


def eval_DA(q, delta, a):
    """Jacobian of ``eval_A`` with respect to ``a``, shape (..., 2, 2).

    At ``a = 0`` the limit ``delta^(q-2) I`` is returned; this is singular
    for ``delta = 0, q < 2``.
    """
    q, delta = _check_q(q), _check_delta(delta)
    a, r = _norm(a)
    q, delta, r = np.broadcast_arrays(q, delta, r)
    if np.any((r == 0) & (delta == 0) & (q < 2)):
        raise DomainError("A is not differentiable at a = 0 for delta = 0, q < 2")
    s = delta + r
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.power(s, q - 2.0)
        g1 = (q - 2.0) * np.power(s, q - 3.0)
        ahat = np.where(r[..., None] > 0, a / r[..., None], 0.0)
    g = np.where((s == 0) & (q == 2.0), 1.0, g)
    g1r = np.where(r > 0, g1 * r, 0.0)
    eye = np.eye(2)
    return g[..., None, None] * eye + g1r[..., None, None] * (ahat[..., :, None] * ahat[..., None, :])


def eval_phi_prime(q, delta, t):
    q, delta = _check_q(q), _check_delta(delta)
    t = np.asarray(t, dtype=float)
    return _power_or_zero(delta + t, q - 2.0, t) * t


def _phi_series(q, delta, r):
    # delta^q * int_0^r (1+s)^(q-2) s ds, expanded binomially for r <= 1/2
    coef = np.ones_like(r)
    total = np.zeros_like(r)
    rk = r * r
    for k in range(_SERIES_TERMS):
        total = total + coef * rk / (k + 2.0)
        coef = coef * (q - 2.0 - k) / (k + 1.0)
        rk = rk * r
    return np.power(delta, q) * total


def eval_phi(q, delta, t):
    q, delta = _check_q(q), _check_delta(delta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    q, delta, t = np.broadcast_arrays(q, delta, t)
    out = np.empty(t.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(delta > 0, t / np.where(delta > 0, delta, 1.0), np.inf)
    small = r <= _SERIES_RADIUS
    if np.any(small):
        out[small] = _phi_series(q[small], delta[small], r[small])
    big = ~small
    if np.any(big):
        qb, db, tb = q[big], delta[big], t[big]
        s = db + tb
        out[big] = (np.power(s, qb) / qb - db * np.power(s, qb - 1.0) / (qb - 1.0)
                    - np.power(db, qb) / qb + np.power(db, qb) / (qb - 1.0))
    return out if out.ndim else float(out)


def _solve_phi_prime(q, delta, t):
    """s >= 0 with phi'(s) = t, by bracketed Newton (bisection fallback)."""
    s = np.zeros_like(t)
    pos = t > 0
    if not np.any(pos):
        return s
    q, d, t = q[pos], delta[pos], t[pos]
    lo = np.zeros_like(t)
    # power-law initial guess, then grow until it brackets the root from above
    big = t > np.power(d, q - 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        hi = np.where(big, np.power(t, 1.0 / (q - 1.0)), t * np.power(d, 2.0 - q))
    hi = np.clip(hi, 1e-300, 1e300)
    for _ in range(2100):
        short = eval_phi_prime(q, d, hi) < t
        if not np.any(short):
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
    x = hi.copy()
    done = np.zeros(t.shape, dtype=bool)
    for _ in range(CONJ_MAXITER):
        g = eval_phi_prime(q, d, x) - t
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        dg = np.power(d + x, q - 3.0) * (d + (q - 1.0) * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = g / dg
        xn = np.where(g == 0, x, x - step)
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        conv = (np.abs(xn - x) <= CONJ_RTOL * np.abs(xn)) | (g == 0)
        x = np.where(done, x, xn)
        done |= conv
        if np.all(done):
            break
    else:
        raise NumericalError("conjugate root finder did not converge")
    s[pos] = x
    return s


def eval_phi_conjugate(q, delta, t, return_argmax=False):
    """phi*(t) = sup_s (s t - phi(s)); optionally also the maximiser s*."""
    q, delta = _check_q(q), _check_delta(delta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    q, delta, t = (np.array(v, dtype=float) for v in np.broadcast_arrays(q, delta, t))
    qc = q / (q - 1.0)
    out = np.empty(t.shape)
    smax = np.empty(t.shape)
    zero = delta == 0
    if np.any(zero):
        tz = t[zero]
        out[zero] = np.power(tz, qc[zero]) / qc[zero]
        smax[zero] = np.power(tz, 1.0 / (q[zero] - 1.0))
    nz = ~zero
    if np.any(nz):
        s = _solve_phi_prime(q[nz], delta[nz], t[nz])
        smax[nz] = s
        out[nz] = s * t[nz] - eval_phi(q[nz], delta[nz], s)
    if out.ndim == 0:
        out, smax = float(out), float(smax)
    return (out, smax) if return_argmax else out


def eval_phi_shifted(q, delta, a, t):
    """phi_a(t); the shift adds to delta because phi_a'(t) = (delta+a+t)^(q-2) t."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise DomainError("shift must be non-negative")
    return eval_phi(q, np.asarray(delta, dtype=float) + a, t)


def eval_phi_shifted_conjugate(q, delta, a, t, return_argmax=False):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise DomainError("shift must be non-negative")
    return eval_phi_conjugate(q, np.asarray(delta, dtype=float) + a, t, return_argmax)


@dataclass(frozen=True)
class PhiKit:
    """The kernels above frozen at one exponent value and one delta."""

    q: float
    delta: float = 0.0

    def __post_init__(self):
        _check_q(self.q)
        _check_delta(self.delta)

    @property
    def q_conjugate(self) -> float:
        return self.q / (self.q - 1.0)

    def A(self, a):
        return eval_A(self.q, self.delta, a)

    def DA(self, a):
        return eval_DA(self.q, self.delta, a)

    def F(self, a):
        return eval_F(self.q, self.delta, a)

    def Fstar(self, a):
        return eval_Fstar(self.q, self.delta, a)

    def phi(self, t):
        return eval_phi(self.q, self.delta, t)

    def phi_prime(self, t):
        return eval_phi_prime(self.q, self.delta, t)

    def phi_conjugate(self, t):
        return eval_phi_conjugate(self.q, self.delta, t)

    def phi_shifted(self, a, t):
        return eval_phi_shifted(self.q, self.delta, a, t)

    def phi_shifted_conjugate(self, a, t):
        return eval_phi_shifted_conjugate(self.q, self.delta, a, t)


@dataclass(frozen=True)
class ExponentField:
    """p(x) = p_min + eps * |x - center|^alpha, or an arbitrary callable.

    ``func`` overrides the radial formula; it must return values >= p_min.
    """

    p_min: float
    eps: float = 0.0
    alpha: float = 1.0
    center: tuple = (0.0, 0.0)
    func: Callable | None = None

    def __post_init__(self):
        if not self.p_min > 1.0:
            raise DomainError("p_min must exceed 1")
        if self.eps < 0:
            raise DomainError("eps must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(x), dtype=float)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return self.p_min + self.eps * np.power(r, self.alpha)

    def conjugate(self, x):
        p = self(x)
        return p / (p - 1.0)

    def p_max(self, domain=((-1.0, 1.0), (-1.0, 1.0))) -> float:
        """Upper bound of p over a rectangle (attained at a corner for the radial form)."""
        (x0, x1), (y0, y1) = domain
        corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])
        if self.func is not None:
            xs = np.linspace(x0, x1, 201)
            ys = np.linspace(y0, y1, 201)
            X, Y = np.meshgrid(xs, ys)
            return float(np.max(self(np.column_stack([X.ravel(), Y.ravel()]))))
        c = np.asarray(self.center)
        far = max(np.linalg.norm(corners - c, axis=1))
        return float(self.p_min + self.eps * far ** self.alpha)

    def modulus(self, t):
        """Modulus-of-continuity bound eps * t^alpha of the radial form."""
        return self.eps * np.power(np.asarray(t, dtype=float), self.alpha)


@dataclass(frozen=True, eq=False)
class ElementExponents:
    p_h: np.ndarray  # one exponent value per element
    xi: np.ndarray  # the point of each element where p was sampled
    xi_rule: str = "barycenter"

    @property
    def p_h_conjugate(self) -> np.ndarray:
        return self.p_h / (self.p_h - 1.0)


def discretize_exponent(p: ExponentField, mesh, metrics=None) -> ElementExponents:
    """One-point discretisation p_h|_T = p(x_T) at element barycenters."""
    if metrics is not None:
        xi = np.asarray(metrics.x_T)
    else:
        xi = mesh.element_coords().mean(axis=1)
    p_h = np.asarray(p(xi), dtype=float)
    if np.any(p_h <= 1.0):
        raise DomainError("discretised exponent must exceed 1")
    p_h.setflags(write=False)
    return ElementExponents(p_h=p_h, xi=xi)
