"""Large-time counting statistics from the momentum-diagonal 2x2 determinant.

    F(lambda) = int dp/2pi  log det(1 + sin(lambda/2) M(p) nhat(p))

with ``M(p) = R [i sigma_y sin(phi) - 2 sin(phi/2)^2 (sin(lambda/2) + i sigma_x
cos(lambda/2))] R^dagger`` and ``R = exp(i mu sigma_x / 2)``.  The determinant
counts the charge gained by lead 1.  The Levitov-Lesovik closed form counts
charge moved from lead 1 to lead 2, so the two agree after ``lambda -> -lambda``.

Logarithms are continued along explicit piecewise-linear paths in the
complex lambda plane, starting from the principal value 0 at lambda = 0.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .baths import BathConfig, SpectralBlock2, occupation
from .errors import BranchPointError, ConfigError, QuadratureError
from .scattering import ModelParams, phase_shift, transmission_prob

__all__ = [
    "Direction",
    "CountingFields",
    "QuadratureSpec",
    "reduce_lambda",
    "m_matrix",
    "m_matrix_explicit",
    "integrand",
    "ll_integrand",
    "large_deviation",
    "levitov_lesovik_closed",
    "cumulant",
    "cumulant_integrand",
    "fluctuation_gap",
    "integrand_zeros",
    "integrate_line",
    "integrate_interval",
]

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


class Direction(str, enum.Enum):
    """Sign convention for the counted charge."""

    GAIN_LEAD1 = "gain_lead1"
    TRANSFER_1_TO_2 = "transfer_1_to_2"


def _direction(d) -> Direction:
    try:
        return Direction(d)
    except ValueError:
        raise ConfigError(f"unknown direction {d!r}") from None


@dataclass(frozen=True)
class CountingFields:
    """Counting parameter ``lam`` (complex) and measurement angle ``mu`` in [0, 2pi)."""

    lam: complex
    mu: float = 0.0

    def __post_init__(self):
        lam = complex(self.lam)
        if not (np.isfinite(lam.real) and np.isfinite(lam.imag)):
            raise ConfigError("lambda must be finite")
        mu = float(self.mu)
        if not np.isfinite(mu):
            raise ConfigError("mu must be finite")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu % (2 * np.pi))


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and truncation rule for integrals over the energy line."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 500
    window_factor: float = 40.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1 or self.window_factor <= 0:
            raise ConfigError("invalid quadrature subdivision or window settings")


def reduce_lambda(lam: complex) -> complex:
    """Shift ``Re lam`` into [-pi, pi] when it lies outside.

    The generating function of an integer-valued charge is 2pi-periodic, so
    this only selects the representative reached by continuation from 0.
    """
    lam = complex(lam)
    re = lam.real
    if abs(re) > np.pi:
        re = (re + np.pi) % (2 * np.pi) - np.pi
    return complex(re, lam.imag)


# -- 2x2 blocks ----------------------------------------------------------------

def _m_blocks(phi, lam, mu):
    """``M`` for broadcastable ``phi``, ``lam``, ``mu`` (trailing 2x2 axes)."""
    phi, lam, mu = np.broadcast_arrays(np.asarray(phi), np.asarray(lam, dtype=complex), np.asarray(mu))
    s2 = np.sin(0.5 * phi) ** 2
    inner = (1j * np.sin(phi)[..., None, None] * SY
             - 2 * s2[..., None, None] * (np.sin(0.5 * lam)[..., None, None] * I2
                                          + 1j * np.cos(0.5 * lam)[..., None, None] * SX))
    c, s = np.cos(0.5 * mu)[..., None, None], np.sin(0.5 * mu)[..., None, None]
    rot = c * I2 + 1j * s * SX
    rot_h = c * I2 - 1j * s * SX
    return rot @ inner @ rot_h


def m_matrix(p, fields: CountingFields, params: ModelParams) -> SpectralBlock2:
    """Large-time block ``M(p)`` of ``(e^theta - 1) / sin(lambda/2)``."""
    phi = phase_shift(p, params)
    return SpectralBlock2(p=p, m=_m_blocks(phi, fields.lam, fields.mu))


def m_matrix_explicit(p, fields: CountingFields, params: ModelParams) -> SpectralBlock2:
    """Component form of ``M(p)`` in terms of ``w_p`` and quarter-angle trig.

    With ``s_pm = sin(lambda/4 pm mu/2)``, ``c_pm = cos(lambda/4 pm mu/2)``::

        [[s+ c- w + c+ s- conj(w),    i c+ c- conj(w) - i s+ s- w],
         [i c+ c- w - i s+ s- conj(w), c+ s- w + s+ c- conj(w)]]

    This equals :func:`m_matrix` evaluated at ``-mu``; the two coincide at
    ``mu = 0`` and give identical determinants against ``nhat`` for any ``mu``.
    """
    from .scattering import w_coeff

    w = np.asarray(w_coeff(p, params))
    wb = np.conj(w)
    lam, mu = fields.lam, fields.mu
    sp, sm = np.sin(lam / 4 + mu / 2), np.sin(lam / 4 - mu / 2)
    cp, cm = np.cos(lam / 4 + mu / 2), np.cos(lam / 4 - mu / 2)
    m = np.empty(w.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = sp * cm * w + cp * sm * wb
    m[..., 0, 1] = 1j * cp * cm * wb - 1j * sp * sm * w
    m[..., 1, 0] = 1j * cp * cm * w - 1j * sp * sm * wb
    m[..., 1, 1] = cp * sm * w + sp * cm * wb
    return SpectralBlock2(p=p, m=m)


def _det_z(p, lam, mu, cfg, params):
    """``det(1 + sin(lam/2) M nhat)`` broadcast over ``lam`` (axis 0) and ``p``."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=complex)[:, None]
    phi = phase_shift(p, params)[None, :]
    m = _m_blocks(phi, lam, mu)
    n1 = occupation(p, 1, cfg)
    n2 = occupation(p, 2, cfg)
    a = 0.5 * (n1 + n2)
    d = 0.5 * (n1 - n2)
    nh = a[:, None, None] * I2 + d[:, None, None] * SX
    x = np.sin(0.5 * lam)[..., None, None] * (m @ nh[None])
    tr = x[..., 0, 0] + x[..., 1, 1]
    det = x[..., 0, 0] * x[..., 1, 1] - x[..., 0, 1] * x[..., 1, 0]
    return 1.0 + tr + det


def _ll_z(p, lam, cfg, params):
    """LL argument ``1 + T [A (e^{i lam} - 1) + B (e^{-i lam} - 1)]``."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=complex)[:, None]
    t = transmission_prob(p, params)
    n1 = occupation(p, 1, cfg)
    n2 = occupation(p, 2, cfg)
    a = n1 * (1 - n2)
    b = n2 * (1 - n1)
    return 1.0 + t * (a * (np.exp(1j * lam) - 1) + b * (np.exp(-1j * lam) - 1))


# -- branch tracking --------------------------------------------------------------

def _path_at(waypoints, s):
    """Point at parameter ``s`` in [0, nseg] along the piecewise-linear path."""
    w = np.asarray(waypoints, dtype=complex)
    k = np.minimum(np.floor(s).astype(int), w.size - 2)
    return w[k] + (w[k + 1] - w[k]) * (s - k)


def _tracked_log(zfun: Callable, waypoints: Sequence[complex], p, what="integrand"):
    """Continue ``log z`` from ``z = 1`` at the first waypoint to the last.

    ``zfun(lams, p)`` returns an array of shape ``(len(lams), len(p))``.
    Steps along the path are bisected locally until each turns the phase
    by less than pi/4 (at most 60 rounds).  A straight step past a simple
    zero turns by less than pi, so only steps within 10% of pi are
    rejected as ambiguous.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if all(w == waypoints[0] for w in waypoints):
        return np.zeros(p.size, dtype=complex)
    nseg = len(waypoints) - 1
    s = np.linspace(0.0, nseg, 16 * nseg + 1)
    z = zfun(_path_at(waypoints, s), p)
    for _ in range(60):
        if np.any(z == 0):
            k, j = np.unravel_index(np.argmin(np.abs(z)), z.shape)
            raise BranchPointError(f"{what} vanishes at p={p[j]!r}, lambda={_path_at(waypoints, s[k:k+1])[0]!r}")
        step = np.angle(z[1:] / z[:-1])
        bad = np.flatnonzero(np.max(np.abs(step), axis=1) >= np.pi / 4)
        if bad.size == 0:
            break
        mid = 0.5 * (s[bad] + s[bad + 1])
        zm = zfun(_path_at(waypoints, mid), p)
        s = np.insert(s, bad + 1, mid)
        z = np.insert(z, bad + 1, zm, axis=0)
    step = np.angle(z[1:] / z[:-1])
    if np.max(np.abs(step), initial=0.0) >= 0.9 * np.pi:
        raise BranchPointError(f"{what}: phase not resolved along the lambda path")
    return np.log(np.abs(z[-1])) + 1j * step.sum(axis=0)


def _waypoints(lam, path):
    if path is None:
        return [0j, lam]
    pts = [complex(w) for w in path]
    if pts[0] != 0 or abs(pts[-1] - lam) > 1e-15:
        raise ConfigError("lambda path must start at 0 and end at lambda")
    return pts


def integrand(p, fields: CountingFields, cfg: BathConfig, params: ModelParams,
              direction=Direction.GAIN_LEAD1, path=None):
    """``log det(1 + sin(lam/2) M(p) nhat(p))`` continued along ``path``.

    Parameters
    ----------
    p : float or array
    fields : CountingFields
    direction : Direction
        ``gain_lead1`` is the natural convention of the determinant;
        ``transfer_1_to_2`` evaluates it at ``-lam``.
    path : sequence of complex, optional
        Waypoints from 0 to ``lam``; the straight segment by default.
    """
    sign = 1.0 if _direction(direction) is Direction.GAIN_LEAD1 else -1.0
    lam = sign * fields.lam
    wp = _waypoints(lam, None if path is None else [sign * w for w in path])
    out = _tracked_log(lambda l, q: _det_z(q, l, fields.mu, cfg, params), wp, p)
    return out if np.ndim(p) else complex(out[0])


def ll_integrand(p, fields: CountingFields, cfg: BathConfig, params: ModelParams,
                 direction=Direction.TRANSFER_1_TO_2, path=None):
    """Levitov-Lesovik integrand ``log(1 + T[A(e^{i lam}-1) + B(e^{-i lam}-1)])``.

    ``A = n1 (1 - n2)``, ``B = n2 (1 - n1)`` and ``T`` the transmission
    probability; ``transfer_1_to_2`` is the natural convention here.
    """
    sign = 1.0 if _direction(direction) is Direction.TRANSFER_1_TO_2 else -1.0
    lam = sign * fields.lam
    wp = _waypoints(lam, None if path is None else [sign * w for w in path])
    out = _tracked_log(lambda l, q: _ll_z(q, l, cfg, params), wp, p)
    return out if np.ndim(p) else complex(out[0])


# -- quadrature -----------------------------------------------------------------

def _window(cfg: BathConfig, params: ModelParams, quad: QuadratureSpec):
    scale = max(cfg.t_max, params.gamma)
    lo = min(cfg.mu1, cfg.mu2) - quad.window_factor * scale
    hi = max(cfg.mu1, cfg.mu2) + quad.window_factor * scale
    return lo, hi, scale


def integrate_line(fun: Callable[[float], complex], cfg: BathConfig, params: ModelParams,
                   quad: QuadratureSpec, breakpoints=()) -> complex:
    """``int dp / 2pi fun(p)`` over the energy line, truncated adaptively.

    The window starts at the thermal window padded by ``window_factor``
    times ``max(T, Gamma)`` and is widened until ``|fun|`` at both ends is
    below ``abs_tol``.
    """
    lo, hi, scale = _window(cfg, params, quad)
    for _ in range(20):
        if abs(fun(lo)) < quad.abs_tol:
            break
        lo -= quad.window_factor * scale
    else:
        raise QuadratureError(f"integrand does not decay below {lo!r}")
    for _ in range(20):
        if abs(fun(hi)) < quad.abs_tol:
            break
        hi += quad.window_factor * scale
    else:
        raise QuadratureError(f"integrand does not decay above {hi!r}")

    pts = (cfg.mu1, cfg.mu2, params.epsilon, *breakpoints)
    return integrate_interval(fun, lo, hi, quad, pts) / (2 * np.pi)


def integrate_interval(fun: Callable[[float], complex], lo: float, hi: float,
                       quad: QuadratureSpec, points=()) -> complex:
    """``int_lo^hi fun(p) dp`` by adaptive Gauss-Kronrod on (re, im).

    Interior ``points`` become subdivision breakpoints.  The final
    subinterval contributions are summed in position order with compensated
    summation, so the result does not depend on evaluation order.
    """
    pts = sorted({float(x) for x in points if lo < x < hi})

    def f2(p):
        v = fun(p)
        return np.array([v.real, v.imag])

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err, info = integrate.quad_vec(f2, lo, hi, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                                                limit=quad.max_subdivisions, points=pts or None,
                                                full_output=True)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"no convergence on [{lo!r}, {hi!r}]: {exc}") from None
    if not info.success:
        worst = info.intervals[np.argmax(info.errors)]
        raise QuadratureError(f"no convergence, worst subinterval {tuple(worst)!r}: {info.message}")
    order = np.argsort(info.intervals[:, 0])
    total_re = [info.integrals[i][0] for i in order]
    total_im = [info.integrals[i][1] for i in order]
    return complex(math.fsum(total_re), math.fsum(total_im))


def large_deviation(fields: CountingFields, cfg: BathConfig, params: ModelParams,
                    quad: QuadratureSpec = QuadratureSpec(), direction=Direction.GAIN_LEAD1,
                    path=None) -> complex:
    """``F(lambda)`` from the 2x2 determinant integrand.

    ``Re lambda`` outside [-pi, pi] is first reduced by a multiple of 2pi.
    """
    lam = reduce_lambda(fields.lam) if path is None else fields.lam
    f = CountingFields(lam, fields.mu)
    if lam == 0:
        return 0j
    return integrate_line(lambda p: integrand(p, f, cfg, params, direction, path), cfg, params, quad)


def levitov_lesovik_closed(fields: CountingFields, cfg: BathConfig, params: ModelParams,
                           quad: QuadratureSpec = QuadratureSpec(),
                           direction=Direction.TRANSFER_1_TO_2, path=None) -> complex:
    """``F(lambda)`` from the Levitov-Lesovik closed form."""
    lam = reduce_lambda(fields.lam) if path is None else fields.lam
    f = CountingFields(lam, fields.mu)
    if lam == 0:
        return 0j
    return integrate_line(lambda p: ll_integrand(p, f, cfg, params, direction, path), cfg, params, quad)


# -- cumulants --------------------------------------------------------------------

def cumulant_integrand(k: int, p, cfg: BathConfig, params: ModelParams,
                       direction=Direction.TRANSFER_1_TO_2):
    """Analytic integrands of the first two cumulants (``k`` in {1, 2})."""
    t = transmission_prob(p, params)
    n1 = occupation(p, 1, cfg)
    n2 = occupation(p, 2, cfg)
    if k == 1:
        sign = 1.0 if _direction(direction) is Direction.TRANSFER_1_TO_2 else -1.0
        return sign * t * (n1 - n2)
    if k == 2:
        return t * (n1 + n2 - 2 * n1 * n2) - t**2 * (n1 - n2) ** 2
    raise ConfigError("analytic integrands exist for k = 1, 2 only")


def integrand_zeros(p, cfg: BathConfig, params: ModelParams, direction=Direction.TRANSFER_1_TO_2):
    """Zeros in ``lambda`` of the integrand argument at each ``p``.

    In ``u = e^{i lambda}`` (transfer convention) the argument is
    ``(T A u^2 + (1 - T(A + B)) u + T B) / u``; returns an array of shape
    ``(len(p), 2)`` with ``nan`` where a root is absent.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    t = transmission_prob(p, params)
    n1 = occupation(p, 1, cfg)
    n2 = occupation(p, 2, cfg)
    a, b = t * n1 * (1 - n2), t * n2 * (1 - n1)
    c1 = 1 - t * (n1 + n2 - 2 * n1 * n2)
    out = np.full((p.size, 2), np.nan + 0j)
    for i in range(p.size):
        if b[i] == 0 and a[i] == 0:
            continue
        roots = np.roots([a[i], c1[i], b[i]]) if a[i] != 0 else np.array([-b[i] / c1[i]])
        roots = roots[roots != 0]
        lam = -1j * np.log(roots.astype(complex))
        out[i, : lam.size] = lam
    if _direction(direction) is Direction.GAIN_LEAD1:
        out = -out
    return out


def _cauchy_radius(cfg, params, quad):
    lo, hi, _ = _window(cfg, params, quad)
    z = integrand_zeros(np.linspace(lo, hi, 4001), cfg, params)
    z = z[np.isfinite(z)]
    if z.size == 0:
        return 1.0
    # periodic images of each zero
    dist = np.min(np.abs(z[:, None] + 2 * np.pi * np.arange(-2, 3)[None, :]))
    return min(1.0, 0.5 * float(dist))


def cumulant(k: int, cfg: BathConfig, params: ModelParams, quad: QuadratureSpec = QuadratureSpec(),
             direction=Direction.TRANSFER_1_TO_2, radius=None, n_points: int = 32) -> float:
    """``d^k F / d(i lambda)^k`` at 0.

    ``k = 1, 2`` integrate analytic derivatives; higher orders use the
    trapezoidal Cauchy formula on the circle ``|lambda| = radius``.
    """
    k = int(k)
    if not 1 <= k <= 6:
        raise ConfigError("cumulant order must be between 1 and 6")
    direction = _direction(direction)
    if k <= 2:
        fun = lambda p: float(cumulant_integrand(k, p, cfg, params, direction))  # noqa: E731
        return integrate_line(fun, cfg, params, quad).real
    r = _cauchy_radius(cfg, params, quad) if radius is None else float(radius)
    n = max(int(n_points), 2 * k + 8)
    theta = 2 * np.pi * np.arange(n) / n
    vals = []
    for th in theta:
        s = r * np.exp(1j * th)
        lam = -1j * s
        vals.append(levitov_lesovik_closed(CountingFields(lam), cfg, params, quad, direction))
    vals = np.asarray(vals)
    coef = np.sum(vals * np.exp(-1j * k * theta)) / n
    return float((math.factorial(k) * coef / r**k).real)


def fluctuation_gap(lam: complex, cfg: BathConfig, params: ModelParams,
                    quad: QuadratureSpec = QuadratureSpec(), direction=Direction.GAIN_LEAD1) -> float:
    """``|F(lam) - F(lam')|`` with ``lam' = -lam - i(mu1 - mu2)/T`` (gain_lead1).

    Requires equal temperatures.  Both values are continued along straight
    paths from 0 after reducing ``Re lam`` into [-pi, pi].  In the
    transfer_1_to_2 convention the shift is ``+i(mu1 - mu2)/T``.
    """
    if cfg.beta1 != cfg.beta2:
        raise ConfigError("fluctuation relation needs beta1 == beta2")
    if math.isinf(cfg.beta1):
        raise ConfigError("fluctuation relation needs a finite temperature")
    direction = _direction(direction)
    shift = (cfg.mu1 - cfg.mu2) * cfg.beta1
    if direction is Direction.GAIN_LEAD1:
        shift = -shift
    lam = reduce_lambda(lam)
    partner = -lam + 1j * shift
    f = large_deviation(CountingFields(lam), cfg, params, quad, direction)
    g = large_deviation(CountingFields(partner), cfg, params, quad, direction)
    return float(abs(f - g))
