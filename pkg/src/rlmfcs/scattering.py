"""Scattering data of the resonant level, finite-L quantization, spread impurity.

Units: Fermi velocity 1, so momenta and energies coincide.  The resolved
impurity couples the even lead channel to the dot with amplitude ``tau``;
the odd channel is free.

The even-sector scattering factor is

    v_p = (Gamma + i(p - eps)) / (-Gamma + i(p - eps)),   Gamma = tau**2 / 2,

and ``w_p = v_p - 1``.  An even eigenfunction is ``e^{ipx}`` for ``x < 0``
and ``v_p e^{ipx}`` for ``x > 0``, with dot amplitude ``i w_p / tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericalError, QuantizationError

__all__ = [
    "ModelParams",
    "MollifierSpec",
    "QuantizedSpectrum",
    "SpreadReport",
    "phase_factor",
    "w_coeff",
    "phase_shift",
    "transmission_prob",
    "basis_function",
    "even_norm2",
    "solve_quantization",
    "odd_spectrum",
    "overlap_ee",
    "mollifier_Phi",
    "mollifier_inner",
    "mollifier_c",
    "spread_phase",
    "spread_limit_check",
]


@dataclass(frozen=True)
class ModelParams:
    """Dot coupling ``tau`` and level position ``epsilon``."""

    tau: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be positive and finite, got {self.tau!r}")
        if not np.isfinite(self.epsilon):
            raise ConfigError(f"epsilon must be finite, got {self.epsilon!r}")

    @property
    def gamma(self) -> float:
        """Half width of the resonance, tau**2 / 2."""
        return 0.5 * self.tau**2

    @property
    def b(self) -> complex:
        """Complex decay constant of the dot amplitude."""
        return complex(self.gamma, self.epsilon)


def phase_factor(p, params: ModelParams):
    """Even-channel scattering factor ``v_p`` (unit modulus)."""
    d = np.asarray(p, dtype=float) - params.epsilon
    g = params.gamma
    return (g + 1j * d) / (-g + 1j * d)


def w_coeff(p, params: ModelParams):
    """``w_p = v_p - 1 = tau**2 / (-Gamma + i(p - eps))``."""
    d = np.asarray(p, dtype=float) - params.epsilon
    return params.tau**2 / (-params.gamma + 1j * d)


def phase_shift(p, params: ModelParams):
    """Phase ``phi_p`` in (0, 2 pi) with ``exp(i phi_p) = v_p``.

    Monotone increasing in ``p``; equals pi on resonance.
    """
    d = np.asarray(p, dtype=float) - params.epsilon
    return np.pi + 2.0 * np.arctan(d / params.gamma)


def transmission_prob(p, params: ModelParams):
    """Transmission probability ``|w_p / 2|**2 = sin(phi_p / 2)**2``.

    A Lorentzian of half width ``Gamma`` centred on the level.
    """
    d = np.asarray(p, dtype=float) - params.epsilon
    g2 = params.gamma**2
    return g2 / (g2 + d * d)


def basis_function(p, x, params: ModelParams):
    """Even scattering state ``e_p(x)``.

    ``exp(ipx)`` to the left of the impurity, ``v_p exp(ipx)`` to the right,
    and the symmetric value ``(1 + v_p) / 2`` exactly at ``x = 0``.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    v = phase_factor(p, params)
    plane = np.exp(1j * p * x)
    return np.where(x < 0, plane, np.where(x > 0, v * plane, 0.5 * (1.0 + v)))


def even_norm2(p, L: float, params: ModelParams):
    """Squared norm ``2L + |w_p|**2 / tau**2`` of the unnormalised even state."""
    w = w_coeff(p, params)
    return 2.0 * L + np.abs(w) ** 2 / params.tau**2


@dataclass(frozen=True)
class QuantizedSpectrum:
    """Allowed momenta of one parity sector on the segment [-L, L].

    Attributes
    ----------
    L : float
        Half length of the system.
    momenta : ndarray
        Sorted momenta inside the window.
    sector : {"even", "odd"}
    norms : ndarray
        Squared norms of the unnormalised eigenfunctions.
    flagged : tuple of (float, float)
        Intervals ``[(2k-1) pi/2L, (2k+1) pi/2L]`` holding two roots.
    """

    L: float
    momenta: np.ndarray
    sector: str
    norms: np.ndarray
    flagged: tuple = field(default=())

    def __post_init__(self):
        if self.sector not in ("even", "odd"):
            raise ConfigError(f"unknown sector {self.sector!r}")
        for arr in (self.momenta, self.norms):
            arr.setflags(write=False)

    def __len__(self):
        return self.momenta.size

    def to_rows(self):
        """Rows ``(sector, p, norm2)`` for CSV export."""
        return [(self.sector, float(p), float(n)) for p, n in zip(self.momenta, self.norms)]


def _check_size(L, window):
    if not (np.isfinite(L) and L > 0):
        raise ConfigError(f"L must be positive, got {L!r}")
    if not (np.isfinite(window) and window > 0):
        raise ConfigError(f"window must be positive, got {window!r}")


def solve_quantization(L: float, params: ModelParams, window: float) -> QuantizedSpectrum:
    """Even-sector momenta solving ``exp(2ipL) = conj(v_p)`` in ``[-window, window]``.

    The condition is ``f(p) = 2pL + phi_p = 2 pi m``.  Since ``phi_p`` lies in
    (0, 2 pi) and increases with ``p``, ``f`` is strictly increasing and the
    root with index ``m`` sits inside ``((m-1) pi/L, m pi/L)``.  All roots are
    refined at once by vectorised bisection.
    """
    _check_size(L, window)

    def f(p):
        return 2.0 * p * L + phase_shift(p, params)

    m_lo = math.ceil(f(-window) / (2 * np.pi))
    m_hi = math.floor(f(window) / (2 * np.pi))
    m = np.arange(m_lo, m_hi + 1, dtype=float)
    lo = (m - 1.0) * np.pi / L
    hi = m * np.pi / L
    target = 2 * np.pi * m
    g_lo, g_hi = f(lo) - target, f(hi) - target
    bad = ~((g_lo < 0) & (g_hi > 0))
    if bad.any():
        i = int(np.argmax(bad))
        raise QuantizationError(f"no sign change in bracket [{float(lo[i])!r}, {float(hi[i])!r}]")

    # run to floating-point resolution: the residual scales with 2L * dp
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        neg = f(mid) - target < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    p = 0.5 * (lo + hi)
    p = p[(p >= -window) & (p <= window)]

    resid = np.abs(np.exp(2j * p * L) - np.conj(phase_factor(p, params)))
    if p.size and resid.max() > 1e-10:
        i = int(np.argmax(resid))
        raise QuantizationError(f"root {float(p[i])!r} has residual {resid[i]:.3e}")

    # tally roots against the half-shifted partition used for reporting
    k = np.rint(p * L / np.pi).astype(np.int64)
    ks, counts = np.unique(k, return_counts=True)
    flagged = tuple(
        ((2 * kk - 1) * np.pi / (2 * L), (2 * kk + 1) * np.pi / (2 * L))
        for kk, c in zip(ks, counts)
        if c > 1
    )
    return QuantizedSpectrum(L=float(L), momenta=p, sector="even",
                             norms=even_norm2(p, L, params), flagged=flagged)


def odd_spectrum(L: float, window: float) -> QuantizedSpectrum:
    """Odd-sector (and free) momenta ``k pi / L`` inside the window."""
    _check_size(L, window)
    kmax = math.floor(window * L / np.pi + 1e-12)
    p = np.arange(-kmax, kmax + 1) * np.pi / L
    return QuantizedSpectrum(L=float(L), momenta=p, sector="odd",
                             norms=np.full(p.size, 2.0 * L))


def overlap_ee(p, p2, L: float, params: ModelParams):
    """Overlap ``int_{-L}^{L} e_{p2}(x) conj(e_p(x)) dx`` for quantized momenta.

    Equals ``2L`` on the diagonal and ``-w_{p2} conj(w_p) / tau**2`` off it;
    arrays broadcast.
    """
    p = np.asarray(p, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    off = -w_coeff(p2, params) * np.conj(w_coeff(p, params)) / params.tau**2
    return np.where(p == p2, 2.0 * L + 0j, off)


# -- spread impurity ---------------------------------------------------------

@dataclass(frozen=True)
class MollifierSpec:
    """Box mollifier of width ``a`` supported on [-a/2, a/2]."""

    a: float
    shape: str = "box"

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise ConfigError(f"mollifier width must be positive, got {self.a!r}")
        if self.shape != "box":
            raise ConfigError(f"unsupported mollifier shape {self.shape!r}")


def _sinc(y):
    # sin(y)/y with the removable point handled by numpy
    return np.sinc(y / np.pi)


def mollifier_Phi(p, x, spec: MollifierSpec):
    """Primitive ``Phi(x) = int_{-a/2}^{x} phi_a(y) exp(-ipy) dy`` for the box.

    Written as ``((x + a/2)/a) sinc(p(x + a/2)/2) exp(ip(a/2 - x)/2)`` inside
    the support, which is regular at ``p = 0``.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    h = 0.5 * spec.a
    xc = np.clip(x, -h, h)
    s = xc + h
    val = (s / spec.a) * _sinc(0.5 * p * s) * np.exp(0.5j * p * (h - xc))
    return np.where(x <= -h, 0j, val)


def mollifier_inner(p: float, spec: MollifierSpec) -> complex:
    """Inner product ``<phi_p, Phi_p>`` by integration by parts.

    ``Phi(I+)**2 exp(2ipI+) / 2 - ip int_I Phi(x)**2 exp(2ipx) dx`` with the
    remaining integral done by adaptive quadrature.
    """
    p = float(p)
    h = 0.5 * spec.a
    edge = complex(mollifier_Phi(p, h, spec))
    boundary = 0.5 * edge**2 * np.exp(2j * p * h)
    if p == 0.0:
        return boundary

    def f(x):
        return complex(mollifier_Phi(p, x, spec)) ** 2 * np.exp(2j * p * x)

    val, err = integrate.quad(f, -h, h, complex_func=True, epsabs=1e-15, epsrel=1e-13, limit=200)
    return boundary - 1j * p * val


def mollifier_c(p: float, spec: MollifierSpec, params: ModelParams) -> complex:
    """Integration constant ``c_p`` of the spread-impurity eigenproblem.

    ``c_p = [i(p - eps) - tau**2 <phi, Phi>] / [tau**2 conj(Phi(I+))]``.

    Raises
    ------
    NumericalError
        If ``Phi(I+)`` vanishes, i.e. ``p a`` is a nonzero multiple of 2 pi.
    """
    edge = complex(mollifier_Phi(p, 0.5 * spec.a, spec))
    if abs(edge) < 1e-14:
        raise NumericalError(f"Phi(I+) vanishes at p={p!r}, a={spec.a!r}")
    num = 1j * (p - params.epsilon) - params.tau**2 * mollifier_inner(p, spec)
    return num / (params.tau**2 * np.conj(edge))


def spread_phase(p: float, spec: MollifierSpec, params: ModelParams) -> complex:
    """Transmission phase ``1 + Phi(I+) / c_p`` of the spread impurity."""
    edge = complex(mollifier_Phi(p, 0.5 * spec.a, spec))
    return 1.0 + edge / mollifier_c(p, spec, params)


@dataclass(frozen=True)
class SpreadReport:
    """Convergence of the spread impurity towards the point impurity.

    ``order`` and ``phase_order`` are ``inf`` when the deviations vanish to
    rounding for every width (this happens at ``p = 0`` for the box).
    """

    p: float
    a: np.ndarray
    deviation: np.ndarray
    phase_deviation: np.ndarray
    order: float
    phase_order: float
    exact: bool

    @property
    def monotone(self) -> bool:
        """Deviations strictly decrease along ``a`` (or vanish identically)."""
        if self.exact:
            return True
        return bool(np.all(np.diff(self.deviation) < 0) and np.all(np.diff(self.phase_deviation) < 0))

    @property
    def local_order(self) -> np.ndarray:
        """Pairwise orders ``log(d_i/d_{i+1}) / log(a_i/a_{i+1})``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.deviation[:-1] / self.deviation[1:]) / np.log(self.a[:-1] / self.a[1:])


def _loglog_order(a, dev, floor):
    keep = dev > floor
    if keep.sum() < 2:
        return math.inf
    return float(np.polyfit(np.log(a[keep]), np.log(dev[keep]), 1)[0])


def spread_limit_check(p: float, a_sequence: Sequence[float], params: ModelParams,
                       floor: float = 1e-14) -> SpreadReport:
    """Compare ``c_p`` and the spread phase with their point-impurity limits.

    Parameters
    ----------
    p : float
    a_sequence : sequence of float
        Strictly decreasing mollifier widths.
    params : ModelParams
    floor : float
        Deviations below this are treated as exact agreement.
    """
    a = np.asarray(a_sequence, dtype=float)
    if a.size < 2 or np.any(np.diff(a) >= 0) or np.any(a <= 0):
        raise ConfigError("a_sequence must be positive and strictly decreasing with >= 2 entries")
    c0 = (1j * (p - params.epsilon) - params.gamma) / params.tau**2
    v = complex(phase_factor(p, params))
    dev = np.empty(a.size)
    pdev = np.empty(a.size)
    for i, ai in enumerate(a):
        spec = MollifierSpec(float(ai))
        dev[i] = abs(mollifier_c(p, spec, params) - c0)
        pdev[i] = abs(spread_phase(p, spec, params) - v)
    exact = bool(np.all(dev <= floor) and np.all(pdev <= floor))
    return SpreadReport(p=float(p), a=a, deviation=dev, phase_deviation=pdev,
                        order=_loglog_order(a, dev, floor),
                        phase_order=_loglog_order(a, pdev, floor), exact=exact)
