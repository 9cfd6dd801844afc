"""Integrated local current: cutoff-regularised stationary expectations and
the three-peak form of its characteristic function.

With ``I_s = tau Im[psi_o^dag(0, s) d(s)]`` and a sharp momentum cutoff
``|p| <= Lambda`` the characteristic function of ``int_0^t I_s ds`` is

    A0 + A+ exp(+i t alpha X) + A- exp(-i t alpha X),   X = sqrt(Lambda tau^2 / 4 pi)

so two peaks run off to ``+-t X`` as the cutoff grows while the mean,
``(A+ - A-) t X = t tau Im<psi_o^dag d>``, stays finite.

Stationary expectations follow from the mode expansions: even modes carry
the dot amplitude ``i w_p / tau``, odd modes vanish on the dot, and the
(even, odd) occupation block is ``((n1 + n2) + (n1 - n2) sigma_x) / 2``::

    <d^dag d>         = int dp/2pi |w_p|^2 / tau^2 (n1 + n2) / 2
    <psi_o^dag d>     = (i / tau) int dp/2pi w_p (n1 - n2) / 2
    <psi_o^dag psi_o> = int dp/2pi (n1 + n2) / 2
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baths import BathConfig, occupation
from .errors import ConfigError
from .fcs_analytic import QuadratureSpec, integrate_interval
from .scattering import ModelParams, w_coeff

__all__ = ["CutoffSpec", "StationaryExpectations", "PeakStructure", "stat_expectations",
           "dot_occupation_limit", "peak_structure", "peak_position"]


@dataclass(frozen=True)
class CutoffSpec:
    """Sharp momentum cutoff ``|p| <= Lambda``."""

    Lambda: float

    def __post_init__(self):
        lam = float(self.Lambda)
        if not (math.isfinite(lam) and lam > 0):
            raise ConfigError(f"Lambda must be finite and positive, got {self.Lambda!r}")
        object.__setattr__(self, "Lambda", lam)


@dataclass(frozen=True)
class StationaryExpectations:
    """Regularised ``<d^dag d>``, ``<psi_o^dag d>``, ``<psi_o^dag psi_o>`` at x = 0."""

    dd: float
    od: complex
    oo: float

    def __iter__(self):
        return iter((self.dd, self.od, self.oo))


@dataclass(frozen=True)
class PeakStructure:
    """Amplitudes of the three peaks and the outer peak position ``t X``."""

    A0: complex
    Aplus: complex
    Aminus: complex
    position: float

    @property
    def positions(self) -> tuple:
        return (-self.position, 0.0, self.position)

    @property
    def mean(self) -> float:
        """Mean integrated current ``(A+ - A-) t X``."""
        return float(((self.Aplus - self.Aminus) * self.position).real)

    def __iter__(self):
        return iter((self.A0, self.Aplus, self.Aminus, self.positions))


def _breaks(cfg, params):
    return (cfg.mu1, cfg.mu2, params.epsilon)


def stat_expectations(cut: CutoffSpec, cfg: BathConfig, params: ModelParams,
                      quad: QuadratureSpec = QuadratureSpec()) -> StationaryExpectations:
    """Stationary expectations at the impurity with a sharp cutoff (see module doc)."""
    tau = params.tau
    lam = cut.Lambda
    pts = _breaks(cfg, params)

    def n_sum(p):
        return 0.5 * (occupation(p, 1, cfg) + occupation(p, 2, cfg))

    def n_diff(p):
        return 0.5 * (occupation(p, 1, cfg) - occupation(p, 2, cfg))

    dd = integrate_interval(lambda p: complex(abs(w_coeff(p, params)) ** 2 / tau**2 * n_sum(p)),
                            -lam, lam, quad, pts)
    od = integrate_interval(lambda p: complex(1j / tau * w_coeff(p, params) * n_diff(p)),
                            -lam, lam, quad, pts)
    oo = integrate_interval(lambda p: complex(n_sum(p)), -lam, lam, quad, pts)
    two_pi = 2 * np.pi
    return StationaryExpectations(dd.real / two_pi, od / two_pi, oo.real / two_pi)


def dot_occupation_limit(cfg: BathConfig, params: ModelParams,
                         quad: QuadratureSpec = QuadratureSpec(), cut: CutoffSpec | None = None) -> dict:
    """``<d^dag d>`` without cutoff, and the size of the neglected tail.

    ``|w_p|^2 / tau^2 = tau^2 / (Gamma^2 + (p - epsilon)^2)`` so the tail
    beyond ``Lambda`` is ``O(1/Lambda)``.  The full-line value is obtained by
    integrating up to ``Lambda_0`` and adding the closed-form Lorentzian
    tails, with ``n = 1`` below and ``n = 0`` above; ``Lambda_0`` sits far
    enough outside the thermal window that the occupations are saturated.
    """
    g, eps, tau = params.gamma, params.epsilon, params.tau
    spread = max(abs(cfg.mu1), abs(cfg.mu2), abs(eps))
    lam0 = spread + 60 * max(cfg.t_max, g, 1.0)
    core = stat_expectations(CutoffSpec(lam0), cfg, params, quad).dd
    # int_{-inf}^{-lam0} tau^2 / (g^2 + (p - eps)^2) dp / 2pi
    lower = tau**2 / (2 * np.pi * g) * (0.5 * np.pi - math.atan((lam0 + eps) / g))
    limit = core + lower
    out = {"dd_limit": limit, "Lambda0": lam0}
    if cut is not None:
        dd = stat_expectations(cut, cfg, params, quad).dd
        out.update(Lambda=cut.Lambda, dd=dd, tail=limit - dd)
    return out


def peak_position(t: float, cut: CutoffSpec, params: ModelParams) -> float:
    """``t sqrt(Lambda tau^2 / 4 pi)``."""
    return float(t) * math.sqrt(cut.Lambda * params.tau**2 / (4 * np.pi))


def peak_structure(t: float, cut: CutoffSpec, cfg: BathConfig, params: ModelParams,
                   quad: QuadratureSpec = QuadratureSpec(),
                   expectations: StationaryExpectations | None = None) -> PeakStructure:
    """Three-peak amplitudes from the regularised expectations.

    ``A+ - A- = 2 sqrt(pi/Lambda) Im<psi_o^dag d>``,
    ``A+ + A- = (pi/Lambda)[oo - 2 oo dd + 2 |od|^2] + dd``,
    ``A0 = 1 - A+ - A-``.
    """
    if not t >= 0:
        raise ConfigError("t must be >= 0")
    dd, od, oo = expectations if expectations is not None else stat_expectations(cut, cfg, params, quad)
    lam = cut.Lambda
    diff = 2 * math.sqrt(np.pi / lam) * od.imag
    total = (np.pi / lam) * (oo - 2 * oo * dd + 2 * abs(od) ** 2) + dd
    ap = complex(0.5 * (total + diff))
    am = complex(0.5 * (total - diff))
    return PeakStructure(complex(1.0) - ap - am, ap, am, peak_position(t, cut, params))
