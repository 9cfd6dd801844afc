"""Reservoir description: Fermi occupations, the 2x2 occupation block, and
the initial one-particle correlation matrix of the decoupled system.

Mode basis for the 2x2 blocks is (even, odd).  With lead fields
``psi_{1,2} = (psi_e +- psi_o) / sqrt(2)`` the occupation block is
``(n1 + n2)/2 * 1 + (n1 - n2)/2 * sigma_x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import expit

from .basis import FiniteLBasis, OnePartMatrix
from .errors import ConfigError

__all__ = ["BathConfig", "SpectralBlock2", "occupation", "nhat_block", "free_correlation_matrix"]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _as_beta(x) -> float:
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"inverse temperature must be a number or 'inf', got {x!r}")
    return float(x)


@dataclass(frozen=True)
class BathConfig:
    """Two reservoirs plus the initial dot occupation.

    ``beta1``/``beta2`` may be ``inf`` (zero temperature).
    """

    beta1: float
    beta2: float
    mu1: float = 0.0
    mu2: float = 0.0
    n_d: float = 0.5

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            b = _as_beta(getattr(self, name))
            if not b > 0:
                raise ConfigError(f"{name} must be > 0, got {b!r}")
            object.__setattr__(self, name, b)
        for name in ("mu1", "mu2", "n_d"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not 0.0 <= self.n_d <= 1.0:
            raise ConfigError(f"n_d must lie in [0, 1], got {self.n_d!r}")

    @classmethod
    def from_mapping(cls, m: Mapping) -> "BathConfig":
        allowed = {"beta1", "beta2", "mu1", "mu2", "n_d"}
        extra = set(m) - allowed
        if extra:
            raise ConfigError(f"unknown bath keys: {sorted(extra)}")
        missing = {"beta1", "beta2"} - set(m)
        if missing:
            raise ConfigError(f"missing bath keys: {sorted(missing)}")
        return cls(**dict(m))

    def to_dict(self) -> dict:
        enc = lambda b: "inf" if math.isinf(b) else b  # noqa: E731
        return {"beta1": enc(self.beta1), "beta2": enc(self.beta2),
                "mu1": self.mu1, "mu2": self.mu2, "n_d": self.n_d}

    @property
    def T1(self) -> float:
        return 1.0 / self.beta1

    @property
    def T2(self) -> float:
        return 1.0 / self.beta2

    @property
    def t_max(self) -> float:
        """Largest of the two temperatures."""
        return max(self.T1, self.T2)

    @property
    def shift(self) -> float:
        """Energy ``s`` with ``beta1 (mu1 - s) + beta2 (mu2 - s) = 0``."""
        b1, b2 = self.beta1, self.beta2
        if math.isinf(b1) and math.isinf(b2):
            return 0.5 * (self.mu1 + self.mu2)
        if math.isinf(b1):
            return self.mu1
        if math.isinf(b2):
            return self.mu2
        return (b1 * self.mu1 + b2 * self.mu2) / (b1 + b2)

    @property
    def beta(self) -> float:
        return 0.5 * (self.beta1 + self.beta2)

    @property
    def V(self) -> float:
        """``beta1 mu1 - beta2 mu2`` evaluated in shifted energies."""
        s = self.shift
        return self.beta1 * (self.mu1 - s) - self.beta2 * (self.mu2 - s)

    @property
    def W(self) -> float:
        return self.beta1 - self.beta2

    def shifted(self, s0: float) -> "BathConfig":
        """Same reservoirs with both chemical potentials moved by ``s0``."""
        return BathConfig(self.beta1, self.beta2, self.mu1 + s0, self.mu2 + s0, self.n_d)


def _fermi(omega, mu, beta):
    x = np.asarray(omega, dtype=float) - mu
    if math.isinf(beta):
        return np.where(x < 0, 1.0, np.where(x > 0, 0.0, 0.5))
    return expit(-beta * x)


def occupation(omega, lead: int, cfg: BathConfig):
    """Fermi occupation of lead 1 or 2; a step (1/2 at the edge) at T = 0."""
    if lead == 1:
        return _fermi(omega, cfg.mu1, cfg.beta1)
    if lead == 2:
        return _fermi(omega, cfg.mu2, cfg.beta2)
    raise ConfigError(f"lead must be 1 or 2, got {lead!r}")


@dataclass(frozen=True)
class SpectralBlock2:
    """2x2 complex matrix attached to a momentum ``p``.

    ``m`` may carry leading batch axes, in which case ``p`` is an array.
    """

    p: object
    m: np.ndarray

    def __post_init__(self):
        if self.m.shape[-2:] != (2, 2):
            raise ConfigError(f"block must be 2x2, got {self.m.shape}")
        if not np.all(np.isfinite(self.m)):
            raise ConfigError("block has non-finite entries")


def nhat_block(p, cfg: BathConfig) -> SpectralBlock2:
    """Occupation block ``((n1 + n2) 1 + (n1 - n2) sigma_x) / 2`` at momentum ``p``."""
    n1 = np.asarray(occupation(p, 1, cfg))
    n2 = np.asarray(occupation(p, 2, cfg))
    s = 0.5 * (n1 + n2)
    d = 0.5 * (n1 - n2)
    m = s[..., None, None] * np.eye(2) + d[..., None, None] * SIGMA_X
    return SpectralBlock2(p=p, m=m.astype(complex))


def free_correlation_matrix(basis_free: FiniteLBasis, cfg: BathConfig) -> OnePartMatrix:
    """Correlation matrix of the decoupled leads and dot.

    Each shared plane-wave momentum carries the 2x2 block ``nhat`` on its
    (even, odd) pair; the dot gets ``n_d``.
    """
    if basis_free.kind != "free":
        raise ConfigError("free_correlation_matrix needs the free basis")
    dot = basis_free.dot
    if dot.size != 1:
        raise ConfigError("free basis must contain exactly one dot state")
    e, o = basis_free.even, basis_free.odd
    if e.size != o.size or not np.array_equal(basis_free.energy[e], basis_free.energy[o]):
        raise ConfigError("even and odd free momenta do not match")
    p = basis_free.energy[e]
    n1 = occupation(p, 1, cfg)
    n2 = occupation(p, 2, cfg)
    g = np.zeros((basis_free.size, basis_free.size), dtype=complex)
    g[e, e] = 0.5 * (n1 + n2)
    g[o, o] = 0.5 * (n1 + n2)
    g[e, o] = 0.5 * (n1 - n2)
    g[o, e] = 0.5 * (n1 - n2)
    g[dot[0], dot[0]] = cfg.n_d
    return OnePartMatrix(basis_free, g)
