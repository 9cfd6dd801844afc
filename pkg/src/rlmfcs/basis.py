"""Finite-L one-particle eigenbases and dense one-particle matrices.

States are ordered even sector first, then odd sector, then (free basis
only) the isolated dot.  Every state is a pair of wavefunctions in the
(even, odd) lead channels on [-L, L] plus a dot amplitude.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .scattering import (ModelParams, even_norm2, odd_spectrum, phase_factor,
                         solve_quantization, w_coeff)

__all__ = ["EVEN", "ODD", "DOT", "FiniteLBasis", "OnePartMatrix", "build_basis"]

EVEN, ODD, DOT = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FiniteLBasis:
    """One-particle eigenbasis of the interacting or free Hamiltonian.

    Attributes
    ----------
    L, window : float
        Half length and momentum window ``[-window, window]``.
    kind : {"interacting", "free"}
    params : ModelParams
    sector : ndarray of int
        ``EVEN``, ``ODD`` or ``DOT`` per state.
    energy : ndarray
        Momentum of each lead state (``v_F = 1``); ``epsilon`` for the dot.
    norm : ndarray
        Norm of the unnormalised state; the stored state is divided by it.
    v : ndarray
        Right-of-impurity factor of the even wavefunction (1 when free).
    dot_amp : ndarray
        Dot component of the normalised state.
    flagged : tuple
        Double-root intervals reported by the quantization solver.
    """

    L: float
    window: float
    kind: str
    params: ModelParams
    sector: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    v: np.ndarray
    dot_amp: np.ndarray
    flagged: tuple = ()

    def __post_init__(self):
        for arr in (self.sector, self.energy, self.norm, self.v, self.dot_amp):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.energy.size

    def __len__(self):
        return self.size

    @property
    def even(self) -> np.ndarray:
        return np.flatnonzero(self.sector == EVEN)

    @property
    def odd(self) -> np.ndarray:
        return np.flatnonzero(self.sector == ODD)

    @property
    def dot(self) -> np.ndarray:
        return np.flatnonzero(self.sector == DOT)

    def wave_at_zero(self) -> np.ndarray:
        """Even-channel wavefunction at the impurity (symmetric value)."""
        out = np.zeros(self.size, dtype=complex)
        e = self.even
        out[e] = 0.5 * (1.0 + self.v[e]) / self.norm[e]
        return out

    def odd_at_zero(self) -> np.ndarray:
        """Odd-channel wavefunction at ``x = 0``."""
        out = np.zeros(self.size, dtype=complex)
        o = self.odd
        out[o] = 1.0 / self.norm[o]
        return out

    def norm_defect(self) -> float:
        """Largest ``|<u_n, u_n> - 1|`` using the closed-form inner product."""
        sq = np.where(self.sector == DOT, 0.0, 2.0 * self.L) / self.norm**2
        return float(np.max(np.abs(sq + np.abs(self.dot_amp) ** 2 - 1.0)))

    def odd_index(self) -> np.ndarray:
        """Integer labels ``k`` with ``energy = k pi / L`` for odd states."""
        return np.rint(self.energy[self.odd] * self.L / np.pi).astype(np.int64)


@dataclass(frozen=True, eq=False)
class OnePartMatrix:
    """Dense complex matrix on a :class:`FiniteLBasis`."""

    basis: FiniteLBasis
    data: np.ndarray

    def __post_init__(self):
        n = self.basis.size
        if self.data.shape != (n, n):
            raise ConfigError(f"matrix shape {self.data.shape} does not match basis size {n}")

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0))

    def projector_defect(self) -> float:
        """``max |A^2 - A|``."""
        d = self.data
        return float(np.max(np.abs(d @ d - d), initial=0.0))


def build_basis(kind: str, L: float, window: float, params: ModelParams) -> FiniteLBasis:
    """Eigenbasis of the chosen Hamiltonian on [-L, L] within ``[-window, window]``.

    ``kind="interacting"`` uses the quantized even momenta and hybridized
    eigenvectors ``(e_p + i w_p / tau) / sqrt(2L + |w_p|^2 / tau^2)``;
    ``kind="free"`` uses even and odd plane waves on the grid ``k pi / L``
    plus the isolated dot at energy ``epsilon``.
    """
    odd = odd_spectrum(L, window).momenta
    n_odd = odd.size
    if kind == "interacting":
        spec = solve_quantization(L, params, window)
        pe = spec.momenta
        ne = pe.size
        norm_e = np.sqrt(even_norm2(pe, L, params))
        sector = np.r_[np.full(ne, EVEN), np.full(n_odd, ODD)]
        energy = np.r_[pe, odd]
        norm = np.r_[norm_e, np.full(n_odd, np.sqrt(2.0 * L))]
        v = np.r_[phase_factor(pe, params), np.ones(n_odd, dtype=complex)]
        dot_amp = np.r_[1j * w_coeff(pe, params) / (params.tau * norm_e), np.zeros(n_odd, dtype=complex)]
        flagged = spec.flagged
    elif kind == "free":
        sector = np.r_[np.full(n_odd, EVEN), np.full(n_odd, ODD), [DOT]]
        energy = np.r_[odd, odd, [params.epsilon]]
        norm = np.r_[np.full(2 * n_odd, np.sqrt(2.0 * L)), [1.0]]
        v = np.ones(2 * n_odd + 1, dtype=complex)
        dot_amp = np.r_[np.zeros(2 * n_odd, dtype=complex), [1.0 + 0j]]
        flagged = ()
    else:
        raise ConfigError(f"unknown basis kind {kind!r}")
    return FiniteLBasis(L=float(L), window=float(window), kind=kind, params=params,
                        sector=sector.astype(np.int8), energy=energy.astype(float),
                        norm=norm.astype(float), v=v.astype(complex),
                        dot_amp=dot_amp.astype(complex), flagged=flagged)
