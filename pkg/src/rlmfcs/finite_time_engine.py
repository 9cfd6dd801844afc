"""Exact finite-L, finite-t counting statistics of the resonant level.

Everything is a one-particle computation in the interacting eigenbasis:

* ``q``: the flavor-1 charge projector, ``q_t`` its Heisenberg image;
* ``E = (1 + y1 q)(1 + y3 q_t)(1 + y2 q)`` with ``y1 = e^{-i(lam/2 + mu)} - 1``,
  ``y2 = e^{-i(lam/2 - mu)} - 1``, ``y3 = e^{i lam} - 1``;
* ``P(lam, mu, t) = det(1 + G0 (E - 1))`` with ``G0`` the correlation matrix
  of the decoupled leads and dot, carried into the interacting basis and
  evolved over the preparation time.

Correlation matrices use ``G[m, n] = <c_n^dag c_m>``.  Operators evolve with
``exp(i (E_m - E_n) t)`` entrywise, states with the opposite phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .basis import FiniteLBasis, OnePartMatrix, build_basis
from .baths import BathConfig, occupation
from .errors import ConfigError, DeterminantError
from .fcs_analytic import CountingFields, Direction, _direction
from .scattering import ModelParams, overlap_ee

__all__ = [
    "EngineRun",
    "EngineBases",
    "OverlapMatrix",
    "CountingEngine",
    "SlopeFit",
    "DotWaveReport",
    "DeltaTraceReport",
    "build_basis",
    "overlap_matrix",
    "charge_matrix",
    "evolve",
    "theta_exponential",
    "theta_four_term",
    "initial_correlation",
    "purify_projector",
    "generating_function",
    "pdf_generating",
    "log_pdf_generating",
    "slope_extract",
    "current_matrix",
    "mean_current",
    "current_series",
    "RelaxationFit",
    "fit_relaxation",
    "transient_window_end",
    "dot_wavefunction_check",
    "appendix_a_check",
]


def _segment(d, a, b):
    """``int_a^b exp(i d x) dx``, accurate for small ``d``."""
    return (b - a) * np.exp(0.5j * d * (a + b)) * np.sinc(d * (b - a) / (2 * np.pi))


# -- runs and bases ------------------------------------------------------------

@dataclass(frozen=True)
class EngineRun:
    """Preparation time ``t0 <= 0``, counting time ``t >= 0``, mu-quadrature order."""

    t0: float = 0.0
    t: float = 0.0
    mu_points: int = 16
    lambdas: tuple = ()

    def __post_init__(self):
        if not self.t0 <= 0:
            raise ConfigError(f"t0 must be <= 0, got {self.t0!r}")
        if not self.t >= 0:
            raise ConfigError(f"t must be >= 0, got {self.t!r}")
        if self.mu_points < 1:
            raise ConfigError("mu_points must be positive")
        object.__setattr__(self, "lambdas", tuple(complex(x) for x in self.lambdas))

    def validate(self, L: float, t=None):
        t = float(self.t if t is None else t)
        if not t + abs(self.t0) < L:
            raise ConfigError(f"need t + |t0| < L, got {t!r} + {abs(self.t0)!r} >= {L!r}")


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """Rectangular overlaps ``O[a, n] = <f_a, u_n>`` (free rows, interacting columns).

    Stored by blocks: the dense even/even block, the dot row over even
    interacting states, and for each interacting odd state the position of
    the free odd state with the same momentum (the only nonzero, equal to 1).
    ``data`` assembles the full matrix on demand.
    """

    free: FiniteLBasis
    inter: FiniteLBasis
    even_block: np.ndarray
    dot_row: np.ndarray
    odd_rows: np.ndarray

    @cached_property
    def data(self) -> np.ndarray:
        fr, it = self.free, self.inter
        o = np.zeros((fr.size, it.size), dtype=complex)
        o[np.ix_(fr.even, it.even)] = self.even_block
        o[fr.dot[0], it.even] = self.dot_row
        o[fr.odd[self.odd_rows], it.odd] = 1.0
        return o

    def unitarity_defect(self, bulk: float | None = None) -> float:
        """``max |O^dag O - 1|`` over interacting states with ``|p| <= bulk``.

        Only the even/even block can deviate; mixed blocks vanish identically
        and the odd block is the identity.
        """
        a, h = self.even_block, self.dot_row
        g = a.conj().T @ a + np.outer(h.conj(), h)
        d = np.abs(g - np.eye(g.shape[0]))
        if bulk is not None:
            keep = np.abs(self.inter.energy[self.inter.even]) <= bulk
            d = d[np.ix_(keep, keep)]
        return float(d.max(initial=0.0))


def overlap_matrix(free: FiniteLBasis, inter: FiniteLBasis) -> OverlapMatrix:
    """Closed-form overlaps between free plane waves plus dot and interacting states.

    The free window may exceed the interacting one; every interacting odd
    momentum must appear on the free grid.
    """
    if free.kind != "free" or inter.kind != "interacting":
        raise ConfigError("overlap_matrix needs (free, interacting) bases")
    if free.L != inter.L:
        raise ConfigError("bases must share L")
    if free.window < inter.window:
        raise ConfigError("free window must cover the interacting window")
    L = inter.L
    fe, ie = free.even, inter.even
    d = inter.energy[ie][None, :] - free.energy[fe][:, None]
    v = inter.v[ie]
    a = (_segment(d, -L, 0.0) + v[None, :] * _segment(d, 0.0, L)) / (
        np.sqrt(2 * L) * inter.norm[ie][None, :])
    pos = {k: i for i, k in enumerate(free.odd_index().tolist())}
    try:
        rows = np.array([pos[k] for k in inter.odd_index().tolist()], dtype=np.int64)
    except KeyError as exc:
        raise ConfigError(f"odd momentum index {exc} missing from the free grid") from None
    return OverlapMatrix(free, inter, a, inter.dot_amp[ie].copy(), rows)


def charge_matrix(basis: FiniteLBasis) -> OnePartMatrix:
    """One-particle matrix of the charge in lead 1.

    With ``psi_1 = (psi_e + psi_o)/sqrt(2)`` the projector is half the
    lead-space projector plus half the even/odd swap.  Dot entries vanish.
    """
    L = basis.L
    n = basis.size
    q = np.zeros((n, n), dtype=complex)
    e, o = basis.even, basis.odd
    if basis.kind == "interacting":
        pe = basis.energy[e]
        ne = basis.norm[e]
        ee = overlap_ee(pe[:, None], pe[None, :], L, basis.params) / np.outer(ne, ne)
        ko = basis.energy[o]
        d = ko[None, :] - pe[:, None]
        eo = (_segment(d, -L, 0.0) + np.conj(basis.v[e])[:, None] * _segment(d, 0.0, L)) / (
            ne[:, None] * np.sqrt(2 * L))
    else:
        ee = np.eye(e.size)
        eo = (basis.energy[e][:, None] == basis.energy[o][None, :]).astype(complex)
    q[np.ix_(e, e)] = 0.5 * ee
    q[np.ix_(o, o)] = 0.5 * np.eye(o.size)
    q[np.ix_(e, o)] = 0.5 * eo
    q[np.ix_(o, e)] = 0.5 * eo.conj().T
    return OnePartMatrix(basis, q)


def evolve(matrix: OnePartMatrix, t: float, basis: FiniteLBasis | None = None) -> OnePartMatrix:
    """Heisenberg evolution: multiply entry ``(m, n)`` by ``exp(i (E_m - E_n) t)``."""
    if basis is not None and basis is not matrix.basis:
        raise ConfigError("matrix is not expressed in the given basis")
    ph = np.exp(1j * matrix.basis.energy * t)
    return OnePartMatrix(matrix.basis, (ph[:, None] * matrix.data) * ph.conj()[None, :])


def _ys(lam, mu):
    y1 = np.exp(-1j * (lam / 2 + mu)) - 1
    y2 = np.exp(-1j * (lam / 2 - mu)) - 1
    y3 = np.exp(1j * lam) - 1
    return y1, y2, y3


def theta_exponential(q: OnePartMatrix, qt: OnePartMatrix, fields: CountingFields) -> OnePartMatrix:
    """``E = (1 + y1 q)(1 + y3 q_t)(1 + y2 q)``; exact for any ``q``."""
    y1, y2, y3 = _ys(fields.lam, fields.mu)
    one = np.eye(q.basis.size)
    e = (one + y1 * q.data) @ (one + y3 * qt.data) @ (one + y2 * q.data)
    return OnePartMatrix(q.basis, e)


def theta_four_term(q: OnePartMatrix, qt: OnePartMatrix, fields: CountingFields) -> OnePartMatrix:
    """Expansion of ``E`` in ``d = q_t - q``, ``d' = [q, d]``, ``d'' = [q, [q, d]]``.

    Coincides with :func:`theta_exponential` when ``q`` and ``q_t`` are
    exact projectors.
    """
    lam, mu = fields.lam, fields.mu
    a, b = q.data, qt.data
    d = b - a
    d1 = a @ d - d @ a
    d2 = a @ d1 - d1 @ a
    s = np.sin
    c_d = 1j * s(lam)
    c_dd = -2 * s(lam / 2) ** 2
    c_d1 = 2 * s(mu) * s(lam / 2)
    c_d2 = 4j * s(lam / 4 + mu / 2) * s(lam / 4 - mu / 2) * s(lam / 2)
    e = np.eye(q.basis.size) + c_d * d + c_dd * (d @ d) + c_d1 * d1 + c_d2 * d2
    return OnePartMatrix(q.basis, e)


class EngineBases:
    """Free and interacting bases with lazily built, cached matrices.

    Parameters
    ----------
    params : ModelParams
    L : float
    window : float
        Interacting momentum window.
    free_window : float, optional
        Window of the free basis seeding the initial state; defaults to
        ``2 * window`` so that the projection onto the interacting window
        is not starved near its edges.
    """

    def __init__(self, params: ModelParams, L: float, window: float, free_window: float | None = None):
        self.params = params
        self.L = float(L)
        self.window = float(window)
        self.free_window = float(2 * window if free_window is None else free_window)
        self._engines: dict = {}
        self._g0: dict = {}

    @cached_property
    def inter(self) -> FiniteLBasis:
        return build_basis("interacting", self.L, self.window, self.params)

    @cached_property
    def free(self) -> FiniteLBasis:
        return build_basis("free", self.L, self.free_window, self.params)

    @cached_property
    def overlap(self) -> OverlapMatrix:
        return overlap_matrix(self.free, self.inter)

    @cached_property
    def charge(self) -> OnePartMatrix:
        return charge_matrix(self.inter)

    @cached_property
    def counting_charge(self) -> OnePartMatrix:
        """Window-truncated charge rounded to an exact projector."""
        return purify_projector(self.charge)

    @cached_property
    def current(self) -> OnePartMatrix:
        return current_matrix(self.inter, self.params)

    def check_window(self, cfg: BathConfig, margin: float = 3.0):
        """Require the window to exceed the thermal window by ``margin * max(T, Gamma)``."""
        need = max(abs(cfg.mu1), abs(cfg.mu2)) + margin * max(cfg.t_max, self.params.gamma)
        if self.window < need:
            raise ConfigError(f"window {self.window!r} below thermal window + margin {need!r}")

    def initial(self, cfg: BathConfig, t0: float) -> OnePartMatrix:
        key = (cfg, float(t0))
        if key not in self._g0:
            self._g0[key] = initial_correlation(self, cfg, t0)
        return self._g0[key]

    def engine(self, cfg: BathConfig, t0: float) -> "CountingEngine":
        key = (cfg, float(t0))
        if key not in self._engines:
            self._engines[key] = CountingEngine(self.counting_charge, self.initial(cfg, t0))
        return self._engines[key]

    def diagnostics(self) -> dict:
        """Basis sizes and truncation defects for run manifests."""
        return {
            "n_interacting": self.inter.size,
            "n_free": self.free.size,
            "projector_defect": self.charge.projector_defect(),
            "overlap_defect_bulk": self.overlap.unitarity_defect(bulk=0.5 * self.window),
            "norm_defect": self.inter.norm_defect(),
            "double_root_intervals": [list(map(float, iv)) for iv in self.inter.flagged],
        }


def purify_projector(q: OnePartMatrix) -> OnePartMatrix:
    """Round the eigenvalues of a Hermitian near-projector to 0 or 1.

    Truncating the basis to a momentum window leaves ``q`` with a handful of
    eigenvalues strictly between 0 and 1, all tied to states at the window
    edge.  Rounding them keeps ``q`` and ``q_t`` exact projectors, so that
    ``E`` reduces to the identity at ``lam = 0`` for every ``mu`` and ``t``.
    """
    k, vecs = np.linalg.eigh(0.5 * (q.data + q.data.conj().T))
    return OnePartMatrix(q.basis, (vecs * (k > 0.5)) @ vecs.conj().T)


def initial_correlation(bases: EngineBases, cfg: BathConfig, t0: float) -> OnePartMatrix:
    """Correlation matrix at the start of counting, in the interacting basis.

    ``O^dag G_free O`` evolved forward (Schroedinger picture) by ``|t0|``.
    The product is taken block by block: free occupations are 2x2 on each
    (even, odd) momentum pair and odd states map one to one.
    """
    free, inter, ov = bases.free, bases.inter, bases.overlap
    # the blocks of free_correlation_matrix, without the dense matrix
    k = free.energy[free.even]
    n1, n2 = occupation(k, 1, cfg), occupation(k, 2, cfg)
    s, dd = 0.5 * (n1 + n2), 0.5 * (n1 - n2)
    a, h, rows = ov.even_block, ov.dot_row, ov.odd_rows
    ie, io = inter.even, inter.odd
    g = np.zeros((inter.size, inter.size), dtype=complex)
    g[np.ix_(ie, ie)] = a.conj().T @ (s[:, None] * a) + cfg.n_d * np.outer(h.conj(), h)
    eo = a[rows, :].conj().T * dd[rows][None, :]
    g[np.ix_(ie, io)] = eo
    g[np.ix_(io, ie)] = eo.conj().T
    g[io, io] = s[rows]
    ph = np.exp(-1j * inter.energy * abs(t0))
    return OnePartMatrix(inter, (ph[:, None] * g) * ph.conj()[None, :])


def generating_function(run: EngineRun, fields: CountingFields, cfg: BathConfig,
                        params: ModelParams, bases: EngineBases) -> complex:
    """``det(1 + G0 (E - 1))`` by pivoted LU, building ``E`` explicitly."""
    run.validate(bases.L)
    bases.check_window(cfg)
    g = bases.initial(cfg, run.t0).data
    q = bases.counting_charge
    e = theta_exponential(q, evolve(q, run.t), fields).data
    m = np.eye(g.shape[0]) + g @ (e - np.eye(g.shape[0]))
    sign, logabs = np.linalg.slogdet(m)
    if sign == 0 or not np.isfinite(logabs):
        raise DeterminantError(f"singular 1 + G(E-1) at lambda={fields.lam!r}, mu={fields.mu!r}, t={run.t!r}")
    return complex(sign * np.exp(logabs))


class CountingEngine:
    """Repeated evaluation of ``log det(1 + G0 (E - 1))`` over (lam, mu, t).

    ``q`` is diagonalised once, ``q = V diag(k) V^dag``.  In that basis the
    outer factors of ``E`` are diagonal and, with ``Gv = V^dag G0 V`` and
    ``Qt = V^dag q_t V``::

        1 + G(E - 1) = 1 - Gv + (Gv diag(a) + y3 (Gv Qt + y1 Gv diag(k) Qt)) diag(c)

    where ``a = 1 + y1 k`` and ``c = 1 + y2 k``.  Each (lam, mu) then costs a
    single LU factorisation; no projector identity is assumed.  Results are
    memoised per ``(lam, mu, t)`` so that variants sharing points (the
    ``mu = 0`` term, spread diagnostics) do not refactorise.
    """

    def __init__(self, q: OnePartMatrix, g0: OnePartMatrix):
        if q.basis is not g0.basis:
            raise ConfigError("q and G0 must share a basis")
        self.basis = q.basis
        self.q = q.data
        self.kappa, self.vecs = np.linalg.eigh(0.5 * (q.data + q.data.conj().T))
        self.gv = self.vecs.conj().T @ g0.data @ self.vecs
        self._t = None
        self._memo: dict = {}

    def _prepare(self, t):
        if self._t == t:
            return
        ph = np.exp(1j * self.basis.energy * t)
        qt = (ph[:, None] * self.q) * ph.conj()[None, :]
        qv = self.vecs.conj().T @ qt @ self.vecs
        self._x1 = self.gv @ qv
        self._x2 = (self.gv * self.kappa[None, :]) @ qv
        self._t = t

    def log_det(self, lam: complex, mu: float, t: float) -> complex:
        """Principal ``log det`` at one point."""
        key = (complex(lam), float(mu), float(t))
        if key in self._memo:
            return self._memo[key]
        self._prepare(t)
        y1, y2, y3 = _ys(complex(lam), mu)
        a = 1 + y1 * self.kappa
        c = 1 + y2 * self.kappa
        m = np.eye(self.kappa.size) - self.gv + (self.gv * a[None, :] + y3 * (self._x1 + y1 * self._x2)) * c[None, :]
        sign, logabs = np.linalg.slogdet(m)
        if sign == 0 or not np.isfinite(logabs):
            raise DeterminantError(f"singular 1 + G(E-1) at lambda={lam!r}, mu={mu!r}, t={t!r}")
        self._memo[key] = out = complex(logabs, np.angle(sign))
        return out

    def log_dets(self, lam: complex, mus: Sequence[float], t: float) -> np.ndarray:
        return np.array([self.log_det(lam, mu, t) for mu in mus])


def _mu_nodes(m):
    return 2 * np.pi * np.arange(m) / m


def _average_logs(logs: np.ndarray) -> complex:
    """``log mean exp(logs)`` with the largest modulus factored out."""
    ref = logs[np.argmax(logs.real)]
    terms = np.exp(logs - ref)
    s = complex(math.fsum(terms.real), math.fsum(terms.imag)) / logs.size
    return ref + np.log(s)


def pdf_generating(run: EngineRun, lam: complex, cfg: BathConfig, params: ModelParams,
                   bases: EngineBases, which: str = "two_projector") -> complex:
    """Generating function of the transferred charge at time ``run.t``.

    ``two_projector`` averages ``det`` over ``mu_j = 2 pi j / M``;
    ``one_projector`` is the single ``mu = 0`` term.
    """
    return complex(np.exp(log_pdf_generating(run, lam, cfg, params, bases, which)))


def log_pdf_generating(run: EngineRun, lam: complex, cfg: BathConfig, params: ModelParams,
                       bases: EngineBases, which: str = "two_projector") -> complex:
    """Principal logarithm of :func:`pdf_generating`."""
    run.validate(bases.L)
    bases.check_window(cfg)
    eng = bases.engine(cfg, run.t0)
    if which == "one_projector":
        return eng.log_det(lam, 0.0, run.t)
    if which == "two_projector":
        if run.mu_points < 8:
            raise ConfigError("two_projector needs mu_points >= 8")
        return _average_logs(eng.log_dets(lam, _mu_nodes(run.mu_points), run.t))
    raise ConfigError(f"unknown generating-function variant {which!r}")


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit ``log P(t) ~ slope * t + intercept``."""

    slope: complex
    intercept: complex
    residual: float
    t: np.ndarray
    log_p: np.ndarray
    ambiguous: bool = False
    guide: np.ndarray | None = field(default=None)


def _fit_line(t, y):
    a = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return complex(coef[0]), complex(coef[1]), float(np.sqrt(np.mean(np.abs(res) ** 2)))


def _unwrap_series(raw):
    """Principal logs along t made continuous in their imaginary part."""
    ph = np.unwrap(raw.imag)
    jumps = np.abs(np.diff(ph))
    return raw.real + 1j * ph, bool(np.any(jumps > 0.9 * np.pi))


def slope_extract(run: EngineRun, lam: complex, t_grid: Sequence[float], cfg: BathConfig,
                  params: ModelParams, bases: EngineBases, which: str = "two_projector",
                  guide_eta: float | None = None) -> SlopeFit:
    """Large-deviation estimate from the growth of ``log P(lam, t)`` in ``t``.

    The logarithm is made continuous along the t-grid.  When ``P`` is real
    (e.g. the two-projector function at ``lam = pi``) consecutive phases can
    jump by exactly pi and the unwrapping is ambiguous.  With ``guide_eta``
    set, a companion series at ``lam - guide_eta`` (continuous in t) picks,
    at each t, the branch ``arg P + 2 pi k`` nearest to the companion phase,
    i.e. the value reached as ``lam`` is approached from below.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise ConfigError("t_grid must be increasing with at least two points")
    for tt in t:
        run.validate(bases.L, tt)
    raw = np.array([log_pdf_generating(EngineRun(run.t0, tt, run.mu_points), lam, cfg, params, bases, which)
                    for tt in t])
    logs, ambiguous = _unwrap_series(raw)
    guide = None
    if guide_eta is not None:
        graw = np.array([log_pdf_generating(EngineRun(run.t0, tt, run.mu_points), lam - guide_eta,
                                            cfg, params, bases, which) for tt in t])
        guide, _ = _unwrap_series(graw)
        k = np.rint((guide.imag - raw.imag) / (2 * np.pi))
        logs = raw.real + 1j * (raw.imag + 2 * np.pi * k)
        ambiguous = False
    slope, icpt, res = _fit_line(t, logs)
    return SlopeFit(slope, icpt, res, t, logs, ambiguous, guide)


# -- local current ---------------------------------------------------------------

def _current_vectors(basis):
    """Flavor-1 amplitude at the impurity and dot amplitude of every state."""
    return (basis.wave_at_zero() + basis.odd_at_zero()) / np.sqrt(2.0), basis.dot_amp


def current_matrix(basis: FiniteLBasis, params: ModelParams) -> OnePartMatrix:
    """One-particle kernel of ``tau sqrt(2) Im[psi_1^dag(0) d]``.

    ``j = (tau sqrt(2) / 2i) (|f><h| - |h><f|)`` in components, where ``f_n``
    is the flavor-1 wavefunction at the impurity (symmetric value for even
    states) and ``h_n`` the dot amplitude.
    """
    if basis.kind != "interacting":
        raise ConfigError("current_matrix needs the interacting basis")
    f, h = _current_vectors(basis)
    pref = params.tau * np.sqrt(2.0) / 2j
    j = pref * (np.outer(f.conj(), h) - np.outer(h.conj(), f))
    return OnePartMatrix(basis, j)


def mean_current(t: float, run: EngineRun, cfg: BathConfig, params: ModelParams,
                 bases: EngineBases, direction=Direction.GAIN_LEAD1) -> float:
    """Expected local current at time ``t`` after the start of counting.

    ``Re tr(j G(t))``; positive values feed lead 1 in the gain_lead1
    convention.
    """
    run.validate(bases.L, t)
    bases.check_window(cfg)
    g = bases.initial(cfg, run.t0).data
    ph = np.exp(-1j * bases.inter.energy * t)
    f, h = _current_vectors(bases.inter)
    # j is rank two: tr(j G(t)) = pref (h^T G(t) conj(f) - f^T G(t) conj(h)),
    # with G(t)_mn = G_mn e^{-i(E_m - E_n) t}
    fp, hp = f * ph, h * ph
    pref = params.tau * np.sqrt(2.0) / 2j
    val = (pref * (hp @ (g @ fp.conj()) - fp @ (g @ hp.conj()))).real
    return float(val if _direction(direction) is Direction.GAIN_LEAD1 else -val)


def current_series(times: Sequence[float], run: EngineRun, cfg: BathConfig, params: ModelParams,
                   bases: EngineBases, direction=Direction.GAIN_LEAD1) -> np.ndarray:
    """:func:`mean_current` on a grid of times."""
    return np.array([mean_current(float(t), run, cfg, params, bases, direction) for t in times])


@dataclass(frozen=True)
class RelaxationFit:
    """Decay rate of ``I(t) - I_stat`` fitted on ``[t_first, t_last]``.

    Model::

        exp(-r t) / t * sum_j (a_j cos w_j t + b_j sin w_j t) + c exp(-2 r t)

    At zero temperature the lead correlations fall off as ``1/x``; cutting
    the dot memory ``exp(-b x)`` at ``x = t`` leaves the first family,
    oscillating at ``w_j = mu_j - epsilon``.  The last term is the decay of
    the initial dot population, ``|exp(-b t)|^2``.  ``r`` is scanned on a
    grid and refined; amplitudes enter linearly.
    """

    rate: float
    residual: float
    stationary: float
    t_first: float
    t_last: float
    n_points: int
    coefficients: np.ndarray


def fit_relaxation(times, current, stationary: float, frequencies, t_first: float,
                   t_last: float | None = None, rate_max: float = 10.0) -> RelaxationFit:
    """Least-squares decay rate of a current transient (see :class:`RelaxationFit`)."""
    from scipy.optimize import minimize_scalar

    t = np.asarray(times, dtype=float)
    y = np.asarray(current, dtype=float) - stationary
    t_last = t[-1] if t_last is None else t_last
    m = (t >= t_first) & (t <= t_last)
    om = np.unique(np.abs(np.atleast_1d(np.asarray(frequencies, dtype=float))))
    tt, yy = t[m], y[m]
    if tt.size < 2 * om.size + 4:
        raise ConfigError("too few points inside the fit window")
    if tt[0] <= 0:
        raise ConfigError("fit window must start at t > 0")
    norm = float(np.sum(yy ** 2))
    if norm == 0.0:
        raise ConfigError("transient vanishes identically on the fit window")
    osc = np.hstack([np.cos(np.outer(tt, om)), np.sin(np.outer(tt, om))])
    s = tt - tt[0]

    def solve(r):
        a = np.hstack([(np.exp(-r * s) / tt)[:, None] * osc, np.exp(-2 * r * s)[:, None]])
        c, *_ = np.linalg.lstsq(a, yy, rcond=None)
        return float(np.sum((a @ c - yy) ** 2)) / norm, c

    grid = np.linspace(rate_max / 2000, rate_max, 2000)
    costs = np.array([solve(r)[0] for r in grid])
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    best = minimize_scalar(lambda r: solve(r)[0], bounds=(lo, hi), method="bounded",
                           options={"xatol": 1e-10})
    r = float(best.x) if best.fun <= costs[i] else float(grid[i])
    res, c = solve(r)
    return RelaxationFit(r, res, float(stationary), float(tt[0]), float(tt[-1]), int(tt.size), c)


def transient_window_end(times, current, stationary: float, floor: float, factor: float = 100.0) -> float:
    """Last time at which ``|I - I_stat|`` still exceeds ``factor * floor``."""
    t = np.asarray(times, dtype=float)
    env = np.maximum.accumulate(np.abs(np.asarray(current) - stationary)[::-1])[::-1]
    above = np.flatnonzero(env >= factor * floor)
    if above.size == 0:
        raise ConfigError("transient never rises above the noise floor")
    return float(t[above[-1]])


# -- dot wavefunction --------------------------------------------------------------

@dataclass(frozen=True)
class DotWaveReport:
    """Eigen-expansion of ``d(t)`` against the exact solution.

    ``amplitude_deviation`` compares the dot-to-dot coefficient with
    ``exp(-b t)``; ``wave_deviation`` is the sup over ``x`` of the lead
    kernel error against ``-i tau exp(-b (x + t))`` on ``(-t, 0)`` (0 elsewhere),
    evaluated at points at least ``margin`` away from its jumps at
    ``x = -t`` and ``x = 0``.
    """

    t: float
    amplitude_deviation: float
    wave_deviation: float
    x: np.ndarray
    kernel: np.ndarray
    exact: np.ndarray

    @property
    def max_deviation(self) -> float:
        return max(self.amplitude_deviation, self.wave_deviation)


def dot_wavefunction_check(t: float, basis: FiniteLBasis, params: ModelParams,
                           x=None, margin: float = 1.0) -> DotWaveReport:
    """Compare the eigen-expansion of ``d(t)`` with the closed-form solution.

    ``d(t) = sum_n h_n e^{-i p_n t} c_n`` and ``c_n`` reads the lead field
    through ``conj(u_n(x))``, so the lead kernel is
    ``K(x) = sum_n h_n e^{-i p_n t} conj(g_n(x))`` and the dot coefficient is
    ``sum_n |h_n|^2 e^{-i p_n t}``.
    """
    if basis.kind != "interacting":
        raise ConfigError("dot_wavefunction_check needs the interacting basis")
    if not 0 <= t < basis.L:
        raise ConfigError("need 0 <= t < L")
    L = basis.L
    e = basis.even
    p = basis.energy[e]
    h = basis.dot_amp[e]
    coef = h * np.exp(-1j * p * t) / basis.norm[e]
    b = params.b
    amp = complex(np.sum(np.abs(h) ** 2 * np.exp(-1j * p * t)))
    amp_dev = abs(amp - np.exp(-b * t))

    if x is None:
        x = np.linspace(-L, L, 801)[1:-1]
    x = np.asarray(x, dtype=float)
    far = (np.abs(x) >= margin) & (np.abs(x + t) >= margin) & (np.abs(x) <= L - margin)
    x = x[far]
    kern = np.empty(x.size, dtype=complex)
    right = coef * np.conj(basis.v[e])
    step = max(1, 2_000_000 // max(p.size, 1))
    for i in range(0, x.size, step):
        xs = x[i:i + step]
        waves = np.exp(-1j * np.outer(xs, p))
        kern[i:i + step] = np.where(xs > 0, waves @ right, waves @ coef)
    exact = np.where((x > -t) & (x < 0), -1j * params.tau * np.exp(-b * (x + t)), 0.0)
    wave_dev = float(np.max(np.abs(kern - exact), initial=0.0))
    return DotWaveReport(float(t), float(amp_dev), wave_dev, x, kern, exact)


# -- trace asymptotics ----------------------------------------------------------------

@dataclass(frozen=True)
class DeltaTraceReport:
    """``Tr[(D)^k]`` on a momentum grid versus ``t * (grid measure) / 2pi``."""

    k: int
    t: np.ndarray
    trace: np.ndarray
    predicted_slope: float
    fitted_slope: float
    remainder: np.ndarray

    @property
    def slope_error(self) -> float:
        return abs(self.fitted_slope - self.predicted_slope) / abs(self.predicted_slope)


def appendix_a_check(k: int, t_grid: Sequence[float], spacing: float = 0.01,
                     p_max: float = 5.0) -> DeltaTraceReport:
    """Cyclic convolution trace of ``delta_t(p) = (e^{ipt} - 1)/(2 pi i p)``.

    ``D[i, j] = h delta_t(p_i - p_j)`` on the grid ``p_i = -p_max + i h``
    with ``delta_t(0) = t / 2pi``.  The trace of ``D^k`` should grow as
    ``t * N h / 2pi`` plus a bounded remainder; the grid must be fine enough
    that ``t < 2 pi / h`` (no aliasing).
    """
    if k not in (1, 2, 3):
        raise ConfigError("k must be 1, 2 or 3")
    t = np.asarray(t_grid, dtype=float)
    h = float(spacing)
    if np.any(t * h >= 2 * np.pi):
        raise ConfigError("t_grid too long for the grid spacing (aliasing)")
    n = int(round(2 * p_max / h))
    p = -p_max + h * np.arange(n)
    dp = p[:, None] - p[None, :]
    traces = []
    for tt in t:
        with np.errstate(invalid="ignore", divide="ignore"):
            delta = np.expm1(1j * dp * tt) / (2j * np.pi * dp)
        delta[dp == 0] = tt / (2 * np.pi)
        d = h * delta
        if k == 1:
            tr = np.trace(d)
        elif k == 2:
            tr = np.sum(d * d.T)
        else:
            tr = np.sum((d @ d) * d.T)
        traces.append(complex(tr))
    traces = np.asarray(traces)
    pred = n * h / (2 * np.pi)
    fit = float(np.polyfit(t, traces.real, 1)[0]) if t.size > 1 else float("nan")
    return DeltaTraceReport(k, t, traces, pred, fit, traces - pred * t)
