"""Perturbative effective Hamiltonian and closed-form survival probabilities.

For small ``tau`` the measured dynamics restricted to system sites is
generated by the non-Hermitian

    H_eff = H_S - (i tau / 2) V_SD V_DS,

where ``V_SD`` is the system-detector block of ``H``. Each system site
coupled to a detector acquires a small absorbing potential.

First-order perturbation theory in that potential gives every eigenmode
``phi_s`` of ``H_S`` a decay rate ``alpha_s = -2 Im <phi_s|V_eff|phi_s>``.
For chains and rings the modes are sine waves, and an initially localised
particle survives with probability ``sum_s phi_s(l)**2 exp(-alpha_s t)``.
The ``*_P`` functions below evaluate these finite sums exactly. The
``*_asym`` functions are the continuum limits and are only meaningful in
the window ``x = t tau / N >> 1``, ``x / N**2 << 1``.

All site arguments are 1-based labels, as in the closed-form expressions.
``t`` may be a scalar or an array.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import StateVector, SurvivalSeries
from .errors import LatticeError
from .lattice import AXIS_LAYOUTS_2D, CASES_2D, DetectorSet, Hamiltonian
from .numerics import eig_sym, expm_complex


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """``H_eff`` on the system sites (``system`` gives their full-lattice indices)."""

    matrix: np.ndarray
    tau: float
    system: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DecayMode:
    """First-order mode: energy, decay rate and real amplitude profile on system sites."""

    index: int
    energy: float
    rate: float
    profile: np.ndarray


@dataclass(frozen=True)
class AsymptoticScale:
    """Dimensionless times for the continuum forms.

    ``x = t tau / N`` for a chain measured at one end, ``x_prime =
    2 t tau / (N - 1)`` for a chain measured at both ends.
    """

    x: float
    x_prime: float
    N: int

    @classmethod
    def of(cls, N: int, tau: float, t: float) -> "AsymptoticScale":
        return cls(t * tau / N, 2.0 * t * tau / (N - 1), N)

    @property
    def in_window(self) -> bool:
        """``x >= 1`` and ``x / N**2 <= 0.05``: past the ballistic transient, before the slowest mode dominates."""
        return self.x >= 1.0 and self.x / self.N**2 <= 0.05


def build_heff(h: Hamiltonian, d: DetectorSet, tau: float) -> EffectiveHamiltonian:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    sys, det = list(d.system), list(d.detected)
    if not sys:
        raise LatticeError("detector set leaves no system sites")
    hs = h.matrix[np.ix_(sys, sys)]
    v = h.matrix[np.ix_(sys, det)]
    m = hs.astype(np.complex128) - 0.5j * tau * (v @ v.T)
    return EffectiveHamiltonian(m, float(tau), tuple(sys))


def evolve_heff(
    heff: EffectiveHamiltonian,
    psi0: StateVector,
    n_max: int,
    snapshot_times=(),
) -> SurvivalSeries:
    """Sample ``exp(-i H_eff t) psi0`` at ``t = n tau``, ``n = 1..n_max``.

    The one-step exponential is computed once and applied repeatedly.
    ``psi0`` lives on the system sites only.
    """
    if abs(psi0.norm_sq - 1.0) > 1e-12:
        raise ValueError(f"initial state not normalised (norm^2 = {psi0.norm_sq!r})")
    if len(psi0) != heff.dim:
        raise ValueError(f"state has {len(psi0)} entries, H_eff acts on {heff.dim} system sites")
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    m = expm_complex(-1j * heff.tau * heff.matrix)
    snaps = set(snapshot_times)
    psi = psi0.amplitudes.copy()
    P = np.empty(n_max)
    snapshots = {}
    for k in range(n_max):
        psi = m @ psi
        P[k] = np.vdot(psi, psi).real
        if k + 1 in snaps:
            snapshots[k + 1] = StateVector(psi)
    n = np.arange(1, n_max + 1)
    return SurvivalSeries.from_survival(n, n * heff.tau, P, snapshots=snapshots, meta={"tau": heff.tau})


# -- sine-mode building blocks -------------------------------------------------


def _sine_profile(M: int, s: int, sites: np.ndarray, offset: int = 0) -> np.ndarray:
    """``sqrt(2/M) sin(s pi (l - offset) / M)`` on the given labels."""
    return math.sqrt(2.0 / M) * np.sin(s * math.pi * (sites - offset) / M)


def _mode_sum(weights: np.ndarray, rates: np.ndarray, t):
    t_arr = np.asarray(t, dtype=np.float64)
    out = np.exp(-np.multiply.outer(t_arr, rates)) @ weights
    return float(out) if out.ndim == 0 else out


def _check_t(t) -> None:
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")


def chain_open_weights(N: int, ell: int, tau: float, gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Mode weights ``phi_s(l)**2`` and rates for a chain measured at site ``N``.

    ``alpha_s = (2 tau gamma**2 / N) sin**2(s pi / N)``, ``s = 1..N-1``.
    """
    if not 1 <= ell <= N - 1:
        raise LatticeError(f"initial site {ell} not a system site of the {N}-site chain (1..{N - 1})")
    s = np.arange(1, N)
    # sin^2 is invariant under l -> N - l; folding first makes the symmetry exact in floating point
    w = (2.0 / N) * np.sin(s * math.pi * min(ell, N - ell) / N) ** 2
    a = (2.0 * tau * gamma**2 / N) * np.sin(s * math.pi / N) ** 2
    return w, a


def chain_both_ends_weights(N: int, ell: int, tau: float, gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Same for a chain measured at sites 1 and N (system sites 2..N-1).

    ``alpha'_s = (4 tau gamma**2 / (N-1)) sin**2(s pi / (N-1))``, ``s = 1..N-2``.
    """
    if N < 3:
        raise LatticeError("a chain measured at both ends needs N >= 3")
    if not 2 <= ell <= N - 1:
        raise LatticeError(f"initial site {ell} not a system site (2..{N - 1})")
    M = N - 1
    s = np.arange(1, N - 1)
    w = (2.0 / M) * np.sin(s * math.pi * (ell - 1) / M) ** 2
    a = (4.0 * tau * gamma**2 / M) * np.sin(s * math.pi / M) ** 2
    return w, a


def chain_open_P(N: int, ell: int, tau: float, t, gamma: float = 1.0):
    """Survival on an open chain measured at its last site, started at ``ell``.

    Sums ``(2/N) sin**2(s pi l / N) exp(-alpha_s t)`` over ``s = 1..N-1``;
    the ``s = N`` term would vanish identically. Symmetric under
    ``ell -> N - ell``.
    """
    _check_t(t)
    return _mode_sum(*chain_open_weights(N, ell, tau, gamma), t)


def chain_both_ends_P(N: int, ell: int, tau: float, t, gamma: float = 1.0):
    """Survival on an open chain measured at both ends, started at ``ell`` in 2..N-1."""
    _check_t(t)
    return _mode_sum(*chain_both_ends_weights(N, ell, tau, gamma), t)


def chain_open_P_asym(ell: float, x):
    """Continuum form of ``chain_open_P`` with ``x = t tau / N``.

    ``(1 / sqrt(2 pi x)) * (1 - exp(-l**2 / (2x)))``. Modes near both band
    edges (``s ~ 0`` and ``s ~ N``) decay slowly and contribute equally,
    which is where the overall factor comes from. ``ell`` is the distance
    to the wall opposite the detector; for a start near the detector pass
    ``N - ell``. Bulk starts decay as ``x**-0.5``; for ``x >> ell**2`` the
    decay is ``x**-1.5``.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    out = (1.0 - np.exp(-(ell**2) / (2.0 * x))) / np.sqrt(2.0 * math.pi * x)
    return float(out) if out.ndim == 0 else out


def chain_both_ends_P_asym(ell: float, x_prime):
    """Continuum form of ``chain_both_ends_P`` with ``x' = 2 t tau / (N - 1)``; ``ell - 1`` is the distance to site 1."""
    return chain_open_P_asym(ell - 1, x_prime)


def ring_weights(N: int, ell: int, tau: float, gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray, float]:
    """Decaying-mode weights, their rates, and the plateau for a ring measured at site ``N``.

    The system is the open chain of sites 1..N-1. Modes with even ``s``
    vanish on both neighbours of the detector and never decay. Odd modes
    decay at ``alpha_s = 4 tau gamma**2 phi_s(1)**2``.
    """
    if N % 2 or N < 4:
        raise LatticeError(f"ring formulas need an even N >= 4, got {N}")
    if not 1 <= ell <= N:
        raise LatticeError(f"initial site {ell} out of range 1..{N}")
    s = np.arange(1, N)
    dist = min(ell % N, N - ell % N)
    w = (2.0 / N) * np.sin(s * math.pi * dist / N) ** 2
    odd = s % 2 == 1
    rates = 4.0 * tau * gamma**2 * (2.0 / N) * np.sin(s[odd] * math.pi / N) ** 2
    return w[odd], rates, float(np.sum(w[~odd]))


def ring_P(N: int, ell: int, tau: float, t, gamma: float = 1.0):
    """Survival on an even ring measured at site ``N``; returns ``(P(t), P(inf))``.

    The plateau is the initial weight on the non-decaying modes: 1/2 for
    every start except ``ell = N/2`` (and ``ell = N``), where it is zero.
    A start on the detector itself (``ell = N``) has zero weight on every
    system mode, so the formula gives ``P = 0``. The exact first step leaves
    ``O(tau**2)`` behind there.
    """
    _check_t(t)
    w, a, plateau = ring_weights(N, ell, tau, gamma)
    excess = _mode_sum(w, a, t)
    return excess + plateau, plateau


def ring_P_asym(ell: float, x):
    """Continuum form of ``P(t) - P(inf)`` on the ring, ``x = t tau / N``.

    ``(1 / (4 sqrt(2 pi x))) * (1 - exp(-l**2 / (8x)))``, counting both band
    edges. ``ell`` is the distance to the detector. The two ways round the
    ring are treated as independent, which fails near the antipode: at
    ``l = N/2`` every decaying mode has full weight and the true excess is
    twice this value.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    out = (1.0 - np.exp(-(ell**2) / (8.0 * x))) / (4.0 * np.sqrt(2.0 * math.pi * x))
    return float(out) if out.ndim == 0 else out


def _axis_P(layout: str, N: int, ell: int, tau: float, t, gamma: float):
    if layout == "none":
        if not 1 <= ell <= N:
            raise LatticeError(f"coordinate {ell} out of range 1..{N}")
        return 1.0
    if layout == "end":
        return chain_open_P(N, ell, tau, t, gamma)
    return chain_both_ends_P(N, ell, tau, t, gamma)


def square2d_P(case: str, N: int, ellx: int, elly: int, tau: float, t, gamma: float = 1.0):
    """Survival on the N x N square lattice for detector case (i)-(v).

    The factorised step operator makes the survival a product of two chain
    survivals. One factor is exact for every ``tau`` when an axis is
    unmeasured (cases i and ii).
    """
    if case not in CASES_2D:
        raise LatticeError(f"unknown 2D case {case!r}")
    _check_t(t)
    lx, ly = AXIS_LAYOUTS_2D[case]
    return _axis_P(lx, N, ellx, tau, t, gamma) * _axis_P(ly, N, elly, tau, t, gamma)


def square2d_P_asym(case: str, N: int, ellx: int, elly: int, tau: float, t):
    """Product of the per-axis continuum forms.

    Coordinates are reduced to the distance from the nearest wall in the
    chain-measured-at-one-end geometry, or from site 1 for two-ended axes.
    """
    scale = AsymptoticScale.of(N, tau, np.asarray(t, dtype=np.float64))
    out = 1.0
    for layout, ell in zip(AXIS_LAYOUTS_2D[case], (ellx, elly)):
        if layout == "end":
            out = out * chain_open_P_asym(min(ell, N - ell), scale.x)
        elif layout == "both-ends":
            out = out * chain_both_ends_P_asym(min(ell, N + 1 - ell), scale.x_prime)
    return out


# -- decay modes ----------------------------------------------------------------


def _analytic_kind(h: Hamiltonian, d: DetectorSet) -> str | None:
    N = h.n_sites
    if h.geometry == "chain-open":
        if d.detected == (N - 1,):
            return "chain-end"
        if d.detected == (0, N - 1) and N >= 3:
            return "chain-both"
    if h.geometry == "ring" and d.detected == (N - 1,) and N % 2 == 0 and N >= 4:
        return "ring"
    return None


def decay_modes(h: Hamiltonian, d: DetectorSet, tau: float, method: str = "auto") -> list[DecayMode]:
    """First-order decay modes of ``H_eff``, sorted by rate (ties by index).

    ``method="analytic"`` uses the sine modes of the open chain (detector
    at N or at both ends) or of the even ring (detector at N). Mode energies
    are ``-2 gamma cos(s pi / M)`` in both cases, matching the sign of the
    hopping matrix. ``method="numerical"`` diagonalises ``H_S`` and takes
    ``alpha = -2 Im <phi|V_eff|phi>``; it warns when ``H_S`` is degenerate,
    because non-degenerate first-order theory then depends on the basis the
    eigensolver picks. ``"auto"`` prefers the analytic route when it applies.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    kind = _analytic_kind(h, d)
    if method == "analytic" and kind is None:
        raise LatticeError(f"no closed-form modes for geometry {h.geometry!r} with detectors {d.detected_sites()}")
    if method not in ("auto", "analytic", "numerical"):
        raise ValueError(f"unknown method {method!r}")

    g = h.gamma
    N = h.n_sites
    modes: list[DecayMode] = []
    if kind is not None and method != "numerical":
        if kind == "chain-both":
            M = N - 1
            sites = np.arange(2, N)
            for s in range(1, N - 1):
                rate = (4.0 * tau * g**2 / M) * math.sin(s * math.pi / M) ** 2
                modes.append(DecayMode(s, -2.0 * g * math.cos(s * math.pi / M), rate,
                                       _sine_profile(M, s, sites, offset=1)))
        else:
            sites = np.arange(1, N)
            for s in range(1, N):
                sin2 = math.sin(s * math.pi / N) ** 2
                if kind == "chain-end":
                    rate = (2.0 * tau * g**2 / N) * sin2
                else:
                    rate = 0.0 if s % 2 == 0 else (8.0 * tau * g**2 / N) * sin2
                modes.append(DecayMode(s, -2.0 * g * math.cos(s * math.pi / N), rate,
                                       _sine_profile(N, s, sites)))
    else:
        sys, det = list(d.system), list(d.detected)
        if not sys:
            raise LatticeError("detector set leaves no system sites")
        spec = eig_sym(h.matrix[np.ix_(sys, sys)])
        gaps = np.diff(spec.eigenvalues)
        if gaps.size and np.min(gaps) < 1e-9:
            warnings.warn("H_S has degenerate eigenvalues; first-order rates depend on the eigenbasis",
                          stacklevel=2)
        coupling = spec.eigenvectors.T @ h.matrix[np.ix_(sys, det)]
        rates = tau * np.sum(coupling**2, axis=1)
        for k in range(len(sys)):
            modes.append(DecayMode(k + 1, float(spec.eigenvalues[k]), float(rates[k]),
                                   spec.eigenvectors[:, k].copy()))
    modes.sort(key=lambda m: (m.rate, m.index))
    return modes
