"""Continuous evolution with a large absorbing potential on the detector sites.

    H_NH = H - i gamma Gamma sum_{a in D} |a><a|

For ``Gamma >> 1`` the system sites see, to second order in ``1/Gamma``,
the same effective Hamiltonian as the stroboscopic measurement problem
with ``tau gamma Gamma = 2``. The survival probabilities then agree.
Validity flags (``Gamma >> 1``, ``tau gamma << 1``) are reported rather
than enforced, so the breakdown of the mapping can be explored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import ComparisonReport, compare_series
from .dynamics import StateVector, SurvivalSeries, position_state
from .lattice import DetectorSet, Hamiltonian, chain_matrix
from .numerics import expm_complex

# Thresholds behind the validity flags.
GAMMA_LARGE = 10.0
TAU_GAMMA_SMALL = 0.1


@dataclass(frozen=True)
class AbsorbingHamiltonian:
    matrix: np.ndarray
    gamma: float
    Gamma: float
    detected: DetectorSet

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[0]


def build_hnh(h: Hamiltonian, d: DetectorSet, Gamma: float) -> AbsorbingHamiltonian:
    """Add ``-i gamma Gamma`` to the diagonal of every detector site (``Gamma = 0`` gives ``H``)."""
    if Gamma < 0:
        raise ValueError(f"Gamma must be non-negative, got {Gamma}")
    m = h.matrix.astype(np.complex128)
    det = list(d.detected)
    m[det, det] -= 1j * h.gamma * Gamma
    return AbsorbingHamiltonian(m, h.gamma, float(Gamma), d)


def gamma_for_tau(gamma: float, tau: float) -> float:
    """Absorption strength matching measurement interval ``tau``: ``Gamma = 2 / (gamma tau)``."""
    if not (gamma > 0 and tau > 0):
        raise ValueError("gamma and tau must be positive")
    return 2.0 / (gamma * tau)


def tau_for_gamma(gamma: float, Gamma: float) -> float:
    if not (gamma > 0 and Gamma > 0):
        raise ValueError("gamma and Gamma must be positive")
    return 2.0 / (gamma * Gamma)


def mapping_validity(gamma: float, tau: float, Gamma: float | None = None) -> dict:
    """Flags for the measurement/absorption correspondence at ``(gamma, tau, Gamma)``.

    ``Gamma`` defaults to the matched value. The result is JSON-ready.
    """
    if Gamma is None:
        Gamma = gamma_for_tau(gamma, tau)
    product = tau * gamma * Gamma
    return {
        "gamma": gamma,
        "tau": tau,
        "Gamma": Gamma,
        "tau_gamma_Gamma": product,
        "matched": abs(product - 2.0) <= 1e-9,
        "Gamma_large": Gamma >= GAMMA_LARGE,
        "tau_gamma_small": tau * gamma <= TAU_GAMMA_SMALL,
    }


def evolve_hnh(a: AbsorbingHamiltonian, psi0: StateVector, t_grid) -> SurvivalSeries:
    """Survival ``||exp(-i H_NH t) psi0||**2`` on an ascending time grid.

    A uniform grid uses one precomputed step exponential. Otherwise one
    exponential is computed per distinct spacing. Rows are numbered from 1,
    or from 0 when the grid starts at ``t = 0``.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be ascending and non-negative")
    if abs(psi0.norm_sq - 1.0) > 1e-12:
        raise ValueError(f"initial state not normalised (norm^2 = {psi0.norm_sq!r})")
    if len(psi0) != a.n_sites:
        raise ValueError(f"state has {len(psi0)} sites, H_NH acts on {a.n_sites}")

    steps = np.diff(np.concatenate(([0.0], t)))
    positive = steps[steps > 0]
    gen = -1j * a.matrix
    cache: dict[float, np.ndarray] = {}
    if positive.size and np.allclose(positive, positive[0], rtol=1e-9, atol=0.0):
        dt = float(positive[0])
        cache[dt] = expm_complex(gen * dt)
        steps = np.where(steps > 0, dt, 0.0)

    psi = psi0.amplitudes.copy()
    P = np.empty(t.size)
    for k, dt in enumerate(steps):
        if dt > 0:
            m = cache.get(dt)
            if m is None:
                m = cache[dt] = expm_complex(gen * dt)
            psi = m @ psi
        P[k] = np.vdot(psi, psi).real

    start = 0 if t[0] == 0 else 1
    n = np.arange(start, start + t.size)
    meta = {"Gamma": a.Gamma, "gamma": a.gamma, "Gamma_large": a.Gamma >= GAMMA_LARGE}
    return SurvivalSeries.from_survival(n, t, P, meta=meta)


@dataclass
class CorollaryReport:
    """Strong potential ``-iV`` on an N-chain vs weak ``-i gamma**2/V`` on an (N-1)-chain."""

    N: int
    V: float
    ell: int
    comparison: ComparisonReport
    strong: SurvivalSeries
    weak: SurvivalSeries

    def to_dict(self) -> dict:
        return {"N": self.N, "V": self.V, "ell": self.ell, **self.comparison.to_dict()}


def strong_weak_corollary_check(N: int, V: float, t_grid, ell: int | None = None,
                                gamma: float = 1.0) -> CorollaryReport:
    """Evolve both chains from site ``ell`` (default ``N // 2``) and compare survivals.

    The strong chain is the reference for relative errors.
    """
    if N < 3:
        raise ValueError("need N >= 3")
    if not V > 0:
        raise ValueError("V must be positive")
    ell = N // 2 if ell is None else int(ell)
    if not 1 <= ell <= N - 1:
        raise ValueError(f"ell must be a site of the shorter chain (1..{N - 1})")

    strong_h = Hamiltonian(chain_matrix(N, gamma), gamma, "chain-open", (N,))
    weak_h = Hamiltonian(chain_matrix(N - 1, gamma), gamma, "chain-open", (N - 1,))
    strong = build_hnh(strong_h, DetectorSet.from_detected([N - 1], N), V / gamma)
    weak = build_hnh(weak_h, DetectorSet.from_detected([N - 2], N - 1), gamma / V)

    s = evolve_hnh(strong, position_state(N, ell), t_grid)
    w = evolve_hnh(weak, position_state(N - 1, ell), t_grid)
    return CorollaryReport(N, float(V), ell, compare_series(s, w), s, w)
