"""Closed-form solution of the complete-graph (mean-field) model.

With ``H = -gamma J`` (``J`` the all-ones matrix, diagonal included),
``J**2 = N J`` and the propagator collapses to

    exp(-i H tau) = I - H / c,    c = N / (exp(i gamma tau N) - 1).

The single detector sits at site ``N``. Every survival and
first-detection probability then depends on ``tau`` only through

    x = (2/N) (1 - 1/N) (1 - cos(gamma tau N)).

The results below are written for ``gamma = 1`` (``tau`` stands for
``gamma * tau`` otherwise).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dynamics import StateVector, SurvivalSeries
from .errors import LatticeError

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MeanFieldSolution:
    """Scalars of the mean-field solution for ``N`` sites and interval ``tau``.

    ``inv_c = 1/c`` is always finite. ``c`` itself is infinite when
    ``tau N`` is a multiple of ``2 pi``, where the propagator is the
    identity. ``lambda2`` is the one non-trivial eigenvalue of the step
    operator, and ``|lambda2|**2 = 1 - x``.
    """

    N: int
    tau: float
    inv_c: complex
    x: float
    xi: float
    lambda2: complex

    @property
    def c(self) -> complex:
        if self.inv_c == 0:
            return complex(math.inf, 0.0)
        return 1.0 / self.inv_c

    @property
    def singular(self) -> bool:
        return self.inv_c == 0


def _is_period(theta: float) -> bool:
    r = math.remainder(theta, _TWO_PI)
    return abs(r) <= 1e-12 * max(1.0, abs(theta))


def mf_solve(N: int, tau: float) -> MeanFieldSolution:
    if N < 2:
        raise LatticeError(f"mean-field model needs N >= 2, got {N}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    theta = tau * N
    if _is_period(theta):
        return MeanFieldSolution(N, float(tau), 0j, 0.0, 0.0, 1.0 + 0j)
    one_minus_cos = 2.0 * math.sin(0.5 * theta) ** 2
    inv_c = (cmath.exp(1j * theta) - 1.0) / N
    x = (2.0 / N) * (1.0 - 1.0 / N) * one_minus_cos
    xi = (2.0 / N) * one_minus_cos
    return MeanFieldSolution(N, float(tau), inv_c, x, xi, 1.0 + (N - 1) * inv_c)


def mf_series(sol: MeanFieldSolution, ell: int, n_max: int, detector: int | None = None) -> SurvivalSeries:
    """Exact ``P_n`` and ``p_n`` for a start at site ``ell``.

    Away from the detector, ``p_n = x (1-x)**(n-1) / (N-1)`` and
    ``P_n = 1 - (1 - (1-x)**n) / (N-1)``. Starting on the detector,
    ``p_1 = 1 - x`` and ``P_n = x (1-x)**(n-1)``, so ``p_n = x**2
    (1-x)**(n-2)`` for ``n > 1``.

    ``detector`` defaults to ``N``. All sites are equivalent, so only
    whether ``ell`` equals the detector matters.
    """
    N = sol.N
    det = N if detector is None else int(detector)
    if not 1 <= ell <= N or not 1 <= det <= N:
        raise LatticeError(f"site out of range 1..{N}")
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    n = np.arange(1, n_max + 1)
    x = sol.x
    q = 1.0 - x
    if ell != det:
        qn = q**n
        P = 1.0 - (1.0 - qn) / (N - 1)
        p = (x / (N - 1)) * q ** (n - 1)
    else:
        P = x * q ** (n - 1)
        p = np.empty(n_max)
        p[0] = 1.0 - x
        p[1:] = x * x * q ** (n[1:] - 2)
    return SurvivalSeries(n, n * sol.tau, P, p, meta={"tau": sol.tau, "x": x})


def mf_total_detection(N: int, ell: int, detector: int | None = None) -> Fraction:
    """Limit of ``sum_n p_n``: ``1/(N-1)`` away from the detector, 1 on it.

    Holds whenever ``x > 0``. At ``x = 0`` nothing away from the detector is
    ever found.
    """
    det = N if detector is None else int(detector)
    if not 1 <= ell <= N:
        raise LatticeError(f"site {ell} out of range 1..{N}")
    return Fraction(1) if ell == det else Fraction(1, N - 1)


def mf_steady_state(N: int, ell: int) -> StateVector:
    """Long-time (un-normalised) state for a start at ``ell != N``.

    Amplitude ``(N-2)/(N-1)`` on ``ell``, ``-1/(N-1)`` on the other system
    sites and zero on the detector. It has zero total amplitude on the
    system, so the detector never receives any of it. Its squared norm is
    ``(N-2)/(N-1)``, the limit of ``P_n``.
    """
    if ell == N:
        raise LatticeError("a particle starting on the detector has no steady state")
    if not 1 <= ell < N:
        raise LatticeError(f"site {ell} out of range 1..{N - 1}")
    amp = np.full(N, -1.0 / (N - 1), dtype=np.complex128)
    amp[ell - 1] = (N - 2) / (N - 1)
    amp[N - 1] = 0.0
    return StateVector(amp)


def mf_eigensystem(sol: MeanFieldSolution) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenvalues, right eigenvectors (columns) and left eigenvectors (rows) of ``B (I - H/c)``.

    The pairs are bi-orthonormal (``L @ R = I``), so the step operator is
    ``R @ diag(lam) @ L``. Fails when ``lambda2 = 0`` (``x = 1``), where the
    two zero eigenvalues merge.
    """
    N = sol.N
    k = sol.inv_c
    if abs(1.0 + (N - 1) * k) < 1e-14:
        raise LatticeError("step operator is not diagonalisable at x = 1")
    lam = np.ones(N, dtype=np.complex128)
    lam[0] = 0.0
    lam[1] = sol.lambda2
    R = np.zeros((N, N), dtype=np.complex128)
    L = np.zeros((N, N), dtype=np.complex128)

    # 1 / (1 - c - N) written through 1/c so it stays finite as c -> inf
    r1 = k / (k * (1 - N) - 1.0)
    R[:, 0] = r1
    R[N - 1, 0] = 1.0
    L[0, N - 1] = 1.0

    R[: N - 1, 1] = 1.0 / (N - 1)
    L[1, : N - 1] = 1.0
    L[1, N - 1] = (N - 1) * k / (1.0 + (N - 1) * k)

    powers = np.arange(N - 1)
    for s in range(3, N + 1):
        omega = cmath.exp(2j * math.pi * (s - 2) / (N - 1))
        R[: N - 1, s - 1] = omega**powers / (N - 1)
        L[s - 1, : N - 1] = np.conj(omega) ** powers
    return lam, R, L
