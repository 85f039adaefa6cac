"""Stroboscopic measurement dynamics: the ground-truth engine.

Between measurements the state evolves with ``U = exp(-i H tau)``; each
measurement that does not find the particle projects it with ``B`` (the
identity on system sites, zero on detectors). With the one-step operator
``Ut = B U`` the un-normalised state after ``n`` null measurements is
``Ut**n psi0`` and its squared norm is the survival probability ``P_n``.
The first-detection probability is ``p_n = P_{n-1} - P_n``.

States are never renormalised; a snapshot at step ``n`` has squared norm
``P_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConsistencyError, LatticeError
from .lattice import (
    AXIS_LAYOUTS_2D,
    DetectorSet,
    Hamiltonian,
    axis_system_2d,
    chain_matrix,
    site_to_index,
)
from .numerics import eig_sym, kron, propagator

_NORM_TOL = 1e-12
_PROB_TOL = 1e-9


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over sites, with the squared norm cached."""

    amplitudes: np.ndarray
    norm_sq: float = field(init=False)

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=np.complex128).ravel()
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "norm_sq", float(np.vdot(amp, amp).real))

    def __len__(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class MeasurementProtocol:
    """Measurement interval ``tau``, number of measurements and snapshot steps."""

    tau: float
    n_max: int
    snapshot_times: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if int(self.n_max) < 1:
            raise ValueError(f"n_max must be at least 1, got {self.n_max}")
        bad = [n for n in self.snapshot_times if not 1 <= n <= self.n_max]
        if bad:
            raise ValueError(f"snapshot steps {bad} outside 1..{self.n_max}")


@dataclass
class SurvivalSeries:
    """Per-measurement survival ``P`` and first-detection ``p`` on steps ``n``.

    ``P_0 = 1`` is implied and not stored. ``snapshots`` maps a step to the
    un-normalised state after that measurement; ``meta`` holds free-form
    run information (engine name, validity flags...).
    """

    n: np.ndarray
    t: np.ndarray
    P: np.ndarray
    p: np.ndarray
    snapshots: dict[int, StateVector] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.n.shape[0]

    def rows(self):
        for row in zip(self.n.tolist(), self.t.tolist(), self.P.tolist(), self.p.tolist()):
            yield row

    @classmethod
    def from_survival(cls, n, t, P, *, start: float = 1.0, check: bool = True, **kwargs) -> "SurvivalSeries":
        """Build a series from raw survival values.

        First-detection probabilities are differenced against ``start`` (the
        survival just before the first row). With ``check`` the raw values
        are validated against the ``-1e-9`` round-off budget before being
        clamped into [0, 1].
        """
        n = np.asarray(n, dtype=np.int64)
        t = np.asarray(t, dtype=np.float64)
        raw = np.asarray(P, dtype=np.float64)
        p_raw = np.empty_like(raw)
        if raw.size:
            p_raw[0] = start - raw[0]
            p_raw[1:] = raw[:-1] - raw[1:]
        if check:
            _check_probabilities(n, raw, p_raw)
        return cls(n, t, np.clip(raw, 0.0, 1.0), np.clip(p_raw, 0.0, 1.0), **kwargs)


def _check_probabilities(n: np.ndarray, P: np.ndarray, p: np.ndarray) -> None:
    bad = (P < -_PROB_TOL) | (P > 1 + _PROB_TOL) | (p < -_PROB_TOL) | ~np.isfinite(P)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConsistencyError(
            f"probabilities out of range at n={int(n[k])}: P_n={P[k]!r}, p_n={p[k]!r}",
            n=int(n[k]),
            P=float(P[k]),
            p=float(p[k]),
        )


@dataclass(frozen=True)
class StepOperator:
    """Full-space one-step operator ``B exp(-i H tau)``; detector rows are zero."""

    matrix: np.ndarray
    tau: float

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class KroneckerStepOperator:
    """Square-lattice step ``(Bx U) (x) (By U)`` stored as its two N x N factors.

    The state is kept as an ``N x N`` array ``psi[lx-1, ly-1]``; one step is
    ``Ax @ psi @ Ay.T``.
    """

    ax: np.ndarray
    ay: np.ndarray
    tau: float

    @property
    def N(self) -> int:
        return self.ax.shape[0]

    @property
    def n_sites(self) -> int:
        return self.N * self.N

    def to_dense(self) -> np.ndarray:
        return kron(self.ax, self.ay)


StepLike = Union[StepOperator, KroneckerStepOperator]


def step_operator(h: Hamiltonian, d: DetectorSet, tau: float) -> StepOperator:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if d.n_sites != h.n_sites:
        raise LatticeError(f"detector set covers {d.n_sites} sites, Hamiltonian has {h.n_sites}")
    u = propagator(eig_sym(h.matrix), tau)
    u[list(d.detected), :] = 0.0
    return StepOperator(u, float(tau))


def _axis_factor(u: np.ndarray, keep: list[int]) -> np.ndarray:
    b = np.zeros(u.shape[0])
    b[[k - 1 for k in keep]] = 1.0
    return b[:, None] * u


def kron_step_operator(case: str, N: int, tau: float, gamma: float = 1.0) -> KroneckerStepOperator:
    """Factorised step operator for one of the square-lattice detector cases."""
    if case not in AXIS_LAYOUTS_2D:
        raise LatticeError(f"unknown 2D case {case!r}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    u = propagator(eig_sym(chain_matrix(N, gamma)), tau)
    keep_x, keep_y = axis_system_2d(case, N)
    return KroneckerStepOperator(_axis_factor(u, keep_x), _axis_factor(u, keep_y), float(tau))


def evolve(u: StepLike, psi0: StateVector, proto: MeasurementProtocol) -> SurvivalSeries:
    """Iterate ``psi <- Ut psi`` for ``proto.n_max`` measurements.

    Raises
    ------
    ValueError
        If ``psi0`` is not normalised to within ``1e-12``.
    ConsistencyError
        If any ``P_n`` or ``p_n`` falls below ``-1e-9`` (or ``P_n`` exceeds
        ``1 + 1e-9``).
    """
    if abs(psi0.norm_sq - 1.0) > _NORM_TOL:
        raise ValueError(f"initial state not normalised (norm^2 = {psi0.norm_sq!r})")
    if len(psi0) != u.n_sites:
        raise ValueError(f"state has {len(psi0)} sites, step operator acts on {u.n_sites}")
    tau = float(proto.tau)
    if abs(u.tau - tau) > 1e-15 * max(1.0, tau):
        raise ValueError(f"step operator built for tau={u.tau}, protocol has tau={tau}")

    n_max = int(proto.n_max)
    snaps = set(proto.snapshot_times)
    P = np.empty(n_max)
    snapshots: dict[int, StateVector] = {}

    if isinstance(u, KroneckerStepOperator):
        ax, ayt = u.ax, u.ay.T
        psi = psi0.amplitudes.reshape(u.N, u.N).copy()
        for k in range(n_max):
            psi = ax @ psi @ ayt
            P[k] = np.vdot(psi, psi).real
            if k + 1 in snaps:
                snapshots[k + 1] = StateVector(psi)
    else:
        mat = u.matrix
        psi = psi0.amplitudes.copy()
        if snaps:
            for k in range(n_max):
                psi = mat @ psi
                P[k] = np.vdot(psi, psi).real
                if k + 1 in snaps:
                    snapshots[k + 1] = StateVector(psi)
        else:
            for k in range(n_max):
                psi = mat @ psi
                P[k] = np.vdot(psi, psi).real

    n = np.arange(1, n_max + 1)
    return SurvivalSeries.from_survival(n, n * tau, P, snapshots=snapshots, meta={"tau": tau})


def first_detection_stats(s: SurvivalSeries) -> tuple[float, float | None]:
    """Total detection probability and the mean detection step given detection.

    The mean is ``None`` when the total is below ``1e-12``.
    """
    if len(s) == 0:
        raise ValueError("empty series")
    total = float(np.sum(s.p))
    if total < 1e-12:
        return total, None
    return total, float(np.sum(s.n * s.p) / total)


def position_state(n_sites: int, site: int) -> StateVector:
    """Particle localised on ``site`` (1-based)."""
    amp = np.zeros(n_sites, dtype=np.complex128)
    amp[site_to_index(site, n_sites)] = 1.0
    return StateVector(amp)


def system_eigenstate(h: Hamiltonian, d: DetectorSet, s: int) -> StateVector:
    """The ``s``-th (1-based, ascending energy) eigenvector of ``H_S``, padded with zeros on detectors."""
    sys = list(d.system)
    if not sys:
        raise LatticeError("no system sites")
    if not 1 <= s <= len(sys):
        raise LatticeError(f"eigenstate index {s} out of range 1..{len(sys)}")
    hs = h.matrix[np.ix_(sys, sys)]
    vec = eig_sym(hs).eigenvectors[:, s - 1]
    return StateVector(embed(vec, d))


def restrict(psi: StateVector, d: DetectorSet) -> StateVector:
    """Amplitudes on system sites only, in ``d.system`` order."""
    return StateVector(psi.amplitudes[list(d.system)])


def embed(amplitudes, d: DetectorSet) -> np.ndarray:
    full = np.zeros(d.n_sites, dtype=np.complex128)
    full[list(d.system)] = amplitudes
    return full
