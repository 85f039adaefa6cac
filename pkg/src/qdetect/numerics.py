"""Dense linear-algebra kernels.

Hermitian generators are exponentiated spectrally (``eig_sym`` +
``propagator``), which is unitary up to round-off. Non-normal generators
(effective and absorbing Hamiltonians) go through ``expm_complex``, a
scaling-and-squaring Padé implementation.

All arrays returned from this module are plain ``numpy.ndarray``; the
spectral decomposition is frozen (read-only arrays).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NumericalError

#: Default hard cap on the side length of any dense matrix we build.
MAX_DIM = 4096

_RECONSTRUCTION_TOL = 1e-10
_ORTHONORMALITY_TOL = 1e-12


def check_dim(dim: int, max_dim: int | None = None) -> None:
    cap = MAX_DIM if max_dim is None else max_dim
    if dim > cap:
        raise CapacityError(f"matrix dimension {dim} exceeds cap {cap}")


def as_real_symmetric(m) -> np.ndarray:
    """Validate and return ``m`` as a float64 square symmetric array.

    Symmetry is checked exactly (tolerance 0): every builder in this
    package assembles both triangles from the same numbers.
    """
    a = np.asarray(m)
    if np.iscomplexobj(a):
        if np.any(a.imag != 0):
            raise ValueError("matrix has non-zero imaginary part")
        a = a.real
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix is not symmetric")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    Each eigenvector's first component with magnitude above ``1e-10`` is
    positive, which makes the output reproducible across runs.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _fix_signs(q: np.ndarray) -> np.ndarray:
    q = q.copy()
    for j in range(q.shape[1]):
        col = q[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size and col[nz[0]] < 0:
            q[:, j] = -col
    return q


def eig_sym(m) -> SpectralDecomposition:
    """Symmetric eigendecomposition backed by LAPACK ``syevd``.

    Raises
    ------
    NumericalError
        If the solver does not converge, or the decomposition fails the
        reconstruction (``1e-10`` relative Frobenius) or orthonormality
        (``1e-12``) checks.
    """
    a = as_real_symmetric(m)
    dim = a.shape[0]
    check_dim(dim)
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}", dim=dim) from exc
    q = _fix_signs(q)
    spec = SpectralDecomposition(w, q)

    with np.errstate(over="ignore", invalid="ignore"):
        scale = max(np.linalg.norm(a), 1.0)
        residual = np.linalg.norm(spec.reconstruct() - a) / scale
    # written so that a NaN residual also fails
    if not residual <= _RECONSTRUCTION_TOL:
        raise NumericalError(
            f"eigendecomposition residual {residual:.3e} too large", dim=dim, residual=residual
        )
    ortho = np.max(np.abs(q.T @ q - np.eye(dim)))
    if not ortho <= _ORTHONORMALITY_TOL:
        raise NumericalError(
            f"eigenvectors not orthonormal (max deviation {ortho:.3e})", dim=dim, residual=ortho
        )
    return spec


def propagator(spec: SpectralDecomposition, t: float) -> np.ndarray:
    """Return ``exp(-i H t)`` as ``Q diag(exp(-i lambda t)) Q^T``."""
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    q = spec.eigenvectors
    phases = np.exp(-1j * spec.eigenvalues * t)
    return (q * phases) @ q.T


# Padé coefficients and theta thresholds for the degree 3, 5, 7, 9, 13
# approximants (Higham 2005, double precision).
_PADE_B = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(a: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE_B[m]
    ident = np.eye(a.shape[0], dtype=a.dtype)
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
        return u, v
    powers = [ident, a2]
    for _ in range(2, (m + 1) // 2):
        powers.append(powers[-1] @ a2)
    u = sum(b[k] * powers[k // 2] for k in range(m, 0, -2))
    v = sum(b[k] * powers[k // 2] for k in range(m - 1, -1, -2))
    return a @ u, v


def expm_complex(m) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Padé approximant.

    Picks the cheapest of the degree 3/5/7/9 approximants whose theta bound
    covers ``||m||_1``; otherwise scales by ``2**-s`` into the degree-13
    range and squares ``s`` times.
    """
    a = np.array(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    dim = a.shape[0]
    check_dim(dim)
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries", dim=dim)

    with np.errstate(over="ignore"):
        norm1 = np.linalg.norm(a, 1)
    if not math.isfinite(norm1):
        raise NumericalError("1-norm overflows", dim=dim)

    s = 0
    for deg in (3, 5, 7, 9):
        if norm1 <= _THETA[deg]:
            u, v = _pade_uv(a, deg)
            break
    else:
        deg = 13
        if norm1 > _THETA[13]:
            s = max(0, math.ceil(math.log2(norm1 / _THETA[13])))
            a = a / 2.0**s
        u, v = _pade_uv(a, 13)

    try:
        r = np.linalg.solve(v - u, v + u)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Padé denominator singular: {exc}", dim=dim) from exc
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            r = r @ r
    if not np.all(np.isfinite(r)):
        raise NumericalError(f"exponential overflowed after {s} squarings", dim=dim, residual=norm1)
    return r


def kron(a, b, max_dim: int | None = None) -> np.ndarray:
    """Kronecker product with the row-major convention ``(i, j) -> i*len(b) + j``."""
    a = np.asarray(a)
    b = np.asarray(b)
    check_dim(a.shape[0] * b.shape[0], max_dim)
    check_dim(a.shape[1] * b.shape[1], max_dim)
    return np.kron(a, b)
