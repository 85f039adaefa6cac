"""Hamiltonians and detector sets for the supported lattices.

Sites are labelled 1..N in everything a user sees (config files, graph
files, CSV output, analytic formulas) and 0..N-1 inside arrays. The two
conversions ``site_to_index`` / ``index_to_site`` are the only place the
offset lives.

Two-dimensional square lattices are flattened row-major in the x label:
site ``(lx, ly)`` has label ``(lx - 1) * N + ly``, so that an operator
``A (x) B`` acts with ``A`` on the x coordinate and ``B`` on y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GraphFormatError, LatticeError
from .numerics import check_dim

GEOMETRIES = ("chain-open", "ring", "square-open", "complete", "custom")
CASES_2D = ("2d-case-i", "2d-case-ii", "2d-case-iii", "2d-case-iv", "2d-case-v")
LAYOUTS = ("end", "both-ends", "block-end", "single", "explicit") + CASES_2D

# Per-axis detector placement for the square-lattice cases: "none" leaves the
# axis free, "end" detects at coordinate N, "both-ends" at 1 and N.
AXIS_LAYOUTS_2D = {
    "2d-case-i": ("end", "none"),
    "2d-case-ii": ("both-ends", "none"),
    "2d-case-iii": ("end", "end"),
    "2d-case-iv": ("both-ends", "end"),
    "2d-case-v": ("both-ends", "both-ends"),
}


def site_to_index(site: int, n_sites: int) -> int:
    """1-based site label -> 0-based array index."""
    site = int(site)
    if not 1 <= site <= n_sites:
        raise LatticeError(f"site {site} out of range 1..{n_sites}")
    return site - 1


def index_to_site(index: int) -> int:
    return int(index) + 1


def flat_site_2d(lx: int, ly: int, N: int) -> int:
    """Label of square-lattice site ``(lx, ly)``, both 1-based."""
    if not (1 <= lx <= N and 1 <= ly <= N):
        raise LatticeError(f"site ({lx}, {ly}) outside the {N}x{N} lattice")
    return (lx - 1) * N + ly


def coords_2d(site: int, N: int) -> tuple[int, int]:
    """Inverse of ``flat_site_2d``."""
    i = site_to_index(site, N * N)
    return i // N + 1, i % N + 1


@dataclass(frozen=True)
class Hamiltonian:
    """Real symmetric hopping matrix plus the lattice it came from."""

    matrix: np.ndarray
    gamma: float
    geometry: str
    lattice_dims: tuple[int, ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DetectorSet:
    """Measured sites ``detected`` and their complement ``system`` (0-based, sorted)."""

    detected: tuple[int, ...]
    system: tuple[int, ...]

    @classmethod
    def from_detected(cls, detected, n_sites: int) -> "DetectorSet":
        d = sorted(set(int(i) for i in detected))
        for i in d:
            if not 0 <= i < n_sites:
                raise LatticeError(f"detector site {i + 1} out of range 1..{n_sites}")
        dset = set(d)
        return cls(tuple(d), tuple(i for i in range(n_sites) if i not in dset))

    @property
    def n_sites(self) -> int:
        return len(self.detected) + len(self.system)

    def detected_sites(self) -> list[int]:
        """Detector labels, 1-based."""
        return [index_to_site(i) for i in self.detected]

    def system_sites(self) -> list[int]:
        return [index_to_site(i) for i in self.system]

    def projector_diag(self) -> np.ndarray:
        """Diagonal of ``B``: 1 on system sites, 0 on detectors."""
        b = np.ones(self.n_sites)
        b[list(self.detected)] = 0.0
        return b


@dataclass(frozen=True)
class LatticeSpec:
    """What to build: geometry, size per dimension, hopping and detector layout.

    ``layout_args`` carries the integer parameters of the layout: the block
    size for ``block-end``, the site for ``single`` and the site list for
    ``explicit`` (all 1-based). Set ``analytic`` when closed-form survival
    formulas will be evaluated; a ring then has to have an even number of
    sites.
    """

    geometry: str
    N: int
    gamma: float = 1.0
    layout: str = "end"
    layout_args: tuple[int, ...] = ()
    analytic: bool = False


def parse_layout(text: str) -> tuple[str, tuple[int, ...]]:
    """Parse ``"block-end 3"``, ``"single 5"``, ``"explicit 1 4 9"``, ``"end"``...

    Commas are accepted as separators too.
    """
    parts = text.replace(",", " ").split()
    if not parts:
        raise LatticeError("empty detector layout")
    tag = parts[0].lower()
    if tag not in LAYOUTS:
        raise LatticeError(f"unknown detector layout {tag!r}; expected one of {', '.join(LAYOUTS)}")
    try:
        args = tuple(int(p) for p in parts[1:])
    except ValueError as exc:
        raise LatticeError(f"layout arguments must be integers: {text!r}") from exc
    return tag, args


def chain_matrix(N: int, gamma: float = 1.0) -> np.ndarray:
    h = np.zeros((N, N))
    i = np.arange(N - 1)
    h[i, i + 1] = -gamma
    h[i + 1, i] = -gamma
    return h


def ring_matrix(N: int, gamma: float = 1.0) -> np.ndarray:
    h = chain_matrix(N, gamma)
    h[0, N - 1] = -gamma
    h[N - 1, 0] = -gamma
    return h


def square_matrix(N: int, gamma: float = 1.0) -> np.ndarray:
    c = chain_matrix(N, gamma)
    eye = np.eye(N)
    return np.kron(c, eye) + np.kron(eye, c)


def complete_matrix(N: int, gamma: float = 1.0) -> np.ndarray:
    return np.full((N, N), -float(gamma))


def _axis_system(axis_layout: str, N: int) -> list[int]:
    """1-based coordinates left unmeasured along one axis."""
    if axis_layout == "none":
        return list(range(1, N + 1))
    if axis_layout == "end":
        return list(range(1, N))
    return list(range(2, N))


def detectors_2d(case: str, N: int) -> list[int]:
    """Detector labels of a square-lattice case, enumerated edge by edge.

    Case (iii) puts the corner ``(N, N)`` in the ``ly = N`` edge and takes
    ``ly = 1..N-1`` along ``lx = N``; the other cases follow the same rule
    of never listing a site twice.
    """
    if case not in CASES_2D:
        raise LatticeError(f"unknown 2D case {case!r}")
    sites: list[tuple[int, int]] = []
    full = range(1, N + 1)
    inner = range(2, N)
    if case == "2d-case-i":
        sites += [(N, ly) for ly in full]
    elif case == "2d-case-ii":
        sites += [(1, ly) for ly in full] + [(N, ly) for ly in full]
    elif case == "2d-case-iii":
        sites += [(lx, N) for lx in full] + [(N, ly) for ly in range(1, N)]
    elif case == "2d-case-iv":
        sites += [(1, ly) for ly in full] + [(N, ly) for ly in full]
        sites += [(lx, N) for lx in inner]
    else:
        sites += [(lx, 1) for lx in full] + [(lx, N) for lx in full]
        sites += [(1, ly) for ly in inner] + [(N, ly) for ly in inner]
    return sorted(flat_site_2d(lx, ly, N) for lx, ly in sites)


def axis_system_2d(case: str, N: int) -> tuple[list[int], list[int]]:
    """Unmeasured 1-based coordinates along x and y for a square-lattice case."""
    ax, ay = AXIS_LAYOUTS_2D[case]
    return _axis_system(ax, N), _axis_system(ay, N)


def _detectors_1d(spec: LatticeSpec, n_sites: int) -> list[int]:
    N, tag, args = spec.N, spec.layout, spec.layout_args
    if tag == "end":
        return [n_sites]
    if tag == "both-ends":
        return [1, n_sites]
    if tag == "block-end":
        if len(args) != 1 or not 1 <= args[0] < N:
            raise LatticeError(f"block-end needs one block size in 1..{N - 1}, got {args}")
        return list(range(n_sites - args[0] + 1, n_sites + 1))
    raise LatticeError(f"layout {tag!r} not available for geometry {spec.geometry!r}")


def build(spec: LatticeSpec) -> tuple[Hamiltonian, DetectorSet]:
    """Assemble the Hamiltonian and detector set described by ``spec``."""
    if spec.geometry not in GEOMETRIES or spec.geometry == "custom":
        raise LatticeError(f"cannot build geometry {spec.geometry!r}; use load_graph for custom graphs")
    N = int(spec.N)
    if N < 2:
        raise LatticeError(f"N must be at least 2, got {N}")
    gamma = float(spec.gamma)
    notes: list[str] = []

    if spec.geometry == "chain-open":
        mat, dims = chain_matrix(N, gamma), (N,)
    elif spec.geometry == "ring":
        if N < 3:
            raise LatticeError("a ring needs at least 3 sites")
        if N % 2:
            if spec.analytic:
                raise LatticeError(f"ring analytics need an even number of sites, got N={N}")
            msg = f"odd ring (N={N}): closed-form ring results do not apply"
            warnings.warn(msg, stacklevel=2)
            notes.append(msg)
        mat, dims = ring_matrix(N, gamma), (N,)
    elif spec.geometry == "square-open":
        check_dim(N * N)
        mat, dims = square_matrix(N, gamma), (N, N)
    else:
        mat, dims = complete_matrix(N, gamma), (N,)
    n_sites = mat.shape[0]

    tag = spec.layout
    if tag in CASES_2D:
        if spec.geometry != "square-open":
            raise LatticeError(f"layout {tag!r} needs geometry square-open")
        labels = detectors_2d(tag, N)
    elif tag == "single":
        if len(spec.layout_args) != 1:
            raise LatticeError(f"single needs exactly one site, got {spec.layout_args}")
        labels = [spec.layout_args[0]]
    elif tag == "explicit":
        if not spec.layout_args:
            raise LatticeError("explicit layout needs at least one site")
        labels = list(spec.layout_args)
    elif spec.geometry == "square-open":
        raise LatticeError(f"layout {tag!r} not available on the square lattice")
    elif spec.geometry == "complete" and tag != "end":
        raise LatticeError(f"layout {tag!r} not available for the complete graph")
    else:
        labels = _detectors_1d(spec, n_sites)

    detectors = DetectorSet.from_detected([site_to_index(s, n_sites) for s in labels], n_sites)
    ham = Hamiltonian(mat, gamma, spec.geometry, dims, tuple(notes))
    return ham, detectors


def load_graph(path) -> tuple[Hamiltonian, DetectorSet]:
    """Read a custom graph.

    Format (one directive per line, ``#`` starts a comment)::

        sites N
        i j w        # hopping amplitude w between sites i and j (1-based)
        detect i1 i2 ...

    The matrix entry for an edge is ``-w``, so ``w = 1`` reproduces the
    built-in lattices with ``gamma = 1``. ``i == j`` sets the on-site term
    ``-w``. Repeating an edge (in either orientation) is allowed only with
    the same weight.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GraphFormatError(f"cannot read graph file: {exc}", path=str(path)) from exc

    n_sites: int | None = None
    weights: dict[tuple[int, int], tuple[float, int]] = {}
    detect: list[int] = []
    saw_detect = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0].lower()
        if key == "sites":
            if n_sites is not None:
                raise GraphFormatError("duplicate 'sites' header", line=lineno, path=str(path))
            if len(parts) != 2:
                raise GraphFormatError("expected 'sites N'", line=lineno, path=str(path))
            try:
                n_sites = int(parts[1])
            except ValueError:
                raise GraphFormatError(f"bad site count {parts[1]!r}", line=lineno, path=str(path)) from None
            if n_sites < 1:
                raise GraphFormatError("site count must be positive", line=lineno, path=str(path))
            check_dim(n_sites)
            continue
        if n_sites is None:
            raise GraphFormatError("'sites N' must come first", line=lineno, path=str(path))
        if key == "detect":
            saw_detect = True
            for tok in parts[1:]:
                try:
                    site = int(tok)
                except ValueError:
                    raise GraphFormatError(f"bad detector site {tok!r}", line=lineno, path=str(path)) from None
                if not 1 <= site <= n_sites:
                    raise GraphFormatError(
                        f"detector site {site} out of range 1..{n_sites}", line=lineno, path=str(path)
                    )
                detect.append(site)
            continue
        if len(parts) != 3:
            raise GraphFormatError(f"expected 'i j w', got {line!r}", line=lineno, path=str(path))
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise GraphFormatError(f"cannot parse edge {line!r}", line=lineno, path=str(path)) from None
        for s in (i, j):
            if not 1 <= s <= n_sites:
                raise GraphFormatError(f"site {s} out of range 1..{n_sites}", line=lineno, path=str(path))
        if not np.isfinite(w):
            raise GraphFormatError("edge weight must be finite", line=lineno, path=str(path))
        edge = (min(i, j), max(i, j))
        if edge in weights and weights[edge][0] != w:
            prev_w, prev_line = weights[edge]
            raise GraphFormatError(
                f"edge {edge[0]}-{edge[1]} has weight {w} but line {prev_line} gave {prev_w}",
                line=lineno,
                path=str(path),
            )
        weights[edge] = (w, lineno)

    if n_sites is None:
        raise GraphFormatError("missing 'sites N' header", path=str(path))
    mat = np.zeros((n_sites, n_sites))
    for (i, j), (w, _) in weights.items():
        mat[i - 1, j - 1] = -w
        mat[j - 1, i - 1] = -w
    notes = () if saw_detect else ("no detector line; detector set is empty",)
    detectors = DetectorSet.from_detected([s - 1 for s in detect], n_sites)
    return Hamiltonian(mat, 1.0, "custom", (n_sites,), notes), detectors
