"""Experiment configuration files.

One experiment per INI-style file. Keys are case-sensitive::

    [lattice]
    geometry = chain-open        # chain-open | ring | square-open | complete | custom
    N = 20
    gamma = 1.0
    detectors = end              # end | both-ends | block-end K | single K | explicit ... | 2d-case-i..v
    graph = graph.txt            # custom geometry only, relative to this file

    [run]
    tau = 0.1
    n_max = 10000
    initial = position 10        # position L | position LX LY | eigenstate S | file PATH
    engines = exact, analytic    # exact | effective | analytic | meanfield | absorbing
    snapshots = 100, 1000
    Gamma = 100                  # absorbing engine; defaults to 2/(gamma tau)

    [output]
    dir = out/fig1

    [fit]
    t_min = 500
    t_max = 5000
    plateau = zero               # zero | estimate | analytic | a number
    mode = power                 # power | exponential
    engine = exact

    [compare]
    reference = exact
    tolerance = 0.05
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, LatticeError
from .lattice import GEOMETRIES, LatticeSpec, parse_layout

ENGINES = ("exact", "effective", "analytic", "meanfield", "absorbing")
PLATEAU_MODES = ("zero", "estimate", "analytic")
FIT_MODES = ("power", "exponential")

_KEYS = {
    "lattice": {"geometry", "N", "gamma", "detectors", "graph"},
    "run": {"tau", "n_max", "initial", "engines", "snapshots", "Gamma"},
    "output": {"dir"},
    "fit": {"t_min", "t_max", "plateau", "mode", "engine", "tail_fraction"},
    "compare": {"reference", "tolerance"},
}


@dataclass(frozen=True)
class InitialState:
    kind: str  # position | eigenstate | file
    sites: tuple[int, ...] = ()
    path: Path | None = None


@dataclass(frozen=True)
class FitConfig:
    t_min: float
    t_max: float
    plateau: str | float = "zero"
    mode: str = "power"
    engine: str | None = None
    tail_fraction: float = 0.1


@dataclass(frozen=True)
class CompareConfig:
    reference: str | None = None
    tolerance: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    lattice: LatticeSpec
    tau: float
    n_max: int
    initial: InitialState
    engines: tuple[str, ...]
    snapshots: tuple[int, ...] = ()
    output_dir: Path = Path("out")
    graph: Path | None = None
    Gamma: float | None = None
    fit: FitConfig | None = None
    compare: CompareConfig = field(default_factory=CompareConfig)
    source: Path | None = None


def _get(cp, section, key, conv, field_path, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError("missing required key", field=field_path)
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value {raw!r} ({exc})", field=field_path) from None


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _parse_initial(text: str, base: Path) -> InitialState:
    parts = text.split()
    if not parts:
        raise ConfigError("empty initial state", field="run.initial")
    kind = parts[0].lower()
    if kind == "file":
        if len(parts) != 2:
            raise ConfigError("expected 'file PATH'", field="run.initial")
        return InitialState("file", path=(base / parts[1]))
    if kind not in ("position", "eigenstate"):
        raise ConfigError(f"unknown initial state kind {kind!r}", field="run.initial")
    try:
        sites = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise ConfigError(f"initial state arguments must be integers: {text!r}", field="run.initial") from None
    if kind == "position" and len(sites) not in (1, 2):
        raise ConfigError("expected 'position L' or 'position LX LY'", field="run.initial")
    if kind == "eigenstate" and len(sites) != 1:
        raise ConfigError("expected 'eigenstate S'", field="run.initial")
    if any(s < 1 for s in sites):
        raise ConfigError("site labels are 1-based", field="run.initial")
    return InitialState(kind, sites)


def _check_engines(cfg_engines, geometry, layout, initial) -> None:
    if "meanfield" in cfg_engines and geometry != "complete":
        raise ConfigError("meanfield engine needs geometry complete", field="run.engines")
    if "analytic" in cfg_engines:
        if geometry == "custom":
            raise ConfigError("no closed form for custom graphs", field="run.engines")
        if initial.kind != "position":
            raise ConfigError("analytic engine needs a position initial state", field="run.engines")
        if geometry == "square-open" and not layout.startswith("2d-case-"):
            raise ConfigError("analytic square lattice needs a 2d-case-* layout", field="run.engines")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_parser(cp, base=path.parent, name=path.stem, source=path)


def config_from_parser(cp: configparser.ConfigParser, base: Path, name: str,
                       source: Path | None = None) -> ExperimentConfig:
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section (expected one of {', '.join(_KEYS)})", field=section)
        for key in cp.options(section):
            if key not in _KEYS[section]:
                raise ConfigError("unknown key", field=f"{section}.{key}")
    for section in ("lattice", "run"):
        if not cp.has_section(section):
            raise ConfigError("missing section", field=section)

    geometry = _get(cp, "lattice", "geometry", str.strip, "lattice.geometry", required=True)
    if geometry not in GEOMETRIES:
        raise ConfigError(f"unknown geometry {geometry!r}", field="lattice.geometry")
    gamma = _get(cp, "lattice", "gamma", float, "lattice.gamma", default=1.0)
    if not gamma > 0:
        raise ConfigError("gamma must be positive", field="lattice.gamma")
    graph = None
    if geometry == "custom":
        graph_text = _get(cp, "lattice", "graph", str.strip, "lattice.graph", required=True)
        graph = base / graph_text
        N = 0
    else:
        N = _get(cp, "lattice", "N", int, "lattice.N", required=True)
        if N < 2:
            raise ConfigError("N must be at least 2", field="lattice.N")
    try:
        layout, layout_args = parse_layout(_get(cp, "lattice", "detectors", str, "lattice.detectors", default="end"))
    except LatticeError as exc:
        raise ConfigError(str(exc), field="lattice.detectors") from None

    engines_text = _get(cp, "run", "engines", str, "run.engines", default="")
    engines = tuple(e.strip() for e in engines_text.replace(",", " ").split())
    if not engines:
        raise ConfigError("at least one engine is required", field="run.engines")
    unknown = [e for e in engines if e not in ENGINES]
    if unknown:
        raise ConfigError(f"unknown engines {unknown}; expected a subset of {', '.join(ENGINES)}", field="run.engines")
    if len(set(engines)) != len(engines):
        raise ConfigError("engine listed twice", field="run.engines")

    tau = _get(cp, "run", "tau", float, "run.tau", required=True)
    if not tau > 0:
        raise ConfigError("tau must be positive", field="run.tau")
    n_max = _get(cp, "run", "n_max", int, "run.n_max", required=True)
    if n_max < 1:
        raise ConfigError("n_max must be at least 1", field="run.n_max")
    initial = _parse_initial(_get(cp, "run", "initial", str, "run.initial", required=True), base)
    snapshots = _get(cp, "run", "snapshots", _int_list, "run.snapshots", default=())
    bad = [s for s in snapshots if not 1 <= s <= n_max]
    if bad:
        raise ConfigError(f"snapshot steps {bad} outside 1..{n_max}", field="run.snapshots")
    Gamma = _get(cp, "run", "Gamma", float, "run.Gamma")
    if Gamma is not None and Gamma < 0:
        raise ConfigError("Gamma must be non-negative", field="run.Gamma")
    _check_engines(engines, geometry, layout, initial)

    output_dir = Path(_get(cp, "output", "dir", str.strip, "output.dir", default=f"out/{name}"))

    fit = None
    if cp.has_section("fit"):
        t_min = _get(cp, "fit", "t_min", float, "fit.t_min", required=True)
        t_max = _get(cp, "fit", "t_max", float, "fit.t_max", required=True)
        if not 0 < t_min < t_max:
            raise ConfigError("need 0 < t_min < t_max", field="fit.t_min")
        plateau_text = _get(cp, "fit", "plateau", str.strip, "fit.plateau", default="zero")
        if plateau_text in PLATEAU_MODES:
            plateau: str | float = plateau_text
        else:
            try:
                plateau = float(plateau_text)
            except ValueError:
                raise ConfigError(f"expected one of {', '.join(PLATEAU_MODES)} or a number",
                                  field="fit.plateau") from None
        mode = _get(cp, "fit", "mode", str.strip, "fit.mode", default="power")
        if mode not in FIT_MODES:
            raise ConfigError(f"expected one of {', '.join(FIT_MODES)}", field="fit.mode")
        fit_engine = _get(cp, "fit", "engine", str.strip, "fit.engine")
        if fit_engine is not None and fit_engine not in engines:
            raise ConfigError(f"engine {fit_engine!r} is not run", field="fit.engine")
        tail = _get(cp, "fit", "tail_fraction", float, "fit.tail_fraction", default=0.1)
        if not 0 < tail <= 0.5:
            raise ConfigError("tail_fraction must lie in (0, 0.5]", field="fit.tail_fraction")
        fit = FitConfig(t_min, t_max, plateau, mode, fit_engine, tail)

    reference = _get(cp, "compare", "reference", str.strip, "compare.reference")
    if reference is not None and reference not in engines:
        raise ConfigError(f"engine {reference!r} is not run", field="compare.reference")
    tolerance = _get(cp, "compare", "tolerance", float, "compare.tolerance")
    if tolerance is not None and tolerance < 0:
        raise ConfigError("tolerance must be non-negative", field="compare.tolerance")

    spec = LatticeSpec(geometry, N, gamma, layout, layout_args, analytic="analytic" in engines)
    return ExperimentConfig(
        name=name,
        lattice=spec,
        tau=tau,
        n_max=n_max,
        initial=initial,
        engines=engines,
        snapshots=tuple(sorted(set(snapshots))),
        output_dir=output_dir,
        graph=graph,
        Gamma=Gamma,
        fit=fit,
        compare=CompareConfig(reference, tolerance),
        source=source,
    )


def with_engines(cfg: ExperimentConfig, engines) -> ExperimentConfig:
    """Copy of ``cfg`` running ``engines`` instead, with fit and comparison reset to the first one."""
    engines = tuple(engines)
    unknown = [e for e in engines if e not in ENGINES]
    if not engines or unknown:
        raise ConfigError(f"invalid engine list {list(engines)}", field="run.engines")
    _check_engines(engines, cfg.lattice.geometry, cfg.lattice.layout, cfg.initial)
    fit = replace(cfg.fit, engine=None) if cfg.fit is not None else None
    lattice = replace(cfg.lattice, analytic="analytic" in engines)
    return replace(cfg, engines=engines, lattice=lattice, fit=fit,
                   compare=replace(cfg.compare, reference=None))
