"""Execute one experiment config: build the lattice, run each engine, write artifacts.

Files land in a staging directory next to the target and are moved into
place only once every engine has finished, so a failed run leaves
nothing behind.
"""

from __future__ import annotations

import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import absorbing, analysis, effective, io, meanfield
from .config import ExperimentConfig
from .dynamics import (
    MeasurementProtocol,
    StateVector,
    SurvivalSeries,
    embed,
    evolve,
    first_detection_stats,
    kron_step_operator,
    position_state,
    restrict,
    step_operator,
    system_eigenstate,
)
from .errors import ConfigError, LatticeError
from .lattice import CASES_2D, DetectorSet, Hamiltonian, build, coords_2d, flat_site_2d, load_graph, site_to_index

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_TOLERANCE = 4


@dataclass
class RunResult:
    name: str
    output_dir: Path
    exit_code: int
    files: list[str] = field(default_factory=list)
    comparisons: dict = field(default_factory=dict)
    fit: dict | None = None
    message: str = ""


@dataclass
class _Context:
    cfg: ExperimentConfig
    h: Hamiltonian
    d: DetectorSet
    psi0: StateVector
    site: int | None  # 1-based start site for position states
    n: np.ndarray
    t: np.ndarray


def _lattice(cfg: ExperimentConfig) -> tuple[Hamiltonian, DetectorSet]:
    if cfg.lattice.geometry != "custom":
        return build(cfg.lattice)
    h, d = load_graph(cfg.graph)
    if cfg.lattice.layout == "explicit":
        idx = [site_to_index(s, h.n_sites) for s in cfg.lattice.layout_args]
        d = DetectorSet.from_detected(idx, h.n_sites)
    elif cfg.lattice.layout == "single":
        d = DetectorSet.from_detected([site_to_index(cfg.lattice.layout_args[0], h.n_sites)], h.n_sites)
    return h, d


def _initial(cfg: ExperimentConfig, h: Hamiltonian, d: DetectorSet) -> tuple[StateVector, int | None]:
    init = cfg.initial
    if init.kind == "position":
        if len(init.sites) == 2:
            if len(h.lattice_dims) != 2:
                raise ConfigError("two coordinates need geometry square-open", field="run.initial")
            site = flat_site_2d(init.sites[0], init.sites[1], h.lattice_dims[0])
        else:
            site = init.sites[0]
        if not 1 <= site <= h.n_sites:
            raise ConfigError(f"site {site} outside 1..{h.n_sites}", field="run.initial")
        return position_state(h.n_sites, site), site
    if init.kind == "eigenstate":
        return system_eigenstate(h, d, init.sites[0]), None
    psi = io.read_state_csv(init.path, h.n_sites)
    if psi.norm_sq <= 0:
        raise ConfigError("state file has zero norm", field="run.initial")
    return StateVector(psi.amplitudes / np.sqrt(psi.norm_sq)), None


# -- engines ---------------------------------------------------------------------


def _run_exact(ctx: _Context) -> SurvivalSeries:
    cfg = ctx.cfg
    proto = MeasurementProtocol(cfg.tau, cfg.n_max, cfg.snapshots)
    if cfg.lattice.layout in CASES_2D:
        u = kron_step_operator(cfg.lattice.layout, cfg.lattice.N, cfg.tau, cfg.lattice.gamma)
    else:
        u = step_operator(ctx.h, ctx.d, cfg.tau)
    return evolve(u, ctx.psi0, proto)


def _run_effective(ctx: _Context) -> SurvivalSeries:
    lost = ctx.psi0.norm_sq - restrict(ctx.psi0, ctx.d).norm_sq
    if lost > 1e-12:
        raise ConfigError("effective engine needs an initial state with no weight on detectors",
                          field="run.initial")
    heff = effective.build_heff(ctx.h, ctx.d, ctx.cfg.tau)
    s = effective.evolve_heff(heff, restrict(ctx.psi0, ctx.d), ctx.cfg.n_max, ctx.cfg.snapshots)
    s.snapshots = {k: StateVector(embed(v.amplitudes, ctx.d)) for k, v in s.snapshots.items()}
    return s


def _run_meanfield(ctx: _Context) -> SurvivalSeries:
    cfg = ctx.cfg
    if ctx.site is None:
        raise ConfigError("meanfield engine needs a position initial state", field="run.initial")
    det = ctx.d.detected_sites()
    if len(det) != 1:
        raise ConfigError("meanfield engine handles a single detector", field="lattice.detectors")
    sol = meanfield.mf_solve(cfg.lattice.N, cfg.lattice.gamma * cfg.tau)
    s = meanfield.mf_series(sol, ctx.site, cfg.n_max, detector=det[0])
    s.t = ctx.t.copy()
    s.meta = {"x": sol.x, "xi": sol.xi}
    return s


def _chain_analytic(N: int, det: list[int], ell: int, tau: float, t, gamma: float):
    if det == [1, N]:
        return effective.chain_both_ends_P(N, ell, tau, t, gamma)
    # a block of detectors at one end acts like a single detector at the block's first site
    if det == list(range(det[0], N + 1)):
        return effective.chain_open_P(det[0], ell, tau, t, gamma)
    if det == list(range(1, det[-1] + 1)):
        return effective.chain_open_P(N + 1 - det[-1], N + 1 - ell, tau, t, gamma)
    raise LatticeError(f"no closed form for an open chain with detectors at {det}")


def _run_analytic(ctx: _Context) -> SurvivalSeries:
    cfg = ctx.cfg
    spec = cfg.lattice
    geo, N, tau, g = spec.geometry, spec.N, cfg.tau, spec.gamma
    if geo == "complete":
        return _run_meanfield(ctx)
    det = ctx.d.detected_sites()
    ell = ctx.site
    meta: dict = {}
    if geo == "square-open":
        lx, ly = coords_2d(ell, N)
        P = effective.square2d_P(spec.layout, N, lx, ly, tau, ctx.t, g)
    elif geo == "chain-open":
        P = _chain_analytic(N, det, ell, tau, ctx.t, g)
    else:
        if len(det) != 1:
            raise LatticeError("ring closed form needs a single detector")
        # rotate so the detector sits at site N
        P, P_inf = effective.ring_P(N, (ell - det[0] - 1) % N + 1, tau, ctx.t, g)
        meta["P_inf"] = P_inf
    return SurvivalSeries.from_survival(ctx.n, ctx.t, P, meta=meta)


def _run_absorbing(ctx: _Context) -> SurvivalSeries:
    cfg = ctx.cfg
    g = ctx.h.gamma
    Gamma = cfg.Gamma if cfg.Gamma is not None else absorbing.gamma_for_tau(g, cfg.tau)
    a = absorbing.build_hnh(ctx.h, ctx.d, Gamma)
    s = absorbing.evolve_hnh(a, ctx.psi0, ctx.t)
    s.meta = absorbing.mapping_validity(g, cfg.tau, Gamma)
    return s


ENGINE_FUNCS = {
    "exact": _run_exact,
    "effective": _run_effective,
    "analytic": _run_analytic,
    "meanfield": _run_meanfield,
    "absorbing": _run_absorbing,
}


# -- post-processing ---------------------------------------------------------------


def _plateau(ctx: _Context, fit, series: SurvivalSeries) -> float:
    if isinstance(fit.plateau, float):
        return fit.plateau
    if fit.plateau == "zero":
        return 0.0
    if fit.plateau == "estimate":
        return analysis.estimate_plateau(series, fit.tail_fraction).value
    geo = ctx.cfg.lattice.geometry
    if geo in ("chain-open", "square-open"):
        return 0.0
    if geo == "ring":
        det = ctx.d.detected_sites()
        N = ctx.cfg.lattice.N
        return effective.ring_weights(N, (ctx.site - det[0] - 1) % N + 1, ctx.cfg.tau)[2]
    if geo == "complete" and ctx.site is not None:
        N = ctx.cfg.lattice.N
        return 0.0 if ctx.site in ctx.d.detected_sites() else (N - 2) / (N - 1)
    raise ConfigError(f"no analytic plateau for geometry {geo!r}", field="fit.plateau")


def _stage_dir(target: Path) -> Path:
    target.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{target.name}.staging-", dir=target.parent))


def run_experiment(cfg: ExperimentConfig, output_dir: Path | None = None,
                   tolerance: float | None = None) -> RunResult:
    """Run every engine of ``cfg`` and write its artifacts.

    Errors propagate after the staging directory is removed. A comparison
    above ``tolerance`` (argument first, then the config) yields exit code 4
    with all files still written.
    """
    out = Path(output_dir) if output_dir is not None else cfg.output_dir
    h, d = _lattice(cfg)
    psi0, site = _initial(cfg, h, d)
    n = np.arange(1, cfg.n_max + 1)
    ctx = _Context(cfg, h, d, psi0, site, n, n * cfg.tau)

    stage = _stage_dir(out)
    try:
        result = _run_into(ctx, stage, out, tolerance)
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return result


def _run_into(ctx: _Context, stage: Path, out: Path, tolerance: float | None) -> RunResult:
    cfg = ctx.cfg
    series: dict[str, SurvivalSeries] = {}
    files: list[str] = []
    for engine in cfg.engines:
        s = ENGINE_FUNCS[engine](ctx)
        series[engine] = s
        io.write_series_csv(s, stage / f"{engine}.csv")
        files.append(f"{engine}.csv")
        for k in sorted(s.snapshots):
            fname = f"{engine}_snapshot_{k}.csv"
            io.write_state_csv(s.snapshots[k], stage / fname)
            files.append(fname)

    result = RunResult(cfg.name, out, EXIT_OK)
    tol = tolerance if tolerance is not None else cfg.compare.tolerance
    reference = cfg.compare.reference or cfg.engines[0]
    if len(series) > 1:
        reports = {e: analysis.compare_series(series[reference], s).to_dict()
                   for e, s in series.items() if e != reference}
        exceeded = sorted(e for e, r in reports.items() if tol is not None and r["max_rel_err"] > tol)
        result.comparisons = reports
        io.write_json({"reference": reference, "tolerance": tol, "exceeded": exceeded,
                       "comparisons": reports}, stage / "comparison.json")
        files.append("comparison.json")
        if exceeded:
            result.exit_code = EXIT_TOLERANCE
            result.message = f"tolerance {tol} exceeded by {', '.join(exceeded)}"

    if cfg.fit is not None:
        engine = cfg.fit.engine or reference
        s = series[engine]
        plateau = _plateau(ctx, cfg.fit, s)
        window = (cfg.fit.t_min, cfg.fit.t_max)
        if cfg.fit.mode == "power":
            fit = analysis.fit_power_law(s, window, plateau)
        else:
            fit = analysis.fit_exponential(s, window, plateau)
        result.fit = {"engine": engine, "mode": cfg.fit.mode, "plateau": plateau, **fit.to_dict()}
        io.write_json(result.fit, stage / "fit.json")
        files.append("fit.json")

    stats = {}
    for e, s in series.items():
        total, mean_n = first_detection_stats(s)
        stats[e] = {"total_detection": total, "mean_detection_step": mean_n, "final_P": float(s.P[-1]),
                    **{k: v for k, v in s.meta.items() if k != "tau"}}
    spec = cfg.lattice
    manifest = {
        "name": cfg.name,
        "lattice": {"geometry": spec.geometry, "N": spec.N, "gamma": spec.gamma,
                    "layout": spec.layout, "layout_args": list(spec.layout_args),
                    "detected_sites": ctx.d.detected_sites(), "notes": list(ctx.h.notes)},
        "tau": cfg.tau,
        "n_max": cfg.n_max,
        "engines": list(cfg.engines),
        "engine_stats": stats,
        "files": sorted(files + ["run.json"]),
    }
    io.write_json(manifest, stage / "run.json")
    files.append("run.json")
    result.files = sorted(files)
    return result
