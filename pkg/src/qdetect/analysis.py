"""Post-processing of survival series: power-law and exponential fits, plateaus, comparisons."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .dynamics import SurvivalSeries
from .errors import FitWindowError, GridMismatchError

MIN_FIT_POINTS = 5
REL_ERR_FLOOR = 1e-15

# Default fit windows in units of the scaled time x = t tau / N, per geometry.
# The upper edge is further capped at x = 0.05 N**2 so that t tau / N**3
# stays small.
DEFAULT_X_WINDOWS = {
    "chain-open": (5.0, 50.0),
    "ring": (5.0, 50.0),
    "square-open": (1.0, 10.0),
}
_X_OVER_N2_CAP = 0.05


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    stderr: float
    window: tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class ExponentialFit:
    """``P - plateau ~ exp(intercept - rate t)``."""

    rate: float
    intercept: float
    stderr: float
    window: tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class PlateauEstimate:
    value: float
    std: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ComparisonReport:
    """Pointwise differences in ``P_n``; relative errors use the first series as reference."""

    max_rel_err: float
    max_abs_err: float
    argmax_n: int
    rms_err: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_fit_window(geometry: str, N: int, tau: float) -> tuple[float, float]:
    """Default ``(t_min, t_max)`` for power-law fits on ``geometry``."""
    if geometry not in DEFAULT_X_WINDOWS:
        raise ValueError(f"no default fit window for geometry {geometry!r}")
    lo, hi = DEFAULT_X_WINDOWS[geometry]
    hi = min(hi, _X_OVER_N2_CAP * N * N)
    if hi <= lo:
        raise FitWindowError(f"N={N} too small for a power-law window on {geometry}")
    scale = N / tau
    return lo * scale, hi * scale


def _window_excess(s: SurvivalSeries, window, plateau: float):
    t_min, t_max = float(window[0]), float(window[1])
    if not t_min < t_max:
        raise FitWindowError(f"empty window ({t_min}, {t_max})")
    if len(s) == 0 or t_min < s.t[0] - 1e-12 or t_max > s.t[-1] + 1e-12:
        span = (float(s.t[0]), float(s.t[-1])) if len(s) else None
        raise FitWindowError(f"window ({t_min}, {t_max}) outside series range {span}")
    mask = (s.t >= t_min) & (s.t <= t_max)
    count = int(mask.sum())
    if count < MIN_FIT_POINTS:
        raise FitWindowError(f"window ({t_min}, {t_max}) holds {count} points, need {MIN_FIT_POINTS}")
    excess = s.P[mask] - plateau
    bad = np.flatnonzero(excess <= 0)
    if bad.size:
        n_bad = int(s.n[mask][bad[0]])
        raise FitWindowError(f"P_n - plateau is not positive at n={n_bad}")
    return s.t[mask], excess, (t_min, t_max), count


def fit_power_law(s: SurvivalSeries, window, plateau: float = 0.0) -> PowerLawFit:
    """Least-squares line through ``(log t, log(P_n - plateau))`` over ``window``."""
    t, excess, win, count = _window_excess(s, window, plateau)
    r = stats.linregress(np.log(t), np.log(excess))
    return PowerLawFit(float(r.slope), float(r.intercept), float(r.stderr), win, count)


def fit_exponential(s: SurvivalSeries, window, plateau: float = 0.0) -> ExponentialFit:
    """Least-squares line through ``(t, log(P_n - plateau))``; the rate is minus the slope."""
    t, excess, win, count = _window_excess(s, window, plateau)
    r = stats.linregress(t, np.log(excess))
    return ExponentialFit(float(-r.slope), float(r.intercept), float(r.stderr), win, count)


def estimate_plateau(s: SurvivalSeries, tail_fraction: float = 0.1) -> PlateauEstimate:
    """Mean and standard deviation of ``P_n`` over the trailing ``tail_fraction`` of the run."""
    if not 0 < tail_fraction <= 0.5:
        raise ValueError(f"tail_fraction must lie in (0, 0.5], got {tail_fraction}")
    count = int(math.floor(len(s) * tail_fraction))
    if count < 2:
        raise FitWindowError(f"series of length {len(s)} too short for a plateau estimate")
    tail = s.P[-count:]
    return PlateauEstimate(float(tail.mean()), float(tail.std()), count)


def compare_series(a: SurvivalSeries, b: SurvivalSeries, resample: bool = False) -> ComparisonReport:
    """Compare ``P_n`` of two series on the same grid.

    With ``resample``, ``b`` is linearly interpolated onto the times of
    ``a`` that fall inside its own range. Otherwise the step numbers and
    times must coincide.
    """
    if resample:
        inside = (a.t >= b.t[0] - 1e-12) & (a.t <= b.t[-1] + 1e-12)
        if not inside.any():
            raise GridMismatchError("series have no overlapping times")
        n = a.n[inside]
        pa = a.P[inside]
        pb = np.interp(a.t[inside], b.t, b.P)
    else:
        if len(a) != len(b) or not np.array_equal(a.n, b.n):
            raise GridMismatchError(f"step grids differ ({len(a)} vs {len(b)} rows)")
        if not np.allclose(a.t, b.t, rtol=1e-12, atol=0.0):
            k = int(np.argmax(~np.isclose(a.t, b.t, rtol=1e-12, atol=0.0)))
            raise GridMismatchError(f"times differ at n={int(a.n[k])}: {a.t[k]!r} vs {b.t[k]!r}")
        n, pa, pb = a.n, a.P, b.P
    if n.size == 0:
        raise GridMismatchError("nothing to compare")
    diff = np.abs(pa - pb)
    rel = diff / np.maximum(np.abs(pa), REL_ERR_FLOOR)
    k = int(np.argmax(rel))
    return ComparisonReport(
        max_rel_err=float(rel[k]),
        max_abs_err=float(diff.max()),
        argmax_n=int(n[k]),
        rms_err=float(np.sqrt(np.mean(diff**2))),
    )
