"""CSV and JSON artifacts.

Series files have the header ``n,t,P,p``; snapshot and state files have
``site,re,im,prob``. Floats are written in shortest round-trip form
(``repr``), so reading a file back gives the exact doubles that were
written and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import StateVector, SurvivalSeries
from .errors import ConfigError

SERIES_HEADER = ("n", "t", "P", "p")
STATE_HEADER = ("site", "re", "im", "prob")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_series_csv(s: SurvivalSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SERIES_HEADER) + "\n")
        for n, t, P, p in s.rows():
            fh.write(f"{int(n)},{_fmt(t)},{_fmt(P)},{_fmt(p)}\n")


def read_series_csv(path) -> SurvivalSeries:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SERIES_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(SERIES_HEADER)}", field="series")
        rows = [r for r in reader if r]
    try:
        n = np.array([int(r[0]) for r in rows], dtype=np.int64)
        vals = np.array([[float(x) for x in r[1:4]] for r in rows], dtype=np.float64).reshape(-1, 3)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row ({exc})", field="series") from exc
    return SurvivalSeries(n, vals[:, 0], vals[:, 1], vals[:, 2], meta={"source": str(path)})


def write_state_csv(psi: StateVector, path) -> None:
    amp = psi.amplitudes
    prob = psi.probabilities
    with open(path, "w", newline="") as fh:
        fh.write(",".join(STATE_HEADER) + "\n")
        for k in range(len(psi)):
            fh.write(f"{k + 1},{_fmt(amp[k].real)},{_fmt(amp[k].imag)},{_fmt(prob[k])}\n")


def read_state_csv(path, n_sites: int | None = None) -> StateVector:
    """Read amplitudes from a ``site,re,im[,prob]`` file. Missing sites are zero."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header[:3] != list(STATE_HEADER[:3]):
                raise ConfigError(f"{path}: expected header starting site,re,im", field="run.initial")
            entries = [(int(r[0]), float(r[1]), float(r[2])) for r in reader if r]
    except OSError as exc:
        raise ConfigError(f"cannot read state file {path}: {exc}", field="run.initial") from exc
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row ({exc})", field="run.initial") from exc
    size = n_sites if n_sites is not None else max((e[0] for e in entries), default=0)
    amp = np.zeros(size, dtype=np.complex128)
    for site, re, im in entries:
        if not 1 <= site <= size:
            raise ConfigError(f"{path}: site {site} outside 1..{size}", field="run.initial")
        amp[site - 1] = complex(re, im)
    return StateVector(amp)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
