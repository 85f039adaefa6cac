import json
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdetect import io
from qdetect.config import load_config, with_engines
from qdetect.dynamics import StateVector, SurvivalSeries
from qdetect.errors import ConfigError

BASE = """
[lattice]
geometry = chain-open
N = 8
detectors = end

[run]
tau = 0.1
n_max = 50
initial = position 4
engines = exact, analytic
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def with_line(section, line, text=BASE):
    return text.replace(f"[{section}]\n", f"[{section}]\n{line}\n", 1)


class TestSeriesCsv:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0, allow_subnormal=True), min_size=1, max_size=30))
    def test_round_trip_is_bit_exact(self, tmp_path_factory, values):
        P = np.sort(np.array(values))[::-1]
        n = np.arange(1, P.size + 1)
        s = SurvivalSeries.from_survival(n, n * 0.1, P)
        path = tmp_path_factory.mktemp("csv") / "s.csv"
        io.write_series_csv(s, path)
        back = io.read_series_csv(path)
        np.testing.assert_array_equal(back.n, s.n)
        for a, b in ((back.t, s.t), (back.P, s.P), (back.p, s.p)):
            assert a.tobytes() == b.tobytes()

    def test_header(self, tmp_path):
        s = SurvivalSeries.from_survival([1, 2], [0.1, 0.2], [0.9, 0.8])
        io.write_series_csv(s, tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,t,P,p"

    def test_bad_header(self, tmp_path):
        (tmp_path / "s.csv").write_text("a,b,c,d\n1,0.1,0.9,0.1\n")
        with pytest.raises(ConfigError):
            io.read_series_csv(tmp_path / "s.csv")

    def test_malformed_row(self, tmp_path):
        (tmp_path / "s.csv").write_text("n,t,P,p\n1,0.1,oops,0.1\n")
        with pytest.raises(ConfigError, match="malformed"):
            io.read_series_csv(tmp_path / "s.csv")


class TestStateCsv:
    def test_round_trip(self, tmp_path):
        psi = StateVector(np.array([0.6, 0.0, 0.8j, -0.0]))
        io.write_state_csv(psi, tmp_path / "psi.csv")
        lines = (tmp_path / "psi.csv").read_text().splitlines()
        assert lines[0] == "site,re,im,prob" and len(lines) == 5
        np.testing.assert_array_equal(io.read_state_csv(tmp_path / "psi.csv").amplitudes, psi.amplitudes)

    def test_sparse_file_padded(self, tmp_path):
        (tmp_path / "psi.csv").write_text("site,re,im\n3,1.0,0.0\n")
        psi = io.read_state_csv(tmp_path / "psi.csv", n_sites=5)
        np.testing.assert_array_equal(psi.amplitudes, [0, 0, 1, 0, 0])

    def test_site_out_of_range(self, tmp_path):
        (tmp_path / "psi.csv").write_text("site,re,im\n7,1.0,0.0\n")
        with pytest.raises(ConfigError, match="outside"):
            io.read_state_csv(tmp_path / "psi.csv", n_sites=5)


class TestJson:
    def test_sorted_keys(self, tmp_path):
        io.write_json({"b": 1, "a": [1.5]}, tmp_path / "x.json")
        text = (tmp_path / "x.json").read_text()
        assert text.index('"a"') < text.index('"b"') and text.endswith("\n")
        assert json.loads(text) == {"a": [1.5], "b": 1}


class TestConfig:
    def test_minimal(self, tmp_path):
        cfg = load_config(write(tmp_path, BASE))
        assert cfg.name == "exp" and cfg.lattice.N == 8 and cfg.tau == 0.1
        assert cfg.engines == ("exact", "analytic")
        assert cfg.initial.kind == "position" and cfg.initial.sites == (4,)
        assert str(cfg.output_dir) == "out/exp"

    def test_full(self, tmp_path):
        text = BASE.replace("engines = exact, analytic", "engines = exact, absorbing\nsnapshots = 10, 5, 10\nGamma = 20")
        text += "\n[output]\ndir = results\n\n[fit]\nt_min = 1\nt_max = 4\nplateau = estimate\nmode = exponential\n"
        text += "\n[compare]\nreference = absorbing\ntolerance = 0.1\n"
        cfg = load_config(write(tmp_path, text))
        assert cfg.snapshots == (5, 10) and cfg.Gamma == 20.0
        assert cfg.fit.plateau == "estimate" and cfg.fit.mode == "exponential"
        assert cfg.compare.reference == "absorbing" and cfg.compare.tolerance == 0.1

    @pytest.mark.parametrize("text,field", [
        (BASE.replace("engines = exact, analytic", "engines ="), "run.engines"),
        (BASE.replace("engines = exact, analytic", "engines = exact, magic"), "run.engines"),
        (BASE.replace("tau = 0.1", "tau = -1"), "run.tau"),
        (BASE.replace("tau = 0.1", "tau = fast"), "run.tau"),
        (BASE.replace("n_max = 50", "n_max = 0"), "run.n_max"),
        (BASE.replace("N = 8", "N = 1"), "lattice.N"),
        (BASE.replace("geometry = chain-open", "geometry = torus"), "lattice.geometry"),
        (BASE.replace("detectors = end", "detectors = sideways"), "lattice.detectors"),
        (BASE.replace("initial = position 4", "initial = momentum 4"), "run.initial"),
        (BASE.replace("initial = position 4", "initial = position 0"), "run.initial"),
        (with_line("run", "snapshots = 60"), "run.snapshots"),
        (with_line("run", "colour = red"), "run.colour"),
        (with_line("lattice", "Gamma = 3"), "lattice.Gamma"),
        (BASE + "\n[plot]\nstyle = x\n", "plot"),
        (BASE.replace("N = 8\n", ""), "lattice.N"),
        (BASE.replace("engines = exact, analytic", "engines = meanfield"), "run.engines"),
        (BASE + "\n[fit]\nt_min = 3\nt_max = 1\n", "fit.t_min"),
        (BASE + "\n[compare]\nreference = absorbing\n", "compare.reference"),
    ])
    def test_errors_name_field(self, tmp_path, text, field):
        with pytest.raises(ConfigError) as info:
            load_config(write(tmp_path, text))
        assert info.value.field == field
        assert str(info.value).startswith(field)

    def test_keys_are_case_sensitive(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(write(tmp_path, BASE.replace("n_max", "N_MAX")))
        assert info.value.field == "run.N_MAX"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_file_initial_is_relative(self, tmp_path):
        cfg = load_config(write(tmp_path, BASE.replace("initial = position 4", "initial = file psi.csv")
                                               .replace("exact, analytic", "exact")))
        assert cfg.initial.path == tmp_path / "psi.csv"

    def test_with_engines(self, tmp_path):
        text = BASE + "\n[fit]\nt_min = 1\nt_max = 4\nengine = analytic\n\n[compare]\nreference = analytic\n"
        cfg = with_engines(load_config(write(tmp_path, text)), ["exact", "absorbing"])
        assert cfg.engines == ("exact", "absorbing")
        assert cfg.fit.engine is None and cfg.compare.reference is None
        with pytest.raises(ConfigError):
            with_engines(cfg, [])


def _committed_configs():
    from conftest import REPO
    return sorted((REPO / "configs").glob("*/*.ini"))


@pytest.mark.parametrize("path", _committed_configs(), ids=lambda p: f"{p.parent.name}/{p.stem}")
def test_committed_configs_load(path):
    cfg = load_config(path)
    assert cfg.engines and cfg.n_max >= 1
