import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdetect import effective as eff
from qdetect.analysis import compare_series
from qdetect.dynamics import (
    MeasurementProtocol,
    StateVector,
    evolve,
    kron_step_operator,
    position_state,
    restrict,
    step_operator,
    system_eigenstate,
)
from qdetect.errors import LatticeError
from qdetect.lattice import DetectorSet, Hamiltonian, LatticeSpec, build, flat_site_2d


def exact(geo, N, ell, tau, n_max, layout="end"):
    h, d = build(LatticeSpec(geo, N, layout=layout))
    return evolve(step_operator(h, d, tau), position_state(h.n_sites, ell), MeasurementProtocol(tau, n_max))


def heff_series(geo, N, ell, tau, n_max, layout="end"):
    h, d = build(LatticeSpec(geo, N, layout=layout))
    return eff.evolve_heff(eff.build_heff(h, d, tau), restrict(position_state(N, ell), d), n_max)


class TestBuildHeff:
    def test_chain_end(self):
        N, tau = 6, 0.2
        h, d = build(LatticeSpec("chain-open", N))
        m = eff.build_heff(h, d, tau).matrix
        v = np.zeros((N - 1, N - 1), complex)
        v[N - 2, N - 2] = -0.5j * tau
        np.testing.assert_allclose(m, h.matrix[: N - 1, : N - 1] + v, atol=0)

    def test_chain_both_ends(self):
        N, tau = 6, 0.2
        h, d = build(LatticeSpec("chain-open", N, layout="both-ends"))
        m = eff.build_heff(h, d, tau).matrix
        anti = m.imag
        expected = np.zeros((N - 2, N - 2))
        expected[0, 0] = expected[-1, -1] = -tau / 2
        np.testing.assert_allclose(anti, expected, atol=0)
        np.testing.assert_array_equal(m.real, h.matrix[1:-1, 1:-1])

    def test_ring_couples_both_neighbours(self):
        N, tau = 8, 0.2
        h, d = build(LatticeSpec("ring", N))
        anti = eff.build_heff(h, d, tau).matrix.imag
        expected = np.zeros((N - 1, N - 1))
        for i in (0, N - 2):
            for j in (0, N - 2):
                expected[i, j] = -tau / 2
        np.testing.assert_allclose(anti, expected, atol=0)

    def test_empty_system(self):
        h, _ = build(LatticeSpec("chain-open", 2))
        with pytest.raises(LatticeError):
            eff.build_heff(h, DetectorSet.from_detected([0, 1], 2), 0.1)

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from(["chain-open", "ring", "complete"]), st.integers(3, 12), st.floats(0.001, 2.0))
    def test_spectrum_never_grows(self, geo, N, tau):
        if geo == "ring" and N % 2:
            N += 1
        h, d = build(LatticeSpec(geo, N))
        m = eff.build_heff(h, d, tau).matrix
        assert np.all(np.linalg.eigvals(m).imag <= 1e-12)
        anti = (m - m.conj().T) / 2j
        assert np.all(np.linalg.eigvalsh(anti) <= 1e-14)


class TestEvolveHeff:
    def test_uncoupled_is_unitary(self):
        h = Hamiltonian(np.array([[0.0, -1, 0], [-1, 0, 0], [0, 0, 0]]), 1.0, "custom", (3,))
        d = DetectorSet.from_detected([2], 3)
        s = eff.evolve_heff(eff.build_heff(h, d, 0.1), StateVector([1, 0]), 100)
        np.testing.assert_allclose(s.P, 1.0, atol=1e-12)

    def test_eigenmode_decays_at_first_order_rate(self):
        N, tau, s_mode = 20, 0.1, 3
        h, d = build(LatticeSpec("chain-open", N))
        psi = restrict(system_eigenstate(h, d, s_mode), d)
        series = eff.evolve_heff(eff.build_heff(h, d, tau), psi, 2000)
        alpha = (2 * tau / N) * math.sin(s_mode * math.pi / N) ** 2
        # second-order corrections are O(tau**2) relative to alpha
        np.testing.assert_allclose(series.P, np.exp(-alpha * series.t), rtol=2e-3)

    def test_three_site_against_exact(self):
        tau, n = 0.1, 400
        a = exact("chain-open", 3, 1, tau, n)
        b = heff_series("chain-open", 3, 1, tau, n)
        # local error O(tau**3) per step
        assert np.max(np.abs(a.P - b.P)) <= 2 * tau**3 * n

    def test_three_site_matches_oracle(self, derived):
        f = derived["heff_three_site_P"]
        b = heff_series("chain-open", 3, f["ell"], f["tau"], len(f["P"]))
        np.testing.assert_allclose(b.P, f["P"], rtol=1e-12)

    def test_snapshots(self):
        h, d = build(LatticeSpec("chain-open", 5))
        s = eff.evolve_heff(eff.build_heff(h, d, 0.1), restrict(position_state(5, 2), d), 10, (5,))
        assert s.snapshots[5].norm_sq == s.P[4]

    def test_convergence_in_tau(self):
        errs = [compare_series(exact("chain-open", 20, 10, tau, 1000), heff_series("chain-open", 20, 10, tau, 1000)).max_rel_err
                for tau in (0.2, 0.1, 0.05)]
        assert errs[0] > errs[1] > errs[2]


class TestChainFormulas:
    @pytest.mark.parametrize("N", [3, 10, 21])
    def test_completeness(self, N):
        for ell in range(1, N):
            assert eff.chain_open_P(N, ell, 0.1, 0.0) == pytest.approx(1.0, abs=1e-12)
        for ell in range(2, N):
            assert eff.chain_both_ends_P(N, ell, 0.1, 0.0) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.data(), st.floats(0, 1e4))
    def test_reflection_symmetry(self, N, data, t):
        ell = data.draw(st.integers(1, N - 1))
        assert eff.chain_open_P(N, ell, 0.1, t) == eff.chain_open_P(N, N - ell, 0.1, t)

    def test_matches_exact_at_t500(self, derived):
        f = derived["chain_N20_ell10"]
        P_exact = f["P"][f["n"].index(5000)]
        assert abs(eff.chain_open_P(20, 10, 0.1, 500.0) - P_exact) / P_exact <= 0.05

    def test_rejects_detector_start(self):
        with pytest.raises(LatticeError):
            eff.chain_open_P(10, 10, 0.1, 1.0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            eff.chain_open_P(10, 3, 0.1, -1.0)

    def test_asym_bulk_limit(self):
        x = 7.0
        assert eff.chain_open_P_asym(1e4, x) == pytest.approx(1 / math.sqrt(2 * math.pi * x), rel=1e-12)

    def test_asym_boundary_scaling(self):
        ell, x = 1.0, 1e4
        assert eff.chain_open_P_asym(ell, x) == pytest.approx(ell**2 / (2 * x * math.sqrt(2 * math.pi * x)), rel=1e-4)

    @pytest.mark.parametrize("ell", [1, 10])
    def test_full_run_against_exact(self, derived, ell):
        ref = derived["fullrun"][f"chain_N20_ell{ell}"]
        s = exact("chain-open", 20, ell, 0.1, 10000)
        rel = np.abs(eff.chain_open_P(20, ell, 0.1, s.t) - s.P) / s.P
        assert rel.max() == pytest.approx(ref["max_rel_err"], rel=1e-6)
        assert int(s.n[np.argmax(rel)]) == ref["argmax_n"]

    def test_asym_converges_from_window_edge(self, derived):
        # at x = 1 the continuum form is still 14% low for l = N/2; the gap closes as x grows
        f = derived["continuum_x1"]
        finite = eff.chain_open_P(200, 100, 0.1, 2000.0)
        assert finite == pytest.approx(f["chain_N200_ell100_finite"], rel=1e-10)
        ratios = [eff.chain_open_P_asym(100, t * 0.1 / 200) / eff.chain_open_P(200, 100, 0.1, t)
                  for t in (2000.0, 4000.0, 10000.0, 20000.0)]
        assert ratios[0] == pytest.approx(0.8565, abs=1e-3)
        assert all(r0 < r1 < 1 for r0, r1 in zip(ratios, ratios[1:]))

    def test_asym_matches_finite_sum_in_window(self):
        # x = t tau / N = 10, inside the continuum window
        N, tau, t = 200, 0.1, 20000.0
        finite = eff.chain_open_P(N, 100, tau, t)
        assert abs(eff.chain_open_P_asym(100, t * tau / N) - finite) / finite <= 0.03

    def test_scale(self):
        sc = eff.AsymptoticScale.of(100, 0.1, 5000.0)
        assert sc.x == pytest.approx(5.0) and sc.x_prime == pytest.approx(2 * 5000 * 0.1 / 99)
        assert sc.in_window
        assert not eff.AsymptoticScale.of(100, 0.1, 10.0).in_window


class TestRingFormulas:
    def test_plateaus(self):
        assert eff.ring_P(20, 10, 0.1, 0.0)[1] == pytest.approx(0.0, abs=1e-15)
        for ell in (1, 3, 7, 12, 19):
            assert eff.ring_P(20, ell, 0.1, 0.0)[1] == pytest.approx(0.5, abs=1e-12)

    def test_completeness(self):
        for ell in range(1, 20):
            assert eff.ring_P(20, ell, 0.1, 0.0)[0] == pytest.approx(1.0, abs=1e-12)

    def test_start_on_detector(self):
        assert eff.ring_P(20, 20, 0.1, 3.0) == (0.0, 0.0)

    def test_odd_ring(self):
        with pytest.raises(LatticeError):
            eff.ring_P(9, 1, 0.1, 1.0)

    @pytest.mark.parametrize("ell", [1, 10])
    def test_full_run_against_exact(self, derived, ell):
        # the mode sum misses the early ballistic transient by a few percent;
        # once x = t tau / N >= 1 it stays within 5%
        ref = derived["fullrun"][f"ring_N20_ell{ell}"]
        s = exact("ring", 20, ell, 0.1, 10000)
        rel = np.abs(eff.ring_P(20, ell, 0.1, s.t)[0] - s.P) / s.P
        assert rel.max() == pytest.approx(ref["max_rel_err"], rel=1e-6)
        assert int(s.n[np.argmax(rel)]) == ref["argmax_n"]
        assert rel[s.t * 0.1 / 20 >= 1].max() <= 0.05

    def test_oracle_samples(self, derived):
        f = derived["ring_N20_ell10"]
        n = np.array(f["n"])
        assert np.max(np.abs(eff.ring_P(20, 10, 0.1, n * 0.1)[0] - f["P"]) / f["P"]) <= 0.05

    @pytest.mark.parametrize("ell,t", [(50, 2000.0), (30, 2000.0), (50, 20000.0)])
    def test_asym_matches_finite_sum(self, ell, t):
        N, tau = 200, 0.1
        P, plateau = eff.ring_P(N, ell, tau, t)
        assert abs(eff.ring_P_asym(ell, t * tau / N) - (P - plateau)) / (P - plateau) <= 0.05

    def test_asym_antipode_excess_doubles(self, derived):
        # at l = N/2 every odd mode adds coherently and the excess is twice the continuum form
        f = derived["continuum_x1"]
        P, plateau = eff.ring_P(200, 100, 0.1, 2000.0)
        assert P - plateau == pytest.approx(f["ring_N200_ell100_excess"], rel=1e-10)
        assert (P - plateau) / eff.ring_P_asym(100, f["x"]) == pytest.approx(2.0, rel=0.05)

    def test_asym_scalings(self):
        xs = np.array([1e3, 1e4])
        bulk = eff.ring_P_asym(1e5, xs)
        edge = eff.ring_P_asym(1.0, xs)
        assert math.log(bulk[1] / bulk[0]) / math.log(10) == pytest.approx(-0.5, abs=1e-6)
        assert math.log(edge[1] / edge[0]) / math.log(10) == pytest.approx(-1.5, abs=1e-3)


class TestSquareFormulas:
    @pytest.mark.parametrize("case", ["2d-case-iii", "2d-case-iv", "2d-case-v"])
    def test_completeness(self, case):
        assert eff.square2d_P(case, 10, 4, 5, 0.1, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_cases_i_ii_reduce_to_chain(self):
        t = np.linspace(0, 300, 7)
        np.testing.assert_allclose(eff.square2d_P("2d-case-i", 10, 4, 7, 0.1, t), eff.chain_open_P(10, 4, 0.1, t))
        np.testing.assert_allclose(eff.square2d_P("2d-case-ii", 10, 4, 7, 0.1, t), eff.chain_both_ends_P(10, 4, 0.1, t))

    def test_case_i_exact_engine_follows_chain(self):
        # the free axis leaves the chain survival untouched for any tau
        N, tau = 6, 0.7
        s = evolve(kron_step_operator("2d-case-i", N, tau), position_state(N * N, flat_site_2d(2, 5, N)),
                   MeasurementProtocol(tau, 300))
        h, d = build(LatticeSpec("chain-open", N))
        ref = evolve(step_operator(h, d, tau), position_state(N, 2), MeasurementProtocol(tau, 300))
        np.testing.assert_allclose(s.P, ref.P, atol=1e-12)

    def test_bad_case(self):
        with pytest.raises(LatticeError):
            eff.square2d_P("2d-case-vi", 10, 2, 2, 0.1, 1.0)

    @pytest.mark.parametrize("case,lx,ly", [("v", 10, 10), ("iii", 10, 10), ("iv", 2, 1), ("v", 2, 10)])
    def test_full_run_against_kronecker_engine(self, derived, case, lx, ly):
        ref = derived["fullrun"][f"square_case_{case}_{lx}_{ly}"]
        N, tau = 20, 0.1
        s = evolve(kron_step_operator(f"2d-case-{case}", N, tau), position_state(N * N, flat_site_2d(lx, ly, N)),
                   MeasurementProtocol(tau, 20000))
        rel = np.abs(eff.square2d_P(f"2d-case-{case}", N, lx, ly, tau, s.t) - s.P) / s.P
        assert rel.max() == pytest.approx(ref["max_rel_err"], rel=1e-6)
        assert int(s.n[np.argmax(rel)]) == ref["argmax_n"]
        assert rel[s.t * tau / N >= 1].max() == pytest.approx(ref["max_rel_err_x_ge_1"], rel=1e-6)

    def test_case_v_oracle_samples(self, derived):
        f = derived["square_case_v_10_10"]
        n = np.array(f["n"])
        P = eff.square2d_P("2d-case-v", 20, 10, 10, 0.1, n * 0.1)
        assert np.max(np.abs(P - f["P"]) / np.array(f["P"])) <= 0.05

    def test_asym_product_in_window(self):
        N, tau, t = 200, 0.1, 20000.0
        fin = eff.square2d_P("2d-case-iii", N, 100, 100, tau, t)
        asym = eff.square2d_P_asym("2d-case-iii", N, 100, 100, tau, t)
        assert abs(asym - fin) / fin <= 0.06


class TestDecayModes:
    def test_ring_surviving_family(self):
        N = 20
        h, d = build(LatticeSpec("ring", N))
        modes = eff.decay_modes(h, d, 0.1)
        zero = [m for m in modes if m.rate == 0.0]
        assert len(zero) == (N - 2) // 2
        assert all(m.index % 2 == 0 for m in zero)

    def test_chain_slowest_rate(self):
        h, d = build(LatticeSpec("chain-open", 20))
        modes = eff.decay_modes(h, d, 0.1)
        assert modes[0].index == 1
        assert modes[0].rate == pytest.approx((0.2 / 20) * math.sin(math.pi / 20) ** 2, rel=1e-14)
        assert [m.rate for m in modes] == sorted(m.rate for m in modes)
        for m in modes:
            assert np.sum(m.profile**2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("layout", ["end", "both-ends"])
    def test_numerical_matches_analytic(self, layout):
        h, d = build(LatticeSpec("chain-open", 10, layout=layout))
        ana = {m.index: m for m in eff.decay_modes(h, d, 0.1, method="analytic")}
        num = {m.index: m for m in eff.decay_modes(h, d, 0.1, method="numerical")}
        assert ana.keys() == num.keys()
        for k in ana:
            assert num[k].rate == pytest.approx(ana[k].rate, abs=1e-12)
            assert num[k].energy == pytest.approx(ana[k].energy, abs=1e-12)

    def test_ring_numerical_energies_match(self):
        # H_S of the ring is an open chain: energies come from the same cosine band
        h, d = build(LatticeSpec("ring", 12))
        ana = sorted(m.energy for m in eff.decay_modes(h, d, 0.1, method="analytic"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            num = sorted(m.energy for m in eff.decay_modes(h, d, 0.1, method="numerical"))
        np.testing.assert_allclose(ana, num, atol=1e-12)

    def test_degenerate_custom_graph_warns(self):
        m = np.zeros((4, 4))
        m[0, 3] = m[3, 0] = m[1, 3] = m[3, 1] = -1.0  # sites 1, 2 both hang off detector 4; site 3 isolated
        h = Hamiltonian(m, 1.0, "custom", (4,))
        with pytest.warns(UserWarning, match="degenerate"):
            eff.decay_modes(h, DetectorSet.from_detected([3], 4), 0.1)

    def test_analytic_unavailable(self):
        h, d = build(LatticeSpec("complete", 5))
        with pytest.raises(LatticeError):
            eff.decay_modes(h, d, 0.1, method="analytic")
