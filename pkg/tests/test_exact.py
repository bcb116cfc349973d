import math

import numpy as np
import pytest

from ionvib import exact, hilbert as hb, model
from ionvib.errors import ConvergenceError, InvalidModelError
from ionvib.units import HBAR_EV_FS, ev_to_rad_per_fs

DELTA_W = ev_to_rad_per_fs(0.08679)


def rabi_population(times_fs):
    return np.cos(DELTA_W * times_fs / 2.0) ** 2


class TestAssembly:
    def test_hermitian(self):
        spec = model.build_toy_model(2, 5.0)
        layout = exact.layout_for(spec, (4, 4))
        h = exact.assemble_hamiltonian(spec, layout)
        assert h.is_hermitian(1e-12)

    def test_decoupled_block_structure(self):
        # kappa = 0: H = H_el (x) I + I (x) sum nu_k n_k exactly
        spec = model.build_toy_model(2, 0.0)
        layout = exact.layout_for(spec, (3, 3))
        h = exact.assemble_hamiltonian(spec, layout).to_dense()
        h_el = np.array([[0, DELTA_W / 2], [DELTA_W / 2, 0]])
        expected = np.kron(h_el, np.eye(9)).astype(complex)
        expected += spec.nu[0] * hb.number_operator(layout, 0).to_dense()
        expected += spec.nu[1] * hb.number_operator(layout, 1).to_dense()
        assert np.allclose(h, expected, atol=1e-14)

    def test_interaction_frame_at_zero(self):
        spec = model.build_toy_model(2, 2.0)
        layout = exact.layout_for(spec, (4, 4))
        lab = exact.assemble_hamiltonian(spec, layout, "lab", 0.0).to_dense()
        inter = exact.assemble_hamiltonian(spec, layout, "interaction", 0.0).to_dense()
        nsum = sum(
            spec.nu[k] * hb.number_operator(layout, k).to_dense() for k in range(2)
        )
        assert np.allclose(inter, lab - nsum, atol=1e-13)

    def test_dimension_limit_error(self):
        spec = model.build_toy_model(2, 1.0)
        with pytest.raises(InvalidModelError):
            exact.layout_for(spec, (2048, 2048))


class TestPropagation:
    def test_initial_condition(self):
        spec = model.build_toy_model(2, 1.0)
        tr = exact.propagate(
            exact.PropagationRequest(spec=spec, times_fs=np.array([0.0, 5.0]), cutoffs=(4, 4))
        )
        assert tr.populations[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert tr.populations[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_rabi_limit_and_zero_crossing(self):
        spec = model.build_toy_model(2, 0.0)
        t_zero = math.pi * HBAR_EV_FS / 0.08679  # ~23.8 fs
        times = np.array([0.0, 10.0, t_zero, 35.0, 50.0])
        tr = exact.propagate(exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=(2, 2)))
        assert np.max(np.abs(tr.populations[:, 0] - rabi_population(times))) < 1e-9
        assert tr.populations[2, 0] == pytest.approx(0.0, abs=1e-9)

    def test_population_conservation_and_parity(self):
        spec = model.build_toy_model(2, 3.0)
        times = exact.default_time_grid(300.0, 16)
        tr = exact.propagate(exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=(10, 8)))
        assert np.max(np.abs(tr.populations.sum(axis=1) - 1.0)) < 1e-9
        # sign flip of kappa leaves populations invariant
        flipped = model.LvcmSpec(spec.delta, -spec.kappa, spec.nu)
        tr2 = exact.propagate(exact.PropagationRequest(spec=flipped, times_fs=times, cutoffs=(10, 8)))
        assert np.max(np.abs(tr.populations - tr2.populations)) < 1e-9

    def test_norm_conservation(self):
        spec = model.build_toy_model(2, 5.0)
        layout = exact.layout_for(spec, (12, 10))
        parts = exact.hamiltonian_parts(spec, layout)
        psi0 = hb.basis_vector(layout, 0).data
        states = exact._propagate_pure(parts, psi0, exact.default_time_grid(400.0, 10), 1e-8)
        norms = [np.linalg.norm(s) for s in states]
        assert np.max(np.abs(np.array(norms) - 1.0)) < 1e-8

    def test_energy_conservation(self):
        spec = model.build_toy_model(2, 5.0)
        req = exact.PropagationRequest(
            spec=spec, times_fs=exact.default_time_grid(400.0, 10), cutoffs=(14, 12)
        )
        energies = exact.expectation_series(req)
        h_scale = abs(energies[0]) + 1.0
        assert np.max(np.abs(energies - energies[0])) / h_scale < 1e-8

    def test_frame_equivalence(self):
        spec = model.build_toy_model(2, 1.0)
        times = exact.default_time_grid(200.0, 11)
        lab = exact.propagate(exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=(8, 8)))
        inter = exact.propagate(
            exact.PropagationRequest(
                spec=spec, times_fs=times, cutoffs=(8, 8), frame="interaction", eps_int=1e-10
            )
        )
        assert np.max(np.abs(lab.populations - inter.populations)) < 1e-8

    def test_thermal_initial_state_close_to_ground(self):
        # quantifies the zero-temperature approximation at nbar = 0.06;
        # measured max difference is ~0.035 for lambda = Delta, N = 2
        spec = model.build_toy_model(2, 1.0)
        times = exact.default_time_grid(200.0, 11)
        cold = exact.propagate(exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=(8, 8)))
        warm = exact.propagate(
            exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=(8, 8), nbar=0.06)
        )
        dev = np.max(np.abs(cold.populations - warm.populations))
        assert 0.0 < dev < 0.05

    def test_grid_validation(self):
        spec = model.build_toy_model(2, 1.0)
        with pytest.raises(InvalidModelError):
            exact.PropagationRequest(spec=spec, times_fs=np.array([1.0, 2.0]))
        with pytest.raises(InvalidModelError):
            exact.PropagationRequest(spec=spec, times_fs=np.array([0.0, 2.0, 2.0]))


class TestCutoffSearch:
    def test_uncoupled_modes_need_two_levels(self):
        spec = model.build_toy_model(2, 0.0)
        req = exact.PropagationRequest(spec=spec, times_fs=exact.default_time_grid(100.0, 5))
        assert exact.converge_cutoffs(req) == (2, 2)

    def test_monotone_in_coupling(self):
        times = exact.default_time_grid(200.0, 9)
        weak = exact.converge_cutoffs(
            exact.PropagationRequest(spec=model.build_toy_model(2, 1.0), times_fs=times)
        )
        strong = exact.converge_cutoffs(
            exact.PropagationRequest(spec=model.build_toy_model(2, 10.0), times_fs=times)
        )
        assert all(s >= w for s, w in zip(strong, weak))
        assert sum(strong) > sum(weak)

    def test_returned_cutoffs_are_stable(self):
        spec = model.build_toy_model(2, 1.0)
        times = exact.default_time_grid(200.0, 9)
        req = exact.PropagationRequest(spec=spec, times_fs=times, eps_cut=1e-4)
        cuts = exact.converge_cutoffs(req)
        base = exact.propagate(
            exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=cuts)
        ).populations
        for k in range(2):
            probe = list(cuts)
            probe[k] += 2
            grown = exact.propagate(
                exact.PropagationRequest(spec=spec, times_fs=times, cutoffs=tuple(probe))
            ).populations
            assert np.max(np.abs(grown - base)) < 1e-4

    def test_failure_when_limit_too_small(self):
        spec = model.build_toy_model(2, 30.0)
        req = exact.PropagationRequest(
            spec=spec, times_fs=exact.default_time_grid(400.0, 5), max_cutoff=8
        )
        with pytest.raises(ConvergenceError):
            exact.converge_cutoffs(req)


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        from ionvib import trace as tr

        spec = model.build_toy_model(2, 1.0)
        result = exact.propagate(
            exact.PropagationRequest(
                spec=spec, times_fs=exact.default_time_grid(100.0, 5), cutoffs=(6, 6)
            )
        )
        path = tmp_path / "trace.csv"
        result.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "time_fs,P_0,P_1,leakage"
        back = tr.read_csv(path)
        assert np.array_equal(back.populations, result.populations)
        assert np.array_equal(back.times_fs, result.times_fs)
        assert np.array_equal(back.leakage, result.leakage)


def test_amplitude_vector_initial_state():
    spec = model.build_toy_model(2, 1.0)
    amps = np.array([0.6, 0.8j])
    tr = exact.propagate(
        exact.PropagationRequest(
            spec=spec, times_fs=np.array([0.0, 5.0]), initial_state=amps, cutoffs=(4, 4)
        )
    )
    assert tr.populations[0, 0] == pytest.approx(0.36, abs=1e-12)
    assert tr.populations[0, 1] == pytest.approx(0.64, abs=1e-12)


def test_wall_time_recorded():
    spec = model.build_toy_model(2, 1.0)
    tr = exact.propagate(
        exact.PropagationRequest(spec=spec, times_fs=np.array([0.0, 5.0]), cutoffs=(4, 4))
    )
    assert tr.metadata["wall_time_s"] > 0
