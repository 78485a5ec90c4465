import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from splitfsk.circuit import reference_params, solve_steady_state
from splitfsk.errors import DomainError, SingularInductance, StepTooLarge
from splitfsk.transient import (StateVector, derivatives, energy_balance, integrate,
                                peak_tones, rk4_maps, rk4_step, settled_efficiency,
                                state_matrices, steady_state_settle, stored_energy, tone_drive,
                                transient_efficiency, transition_run, write_waveforms_csv)

TWO_PI = 2 * math.pi


class TestStateModel:
    def test_state_vector_round_trip(self):
        sv = StateVector(1.0, 2.0, 3.0, 4.0)
        assert sv.as_array().tolist() == [1, 2, 3, 4]
        assert StateVector.from_array(sv.as_array()) == sv
        assert StateVector.zero().as_array().tolist() == [0, 0, 0, 0]

    def test_derivatives_match_matrices(self, params):
        A, b = state_matrices(params)
        x = np.array([0.1, -0.2, 3.0, -1.5])
        assert np.allclose(derivatives(x, 0.7, params), A @ x + 0.7 * b)
        sv = derivatives(StateVector.from_array(x), 0.7, params)
        assert isinstance(sv, StateVector)

    def test_eigenvalues_are_circuit_poles(self, params, poles):
        A, _ = state_matrices(params)
        ev = np.sort_complex(np.linalg.eigvals(A))
        assert np.allclose(ev, np.sort_complex(poles.all), rtol=1e-9)

    def test_singular_inductance(self):
        p = reference_params(0.4)
        # bypass validation to reach the guard
        object.__setattr__(p, "M", math.sqrt(p.L1 * p.L2))
        with pytest.raises(SingularInductance):
            state_matrices(p)


class TestIntegrator:
    def test_recursion_equals_stepwise_rk4(self, params):
        drive = tone_drive(0.9e6, 0.3)
        res = integrate(params, drive, (0.0, 5e-6))
        dt = res.t[1] - res.t[0]
        x = np.zeros(4)
        for t in res.t[:-1]:
            x = rk4_step(x, drive(np.array([t]))[0], drive(np.array([t + dt / 2]))[0],
                         drive(np.array([t + dt]))[0], dt, params)
        assert np.allclose(x, res.final_state.as_array(), rtol=1e-9, atol=1e-12)

    def test_rk4_maps_single_step(self, params):
        Phi, G = rk4_maps(params, 1e-8)
        x = np.array([0.01, 0.02, -0.3, 0.4])
        assert np.allclose(Phi @ x + G @ [1.0, 0.5, -0.2],
                           rk4_step(x, 1.0, 0.5, -0.2, 1e-8, params), rtol=1e-12)

    def test_against_adaptive_solver(self, params):
        drive = tone_drive(1.1e6, 0.0)
        res = integrate(params, drive, (0.0, 4e-6))
        A, b = state_matrices(params)
        ref = solve_ivp(lambda t, x: A @ x + b * drive(np.array([t]))[0], (0, 4e-6), np.zeros(4),
                        method="DOP853", rtol=1e-10, atol=1e-14, t_eval=res.t)
        scale = np.max(np.abs(ref.y[1]))
        assert np.max(np.abs(res.i2 - ref.y[1])) < 1e-5 * scale

    def test_linearity(self, params):
        d1, d2 = tone_drive(0.9e6, 0.2), tone_drive(1.3e6, 1.0)
        span = (0.0, 3e-6)
        both = integrate(params, lambda t: 2 * d1(t) - 0.5 * d2(t), span)
        a = integrate(params, d1, span)
        b = integrate(params, d2, span)
        assert np.allclose(both.i2, 2 * a.i2 - 0.5 * b.i2, atol=1e-12)

    def test_zero_input_decays(self, params):
        res = integrate(params, lambda t: np.zeros_like(t), (0.0, 40e-6),
                        x0=StateVector(0.1, 0.0, 0.0, 0.0))
        assert abs(res.final_state.i1) < 1e-3 * 0.1
        assert res.E1 == 0

    def test_batched_equals_individual(self, params):
        phases = np.array([0.0, 1.0])
        res = integrate(params, tone_drive(1e6, phases), (0.0, 2e-6))
        single = integrate(params, tone_drive(1e6, 1.0), (0.0, 2e-6))
        assert res.i2.shape[1] == 2
        assert np.allclose(res.i2[:, 1], single.i2)

    def test_step_limits(self, params):
        with pytest.raises(StepTooLarge):
            integrate(params, tone_drive(1e6), (0.0, 1e-6), dt=1e-7)
        with pytest.raises(DomainError):
            integrate(params, tone_drive(1e6), (1e-6, 0.0))

    def test_energy_balance(self, params):
        res = integrate(params, tone_drive(0.85e6, 0.0), (0.0, 20e-6))
        bal = energy_balance(params, res)
        assert abs(bal["residual"]) < 1e-5 * bal["E_in"]

    def test_energy_balance_square_drive(self, params):
        # trapezoidal quadrature across the jumps limits the agreement
        res = integrate(params, tone_drive(0.85e6, 0.0, "RFSK_BIPOLAR"), (0.0, 20e-6))
        bal = energy_balance(params, res)
        assert abs(bal["residual"]) < 1e-3 * bal["E_in"]

    def test_stored_energy_positive(self, params):
        x = np.random.default_rng(0).standard_normal((100, 4))
        assert np.all(stored_energy(params, x) > 0)

    def test_waveform_csv(self, params, tmp_path):
        res = integrate(params, tone_drive(1e6), (0.0, 1e-6))
        path = tmp_path / "w.csv"
        write_waveforms_csv(path, res)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,v1,i1,v2,i2"
        assert len(lines) == len(res.t) + 1


class TestSteadyState:
    @pytest.mark.parametrize("which", ["minus", "zero", "plus"])
    def test_settled_matches_phasor(self, params, which):
        f_minus, f_plus = peak_tones(params)
        f = {"minus": f_minus, "zero": 1e6, "plus": f_plus}[which]
        eta = settled_efficiency(params, f)
        assert eta == pytest.approx(solve_steady_state(params, TWO_PI * f).eta, rel=2e-3)

    def test_settled_amplitude_matches_phasor(self, params):
        f = 1e6
        state = steady_state_settle(params, f, phase=0.0)
        ss = solve_steady_state(params, TWO_PI * f)
        # drive is sqrt(2) sin(phase 0) = imaginary axis of the phasor at t = 0
        expected_i2 = math.sqrt(2) * ss.I2.imag
        assert float(state.i2) == pytest.approx(expected_i2, rel=5e-3, abs=1e-3 * abs(ss.I2))

    def test_cycle_count_domain(self, params):
        with pytest.raises(DomainError):
            steady_state_settle(params, 1e6, cycles=10)


class TestTransition:
    def test_window_efficiency_converges_to_average(self, params):
        f_minus, f_plus = peak_tones(params)
        long = transient_efficiency(params, "FSK", "+-", 1000e-6)
        assert long == pytest.approx(settled_efficiency(params, f_minus), abs=5e-3)

    def test_transition_phases(self, params):
        f_minus, f_plus = peak_tones(params)
        tr = transition_run(params, f_plus, f_minus, 10e-6, n_phases=4)
        assert tr.per_phase.shape == (4,)
        assert tr.eta_T == pytest.approx(tr.per_phase.mean())

    def test_bad_arguments(self, params):
        with pytest.raises(DomainError):
            transient_efficiency(params, "PSK")
        with pytest.raises(DomainError):
            transient_efficiency(params, "FSK", "++")
