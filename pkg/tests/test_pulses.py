import math

import numpy as np
import pytest

from qoc.errors import ContractError
from qoc.hamiltonians import NmrSample, SystemModel, build_nmr
from qoc.linalg import HermitianOperator, StateVector, ground_state, kron, random_state
from qoc.pulses import (
    SIGN_FORWARD,
    SIGN_REVERSED,
    PulseGrid,
    PulseSequence,
    finite_difference_gradient,
    ground_leakage,
    ground_leakage_value_and_gradient,
    impurity_value_and_gradient,
    infidelity_value_and_gradient,
    parse_pulse_file_text,
    propagate,
    pulse_file_text,
    random_initial_pulses,
    read_pulse_file,
    state_infidelity,
    subsystem_impurity,
    write_pulse_file,
)

from conftest import ghz_amplitudes, w3_amplitudes


def unit_norm_hermitian(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = a + a.conj().T
    return h / np.linalg.norm(h, 2)


def toy_model(rng, n_sites=2, n_channels=3):
    d = 2**n_sites
    drift = HermitianOperator(unit_norm_hermitian(rng, d))
    controls = tuple(
        (f"c{j}", HermitianOperator(unit_norm_hermitian(rng, d))) for j in range(n_channels)
    )
    return SystemModel(drift=drift, controls=controls, site_dims=(2,) * n_sites, platform="nmr")


def toy_sequence(rng, model, segments, dt, sign, scale=2.0):
    amps = rng.uniform(-scale, scale, (segments, model.num_channels))
    return PulseSequence(
        PulseGrid(dt=dt, segments=segments),
        amps,
        model.channel_labels,
        sign,
        bounds=(-scale, scale),
    )


def rel_err(got, want):
    return np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-300)


class TestPropagate:
    def test_identity_when_everything_zero(self):
        sample = NmrSample(name="one", spins=(("A", 0.0),), couplings={})
        model = build_nmr(sample)
        seq = PulseSequence(
            PulseGrid(1e-5, 4), np.zeros((4, 2)), model.channel_labels, SIGN_FORWARD
        )
        psi0 = StateVector(np.array([0.6, 0.8j]), (2,))
        final, _ = propagate(model, seq, psi0)
        assert np.abs(final.amplitudes - psi0.amplitudes).max() < 1e-12

    def test_quarter_turn_about_x(self):
        # One segment of the pi*sigma_x channel with area pi/4 rotates
        # |0> into (|0> - i|1>)/sqrt(2).
        sample = NmrSample(name="one", spins=(("A", 0.0),), couplings={})
        model = build_nmr(sample)
        dt = 5e-6
        u = 1.0 / (4.0 * dt)  # theta = pi * u * dt = pi/4
        amps = np.array([[u, 0.0]])
        seq = PulseSequence(PulseGrid(dt, 1), amps, model.channel_labels, SIGN_FORWARD)
        final, _ = propagate(model, seq, ground_state((2,)))
        want = np.array([1.0, -1.0j]) / np.sqrt(2)
        assert np.abs(final.amplitudes - want).max() < 1e-12

    def test_reversal_contract(self, rng):
        model = toy_model(rng)
        seq = toy_sequence(rng, model, 6, 0.05, SIGN_FORWARD)
        psi0 = random_state(model.site_dims, rng)
        mid, _ = propagate(model, seq, psi0)
        back, _ = propagate(model, seq.reversed_play_order(), mid)
        assert np.abs(back.amplitudes - psi0.amplitudes).max() < 1e-9

    def test_reversed_sequence_realises_adjoint(self, rng):
        # Optimizing with the reversed sign then playing segments backwards
        # under the forward sign must invert the optimized map.
        model = toy_model(rng)
        seq_r = toy_sequence(rng, model, 5, 0.04, SIGN_REVERSED)
        psi0 = random_state(model.site_dims, rng)
        phi, _ = propagate(model, seq_r, psi0)
        physical = seq_r.reversed_play_order()
        assert physical.sign == SIGN_FORWARD
        back, _ = propagate(model, physical, phi)
        assert np.abs(back.amplitudes - psi0.amplitudes).max() < 1e-9

    def test_norm_preserved(self, rng):
        model = toy_model(rng, n_sites=3, n_channels=4)
        for _ in range(5):
            seq = toy_sequence(rng, model, 8, 0.02, SIGN_FORWARD)
            psi0 = random_state(model.site_dims, rng)
            final, _ = propagate(model, seq, psi0)
            assert abs(final.norm - 1.0) < 1e-9

    def test_workspace_consistency(self, rng):
        model = toy_model(rng)
        seq = toy_sequence(rng, model, 6, 0.03, SIGN_FORWARD)
        psi0 = random_state(model.site_dims, rng)
        _, ws = propagate(model, seq, psi0)
        assert ws.consistency_residual(psi0) < 1e-10

    def test_dimension_mismatch(self, rng):
        model = toy_model(rng)
        seq = toy_sequence(rng, model, 3, 0.01, SIGN_FORWARD)
        with pytest.raises(ValueError):
            propagate(model, seq, ground_state((2,)))


class TestCosts:
    def test_infidelity_identical_and_orthogonal(self, rng):
        a = random_state((2, 2), rng)
        assert state_infidelity(a, a) < 1e-12
        zero = ground_state((2,))
        one = StateVector(np.array([0, 1], dtype=complex), (2,))
        assert abs(state_infidelity(zero, one) - 1.0) < 1e-12

    def test_infidelity_half_overlap(self):
        a = ground_state((2,))
        b = StateVector(np.array([1, 1], dtype=complex) / np.sqrt(2), (2,))
        assert abs(state_infidelity(a, b) - 0.5) < 1e-12

    def test_impurity_product_zero(self, rng):
        s = kron(random_state((2,), rng), random_state((2, 2), rng))
        assert subsystem_impurity(s, {0}) < 1e-12

    def test_impurity_ghz_half(self):
        s = StateVector(ghz_amplitudes(4), (2,) * 4)
        assert abs(subsystem_impurity(s, {0, 1}) - 0.5) < 1e-12

    def test_impurity_w3(self):
        s = StateVector(w3_amplitudes(), (2, 2, 2))
        assert abs(subsystem_impurity(s, {0}) - 4.0 / 9.0) < 1e-12

    def test_ground_leakage_cases(self, rng):
        psi_b = random_state((2, 2), rng)
        zero_block = kron(ground_state((2, 2)), psi_b)
        assert ground_leakage(zero_block, {0, 1}) < 1e-12

        s = StateVector(ghz_amplitudes(4), (2,) * 4)
        assert abs(ground_leakage(s, {0, 1}) - 0.5) < 1e-12

        ones = StateVector(np.array([0, 0, 0, 1], dtype=complex), (2, 2))
        flipped = kron(ones, psi_b)
        assert abs(ground_leakage(flipped, {0, 1}) - 1.0) < 1e-12

    def test_improper_subsets_rejected(self, rng):
        s = random_state((2, 2), rng)
        with pytest.raises(ValueError):
            subsystem_impurity(s, set())
        with pytest.raises(ValueError):
            subsystem_impurity(s, {0, 1})
        with pytest.raises(ValueError):
            ground_leakage(s, {0, 1})


class TestGradients:
    DT_NORM = 1e-4  # dt * max||H|| operating point for oracle comparisons

    def fd_check(self, rng, kind, n_sites=2, keep=(0,)):
        model = toy_model(rng, n_sites=n_sites)
        max_h = 1.0 + 2.0 * model.num_channels
        dt = self.DT_NORM / max_h
        psi0 = random_state(model.site_dims, rng)
        target = random_state(model.site_dims, rng)

        if kind == "transfer":
            sign = SIGN_FORWARD
            value_and_grad = lambda s: infidelity_value_and_gradient(model, s, psi0, target)
            cost_of = lambda st: state_infidelity(st, target)
        elif kind == "impurity":
            sign = SIGN_REVERSED
            value_and_grad = lambda s: impurity_value_and_gradient(model, s, psi0, keep)
            cost_of = lambda st: subsystem_impurity(st, keep)
        else:
            sign = SIGN_REVERSED
            value_and_grad = lambda s: ground_leakage_value_and_gradient(model, s, psi0, keep)
            cost_of = lambda st: ground_leakage(st, keep)

        seq = toy_sequence(rng, model, 4, dt, sign)
        _, grad, _ = value_and_grad(seq)

        def cost_fn(u):
            state, _ = propagate(model, seq.with_amplitudes(u), psi0)
            return cost_of(state)

        fd = finite_difference_gradient(cost_fn, seq.amplitudes, 1e-4)
        err = rel_err(grad, fd)

        refined = PulseSequence(
            PulseGrid(dt / 2.0, 8),
            np.repeat(seq.amplitudes, 2, axis=0),
            seq.channels,
            sign,
            seq.bounds,
        )
        _, grad2, _ = value_and_grad(refined)

        def cost_fn2(u):
            state, _ = propagate(model, refined.with_amplitudes(u), psi0)
            return cost_of(state)

        fd2 = finite_difference_gradient(cost_fn2, refined.amplitudes, 1e-4)
        err2 = rel_err(grad2, fd2)
        return err, err2

    @pytest.mark.parametrize("kind", ["transfer", "impurity", "ground"])
    def test_matches_finite_differences(self, kind, rng):
        errs = [self.fd_check(rng, kind)[0] for _ in range(4)]
        assert max(errs) < 1e-4

    @pytest.mark.parametrize("kind", ["transfer", "impurity", "ground"])
    def test_first_order_convergence(self, kind, rng):
        ratios = []
        for _ in range(4):
            err, err2 = self.fd_check(rng, kind)
            ratios.append(err2 / err)
        assert np.median(ratios) < 0.65

    def test_transfer_fixed_point(self, rng):
        model = toy_model(rng)
        seq = toy_sequence(rng, model, 4, 1e-4, SIGN_FORWARD)
        psi0 = random_state(model.site_dims, rng)
        final, _ = propagate(model, seq, psi0)
        cost, grad, _ = infidelity_value_and_gradient(model, seq, psi0, final)
        assert cost < 1e-12
        assert np.abs(grad).max() < 1e-9

    def test_impurity_fixed_point_zero_hamiltonian(self, rng):
        sample = NmrSample(name="pair", spins=(("A", 0.0), ("B", 0.0)), couplings={})
        model = build_nmr(sample)
        seq = PulseSequence(
            PulseGrid(1e-5, 3), np.zeros((3, 4)), model.channel_labels, SIGN_REVERSED
        )
        product = kron(random_state((2,), rng), random_state((2,), rng))
        cost, grad, _ = impurity_value_and_gradient(model, seq, product, {0})
        assert cost < 1e-12
        assert np.abs(grad).max() < 1e-9

    def test_ground_fixed_point(self, rng):
        sample = NmrSample(name="pair", spins=(("A", 0.0), ("B", 0.0)), couplings={})
        model = build_nmr(sample)
        seq = PulseSequence(
            PulseGrid(1e-5, 3), np.zeros((3, 4)), model.channel_labels, SIGN_REVERSED
        )
        state = kron(ground_state((2,)), random_state((2,), rng))
        cost, grad, _ = ground_leakage_value_and_gradient(model, seq, state, {0})
        assert cost < 1e-12
        assert np.abs(grad).max() < 1e-9

    def test_descent_direction_decreases_ground_cost(self, rng):
        model = toy_model(rng, n_sites=3, n_channels=4)
        dt = 1e-3 / (1 + 2 * model.num_channels)
        seq = toy_sequence(rng, model, 5, dt, SIGN_REVERSED)
        psi0 = random_state(model.site_dims, rng)
        cost, grad, _ = ground_leakage_value_and_gradient(model, seq, psi0, {0})
        stepped = seq.with_amplitudes(seq.amplitudes - 1e-2 * grad)
        state, _ = propagate(model, stepped, psi0)
        assert ground_leakage(state, {0}) < cost

    def test_sign_contract_enforced(self, rng):
        model = toy_model(rng)
        fwd = toy_sequence(rng, model, 3, 1e-4, SIGN_FORWARD)
        rev = toy_sequence(rng, model, 3, 1e-4, SIGN_REVERSED)
        psi0 = random_state(model.site_dims, rng)
        target = random_state(model.site_dims, rng)
        with pytest.raises(ContractError):
            infidelity_value_and_gradient(model, rev, psi0, target)
        with pytest.raises(ContractError):
            impurity_value_and_gradient(model, fwd, psi0, {0})
        with pytest.raises(ContractError):
            ground_leakage_value_and_gradient(model, fwd, psi0, {0})

    def test_adjoint_closed_form_matches_elementwise_definition(self, rng):
        # The impurity adjoint vector (rho_A (x) 1)|phi> must equal the raw
        # double-sum lambda_{ij} = sum_{i'j'} conj(phi_{i'j'}) phi_{ij'} phi_{i'j}.
        for _ in range(5):
            phi = random_state((2, 2, 2), rng)
            m = phi.amplitudes.reshape(2, 4)  # A = site 0, B = sites 1,2
            rho = m @ m.conj().T
            closed = (rho @ m).reshape(-1)
            element = np.zeros_like(closed).reshape(2, 4)
            for i in range(2):
                for j in range(4):
                    acc = 0.0 + 0.0j
                    for ip in range(2):
                        for jp in range(4):
                            acc += np.conj(m[ip, jp]) * m[i, jp] * m[ip, j]
                    element[i, j] = acc
            assert np.abs(closed - element.reshape(-1)).max() < 1e-12


class TestFiniteDifferences:
    def test_constant_cost(self):
        grad = finite_difference_gradient(lambda u: 3.5, np.ones((4, 2)), 1e-3)
        assert np.abs(grad).max() == 0.0

    def test_quadratic(self, rng):
        u0 = rng.uniform(-1, 1, (3, 2))
        grad = finite_difference_gradient(lambda u: float(np.sum(u**2)), u0, 1e-5)
        assert np.abs(grad - 2 * u0).max() < 1e-8

    def test_positive_step_required(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda u: 0.0, np.ones((1, 1)), 0.0)


class TestPulseFiles:
    def test_round_trip_bit_exact(self, rng):
        grid = PulseGrid(dt=5e-6, segments=7)
        seq = random_initial_pulses(
            grid, ("x:H", "y:H", "x:F"), (-2e4, 2e4), rng, SIGN_REVERSED, platform="nmr"
        )
        text = pulse_file_text(seq)
        back = parse_pulse_file_text(text)
        assert np.array_equal(back.amplitudes, seq.amplitudes)
        assert back.channels == seq.channels
        assert back.sign == seq.sign
        assert back.grid == seq.grid
        assert back.bounds == seq.bounds
        assert back.platform == "nmr"

    def test_file_round_trip(self, tmp_path, rng):
        grid = PulseGrid(dt=0.05, segments=3)
        seq = random_initial_pulses(grid, ("x:Q1", "y:Q1"), (-0.3, 0.3), rng, SIGN_FORWARD)
        path = tmp_path / "seq.pulse"
        write_pulse_file(seq, path)
        back = read_pulse_file(path)
        assert np.array_equal(back.amplitudes, seq.amplitudes)

    def test_initial_guess_inside_fraction_of_box(self, rng):
        grid = PulseGrid(dt=1.0, segments=50)
        seq = random_initial_pulses(grid, ("a", "b"), (-10.0, 10.0), rng, SIGN_FORWARD)
        assert np.abs(seq.amplitudes).max() <= 1.0

    def test_bounds_enforced(self):
        grid = PulseGrid(dt=1.0, segments=1)
        with pytest.raises(ValueError):
            PulseSequence(grid, np.array([[5.0]]), ("a",), SIGN_FORWARD, bounds=(-1, 1))
