import numpy as np
import pytest
import scipy.linalg

from conftest import pulse_input, smooth_pulse_input

from popdiff.assembly import assemble
from popdiff.density import RhoParams
from popdiff.errors import SimulationDivergenceError
from popdiff.forward import (
    Episode,
    deterministic_system,
    population_system,
    population_vs_montecarlo,
    simulate,
    simulate_deterministic,
)
from popdiff.grid import GridSpec, eta_mass_matrix, eta_stiffness_matrix
from popdiff.sampled import SampledSystem, build_sampled


def scalar_system(ahat, bhat, chat=1.0, tau=1.0):
    return SampledSystem(
        block_size=1, ncells=1, tau=tau,
        A_blocks=np.array([[[ahat]]]),
        Agen_blocks=np.array([[[np.log(ahat) / tau if ahat > 0 else -1.0]]]),
        Bhat=np.array([bhat]), Chat=np.array([chat]),
    )


class TestSimulate:
    def test_zero_input_zero_output(self, rho_smooth, spec_small):
        sys = population_system(rho_smooth, spec_small)
        y = simulate(sys, np.zeros(30))
        np.testing.assert_array_equal(y, 0.0)

    def test_scalar_geometric_series(self):
        sys = scalar_system(0.5, 0.5)
        y = simulate(sys, np.ones(10))
        expected = 1.0 - 0.5 ** np.arange(11)
        np.testing.assert_allclose(y, expected, rtol=1e-14)

    def test_linearity(self, rho_smooth, spec_small):
        sys = population_system(rho_smooth, spec_small)
        rng = np.random.default_rng(1)
        u1 = rng.uniform(0, 1, 24)
        u2 = rng.uniform(0, 1, 24)
        y = simulate(sys, u1 + 2.0 * u2)
        np.testing.assert_allclose(
            y, simulate(sys, u1) + 2.0 * simulate(sys, u2), atol=1e-13
        )

    def test_doubling_input_doubles_output(self, rho_smooth, spec_small):
        sys = population_system(rho_smooth, spec_small)
        u = pulse_input(36, spec_small.tau)
        np.testing.assert_allclose(
            simulate(sys, 2 * u), 2 * simulate(sys, u), rtol=1e-14
        )

    def test_time_invariance(self, rho_smooth, spec_small):
        sys = population_system(rho_smooth, spec_small)
        u = pulse_input(24, spec_small.tau)
        shift = 5
        y = simulate(sys, u)
        y_shifted = simulate(sys, np.concatenate([np.zeros(shift), u]))
        np.testing.assert_array_equal(y_shifted[:shift], 0.0)
        np.testing.assert_allclose(y_shifted[shift:], y, atol=1e-14)

    def test_blockwise_matches_dense_recursion(self, rho_smooth, spec_small):
        sys = population_system(rho_smooth, spec_small)
        u = pulse_input(20, spec_small.tau)
        y, states = simulate(sys, u, return_states=True)
        A, B, C = sys.Ahat, sys.Bhat, sys.Chat
        x = np.zeros(sys.dim)
        for j in range(len(u)):
            assert y[j] == pytest.approx(C @ x, abs=1e-13)
            np.testing.assert_allclose(states[j], x, atol=1e-13)
            x = A @ x + B * u[j]
        assert y[-1] == pytest.approx(C @ x, abs=1e-13)

    def test_divergence_guard(self):
        sys = scalar_system(2.0, 1.0)
        with pytest.raises(SimulationDivergenceError):
            simulate(sys, np.ones(1200))


class TestDeterministic:
    def test_zero_input(self):
        y = simulate_deterministic((0.8, 1.2), n=8, tau=1 / 12, u=np.zeros(20))
        np.testing.assert_array_equal(y, 0.0)

    def test_mass_conservation_sealed_boundaries(self):
        # Test-only variant: drop the surface evaporation term and the
        # input; pure insulated diffusion preserves total mass.
        n, q1 = 16, 0.7
        meta = eta_mass_matrix(n)
        gen = -np.linalg.solve(meta, q1 * eta_stiffness_matrix(n))
        rng = np.random.default_rng(2)
        x0 = rng.uniform(0.5, 1.5, n + 1)
        mass0 = np.ones(n + 1) @ meta @ x0
        for t in (0.05, 0.5, 5.0):
            x = scipy.linalg.expm(gen * t) @ x0
            mass = np.ones(n + 1) @ meta @ x
            assert mass == pytest.approx(mass0, abs=1e-9)

    def test_refinement_convergence(self):
        tau = 1 / 12
        u = smooth_pulse_input(60, tau)
        q = (0.6, 1.0)
        y16 = simulate_deterministic(q, 16, tau, u)
        y32 = simulate_deterministic(q, 32, tau, u)
        y64 = simulate_deterministic(q, 64, tau, u)
        coarse_gap = np.abs(y16 - y32).max()
        fine_gap = np.abs(y32 - y64).max()
        assert fine_gap < coarse_gap

    def test_rejects_nonpositive_diffusivity(self):
        with pytest.raises(ValueError):
            simulate_deterministic((0.0, 1.0), 4, 0.1, np.zeros(3))


class TestPopulationVsMonteCarlo:
    def test_zero_input(self, rho_smooth):
        spec = GridSpec(n=6, m1=2, m2=2, tau=1 / 12)
        pop, mc, disc = population_vs_montecarlo(
            rho_smooth, spec, np.zeros(12), nsamples=50, seed=0
        )
        np.testing.assert_array_equal(pop, 0.0)
        np.testing.assert_array_equal(mc, 0.0)
        assert disc == 0.0

    def test_point_mass_collapses_to_deterministic(self):
        q_star = (0.7, 1.1)
        hw = 5e-4
        rho = RhoParams(q_star[0] - hw, q_star[0] + hw,
                        q_star[1] - hw, q_star[1] + hw,
                        q_star[0], q_star[1], 1e-4, 0.0, 1e-4)
        spec = GridSpec(n=12, m1=2, m2=2, tau=1 / 12)
        u = pulse_input(48, spec.tau)
        pop = simulate(population_system(rho, spec), u)
        det = simulate_deterministic(q_star, spec.n, spec.tau, u)
        assert np.abs(pop - det).max() < 1e-3

    def test_discrepancy_small_on_moderate_grid(self, rho_smooth):
        spec = GridSpec(n=8, m1=4, m2=4, tau=1 / 12)
        u = pulse_input(36, spec.tau)
        _, _, disc = population_vs_montecarlo(rho_smooth, spec, u, nsamples=2000, seed=3)
        assert disc < 0.05

    def test_discrepancy_shrinks_with_sample_count(self, rho_smooth):
        # Median discrepancy over seeds drops as the Monte Carlo side
        # gets more draws (the grid trend is in the acceptance suite).
        spec = GridSpec(n=8, m1=4, m2=4, tau=1 / 12)
        u = pulse_input(24, spec.tau)
        medians = []
        for nsamples in (100, 10_000):
            discs = [
                population_vs_montecarlo(rho_smooth, spec, u, nsamples, seed)[2]
                for seed in range(5)
            ]
            medians.append(np.median(discs))
        assert medians[1] < medians[0]


class TestOutputSignHeuristic:
    def test_nonnegative_inputs_give_nonnegative_outputs(self, rho_smooth):
        # Empirical check only: linear elements can undershoot slightly,
        # so tiny negative excursions are tolerated rather than asserted
        # away.
        spec = GridSpec(n=12, m1=3, m2=3, tau=1 / 12)
        sys = population_system(rho_smooth, spec)
        rng = np.random.default_rng(6)
        floor = 0.0
        for _ in range(5):
            u = np.abs(rng.uniform(0, 1, 40))
            floor = min(floor, float(simulate(sys, u).min()))
        for q in [(0.3, 0.8), (0.9, 1.4), (1.3, 0.5)]:
            u = pulse_input(40, spec.tau)
            floor = min(floor, float(
                simulate_deterministic(q, spec.n, spec.tau, u).min()
            ))
        assert floor > -1e-6


class TestEpisode:
    def test_length_contract(self):
        with pytest.raises(ValueError):
            Episode("e", 0.1, np.zeros(5), np.zeros(5))

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            Episode("e", 0.1, -np.ones(3), np.zeros(4))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Episode("e", 0.1, np.array([0.0, np.nan]), np.zeros(3))

    def test_x0_always_zero(self):
        with pytest.raises(ValueError):
            Episode("e", 0.1, np.zeros(3), np.zeros(4), x0_zero=False)

    def test_steps(self):
        ep = Episode("e", 0.1, np.zeros(7), np.zeros(8))
        assert ep.steps == 7
