"""Tests for regime-chain utilities: stationary laws and the tilted exponent."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, null_space

from switchcert.chain import (
    BirthDeathRates,
    NoPositiveExponent,
    ReducibleChainError,
    as_generator,
    best_alpha,
    birth_death_nu,
    generator_from_rates,
    irreducibility,
    optimize_q,
    stationary_distribution,
    tilted_exponent,
)


def elementary_eta(q: float) -> float:
    # closed form for Q = [[-1, 1], [2, -2]], alpha = (1, -1)
    return (3.0 - np.sqrt(9.0 - 4.0 * q + 4.0 * q * q)) / 2.0


class TestGenerator:
    def test_rows_sum_to_zero(self):
        Q = generator_from_rates([[0.0, 1.0, 2.0], [0.5, 0.0, 0.0], [1.0, 1.0, 0.0]])
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-15)

    def test_as_generator_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            as_generator([[-1.0, 2.0], [1.0, -1.0]])

    def test_irreducibility_components(self):
        ok, comps = irreducibility([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        assert not ok
        assert len(comps) == 2


class TestStationary:
    def test_two_state(self):
        Q = [[-0.5, 0.5], [1.0, -1.0]]
        np.testing.assert_allclose(stationary_distribution(Q), [2 / 3, 1 / 3], atol=1e-14)

    def test_reducible_raises(self):
        with pytest.raises(ReducibleChainError):
            stationary_distribution([[-1.0, 1.0], [0.0, 0.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_null_space_agreement(self, n, seed):
        rng = np.random.default_rng(seed)
        R = rng.uniform(0.1, 3.0, (n, n))
        np.fill_diagonal(R, 0.0)
        Q = generator_from_rates(R)
        pi = stationary_distribution(Q)
        ns = null_space(Q.T)[:, 0]
        np.testing.assert_allclose(pi, ns / ns.sum(), atol=1e-10)
        assert np.abs(pi @ Q).max() < 1e-12


class TestBirthDeath:
    def test_product_formula_small(self):
        nu = birth_death_nu(BirthDeathRates([1.0, 2.0], [2.0, 1.0]))
        # weights 1, 1/2, 1
        np.testing.assert_allclose(nu, [0.4, 0.2, 0.4])

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            BirthDeathRates([1.0, 0.0], [1.0, 1.0])

    def test_generator_shape(self):
        G = BirthDeathRates([1.0], [2.0]).generator()
        np.testing.assert_array_equal(G, [[-1.0, 1.0], [2.0, -2.0]])


class TestTilted:
    @pytest.mark.parametrize("q", [0.1, 0.5, 0.9, 1.0])
    def test_closed_form(self, q):
        sol = tilted_exponent([[-1.0, 1.0], [2.0, -2.0]], [1.0, -1.0], q)
        assert sol.eta == pytest.approx(elementary_eta(q), abs=1e-12)

    def test_optimum(self):
        q, eta = optimize_q([[-1.0, 1.0], [2.0, -2.0]], [1.0, -1.0])
        assert q == pytest.approx(0.5, abs=1e-5)
        assert eta == pytest.approx((3 - 2 * np.sqrt(2)) / 2, abs=1e-10)

    def test_no_positive_exponent(self):
        with pytest.raises(NoPositiveExponent):
            optimize_q([[-2.0, 2.0], [1.0, -1.0]], [1.0, -1.0])

    def test_q_range(self):
        with pytest.raises(ValueError):
            tilted_exponent([[-1.0, 1.0], [1.0, -1.0]], [1.0, 1.0], 0.0)

    def test_eigenvector_bounds_expectation(self):
        Q = np.array([[-1.0, 1.0, 0.0], [0.5, -1.5, 1.0], [0.0, 2.0, -2.0]])
        alpha = np.array([1.0, -0.5, 0.3])
        q = 0.7
        sol = tilted_exponent(Q, alpha, q)
        for t in (1.0, 5.0, 20.0):
            m = expm(t * (Q - q * np.diag(alpha))) @ np.ones(3)
            scaled = m * np.exp(sol.eta * t)
            assert np.all(scaled <= sol.C + 1e-9)
            assert np.all(scaled >= sol.c - 1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
    def test_residual(self, n, seed, q):
        rng = np.random.default_rng(seed)
        R = rng.uniform(0.1, 3.0, (n, n))
        np.fill_diagonal(R, 0.0)
        Q = generator_from_rates(R)
        alpha = rng.uniform(-2.0, 2.0, n)
        sol = tilted_exponent(Q, alpha, q)
        assert sol.residual(Q, alpha) <= 1e-9
        assert np.all(sol.psi > 0)


class TestBestAlpha:
    def test_running_minimum(self):
        rho = np.array([-1.0, 2.0, 0.5, 3.0])
        alpha = best_alpha(rho, [[0], [1], [2], [3]])
        np.testing.assert_array_equal(alpha, [-1.0, 0.5, 0.5, 3.0])

    def test_block_infimum(self):
        alpha = best_alpha(np.array([1.0, -2.0, 3.0]), [[0, 1], [2]])
        np.testing.assert_array_equal(alpha, [-2.0, 3.0])
