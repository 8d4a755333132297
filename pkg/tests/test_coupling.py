"""Tests for the three couplings, decay-curve fitting and the dominating chain."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from switchcert.chain import BirthDeathRates
from switchcert.coupling import (
    AdjacencyError,
    check_adjacency,
    couple_constant,
    couple_uniformized,
    couple_with_dominating,
    coupled_batch,
    dominating_batch,
    dominating_clock,
    dominating_rates,
    expansion_constant,
    fit_tail_rate,
    jump_partition,
    meeting_rate,
    wasserstein_decay_curve,
)

from conftest import scalar_spec, sigmoid_chain, sigmoid_pair


class TestJumpPartition:
    def test_lengths_sum_to_one(self, sigmoid_spec):
        p = jump_partition(sigmoid_spec, [0.3], 1, [-2.0], 1, r=5.0)
        assert p.total == pytest.approx(1.0, abs=1e-15)
        assert np.all(p.lam >= 0)

    def test_marginals(self, sigmoid_spec):
        r = 5.0
        x, y = np.array([[0.3]]), np.array([[-2.0]])
        p = jump_partition(sigmoid_spec, x[0], 1, y[0], 2, r)
        ax = sigmoid_spec.rates.rates(x, np.array([1]))[0]
        ay = sigmoid_spec.rates.rates(y, np.array([2]))[0]
        np.testing.assert_allclose(p.alloc[0] + p.alloc[2], ax / r, atol=1e-15)
        np.testing.assert_allclose(p.alloc[1] + p.alloc[2], ay / r, atol=1e-15)

    def test_same_state_moves_together(self, sigmoid_spec):
        p = jump_partition(sigmoid_spec, [0.3], 1, [0.3], 1, r=5.0)
        assert p.lam[0] == p.lam[1] == 0.0


class TestDominatingRates:
    def test_block_extremes(self):
        spec = sigmoid_chain()
        b, d = dominating_rates(spec, spec.partition)
        # b: infima of 1 + 0.5 s and 1 + 0.3 s; d: suprema of 0.5 + 0.5 s and 0.7 + 0.4 s
        np.testing.assert_allclose(b, [1.0, 1.0])
        np.testing.assert_allclose(d, [1.0, 1.1])

    def test_clock(self):
        spec = sigmoid_chain()
        _, d = dominating_rates(spec, spec.partition)
        assert dominating_clock(spec, d) == pytest.approx(2 * (2.3 + 1.1))

    def test_adjacency(self):
        spec = scalar_spec([0.0, 0.0, 0.0], [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        with pytest.raises(AdjacencyError):
            check_adjacency(spec, [[0], [1], [2]])
        check_adjacency(spec, [[0], [1, 2]])

    def test_clock_too_small(self):
        spec = sigmoid_chain()
        with pytest.raises(ValueError):
            couple_with_dominating(spec, None, [0.0], 0, 1.0, r=5.0, seed=0)


class TestSingleRuns:
    def test_constant_merges_forever(self, elementary_spec):
        run = couple_constant(elementary_spec, [1.0], [0.0], 1, 0, 20.0, seed=3)
        assert np.isfinite(run.t_meet)
        after = run.times >= run.t_meet
        np.testing.assert_array_equal(run.I[after], run.J[after])

    def test_constant_rejects_state_dependent_rates(self, sigmoid_spec):
        with pytest.raises(ValueError):
            couple_constant(sigmoid_spec, [1.0], [0.0], 0, 1, 1.0, seed=0)

    def test_uniformized_csv(self, sigmoid_spec):
        run = couple_uniformized(sigmoid_spec, [1.0], [0.0], 0, 0, 2.0, None, seed=1, n_out=4)
        head = run.to_csv(sigmoid_spec).splitlines()[0]
        assert head == "t,i,j,l,x_1,y_1,d"
        assert run.t_meet == 0.0

    def test_dominating_run(self, sigmoid_spec):
        run = couple_with_dominating(sigmoid_spec, None, [0.0], 2, 20.0, r=None, seed=2)
        assert run.Y is None and run.L is not None
        assert run.L.min() >= 0 and run.L.max() <= 2
        assert run.dominance_violations == 0
        block = run.I  # singleton blocks: block index == regime index
        after = run.times >= run.t_coincide
        assert np.all(block[after] >= run.L[after])

    def test_reproducible(self, intro_spec):
        a = couple_constant(intro_spec, [0.0, 1.0], [0.0, 0.0], 0, 1, 5.0, seed=9)
        b = couple_constant(intro_spec, [0.0, 1.0], [0.0, 0.0], 0, 1, 5.0, seed=9)
        assert a.to_csv(intro_spec) == b.to_csv(intro_spec)


class TestBatches:
    def test_jobs_invariance(self, sigmoid_spec):
        grid = np.linspace(0, 3, 4)
        a = coupled_batch(sigmoid_spec, "uniformized", [1.0], [0.0], 0, 2, grid, 9000, seed=4, jobs=1)
        b = coupled_batch(sigmoid_spec, "uniformized", [1.0], [0.0], 0, 2, grid, 9000, seed=4, jobs=2)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.J, b.J)

    def test_dominating_level_law(self):
        spec = sigmoid_chain()
        b, d = dominating_rates(spec, spec.partition)
        G = BirthDeathRates(b, d).generator()
        grid = np.array([0.0, 1.0, 4.0])
        res = dominating_batch(spec, None, [0.0], 1, grid, 20_000, seed=5, l0=0)
        for g, t in enumerate(grid):
            exact = expm(t * G)[0]
            freq = np.bincount(res.L[g], minlength=3) / res.n_paths
            se = np.sqrt(exact * (1 - exact) / res.n_paths)
            assert np.all(np.abs(freq - exact) <= 4 * se + 1e-12)


class TestDecayCurve:
    def test_fit_exact_exponential(self):
        t = np.linspace(0, 10, 21)
        m = 2.0 * np.exp(-0.3 * t)
        fit = fit_tail_rate(t, m, 0.01 * m)
        assert fit.rate == pytest.approx(0.3, abs=1e-12)
        assert fit.positive

    def test_fit_degenerate(self):
        fit = fit_tail_rate(np.array([0.0, 1.0, 2.0]), np.zeros(3), np.zeros(3))
        assert np.isnan(fit.rate)

    def test_meeting_rate_mle(self):
        rng = np.random.default_rng(0)
        t = rng.exponential(1 / 3.0, 50_000)
        assert meeting_rate(t, 100.0) == pytest.approx(3.0, rel=0.02)

    def test_curve_starts_at_initial_cost(self, elementary_spec):
        curve = wasserstein_decay_curve(elementary_spec, [1.0], [0.0], 1, 0, np.linspace(0, 5, 6), 500, q=0.5, seed=1)
        assert curve.mean[0] == 1.0
        assert np.all(curve.mean <= 1.0)
        assert curve.to_csv().splitlines()[0] == "t,mean,stderr,mean_tilde,stderr_tilde"
        assert set(curve.summary()) >= {"rate", "rate_stderr", "theta_c"}

    def test_too_few_paths(self, elementary_spec):
        with pytest.raises(ValueError):
            wasserstein_decay_curve(elementary_spec, [1.0], [0.0], 1, 0, [0.0, 1.0], 10)

    def test_uniformized_mode_on_sigmoid(self):
        spec = sigmoid_pair(amplitude=1.0, drift=-1.0)
        curve = wasserstein_decay_curve(
            spec, [1.0], [-1.0], 0, 1, np.linspace(0, 10, 11), 2000, seed=2, mode="uniformized"
        )
        assert curve.fit.positive

    def test_expansion_constant(self):
        assert expansion_constant(0.5, [1.0, -1.0]) == 0.5
