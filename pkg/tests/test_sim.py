"""Tests for flows, the thinning simulator and Monte-Carlo expectations."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from switchcert.model import AffineFlow, ConstantRates, Metric, OrnsteinUhlenbeck, SwitchingSpec
from switchcert.sim import (
    QuadraticTest,
    SeedSpec,
    affine_flow,
    default_rate,
    estimate_expectation,
    expm_batch,
    flow_step,
    generator_check,
    simulate_path,
)
from switchcert.sim.paths import observable

from conftest import scalar_spec, sigmoid_chain


def single_regime(reg) -> SwitchingSpec:
    d = reg.c.shape[0]
    return SwitchingSpec(dim=d, regimes=[reg], rates=ConstantRates([[0.0]]), metric=Metric(np.eye(d)))


class TestFlows:
    def test_expm_batch_matches_scipy(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(5, 3, 3)) * 2
        out = expm_batch(M)
        for k in range(5):
            np.testing.assert_allclose(out[k], expm(M[k]), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("a", [-2.0, 0.0, 1e-12, 0.7])
    def test_scalar_closed_form(self, a):
        x = np.array([[1.5]])
        out = affine_flow(np.array([[a]]), np.array([0.3]), x, np.array([2.0]))
        exact = 1.5 * np.exp(2 * a) + (0.3 * 2.0 if a == 0 else 0.3 * np.expm1(2 * a) / a)
        assert out[0, 0] == pytest.approx(exact, rel=1e-10)

    def test_planar_affine_against_augmented_expm(self):
        A = np.array([[-1.0, 3.0], [-1 / 3, -1.0]])
        c = np.array([0.5, -1.0])
        x = np.array([1.0, 2.0])
        aug = np.zeros((3, 3))
        aug[:2, :2], aug[:2, 2] = A, c
        exact = (expm(1.3 * aug) @ np.append(x, 1.0))[:2]
        out = affine_flow(A, c, x[None], np.array([1.3]))
        np.testing.assert_allclose(out[0], exact, rtol=1e-12)

    def test_flow_step_affine(self):
        reg = AffineFlow([[-1.0]], [1.0])
        assert flow_step(reg, [0.0], 1.0)[0] == pytest.approx(1 - np.exp(-1))


class TestSimulatePath:
    def test_deterministic_without_switching(self):
        spec = single_regime(AffineFlow([[-1.0]], [0.0]))
        traj = simulate_path(spec, [2.0], 0, 1.0, seed=0, n_out=4)
        np.testing.assert_allclose(traj.X[:, 0], 2 * np.exp(-traj.grid), rtol=1e-12)
        assert traj.switch_count == 0

    def test_reproducible(self, chain_spec):
        a = simulate_path(chain_spec, [1.0], 0, 5.0, seed=SeedSpec(3, 1))
        b = simulate_path(chain_spec, [1.0], 0, 5.0, seed=SeedSpec(3, 1))
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.event_times, b.event_times)

    def test_streams_differ(self, chain_spec):
        a = simulate_path(chain_spec, [1.0], 0, 5.0, seed=SeedSpec(3, 1))
        b = simulate_path(chain_spec, [1.0], 0, 5.0, seed=SeedSpec(3, 2))
        assert not np.array_equal(a.event_times, b.event_times)

    def test_rate_below_bound_rejected(self, elementary_spec):
        with pytest.raises(ValueError):
            simulate_path(elementary_spec, [1.0], 0, 1.0, seed=0, r=3.0)

    def test_default_rate(self, elementary_spec):
        assert default_rate(elementary_spec) == 4.0

    def test_csv_columns(self, intro_spec):
        text = simulate_path(intro_spec, [0.0, 1.0], 0, 1.0, seed=0, n_out=2).to_csv()
        lines = text.splitlines()
        assert lines[0] == "t,i,x_1,x_2"
        assert len(lines) == 4

    def test_occupation_matches_stationary(self, elementary_spec):
        traj = simulate_path(elementary_spec, [0.0], 0, 5000.0, seed=1, n_out=10)
        occ = traj.occupation(2)
        np.testing.assert_allclose(occ, [2 / 3, 1 / 3], atol=0.02)

    def test_blow_up_recorded(self):
        spec = single_regime(AffineFlow([[40.0]], [0.0]))
        traj = simulate_path(spec, [1.0], 0, 1.0, seed=0, n_out=10)
        assert 0.6 < traj.first_exit < 0.8
        assert not traj.blown

    def test_non_finite_stops_path(self):
        spec = single_regime(AffineFlow([[1000.0]], [0.0]))
        traj = simulate_path(spec, [1.0], 0, 1.0, seed=0, n_out=4)
        assert traj.blown
        assert np.isnan(traj.X[-1, 0])


class TestExpectations:
    def test_regime_marginal_matches_expm(self, chain_spec):
        Q = np.array(chain_spec.rates.c)
        Q = Q - np.diag(Q.sum(axis=1))
        t = np.array([0.5, 2.0])
        n = 20_000
        for k in range(4):
            mean, se = estimate_expectation(chain_spec, f"regime:{k}", [0.0], 0, t, n, seed=k)
            exact = np.array([expm(s * Q)[0, k] for s in t])
            assert np.all(np.abs(mean - exact) <= 4 * np.maximum(se, 1e-3))

    def test_ou_moments(self):
        reg = OrnsteinUhlenbeck(-np.eye(2), np.array([1.0, 0.0]), 0.5 * np.eye(2))
        spec = single_regime(reg)
        n = 10_000
        mean, se = estimate_expectation(spec, "x1", [0.0, 0.0], 0, 1.0, n, seed=2)
        assert abs(mean - (1 - np.exp(-1))) <= 3 * se + 3e-3
        var = 0.25 * (1 - np.exp(-2.0)) / 2
        m2, se2 = estimate_expectation(spec, "x2", [0.0, 0.0], 0, 1.0, n, seed=3)
        sq, sesq = estimate_expectation(spec, lambda X, I: X[:, 1] ** 2, [0.0, 0.0], 0, 1.0, n, seed=3)
        assert abs(m2) <= 3 * se2
        assert abs(sq - var) <= 3 * sesq + 0.02 * var

    def test_jobs_do_not_change_results(self, chain_spec):
        a = estimate_expectation(chain_spec, "x1", [1.0], 0, 3.0, 9000, seed=5, jobs=1)
        b = estimate_expectation(chain_spec, "x1", [1.0], 0, 3.0, 9000, seed=5, jobs=3)
        assert a == b

    def test_too_few_paths(self, chain_spec):
        with pytest.raises(ValueError):
            estimate_expectation(chain_spec, "x1", [1.0], 0, 1.0, 1, seed=0)

    @pytest.mark.parametrize("tag", ["one", "norm", "sq", "x1", "regime:0", "exp:-0.5", "dist:0.5"])
    def test_observable_tags(self, tag, elementary_spec):
        f = observable(tag, elementary_spec)
        out = f(np.array([[2.0], [-1.0]]), np.array([0, 1]))
        assert out.shape == (2,)

    def test_unknown_tag(self, elementary_spec):
        with pytest.raises(ValueError):
            observable("cube", elementary_spec)


class TestGeneratorCheck:
    def test_quadratic_generator_formula(self):
        spec = scalar_spec([-1.0, 0.5], [[0.0, 2.0], [1.0, 0.0]], c=[1.0, 0.0])
        f = QuadraticTest(P=np.array([[[1.0]], [[2.0]]]), g=np.array([[0.0], [1.0]]), h=np.array([0.0, 3.0]))
        # L f(x=1, i=0) = (-1 + 1) * 2x + 2 * (f(1, 1) - f(1, 0)) = 2 * (6 - 1)
        assert f.generator(spec, [1.0], 0) == pytest.approx(10.0)

    @pytest.mark.parametrize("t_small", [0.01, 0.05])
    def test_sigmoid_spec(self, t_small):
        spec = sigmoid_chain()
        f = QuadraticTest(
            P=np.array([[[1.0]], [[0.5]], [[0.0]]]),
            g=np.array([[0.0], [1.0], [-1.0]]),
            h=np.array([0.0, 1.0, 2.0]),
        )
        chk = generator_check(spec, f, [0.7], 1, t_small, n_paths=40_000, seed=11)
        assert abs(chk.residual) <= 4 * chk.stderr + 2.0 * t_small * 10

    def test_ou_generator(self):
        reg = OrnsteinUhlenbeck(-np.eye(1), np.array([0.0]), np.array([[1.0]]))
        spec = SwitchingSpec(
            dim=1, regimes=[reg, AffineFlow([[0.0]], [1.0])], rates=ConstantRates([[0.0, 1.0], [1.0, 0.0]]), metric=Metric(np.eye(1))
        )
        f = QuadraticTest(P=np.array([[[1.0]], [[1.0]]]), g=np.zeros((2, 1)), h=np.array([0.0, 1.0]))
        # drift -2x^2 + sigma^2 + jump (f(x, 1) - f(x, 0)) = -2 + 1 + 1 at x = 1
        assert f.generator(spec, [1.0], 0) == pytest.approx(0.0)
        chk = generator_check(spec, f, [1.0], 0, 0.01, n_paths=40_000, seed=4)
        assert abs(chk.residual) <= 4 * chk.stderr + 0.1

    def test_t_small_range(self, elementary_spec):
        f = QuadraticTest(P=np.ones((2, 1, 1)), g=np.zeros((2, 1)), h=np.zeros(2))
        with pytest.raises(ValueError):
            generator_check(elementary_spec, f, [1.0], 0, 0.5)
