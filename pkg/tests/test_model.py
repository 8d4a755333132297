"""Tests for the specification model and its JSON round trip."""

from __future__ import annotations

import json

import numpy as np
import pytest

from switchcert.model import (
    AffineFlow,
    ConstantRates,
    Metric,
    OrnsteinUhlenbeck,
    SigmoidRates,
    SpecError,
    SwitchingSpec,
    dump_spec,
    eval_rate,
    load_spec,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)

from conftest import ou_pair, sigmoid_chain


class TestRegimes:
    def test_affine_shape_mismatch(self):
        with pytest.raises(SpecError):
            AffineFlow(np.eye(2), np.zeros(3))

    def test_ou_sigma_rows(self):
        with pytest.raises(SpecError):
            OrnsteinUhlenbeck(np.eye(2), np.zeros(2), np.eye(3))

    def test_non_finite_rejected(self):
        with pytest.raises(SpecError):
            AffineFlow([[np.nan]], [0.0])


class TestRates:
    def test_constant_rates_ignore_state(self):
        rates = ConstantRates([[0.0, 2.0], [1.0, 0.0]])
        x = np.array([[0.0], [5.0]])
        out = rates.rates(x, np.array([0, 1]))
        np.testing.assert_array_equal(out, [[0.0, 2.0], [1.0, 0.0]])

    def test_negative_rate_rejected(self):
        with pytest.raises(SpecError):
            ConstantRates([[0.0, -1.0], [1.0, 0.0]])

    def test_sigmoid_value(self):
        base = np.array([[0.0, 1.0], [1.0, 0.0]])
        rates = SigmoidRates(base, 2 * base, np.array([1.0]), 0.0)
        # logistic(0) = 1/2
        assert rates.rates(np.zeros((1, 1)), np.array([0]))[0, 1] == pytest.approx(2.0)

    def test_sigmoid_sum_range_is_open_interval_hull(self):
        base = np.array([[0.0, 1.0], [1.0, 0.0]])
        rates = SigmoidRates(base, 3 * base, np.array([1.0]), 0.0)
        assert rates.sum_range(0, [1]) == (1.0, 4.0)

    def test_sigmoid_lipschitz(self):
        base = np.array([[0.0, 1.0], [1.0, 0.0]])
        rates = SigmoidRates(base, 2 * base, np.array([3.0]), 0.0)
        metric = Metric(np.eye(1))
        assert rates.lipschitz(metric) == pytest.approx(0.25 * 3.0 * 2.0)


class TestMetric:
    def test_not_positive_definite(self):
        with pytest.raises(SpecError):
            Metric(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_q_range(self):
        with pytest.raises(SpecError):
            Metric(np.eye(1), q=1.5)

    def test_distance_weighted(self):
        m = Metric(np.diag([4.0, 1.0]))
        assert m.dist([1.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)

    def test_dual_norm(self):
        m = Metric(np.diag([4.0, 1.0]))
        assert m.dual_norm([1.0, 0.0]) == pytest.approx(0.5)


class TestSpec:
    def test_dimension_check(self):
        with pytest.raises(SpecError):
            SwitchingSpec(
                dim=2,
                regimes=[AffineFlow([[1.0]], [0.0])],
                rates=ConstantRates([[0.0]]),
                metric=Metric(np.eye(1)),
            )

    def test_partition_must_cover(self, elementary_spec):
        with pytest.raises(SpecError):
            elementary_spec.replace(partition=((0,),))

    def test_rate_bound(self, elementary_spec):
        assert elementary_spec.rate_bound() == 2.0

    def test_validate_reports_irreducibility(self):
        spec = ou_pair().replace(rates=ConstantRates([[0.0, 1.0], [0.0, 0.0]]))
        report = validate_spec(spec)
        assert not report.irreducible

    def test_validate_kappa(self, sigmoid_spec):
        report = validate_spec(sigmoid_spec)
        assert report.kappa == pytest.approx(0.25 * 0.8)
        assert report.a_bar == pytest.approx(2.3)

    def test_eval_rate(self, elementary_spec):
        assert eval_rate(elementary_spec, [3.0], 1, 0) == 2.0
        with pytest.raises(ValueError):
            eval_rate(elementary_spec, [3.0], 1, 1)


class TestJson:
    @pytest.mark.parametrize("build", [ou_pair, sigmoid_chain])
    def test_round_trip(self, build, tmp_path):
        spec = build()
        path = tmp_path / "spec.json"
        dump_spec(spec, path)
        again = load_spec(path)
        assert spec_to_dict(again) == spec_to_dict(spec)

    def test_schema_rejects_missing_field(self):
        with pytest.raises(SpecError):
            spec_from_dict({"dim": 1})

    def test_bad_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{not json")
        with pytest.raises(SpecError):
            load_spec(path)

    def test_validate_accepts_mapping(self, elementary_spec):
        doc = json.loads(dump_spec(elementary_spec))
        assert validate_spec(doc).a_bar == 2.0

    def test_shipped_specs_load(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "specs"
        for path in sorted(root.glob("*.json")):
            validate_spec(load_spec(path))
