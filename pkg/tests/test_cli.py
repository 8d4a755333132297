"""Tests for the ``switchcert`` command line."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from switchcert.cli import main
from switchcert.model import load_spec

SPECS = Path(__file__).resolve().parents[1] / "specs"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCertify:
    def test_elementary_passes(self, capsys):
        code, out, _ = run(capsys, "certify", str(SPECS / "elementary.json"), "--a1", "2", "--am1", "1")
        doc = json.loads(out)
        assert code == 0
        first = doc["certificates"][0]
        assert first["theorem"] == "W-constant" and first["verdict"] == "pass"
        assert first["exact_value"] == "1/3"

    def test_transient_side_exit_one(self, capsys):
        code, out, _ = run(capsys, "certify", "--example", "elementary", "--a1", "1", "--am1", "2")
        assert code == 1
        assert not json.loads(out)["any_pass"]

    def test_malformed_spec_exit_two(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"dim": 1}')
        code, _, err = run(capsys, "certify", str(bad))
        assert code == 2
        assert "error" in err

    def test_missing_file_exit_two(self, capsys, tmp_path):
        code, _, _ = run(capsys, "certify", str(tmp_path / "nope.json"))
        assert code == 2

    def test_rate_override_on_sigmoid_exit_two(self, capsys, tmp_path):
        from conftest import sigmoid_chain
        from switchcert.model import dump_spec

        path = tmp_path / "s.json"
        dump_spec(sigmoid_chain(), path)
        code, _, _ = run(capsys, "certify", str(path), "--rate", "2")
        assert code == 2

    def test_text_format(self, capsys):
        code, out, _ = run(capsys, "certify", "--example", "spiral", "--format", "text")
        assert code == 1
        assert "W-constant: FAIL" in out

    def test_partition_flag(self, capsys):
        code, out, _ = run(capsys, "certify", "--example", "elementary", "--partition", "[[1],[0]]")
        assert code == 0
        bd = json.loads(out)["certificates"][2]
        assert bd["theorem"] == "W-birthdeath" and bd["verdict"] == "pass"


class TestExample:
    @pytest.mark.parametrize("tag", ["elementary", "spiral", "intro-plane", "dilation-chain"])
    def test_matches_shipped_spec(self, capsys, tag):
        code, out, _ = run(capsys, "example", tag)
        assert code == 0
        assert out == (SPECS / f"{tag}.json").read_text()

    def test_rate_flag(self, capsys, tmp_path):
        path = tmp_path / "s.json"
        run(capsys, "example", "spiral", "--rate", "20", "--out", str(path))
        np.testing.assert_array_equal(load_spec(path).rates.c, [[0.0, 20.0], [20.0, 0.0]])


class TestSimulate:
    def test_single_path_csv(self, capsys):
        code, out, err = run(capsys, "simulate", "--example", "elementary", "--T", "2", "--n-out", "4", "--x0", "1")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "t,i,x_1" and len(lines) == 6
        assert "switches=" in err

    def test_cloud_then_wasserstein(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "simulate", "--example", "intro-plane", "--paths", "40", "--T", "3", "--seed", "1", "--out", str(a))
        run(capsys, "simulate", "--example", "intro-plane", "--paths", "40", "--T", "3", "--seed", "2", "--out", str(b))
        code, out, _ = run(capsys, "wasserstein", str(a), str(b), "--cost", "trunc-d", "--q", "1")
        doc = json.loads(out)
        assert code == 0
        assert 0 < doc["value"] <= 1
        code, out, _ = run(capsys, "wasserstein", str(a), str(a))
        assert json.loads(out)["value"] == 0.0

    def test_bad_start_dimension(self, capsys):
        code, _, _ = run(capsys, "simulate", "--example", "intro-plane", "--x0", "1")
        assert code == 2


class TestCouple:
    def test_decay_curve(self, capsys):
        code, out, err = run(
            capsys, "couple", "--example", "elementary", "--q", "0.5", "--grid", "0:10:10", "--paths", "500"
        )
        assert code == 0
        assert out.splitlines()[0] == "t,mean,stderr,mean_tilde,stderr_tilde"
        assert len(out.splitlines()) == 12
        assert "rate" in json.loads(err)

    def test_dominating(self, capsys):
        code, out, err = run(capsys, "couple", "--example", "dilation-chain", "--mode", "dominating", "--i0", "0", "--paths", "300", "--grid", "0:4:4")
        assert code == 0
        assert json.loads(err)["dominance_violations"] == 0
        assert out.splitlines()[0] == "t,mean_l,mean_block,frac_coincided"

    def test_single_pair(self, capsys):
        code, out, _ = run(capsys, "couple", "--example", "intro-plane", "--mode", "uniformized", "--paths", "1", "--grid", "0:2:2")
        assert code == 0
        assert out.startswith("t,i,j,l,x_1,x_2,y_1,y_2,d")

    def test_bad_grid(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["couple", "--example", "elementary", "--grid", "5:1:3"])
        assert exc.value.code == 2


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["couple", "--example", "elementary", "--q", "0.5", "--grid", "0:5:5", "--paths", "9000"],
            ["simulate", "--example", "spiral", "--paths", "9000", "--T", "2"],
        ],
    )
    def test_jobs_byte_identical(self, capsys, argv):
        _, one, _ = run(capsys, *argv, "--jobs", "1", "--seed", "7")
        _, three, _ = run(capsys, *argv, "--jobs", "3", "--seed", "7")
        assert one == three
