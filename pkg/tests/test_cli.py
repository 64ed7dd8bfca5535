import json
import subprocess
import sys
import time

import numpy as np
import pytest

from dfgof.cli import main

SAMPLE10 = [66, 34, 22, 14, 16, 13, 7, 11, 14, 3]
P3 = "[0.5, 0.25, 0.25]"


def write_counts(path, counts):
    path.write_text("index,count\n" + "".join(f"{i},{c}\n" for i, c in enumerate(counts, start=1)))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return json.loads(lines[0][2:]), lines[1].split(","), [row.split(",") for row in lines[2:]]


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture
def counts3(tmp_path):
    return write_counts(tmp_path / "c3.csv", [12, 4, 4])


@pytest.fixture
def counts10(tmp_path):
    return write_counts(tmp_path / "c10.csv", SAMPLE10)


class TestTransform:
    def test_simple_columns(self, tmp_path, counts3):
        assert main(["transform", "--counts", counts3, "--model", P3, "--out", str(tmp_path / "o")]) == 0
        prov, header, rows = read_csv(tmp_path / "o" / "components.csv")
        assert header == ["index", "y", "z"]
        assert prov["command"] == "transform" and len(prov["config_hash"]) == 16
        z = np.array([float(r[2]) for r in rows])
        np.testing.assert_allclose(z, np.array([-2, 1, 1]) * np.sqrt(2 / 15), atol=1e-14)
        meta = json.loads((tmp_path / "o" / "components.json").read_text())
        assert meta["anchor"] == "diagonal" and meta["mode"] == "simple"

    def test_model_from_file(self, tmp_path, counts3):
        (tmp_path / "m.json").write_text(P3)
        args = ["transform", "--counts", counts3, "--model", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]
        assert main(args) == 0

    def test_fit_e1_e2(self, tmp_path, counts10):
        args = ["transform", "--counts", counts10, "--family", "power_law", "--fit", "--anchor", "e1_e2",
                "--out", str(tmp_path / "o")]
        assert main(args) == 0
        _, header, rows = read_csv(tmp_path / "o" / "components.csv")
        assert header == ["index", "yhat", "zhat"]
        zhat = np.array([float(r[2]) for r in rows])
        assert abs(zhat[0]) <= 1e-6 and abs(zhat[1]) <= 1e-6
        meta = json.loads((tmp_path / "o" / "components.json").read_text())
        assert meta["fit"]["theta_hat"][0] == pytest.approx(0.9485376407224071, abs=1e-12)

    def test_fixed_theta(self, tmp_path, counts3):
        args = ["transform", "--counts", counts3, "--family", "power_law", "--theta", "1", "--out", str(tmp_path / "o")]
        assert main(args) == 0
        _, header, _ = read_csv(tmp_path / "o" / "components.csv")
        assert header == ["index", "y", "z"]

    def test_two_sample(self, tmp_path):
        a = write_counts(tmp_path / "a.csv", [6, 4])
        b = write_counts(tmp_path / "b.csv", [4, 6])
        assert main(["transform", "--counts", a, "--counts2", b, "--out", str(tmp_path / "o")]) == 0
        _, _, rows = read_csv(tmp_path / "o" / "components.csv")
        assert float(rows[0][1]) == pytest.approx(1 / np.sqrt(5))


class TestValidation:
    def test_bad_sum(self, tmp_path, counts3, capsys):
        code = main(["transform", "--counts", counts3, "--model", "[0.5, 0.25, 0.251]", "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert "sum to 1.001" in err and "row sum" in err

    def test_bad_header(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        path.write_text("cell,n\n1,3\n2,4\n")
        assert main(["transform", "--counts", str(path), "--model", "[0.5,0.5]", "--out", str(tmp_path / "o")]) == 2
        assert ":1:" in capsys.readouterr().err

    def test_bad_count_cell(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        path.write_text("index,count\n1,3\n2,x\n")
        assert main(["transform", "--counts", str(path), "--model", "[0.5,0.5]", "--out", str(tmp_path / "o")]) == 2
        assert ":3:2:" in capsys.readouterr().err

    def test_missing_counts_file(self, tmp_path):
        assert main(["transform", "--counts", str(tmp_path / "nope.csv"), "--model", "[0.5,0.5]",
                     "--out", str(tmp_path / "o")]) == 4

    def test_parametric_anchor_needs_fit(self, tmp_path, counts3):
        assert main(["transform", "--counts", counts3, "--model", P3, "--anchor", "e1_e2",
                     "--out", str(tmp_path / "o")]) == 2

    def test_dimension_mismatch(self, tmp_path, counts3):
        assert main(["transform", "--counts", counts3, "--model", "[0.5,0.5]", "--out", str(tmp_path / "o")]) == 2

    def test_divergent_fit_is_numeric(self, tmp_path):
        c = write_counts(tmp_path / "c.csv", [10, 0, 0, 0])
        assert main(["fit", "--counts", c, "--out", str(tmp_path / "o")]) == 3

    def test_degenerate_geometry_hint(self, tmp_path, capsys):
        c = write_counts(tmp_path / "c.csv", [25, 25, 25, 25, 25])
        code = main(["transform", "--counts", c, "--family", "power_law", "--fit", "--out", str(tmp_path / "o")])
        assert code == 3
        assert "--anchor e1_e2" in capsys.readouterr().err
        assert main(["transform", "--counts", c, "--family", "power_law", "--fit", "--anchor", "e1_e2",
                     "--out", str(tmp_path / "o")]) == 0

    def test_small_reps(self, tmp_path, counts3):
        assert main(["test", "--counts", counts3, "--model", P3, "--reps", "10", "--out", str(tmp_path / "o")]) == 2

    def test_unknown_command(self):
        assert main(["explode"]) == 2


class TestTest:
    def run(self, tmp_path, counts, *extra, name="o"):
        out = tmp_path / name
        assert main(["test", "--counts", counts, *extra, "--reps", "2000", "--seed", "3", "--out", str(out)]) == 0
        return out

    def test_perfect_fit(self, tmp_path):
        c = write_counts(tmp_path / "c.csv", [10, 5, 5])
        report = json.loads((self.run(tmp_path, c, "--model", P3) / "report.json").read_text())
        assert report["value"] == pytest.approx(0.0, abs=1e-14)
        assert report["p_value"] == 1.0

    def test_worked_example_value(self, tmp_path, counts3):
        report = json.loads((self.run(tmp_path, counts3, "--model", P3) / "report.json").read_text())
        assert report["value"] == pytest.approx(np.sqrt(8 / 15), abs=1e-14)
        assert report["table"]["B"] == 2000

    @pytest.mark.parametrize("stat", ["ks_y", "cvm_z", "chi2"])
    def test_other_statistics(self, tmp_path, counts3, stat):
        report = json.loads((self.run(tmp_path, counts3, "--model", P3, "--stat", stat) / "report.json").read_text())
        assert 0 < report["p_value"] <= 1
        if stat == "chi2":
            assert report["value"] == pytest.approx(0.8, abs=1e-14)

    def test_fit(self, tmp_path, counts10):
        report = json.loads((self.run(tmp_path, counts10, "--family", "power_law", "--fit") / "report.json").read_text())
        assert report["anchor"] == "plateau" and "fit" in report

    def test_byte_identical(self, tmp_path, counts3):
        a = self.run(tmp_path, counts3, "--model", P3, name="a")
        b = self.run(tmp_path, counts3, "--model", P3, name="b")
        assert files(a) == files(b)


class TestSimulate:
    def test_smoke_fast(self, tmp_path):
        start = time.perf_counter()
        assert main(["simulate", "--preset", "smoke", "--seed", "42", "--out", str(tmp_path / "o")]) == 0
        assert time.perf_counter() - start < 5
        names = set(files(tmp_path / "o"))
        assert {"replicates.csv", "summary.json", "cdf_random_spacings.csv", "cdf_beta_3_3.csv",
                "cdf_beta_0.8_1.5.csv"} <= names
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert len(summary["pairwise_sup_distance"]) == 3 and summary["B"] == 100
        _, header, rows = read_csv(tmp_path / "o" / "cdf_beta_3_3.csv")
        assert header == ["value", "cdf"] and float(rows[-1][1]) == 1.0

    def test_jobs_do_not_change_output(self, tmp_path):
        base = ["simulate", "--preset", "smoke", "--seed", "5"]
        assert main([*base, "--jobs", "1", "--out", str(tmp_path / "a")]) == 0
        assert main([*base, "--jobs", "3", "--out", str(tmp_path / "b")]) == 0
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_custom_models(self, tmp_path):
        args = ["simulate", "--model", "[0.2,0.3,0.5]", "--model", "[0.1,0.1,0.8]", "--n", "50",
                "--reps", "200", "--out", str(tmp_path / "o")]
        assert main(args) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert set(summary["models"]) == {"model1", "model2"}

    def test_needs_model_or_preset(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path / "o")]) == 2


class TestFit:
    def test_fit_json(self, tmp_path, counts10):
        assert main(["fit", "--counts", counts10, "--out", str(tmp_path / "o")]) == 0
        fit = json.loads((tmp_path / "o" / "fit.json").read_text())
        assert fit["theta_hat"][0] == pytest.approx(0.9485376407224071, abs=1e-12)
        assert abs(fit["score_residual"]) <= 1e-10


def test_console_entry_point(tmp_path, counts3):
    out = tmp_path / "o"
    proc = subprocess.run(
        [sys.executable, "-m", "dfgof", "transform", "--counts", counts3, "--model", P3, "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "components.csv").exists()
