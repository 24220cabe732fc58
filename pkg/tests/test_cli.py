import csv
import json

import pytest

from kooptraffic.cli import main


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def fixed_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixed")
    cfg = write_json(root / "fixed.json", {
        "duration": 4 * 3600,
        "intersection": {"plan": "120", "demand": 0.05, "capacity": 200},
    })
    assert main(["simulate", cfg, "--seed", "3", "--out", str(root / "sim")]) == 0
    return root


@pytest.fixture(scope="module")
def whatif_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("whatif")
    cfg = write_json(root / "w.json", {"scenario": "whatif", "options": {"days": 0.25},
                                       "duration": 21600})
    assert main(["simulate", cfg, "--out", str(root / "sim")]) == 0
    return root


class TestSimulate:
    def test_outputs(self, fixed_run):
        sim = fixed_run / "sim"
        for name in ("flows.csv", "phases.csv", "queues.csv", "truth.json"):
            assert (sim / name).exists()
        assert (sim / "queues.csv").read_text().startswith("timestamp,leg,queue\n")
        truth = json.loads((sim / "truth.json").read_text())
        assert truth["intersections"][0]["plan"]["splits"] == [16, 30, 35, 39]
        assert truth["intersections"][0]["seed"] == 3

    def test_reproducible(self, fixed_run, tmp_path):
        cfg = str(fixed_run / "fixed.json")
        assert main(["simulate", cfg, "--seed", "3", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "queues.csv").read_bytes() == (fixed_run / "sim" / "queues.csv").read_bytes()

    def test_corridor(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"scenario": "corridor", "duration": 1200})
        assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
        for name in ("flows1.csv", "phases2.csv", "queues.csv"):
            assert (tmp_path / "o" / name).exists()
        legs = {r["leg"] for r in read_csv(tmp_path / "o" / "queues.csv")}
        assert legs == {"NB1", "SB1", "WB1", "EB1", "NB2", "SB2", "WB2", "EB2"}

    def test_env_output_dir(self, fixed_run, tmp_path, monkeypatch):
        monkeypatch.setenv("KOOPTRAFFIC_OUT", str(tmp_path / "env"))
        cfg = write_json(tmp_path / "s.json", {"duration": 120, "intersection": {}})
        assert main(["simulate", cfg]) == 0
        assert (tmp_path / "env" / "flows.csv").exists()


class TestAnalyses:
    def test_timing(self, fixed_run, tmp_path):
        code = main(["timing", "--flows", str(fixed_run / "sim" / "flows.csv"), "--stride", "30",
                     "--expected-cycle", "120", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "timing.json").read_text())
        assert round(report["cycle"]) == 120
        assert all(abs(a - b) <= 7 for a, b in zip(report["splits"].values(), [16, 30, 35, 39]))
        assert len(read_csv(tmp_path / "angles.csv")) > 0

    def test_monitor(self, fixed_run, tmp_path):
        code = main(["monitor", "--queues", str(fixed_run / "sim" / "queues.csv"),
                     "--channels", "WB", "--stride", "10", "--out", str(tmp_path)])
        assert code == 0
        rows = read_csv(tmp_path / "monitor.csv")
        assert list(rows[0]) == ["k", "timestamp", "lambda1_mag", "counter", "flag"]
        assert (tmp_path / "heatmap.csv").exists()

    def test_whatif(self, whatif_run, tmp_path):
        sim = whatif_run / "sim"
        code = main(["whatif", "--queues", str(sim / "queues.csv"), "--phases",
                     str(sim / "phases.csv"), "--green", "0,1", "--horizon", "60",
                     "--out", str(tmp_path)])
        assert code == 0
        rows = read_csv(tmp_path / "whatif_000.csv")
        assert len(rows) == 60
        assert "EB_modified" in rows[0] and "EB_modified_raw" in rows[0]
        assert (tmp_path / "whatif_100.csv").exists()
        assert (tmp_path / "effects.csv").exists()

    def test_structure(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"scenario": "corridor", "duration": 4 * 3600,
                                               "output_dt": 60})
        assert main(["simulate", cfg, "--out", str(tmp_path / "sim")]) == 0
        code = main(["structure", "--queues", str(tmp_path / "sim" / "queues.csv"),
                     "--out", str(tmp_path / "st")])
        assert code == 0
        info = json.loads((tmp_path / "st" / "structure.json").read_text())
        assert info["runs"] == 2
        assert len(read_csv(tmp_path / "st" / "structure.csv")) == 64

    def test_benchmark(self, tmp_path):
        cfg = write_json(tmp_path / "b.json", {"scenario": "benchmark", "duration": 3600,
                                               "output_dt": 1})
        assert main(["simulate", cfg, "--out", str(tmp_path / "sim")]) == 0
        code = main(["benchmark", "--queues", str(tmp_path / "sim" / "queues.csv"),
                     "--lags", "2-3", "--train", "600", "--horizon", "30", "--windows", "3",
                     "--out", str(tmp_path / "bm")])
        assert code == 0
        rows = read_csv(tmp_path / "bm" / "benchmark.csv")
        assert [r["h"] for r in rows] == ["2", "3"]


class TestExitCodes:
    def test_missing_file(self, tmp_path):
        assert main(["timing", "--flows", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    def test_bad_config(self, tmp_path):
        cfg = write_json(tmp_path / "bad.json", {"intersection": {"color": "red"},
                                                 "duration": 60})
        assert main(["simulate", cfg, "--out", str(tmp_path)]) == 2

    def test_window_too_long(self, fixed_run, tmp_path):
        code = main(["monitor", "--queues", str(fixed_run / "sim" / "queues.csv"),
                     "--window", "100000", "--out", str(tmp_path)])
        assert code == 2

    def test_runtime_error(self, fixed_run, tmp_path):
        code = main(["timing", "--flows", str(fixed_run / "sim" / "flows.csv"), "--stop", "400",
                     "--stride", "20", "--expected-cycle", "97", "--out", str(tmp_path)])
        assert code == 1

    def test_argparse_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["benchmark"])
        assert exc.value.code == 2
