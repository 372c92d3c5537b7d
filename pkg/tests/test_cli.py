import json
import os

import numpy as np
import pytest

from flashlab.channel import bin_cells, export_histogram_csv, sample_page
from flashlab.cli import main
from flashlab.grid import CellState
from flashlab.models.cdf import StateModel
from flashlab.raid_ecc import EccConfig, ecc_failure_rate
from flashlab.trace import synth_hot, write_canonical

MEANS = (20.0, 100.0, 180.0, 260.0)


def heavy_tail_models(sigma=8.0, nu=3.0):
    return {st: StateModel("student_t", MEANS[i], sigma, nu, nu)
            for i, st in enumerate(CellState)}


def write_histogram(path, models, n_cells=200_000, seed=0):
    state = sample_page(models, n_cells, seed=seed)
    export_histogram_csv(bin_cells(state), str(path))


def write_trace(path, seed=3, duration_s=200, rate=50):
    events = synth_hot(duration_s, rate, 0.05, 0.9,
                       footprint_bytes=24 << 20, seed=seed)
    write_canonical(events, str(path))


class TestFit:
    def test_compare_ranks_families_and_writes_model(self, tmp_path, capsys):
        hist = tmp_path / "h.csv"
        write_histogram(hist, heavy_tail_models())
        rc = main(["--out", str(tmp_path / "out"), "fit", str(hist),
                   "--compare", "gaussian,student_t"])
        assert rc == 0
        out = capsys.readouterr().out
        kl = {}
        for line in out.splitlines():
            fam, rest = line.split(":", 1)
            kl[fam] = float(rest.split("kl=")[1].split()[0])
        # the sampled population has heavy tails, so the heavy-tailed
        # family must explain it strictly better than a pure gaussian
        assert kl["student_t"] < kl["gaussian"]
        doc = json.loads((tmp_path / "out" / "model.json").read_text())
        assert doc["family"] == "student_t"
        assert set(doc["states"]) == {"ER", "P1", "P2", "P3"}
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_dynamic_needs_three_histograms(self, tmp_path):
        hist = tmp_path / "h1000.csv"
        write_histogram(hist, heavy_tail_models(), n_cells=20_000)
        rc = main(["--out", str(tmp_path / "out"), "fit", str(hist),
                   "--dynamic"])
        assert rc == 2

    def test_bad_header_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("foo,bar\n1,2\n")
        rc = main(["--out", str(tmp_path / "out"), "fit", str(bad)])
        assert rc == 2

    def test_missing_file_is_config_error(self, tmp_path):
        rc = main(["--out", str(tmp_path / "out"), "fit",
                   str(tmp_path / "nope.csv")])
        assert rc == 2


class TestPlan:
    def test_op_and_ecc_tables(self, tmp_path):
        cfg = tmp_path / "plan.json"
        cfg.write_text(json.dumps({
            "ecc": {"codeword_len": 18336, "correctable": 40},
            "rber": [1e-3, 2e-3],
            "op": [{"pba": 2.4e12, "lba": 2.0e12}],
        }))
        rc = main(["--out", str(tmp_path / "out"), "plan",
                   "--config", str(cfg)])
        assert rc == 0
        out = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert out["op"][0]["op_fraction"] == pytest.approx(0.20)
        want = ecc_failure_rate(EccConfig(18336, 40, 0.9), 1e-3)
        assert out["ecc"][0]["p_ecfr"] == pytest.approx(want, rel=1e-12)

    def test_missing_config_is_config_error(self, tmp_path):
        rc = main(["--out", str(tmp_path / "out"), "plan",
                   "--config", str(tmp_path / "nope.json")])
        assert rc == 2


class TestLayout:
    def test_feasible_layout_exits_zero_and_exports_csv(self, tmp_path):
        rc = main(["--out", str(tmp_path / "out"), "layout",
                   "--chips", "4", "--wordlines", "4"])
        assert rc == 0
        assert (tmp_path / "out" / "li_raid_4x4.csv").exists()

    def test_padded_layout_is_reported(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path / "out"), "layout",
                   "--chips", "3", "--wordlines", "4"])
        assert rc == 0
        assert "(padded)" in capsys.readouterr().out

    def test_infeasible_layout_exits_four(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path / "out"), "layout",
                   "--chips", "9", "--wordlines", "4"])
        assert rc == 4
        assert "infeasible" in capsys.readouterr().err


class TestTraceStats:
    def test_canonical_summary(self, tmp_path, capsys):
        tr = tmp_path / "t.csv"
        write_trace(tr)
        rc = main(["trace-stats", str(tr)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "events=10000" in out
        assert "writes=10000" in out
        assert "skipped=0" in out

    def test_msr_dialect_and_conversion(self, tmp_path, capsys):
        msr = tmp_path / "m.csv"
        msr.write_text(
            "128166372003061629,src1,0,Write,1048576,8192,401\n"
            "128166372013061629,src1,0,Read,2097152,4096,388\n")
        conv = tmp_path / "conv.csv"
        rc = main(["trace-stats", str(msr), "--msr",
                   "--canonical-out", str(conv)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "events=2" in out and "reads=1" in out
        lines = conv.read_text().splitlines()
        assert lines[0] == "timestamp_us,op,lba,size_bytes"
        assert len(lines) == 3

    def test_missing_trace_is_config_error(self, tmp_path):
        rc = main(["trace-stats", str(tmp_path / "nope.csv")])
        assert rc == 2


class TestSimulate:
    @staticmethod
    def run(tmp_path, tag, seed=0):
        tr = tmp_path / "t.csv"
        if not tr.exists():
            write_trace(tr)
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"policies": [
            {"name": "baseline", "capacity_bytes": 32 << 20,
             "mode": "analytic", "refresh": "fcr:3d"},
        ]}))
        out = tmp_path / tag
        rc = main(["--seed", str(seed), "--out", str(out), "simulate",
                   "--config", str(cfg), "--trace", str(tr)])
        return rc, out

    def test_run_writes_report_and_series(self, tmp_path, capsys):
        rc, out = self.run(tmp_path, "a")
        assert rc == 0
        assert "baseline: lifetime_days=" in capsys.readouterr().out
        rep = json.loads((out / "baseline.json").read_text())
        assert rep["writes"]["host"] == 10000
        assert (out / "baseline_series.csv").read_text().startswith("day,")

    def test_same_seed_is_byte_identical(self, tmp_path):
        rc1, o1 = self.run(tmp_path, "a", seed=7)
        rc2, o2 = self.run(tmp_path, "b", seed=7)
        assert rc1 == rc2 == 0
        for name in ("baseline.json", "baseline_series.csv"):
            assert (o1 / name).read_bytes() == (o2 / name).read_bytes()

    def test_bad_refresh_spec_is_config_error(self, tmp_path):
        tr = tmp_path / "t.csv"
        write_trace(tr)
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"policies": [
            {"name": "x", "refresh": "hourly"}]}))
        rc = main(["--out", str(tmp_path / "out"), "simulate",
                   "--config", str(cfg), "--trace", str(tr)])
        assert rc == 2

    def test_config_without_policies_is_config_error(self, tmp_path):
        tr = tmp_path / "t.csv"
        write_trace(tr)
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"note": "empty"}))
        rc = main(["--out", str(tmp_path / "out"), "simulate",
                   "--config", str(cfg), "--trace", str(tr)])
        assert rc == 2
