"""Configuration schema, CSV emission, CLI subcommands and exit codes."""

import json

import numpy as np
import pytest

from stcns.cli import emit_diagnostics, main
from stcns.config import SimConfig, parse_config, serialize_config
from stcns.diagnostics import CSV_COLUMNS, DiagnosticsRecord
from stcns.errors import ConfigError


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config('{"grid": 32, "T": 0.5}')
        assert cfg.grid == (32, 32, 32)
        assert cfg.a == 0.25
        assert cfg.tame_threshold == 1
        assert cfg.dt == 1e-3
        assert cfg.noise.kind == "multiplicative-diagonal"
        assert cfg.noise.sigma0 == 0.1
        assert cfg.noise.decay == 1.0
        assert cfg.noise.modes == 8

    def test_logistic_range_named(self):
        with pytest.raises(ConfigError) as err:
            parse_config('{"a": 0.7}')
        assert "a" in str(err.value) and "1/2" in str(err.value)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config('{"bogus": 1}')
        assert "bogus" in str(err.value)
        with pytest.raises(ConfigError) as err:
            parse_config('{"noise": {"bogus": 1}}')
        assert "noise.bogus" in str(err.value)

    def test_grid_validation(self):
        with pytest.raises(ConfigError):
            parse_config('{"grid": 31}')
        with pytest.raises(ConfigError):
            parse_config('{"grid": 2}')
        cfg = parse_config('{"grid": [16, 32, 64]}')
        assert cfg.grid == (16, 32, 64)

    def test_dt_and_T(self):
        with pytest.raises(ConfigError):
            parse_config('{"dt": -1}')
        with pytest.raises(ConfigError):
            parse_config('{"dt": 0.4, "T": 0.5}')  # not an integer multiple

    def test_truncated_needs_k(self):
        with pytest.raises(ConfigError):
            parse_config('{"variant": "truncated"}')
        cfg = parse_config('{"variant": "truncated", "k": 8}')
        assert cfg.k == 8.0

    def test_not_json(self):
        with pytest.raises(ConfigError):
            parse_config("{nope")

    def test_round_trip_idempotent(self):
        text = '{"grid": 16, "T": 0.25, "dt": 0.00125, "a": 0.3, "noise": {"kind": "additive"}}'
        once = parse_config(text)
        twice = parse_config(serialize_config(once))
        assert once == twice
        assert serialize_config(once) == serialize_config(twice)

    def test_builders(self):
        cfg = parse_config('{"grid": 16, "T": 0.01, "dt": 0.001}')
        grid = cfg.make_grid()
        scheme = cfg.make_scheme()
        problem = cfg.make_problem(grid)
        state = cfg.make_initial_state(grid)
        assert scheme.n_steps == 10
        assert state.n.samples.min() > 0.0
        assert problem.noise.mode_count == 8
        times = cfg.output_times()
        assert times[0] == 0.0 and abs(times[-1] - 0.01) < 1e-12

    def test_ic_presets(self):
        for preset in ("smooth-default", "broadband", "zero"):
            cfg = parse_config(json.dumps({"grid": 16, "ic": {"preset": preset}}))
            state = cfg.make_initial_state(cfg.make_grid())
            if preset != "zero":
                assert state.n.samples.min() > 0.0
                assert state.c.samples.min() > 0.0
        with pytest.raises(ConfigError):
            parse_config('{"ic": {"preset": "bogus"}}')


class TestEmitDiagnostics:
    def test_empty_stream_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        emit_diagnostics([], path)
        lines = path.read_text().strip().split("\n")
        assert lines == [",".join(CSV_COLUMNS)]

    def test_zero_record_row(self, tmp_path):
        path = tmp_path / "d.csv"
        emit_diagnostics([DiagnosticsRecord(t=0.0)], path)
        rows = path.read_text().strip().split("\n")
        cells = rows[1].split(",")
        assert len(cells) == len(CSV_COLUMNS)
        assert all(float(c) == 0.0 for c in cells)

    def test_reemission_byte_identical(self, tmp_path):
        recs = [DiagnosticsRecord(t=0.1 * i, F_total=np.pi * i) for i in range(5)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_diagnostics(recs, p1)
        emit_diagnostics(recs, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seventeen_digits(self, tmp_path):
        rec = DiagnosticsRecord(t=1.0 / 3.0)
        path = tmp_path / "d.csv"
        emit_diagnostics([rec], path)
        row = path.read_text().strip().split("\n")[1]
        assert row.split(",")[0] == format(1.0 / 3.0, ".17g")


@pytest.fixture()
def small_config(tmp_path):
    cfg = {"grid": 16, "T": 0.005, "dt": 0.001, "seed": 3, "output_stride": 5,
           "diagnostics": "entropy"}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestCli:
    def test_run_writes_outputs_and_manifest(self, small_config, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(small_config), "--out", str(out)])
        assert code == 0
        for name in ("diagnostics.csv", "state.stcn", "run.json", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"diagnostics.csv", "state.stcn", "run.json"}
        assert manifest["config"]["grid"] == [16, 16, 16]

    def test_identical_runs_identical_outputs(self, small_config, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(small_config), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(small_config), "--out", str(out2)]) == 0
        m1 = json.loads((out1 / "manifest.json").read_text())["outputs"]
        m2 = json.loads((out2 / "manifest.json").read_text())["outputs"]
        assert m1 == m2  # same checksums: byte-identical data outputs

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"dt": -1}')
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_usage_exit_code(self):
        assert main(["bogus-subcommand"]) == 1

    def test_twin_zero_delta(self, small_config, tmp_path):
        out = tmp_path / "twin"
        code = main(["twin", "--config", str(small_config), "--delta", "0",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "twin.json").read_text())
        assert max(doc["divergence"]) == 0.0
        assert doc["digests_match"] is True

    def test_converge_dt(self, small_config, tmp_path):
        out = tmp_path / "conv"
        code = main(["converge", "--config", str(small_config), "--axis", "dt",
                     "--levels", "0.0025,0.00125,0.000625", "--out", str(out),
                     "--seed", "1"])
        # config T=0.005 is a multiple of all levels
        assert code == 0
        doc = json.loads((out / "convergence.json").read_text())
        assert doc["axis"] == "dt"
        assert len(doc["errors"]) == 2

    def test_ensemble(self, small_config, tmp_path):
        out = tmp_path / "ens"
        code = main(["ensemble", "--config", str(small_config), "--paths", "2",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "ensemble.json").read_text())
        assert doc["path_count"] == 2
        assert doc["failure_count"] == 0

    def test_export_checkpoint(self, small_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(small_config), "--out", str(out)])
        exp = tmp_path / "exp"
        code = main(["export", "--checkpoint", str(out / "state.stcn"),
                     "--out", str(exp)])
        assert code == 0
        doc = json.loads((exp / "state.json").read_text())
        assert doc["grid"] == [16, 16, 16]

    def test_verify_quick(self, tmp_path):
        code = main(["verify", "--quick", "--out", str(tmp_path / "v")])
        assert code == 0
        doc = json.loads((tmp_path / "v" / "verification.json").read_text())
        assert all(entry["passed"] for entry in doc)
