import csv
import json
import math
import warnings

import numpy as np
import pytest

from imddlink.config import ConfigError, LinkConfig
from imddlink.core import PAM4, fec_verdict
from imddlink.harness import EyeHistogram, LinkResult, eye_diagram
from imddlink.io import (
    SUMMARY_COLUMNS,
    TABULAR_COLUMNS,
    OutputError,
    ResponseTableError,
    ResponseTableWarning,
    dump_config,
    emit_results,
    load_config,
    load_scenario,
    parse_config,
    parse_response_table,
    read_eye,
    scenario_names,
    write_eye,
)
from imddlink.rxdsp import BerReport
from imddlink.signal import Waveform

MINIMAL = "schema_version: 1\nlink:\n  modulation: PAM8\n"


class TestParseConfig:
    def test_minimal_fills_defaults(self):
        doc = parse_config(MINIMAL)
        assert doc.link == LinkConfig(modulation="PAM8")
        assert doc.sweep is None

    def test_empty_document(self):
        assert parse_config("").link == LinkConfig()

    def test_symbol_rate_above_dac_names_both(self):
        with pytest.raises(ConfigError) as info:
            parse_config("link:\n  symbol_rate_gbd: 300\n  dac_rate_gsa: 225\n")
        msg = " ".join(info.value.errors)
        assert "symbol_rate_gbd" in msg and "dac_rate_gsa" in msg

    def test_unknown_key_suggests(self):
        with pytest.raises(ConfigError) as info:
            parse_config("link:\n  symbolrate: 200\n")
        assert any("symbolrate" in e and "symbol_rate_gbd" in e for e in info.value.errors)

    def test_all_errors_reported(self):
        text = "link:\n  symbolrate: 1\n  num_symbols: 10\n  channel:\n    mzm:\n      bias: 2.0\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        errs = info.value.errors
        assert len(errs) >= 3
        assert any(e.startswith("link.channel.mzm") for e in errs)

    def test_type_error_has_path(self):
        with pytest.raises(ConfigError) as info:
            parse_config("link:\n  tx:\n    dac_bits: seven\n")
        assert any("link.tx.dac_bits" in e for e in info.value.errors)

    def test_schema_version_checked(self):
        with pytest.raises(ConfigError):
            parse_config("schema_version: 2\n")

    def test_unknown_top_level(self):
        with pytest.raises(ConfigError) as info:
            parse_config("links: {}\n")
        assert "link" in info.value.errors[0]

    def test_sweep_section(self):
        doc = parse_config("link: {}\nsweep:\n  variable: rop\n  values: [1, 2, 3]\n")
        assert doc.sweep.values == (1.0, 2.0, 3.0)
        assert doc.sweep.base == doc.link

    def test_unsorted_sweep_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("link: {}\nsweep:\n  variable: rop\n  values: [3, 1]\n")

    def test_missing_table_file(self, tmp_path):
        text = "link:\n  channel:\n    rx_responses:\n      - {kind: table, table_path: nope.csv}\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text, base_dir=tmp_path)
        assert "nope.csv" in info.value.errors[0]

    def test_table_path_relative_to_config(self, tmp_path):
        (tmp_path / "s21.csv").write_text("frequency_ghz,magnitude_db,phase_deg\n0,0,0\n100,-3,0\n")
        cfg = tmp_path / "link.yaml"
        cfg.write_text("link:\n  channel:\n    rx_responses:\n      - {kind: table, name: s21, table_path: s21.csv}\n")
        doc = load_config(cfg)
        r = doc.link.channel.rx_responses[0].build(200.0)
        assert r.magnitude_db(100) == pytest.approx(-3.0)

    @pytest.mark.parametrize("name", scenario_names())
    def test_round_trip_fixed_point(self, name):
        doc = load_scenario(name)
        again = parse_config(dump_config(doc))
        assert again == doc
        assert dump_config(again) == dump_config(doc)

    def test_scenarios_present(self):
        assert {"colored_noise", "rop_sweep", "wdm_5km", "wdm_2km", "dr8_temperature"} <= set(scenario_names())


class TestResponseTable:
    def test_read_back(self):
        r = parse_response_table("0, 0, 0\n50, -3, 0\n100, -10, 0\n")
        assert r.magnitude_db(50) == pytest.approx(-3.0)
        assert r.magnitude_db(100) == pytest.approx(-10.0)

    def test_whitespace_and_header(self):
        r = parse_response_table("freq mag phase\n0 0 0\n10 -1 -90\n")
        assert np.angle(r(10.0), deg=True) == pytest.approx(-90.0)

    def test_dc_synthesized(self):
        with pytest.warns(ResponseTableWarning):
            r = parse_response_table("1,-0.1,0\n50,-3,0\n")
        assert r.frequency_ghz[0] == 0 and abs(r(0.0)) == pytest.approx(1.0)

    def test_duplicate_frequency(self):
        with pytest.raises(ResponseTableError) as info:
            parse_response_table("0,0,0\n50,-3,0\n50,-4,0\n")
        assert "row 3" in info.value.errors[0]

    def test_nan_cell(self):
        with pytest.raises(ResponseTableError) as info:
            parse_response_table("0,0,0\n50,nan,0\n")
        assert "row 2" in info.value.errors[0]

    def test_missing_cell(self):
        with pytest.raises(ResponseTableError) as info:
            parse_response_table("0,0,0\n50,-3\n")
        assert "row 2" in info.value.errors[0]

    def test_all_rows_reported(self):
        with pytest.raises(ResponseTableError) as info:
            parse_response_table("0,0,0\n10,x,0\n20,1,0\n15,0,0\n")
        assert len(info.value.errors) == 2


def fake_results(n=8, ber_errors=4, bits=1000):
    out = []
    for lane in range(1, n + 1):
        cfg = LinkConfig(seed=lane)
        rep = BerReport(ber_errors, bits)
        r = LinkResult(cfg, {"DFE": rep}, {"DFE": fec_verdict(rep.ber, 225.0, PAM4)},
                       info={"point": lane - 1, "variable": "dr8_lane", "value": lane,
                             "wavelength_nm": 1310.0, "rop_dbm": 12.5})
        out.append(r)
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestEmit:
    def test_dr8_table_row(self, tmp_path):
        emit_results(fake_results(), tmp_path, "tabular", "dr8")
        rows = read_csv(tmp_path / "dr8_summary.csv")
        assert len(rows) == 1
        row = rows[0]
        assert list(row) == list(SUMMARY_COLUMNS)
        assert float(row["net_rate_gbps"]) == 420.5
        assert float(row["aggregate_tbps"]) == 3.36
        assert float(row["fec_overhead_pct"]) == 7.0
        assert row["lanes"] == "8"

    def test_single_result(self, tmp_path):
        emit_results(fake_results(1), tmp_path, "tabular")
        lines = (tmp_path / "results.csv").read_text().splitlines()
        assert lines[0].split(",") == list(TABULAR_COLUMNS)
        assert len(lines) == 2

    @pytest.mark.parametrize("fmt", ["tabular", "structured"])
    def test_byte_identical(self, tmp_path, fmt):
        res = fake_results()
        a = emit_results(res, tmp_path / "a", fmt)
        b = emit_results(res, tmp_path / "b", fmt)
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()

    def test_formats_agree(self, tmp_path):
        res = fake_results(3, ber_errors=37, bits=12345)
        emit_results(res, tmp_path, "tabular")
        emit_results(res, tmp_path, "structured")
        doc = json.loads((tmp_path / "results.json").read_text())
        rows = read_csv(tmp_path / "results.csv")
        for row, item in zip(rows, doc["results"]):
            eq = item["equalizers"][row["equalizer"]]
            assert int(row["seed"]) == item["seed"]
            for key in ("bit_errors", "bits_compared"):
                assert int(row[key]) == eq[key]
            for key in ("ber", "ber_upper_bound", "fec_overhead_pct", "net_rate_gbps"):
                assert float(row[key]) == eq[key]
        summary = read_csv(tmp_path / "results_summary.csv")[0]
        for key in ("worst_ber", "net_rate_gbps", "aggregate_tbps", "fec_overhead_pct"):
            assert float(summary[key]) == doc["summary"][0][key]

    def test_structured_is_self_describing(self, tmp_path):
        emit_results(fake_results(2), tmp_path, "structured")
        doc = json.loads((tmp_path / "results.json").read_text())
        item = doc["results"][0]
        assert doc["schema_version"] == 1
        assert item["config"]["symbol_rate_gbd"] == 225.0
        assert item["equalizers"]["DFE"]["bit_errors"] == 4

    def test_unrecoverable_has_no_rate(self, tmp_path):
        emit_results(fake_results(1, ber_errors=300), tmp_path)
        row = read_csv(tmp_path / "results.csv")[0]
        assert row["fec"] == "unrecoverable" and row["net_rate_gbps"] == ""

    def test_failed_point_row(self, tmp_path):
        res = fake_results(1) + [LinkResult(LinkConfig(), info={"point": 1}, error="sync: no peak")]
        emit_results(res, tmp_path)
        rows = read_csv(tmp_path / "results.csv")
        assert rows[1]["error"] == "sync: no peak"

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError, match="file"):
            emit_results(fake_results(1), blocker / "sub")

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_results([], tmp_path)


class TestEyeExport:
    def test_round_trip(self, tmp_path):
        r = np.random.default_rng(1)
        w = Waveform(np.repeat(r.integers(0, 4, 300) - 1.5, 32), 3200.0)
        eye = eye_diagram(w, 100.0, bins=(64, 48))
        path = write_eye(eye, tmp_path / "eye.txt")
        matrix, meta = read_eye(path)
        assert matrix.shape == (48, 64)
        assert meta["dimensions"] == (48.0, 64.0)
        assert meta["time_ui"] == (0.0, 2.0)
        np.testing.assert_array_equal(matrix, eye.counts.T[::-1])

    def test_loadable_by_numpy(self, tmp_path):
        eye = EyeHistogram(np.arange(6).reshape(2, 3), np.linspace(0, 2, 3), np.linspace(-1, 1, 4), 100.0)
        path = write_eye(eye, tmp_path / "e.txt")
        assert np.loadtxt(path).shape == (3, 2)
