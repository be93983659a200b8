import csv
import io
import math

import pytest

from relu_forge.experiments import HEADER, ExperimentReport, Row, rate_report, thread_count


def parse(text):
    return list(csv.reader(io.StringIO(text)))


class TestRateReport:
    def test_squarer_factor(self):
        rep = rate_report("squarer", range(1, 9))
        assert rep.fitted_rate == pytest.approx(0.25, abs=0.01)

    def test_takagi_base(self):
        rep = rate_report("takagi", range(2, 11), base=2.0)
        assert abs(rep.fitted_rate - 2.0) <= 0.1

    def test_sobolev_slope(self):
        rep = rate_report("sobolev", [2, 4, 8, 16])
        assert abs(rep.fitted_rate + 2.0) <= 0.4

    def test_spline_linear_parameter_growth(self):
        rep = rate_report("spline", [6, 12, 24, 48])
        assert all(r.error <= 1e-10 for r in rep.rows)
        assert rep.fitted_rate == pytest.approx(1.0, abs=0.15)

    def test_no_rate_below_four_points(self):
        rep = rate_report("squarer", [1, 2, 3])
        assert rep.fitted_rate is None
        assert all(row[-1] == "" for row in parse(rep.to_csv())[1:])

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            rate_report("fourier")

    def test_threads_do_not_change_results(self, monkeypatch):
        serial = rate_report("takagi", range(2, 7), workers=1)
        monkeypatch.setenv("RELU_FORGE_THREADS", "4")
        assert thread_count() == 4
        parallel = rate_report("takagi", range(2, 7))
        assert serial.to_csv() == parallel.to_csv()


class TestCsv:
    def test_header_golden(self):
        text = rate_report("squarer", [1, 2, 3, 4]).to_csv()
        rows = parse(text)
        assert rows[0] == list(HEADER)
        assert rows[0] == ["experiment", "param", "error", "hidden_layers", "neurons", "nonzero_params", "fitted_rate"]
        assert rows[1][:2] == ["squarer", "1"]
        assert all(len(r) == len(HEADER) for r in rows)

    def test_fields_finite(self):
        for row in parse(rate_report("takagi", range(2, 8)).to_csv())[1:]:
            assert all(math.isfinite(float(v)) for v in row[1:])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Row("x", 1.0, math.nan, 1, 1, 1)

    def test_write(self, tmp_path):
        rep = ExperimentReport("squarer", [Row("squarer", 1, 0.0625, 1, 6, 10)])
        rep.write(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().startswith("experiment,")
