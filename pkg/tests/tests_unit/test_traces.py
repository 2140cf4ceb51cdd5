import math

import pytest
import simplejson
import test_utils

from vigpc.utils.traces import (
    TraceRecord,
    TrainingTrace,
    get_trace_extension,
    read_trace,
    write_trace,
)


def make_trace():
    theta = {
        "variance": 1.5,
        "length_scale": 0.7,
        "smoothness": 1.5,
        "noise_variance": 0.0,
    }
    return TrainingTrace(
        [
            TraceRecord(0.0, 0, -80.25, 0.5, theta),
            TraceRecord(0.125, 1, -41.0, None, theta),
            TraceRecord(0.125, 2, -40.5, 0.95, theta),
        ]
    )


class TestTraces:
    def test_csv_layout(self, tmp_path):
        path = write_trace(make_trace(), tmp_path / "run.csv")

        lines = test_utils.read_trace_lines(path)

        assert lines[0] == test_utils.TRACE_HEADER
        assert lines[1] == "0.0,0,-80.25,0.5"
        assert lines[2] == "0.125,1,-41.0,nan"
        assert len(lines) == 4

    def test_csv_reads_back(self, tmp_path):
        trace = make_trace()
        path = write_trace(trace, tmp_path / "run.csv")

        reloaded = read_trace(path)

        assert len(reloaded) == 3
        assert [r.outer_iter for r in reloaded] == [0, 1, 2]
        assert [r.elbo for r in reloaded] == [r.elbo for r in trace]
        assert reloaded.records[1].accuracy is None
        assert reloaded.last.accuracy == 0.95
        assert reloaded.last.theta == {}

    def test_json_keeps_theta(self, tmp_path):
        path = write_trace(make_trace(), tmp_path / "run.json", fmt="json")

        with open(path) as file:
            rows = simplejson.load(file)
        assert rows[0]["theta"]["length_scale"] == 0.7
        assert rows[1]["accuracy"] is None

        reloaded = read_trace(path)
        assert reloaded.records[2].theta["variance"] == 1.5
        assert reloaded.records[1].accuracy is None

    def test_wall_seconds_must_not_decrease(self):
        trace = make_trace()

        with pytest.raises(ValueError):
            trace.append(TraceRecord(0.1, 3, -40.0, None, {}))

    def test_empty_trace(self, tmp_path):
        trace = TrainingTrace()
        assert trace.last is None

        path = write_trace(trace, tmp_path / "empty.csv")
        assert test_utils.read_trace_lines(path) == [test_utils.TRACE_HEADER]

    def test_trace_format(self):
        assert get_trace_extension("json") == "json"

        with pytest.raises(ValueError):
            get_trace_extension("parquet")

        with pytest.raises(ValueError):
            write_trace(make_trace(), "unused.txt", fmt="txt")

    def test_nan_elbo_is_kept(self, tmp_path):
        trace = TrainingTrace([TraceRecord(0.0, 0, float("nan"), None, {})])

        reloaded = read_trace(write_trace(trace, tmp_path / "nan.csv"))

        assert math.isnan(reloaded.last.elbo)
