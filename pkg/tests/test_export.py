import numpy as np
import pytest

from cloud_pd.error_handler import ConfigError
from cloud_pd.problem.spec import essential_neighborhoods
from cloud_pd.sim.engine import run_async
from cloud_pd.sim.export import (
    EVENT_COLUMNS,
    ROUND_COLUMNS,
    read_round_csv,
    round_table,
    trace_metadata,
    write_event_csv,
    write_round_csv,
)
from cloud_pd.sim.schedule import ScheduleParams, generate_schedule
from cloud_pd.solver import solve_saddle


@pytest.fixture(scope="module")
def four_agent_run(four_agent_setup):
    spec, reg, bounds, steps = four_agent_setup
    schedule = generate_schedule(5, ScheduleParams(horizon_rounds=6), essential_neighborhoods(spec))
    trace = run_async(spec, reg, steps, schedule, np.zeros(4), np.zeros(2), bounds=bounds, record_events=True)
    return spec, trace, solve_saddle(spec, reg, steps)


class TestRoundTable:
    def test_columns_and_lengths(self, four_agent_run):
        spec, trace, saddle = four_agent_run
        table = round_table(trace, spec, saddle, saddle)
        assert set(table) == set(ROUND_COLUMNS)
        assert all(len(table[name]) == trace.round_count for name in ROUND_COLUMNS)
        assert np.isnan(table["dual_bound"]).all()
        np.testing.assert_array_equal(table["t"], np.arange(trace.round_count))
        np.testing.assert_allclose(table["primal_reg_error"], table["primal_unreg_error"])

    def test_dual_bound_is_shifted_to_own_row(self, four_agent_run):
        spec, trace, saddle = four_agent_run
        squared = np.arange(1.0, trace.round_count + 1.0) ** 2
        table = round_table(trace, spec, saddle, saddle, dual_bound=squared)
        assert table["dual_bound"][0] == pytest.approx(np.linalg.norm(trace.initial_dual - saddle.dual))
        np.testing.assert_allclose(table["dual_bound"][1:], np.arange(1.0, trace.round_count))

    def test_round_ticks_increase(self, four_agent_run):
        spec, trace, saddle = four_agent_run
        ticks = round_table(trace, spec, saddle, saddle)["k_t"]
        assert np.all(np.diff(ticks) > 0)


class TestRoundCsv:
    def test_write_then_read(self, tmp_path, four_agent_run):
        spec, trace, saddle = four_agent_run
        table = round_table(trace, spec, saddle, saddle)
        path = write_round_csv(tmp_path / "runs" / "trace.csv", table, trace_metadata(trace, note="demo"))
        meta, columns = read_round_csv(path)
        assert meta["problem"] == spec.name
        assert meta["note"] == "demo"
        assert int(meta["rounds"]) == trace.round_count
        np.testing.assert_allclose(columns["dual_reg_error"], table["dual_reg_error"], rtol=0, atol=0)

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("# problem=demo\nt,cycles\n0,1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_round_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        row = ["0"] * len(ROUND_COLUMNS)
        row[4] = "abc"
        path.write_text(",".join(ROUND_COLUMNS) + "\n" + ",".join(row) + "\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_round_csv(path)

    def test_unreadable_path(self, tmp_path):
        with pytest.raises(ConfigError):
            read_round_csv(tmp_path / "absent.csv")


class TestEventCsv:
    def test_one_row_per_event(self, tmp_path, four_agent_run):
        _, trace, _ = four_agent_run
        path = write_event_csv(tmp_path / "events.csv", trace)
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
        assert lines[0] == ",".join(EVENT_COLUMNS)
        assert len(lines) - 1 == len(trace.events)

    def test_requires_events(self, tmp_path, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        schedule = generate_schedule(5, ScheduleParams(horizon_rounds=2), essential_neighborhoods(spec))
        trace = run_async(spec, reg, steps, schedule, np.zeros(4), np.zeros(2), bounds=bounds)
        with pytest.raises(ConfigError):
            write_event_csv(tmp_path / "events.csv", trace)
