import numpy as np
import pandas as pd
import pytest

from app.src.baselines import run_energy
from app.src.eglb import RunConfig, run
from app.src.errors import TraceFormatError
from app.src.metrics import comparison_frame, format_table
from app.src.schemas import RunManifest
from app.src.storage import RunStore, write_comparison, write_sweep


def manifest_for(algorithm, equity, n_slots, eta=None):
    return RunManifest(
        algorithm=algorithm,
        trace="synthetic",
        n_slots=n_slots,
        eta=eta,
        mu_carbon=equity.mu_carbon,
        mu_water=equity.mu_water,
        theta_carbon=equity.theta_carbon.tolist(),
        theta_water=equity.theta_water.tolist(),
    )


@pytest.fixture
def eglb_run(small_trace, small_equity):
    spec = small_trace.fleet
    config = RunConfig.for_trace(small_trace.slots, spec, small_equity, eta=2e-3)
    schedule, rep = run(small_trace.slots, spec, config)
    return schedule, rep, manifest_for("eglb", small_equity, schedule.n_slots, eta=2e-3)


def test_save_run_round_trip(tmp_path, eglb_run):
    schedule, rep, manifest = eglb_run
    store = RunStore(tmp_path / "run")
    store.save_run(schedule, rep, manifest)

    assert store.read_report() == rep
    assert store.read_manifest() == manifest
    np.testing.assert_array_equal(store.read_duals(), schedule.dual_trajectory)

    frame = store.read_schedule()
    assert list(frame.columns) == ["t", "dc", "gateway", "load_mw"]
    x = frame["load_mw"].to_numpy().reshape(schedule.n_slots, 3, -1)
    np.testing.assert_array_equal(x, np.stack([d.x for d in schedule.decisions]))


def test_runs_without_duals_store_an_empty_trajectory(tmp_path, small_trace, small_equity):
    schedule, rep = run_energy(small_trace.slots, small_trace.fleet, small_equity)
    store = RunStore(tmp_path)
    store.save_run(schedule, rep, manifest_for("energy", small_equity, schedule.n_slots))
    assert store.read_duals().shape == (0, 6)


def test_negative_multiplier_is_reported_with_its_line(tmp_path, eglb_run):
    schedule, rep, manifest = eglb_run
    store = RunStore(tmp_path)
    store.save_run(schedule, rep, manifest)
    path = tmp_path / "duals.csv"
    frame = pd.read_csv(path)
    frame.loc[3, "kappa_water_1"] = -1.0
    frame.to_csv(path, index=False)
    with pytest.raises(TraceFormatError) as info:
        store.read_duals()
    assert info.value.line == 5


def test_missing_artifacts(tmp_path):
    store = RunStore(tmp_path / "nothing")
    with pytest.raises(TraceFormatError):
        store.read_report()
    with pytest.raises(TraceFormatError):
        store.read_duals()
    (tmp_path / "broken").mkdir()
    (tmp_path / "broken" / "report.json").write_text("{\"algorithm\": 3}")
    with pytest.raises(TraceFormatError):
        RunStore(tmp_path / "broken").read_report()


def test_write_comparison_and_sweep(tmp_path, small_trace, small_equity):
    _, rep = run_energy(small_trace.slots, small_trace.fleet, small_equity)
    reports = {"energy": rep}
    paths = write_comparison(tmp_path, comparison_frame(reports), format_table(reports), reports)
    assert [p.name for p in paths] == ["comparison.csv", "comparison.txt", "report.json"]
    assert RunStore(tmp_path / "energy").read_report() == rep
    assert (tmp_path / "comparison.txt").read_text().rstrip("\n") == format_table(reports)

    path = write_sweep(tmp_path, pd.DataFrame({"eta": [0.1, 0.2], "objective": [3.0, 2.0]}))
    assert pd.read_csv(path)["objective"].tolist() == [3.0, 2.0]
