import json

import numpy as np
import pytest

from kdessi.dataset import GeneratorConfig, LabeledDataset, generate_synthetic
from kdessi.ensemble import EnsembleModel
from kdessi.errors import InvalidInputError
from kdessi.experiment import (
    GridConfig,
    benchmark,
    measure_latency,
    parameter_report,
    report_to_csv,
    report_to_json,
    run_experiment_grid,
    summarize,
    write_report,
)
from kdessi.nn import Resnet1d, Resnet1dConfig, TrainConfig

TINY_TEACHER = Resnet1dConfig(stem_stride=8, stem_channels=2, widths=(2, 2, 4, 4), blocks=(1, 1, 1, 1))
TINY_STUDENT = Resnet1dConfig(stem_stride=8, stem_channels=2, widths=(2, 2, 2, 2), blocks=(1, 1, 1, 1))


def tiny_grid(**kw):
    base = dict(n_grid=(1, 2, 3, 4), t_grid=(5.0, 10.0), seeds=(1, 2), teacher_config=TINY_TEACHER,
                student_config=TINY_STUDENT, train_config=TrainConfig(max_epochs=1, batch_size=32))
    return GridConfig(**{**base, **kw})


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(GeneratorConfig(samples_per_class=6, seed=0))


@pytest.fixture(scope="module")
def report(data):
    return run_experiment_grid(data, tiny_grid(), workers=1)


def test_grid_is_4_by_3(report):
    assert report["columns"] == ["VE", "T=5", "T=10"]
    assert [row["N"] for row in report["grid"]] == [1, 2, 3, 4]
    for row in report["grid"]:
        for col in report["columns"]:
            cell = row[col]
            assert len(cell["values"]) == 2
            assert cell["mean"] == pytest.approx(np.mean(cell["values"]))
            assert cell["sd"] == pytest.approx(np.std(cell["values"], ddof=1))
    assert report["seeds"] == [1, 2]


def test_single_member_ensemble_equals_first_member(report):
    for run in report["runs"]:
        assert run["ensembles"]["1"]["VE"]["accuracy"] == run["single"]["members"][0]["accuracy"]


def test_rerun_is_byte_identical(data, report):
    again = run_experiment_grid(data, tiny_grid(), workers=1)
    assert report_to_json(again) == report_to_json(report)


def test_parallel_workers_give_the_same_report(data, report):
    assert report_to_json(run_experiment_grid(data, tiny_grid(), workers=2)) == report_to_json(report)


def test_json_round_trip(report):
    text = report_to_json(report)
    assert report_to_json(json.loads(text)) == text
    assert GridConfig.from_dict(json.loads(text)["config"]) == tiny_grid()


def test_csv_and_files(report, tmp_path):
    rows = report_to_csv(report).splitlines()
    assert rows[0] == "N,column,seed,accuracy,macro_f1"
    assert len(rows) == 1 + 4 * 3 * 2
    jp, cp = write_report(report, tmp_path / "out")
    assert json.loads(jp.read_text())["version"] == report["version"]
    assert cp.read_text() == report_to_csv(report)
    assert "single" in summarize(report)


def test_kd_mode_comparison_adds_columns(data):
    rep = run_experiment_grid(data, tiny_grid(n_grid=(2,), seeds=(1,), compare_kd_modes=True), workers=1)
    assert rep["columns"] == ["VE", "T=5", "T=10", "T=5/log-probs", "T=10/log-probs"]


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        GridConfig(n_grid=())
    with pytest.raises(InvalidInputError):
        GridConfig(t_grid=(0.0,))
    with pytest.raises(InvalidInputError):
        run_experiment_grid(LabeledDataset(np.zeros((0, 1500, 3)), []), tiny_grid())


# -- latency -------------------------------------------------------------------


def test_latency_is_stable():
    net = Resnet1d(TINY_TEACHER, seed=0)
    batch = np.random.default_rng(0).standard_normal((8, 1500, 3))
    a = measure_latency(net, batch, repetitions=20)
    b = measure_latency(net, batch, repetitions=20)
    assert a.batch_size == 8 and a.mean > 0
    assert abs(a.mean - b.mean) <= 3 * max(a.sd, b.sd, 1e-3 * a.mean)


def test_latency_needs_two_repetitions():
    with pytest.raises(InvalidInputError):
        measure_latency(Resnet1d(TINY_TEACHER), np.zeros((1, 1500, 3)), repetitions=1)


def test_benchmark_and_parameter_report():
    teacher = EnsembleModel([Resnet1d(TINY_TEACHER, seed=s) for s in range(3)])
    student = Resnet1d(TINY_STUDENT)
    rep = parameter_report(teacher, student)
    assert rep["teacher_parameters"] == 3 * Resnet1d(TINY_TEACHER).parameter_count()
    assert rep["ratio"] == pytest.approx(rep["teacher_parameters"] / rep["student_parameters"])
    bench = benchmark(teacher, student, np.zeros((4, 1500, 3)), repetitions=5)
    assert bench["speedup"] == pytest.approx(bench["teacher"]["mean"] / bench["student"]["mean"])
