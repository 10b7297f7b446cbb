import numpy as np
import pytest

from mnarec.experiments import (
    REPORT_COLUMNS,
    ExperimentSpec,
    derive_seed,
    run,
    run_alpha_sweep,
    run_estimator_table,
    run_robustness_sweep,
    run_train_real,
)
from mnarec.synthdata import PREDICTORS

SMALL = dict(n_users=30, n_items=40, max_iterations=30, completion_lambdas=(1.0,), completion_rank=3)


class TestSpec:
    @pytest.mark.parametrize("kwargs", [dict(trials=0), dict(alphas=(0.0,)), dict(alphas=(1.5,)),
                                        dict(kind="bogus"), dict(metrics=("ndcg",))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentSpec(**kwargs)

    def test_seed_streams(self):
        assert derive_seed(0, "obs", 1) == derive_seed(0, "obs", 1)
        assert len({derive_seed(0, "obs", t) for t in range(100)}) == 100
        assert derive_seed(0, "obs", 1) != derive_seed(0, "mcar", 1)
        assert derive_seed(0, "obs", 1) != derive_seed(1, "obs", 1)


def test_full_reveal_single_trial_is_exact():
    spec = ExperimentSpec(trials=1, alphas=(1.0,), target_fraction=1.0, metrics=("mae", "dcg@5"), **SMALL)
    report = run_estimator_table(spec)
    for row in report.rows:
        assert row["mean"] == pytest.approx(row["true_value"], rel=1e-12, abs=1e-12)


def test_reproducible_and_order_independent(tmp_path):
    spec = ExperimentSpec(trials=3, metrics=("mae",), output=str(tmp_path / "a.csv"), **SMALL)
    a = run(spec)
    b = run(ExperimentSpec(trials=3, metrics=("mae",), output=str(tmp_path / "b.csv"), **SMALL))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    one = run(ExperimentSpec(trials=1, metrics=("mae",), **SMALL), a.truth)
    for key, values in one.raw.items():
        assert values[0] == a.raw[key][0]


def test_report_schema(tmp_path):
    spec = ExperimentSpec(trials=2, metrics=("mae", "mse"), output=str(tmp_path / "r.csv"), **SMALL)
    report = run(spec)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 1 + len(PREDICTORS) * 2 * 4
    for row in report.rows:
        assert row["std"] >= 0 and (row["rmse"] is None or row["rmse"] >= 0)


@pytest.fixture(scope="module")
def report(desk_truth):
    spec = ExperimentSpec(kind="alpha-sweep-eval", trials=50, alphas=(0.25, 1.0),
                          metrics=("mae", "dcg@50"))
    return run_alpha_sweep(spec, desk_truth)


class TestAlphaSweep:

    def test_snips_equals_naive_at_mcar(self, report):
        for naive in report.select(value=1.0, estimator="naive"):
            snips = report.select(value=1.0, estimator="snips", predictor=naive["predictor"],
                                  metric=naive["metric"])[0]
            assert (snips["mean"], snips["std"], snips["rmse"]) == (naive["mean"], naive["std"], naive["rmse"])

    def test_ips_much_better_than_naive_dcg(self, report):
        ips = report.select(value=0.25, estimator="ips", predictor="ALL", metric="dcg@50")[0]
        naive = report.select(value=0.25, estimator="naive", predictor="ALL", metric="dcg@50")[0]
        assert naive["rmse"] >= 10 * ips["rmse"]

    def test_snips_much_better_than_naive_mae(self, report):
        snips = report.select(value=0.25, estimator="snips", predictor="ALL", metric="mae")[0]
        naive = report.select(value=0.25, estimator="naive", predictor="ALL", metric="mae")[0]
        assert naive["rmse"] >= 10 * snips["rmse"]

    @pytest.mark.xfail(strict=True, reason="at 200x300 the IPS MAE RMSE gap is about 8.6x; "
                                           "IPS variance shrinks only at full scale")
    def test_ips_much_better_than_naive_mae(self, report):
        ips = report.select(value=0.25, estimator="ips", predictor="ALL", metric="mae")[0]
        naive = report.select(value=0.25, estimator="naive", predictor="ALL", metric="mae")[0]
        assert naive["rmse"] >= 10 * ips["rmse"]


def test_learning_sweep_parallel_matches_serial():
    base = dict(kind="alpha-sweep-learn", trials=2, lambdas=(1.0, 10.0), rank=2, folds=2, **SMALL)
    serial = run(ExperimentSpec(**base))
    parallel = run(ExperimentSpec(workers=2, **base), serial.truth)
    assert serial.rows == parallel.rows
    assert {r["estimator"] for r in serial.rows} == {"mf-ips", "mf-naive"}


def test_robustness_exact_limit_matches_true_propensities():
    spec = ExperimentSpec(kind="robustness-sweep", trials=3, metrics=("mse",), mcar_sizes=(50,), **SMALL)
    report = run_robustness_sweep(spec)
    for t in range(3):
        for pred in PREDICTORS:
            exact = report.raw[("inf", pred, "mse", "ips-nb")][t]
            true = report.raw[("inf", pred, "mse", "ips-true")][t]
            assert exact == pytest.approx(true, rel=1e-12)


def test_robustness_learning_rows():
    spec = ExperimentSpec(kind="robustness-sweep", trials=1, metrics=("mse",), mcar_sizes=(50,), learn=True,
                          lambdas=(1.0,), rank=2, folds=2, **SMALL)
    report = run_robustness_sweep(spec)
    learned = report.select(predictor="learned")
    assert {r["estimator"] for r in learned} == {"mf-ips", "mf-naive", "mf-nb"}


def test_train_real_on_demo_data():
    from pathlib import Path

    data = Path(__file__).resolve().parents[1] / "src" / "mnarec" / "data"
    spec = ExperimentSpec(kind="train-real", lambdas=(1.0, 10.0), rank=3, folds=2, max_iterations=30)
    report = run_train_real(spec, data / "demo_train.tsv", data / "demo_test.tsv")
    assert {(r["estimator"], r["metric"]) for r in report.rows} == {
        ("mf-ips", "mae"), ("mf-ips", "mse"), ("mf-naive", "mae"), ("mf-naive", "mse")}
