import json

import numpy as np
import pytest

from spectralgp.errors import EmptyDataset, ParseError
from spectralgp.harness import ExperimentConfig, Method, load_csv, run_experiment, split, split_indices, synthetic_regression
from spectralgp.harness.experiment import config_from_json, median_rmse, rmse, series
from spectralgp.harness.io import atomic_write_text, dumps

ABALONE = """sex,length,diameter,height,whole,shucked,viscera,shell,rings
M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15
M,0.35,0.265,0.09,0.2255,0.0995,0.0485,0.07,7
F,0.53,0.42,0.135,0.677,0.2565,0.1415,0.21,9
M,0.44,0.365,0.125,0.516,0.2155,0.114,0.155,10
I,0.33,0.255,0.08,0.205,0.0895,0.0395,0.055,7
"""


def tiny_experiment(tmp_path, **kw):
    base = dict(
        synthetic={"b": 3, "d": 4, "a": 1.0, "scale": 2.0, "noise_std": 0.1},
        p_list=[4, 8],
        runs=2,
        gp={"steps": 5},
        ssgp={"steps": 5},
        embed={"steps": 3, "batch_size": 8},
        out_dir=str(tmp_path),
    )
    return ExperimentConfig(**{**base, **kw})


class TestLoadCsv:
    def test_centering(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,b,y\n1,2,3\n4,5,7\n2,2,11\n")
        ds = load_csv(f, "y")
        assert ds.n == 3 and ds.d == 2
        assert abs(ds.y.mean()) <= 1e-12
        assert ds.y_mean == pytest.approx(7.0)
        np.testing.assert_allclose(ds.X.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(ds.X.std(axis=0), 1.0)

    def test_target_by_index(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,y\n1,3\n4,7\n")
        assert load_csv(f, -1).feature_names == ["a"]
        assert load_csv(f, 0).feature_names == ["y"]

    def test_parse_error_location(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,b,c,y\n1,2,oops,3\n4,5,6,7\n")
        with pytest.raises(ParseError) as info:
            load_csv(f, "y")
        assert (info.value.row, info.value.column) == (2, 3)
        assert "row 2" in str(info.value) and "column 3" in str(info.value)

    def test_ragged_row(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,y\n1,2\n3\n")
        with pytest.raises(ParseError) as info:
            load_csv(f, "y")
        assert info.value.row == 3

    def test_abalone_one_hot(self, tmp_path):
        f = tmp_path / "abalone.csv"
        f.write_text(ABALONE)
        ds = load_csv(f, "rings")
        assert ds.d == 9 and ds.n == 5
        assert ds.feature_names[:2] == ["sex=I", "sex=M"]

    def test_drop(self, tmp_path):
        f = tmp_path / "abalone.csv"
        f.write_text(ABALONE)
        assert load_csv(f, "rings", drop=["sex"]).d == 7

    def test_empty(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,y\n")
        with pytest.raises(EmptyDataset):
            load_csv(f, "y")
        f.write_text("")
        with pytest.raises(EmptyDataset):
            load_csv(f, "y")

    def test_missing_target(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("a,y\n1,2\n")
        with pytest.raises(ParseError):
            load_csv(f, "z")


class TestSplit:
    def test_partition(self):
        tr, te = split_indices(50, 0.8, 3)
        assert len(tr) == 40 and len(te) == 10
        assert sorted(np.concatenate([tr, te]).tolist()) == list(range(50))

    def test_deterministic(self):
        np.testing.assert_array_equal(split_indices(30, 0.5, 1)[0], split_indices(30, 0.5, 1)[0])

    def test_both_parts_nonempty(self):
        tr, te = split_indices(2, 0.99, 0)
        assert len(tr) == 1 and len(te) == 1

    def test_invalid_ratio(self):
        with pytest.raises(ValueError):
            split_indices(10, 1.0, 0)

    def test_recenters_on_train(self):
        ds = synthetic_regression(3, 4, seed=2)
        train, test = split(ds, 0.7, 0)
        assert abs(train.y.mean()) <= 1e-12
        # original targets are recoverable from either part
        tr, te = split_indices(ds.n, 0.7, 0)
        np.testing.assert_allclose(test.y + test.y_mean, ds.y[te] + ds.y_mean)
        np.testing.assert_allclose(train.y + train.y_mean, ds.y[tr] + ds.y_mean)


class TestSynthetic:
    def test_shape_and_labels(self):
        ds = synthetic_regression(4, 5, scale=2.0, seed=1)
        assert ds.n == 3 + 4 + 6 + 8 and ds.d == 5
        assert sorted(set(ds.labels.tolist())) == [1, 2, 3, 4]
        assert abs(ds.y.mean()) <= 1e-12

    def test_deterministic(self):
        np.testing.assert_array_equal(synthetic_regression(3, 4, seed=5).y, synthetic_regression(3, 4, seed=5).y)


class TestExperiment:
    def test_cardinality(self, tmp_path):
        cfg = tiny_experiment(tmp_path, p_list=[16], runs=2)
        recs = run_experiment(cfg)
        assert len(recs) == 3 * 1 * 2
        assert {r.method for r in recs} == {m.value for m in Method}

    def test_cardinality_full_grid(self, tmp_path):
        recs = run_experiment(tiny_experiment(tmp_path), write=False)
        assert len(recs) == 2 * (1 + 2 + 2)
        assert all(np.isfinite(r.rmse) and r.wall_time_ms == 0 for r in recs)

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(tiny_experiment(a, runs=1))
        run_experiment(tiny_experiment(b, runs=1))
        for name in ("metrics.json", "series_FullGP.csv", "series_VanillaSSGP.csv", "series_RevisedSSGP.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_full_gp_cap(self, tmp_path):
        recs = run_experiment(tiny_experiment(tmp_path, full_gp_cap=1, methods=["FullGP"]), write=False)
        assert recs == []

    def test_method_subset(self, tmp_path):
        recs = run_experiment(tiny_experiment(tmp_path, methods=["VanillaSSGP"], runs=1), write=False)
        assert [r.p for r in recs] == [4, 8]

    def test_metrics_json(self, tmp_path):
        run_experiment(tiny_experiment(tmp_path, runs=1, methods=["FullGP", "VanillaSSGP"]))
        rows = json.loads((tmp_path / "metrics.json").read_text())
        assert set(rows[0]) == {"method", "p", "seed", "rmse", "train_nll", "wall_time_ms"}
        lines = (tmp_path / "series_FullGP.csv").read_text().splitlines()
        assert lines[0] == "p,mean_rmse,std_rmse" and len(lines) == 3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(split=1.5)
        with pytest.raises(ValueError):
            ExperimentConfig(p_list=[0])
        with pytest.raises(ValueError):
            ExperimentConfig(methods=["Nope"])

    def test_config_from_json(self):
        cfg = config_from_json('{"runs": 3, "p_list": [8]}')
        assert cfg.runs == 3 and cfg.p_list == [8]


def test_rmse_and_median():
    assert rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(np.sqrt(2.0))
    from spectralgp.harness.experiment import MetricsRecord

    recs = [MetricsRecord("A", 1, s, float(s), 0.0) for s in range(5)]
    assert median_rmse(recs, "A") == 2.0
    assert np.isnan(median_rmse(recs, "B"))
    assert series(recs, [1]) == {"A": [(1, 2.0, float(np.std(range(5))))]}


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "x.json"
    atomic_write_text(target, dumps({"b": 1, "a": [1, 2]}))
    assert target.read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    assert [p.name for p in target.parent.iterdir()] == ["x.json"]
