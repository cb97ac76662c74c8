"""k-NN CV scoring, sweep, and noise-experiment drivers."""

import math

import numpy as np
import pytest

from rfphate import (
    Dataset,
    ForestParams,
    LabelVector,
    RandomSeed,
    knn_cv_score,
    make_folds,
    reports_to_csv,
    rf_phate,
    robustness_sweep,
    run_noise_experiment,
    summarize_reports,
    sweep_to_csv,
    variable_values,
)
from rfphate.embed import Embedding

from conftest import make_blobs_dataset


def embedding(Y: np.ndarray) -> Embedding:
    return Embedding(np.asarray(Y, float), "test")


def knn_cv_oracle(Y, target, folds, k, categorical):
    """Independent second implementation of the CV loop (plain loops)."""
    n = Y.shape[0]
    fold_scores = []
    for fold in folds:
        in_test = set(int(i) for i in fold)
        train = [i for i in range(n) if i not in in_test]
        errs = []
        for i in fold:
            cand = sorted(
                train, key=lambda j: (float(np.linalg.norm(Y[i] - Y[j])), j)
            )[:k]
            vals = [target[j] for j in cand]
            if categorical:
                classes = sorted(set(target))
                counts = {c: 0 for c in classes}
                for v in vals:
                    counts[v] += 1
                best = max(classes, key=lambda c: (counts[c], -classes.index(c)))
                errs.append(1.0 if best != target[i] else 0.0)
            else:
                errs.append((np.mean(vals) - target[i]) ** 2)
        if categorical:
            fold_scores.append(np.mean(errs))
        else:
            fold_scores.append(np.sqrt(np.mean(errs)))
    return float(np.mean(fold_scores))


class TestKnnCvScore:
    def test_self_predictive_embedding(self):
        # k = sqrt(n) neighbors average a window of ~k/n of the target range,
        # so the bound needs enough density; uniform targets keep the tails
        # dense too
        rng = np.random.default_rng(0)
        n = 1000
        target = rng.uniform(0.0, 1.0, n)
        Y = np.column_stack([target, rng.standard_normal(n) * 1e-4])
        rep = knn_cv_score(embedding(Y), target, "continuous", RandomSeed(1))
        assert rep.metric == "rmse"
        assert rep.score < 0.05 * target.std()

    def test_pure_noise_embedding_is_chance(self):
        rng = np.random.default_rng(2)
        n = 200
        Y = rng.standard_normal((n, 2))
        target = np.tile([0.0, 1.0], n // 2)
        rep = knn_cv_score(embedding(Y), target, "categorical", RandomSeed(3))
        assert rep.metric == "error_rate"
        assert abs(rep.score - 0.5) <= 0.1

    def test_k_is_floor_sqrt_n(self):
        rng = np.random.default_rng(4)
        for n in (30, 100, 150):
            Y = rng.standard_normal((n, 2))
            rep = knn_cv_score(
                embedding(Y), rng.standard_normal(n), "continuous", RandomSeed(0)
            )
            assert rep.k_used == math.isqrt(n)

    def test_second_implementation_oracle_continuous(self):
        rng = np.random.default_rng(5)
        n = 30
        Y = rng.standard_normal((n, 2))
        target = rng.standard_normal(n)
        folds = make_folds(n, RandomSeed(6))
        rep = knn_cv_score(
            embedding(Y), target, "continuous", RandomSeed(6), folds=folds
        )
        expected = knn_cv_oracle(Y, target, folds, math.isqrt(n), False)
        assert rep.score == pytest.approx(expected, abs=1e-12)

    def test_second_implementation_oracle_categorical(self):
        rng = np.random.default_rng(7)
        n = 30
        Y = rng.standard_normal((n, 2))
        target = rng.integers(0, 3, n).astype(float)
        folds = make_folds(n, RandomSeed(8))
        rep = knn_cv_score(
            embedding(Y), target, "categorical", RandomSeed(8), folds=folds
        )
        expected = knn_cv_oracle(Y, target, folds, math.isqrt(n), True)
        assert rep.score == pytest.approx(expected, abs=1e-12)

    def test_invariant_under_orthogonal_transform(self):
        rng = np.random.default_rng(9)
        n = 60
        Y = rng.standard_normal((n, 3))
        target = rng.standard_normal(n)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        shift = rng.standard_normal(3)
        a = knn_cv_score(embedding(Y), target, "continuous", RandomSeed(1))
        b = knn_cv_score(embedding(Y @ Q + shift), target, "continuous", RandomSeed(1))
        assert a.score == pytest.approx(b.score, abs=1e-12)

    def test_folds_pure_function_of_n_and_seed(self):
        f1 = make_folds(57, RandomSeed(11))
        f2 = make_folds(57, RandomSeed(11))
        assert all(np.array_equal(a, b) for a, b in zip(f1, f2))
        flat = np.sort(np.concatenate(f1))
        assert np.array_equal(flat, np.arange(57))

    def test_row_permutation_invariance_with_consistent_folds(self):
        rng = np.random.default_rng(12)
        n = 40
        Y = rng.standard_normal((n, 2))
        target = rng.standard_normal(n)
        folds = make_folds(n, RandomSeed(13))
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        # permute rows and map fold membership through the same permutation
        permuted_folds = [np.sort(inv[f]) for f in folds]
        a = knn_cv_score(embedding(Y), target, "continuous", RandomSeed(0), folds=folds)
        b = knn_cv_score(
            embedding(Y[perm]), target[perm], "continuous", RandomSeed(0),
            folds=permuted_folds,
        )
        assert a.score == pytest.approx(b.score, abs=1e-12)

    def test_small_n_rejected(self):
        rng = np.random.default_rng(14)
        with pytest.raises(ValueError):
            knn_cv_score(
                embedding(rng.standard_normal((10, 2))),
                rng.standard_normal(10),
                "continuous",
                RandomSeed(0),
            )

    def test_k_clamped_with_warning(self):
        rng = np.random.default_rng(15)
        n = 24
        Y = rng.standard_normal((n, 2))
        target = rng.standard_normal(n)
        # 2 folds of 12: training folds have 12 rows, k = isqrt(24) = 4 fine;
        # force the clamp with an extreme split instead
        folds = [np.arange(0, n - 3), np.arange(n - 3, n)]
        with pytest.warns(RuntimeWarning):
            knn_cv_score(
                embedding(Y), target, "continuous", RandomSeed(0), folds=folds
            )


class TestVariableValues:
    def test_continuous_column(self, blobs):
        ds, _ = blobs
        values, kind = variable_values(ds, "v1")
        assert kind == "continuous"
        assert np.array_equal(values, ds.X[:, 1])

    def test_onehot_group_argmax(self, toy_csv):
        from rfphate import load_csv, preprocess

        raw, labels = load_csv(toy_csv, "outcome")
        ds, _ = preprocess(raw, labels, "impute_zero_none")
        values, kind = variable_values(ds, "color")
        assert kind == "categorical"
        assert set(np.unique(values)) <= {0.0, 1.0, 2.0, 3.0}

    def test_unknown_variable(self, blobs):
        ds, _ = blobs
        with pytest.raises(KeyError):
            variable_values(ds, "nope")


class TestRobustnessSweep:
    def test_single_cell_equals_direct_composition(self, blobs):
        ds, y = blobs
        seed = RandomSeed(17)
        grid = robustness_sweep(
            ds, y, 2, [2], [3], "v0", seed, params=ForestParams(40)
        )
        emb = rf_phate(
            ds, y, 2,
            ForestParams(40, mtry=2, seed=seed.child("sweep-forest")),
            t_override=3,
        )
        target, kind = variable_values(ds, "v0")
        direct = knn_cv_score(emb, target, kind, seed.child("sweep-folds"), "v0")
        assert grid.scores[0, 0] == pytest.approx(direct.score, abs=1e-12)

    def test_degenerate_constant_target_scores_zero(self):
        ds, _ = make_blobs_dataset(n=60, p=4, seed=3)
        y = LabelVector("classification", np.zeros(60, np.int64), 1, ["only"])
        # constant categorical variable: a single-category one-hot group
        X = np.column_stack([ds.X, np.ones(60)])
        ds2 = Dataset(
            X,
            ds.feature_names + ["flag=on"],
            np.concatenate([ds.onehot_group, [0]]).astype(np.int32),
        )
        grid = robustness_sweep(
            ds2, y, 2, [1, 2], [1, 2], "flag", RandomSeed(1),
            params=ForestParams(10),
        )
        assert np.all(grid.scores == 0.0)

    def test_axes_sorted_and_finite(self, blobs):
        ds, y = blobs
        grid = robustness_sweep(
            ds, y, 2, [3, 1], [4, 2], "v0", RandomSeed(2), params=ForestParams(20)
        )
        assert grid.mtry_values == [1, 3]
        assert grid.t_values == [2, 4]
        grid.validate()

    def test_empty_grid_rejected(self, blobs):
        ds, y = blobs
        with pytest.raises(ValueError):
            robustness_sweep(ds, y, 2, [], [1], "v0", RandomSeed(0))


class TestNoiseExperiment:
    def test_q_zero_single_repeat_equals_direct_pipeline(self, blobs):
        ds, y = blobs
        seed = RandomSeed(23)
        reports = run_noise_experiment(
            ds, y, 0, 2, 1, seed, params=ForestParams(30)
        )
        emb = rf_phate(ds, y, 2, ForestParams(30, seed=seed.child("forest", 0)))
        for rep in reports:
            target, kind = variable_values(ds, rep.variable)
            direct = knn_cv_score(
                emb, target, kind, seed.child("folds", 0), rep.variable
            )
            assert rep.score == pytest.approx(direct.score, abs=1e-12)

    def test_deterministic_across_reruns(self, blobs):
        ds, y = blobs
        a = run_noise_experiment(
            ds, y, 10, 2, 2, RandomSeed(31), params=ForestParams(20)
        )
        b = run_noise_experiment(
            ds, y, 10, 2, 2, RandomSeed(31), params=ForestParams(20)
        )
        assert [r.score for r in a] == [r.score for r in b]

    def test_report_shape_and_summary(self, blobs):
        ds, y = blobs
        reports = run_noise_experiment(
            ds, y, 5, 2, 3, RandomSeed(37), params=ForestParams(20)
        )
        assert len(reports) == 3 * ds.p
        summary = summarize_reports(reports)
        assert set(summary) == {name for name, _ in ds.variables()}
        for mean, sd in summary.values():
            assert np.isfinite(mean) and sd >= 0.0


class TestReportCsv:
    def test_round_trip_fields(self, tmp_path, blobs):
        ds, y = blobs
        reports = run_noise_experiment(
            ds, y, 0, 2, 1, RandomSeed(41), params=ForestParams(10)
        )
        path = tmp_path / "report.csv"
        reports_to_csv(reports, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "variable,dims,metric,score,sd"
        assert len(lines) == len(reports) + 1

    def test_sweep_csv(self, tmp_path, blobs):
        ds, y = blobs
        grid = robustness_sweep(
            ds, y, 2, [1, 2], [1, 2], "v0", RandomSeed(2), params=ForestParams(10)
        )
        path = tmp_path / "grid.csv"
        sweep_to_csv(grid, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "mtry,t,score"
        assert len(lines) == 5
