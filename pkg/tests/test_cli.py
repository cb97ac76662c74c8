"""Command-line surface: outputs, determinism, and failure classes."""

import numpy as np
import pytest

from rfphate.cli import EXIT_IO, EXIT_PARSE, EXIT_VALIDATION, main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def tiny_csv(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "tiny.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("a,b,c,y\n")
        for i in range(10):
            a, b, c = rng.normal(size=3)
            fh.write(f"{a:.6g},{b:.6g},{c:.6g},{int(a > 0)}\n")
    return path


class TestEmbed:
    def test_writes_embedding_and_plot(self, toy_csv, tmp_path, capsys):
        out = tmp_path / "emb.csv"
        svg = tmp_path / "emb.svg"
        code = run(
            ["embed", "--input", toy_csv, "--label", "outcome",
             "--output", out, "--plot", svg, "--trees", "50", "--seed", "5"]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "selected t:" in stdout
        assert "oob error:" in stdout
        assert "top-5 importances:" in stdout
        header = out.read_text().splitlines()[0]
        assert header.startswith("dim_1,dim_2,label")
        svg_text = svg.read_text()
        assert svg_text.startswith("<svg")
        assert 'viewBox="0 0 800 600"' in svg_text
        assert "legend" in svg_text

    def test_minimal_pipeline_single_tree(self, tiny_csv, tmp_path):
        out = tmp_path / "emb.csv"
        code = run(
            ["embed", "--input", tiny_csv, "--label", "y", "--t", "1",
             "--trees", "1", "--output", out, "--seed", "0"]
        )
        assert code == 0
        rows = out.read_text().strip().splitlines()[1:]
        coords = np.array([[float(v) for v in r.split(",")[:2]] for r in rows])
        assert coords.shape == (10, 2)
        assert np.all(np.isfinite(coords))

    def test_byte_identical_rerun(self, toy_csv, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.csv"
            svg = tmp_path / f"{name}.svg"
            assert run(
                ["embed", "--input", toy_csv, "--label", "outcome",
                 "--output", out, "--plot", svg, "--trees", "40", "--seed", "9"]
            ) == 0
            outs.append((out.read_bytes(), svg.read_bytes()))
        assert outs[0] == outs[1]

    def test_color_by_column(self, toy_csv, tmp_path):
        out = tmp_path / "emb.csv"
        svg = tmp_path / "emb.svg"
        code = run(
            ["embed", "--input", toy_csv, "--label", "outcome",
             "--output", out, "--plot", svg, "--trees", "30", "--seed", "1",
             "--color-by", "height"]
        )
        assert code == 0
        assert out.read_text().splitlines()[0] == "dim_1,dim_2,label,height"

    def test_seed_env_fallback(self, toy_csv, tmp_path, monkeypatch):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        c = tmp_path / "c.csv"
        monkeypatch.setenv("RFPHATE_SEED", "77")
        run(["embed", "--input", toy_csv, "--label", "outcome", "--output", a,
             "--trees", "30"])
        run(["embed", "--input", toy_csv, "--label", "outcome", "--output", b,
             "--trees", "30"])
        # explicit flag beats the environment
        run(["embed", "--input", toy_csv, "--label", "outcome", "--output", c,
             "--trees", "30", "--seed", "78"])
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()


class TestEvaluate:
    def test_reports_error_rate_for_categorical_vars(self, toy_csv, tmp_path, capsys):
        emb = tmp_path / "emb.csv"
        run(["embed", "--input", toy_csv, "--label", "outcome", "--output", emb,
             "--trees", "50", "--seed", "3"])
        report = tmp_path / "rep.csv"
        code = run(
            ["evaluate", "--input", toy_csv, "--label", "outcome",
             "--embedding", emb, "--vars", "color,height", "--report", report]
        )
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "variable,dims,metric,score,sd"
        rows = {r.split(",")[0]: r.split(",")[2] for r in lines[1:]}
        assert rows["color"] == "error_rate"  # one-hot group
        assert rows["height"] == "rmse"       # many distinct values

    def test_row_mismatch_is_distinct_error(self, toy_csv, tmp_path, capsys):
        emb = tmp_path / "emb.csv"
        emb.write_text("dim_1,dim_2\n0,0\n1,1\n")
        report = tmp_path / "rep.csv"
        code = run(
            ["evaluate", "--input", toy_csv, "--label", "outcome",
             "--embedding", emb, "--vars", "height", "--report", report]
        )
        assert code == EXIT_VALIDATION
        assert "do not match" in capsys.readouterr().err


class TestSweepNoiseImportance:
    def test_sweep_single_cell_matches_direct_composition(self, toy_csv, tmp_path):
        report = tmp_path / "grid.csv"
        code = run(
            ["sweep", "--input", toy_csv, "--label", "outcome",
             "--mtry-values", "2", "--t-values", "3", "--target-var", "height",
             "--trees", "30", "--seed", "13", "--report", report]
        )
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "mtry,t,score"
        mtry, t, score = lines[1].split(",")

        from rfphate import (
            ForestParams,
            RandomSeed,
            knn_cv_score,
            load_csv,
            preprocess,
            rf_phate,
            variable_values,
        )

        raw, labels = load_csv(toy_csv, "outcome")
        ds, y = preprocess(raw, labels)
        seed = RandomSeed(13)
        emb = rf_phate(
            ds, y, 2, ForestParams(30, mtry=2, seed=seed.child("sweep-forest")),
            t_override=3,
        )
        target, kind = variable_values(ds, "height")
        direct = knn_cv_score(emb, target, kind, seed.child("sweep-folds"), "height")
        assert float(score) == pytest.approx(direct.score, abs=1e-9)
        assert (int(mtry), int(t)) == (2, 3)

    def test_noise_q_zero_matches_plain_pipeline(self, toy_csv, tmp_path):
        report = tmp_path / "noise.csv"
        code = run(
            ["noise", "--input", toy_csv, "--label", "outcome", "--q", "0",
             "--repeats", "1", "--trees", "30", "--seed", "15",
             "--report", report]
        )
        assert code == 0

        from rfphate import (
            ForestParams,
            RandomSeed,
            knn_cv_score,
            load_csv,
            preprocess,
            rf_phate,
            variable_values,
        )

        raw, labels = load_csv(toy_csv, "outcome")
        ds, y = preprocess(raw, labels)
        seed = RandomSeed(15)
        emb = rf_phate(ds, y, 2, ForestParams(30, seed=seed.child("forest", 0)))
        lines = report.read_text().strip().splitlines()[1:]
        for line in lines:
            name, _, kind_metric, score, _ = line.split(",")
            target, kind = variable_values(ds, name)
            direct = knn_cv_score(emb, target, kind, seed.child("folds", 0), name)
            assert float(score) == pytest.approx(direct.score, abs=1e-9)

    def test_importance_writes_ranked_pairs(self, toy_csv, tmp_path, capsys):
        report = tmp_path / "imp.csv"
        code = run(
            ["importance", "--input", toy_csv, "--label", "outcome",
             "--trees", "80", "--seed", "17", "--report", report]
        )
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "variable,importance"
        values = [float(r.split(",")[1]) for r in lines[1:]]
        assert values == sorted(values, reverse=True)
        assert {r.split(",")[0] for r in lines[1:]} == {"height", "width", "color"}


class TestFailureClasses:
    def test_missing_file_is_io_error(self, tmp_path, capsys):
        code = run(
            ["embed", "--input", tmp_path / "absent.csv", "--label", "y",
             "--output", tmp_path / "o.csv"]
        )
        assert code == EXIT_IO
        assert capsys.readouterr().err.startswith("error (io):")

    def test_ragged_csv_is_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,y\n1\n")
        code = run(
            ["embed", "--input", bad, "--label", "y",
             "--output", tmp_path / "o.csv"]
        )
        assert code == EXIT_PARSE
        assert capsys.readouterr().err.startswith("error (parse):")

    def test_unknown_variable_is_validation_error(self, toy_csv, tmp_path, capsys):
        emb = tmp_path / "emb.csv"
        run(["embed", "--input", toy_csv, "--label", "outcome", "--output", emb,
             "--trees", "20", "--seed", "1"])
        code = run(
            ["evaluate", "--input", toy_csv, "--label", "outcome",
             "--embedding", emb, "--vars", "nope", "--report", tmp_path / "r.csv"]
        )
        assert code == EXIT_VALIDATION

    def test_bad_flag_value_is_validation_error(self, toy_csv, tmp_path, capsys):
        code = run(
            ["embed", "--input", toy_csv, "--label", "outcome",
             "--output", tmp_path / "o.csv", "--mtry", "99"]
        )
        assert code == EXIT_VALIDATION
