"""Shared fixtures: bundled Iris, synthetic datasets, and locators for the
large public CSVs the reproduction tests need."""

import os
from pathlib import Path

import numpy as np
import pytest

from rfphate import Dataset, LabelVector, RandomSeed

REPO_ROOT = Path(__file__).resolve().parent.parent

#: columns of the standard Titanic training CSV that are identifier-like
#: (or, for Cabin, mostly missing); dropping them reproduces the published
#: 712-complete-row setup
TITANIC_DROP = ("PassengerId", "Name", "Ticket", "Cabin")


def data_file(name: str) -> Path | None:
    """Locate a large public dataset CSV: $RFPHATE_DATA_DIR first, then the
    repository's data/ directory."""
    candidates = []
    env = os.environ.get("RFPHATE_DATA_DIR")
    if env:
        candidates.append(Path(env) / name)
    candidates.append(REPO_ROOT / "data" / name)
    for path in candidates:
        if path.is_file():
            return path
    return None


def require_data(name: str) -> Path:
    path = data_file(name)
    if path is None:
        pytest.skip(
            f"{name} not available: place the standard CSV under "
            f"$RFPHATE_DATA_DIR or {REPO_ROOT / 'data'} to run this "
            "reproduction (this sandbox has no network access to fetch it)"
        )
    return path


def strip_columns(src: Path, dst: Path, drop: tuple[str, ...]) -> Path:
    """Copy a CSV without the named columns."""
    import csv

    with open(src, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    keep = [j for j, name in enumerate(rows[0]) if name not in drop]
    with open(dst, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([row[j] for j in keep])
    return dst


@pytest.fixture(scope="session")
def titanic_csv(tmp_path_factory) -> Path:
    """Standard Titanic training CSV with identifier columns removed."""
    src = require_data("titanic.csv")
    dst = tmp_path_factory.mktemp("titanic") / "titanic.csv"
    return strip_columns(src, dst, TITANIC_DROP)


@pytest.fixture(scope="session")
def iris_data() -> tuple[Dataset, LabelVector, np.ndarray]:
    """Bundled Iris as a standardized Dataset; also returns raw X."""
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    iris = sklearn_datasets.load_iris()
    X = iris.data.astype(np.float64)
    Xs = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    ds = Dataset(Xs, names, np.full(4, -1, np.int32))
    ds.validate()
    y = LabelVector("classification", iris.target, 3, list(iris.target_names))
    return ds, y, X


@pytest.fixture(scope="session")
def iris_csv(tmp_path_factory, iris_data) -> Path:
    """Iris written back out as a raw CSV for loader/CLI tests."""
    _, y, X = iris_data
    path = tmp_path_factory.mktemp("iris") / "iris.csv"
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names + ["species"]) + "\n")
        for i in range(X.shape[0]):
            cells = [f"{v:.12g}" for v in X[i]]
            cells.append(y.class_labels[int(y.values[i])])
            fh.write(",".join(cells) + "\n")
    return path


def make_blobs_dataset(
    n: int = 120,
    p: int = 5,
    n_classes: int = 2,
    seed: int = 0,
    informative: int = 2,
) -> tuple[Dataset, LabelVector]:
    """Small synthetic classification set: class-shifted Gaussian blobs in
    the first `informative` columns, noise elsewhere."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    labels = rng.integers(0, n_classes, size=n)
    for j in range(informative):
        X[:, j] += 2.5 * labels
    X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    ds = Dataset(X, [f"v{j}" for j in range(p)], np.full(p, -1, np.int32))
    ds.validate()
    return ds, LabelVector(
        "classification", labels, n_classes, [f"c{k}" for k in range(n_classes)]
    )


@pytest.fixture(scope="session")
def blobs():
    return make_blobs_dataset()


@pytest.fixture()
def toy_csv(tmp_path) -> Path:
    """40-row mixed-type CSV with one categorical column and missing cells."""
    rng = np.random.default_rng(3)
    path = tmp_path / "toy.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("height,width,color,outcome\n")
        for i in range(40):
            h = rng.normal(loc=5.0)
            w = rng.normal(loc=2.0)
            color = ["red", "green", "blue"][i % 3]
            outcome = "yes" if h + w > 7.0 else "no"
            hcell = "" if i == 7 else f"{h:.6g}"
            ccell = "NA" if i == 13 else color
            fh.write(f"{hcell},{w:.6g},{ccell},{outcome}\n")
    return path
