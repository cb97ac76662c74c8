"""Quantitative structure-preservation scores: k-NN cross-validated
variable prediction from embedding coordinates, the mtry/t robustness
sweep, and the noise-augmentation experiment driver."""

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, LabelVector, RandomSeed, noise_augment
from .embed import Embedding, embed_kernel, rf_phate
from .forest import ForestParams, compute_proximities, train_forest


@dataclass
class EvalReport:
    """One k-NN CV score: error rate for categorical targets, per-fold-mean
    RMSE for continuous ones, with k = floor(sqrt(n))."""

    variable: str
    dims: int
    metric: str  # "error_rate" | "rmse"
    score: float
    k_used: int
    fold_seed: RandomSeed

    def validate(self) -> None:
        if self.metric == "error_rate" and not 0.0 <= self.score <= 1.0:
            raise ValueError("error rate outside [0, 1]")
        if self.score < 0.0:
            raise ValueError("negative score")


@dataclass
class SweepGrid:
    """Scores over an ascending mtry x t grid."""

    mtry_values: list[int]
    t_values: list[int]
    scores: np.ndarray  # (len(mtry_values), len(t_values))

    def validate(self) -> None:
        if sorted(self.mtry_values) != list(self.mtry_values) or sorted(
            self.t_values
        ) != list(self.t_values):
            raise ValueError("grid axes must be sorted ascending")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("non-finite sweep scores")


def make_folds(n: int, seed: RandomSeed, n_folds: int = 10) -> list[np.ndarray]:
    """Shuffle rows by the derived stream and split into near-equal folds;
    a pure function of (n, seed)."""
    perm = seed.rng("cv-folds").permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


def _knn_predict(
    train_Y: np.ndarray,
    train_target: np.ndarray,
    train_rows: np.ndarray,
    test_Y: np.ndarray,
    k: int,
    categorical: bool,
    n_classes: int,
) -> np.ndarray:
    """Unweighted k-NN with ties at the k-th distance broken toward the
    smallest original row index; categorical vote ties break toward the
    smallest class index."""
    diff = test_Y[:, None, :] - train_Y[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    out = np.empty(test_Y.shape[0])
    for i in range(test_Y.shape[0]):
        order = np.lexsort((train_rows, dist[i]))[:k]
        neigh = train_target[order]
        if categorical:
            counts = np.bincount(neigh.astype(np.int64), minlength=n_classes)
            out[i] = counts.argmax()
        else:
            out[i] = neigh.mean()
    return out


def knn_cv_score(
    emb: Embedding,
    target: np.ndarray,
    target_kind: str,
    seed: RandomSeed,
    variable: str = "target",
    folds: list[np.ndarray] | None = None,
) -> EvalReport:
    """10-fold cross-validated k-NN prediction of a variable from embedding
    coordinates, k = floor(sqrt(n)).

    Categorical targets score mean misclassification across folds (distinct
    values become classes); continuous targets score the mean per-fold
    RMSE. Pass explicit folds to pin fold membership (e.g. for paired
    comparisons); they must partition range(n).
    """
    target = np.asarray(target, dtype=np.float64)
    n = emb.n
    if target.shape != (n,):
        raise ValueError("target length does not match embedding")
    if target_kind not in ("categorical", "continuous"):
        raise ValueError(f"unknown target kind {target_kind!r}")
    if folds is None:
        if n < 20:
            raise ValueError("need n >= 20 for 10-fold CV")
        folds = make_folds(n, seed)
    if any(f.size < 1 for f in folds):
        raise ValueError("empty CV fold")
    if any(f.size == 1 for f in folds) and n < 20:
        raise ValueError("single-row CV fold")

    categorical = target_kind == "categorical"
    if categorical:
        classes, enc = np.unique(target, return_inverse=True)
        target_enc = enc.astype(np.float64)
        n_classes = classes.size
    else:
        target_enc = target
        n_classes = 0

    k = int(math.isqrt(n))
    scores = []
    all_rows = np.arange(n)
    for fold in folds:
        test_mask = np.zeros(n, dtype=bool)
        test_mask[fold] = True
        train_rows = all_rows[~test_mask]
        k_fold = k
        if k_fold >= train_rows.size:
            k_fold = max(1, train_rows.size - 1)
            warnings.warn(
                f"k={k} clamped to {k_fold} (training fold has "
                f"{train_rows.size} rows)",
                RuntimeWarning,
                stacklevel=2,
            )
        pred = _knn_predict(
            emb.Y[train_rows], target_enc[train_rows], train_rows,
            emb.Y[fold], k_fold, categorical, n_classes,
        )
        if categorical:
            scores.append(float(np.mean(pred != target_enc[fold])))
        else:
            scores.append(float(np.sqrt(np.mean((pred - target_enc[fold]) ** 2))))
    report = EvalReport(
        variable, emb.m,
        "error_rate" if categorical else "rmse",
        float(np.mean(scores)), k, seed,
    )
    report.validate()
    return report


def variable_values(ds: Dataset, name: str) -> tuple[np.ndarray, str]:
    """Values and kind of an original variable: a one-hot group collapses
    to its argmax class index (categorical); a continuous column is scored
    on its standardized scale."""
    for var_name, cols in ds.variables():
        if var_name == name:
            if len(cols) > 1 or ds.onehot_group[cols[0]] >= 0:
                return ds.X[:, cols].argmax(axis=1).astype(np.float64), "categorical"
            return ds.X[:, cols[0]].copy(), "continuous"
    raise KeyError(f"no variable named {name!r}")


def robustness_sweep(
    ds: Dataset,
    y: LabelVector,
    m: int,
    mtry_values: list[int],
    t_values: list[int],
    target_variable: str,
    seed: RandomSeed,
    params: ForestParams | None = None,
    target_kind: str | None = None,
) -> SweepGrid:
    """Score the pipeline over an mtry x t grid against one variable.

    Each grid cell equals a direct rf_phate(t_override=t) +
    knn_cv_score call; the forest and kernel are reused across t values
    for a given mtry because they are a pure function of (data, params,
    seed).
    """
    if not mtry_values or not t_values:
        raise ValueError("grids must be non-empty")
    mtry_values = sorted(int(v) for v in mtry_values)
    t_values = sorted(int(v) for v in t_values)
    base = params or ForestParams()
    base = replace(base, seed=seed.child("sweep-forest"))
    target, auto_kind = variable_values(ds, target_variable)
    kind = target_kind or auto_kind
    scores = np.empty((len(mtry_values), len(t_values)))
    for a, mtry in enumerate(mtry_values):
        forest = train_forest(ds, y, replace(base, mtry=mtry))
        kern = compute_proximities(forest, ds)
        for b, t in enumerate(t_values):
            emb = embed_kernel(kern, m, t_override=t)
            report = knn_cv_score(
                emb, target, kind, seed.child("sweep-folds"), target_variable
            )
            scores[a, b] = report.score
    grid = SweepGrid(mtry_values, t_values, scores)
    grid.validate()
    return grid


def run_noise_experiment(
    ds: Dataset,
    y: LabelVector,
    q: int,
    m: int,
    repeats: int,
    seed: RandomSeed,
    params: ForestParams | None = None,
) -> list[EvalReport]:
    """Repeatedly augment with q noise columns, embed, and score every
    original variable; one report per (repeat, variable), in repeat-major
    order. Summarize across repeats with summarize_reports."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    base = params or ForestParams()
    reports: list[EvalReport] = []
    for r in range(repeats):
        augmented = noise_augment(ds, q, seed.child("noise", r))
        emb = rf_phate(
            augmented, y, m, replace(base, seed=seed.child("forest", r))
        )
        fold_seed = seed.child("folds", r)
        for name, _ in ds.variables():
            target, kind = variable_values(ds, name)
            reports.append(knn_cv_score(emb, target, kind, fold_seed, name))
    return reports


def summarize_reports(
    reports: list[EvalReport],
) -> dict[str, tuple[float, float]]:
    """Per-variable (mean, population standard deviation) across repeats."""
    groups: dict[str, list[float]] = {}
    for rep in reports:
        groups.setdefault(rep.variable, []).append(rep.score)
    return {
        name: (float(np.mean(vals)), float(np.std(vals)))
        for name, vals in groups.items()
    }


def reports_to_csv(reports: list[EvalReport], path) -> None:
    """variable, dims, metric, score, sd rows (sd across same-variable
    repeats, 0 for singletons)."""
    summary = summarize_reports(reports)
    counted: dict[str, int] = {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "dims", "metric", "score", "sd"])
        for rep in reports:
            counted[rep.variable] = counted.get(rep.variable, 0) + 1
            sd = summary[rep.variable][1]
            writer.writerow(
                [
                    rep.variable,
                    rep.dims,
                    rep.metric,
                    f"{rep.score:.12g}",
                    f"{sd:.12g}",
                ]
            )


def sweep_to_csv(grid: SweepGrid, path) -> None:
    """Heatmap-ready long format: mtry, t, score."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mtry", "t", "score"])
        for a, mtry in enumerate(grid.mtry_values):
            for b, t in enumerate(grid.t_values):
                writer.writerow([mtry, t, f"{grid.scores[a, b]:.12g}"])
