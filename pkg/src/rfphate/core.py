"""Data ingestion, encoding, and standardization for the embedding pipeline.

Covers CSV loading with missing-value handling, one-hot encoding of
categorical columns, per-column standardization, Gaussian noise
augmentation, and the seed-derivation scheme every stochastic component
uses.
"""

import csv
import zlib
from dataclasses import dataclass, field

import numpy as np

#: CSV cell values treated as missing (case-insensitive).
MISSING_SENTINELS = ("", "na")

_MASK64 = (1 << 64) - 1


class DataError(Exception):
    """Base class for ingestion and validation failures."""


class RaggedRowError(DataError):
    """A CSV row has a different field count than the header."""


class MissingColumnError(DataError):
    """A requested column is absent from the header."""


class EmptyDatasetError(DataError):
    """No usable rows remain."""


@dataclass(frozen=True)
class RandomSeed:
    """Master seed; every derived stream is a pure function of (master, tag, index)."""

    master: int = 0

    def _sequence(self, tag: str, index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            [self.master & _MASK64, zlib.crc32(tag.encode("utf-8")), index]
        )

    def rng(self, tag: str, index: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._sequence(tag, index)))

    def uint64(self, tag: str, index: int = 0) -> int:
        return int(self._sequence(tag, index).generate_state(1, np.uint64)[0])

    def child(self, tag: str, index: int = 0) -> "RandomSeed":
        return RandomSeed(self.uint64(tag, index))


@dataclass
class LabelVector:
    """Supervision target: class indices in [0, C) or real-valued responses.

    Classification values may contain -1 (missing) until `preprocess` drops
    those rows; regression values may likewise contain NaN.
    """

    task: str  # "classification" | "regression"
    values: np.ndarray
    n_classes: int = 0
    class_labels: list[str] | None = None

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification":
            self.values = np.asarray(self.values, dtype=np.int64)
        else:
            self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def validate(self) -> None:
        if self.task == "classification":
            if self.values.min(initial=0) < 0 or (
                self.n and self.values.max() >= self.n_classes
            ):
                raise ValueError("class indices outside [0, n_classes)")
            present = np.unique(self.values)
            if self.n and not np.array_equal(present, np.arange(self.n_classes)):
                raise ValueError("class indices do not cover a contiguous range")
        else:
            if not np.all(np.isfinite(self.values)):
                raise ValueError("non-finite regression labels")

    def take(self, rows: np.ndarray) -> "LabelVector":
        return LabelVector(self.task, self.values[rows], self.n_classes, self.class_labels)


@dataclass
class RawColumn:
    """One parsed CSV column prior to encoding."""

    name: str
    numeric: bool
    floats: np.ndarray | None = None  # float64, NaN marks missing
    strings: list[str | None] | None = None  # None marks missing

    def missing_mask(self) -> np.ndarray:
        if self.numeric:
            return np.isnan(self.floats)
        return np.array([s is None for s in self.strings], dtype=bool)


@dataclass
class RawTable:
    """Feature columns as parsed, before imputation/encoding/standardization."""

    columns: list[RawColumn]
    n: int


@dataclass
class Dataset:
    """Encoded, standardized feature matrix.

    Continuous columns have sample mean 0 and sample variance 1 (ddof=1)
    unless flagged degenerate (zero variance, stored as zeros). One-hot
    columns stay binary; each group's columns sum to exactly 1 per row.
    """

    X: np.ndarray  # (n, p) float64
    feature_names: list[str]
    onehot_group: np.ndarray  # (p,) int32, -1 for continuous columns
    degenerate: np.ndarray = field(default=None)  # (p,) bool

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.onehot_group = np.asarray(self.onehot_group, dtype=np.int32)
        if self.degenerate is None:
            self.degenerate = np.zeros(self.X.shape[1], dtype=bool)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def feature_kinds(self) -> list[str]:
        return [
            "continuous" if g < 0 else f"onehot({g})" for g in self.onehot_group
        ]

    def variables(self) -> list[tuple[str, list[int]]]:
        """Original variables in first-appearance order.

        A continuous column is its own variable; a one-hot group is one
        variable named by the part of its column names before '='.
        """
        out: list[tuple[str, list[int]]] = []
        seen: dict[int, int] = {}
        for j, g in enumerate(self.onehot_group):
            if g < 0:
                out.append((self.feature_names[j], [j]))
            elif g in seen:
                out[seen[g]][1].append(j)
            else:
                seen[g] = len(out)
                out.append((self.feature_names[j].split("=", 1)[0], [j]))
        return out

    def validate(self) -> None:
        if self.X.size == 0:
            raise EmptyDatasetError("dataset has no rows or no columns")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite values in feature matrix")
        for j in range(self.p):
            if self.onehot_group[j] >= 0 or self.degenerate[j]:
                continue
            col = self.X[:, j]
            if abs(col.mean()) > 1e-9:
                raise ValueError(f"column {self.feature_names[j]} not centered")
            if self.n > 1 and abs(col.var(ddof=1) - 1.0) > 1e-6:
                raise ValueError(f"column {self.feature_names[j]} not unit variance")
        for _, cols in self.variables():
            if len(cols) > 1 or (cols and self.onehot_group[cols[0]] >= 0):
                sums = self.X[:, cols].sum(axis=1)
                if not np.all(sums == 1.0):
                    raise ValueError("one-hot group rows do not sum to exactly 1")


def _standardize_column(col: np.ndarray) -> tuple[np.ndarray, bool]:
    """Center/scale to unit sample variance; constant columns become zeros."""
    mean = col.mean()
    sd = col.std(ddof=1) if col.shape[0] > 1 else 0.0
    if sd == 0.0 or not np.isfinite(sd):
        return np.zeros_like(col), True
    return (col - mean) / sd, False


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_SENTINELS


def _try_floats(cells: list[str]) -> np.ndarray | None:
    out = np.empty(len(cells), dtype=np.float64)
    for i, c in enumerate(cells):
        if _is_missing(c):
            out[i] = np.nan
            continue
        try:
            out[i] = float(c)
        except ValueError:
            return None
    return out


def load_csv(
    path, label_column: str, task: str = "auto"
) -> tuple[RawTable, LabelVector]:
    """Parse a headered CSV into raw feature columns and a label vector.

    Numeric columns (every non-missing cell parses as float) stay numeric;
    anything else is kept categorical pending one-hot encoding. Empty cells
    and "NA" (case-insensitive) are missing. task="auto" resolves to
    classification when the label column is non-numeric or has at most 20
    distinct values, else regression; an explicit task always wins.
    """
    if task not in ("auto", "classification", "regression"):
        raise ValueError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path}: no header row")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise RaggedRowError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise EmptyDatasetError(f"{path}: header but no data rows")
    if label_column not in header:
        raise MissingColumnError(f"{path}: no column named {label_column!r}")

    label_idx = header.index(label_column)
    columns: list[RawColumn] = []
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        cells = [r[j] for r in rows]
        floats = _try_floats(cells)
        if floats is not None:
            columns.append(RawColumn(name, True, floats=floats))
        else:
            columns.append(
                RawColumn(
                    name,
                    False,
                    strings=[None if _is_missing(c) else c for c in cells],
                )
            )
    raw = RawTable(columns, len(rows))

    label_cells = [r[label_idx] for r in rows]
    label_floats = _try_floats(label_cells)
    if task == "auto":
        if label_floats is None:
            task = "classification"
        else:
            distinct = np.unique(label_floats[~np.isnan(label_floats)])
            task = "classification" if distinct.size <= 20 else "regression"

    if task == "regression":
        if label_floats is None:
            raise ValueError(f"label column {label_column!r} is not numeric")
        labels = LabelVector("regression", label_floats)
    else:
        if label_floats is not None:
            nonmiss = ~np.isnan(label_floats)
            classes = np.unique(label_floats[nonmiss])
            values = np.full(len(rows), -1, dtype=np.int64)
            values[nonmiss] = np.searchsorted(classes, label_floats[nonmiss])
            names = [f"{c:.12g}" for c in classes]
        else:
            nonmiss = [not _is_missing(c) for c in label_cells]
            classes = sorted({c for c, ok in zip(label_cells, nonmiss) if ok})
            index = {c: i for i, c in enumerate(classes)}
            values = np.array(
                [index[c] if ok else -1 for c, ok in zip(label_cells, nonmiss)],
                dtype=np.int64,
            )
            names = list(classes)
        labels = LabelVector("classification", values, len(names), names)
    return raw, labels


def preprocess(
    raw: RawTable, labels: LabelVector, missing_policy: str = "drop_rows"
) -> tuple[Dataset, LabelVector]:
    """Impute or drop missing values, one-hot encode, standardize.

    drop_rows removes any row with a missing feature or label;
    impute_zero_none replaces missing numerics with 0 and missing
    categoricals with the literal category "none" before standardization
    (rows with a missing label are still dropped). Returns the encoded
    Dataset and the row-aligned labels; classification indices are
    re-mapped to a contiguous range if row drops removed a class.
    """
    if missing_policy not in ("drop_rows", "impute_zero_none"):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    if raw.n == 0 or not raw.columns:
        raise EmptyDatasetError("raw table has no rows or no columns")
    if labels.n != raw.n:
        raise ValueError("label length does not match raw table")

    if labels.task == "classification":
        label_missing = labels.values < 0
    else:
        label_missing = np.isnan(labels.values)
    if missing_policy == "drop_rows":
        missing = label_missing.copy()
        for col in raw.columns:
            missing |= col.missing_mask()
        keep = np.flatnonzero(~missing)
    else:
        keep = np.flatnonzero(~label_missing)
    if keep.size == 0:
        raise EmptyDatasetError("all rows dropped by missing-value handling")

    encoded: list[np.ndarray] = []
    names: list[str] = []
    groups: list[int] = []
    degenerate: list[bool] = []
    next_group = 0
    for col in raw.columns:
        if col.numeric:
            vals = col.floats[keep]
            if missing_policy == "impute_zero_none":
                vals = np.where(np.isnan(vals), 0.0, vals)
            std, degen = _standardize_column(vals)
            encoded.append(std)
            names.append(col.name)
            groups.append(-1)
            degenerate.append(degen)
        else:
            cells = [col.strings[i] for i in keep]
            if missing_policy == "impute_zero_none":
                cells = ["none" if c is None else c for c in cells]
            cats = sorted(set(cells))
            gid = next_group
            next_group += 1
            for cat in cats:
                encoded.append(
                    np.array([1.0 if c == cat else 0.0 for c in cells])
                )
                names.append(f"{col.name}={cat}")
                groups.append(gid)
                degenerate.append(False)

    ds = Dataset(
        np.column_stack(encoded),
        names,
        np.array(groups, dtype=np.int32),
        np.array(degenerate, dtype=bool),
    )
    out_labels = labels.take(keep)
    if out_labels.task == "classification":
        present = np.unique(out_labels.values)
        if present.size != out_labels.n_classes:
            remap = {int(c): i for i, c in enumerate(present)}
            out_labels.values = np.array(
                [remap[int(v)] for v in out_labels.values], dtype=np.int64
            )
            if out_labels.class_labels is not None:
                out_labels.class_labels = [
                    out_labels.class_labels[int(c)] for c in present
                ]
            out_labels.n_classes = present.size
    ds.validate()
    out_labels.validate()
    return ds, out_labels


def noise_columns(n: int, q: int, seed: RandomSeed) -> tuple[np.ndarray, np.ndarray]:
    """Draw the raw (pre-standardization) noise block: q unit-variance
    Gaussian columns whose means are uniform on [-1, 1]."""
    rng = seed.rng("noise-augment")
    means = rng.uniform(-1.0, 1.0, size=q)
    cols = rng.standard_normal((n, q)) + means
    return means, cols


def noise_augment(ds: Dataset, q: int, seed: RandomSeed) -> Dataset:
    """Append q Gaussian noise columns and re-standardize continuous columns.

    One-hot groups are left binary so their row-sum invariant holds; q=0
    returns the input unchanged.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    if q == 0:
        return ds
    _, cols = noise_columns(ds.n, q, seed)
    X = np.empty((ds.n, ds.p + q))
    degenerate = np.concatenate([ds.degenerate, np.zeros(q, dtype=bool)])
    for j in range(ds.p):
        if ds.onehot_group[j] >= 0 or ds.degenerate[j]:
            X[:, j] = ds.X[:, j]
        else:
            X[:, j], degenerate[j] = _standardize_column(ds.X[:, j])
    for k in range(q):
        X[:, ds.p + k], degenerate[ds.p + k] = _standardize_column(cols[:, k])
    width = len(str(q))
    names = list(ds.feature_names) + [
        f"noise_{k + 1:0{width}d}" for k in range(q)
    ]
    groups = np.concatenate(
        [ds.onehot_group, np.full(q, -1, dtype=np.int32)]
    )
    out = Dataset(X, names, groups, degenerate)
    out.validate()
    return out


def dataset_to_csv(
    ds: Dataset, path, labels: LabelVector | None = None, label_name: str = "label"
) -> None:
    """Write the encoded matrix back out, mirroring the input CSV format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(ds.feature_names)
        if labels is not None:
            header.append(label_name)
        writer.writerow(header)
        for i in range(ds.n):
            row = [f"{v:.12g}" for v in ds.X[i]]
            if labels is not None:
                if labels.task == "classification" and labels.class_labels:
                    row.append(labels.class_labels[int(labels.values[i])])
                else:
                    row.append(f"{labels.values[i]:.12g}")
            writer.writerow(row)
