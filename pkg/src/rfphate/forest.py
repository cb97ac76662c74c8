"""CART random forests with out-of-bag error, permutation importance, and
the OOB proximity kernel used as the supervised similarity measure.

Trees are grown fully by default (classification) with per-tree RNG
streams derived from the master seed, so a forest is a pure function of
(data, labels, params) regardless of scheduling.
"""

import csv
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._treebuild import accumulate_pairs, apply_tree, build_tree, tree_error
from .core import Dataset, LabelVector, RandomSeed

_MAGIC = b"RFPH"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Training knobs. mtry/min_node_size of None resolve at fit time:
    mtry = floor(sqrt(p)) for classification, max(1, p // 3) for
    regression; min_node_size = 1 / 5 respectively."""

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    seed: RandomSeed = RandomSeed(0)


@dataclass
class Tree:
    """Node arrays of one grown tree; feature == -1 marks a leaf and the
    node index doubles as the leaf id."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        apply_tree(self.feature, self.threshold, self.left, self.right, X, out)
        return out


@dataclass
class Forest:
    trees: list[Tree]
    in_bag: np.ndarray  # (T, n) int32 bootstrap draw counts
    params: ForestParams  # with mtry/min_node_size resolved
    task: str
    n_classes: int
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_rows(self) -> int:
        return self.in_bag.shape[1]

    def oob_mask(self) -> np.ndarray:
        return self.in_bag == 0


@dataclass
class ProximityKernel:
    """Symmetric OOB co-occurrence kernel: K[i, j] is the fraction of trees
    where i and j were both out of bag and shared a leaf; diagonal is 1."""

    K: np.ndarray
    coob_counts: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def never_cooob(self) -> np.ndarray:
        """Off-diagonal pairs that were never jointly out of bag."""
        mask = self.coob_counts == 0
        np.fill_diagonal(mask, False)
        return mask

    def validate(self) -> None:
        if not np.array_equal(self.K, self.K.T):
            raise ValueError("proximity kernel not exactly symmetric")
        if not np.all(np.diag(self.K) == 1.0):
            raise ValueError("proximity diagonal not exactly 1")
        if self.K.min() < 0.0 or self.K.max() > 1.0:
            raise ValueError("proximity entries outside [0, 1]")


def _encode_labels(y: LabelVector) -> np.ndarray:
    return y.values.astype(np.float64)


def resolve_params(params: ForestParams, p: int, task: str) -> ForestParams:
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = params.mtry
    if mtry is None:
        mtry = int(np.sqrt(p)) if task == "classification" else max(1, p // 3)
        mtry = max(1, mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry {mtry} outside [1, {p}]")
    min_node = params.min_node_size
    if min_node is None:
        min_node = 1 if task == "classification" else 5
    if min_node < 1:
        raise ValueError("min_node_size must be >= 1")
    return replace(params, mtry=mtry, min_node_size=min_node)


def grow_tree(
    X: np.ndarray,
    y_enc: np.ndarray,
    boot: np.ndarray,
    mtry: int,
    min_node_size: int,
    n_classes: int,
    is_classif: bool,
    tree_seed: int,
) -> Tree:
    """Grow a single tree on an explicit bootstrap (exposed for oracle tests)."""
    arrays = build_tree(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y_enc, dtype=np.float64),
        np.ascontiguousarray(boot, dtype=np.int64),
        mtry,
        max(2, min_node_size),
        max(1, n_classes),
        is_classif,
        np.uint64(tree_seed),
    )
    return Tree(*arrays)


def train_forest(ds: Dataset, y: LabelVector, params: ForestParams) -> Forest:
    """Fit a forest of fully grown CART trees on bootstrap samples.

    Each tree draws its own bootstrap (n draws with replacement) and split
    randomness from streams derived from (seed, tree index), making the
    result bit-identical across runs and thread counts.
    """
    if ds.n < 2:
        raise ValueError("need at least 2 rows to train")
    if y.n != ds.n:
        raise ValueError("label length does not match dataset")
    y.validate()
    params = resolve_params(params, ds.p, y.task)
    is_classif = y.task == "classification"
    y_enc = _encode_labels(y)

    trees: list[Tree] = []
    in_bag = np.zeros((params.n_trees, ds.n), dtype=np.int32)
    for t in range(params.n_trees):
        boot = params.seed.rng("bootstrap", t).integers(0, ds.n, size=ds.n)
        in_bag[t] = np.bincount(boot, minlength=ds.n)
        trees.append(
            grow_tree(
                ds.X,
                y_enc,
                boot,
                params.mtry,
                params.min_node_size,
                y.n_classes,
                is_classif,
                params.seed.uint64("splits", t),
            )
        )
    return Forest(trees, in_bag, params, y.task, y.n_classes, ds.p)


def predict(forest: Forest, x: np.ndarray) -> float | int:
    """Single-row prediction: majority vote (ties toward the smallest class
    index) or mean of tree predictions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise ValueError(f"expected row of length {forest.n_features}")
    preds = predict_rows(forest, x[None, :])
    return int(preds[0]) if forest.task == "classification" else float(preds[0])


def predict_rows(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ValueError(f"expected matrix with {forest.n_features} columns")
    if forest.task == "classification":
        votes = np.zeros((X.shape[0], forest.n_classes), dtype=np.int64)
        for tree in forest.trees:
            cls = tree.value[tree.apply(X)].astype(np.int64)
            votes[np.arange(X.shape[0]), cls] += 1
        return votes.argmax(axis=1)
    total = np.zeros(X.shape[0])
    for tree in forest.trees:
        total += tree.value[tree.apply(X)]
    return total / forest.n_trees


def oob_votes(forest: Forest, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-row OOB aggregate: (votes (n, C) or sums/counts, coverage count)."""
    oob = forest.oob_mask()
    covered = oob.sum(axis=0)
    if forest.task == "classification":
        agg = np.zeros((ds.n, forest.n_classes), dtype=np.int64)
        for t, tree in enumerate(forest.trees):
            rows = np.flatnonzero(oob[t])
            if rows.size == 0:
                continue
            cls = tree.value[tree.apply(ds.X[rows])].astype(np.int64)
            np.add.at(agg, (rows, cls), 1)
    else:
        agg = np.zeros(ds.n)
        for t, tree in enumerate(forest.trees):
            rows = np.flatnonzero(oob[t])
            if rows.size == 0:
                continue
            agg[rows] += tree.value[tree.apply(ds.X[rows])]
    return agg, covered


def oob_error(forest: Forest, ds: Dataset, y: LabelVector) -> float:
    """Misclassification rate (or MSE) of per-row OOB aggregate predictions.

    Rows that were never out of bag are excluded with a warning; if no row
    has OOB coverage the estimate is undefined and an error is raised.
    """
    if ds.n != forest.n_rows:
        raise ValueError("dataset row count does not match forest")
    agg, covered = oob_votes(forest, ds)
    keep = covered > 0
    if not np.any(keep):
        raise ValueError("no row is out of bag in any tree")
    if not np.all(keep):
        warnings.warn(
            f"{int(np.sum(~keep))} rows never out of bag; excluded from OOB error",
            RuntimeWarning,
            stacklevel=2,
        )
    if forest.task == "classification":
        pred = agg[keep].argmax(axis=1)
        return float(np.mean(pred != y.values[keep]))
    pred = agg[keep] / covered[keep]
    return float(np.mean((pred - y.values[keep]) ** 2))


def permutation_importance(
    forest: Forest,
    ds: Dataset,
    y: LabelVector,
    seed: RandomSeed,
    by: str = "variable",
) -> "Importance":
    """Mean increase of per-tree OOB error after permuting each variable.

    For every tree: compute its OOB error, permute one variable among that
    tree's OOB rows, recompute, and record the increase; the importance is
    the mean increase over trees. by="variable" permutes all columns of a
    one-hot group jointly with a single permutation (the factor-level
    measure the rankings use); by="column" scores encoded columns
    individually.
    """
    if ds.n != forest.n_rows or ds.p != forest.n_features:
        raise ValueError("dataset shape does not match forest")
    if by == "variable":
        targets = ds.variables()
    elif by == "column":
        targets = [(name, [j]) for j, name in enumerate(ds.feature_names)]
    else:
        raise ValueError(f"unknown granularity {by!r}")

    is_classif = forest.task == "classification"
    y_enc = _encode_labels(y)
    oob = forest.oob_mask()
    masks = np.zeros((len(targets), ds.p), dtype=bool)
    for v, (_, cols) in enumerate(targets):
        masks[v, cols] = True
    no_mask = np.zeros(ds.p, dtype=bool)

    totals = np.zeros(len(targets))
    used_trees = 0
    for t, tree in enumerate(forest.trees):
        rows = np.flatnonzero(oob[t]).astype(np.int64)
        if rows.size == 0:
            continue
        used_trees += 1
        base = tree_error(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value,
            ds.X, y_enc, rows, rows, no_mask, is_classif,
        )
        rng = seed.rng("importance", t)
        for v in range(len(targets)):
            src = rows[rng.permutation(rows.size)]
            permuted = tree_error(
                tree.feature, tree.threshold, tree.left, tree.right, tree.value,
                ds.X, y_enc, rows, src, masks[v], is_classif,
            )
            totals[v] += permuted - base
    if used_trees == 0:
        raise ValueError("no tree has OOB rows")
    return Importance([name for name, _ in targets], totals / used_trees)


@dataclass
class Importance:
    names: list[str]
    values: np.ndarray

    def ranking(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda i: (-self.values[i], i))
        return [(self.names[i], float(self.values[i])) for i in order]


def compute_proximities(
    forest: Forest, ds: Dataset, denominator: str = "cooob"
) -> ProximityKernel:
    """OOB proximity kernel of the trained forest.

    K[i, j] = (# trees where i, j both OOB and in the same leaf) divided by
    the co-OOB tree count (denominator="cooob", the standard estimate) or
    by the total tree count (denominator="n_trees", the literal-proportion
    variant kept for comparison). Pairs never jointly OOB get 0 and are
    flagged via coob_counts; the diagonal is forced to exactly 1.
    """
    if ds.n != forest.n_rows or ds.p != forest.n_features:
        raise ValueError("dataset shape does not match forest")
    if denominator not in ("cooob", "n_trees"):
        raise ValueError(f"unknown denominator {denominator!r}")
    n = ds.n
    same = np.zeros((n, n), dtype=np.int64)
    coob = np.zeros((n, n), dtype=np.int64)
    oob = forest.oob_mask()
    for t, tree in enumerate(forest.trees):
        leaf_ids = tree.apply(ds.X)
        accumulate_pairs(leaf_ids, np.flatnonzero(oob[t]).astype(np.int64), same, coob)

    K = np.zeros((n, n))
    upper = np.triu_indices(n, k=1)
    denom = coob[upper] if denominator == "cooob" else np.full(
        upper[0].shape, forest.n_trees, dtype=np.int64
    )
    vals = np.zeros(upper[0].shape)
    nz = denom > 0
    vals[nz] = same[upper][nz] / denom[nz]
    K[upper] = vals
    K = K + K.T
    np.fill_diagonal(K, 1.0)

    counts = coob + coob.T
    np.fill_diagonal(counts, oob.sum(axis=0))
    kern = ProximityKernel(K, counts.astype(np.int32))
    kern.validate()
    return kern


def proximity_to_csv(kern: ProximityKernel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"row_{j}" for j in range(kern.n)])
        for i in range(kern.n):
            writer.writerow([f"{v:.12g}" for v in kern.K[i]])


def save_forest(forest: Forest, path) -> None:
    """Versioned little-endian binary dump (magic "RFPH")."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<IBIIIIIQ",
                _FORMAT_VERSION,
                1 if forest.task == "classification" else 0,
                forest.n_classes,
                forest.n_trees,
                forest.n_rows,
                forest.n_features,
                forest.params.min_node_size,
                forest.params.seed.master & ((1 << 64) - 1),
            )
        )
        fh.write(struct.pack("<I", forest.params.mtry))
        fh.write(forest.in_bag.astype("<i4").tobytes())
        for tree in forest.trees:
            fh.write(struct.pack("<I", tree.n_nodes))
            fh.write(tree.feature.astype("<i4").tobytes())
            fh.write(tree.threshold.astype("<f8").tobytes())
            fh.write(tree.left.astype("<i4").tobytes())
            fh.write(tree.right.astype("<i4").tobytes())
            fh.write(tree.value.astype("<f8").tobytes())


def load_forest(path) -> Forest:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a forest file (bad magic)")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {version}")
        is_classif, n_classes, n_trees, n_rows, n_features, min_node, master = (
            struct.unpack("<BIIIIIQ", fh.read(29))
        )
        mtry = struct.unpack("<I", fh.read(4))[0]
        in_bag = np.frombuffer(
            fh.read(4 * n_trees * n_rows), dtype="<i4"
        ).reshape(n_trees, n_rows).copy()
        trees = []
        for _ in range(n_trees):
            n_nodes = struct.unpack("<I", fh.read(4))[0]
            feature = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4").copy()
            thresh = np.frombuffer(fh.read(8 * n_nodes), dtype="<f8").copy()
            left = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4").copy()
            right = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4").copy()
            value = np.frombuffer(fh.read(8 * n_nodes), dtype="<f8").copy()
            trees.append(Tree(feature, thresh, left, right, value))
    params = ForestParams(n_trees, mtry, min_node, RandomSeed(master))
    task = "classification" if is_classif else "regression"
    return Forest(trees, in_bag, params, task, n_classes, n_features)
