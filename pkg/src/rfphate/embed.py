"""Low-dimensional embeddings: classical MDS, SMACOF metric MDS, the full
supervised diffusion pipeline, and the proximity-kernel Isomap/MDS
baselines."""

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import (
    connected_components,
    csgraph_from_masked,
    shortest_path,
)
from threadpoolctl import threadpool_limits

from .core import Dataset, LabelVector
from .diffusion import DEFAULT_T_MAX, diffuse, potential_distances
from .forest import ForestParams, ProximityKernel, compute_proximities, train_forest


@dataclass
class Embedding:
    """Coordinates plus provenance: how they were produced, the diffusion
    time (supervised pipeline only), final raw stress (metric MDS only),
    and how many negative classical-MDS eigenvalues were clamped."""

    Y: np.ndarray
    method: str  # rfphate | classical_mds | metric_mds | isomap_prox | mds_prox
    stress: float | None = None
    t_used: int | None = None
    clamped: int = 0

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[1]


def _check_distance_matrix(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if np.abs(D - D.T).max() > 1e-9:
        raise ValueError("distance matrix must be symmetric")
    if np.abs(np.diag(D)).max() > 1e-12:
        raise ValueError("distance matrix must have a zero diagonal")
    return D


def classical_mds(D: np.ndarray, m: int) -> Embedding:
    """Torgerson scaling: eigendecompose the double-centered squared
    distances and scale the top-m eigenvectors by sqrt(eigenvalue).

    Negative eigenvalues (non-Euclidean input) are clamped to zero and
    counted. Sign convention: each coordinate column's largest-magnitude
    entry is positive, so output is reproducible across eigensolvers up to
    rotations inside repeated-eigenvalue blocks.
    """
    D = _check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must be in [1, {n - 1}]")
    D2 = D * D
    row = D2.mean(axis=1)
    B = -0.5 * (D2 - row[:, None] - row[None, :] + D2.mean())
    B = (B + B.T) / 2.0
    with threadpool_limits(limits=1, user_api="blas"):
        eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(eigvals)[::-1][:m]
    top = eigvals[order]
    # the centering null eigenvalue lands at +/-1e-16; only count dimensions
    # that are negative beyond numerical noise
    tol = 1e-12 * max(float(np.abs(eigvals).max()), 1.0)
    clamped = int(np.sum(top < -tol))
    Y = eigvecs[:, order] * np.sqrt(np.maximum(top, 0.0))
    for j in range(m):
        i_star = int(np.argmax(np.abs(Y[:, j])))
        if Y[i_star, j] < 0:
            Y[:, j] = -Y[:, j]
    return Embedding(Y, "classical_mds", clamped=clamped)


def _pairwise(Y: np.ndarray) -> np.ndarray:
    diff = Y[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def raw_stress(D: np.ndarray, Y: np.ndarray) -> float:
    """Sum over unordered pairs of squared residuals between target and
    embedded distances."""
    res = D - _pairwise(Y)
    return float(np.sum(np.triu(res, k=1) ** 2))


def smacof(
    D: np.ndarray,
    init: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Stress majorization via the Guttman transform.

    Iterates until the relative stress decrease drops below tol or
    max_iter; returns (coordinates, final stress, per-iteration stress
    history). Stress is guaranteed non-increasing.
    """
    D = _check_distance_matrix(D)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = D.shape[0]
    Y = np.array(init, dtype=np.float64, copy=True)
    if Y.shape[0] != n:
        raise ValueError("init row count does not match D")
    d = _pairwise(Y)
    sigma = float(np.sum(np.triu(D - d, k=1) ** 2))
    history = [sigma]
    with threadpool_limits(limits=1, user_api="blas"):
        for _ in range(max_iter):
            if sigma == 0.0:
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(d > 0, D / d, 0.0)
            np.fill_diagonal(ratio, 0.0)
            B = -ratio
            np.fill_diagonal(B, ratio.sum(axis=1))
            Y = (B @ Y) / n
            d = _pairwise(Y)
            sigma_new = float(np.sum(np.triu(D - d, k=1) ** 2))
            if not np.isfinite(sigma_new):
                raise ValueError("non-finite stress during majorization")
            history.append(sigma_new)
            if (sigma - sigma_new) / sigma < tol:
                sigma = sigma_new
                break
            sigma = sigma_new
    return Y, sigma, np.asarray(history)


def metric_mds(
    D: np.ndarray,
    m: int,
    init: Embedding | np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> Embedding:
    """SMACOF refinement of an initial configuration."""
    Y0 = init.Y if isinstance(init, Embedding) else np.asarray(init, dtype=np.float64)
    if Y0.ndim != 2 or Y0.shape[1] != m:
        raise ValueError(f"init must be n x {m}")
    Y, sigma, _ = smacof(D, Y0, tol=tol, max_iter=max_iter)
    return Embedding(Y, "metric_mds", stress=sigma)


def rf_phate(
    ds: Dataset,
    y: LabelVector,
    m: int = 2,
    params: ForestParams | None = None,
    t_override: int | None = None,
    t_max: int = DEFAULT_T_MAX,
    transform: str = "log",
    eps: float = 1e-12,
    mds_tol: float = 1e-6,
    mds_max_iter: int = 1000,
) -> Embedding:
    """The full supervised pipeline: forest proximities -> Markov
    normalization -> entropy-selected diffusion -> potential distances ->
    classical MDS init -> metric MDS.

    With a fixed seed (and t_override) the result is bit-identical across
    runs.
    """
    if not 1 <= m < ds.p:
        raise ValueError(f"m must be in [1, {ds.p - 1}]")
    params = params or ForestParams()
    forest = train_forest(ds, y, params)
    kern = compute_proximities(forest, ds)
    return embed_kernel(
        kern, m,
        t_override=t_override, t_max=t_max, transform=transform, eps=eps,
        mds_tol=mds_tol, mds_max_iter=mds_max_iter,
    )


def embed_kernel(
    kern: ProximityKernel,
    m: int,
    t_override: int | None = None,
    t_max: int = DEFAULT_T_MAX,
    transform: str = "log",
    eps: float = 1e-12,
    mds_tol: float = 1e-6,
    mds_max_iter: int = 1000,
) -> Embedding:
    """Diffusion + potential-distance + MDS stages applied to an existing
    proximity kernel (lets callers reuse one forest across settings)."""
    state = diffuse(kern, t_override=t_override, t_max=t_max)
    disconnected = kern.never_cooob() & (state.Pt == 0)
    if transform == "log" and np.any(disconnected):
        warnings.warn(
            f"{int(disconnected.sum()) // 2} never-co-OOB pairs remain "
            "unreachable after diffusion; log potentials are floored at eps",
            RuntimeWarning,
            stacklevel=2,
        )
    pot = potential_distances(state.Pt, transform=transform, eps=eps)
    init = classical_mds(pot.Dt, m)
    refined = metric_mds(pot.Dt, m, init, tol=mds_tol, max_iter=mds_max_iter)
    return Embedding(
        refined.Y, "rfphate",
        stress=refined.stress, t_used=state.t, clamped=init.clamped,
    )


def _prox_dissimilarity(K) -> np.ndarray:
    K = K.K if isinstance(K, ProximityKernel) else np.asarray(K, dtype=np.float64)
    return np.sqrt(np.maximum(1.0 - K, 0.0))


def isomap_prox(K, n_neighbors: int, m: int) -> Embedding:
    """Isomap on the proximity dissimilarity d = sqrt(1 - K).

    Neighbor lists are the n_neighbors nearest points by d including the
    point itself (distance 0 occupies one slot; ties beyond that break
    toward the smallest row index); the graph is the symmetric union, and
    geodesics come from Dijkstra per source.
    """
    d = _prox_dissimilarity(K)
    n = d.shape[0]
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must be in [1, {n - 1}]")
    if not 2 <= n_neighbors <= n:
        raise ValueError(f"n_neighbors must be in [2, {n}]")
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = np.lexsort((np.arange(n), d[i]))[:n_neighbors]
        for j in order:
            if j != i:
                adj[i, j] = True
    adj |= adj.T  # symmetric union of directed k-NN edges
    # masked construction keeps zero-weight edges (identical points) alive
    graph = csgraph_from_masked(np.ma.masked_array(d, mask=~adj))
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp > 1:
        sizes = np.bincount(labels)
        detail = ", ".join(
            f"component {c}: {sizes[c]} points" for c in range(n_comp)
        )
        raise ValueError(f"k-NN proximity graph is disconnected ({detail})")
    geo = shortest_path(graph, method="D", directed=False)
    emb = classical_mds(geo, m)
    return Embedding(emb.Y, "isomap_prox", clamped=emb.clamped)


def mds_prox(K, m: int, metric: bool = False) -> Embedding:
    """Classical MDS on d = sqrt(1 - K), optionally refined by metric MDS."""
    d = _prox_dissimilarity(K)
    emb = classical_mds(d, m)
    if metric:
        refined = metric_mds(d, m, emb)
        return Embedding(refined.Y, "mds_prox", stress=refined.stress)
    return Embedding(emb.Y, "mds_prox", clamped=emb.clamped)


def embedding_to_csv(
    emb: Embedding,
    path,
    labels: LabelVector | None = None,
    extra: dict[str, np.ndarray] | None = None,
) -> None:
    """dim_1..dim_m columns plus optional label/selected-variable columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"dim_{j + 1}" for j in range(emb.m)]
        if labels is not None:
            header.append("label")
        extra = extra or {}
        header.extend(extra.keys())
        writer.writerow(header)
        for i in range(emb.n):
            row = [f"{v:.12g}" for v in emb.Y[i]]
            if labels is not None:
                if labels.task == "classification" and labels.class_labels:
                    row.append(labels.class_labels[int(labels.values[i])])
                else:
                    row.append(f"{labels.values[i]:.12g}")
            row.extend(f"{col[i]:.12g}" for col in extra.values())
            writer.writerow(row)


def read_embedding_csv(path) -> np.ndarray:
    """Read back the dim_* columns of an embedding CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty embedding file")
        dims = [j for j, name in enumerate(header) if name.startswith("dim_")]
        if not dims:
            raise ValueError(f"{path}: no dim_* columns found")
        rows = [[float(r[j]) for j in dims] for r in reader]
    return np.asarray(rows, dtype=np.float64)
