"""Diffusion over the proximity kernel: Markov normalization, entropy-based
time selection, operator powering, and potential distances."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from threadpoolctl import threadpool_limits

from .forest import ProximityKernel

#: default number of diffusion steps scanned for the entropy knee
DEFAULT_T_MAX = 100

#: hard cap on the requested diffusion time
T_CAP = 1 << 20


def _as_kernel_matrix(K) -> np.ndarray:
    if isinstance(K, ProximityKernel):
        K = K.K
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel must be a square matrix")
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel has non-finite entries")
    return K


def row_normalize(K) -> np.ndarray:
    """Markov transition matrix: divide each kernel row by its sum."""
    K = _as_kernel_matrix(K)
    sums = K.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("kernel row sums must be positive")
    return K / sums[:, None]


def spectrum(K) -> np.ndarray:
    """Eigenvalues of the transition matrix, sorted descending.

    Computed once from the symmetric conjugate D^{-1/2} K D^{-1/2}, which
    shares the eigenvalues of the row-normalized operator, so powering the
    operator never requires a fresh decomposition.
    """
    K = _as_kernel_matrix(K)
    if not np.allclose(K, K.T, rtol=0.0, atol=1e-12):
        raise ValueError("kernel must be symmetric")
    sums = K.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("kernel row sums must be positive")
    inv_sqrt = 1.0 / np.sqrt(sums)
    conj = K * inv_sqrt[:, None] * inv_sqrt[None, :]
    conj = (conj + conj.T) / 2.0
    with threadpool_limits(limits=1, user_api="blas"):
        eigvals = np.linalg.eigvalsh(conj)
    return eigvals[::-1].copy()


def von_neumann_entropy(eigvals: np.ndarray, t: int) -> float:
    """Shannon entropy (natural log) of the normalized eigenvalue powers
    |lambda_i|^t, with 0 * ln 0 = 0."""
    if t < 1:
        raise ValueError("t must be >= 1")
    powered = np.abs(np.asarray(eigvals, dtype=np.float64)) ** t
    total = powered.sum()
    if total <= 0:
        raise ValueError("all-zero spectrum")
    eta = powered / total
    nz = eta > 0
    return float(-np.sum(eta[nz] * np.log(eta[nz])))


def vne_curve(eigvals: np.ndarray, t_max: int = DEFAULT_T_MAX) -> np.ndarray:
    """(t_max, 2) array of (t, H(t)) for t = 1..t_max."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    out = np.empty((t_max, 2))
    for i, t in enumerate(range(1, t_max + 1)):
        out[i] = (t, von_neumann_entropy(eigvals, t))
    return out


def save_vne_curve(path, eigvals: np.ndarray, t_max: int = DEFAULT_T_MAX) -> None:
    curve = vne_curve(eigvals, t_max)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "entropy"])
        for t, h in curve:
            writer.writerow([f"{int(t)}", f"{h:.12g}"])


def find_knee(values: np.ndarray, x: np.ndarray | None = None) -> int:
    """Index of the curve point farthest (perpendicular) from the chord
    joining the endpoints; first index on a flat curve."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 3:
        raise ValueError("need at least 3 points for knee detection")
    if x is None:
        x = np.arange(values.size, dtype=np.float64)
    else:
        x = np.asarray(x, dtype=np.float64)
    if values.max() - values.min() < 1e-12:
        return 0
    x1, y1 = x[0], values[0]
    x2, y2 = x[-1], values[-1]
    # |cross((p2-p1), (p-p1))| is proportional to the perpendicular distance
    dist = np.abs((y2 - y1) * x - (x2 - x1) * values + x2 * y1 - y2 * x1)
    return int(np.argmax(dist))


def select_t(eigvals: np.ndarray, t_max: int = DEFAULT_T_MAX) -> int:
    """Diffusion time at the entropy-decay knee (the transition from rapid
    to slow decay); 1 when the curve is constant."""
    if t_max < 3:
        raise ValueError("t_max must be >= 3")
    curve = vne_curve(eigvals, t_max)
    return int(curve[find_knee(curve[:, 1], curve[:, 0]), 0])


def matrix_power(P: np.ndarray, t: int) -> np.ndarray:
    """P^t by exponentiation-by-squaring, re-checked row-stochastic."""
    P = np.asarray(P, dtype=np.float64)
    if t < 1:
        raise ValueError("t must be >= 1")
    if t > T_CAP:
        raise ValueError(f"t={t} exceeds cap {T_CAP}")
    with threadpool_limits(limits=1, user_api="blas"):
        result: np.ndarray | None = None
        base = P.copy()
        k = t
        while k > 0:
            if k & 1:
                result = base.copy() if result is None else result @ base
            k >>= 1
            if k:
                base = base @ base
    drift = np.abs(result.sum(axis=1) - 1.0).max()
    if drift > 1e-8:
        raise ValueError(f"powered operator rows drifted from 1 by {drift:.3g}")
    return result


@dataclass
class DiffusionState:
    """Row-stochastic operator, its spectrum, the selected time, and P^t."""

    P: np.ndarray
    spectrum: np.ndarray
    t: int
    Pt: np.ndarray

    def validate(self) -> None:
        if np.abs(self.P.sum(axis=1) - 1.0).max() > 1e-9 or self.P.min() < 0:
            raise ValueError("P is not row-stochastic")
        if abs(self.spectrum[0] - 1.0) > 1e-9:
            raise ValueError("leading eigenvalue is not 1")
        if np.abs(self.spectrum).max() > 1.0 + 1e-9:
            raise ValueError("eigenvalue modulus exceeds 1")
        if np.abs(self.Pt.sum(axis=1) - 1.0).max() > 1e-8:
            raise ValueError("P^t is not row-stochastic")


def diffuse(K, t_override: int | None = None, t_max: int = DEFAULT_T_MAX) -> DiffusionState:
    """Normalize the kernel, pick t from the entropy knee (unless
    overridden), and power the operator."""
    P = row_normalize(K)
    eigvals = spectrum(K)
    t = int(t_override) if t_override is not None else select_t(eigvals, t_max)
    if t < 1:
        raise ValueError("diffusion time must be >= 1")
    state = DiffusionState(P, eigvals, t, matrix_power(P, t))
    state.validate()
    return state


@dataclass
class PotentialDistances:
    """Pairwise Euclidean distances between transformed rows of P^t."""

    Dt: np.ndarray
    transform: str  # "log(eps=...)" | "sqrt"


def potential_distances(
    Pt: np.ndarray, transform: str = "log", eps: float = 1e-12
) -> PotentialDistances:
    """Distance between diffused probability rows under -log (floored at
    eps, since disconnected graphs yield exact zeros) or sqrt."""
    Pt = np.asarray(Pt, dtype=np.float64)
    if np.abs(Pt.sum(axis=1) - 1.0).max() > 1e-8:
        raise ValueError("operator rows must sum to 1")
    if transform == "log":
        if eps <= 0:
            raise ValueError("eps must be positive for the log transform")
        U = -np.log(np.maximum(Pt, eps))
        label = f"log(eps={eps:g})"
    elif transform == "sqrt":
        U = np.sqrt(Pt)
        label = "sqrt"
    else:
        raise ValueError(f"unknown transform {transform!r}")
    Dt = squareform(pdist(U))
    return PotentialDistances(Dt, label)
