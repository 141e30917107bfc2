"""Outlier-based source location on 2-D embeddings of motif fields, and the
Fourier-peak baseline it is compared against."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.signal import find_peaks

from .errors import InvalidInputError
from .simulate import Trajectory

CHEBYSHEV_K = 5.0


# ------------------------------------------------------------------ t-SNE


def _row_affinities(d2_row, perplexity, tol=1e-5, max_tries=50):
    """Gaussian conditional probabilities for one point whose entropy matches
    ``log(perplexity)``, by bisection on the precision ``beta``."""
    d2 = d2_row - d2_row.min()
    target = np.log(perplexity)
    lo, hi = -np.inf, np.inf
    beta = 1.0 / np.median(d2[d2 > 0]) if np.any(d2 > 0) else 1.0
    for _ in range(max_tries):
        p = np.exp(-d2 * beta)
        sp = p.sum()
        H = np.log(sp) + beta * np.dot(d2, p) / sp
        diff = H - target
        if abs(diff) < tol:
            break
        if diff > 0:
            lo = beta
            beta = beta * 2 if hi == np.inf else (beta + hi) / 2
        else:
            hi = beta
            beta = beta / 2 if lo == -np.inf else (beta + lo) / 2
    return p / sp


def joint_probabilities(distances: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinity matrix ``P`` from a precomputed distance matrix."""
    D2 = np.asarray(distances, dtype=float) ** 2
    n = len(D2)
    P = np.zeros((n, n))
    for i in range(n):
        others = np.r_[0:i, i + 1 : n]
        P[i, others] = _row_affinities(D2[i, others], perplexity)
    P = P + P.T
    return P / P.sum()


def _check_distances(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidInputError("distance matrix must be square")
    if not np.all(np.isfinite(D)) or np.any(D < 0):
        raise InvalidInputError("distances must be finite and non-negative")
    if not np.allclose(D, D.T, rtol=1e-12, atol=1e-12) or np.any(np.diag(D) != 0):
        raise InvalidInputError("distance matrix must be symmetric with zero diagonal")
    return D


def tsne(
    distances, perplexity: float = 30.0, iterations: int = 1000, seed: int = 42,
    learning_rate: float = 200.0, exaggeration: float = 12.0, exaggeration_iters: int = 250,
) -> np.ndarray:
    """Exact t-SNE on a precomputed distance matrix; raw (unnormalized) 2-D output.

    Momentum 0.5 then 0.8 after the exaggeration phase, with the usual
    per-coordinate adaptive gains (floor 0.01).
    """
    D = _check_distances(distances)
    n = len(D)
    if n < 3:
        raise InvalidInputError(f"t-SNE needs at least 3 points, got {n}")
    if not 1.0 <= perplexity < n - 1:
        raise InvalidInputError(f"perplexity infeasible: need 1 <= perplexity < N-1 = {n - 1}, got {perplexity}")
    if not np.any(D > 0):
        return np.zeros((n, 2))

    P = joint_probabilities(D, perplexity)
    P = np.maximum(P, 1e-12)
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(iterations):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        sq = np.sum(Y * Y, axis=1)
        num = 1.0 / (1.0 + sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return Y


@dataclass(frozen=True)
class Embedding2D:
    points: np.ndarray  # (N, 2), each axis in [0, 1]
    seed: int | None = None
    perplexity: float | None = None
    iterations: int | None = None


def normalize_embedding(points) -> np.ndarray:
    """Per-axis min-max scaling to [0, 1]; constant axes become 0."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) < 1:
        raise InvalidInputError("need an (N, dims) array with N >= 1")
    lo = P.min(axis=0)
    span = P.max(axis=0) - lo
    out = np.zeros_like(P)
    ok = span > 0
    out[:, ok] = (P[:, ok] - lo[ok]) / span[ok]
    return out


def tsne_embed(distances, perplexity=30.0, iterations=1000, seed=42, normalize=True) -> Embedding2D:
    Y = tsne(distances, perplexity, iterations, seed)
    if normalize:
        Y = normalize_embedding(Y)
    return Embedding2D(Y, seed, perplexity, iterations)


# ---------------------------------------------------------- outlier rule


def average_distances(points) -> tuple[np.ndarray, np.ndarray]:
    """Mean Euclidean distance from each point to the others, and the full matrix."""
    P = np.asarray(points.points if isinstance(points, Embedding2D) else points, dtype=float)
    n = len(P)
    if n < 2:
        raise InvalidInputError("need at least two points")
    diff = P[:, None, :] - P[None, :, :]
    L = np.sqrt(np.sum(diff * diff, axis=-1))
    L = np.triu(L, k=1)
    L = L + L.T
    return L.sum(axis=1) / (n - 1), L


def chebyshev_threshold(avg, k: float = CHEBYSHEV_K) -> float:
    """``mean + k * std`` with the population standard deviation."""
    avg = np.asarray(avg, dtype=float)
    if len(avg) < 2:
        raise InvalidInputError("need at least two values")
    top = np.abs(avg).max()
    if top == 0 or np.ptp(avg) == 0:
        return float(avg[0])
    # work at unit scale so squared deviations of tiny values do not underflow
    z = avg / top
    return float((z.mean() + k * z.std()) * top)


def locate(avg, v_p: float) -> set[int]:
    return {int(i) for i in np.flatnonzero(np.asarray(avg) > v_p)}


@dataclass
class LocationReport:
    avg_distances: np.ndarray
    threshold: float
    outliers: list[int]
    distance_matrix: np.ndarray
    embedding: Embedding2D | None = None
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "avg_distances": [float(v) for v in self.avg_distances],
            "threshold": float(self.threshold),
            "outliers": list(self.outliers),
            "seed": self.seed,
            "params": self.params,
        }

    def write(self, json_path, embedding_csv=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if embedding_csv is not None and self.embedding is not None:
            write_embedding_csv(self.embedding, embedding_csv)


def write_embedding_csv(emb: Embedding2D, path) -> None:
    rows = np.column_stack([np.arange(len(emb.points)), emb.points])
    np.savetxt(path, rows, delimiter=",", header="node,x,y", comments="", fmt=["%d", "%.17g", "%.17g"])


def locate_from_distances(
    field_distances, perplexity=30.0, iterations=1000, seed=42, normalize=True, k=CHEBYSHEV_K,
) -> LocationReport:
    """Embed, average, threshold, flag."""
    emb = tsne_embed(field_distances, perplexity, iterations, seed, normalize)
    avg, L = average_distances(emb)
    v_p = chebyshev_threshold(avg, k)
    return LocationReport(
        avg, v_p, sorted(locate(avg, v_p)), L, emb, seed,
        {"perplexity": perplexity, "iterations": iterations, "normalize": normalize,
         "k": k, "std": "population"},
    )


# ---------------------------------------------------------------- Fourier


@dataclass(frozen=True)
class SpectrumSet:
    frequencies: np.ndarray
    magnitudes: np.ndarray  # (N, bins), jointly scaled so the global max is 1

    def write_csv(self, path) -> None:
        n = self.magnitudes.shape[0]
        header = "frequency," + ",".join(f"node_{i}" for i in range(n))
        np.savetxt(path, np.column_stack([self.frequencies, self.magnitudes.T]),
                   delimiter=",", header=header, comments="", fmt="%.17g")


def fourier_spectrum(traj: Trajectory | np.ndarray, dt: float | None = None) -> SpectrumSet:
    """One-sided DFT magnitudes of each mean-removed omega series."""
    if isinstance(traj, Trajectory):
        X, dt = traj.omega, traj.dt
    else:
        X = np.atleast_2d(np.asarray(traj, dtype=float))
    if X.shape[1] < 2:
        raise InvalidInputError("need at least two samples")
    X = X - X.mean(axis=1, keepdims=True)
    mag = np.abs(np.fft.rfft(X, axis=1))
    top = mag.max()
    if top > 0:
        mag = mag / top
    return SpectrumSet(np.fft.rfftfreq(X.shape[1], dt), mag)


class FourierVerdict(NamedTuple):
    candidates: list[int]
    ambiguous: bool
    peaks: list[dict]


def fourier_locate(spectra: SpectrumSet, dominance_ratio: float = 2.0, min_height: float = 0.5) -> FourierVerdict:
    """Flag the strongest node at each prominent peak of the cross-node envelope.

    A peak is ambiguous when the runner-up node's magnitude at that bin is
    within ``dominance_ratio`` of the leader's.
    """
    mag = spectra.magnitudes
    env = mag.max(axis=0)
    if env.max() <= 0:
        return FourierVerdict([], False, [])
    bins, _ = find_peaks(np.r_[0.0, env, 0.0], height=min_height * env.max())
    bins = bins - 1
    peaks, cands, ambiguous = [], set(), False
    for b in bins:
        col = mag[:, b]
        order = np.argsort(col)[::-1]
        lead, second = int(order[0]), int(order[1]) if len(order) > 1 else None
        ratio = float(col[lead] / col[second]) if second is not None and col[second] > 0 else np.inf
        amb = ratio < dominance_ratio
        ambiguous |= amb
        cands.add(lead)
        peaks.append({"frequency": float(spectra.frequencies[b]), "leader": lead,
                      "runner_up": second, "ratio": ratio, "ambiguous": bool(amb)})
    return FourierVerdict(sorted(cands), bool(ambiguous), peaks)
