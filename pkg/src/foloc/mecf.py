"""Motif embedding correlation fields (MECF).

Indexing convention
-------------------
Everything here is zero-based.  For a series ``x`` of length ``T`` with
embedding dimension ``m`` and delay ``tau`` the embedded series has
``R = T - (m-1)*tau`` rows, row ``t`` being ``x[t], x[t+tau], ...``.  The motif
starting at row ``s`` with displacement ``d`` stacks rows ``s, s+d, ...,
s+(n-1)*d``.  The correlation sequence at displacement ``d`` pairs motif ``s``
with motif ``s+d`` for ``s = 0 .. R-n*d-1``.  In one-based notation these are
``t = 1 .. R`` and ``s = 1 .. R-n*d``; shift every index by one.

The field stacks the sequences for ``d = 1 .. d_max`` as rows, zero-padded on
the right to the ``d = 1`` length ``C = R - n``, then adds its own 180-degree
rotation.

The per-displacement correlation loop is the hot spot.  A compiled kernel
(``foloc._kernels``) is used when importable; set ``FOLOC_PURE_PYTHON=1`` to
force the numpy fallback.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels_py
from .errors import DegenerateMotifError, InvalidInputError

DEFAULT_D_CEILING = 64

try:
    if os.environ.get("FOLOC_PURE_PYTHON") == "1":
        raise ImportError("pure-python backend forced")
    from ._kernels import correlation_stack as _compiled_stack
except ImportError:
    _compiled_stack = None

BACKEND = "cython" if _compiled_stack is not None else "python"


def get_kernel(backend: str | None = None):
    """Return the correlation-stack kernel for ``backend`` (default: best available)."""
    backend = backend or BACKEND
    if backend == "python":
        return _kernels_py.correlation_stack
    if backend == "cython":
        if _compiled_stack is None:
            raise ImportError("compiled kernel not built; run `pip install -e .`")
        return _compiled_stack
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class MECFParams:
    m: int = 3
    tau: int = 2
    n: int = 3
    d_max: int | str = "auto"
    d_ceiling: int | None = DEFAULT_D_CEILING

    def __post_init__(self):
        if self.m < 2 or self.tau < 1 or self.n < 2:
            raise InvalidInputError(f"need m >= 2, tau >= 1, n >= 2; got {self}")
        if self.d_max != "auto" and (not isinstance(self.d_max, int) or self.d_max < 1):
            raise InvalidInputError(f"d_max must be 'auto' or a positive int, got {self.d_max!r}")
        if self.d_ceiling is not None and self.d_ceiling < 1:
            raise InvalidInputError("d_ceiling must be positive")

    def min_length(self) -> int:
        """Shortest series these parameters accept."""
        return (self.m - 1) * self.tau + self.n + 1

    def resolve_dmax(self, T: int) -> int:
        info = compute_dmax(T, self.m, self.tau, self.n, self.d_ceiling)
        if self.d_max == "auto":
            return info.effective
        return min(self.d_max, info.effective)


class DmaxInfo(NamedTuple):
    formula: int  # 1 + floor((R - (n+1)) / (n-1))
    feasible: int  # largest d with at least one motif pair: floor((R-1)/n)
    effective: int  # min of the two, then the ceiling


def compute_dmax(T: int, m: int, tau: int, n: int, ceiling: int | None = None) -> DmaxInfo:
    R = T - (m - 1) * tau
    if R <= n:
        raise InvalidInputError(f"series too short: T - (m-1)*tau = {R} must exceed n = {n}")
    formula = 1 + (R - (n + 1)) // (n - 1)
    feasible = (R - 1) // n
    eff = min(formula, feasible)
    if ceiling is not None:
        eff = min(eff, ceiling)
    return DmaxInfo(formula, feasible, eff)


def delay_embed(x, m: int, tau: int) -> np.ndarray:
    """``(T - (m-1)*tau, m)`` array whose row ``t`` is ``x[t + j*tau]``, ``j < m``."""
    x = np.asarray(x, dtype=float)
    if m < 2 or tau < 1:
        raise InvalidInputError(f"need m >= 2 and tau >= 1, got m={m}, tau={tau}")
    R = len(x) - (m - 1) * tau
    if R < 1:
        raise InvalidInputError(f"series too short for m={m}, tau={tau}: T={len(x)}")
    return x[np.arange(R)[:, None] + np.arange(m)[None, :] * tau]


def motif(xhat: np.ndarray, n: int, d: int, s: int) -> np.ndarray:
    """Rows ``s, s+d, ..., s+(n-1)*d`` of the embedded series (``n x m``)."""
    last = s + (n - 1) * d
    if s < 0 or last >= len(xhat):
        raise InvalidInputError(f"motif start {s} out of range (n={n}, d={d}, rows={len(xhat)})")
    return xhat[s : last + 1 : d]


def corr2d(A, B) -> float:
    """2D (matrix) Pearson correlation of two equally shaped arrays."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch {A.shape} vs {B.shape}")
    if np.ptp(A) == 0 or np.ptp(B) == 0:
        raise DegenerateMotifError("degenerate motif: constant input has no correlation")
    a = A - A.mean()
    b = B - B.mean()
    den = np.sqrt(np.sum(a * a)) * np.sqrt(np.sum(b * b))
    if not den > 0:
        raise DegenerateMotifError("degenerate motif: vanishing variance")
    return float(np.sum(a * b) / den)


def motif_correlation_sequence(xhat: np.ndarray, n: int, d: int) -> np.ndarray:
    """``corr2d(M(s), M(s+d))`` for every motif pair at displacement ``d``.

    Empty when no pair fits.  Degenerate pairs yield 0.
    """
    R, m = xhat.shape
    L = R - n * d
    if L <= 0:
        return np.zeros(0)
    rows = np.arange(L)[:, None] + np.arange(n)[None, :] * d
    A = xhat[rows].reshape(L, -1)
    B = xhat[rows + d].reshape(L, -1)
    flat = (np.ptp(A, axis=1) == 0) | (np.ptp(B, axis=1) == 0)
    A = A - A.mean(axis=1, keepdims=True)
    B = B - B.mean(axis=1, keepdims=True)
    den = np.sqrt((A * A).sum(axis=1)) * np.sqrt((B * B).sum(axis=1))
    bad = flat | ~(den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (A * B).sum(axis=1) / den
    return np.where(bad, 0.0, r)


@dataclass(frozen=True)
class MotifField:
    values: np.ndarray  # (d_max, C), row k is displacement k+1
    params: MECFParams
    series_length: int
    degenerate: int = 0  # motif pairs imputed as 0

    @property
    def d_max(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def sidecar(self) -> dict:
        return {
            "params": asdict(self.params),
            "series_length": self.series_length,
            "d_max": self.d_max,
            "columns": self.values.shape[1],
            "degenerate_pairs": self.degenerate,
        }


def assemble_field(x, params: MECFParams = MECFParams(), backend: str | None = None) -> MotifField:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("series must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("series contains non-finite values")
    d_max = params.resolve_dmax(len(x))
    G, degenerate = get_kernel(backend)(x, params.m, params.tau, params.n, d_max)
    F = G + G[::-1, ::-1]
    F.setflags(write=False)
    return MotifField(F, params, len(x), int(degenerate))


def field_distance(F1: MotifField, F2: MotifField) -> float:
    """Frobenius distance between two fields built with the same parameters."""
    if F1.shape != F2.shape or F1.params != F2.params:
        raise InvalidInputError(f"field mismatch: {F1.shape} vs {F2.shape}")
    return float(np.linalg.norm(F1.values - F2.values))


def trajectory_fields(omega: np.ndarray, params: MECFParams = MECFParams(), backend=None) -> list[MotifField]:
    """One field per row of ``omega`` (nodes x samples)."""
    return [assemble_field(row, params, backend) for row in np.asarray(omega)]


def field_distance_matrix(fields: Sequence[MotifField], refine_below: float = 1e-4) -> np.ndarray:
    """Pairwise Frobenius distances.

    Uses the Gram-matrix identity, then recomputes directly any pair whose
    distance is small relative to the field norms, where cancellation would
    otherwise dominate.
    """
    if not fields:
        return np.zeros((0, 0))
    shape, params = fields[0].shape, fields[0].params
    for f in fields:
        if f.shape != shape or f.params != params:
            raise InvalidInputError("fields differ in shape or parameters")
    X = np.stack([f.values.ravel() for f in fields])
    sq = np.einsum("ij,ij->i", X, X)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    D = np.sqrt(np.clip(D2, 0.0, None))
    scale = np.sqrt(np.maximum(sq[:, None], sq[None, :]))
    for i, j in zip(*np.nonzero(np.triu(D <= refine_below * scale, k=1))):
        D[i, j] = np.linalg.norm(X[i] - X[j])
    D = np.triu(D, k=1)
    return D + D.T


def write_field(field: MotifField, path, extra: dict | None = None) -> Path:
    """CSV matrix (row = displacement, ascending) plus a ``.json`` sidecar."""
    path = Path(path)
    np.savetxt(path, field.values, delimiter=",", fmt="%.17g")
    meta = field.sidecar()
    if extra:
        meta.update(extra)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_field(path) -> MotifField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    values.setflags(write=False)
    return MotifField(values, MECFParams(**meta["params"]), meta["series_length"], meta["degenerate_pairs"])
