"""Oscillator-network grid model: topology, node parameters, synchronous
state, linearized state matrix and its modal structure.

Node indices are zero-based throughout.  State vectors are ordered
``[delta_0 .. delta_{N-1}, omega_0 .. omega_{N-1}]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, InvalidInputError, NumericalError, TopologyError

DEFAULT_COUPLING = 15.0
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
RESIDUAL_TOL = 1e-9
TOPOLOGY_KINDS = ("ring", "random-regular", "rewired-lattice")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridTopology:
    """Undirected weighted graph; ``edges`` holds ``(i, j, K_ij)`` with ``i < j``."""

    node_count: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        n = self.node_count
        if n < 1:
            raise TopologyError(f"node_count must be positive, got {n}")
        norm = []
        seen = set()
        for i, j, k in self.edges:
            i, j, k = int(i), int(j), float(k)
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if i > j:
                i, j = j, i
            if not (0 <= i and j < n):
                raise TopologyError(f"edge ({i},{j}) out of range for N={n}")
            if not k > 0 or not math.isfinite(k):
                raise TopologyError(f"non-positive coupling {k} on edge ({i},{j})")
            if (i, j) in seen:
                raise TopologyError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            norm.append((i, j, k))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if not _is_connected(n, self.edges):
            raise TopologyError("disconnected graph")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def coupling_matrix(self) -> np.ndarray:
        K = np.zeros((self.node_count, self.node_count))
        for i, j, k in self.edges:
            K[i, j] = K[j, i] = k
        return K

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=int)
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def with_uniform_coupling(self, K: float) -> GridTopology:
        return GridTopology(self.node_count, tuple((i, j, K) for i, j, _ in self.edges))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_weighted_edges_from(self.edges)
        return g

    def articulation_nodes(self) -> set[int]:
        return set(nx.articulation_points(self.to_networkx()))

    def hop_distances(self) -> np.ndarray:
        """All-pairs shortest path lengths in edge hops."""
        lengths = dict(nx.all_pairs_shortest_path_length(self.to_networkx()))
        n = self.node_count
        out = np.zeros((n, n), dtype=int)
        for i in range(n):
            for j, h in lengths[i].items():
                out[i, j] = h
        return out


def _is_connected(n, edges) -> bool:
    if n == 1:
        return True
    if not edges:
        return False
    rows = [e[0] for e in edges]
    cols = [e[1] for e in edges]
    adj = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


@dataclass(frozen=True)
class NodeParams:
    """Per-node inertia ``alpha``, damping ``beta`` and injected power ``power``."""

    alpha: np.ndarray
    beta: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        a, b, p = (_frozen(v) for v in (self.alpha, self.beta, self.power))
        if not (a.shape == b.shape == p.shape and a.ndim == 1):
            raise InvalidInputError("alpha, beta, power must be 1-D and equally long")
        if np.any(a <= 0) or np.any(b <= 0):
            raise InvalidInputError("alpha and beta must be strictly positive")
        if abs(p.sum()) > 1e-9:
            raise InvalidInputError(f"power is unbalanced: sum(P) = {p.sum():.3g}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "power", p)

    @property
    def node_count(self) -> int:
        return len(self.alpha)


def default_node_params(n: int, seed: int = 0) -> NodeParams:
    """alpha = beta = 1; P = +1 on a seeded random half, -1 on the other half.

    With odd ``n`` one node is left at P = 0.
    """
    rng = np.random.default_rng(seed)
    power = np.zeros(n)
    order = rng.permutation(n)
    half = n // 2
    power[order[:half]] = 1.0
    power[order[half : 2 * half]] = -1.0
    return NodeParams(np.ones(n), np.ones(n), power)


@dataclass(frozen=True)
class GridModel:
    topology: GridTopology
    params: NodeParams
    equilibrium: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.params.node_count != self.topology.node_count:
            raise InvalidInputError(
                f"params cover {self.params.node_count} nodes, topology has "
                f"{self.topology.node_count}"
            )
        if self.equilibrium is not None:
            eq = _frozen(self.equilibrium)
            if eq.shape != (self.node_count,):
                raise InvalidInputError("equilibrium has wrong length")
            res = power_flow_residual(self.topology, self.params, eq)
            if np.max(np.abs(res)) >= RESIDUAL_TOL:
                raise InvalidInputError("equilibrium violates the power-flow residual bound")
            object.__setattr__(self, "equilibrium", eq)

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    def with_coupling(self, K: float) -> GridModel:
        """Homogeneous-coupling copy; the equilibrium is re-solved."""
        return equilibrate(GridModel(self.topology.with_uniform_coupling(K), self.params))


def power_flow_residual(topology: GridTopology, params: NodeParams, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    K = topology.coupling_matrix()
    flows = (K * np.sin(delta[:, None] - delta[None, :])).sum(axis=1)
    return params.power - flows


# ---------------------------------------------------------------- topology I/O


def _parse_records(path, ncols, what):
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"{what} file not found: {path}")
    records = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != ncols:
            raise InvalidInputError(f"{path}:{lineno}: expected {ncols} fields, got {raw!r}")
        try:
            records.append((lineno, parts, [float(p) for p in parts]))
        except ValueError:
            if not records and not any(c.isdigit() for c in line):
                continue  # header row
            raise InvalidInputError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    return records


def _as_index(value, path, lineno):
    if value != int(value) or value < 0:
        raise InvalidInputError(f"{path}:{lineno}: invalid node index {value}")
    return int(value)


def load_topology(path) -> GridTopology:
    """Read an ``i,j,K`` edge list (zero-based indices, ``#`` comments)."""
    records = _parse_records(path, 3, "topology")
    if not records:
        raise InvalidInputError(f"{path}: no edges")
    edges = []
    for lineno, _, (i, j, k) in records:
        i, j = _as_index(i, path, lineno), _as_index(j, path, lineno)
        if not k > 0:
            raise TopologyError(f"{path}:{lineno}: non-positive coupling {k}")
        if i == j:
            raise TopologyError(f"{path}:{lineno}: self-loop at node {i}")
        edges.append((i, j, k))
    n = 1 + max(max(i, j) for i, j, _ in edges)
    seen = {}
    for (lineno, *_), (i, j, _) in zip(records, edges):
        p = (min(i, j), max(i, j))
        if p in seen:
            raise TopologyError(f"{path}:{lineno}: duplicate edge {p} (first on line {seen[p]})")
        seen[p] = lineno
    return GridTopology(n, tuple(edges))


def save_topology(topology: GridTopology, path) -> None:
    lines = ["# i,j,K"] + [f"{i},{j},{k!r}" for i, j, k in topology.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def load_node_params(path, n: int) -> NodeParams:
    """Read ``i,alpha,beta,P``; every node 0..n-1 must appear exactly once."""
    records = _parse_records(path, 4, "node-parameter")
    alpha, beta, power = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    for lineno, _, (i, a, b, p) in records:
        i = _as_index(i, path, lineno)
        if i >= n or not np.isnan(alpha[i]):
            raise InvalidInputError(f"{path}:{lineno}: node {i} out of range or repeated")
        alpha[i], beta[i], power[i] = a, b, p
    if np.isnan(alpha).any():
        missing = np.flatnonzero(np.isnan(alpha))[:5].tolist()
        raise InvalidInputError(f"{path}: missing parameters for nodes {missing}...")
    return NodeParams(alpha, beta, power)


def save_node_params(params: NodeParams, path) -> None:
    rows = np.column_stack([np.arange(params.node_count), params.alpha, params.beta, params.power])
    np.savetxt(path, rows, delimiter=",", header="i,alpha,beta,P", comments="",
               fmt=["%d", "%.17g", "%.17g", "%.17g"])


def generate_topology(
    kind: str, n: int, edge_count: int, seed: int = 0, coupling: float = DEFAULT_COUPLING,
    rewire_prob: float = 0.1,
) -> GridTopology:
    """Synthetic connected topology with exactly ``n`` nodes and ``edge_count`` edges.

    ``ring`` needs ``edge_count == n``.  ``random-regular`` needs ``2*edge_count``
    divisible by ``n``.  ``rewired-lattice`` starts from a ring, adds
    next-nearest-neighbour chords at random until ``edge_count`` is reached, then
    rewires each edge's far end with probability ``rewire_prob`` whenever the
    graph stays connected and simple.
    """
    if kind not in TOPOLOGY_KINDS:
        raise InvalidInputError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    if n < 2 or edge_count < n - 1:
        raise InvalidInputError(f"infeasible: {edge_count} edges cannot connect {n} nodes")
    if edge_count > n * (n - 1) // 2:
        raise InvalidInputError(f"infeasible: {edge_count} edges exceed the complete graph on {n}")
    rng = np.random.default_rng(seed)

    if kind == "ring":
        if n < 3 or edge_count != n:
            raise InvalidInputError("infeasible: a ring needs n >= 3 and edge_count == n")
        pairs = [(i, (i + 1) % n) for i in range(n)]

    elif kind == "random-regular":
        if (2 * edge_count) % n:
            raise InvalidInputError(f"infeasible: 2*{edge_count} is not divisible by {n}")
        k = 2 * edge_count // n
        for _ in range(100):
            g = nx.random_regular_graph(k, n, seed=int(rng.integers(2**31)))
            if nx.is_connected(g):
                break
        else:
            raise TopologyError("random-regular generation failed to reach connectivity")
        pairs = list(g.edges())

    else:
        if n < 3 or edge_count < n:
            raise InvalidInputError("infeasible: rewired-lattice needs n >= 3 and edge_count >= n")
        present = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
        pairs = sorted(present)
        hop = 2
        while len(pairs) < edge_count:
            cand = [tuple(sorted((i, (i + hop) % n))) for i in range(n)]
            cand = sorted({c for c in cand if c not in present and c[0] != c[1]})
            need = edge_count - len(pairs)
            take = [cand[i] for i in sorted(rng.choice(len(cand), size=min(need, len(cand)), replace=False))]
            present.update(take)
            pairs.extend(take)
            hop += 1
        g = nx.Graph(pairs)
        for u, v in sorted(pairs):
            if rng.random() >= rewire_prob:
                continue
            w = int(rng.integers(n))
            if w in (u, v) or g.has_edge(u, w):
                continue
            g.remove_edge(u, v)
            g.add_edge(u, w)
            if not nx.is_connected(g):
                g.remove_edge(u, w)
                g.add_edge(u, v)
        pairs = list(g.edges())

    return GridTopology(n, tuple((int(i), int(j), float(coupling)) for i, j in pairs))


# ------------------------------------------------------------ synchronous state


def solve_equilibrium(model: GridModel) -> np.ndarray:
    """Phase vector with zero power-flow residual, gauge ``delta[0] = 0``.

    Newton's method from a flat start on nodes 1..N-1; node 0's equation is
    implied by power balance.
    """
    topo, params = model.topology, model.params
    n = topo.node_count
    delta = np.zeros(n)
    if n == 1:
        return delta
    K = topo.coupling_matrix()
    for _ in range(NEWTON_MAX_ITER):
        res = power_flow_residual(topo, params, delta)
        if np.max(np.abs(res)) < NEWTON_TOL:
            break
        J = -laplacian_from(K, delta)  # d(residual)/d(delta)
        try:
            step = np.linalg.solve(J[1:, 1:], -res[1:])
        except np.linalg.LinAlgError:
            raise ConvergenceError("no synchronous state: singular Newton Jacobian") from None
        delta[1:] += step
        if not np.all(np.isfinite(delta)):
            break
    res = power_flow_residual(topo, params, delta)
    if not np.all(np.isfinite(res)) or np.max(np.abs(res)) >= RESIDUAL_TOL:
        raise ConvergenceError(
            f"no synchronous state: Newton did not converge in {NEWTON_MAX_ITER} iterations "
            "(grid overloaded?)"
        )
    return delta


def equilibrate(model: GridModel) -> GridModel:
    return replace(model, equilibrium=solve_equilibrium(model))


def laplacian_from(K: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """L_ij = -K_ij cos(d_i - d_j), L_ii = sum_j K_ij cos(d_i - d_j)."""
    W = K * np.cos(delta[:, None] - delta[None, :])
    np.fill_diagonal(W, 0.0)
    L = -W
    L[np.diag_indices_from(L)] = W.sum(axis=1)
    return L


def laplacian(model: GridModel) -> np.ndarray:
    if model.equilibrium is None:
        raise InvalidInputError("equilibrium unset; call equilibrate() first")
    return laplacian_from(model.topology.coupling_matrix(), model.equilibrium)


@dataclass(frozen=True)
class StateMatrix:
    phi: np.ndarray
    inertia: np.ndarray  # diagonal of H, kept for forcing/noise scaling

    def __post_init__(self):
        phi, inertia = _frozen(self.phi), _frozen(self.inertia)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1] or phi.shape[0] % 2:
            raise InvalidInputError(f"state matrix must be square with even size, got {phi.shape}")
        n = phi.shape[0] // 2
        if inertia.shape != (n,) or np.any(inertia <= 0):
            raise InvalidInputError("inertia must be positive with one entry per node")
        if np.any(phi[:n, :n] != 0) or not np.array_equal(phi[:n, n:], np.eye(n)):
            raise InvalidInputError("state matrix upper blocks must be [0, I]")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "inertia", inertia)

    @property
    def node_count(self) -> int:
        return self.phi.shape[0] // 2


def build_state_matrix(model: GridModel) -> StateMatrix:
    """Block matrix ``[[0, I], [-H^-1 L, -H^-1 D]]`` linearized at the equilibrium."""
    L = laplacian(model)
    n = model.node_count
    Hinv = 1.0 / model.params.alpha
    phi = np.zeros((2 * n, 2 * n))
    phi[:n, n:] = np.eye(n)
    phi[n:, :n] = -Hinv[:, None] * L
    phi[n:, n:] = np.diag(-Hinv * model.params.beta)
    return StateMatrix(phi, model.params.alpha)


# -------------------------------------------------------------------- modes


@dataclass(frozen=True)
class Mode:
    eigenvalue: complex
    frequency: float  # Hz
    damping_ratio: float  # 1.0 for non-oscillatory zero modes
    shape: np.ndarray
    dominant_node: int

    @property
    def oscillatory(self) -> bool:
        return abs(self.eigenvalue.imag) > 1e-9


@dataclass(frozen=True)
class ModalStructure:
    modes: tuple[Mode, ...]

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.eigenvalue for m in self.modes])

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes])


def modal_analysis(phi: StateMatrix) -> ModalStructure:
    """Eigen-decomposition of the state matrix, sorted by natural frequency."""
    n = phi.node_count
    try:
        vals, vecs = np.linalg.eig(phi.phi)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    modes = []
    for k in range(2 * n):
        lam = complex(vals[k])
        v = vecs[:, k] / np.linalg.norm(vecs[:, k])
        mag = abs(lam)
        zeta = -lam.real / mag if mag > 1e-12 else 1.0
        v.setflags(write=False)
        modes.append(
            Mode(lam, abs(lam.imag) / (2 * math.pi), zeta, v, int(np.argmax(np.abs(v[n:]))))
        )
    modes.sort(key=lambda m: (m.frequency, m.eigenvalue.imag, m.eigenvalue.real))
    return ModalStructure(tuple(modes))


def pick_resonant_frequency(
    modes: ModalStructure, exclude_node: int, allowed_nodes=None, max_frequency=None,
) -> tuple[float, int]:
    """Natural frequency and dominant node of the least-damped oscillatory mode
    not dominated by ``exclude_node``.

    A mode qualifies when some node other than ``exclude_node`` ties the maximum
    omega-block magnitude (relative tolerance 1e-9); that node is the predicted
    resonator.  ``allowed_nodes`` and ``max_frequency`` narrow the candidates.
    """
    best = None
    for mode in modes:
        if not mode.oscillatory or mode.eigenvalue.imag < 0:
            continue
        if max_frequency is not None and mode.frequency > max_frequency:
            continue
        n = len(mode.shape) // 2
        mag = np.abs(mode.shape[n:])
        others = mag.copy()
        others[exclude_node] = -1.0
        if allowed_nodes is not None:
            mask = np.zeros(n, dtype=bool)
            mask[list(allowed_nodes)] = True
            others[~mask] = -1.0
        r = int(np.argmax(others))
        if others[r] < (1 - 1e-9) * mag.max():
            continue
        if best is None or mode.damping_ratio < best[0]:
            best = (mode.damping_ratio, mode.frequency, r)
    if best is None:
        raise InvalidInputError(f"no qualifying mode: every oscillatory mode is dominated by node {exclude_node}")
    return best[1], best[2]
