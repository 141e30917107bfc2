"""Forced-oscillation simulation of the linearized and nonlinear swing models.

Both integrators start from the synchronous state (zero deviation) and sample
the deviation at ``t_k = k*dt`` for ``k = 0 .. T-1`` with ``T = round(duration/dt)``.
Process noise enters the omega equations as ``sigma*sqrt(dt)*N(0, 1)`` per step.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import BlowUpError, InvalidInputError, ResonanceError, SynchronyLossError
from .grid import GridModel, StateMatrix, build_state_matrix

BLOWUP_LIMIT = 1e6
MODEL_KINDS = ("linear", "nonlinear")
NOISE_MODES = ("process", "measurement")


@dataclass(frozen=True)
class FOSource:
    node: int
    gamma: float
    f: float
    phase: float = 0.0  # cycles

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError(f"FO amplitude must be positive, got {self.gamma}")
        if not self.f > 0:
            raise InvalidInputError(f"FO frequency must be positive, got {self.f}")
        if self.node < 0:
            raise InvalidInputError(f"FO node must be non-negative, got {self.node}")


@dataclass(frozen=True)
class ScenarioConfig:
    sources: tuple[FOSource, ...] = ()
    sigma: float = 0.05
    duration: float = 30.0
    dt: float = 0.01
    seed: int = 0
    model_kind: str = "linear"
    noise_mode: str = "process"
    # Divide forcing and process noise by the inertia (what linearizing the
    # swing equation gives); irrelevant when alpha = 1.
    scale_by_inertia: bool = True
    resonator: int | None = None  # informational, set by the resonance builder

    def __post_init__(self):
        srcs = tuple(s if isinstance(s, FOSource) else FOSource(**s) for s in self.sources)
        object.__setattr__(self, "sources", srcs)
        if not self.duration > 0 or not self.dt > 0:
            raise InvalidInputError("duration and dt must be positive")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be non-negative")
        if self.model_kind not in MODEL_KINDS:
            raise InvalidInputError(f"model_kind must be one of {MODEL_KINDS}")
        if self.noise_mode not in NOISE_MODES:
            raise InvalidInputError(f"noise_mode must be one of {NOISE_MODES}")
        nodes = [s.node for s in srcs]
        if len(set(nodes)) != len(nodes):
            raise InvalidInputError(f"source nodes must be distinct, got {nodes}")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def replace(self, **changes) -> ScenarioConfig:
        d = asdict(self)
        d.update(changes)
        return ScenarioConfig(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> ScenarioConfig:
        return cls.from_dict(json.loads(text))

    def check_nodes(self, n: int) -> None:
        for s in self.sources:
            if s.node >= n:
                raise InvalidInputError(f"source node {s.node} does not exist (N={n})")


@dataclass(frozen=True)
class Trajectory:
    dt: float
    omega: np.ndarray  # (N, T)
    delta: np.ndarray  # (N, T)

    def __post_init__(self):
        for name in ("omega", "delta"):
            a = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise BlowUpError(f"trajectory {name} contains non-finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def node_count(self) -> int:
        return self.omega.shape[0]

    @property
    def samples(self) -> int:
        return self.omega.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples) * self.dt


def fo_signal(src: FOSource, t):
    """``gamma * cos(2*pi*(f*t + phase))``."""
    return src.gamma * np.cos(2 * np.pi * (src.f * np.asarray(t) + src.phase))


def _input_gain(scenario, inertia, n):
    return 1.0 / inertia if scenario.scale_by_inertia else np.ones(n)


def simulate_linear(phi: StateMatrix, scenario: ScenarioConfig) -> Trajectory:
    """Integrate ``dY = (Phi Y + forcing) dt + noise`` from ``Y(0) = 0``.

    The deterministic part is advanced exactly over each step: every source's
    cosine is generated by an appended 2x2 rotation block so that a single
    matrix exponential propagates state and forcing together.  Noise is an
    Euler-Maruyama increment on the omega rows.
    """
    if scenario.model_kind != "linear":
        raise InvalidInputError("simulate_linear needs model_kind='linear'")
    n = phi.node_count
    scenario.check_nodes(n)
    steps, dt = scenario.steps, scenario.dt
    gain = _input_gain(scenario, phi.inertia, n)

    ns = len(scenario.sources)
    A = np.zeros((2 * n + 2 * ns, 2 * n + 2 * ns))
    A[: 2 * n, : 2 * n] = phi.phi
    z = np.zeros(2 * n + 2 * ns)
    for k, src in enumerate(scenario.sources):
        w = 2 * np.pi * src.f
        c = 2 * n + 2 * k
        A[c, c + 1] = -w
        A[c + 1, c] = w
        # (c, c+1) holds gamma*(cos, sin) of the drive argument
        A[n + src.node, c] = gain[src.node]
        z[c] = src.gamma * math.cos(2 * np.pi * src.phase)
        z[c + 1] = src.gamma * math.sin(2 * np.pi * src.phase)
    P = expm(A * dt)
    P_yy = P[: 2 * n, : 2 * n]
    P_yz = P[: 2 * n, 2 * n :]
    P_zz = P[2 * n :, 2 * n :]
    z = z[2 * n :]

    rng = np.random.default_rng(scenario.seed)
    process = scenario.sigma > 0 and scenario.noise_mode == "process"
    noise_scale = scenario.sigma * math.sqrt(dt) * gain

    Y = np.zeros(2 * n)
    out = np.empty((steps, 2 * n))
    for k in range(steps):
        out[k] = Y
        Y = P_yy @ Y + P_yz @ z
        z = P_zz @ z
        if process:
            Y[n:] += noise_scale * rng.standard_normal(n)
        if not np.all(np.abs(Y) < BLOWUP_LIMIT):
            raise BlowUpError(f"linear simulation diverged at step {k + 1} (t={(k + 1) * dt:.4g}s)")
    return _finish(out.T, n, dt, scenario, rng)


def _finish(states, n, dt, scenario, rng):
    omega = states[n:].copy()
    if scenario.sigma > 0 and scenario.noise_mode == "measurement":
        omega += scenario.sigma * rng.standard_normal(omega.shape)
    return Trajectory(dt, omega, states[:n])


def simulate_nonlinear(model: GridModel, scenario: ScenarioConfig, slip_window: float = 1.0) -> Trajectory:
    """Swing-equation run: RK4 on the drift, Euler-Maruyama noise on omega.

    Raises ``SynchronyLossError`` when some node's phase deviation (relative to
    the network mean) stays beyond 2*pi for ``slip_window`` seconds, and
    ``BlowUpError`` on non-finite or huge states.
    """
    if scenario.model_kind != "nonlinear":
        raise InvalidInputError("simulate_nonlinear needs model_kind='nonlinear'")
    if model.equilibrium is None:
        raise InvalidInputError("equilibrium unset; call equilibrate() first")
    n = model.node_count
    scenario.check_nodes(n)
    steps, dt = scenario.steps, scenario.dt
    K = model.topology.coupling_matrix()
    alpha, beta, P = model.params.alpha, model.params.beta, model.params.power
    gain = _input_gain(scenario, alpha, n)

    def forcing(t):
        eta = np.zeros(n)
        for s in scenario.sources:
            eta[s.node] += fo_signal(s, t)
        return eta

    def drift(t, d, w):
        flows = (K * np.sin(d[:, None] - d[None, :])).sum(axis=1)
        dw = (P - flows - beta * w) / alpha + gain * forcing(t)
        return w, dw

    delta0 = model.equilibrium
    d = delta0.copy()
    w = np.zeros(n)
    rng = np.random.default_rng(scenario.seed)
    process = scenario.sigma > 0 and scenario.noise_mode == "process"
    noise_scale = scenario.sigma * math.sqrt(dt) * gain
    slip_steps = max(1, int(round(slip_window / dt)))
    slipped = 0

    out = np.empty((steps, 2 * n))
    for k in range(steps):
        dev = d - delta0
        out[k, :n] = dev
        out[k, n:] = w
        t = k * dt
        k1 = drift(t, d, w)
        k2 = drift(t + dt / 2, d + dt / 2 * k1[0], w + dt / 2 * k1[1])
        k3 = drift(t + dt / 2, d + dt / 2 * k2[0], w + dt / 2 * k2[1])
        k4 = drift(t + dt, d + dt * k3[0], w + dt * k3[1])
        d = d + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w = w + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if process:
            w += noise_scale * rng.standard_normal(n)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(w))) or np.max(np.abs(w)) > BLOWUP_LIMIT:
            raise BlowUpError(f"nonlinear simulation diverged at step {k + 1} (t={(k + 1) * dt:.4g}s)")
        rel = d - delta0
        rel = rel - rel.mean()
        if np.max(np.abs(rel)) > 2 * np.pi:
            slipped += 1
            if slipped >= slip_steps:
                raise SynchronyLossError(
                    f"loss of synchrony: phase deviation beyond 2*pi for {slip_window}s "
                    f"ending at t={(k + 1) * dt:.4g}s"
                )
        else:
            slipped = 0
    return _finish(out.T, n, dt, scenario, rng)


def steady_state_response(phi: StateMatrix, src: FOSource, scale_by_inertia: bool = True) -> np.ndarray:
    """Complex phasor ``(i*2*pi*f*I - Phi)^-1 b`` of the forced linear system.

    ``b`` carries ``gamma*exp(i*2*pi*phase)`` on the source's omega row, so the
    steady state is ``Re(X * exp(i*2*pi*f*t))`` and ``abs(X)`` is the amplitude.
    """
    n = phi.node_count
    if not 0 <= src.node < n:
        raise InvalidInputError(f"source node {src.node} does not exist (N={n})")
    b = np.zeros(2 * n, dtype=complex)
    g = 1.0 / phi.inertia[src.node] if scale_by_inertia else 1.0
    b[n + src.node] = g * src.gamma * np.exp(2j * np.pi * src.phase)
    M = 2j * np.pi * src.f * np.eye(2 * n) - phi.phi
    if np.linalg.cond(M) > 1e14:
        raise ResonanceError(f"drive at {src.f} Hz coincides with an undamped eigenvalue")
    return np.linalg.solve(M, b)


def simulate(model: GridModel, scenario: ScenarioConfig, phi: StateMatrix | None = None) -> Trajectory:
    if scenario.model_kind == "linear":
        return simulate_linear(phi if phi is not None else build_state_matrix(model), scenario)
    return simulate_nonlinear(model, scenario)


# ------------------------------------------------------------------ CSV I/O


def write_trajectory_csv(traj: Trajectory, path) -> None:
    header = "t," + ",".join(f"node_{i}" for i in range(traj.node_count))
    data = np.column_stack([traj.times, traj.omega.T])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_trajectory_csv(path) -> Trajectory:
    """Read the omega block; ``delta`` is not part of the interchange format and
    comes back as zeros."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t" or any(h != f"node_{i}" for i, h in enumerate(header[1:])):
        raise InvalidInputError(f"{path}: header must be t,node_0,...,node_(N-1)")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    omega = data[:, 1:].T
    return Trajectory(dt, omega, np.zeros_like(omega))
