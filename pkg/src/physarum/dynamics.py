"""Fixed-step integration of ``dD_e/dt = |Q_e| - D_e``."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .electrical import DiameterState, ElectricalSolution, LaplacianSolver, solve_potentials, solver_for
from .lyapunov import MonitorRecord, monitor_record
from .network import Network

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Non-finite state encountered during integration."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 0.01
    t_end: float = 60.0
    record_stride: int = 10
    diameter_floor: float = 1e-300

    def __post_init__(self):
        if self.method not in ("rk4", "explicit-euler"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.dt < 1:
            raise ValueError("dt must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")
        if not 0 < self.diameter_floor <= 1e-12:
            raise ValueError("diameter_floor must lie in (0, 1e-12]")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @classmethod
    def from_dict(cls, d: dict | None) -> IntegratorConfig:
        d = dict(d or {})
        known = {k: d[k] for k in ("method", "dt", "t_end", "record_stride", "diameter_floor") if k in d}
        return cls(**known)


@dataclass
class Trajectory:
    network: Network
    config: IntegratorConfig
    t: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    p: np.ndarray
    monitors: list[MonitorRecord] | None = None
    floor_hits: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def sample(self, k: int) -> tuple[DiameterState, ElectricalSolution, MonitorRecord | None]:
        state = DiameterState(self.D[k], float(self.t[k]))
        sol = ElectricalSolution(self.p[k], self.Q[k], 0.0, self.network)
        mon = self.monitors[k] if self.monitors else None
        return state, sol, mon

    @property
    def samples(self):
        return [self.sample(k) for k in range(len(self))]

    def at(self, t: float) -> int:
        """Index of the sample closest to time ``t``."""
        return int(np.argmin(np.abs(self.t - t)))

    def column(self, edge_id: str, what: str = "D") -> np.ndarray:
        return getattr(self, what)[:, self.network.edge_index[edge_id]]

    def potential(self, node: str) -> np.ndarray:
        return self.p[:, self.network.node_index[node]]


def derivative(network: Network, state: DiameterState | np.ndarray) -> np.ndarray:
    D = state.D if isinstance(state, DiameterState) else np.asarray(state, dtype=float)
    sol = solve_potentials(network, D)
    return np.abs(sol.flows) - D


def equilibrium_residual(state: DiameterState | np.ndarray, solution: ElectricalSolution | np.ndarray) -> float:
    D = state.D if isinstance(state, DiameterState) else np.asarray(state)
    Q = solution.flows if isinstance(solution, ElectricalSolution) else np.asarray(solution)
    return float(np.max(np.abs(D - np.abs(Q))))


def _stepper(solver: LaplacianSolver, method: str, dt: float, lengths=None):
    def field_(D):
        p, Q = solver.solve(D, lengths)
        return np.abs(Q) - D, p, Q

    if method == "explicit-euler":
        def step(D):
            k1, p, Q = field_(D)
            return D + dt * k1, p, Q
    else:
        def step(D):
            k1, p, Q = field_(D)
            k2 = field_(D + 0.5 * dt * k1)[0]
            k3 = field_(D + 0.5 * dt * k2)[0]
            k4 = field_(D + dt * k3)[0]
            return D + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), p, Q
    return step


def step(network: Network, D: np.ndarray, dt: float, method: str = "rk4") -> np.ndarray:
    """One fixed step of size ``dt`` (negative steps integrate backwards)."""
    return _stepper(solver_for(network), method, dt)(np.asarray(D, dtype=float))[0]


def integrate(
    network: Network,
    D0: DiameterState | np.ndarray,
    config: IntegratorConfig | None = None,
    monitors: bool = True,
    until: Callable[[np.ndarray, np.ndarray, np.ndarray], bool] | None = None,
) -> Trajectory:
    """Integrate from ``D0`` and record every ``record_stride``-th step plus the end point.

    ``until(D, p, Q)`` is evaluated at recorded samples; a true result ends the
    run there and ``t_end`` becomes a cap.
    """
    config = config or IntegratorConfig()
    D = np.array(D0.D if isinstance(D0, DiameterState) else D0, dtype=float)
    if D.shape != (network.m,) or np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise ValueError("initial diameters must be a positive vector over edges")
    solver = solver_for(network)
    step = _stepper(solver, config.method, config.dt)
    n_steps = config.steps
    stride = int(config.record_stride)
    ts, Ds, Qs, ps = [], [], [], []
    floor_hits = 0
    for k in range(n_steps + 1):
        record = k % stride == 0 or k == n_steps
        if k == n_steps:
            p, Q = solver.solve(D)
        else:
            D_next, p, Q = step(D)
        if record:
            ts.append(k * config.dt)
            Ds.append(D.copy())
            Qs.append(Q)
            ps.append(p)
        if k == n_steps:
            break
        if record and until is not None and until(D, p, Q):
            break
        if not np.all(np.isfinite(D_next)):
            raise IntegrationError(f"non-finite state at t={k * config.dt:g}")
        low = D_next < config.diameter_floor
        if low.any():
            floor_hits += int(low.sum())
            D_next[low] = config.diameter_floor
        D = D_next
    if floor_hits:
        log.info("diameter floor hit %d times", floor_hits)
    traj = Trajectory(
        network,
        config,
        np.array(ts),
        np.array(Ds),
        np.array(Qs),
        np.array(ps),
        floor_hits=floor_hits,
    )
    if monitors:
        traj.monitors = [monitor_record(network, t, D, p, Q) for t, D, p, Q in zip(traj.t, traj.D, traj.p, traj.Q)]
    return traj


@dataclass
class BatchTrajectory:
    t: np.ndarray
    D: np.ndarray  # (samples, batch, m)
    Q: np.ndarray
    p: np.ndarray


def integrate_batch(
    network: Network,
    D0: np.ndarray,
    config: IntegratorConfig,
    lengths: np.ndarray | None = None,
) -> BatchTrajectory:
    """Integrate many initial states (optionally with per-row lengths) on one topology."""
    D = np.array(D0, dtype=float)
    solver = LaplacianSolver(network)
    step = _stepper(solver, config.method, config.dt, lengths)
    n_steps = config.steps
    stride = int(config.record_stride)
    ts, Ds, Qs, ps = [], [], [], []
    for k in range(n_steps + 1):
        if k == n_steps:
            p, Q = solver.solve(D, lengths)
        else:
            D_next, p, Q = step(D)
        if k % stride == 0 or k == n_steps:
            ts.append(k * config.dt)
            Ds.append(D.copy())
            Qs.append(Q)
            ps.append(p)
        if k == n_steps:
            break
        if not np.all(np.isfinite(D_next)):
            raise IntegrationError(f"non-finite state at t={k * config.dt:g}")
        D = np.maximum(D_next, config.diameter_floor)
    return BatchTrajectory(np.array(ts), np.array(Ds), np.array(Qs), np.array(ps))


def closed_form_relaxation(x0: float, t) -> np.ndarray:
    """Solution ``1 + (x0 - 1) e^{-t}`` of ``dx/dt = 1 - x``."""
    return 1.0 + (x0 - 1.0) * np.exp(-np.asarray(t, dtype=float))


__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "BatchTrajectory",
    "IntegrationError",
    "derivative",
    "integrate",
    "step",
    "integrate_batch",
    "equilibrium_residual",
    "closed_form_relaxation",
]
