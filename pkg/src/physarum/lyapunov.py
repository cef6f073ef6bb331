"""Lyapunov functions of the Physarum dynamics and their monotonicity checks.

For shortest-path instances the normaliser ``C`` is the minimum s0-s1 cut
capacity; for transportation instances it is ``F = min_S C_S / |b_S|``
over non-trivial cuts.  In both cases

    V = sum_e L_e D_e / C + W,      W = (capa({s0}) - 1)^2,
    h = -(1/C) sum_e R_e |Q_e| D_e + (1/C^2) sum_e R_e D_e^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cuts
from .electrical import solve_potentials
from .network import Network

DEGENERATE_CUT = 1e-250


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    V: float
    W: float
    h: float
    C: float
    Delta: float
    hardware_cost: float
    flow_cost: float
    source_cut: float

    CSV_FIELDS = ("t", "V", "W", "h", "C", "Delta", "hardware_cost", "flow_cost")

    def row(self) -> list[float]:
        return [getattr(self, k) for k in self.CSV_FIELDS]


def source_cut(network: Network, D: np.ndarray) -> float:
    s = network.source
    D = np.asarray(D)
    return float(sum(D[k] for k, e in enumerate(network.edges) if s in (e.u, e.v)))


def normaliser(network: Network, D: np.ndarray) -> float:
    """Minimum cut ``C`` (shortest path) or most-constraining ratio ``F``."""
    if network.is_shortest_path:
        return cuts.min_cut_value(network, D)
    return cuts.constraint_value(network, D)


def compute_W(network: Network, D: np.ndarray) -> float:
    return (source_cut(network, D) - 1.0) ** 2


def compute_V(network: Network, D: np.ndarray, C: float | None = None) -> float:
    D = np.asarray(D, dtype=float)
    C = normaliser(network, D) if C is None else C
    if C <= DEGENERATE_CUT:
        raise ArithmeticError(f"degenerate cut capacity {C:g}")
    return float(np.dot(network.lengths, D)) / C + compute_W(network, D)


def compute_h(network: Network, D: np.ndarray, Q: np.ndarray | None = None, C: float | None = None) -> float:
    D = np.asarray(D, dtype=float)
    if Q is None:
        Q = solve_potentials(network, D).flows
    C = normaliser(network, D) if C is None else C
    L = network.lengths
    # R_e |Q_e| D_e = L_e |Q_e| and R_e D_e^2 = L_e D_e
    return float(-np.dot(L, np.abs(Q)) / C + np.dot(L, D) / C**2)


def monitor_record(network: Network, t: float, D: np.ndarray, p: np.ndarray, Q: np.ndarray) -> MonitorRecord:
    D = np.asarray(D, dtype=float)
    C = normaliser(network, D)
    hardware = float(np.dot(network.lengths, D))
    Cs = source_cut(network, D)
    W = (Cs - 1.0) ** 2
    return MonitorRecord(
        t=float(t),
        V=hardware / C + W,
        W=W,
        h=compute_h(network, D, Q, C),
        C=C,
        Delta=float(p.max() - p.min()),
        hardware_cost=hardware,
        flow_cost=float(np.dot(network.lengths, np.abs(Q))),
        source_cut=Cs,
    )


@dataclass
class MonotonicityReport:
    slack: float
    v_increases: list[tuple[float, float]] = field(default_factory=list)
    estimate_violations: list[tuple[float, float]] = field(default_factory=list)
    sharp_violations: list[tuple[float, float]] = field(default_factory=list)
    negative_h: list[tuple[float, float]] = field(default_factory=list)
    negative_W: list[tuple[float, float]] = field(default_factory=list)
    max_increase: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.v_increases or self.negative_h or self.negative_W)

    def summary(self) -> dict:
        return {
            "slack": self.slack,
            "v_increases": len(self.v_increases),
            "max_increase": self.max_increase,
            "estimate_violations": len(self.estimate_violations),
            "sharp_bound_violations": len(self.sharp_violations),
            "negative_h": len(self.negative_h),
            "negative_W": len(self.negative_W),
        }


def monotonicity_report(trajectory, slack: float = 1e-6, h_tol: float = 1e-10) -> MonotonicityReport:
    """Check V along a recorded trajectory.

    Per consecutive sample pair (``s`` integrator steps apart):

    * ``V_{k+1} <= V_k + s * slack``;
    * ``V_{k+1} - V_k <= -dt_k * min(h + 2W) + s * slack``, the integrated
      form of ``dV/dt <= -h - 2W`` using the smaller endpoint value (exact
      lower bound of the integral while the integrand is monotone);
    * ``V_{k+1} - V_k <= -dt_k * min(g) + s * slack`` with
      ``g = sum_e (R_e / 2)(D_e/C - |Q_e|)^2``, which reduces to the
      ``L_min / 4`` bound once every ``D_e <= 2``.
    """
    net = trajectory.network
    mons = trajectory.monitors
    rep = MonotonicityReport(slack)
    if not mons:
        return rep
    t = np.array([m.t for m in mons])
    V = np.array([m.V for m in mons])
    h = np.array([m.h for m in mons])
    W = np.array([m.W for m in mons])
    C = np.array([m.C for m in mons])
    D = trajectory.D
    Q = trajectory.Q
    R = net.lengths / D
    g = 0.5 * np.sum(R * (D / C[:, None] - np.abs(Q)) ** 2, axis=1)
    steps = np.maximum(1, np.rint(np.diff(t) / trajectory.config.dt))
    dt = np.diff(t)
    dV = np.diff(V)
    allow = steps * slack
    rep.max_increase = float(max(0.0, (dV / steps).max())) if len(dV) else 0.0
    for k in np.flatnonzero(dV > allow):
        rep.v_increases.append((float(t[k + 1]), float(dV[k])))
    est = dV + dt * np.minimum((h + 2 * W)[:-1], (h + 2 * W)[1:])
    for k in np.flatnonzero(est > allow):
        rep.estimate_violations.append((float(t[k + 1]), float(est[k])))
    sharp = dV + dt * np.minimum(g[:-1], g[1:])
    for k in np.flatnonzero(sharp > allow):
        rep.sharp_violations.append((float(t[k + 1]), float(sharp[k])))
    for k in np.flatnonzero(h < -h_tol):
        rep.negative_h.append((float(t[k]), float(h[k])))
    for k in np.flatnonzero(W < 0):
        rep.negative_W.append((float(t[k]), float(W[k])))
    return rep


# -- parallel links ------------------------------------------------------------------

PARALLEL_NAMES = (
    "tail_fraction",
    "mean_length",
    "harmonic_length",
    "flow_cost",
    "drop_times_hardware",
    "log_weight_gap",
)


def parallel_links_suite(network: Network, D: np.ndarray) -> dict[str, float]:
    """The six quantities that decrease on a network of parallel links.

    Links are ranked by length; "link 1" is the shortest.
    """
    if network.n != 2:
        raise ValueError("parallel-links suite needs a two-node network")
    D = np.asarray(D, dtype=float)
    order = np.argsort(network.lengths, kind="stable")
    L = network.lengths[order]
    D = D[order]
    total = D.sum()
    x = D / total
    harmonic = 1.0 / np.sum(x / L)
    drop = 1.0 / np.sum(D / L)
    Q = D * drop / L
    return {
        "tail_fraction": float(x[1:].sum()),
        "mean_length": float(np.dot(x, L)),
        "harmonic_length": float(harmonic),
        "flow_cost": float(np.dot(Q, L)),
        "drop_times_hardware": float(drop * np.dot(D, L)),
        "log_weight_gap": float(np.sum(L[1:] * np.log(D[1:]) - L[0] * np.log(D[0]))),
    }


# -- V minimisation -------------------------------------------------------------------

def minimize_V(
    network: Network,
    rng: np.random.Generator,
    iterations: int = 20000,
    restarts: int = 1,
) -> tuple[float, np.ndarray]:
    """Randomised local search for ``min_D V(D)`` over positive ``D``.

    Works in log-diameters with Gaussian proposals (all coordinates or a
    single one) and a success-based step size.  The hardware term is
    scale-invariant, so after each accepted move the state is rescaled to
    make ``W = 0``.
    """
    best_val, best_D = np.inf, None
    m = network.m
    for _ in range(restarts):
        y = rng.normal(0.0, 1.0, m)
        D = np.exp(y)
        D /= source_cut(network, D)
        y = np.log(D)
        val = compute_V(network, D)
        sigma = 1.0
        for _ in range(iterations):
            step = np.zeros(m)
            if rng.random() < 0.5:
                step[rng.integers(m)] = rng.normal(0.0, sigma)
            else:
                step = rng.normal(0.0, sigma, m)
            cand = np.exp(np.clip(y + step, -700, 50))
            cand /= source_cut(network, cand)
            try:
                cv = compute_V(network, cand)
            except ArithmeticError:
                continue
            if cv < val:
                y, val = np.log(cand), cv
                sigma = min(sigma * 1.5, 4.0)
            else:
                sigma = max(sigma * 0.97, 1e-3)
        if val < best_val:
            best_val, best_D = val, np.exp(y)
    return float(best_val), best_D
