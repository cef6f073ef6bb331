"""Ratio dynamics on the Wheatstone bridge.

Edge labels: ``a = s0-R``, ``b = s0-L``, ``c = R-s1``, ``d = L-s1`` and the
middle edge ``e = L-R``.  Conductances here are ``C_x = D_x / L_x``.  The
ratio ``x_a = C_c / (C_a + C_c)`` is the share of the right path's
resistance sitting on ``a``; its target is ``x*_a = L_a / (L_a + L_c)``.

The middle edge carries flow from L to R exactly when ``x_a > x_b``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .analysis import classify_drops
from .dynamics import IntegratorConfig, integrate_batch
from .network import Network, wheatstone

EDGES = ("a", "b", "c", "d", "e")
REGIONS = ("S", "M", "L")
DEGENERATE_GAP = 1e-12
HYSTERESIS = 1e-12


class DegenerateRegimes(ValueError):
    """``x*_a == x*_b``: the middle range is empty."""


@dataclass(frozen=True)
class WheatstoneState:
    lengths: tuple[float, float, float, float, float]
    D: tuple[float, float, float, float, float]

    def __post_init__(self):
        L = tuple(float(x) for x in self.lengths)
        D = tuple(float(x) for x in self.D)
        if len(L) != 5 or len(D) != 5:
            raise ValueError("need five lengths and five diameters (a..e)")
        if min(L) <= 0 or min(D) <= 0:
            raise ValueError("lengths and diameters must be positive")
        object.__setattr__(self, "lengths", L)
        object.__setattr__(self, "D", D)

    @classmethod
    def from_network(cls, network: Network, D) -> WheatstoneState:
        D = np.asarray(D, dtype=float)
        idx = network.edge_index
        return cls(
            tuple(network.edge(x).length for x in EDGES),
            tuple(D[idx[x]] for x in EDGES),
        )

    def network(self) -> Network:
        return wheatstone(*self.lengths)

    @property
    def C(self) -> tuple[float, ...]:
        return tuple(d / l for d, l in zip(self.D, self.lengths))

    @property
    def S(self) -> float:
        Ca, Cb, Cc, Cd, Ce = self.C
        return Ca * Cb * (Cc + Cd) + (Ca + Cb) * Cc * Cd + (Ca + Cb) * (Cc + Cd) * Ce

    @property
    def x(self) -> tuple[float, float, float, float]:
        Ca, Cb, Cc, Cd, _ = self.C
        xa, xb = Cc / (Ca + Cc), Cd / (Cb + Cd)
        return xa, xb, 1.0 - xa, 1.0 - xb

    @property
    def x_star(self) -> tuple[float, float, float, float]:
        La, Lb, Lc, Ld, _ = self.lengths
        xa, xb = La / (La + Lc), Lb / (Lb + Ld)
        return xa, xb, 1.0 - xa, 1.0 - xb

    def mirrored(self) -> WheatstoneState:
        """Swap the left and right paths (a<->b, c<->d)."""
        La, Lb, Lc, Ld, Le = self.lengths
        Da, Db, Dc, Dd, De = self.D
        return WheatstoneState((Lb, La, Ld, Lc, Le), (Db, Da, Dd, Dc, De))

    def canonical(self) -> tuple[WheatstoneState, bool]:
        """Relabel so that ``x*_a <= x*_b``; returns the state and whether it was swapped."""
        xa, xb = self.x_star[:2]
        return (self.mirrored(), True) if xa > xb else (self, False)


def conductance_derivatives(state: WheatstoneState) -> tuple[float, float, float, float]:
    Ca, Cb, Cc, Cd, Ce = state.C
    La, Lb, Lc, Ld, _ = state.lengths
    S = state.S
    dCa = Ca / (S * La) * (Cb * Cc + Cc * Cd + Cc * Ce + Cd * Ce) - Ca
    dCb = Cb / (S * Lb) * (Ca * Cd + Cc * Cd + Cd * Ce + Cc * Ce) - Cb
    dCc = Cc / (S * Lc) * (Ca * Cd + Ca * Cb + Ca * Ce + Cb * Ce) - Cc
    dCd = Cd / (S * Ld) * (Cb * Cc + Ca * Cb + Cb * Ce + Ca * Ce) - Cd
    return dCa, dCb, dCc, dCd


def ratio_derivatives(state: WheatstoneState) -> tuple[float, float]:
    dxa, dxb = ratio_derivatives_array(np.array(state.D), np.array(state.lengths))
    return float(dxa), float(dxb)


def ratio_derivatives_array(D: np.ndarray, L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``(dx_a/dt, dx_b/dt)`` over trailing axis ``(a, b, c, d, e)``."""
    Ca, Cb, Cc, Cd, Ce = np.moveaxis(D / L, -1, 0)
    La, Lb, Lc, Ld, _ = np.moveaxis(np.broadcast_to(L, np.shape(D)), -1, 0)
    xa, xb = Cc / (Ca + Cc), Cd / (Cb + Cd)
    xc, xd = 1.0 - xa, 1.0 - xb
    sa, sb = La / (La + Lc), Lb / (Lb + Ld)
    sc, sd = 1.0 - sa, 1.0 - sb
    S = Ca * Cb * (Cc + Cd) + (Ca + Cb) * Cc * Cd + (Ca + Cb) * (Cc + Cd) * Ce
    dxa = Ca * Cc / (S * La * Lc * (Ca + Cc) ** 2) * (
        (Cb + Cd + Ce) * (La + Lc) * (Ca + Cc) * (sa - xa) + Ce * Cb * Lc * (sa / sc - xb / xd)
    )
    dxb = Cb * Cd / (S * Lb * Ld * (Cb + Cd) ** 2) * (
        (Ca + Cc + Ce) * (Lb + Ld) * (Cb + Cd) * (sb - xb) + Ce * Ca * Ld * (sb / sd - xa / xc)
    )
    return dxa, dxb


def _region(x: float, lo: float, hi: float) -> str:
    # boundary points go to the lower region
    if x <= lo:
        return "S"
    if x <= hi:
        return "M"
    return "L"


def regime_classify(state: WheatstoneState) -> tuple[str, str]:
    """Regions of ``(x_a, x_b)`` after relabelling to ``x*_a < x*_b``."""
    st, _ = state.canonical()
    lo, hi = st.x_star[:2]
    if hi - lo <= DEGENERATE_GAP:
        raise DegenerateRegimes(f"x*_a = x*_b = {lo!r}")
    xa, xb = st.x[:2]
    return _region(xa, lo, hi), _region(xb, lo, hi)


# -- direction changes ---------------------------------------------------------------

@dataclass(frozen=True)
class DirectionChanges:
    count: int
    times: tuple[float, ...]


def sign_changes(t: np.ndarray, values: np.ndarray, band: float = HYSTERESIS) -> DirectionChanges:
    """Sign flips of ``values``; samples with ``|v| <= band`` keep the previous sign."""
    last = 0
    times = []
    for tk, v in zip(np.asarray(t), np.asarray(values)):
        if abs(v) <= band:
            continue
        s = 1 if v > 0 else -1
        if last and s != last:
            times.append(float(tk))
        last = s
    return DirectionChanges(len(times), tuple(times))


def direction_changes(trajectory, edge: str = "e", band: float = HYSTERESIS) -> DirectionChanges:
    return sign_changes(trajectory.t, trajectory.column(edge, "Q"), band)


# -- regime rules along sampled trajectories -----------------------------------------

@dataclass
class RegimeAudit:
    reentered_SS: bool = False
    reentered_LL: bool = False
    rl_to_lr: int = 0
    mm_changes: int = 0
    mm_monotone_violations: int = 0

    @property
    def ok(self) -> bool:
        return not (self.reentered_SS or self.reentered_LL or self.rl_to_lr or self.mm_monotone_violations) and self.mm_changes <= 1


def audit_regimes(xa: np.ndarray, xb: np.ndarray, lo: float, hi: float, dxa=None, dxb=None, band: float = 1e-9) -> RegimeAudit:
    """Check the transition rules on a sampled ``(x_a, x_b)`` path with ``lo = x*_a < hi = x*_b``.

    ``band`` widens every region boundary so that samples converging onto a
    boundary are not misread as crossings.
    """
    audit = RegimeAudit()
    in_SS = (xa < lo - band) & (xb < lo - band)
    out_SS = (xa > lo + band) | (xb > lo + band)
    in_LL = (xa > hi + band) & (xb > hi + band)
    out_LL = (xa < hi - band) | (xb < hi - band)
    audit.reentered_SS = bool(np.any(in_SS & (np.cumsum(out_SS) > 0)))
    audit.reentered_LL = bool(np.any(in_LL & (np.cumsum(out_LL) > 0)))

    outside = out_SS & out_LL
    in_MM = (xa > lo + band) & (xa < hi - band) & (xb > lo + band) & (xb < hi - band)
    gap = xa - xb
    sign = np.where(gap > band, 1, np.where(gap < -band, -1, 0))
    for k in range(len(gap) - 1):
        if outside[k] and outside[k + 1] and sign[k] < 0 and sign[k + 1] > 0:
            audit.rl_to_lr += 1
    # flips while staying in the middle box
    run_last = 0
    for k in range(len(gap)):
        if not in_MM[k]:
            run_last = 0
            continue
        if sign[k] and run_last and sign[k] != run_last:
            audit.mm_changes += 1
        if sign[k]:
            run_last = sign[k]
    if dxa is not None:
        audit.mm_monotone_violations = int(np.sum(in_MM & ((dxa > 0) | (dxb < 0))))
    return audit


# -- sweeps ---------------------------------------------------------------------------

@dataclass
class SweepRecord:
    lengths: tuple[float, ...]
    D0: tuple[float, ...]
    changes: int
    stabilized_as: str
    audit: RegimeAudit = field(default_factory=RegimeAudit)

    CSV_HEADER = ("La", "Lb", "Lc", "Ld", "Le", "Da0", "Db0", "Dc0", "Dd0", "De0", "changes", "stabilized_as")

    def row(self) -> list:
        return [*(repr(x) for x in self.lengths), *(repr(x) for x in self.D0), self.changes, self.stabilized_as]


def sample_instance(rng: np.random.Generator, length_range=(0.5, 2.0), min_gap: float = 0.02) -> tuple[float, ...]:
    """Random lengths, already relabelled to ``x*_a < x*_b``, shortest path avoiding ``e``."""
    while True:
        La, Lb, Lc, Ld, Le = rng.uniform(*length_range, size=5)
        direct = min(La + Lc, Lb + Ld)
        if min(La + Le + Ld, Lb + Le + Lc) <= direct:
            continue
        if La / (La + Lc) > Lb / (Lb + Ld):
            La, Lb, Lc, Ld = Lb, La, Ld, Lc
        if Lb / (Lb + Ld) - La / (La + Lc) >= min_gap:
            return (La, Lb, Lc, Ld, Le)


def _batch_ratios(D: np.ndarray, L: np.ndarray):
    C = D / L
    xa = C[..., 2] / (C[..., 0] + C[..., 2])
    xb = C[..., 3] / (C[..., 1] + C[..., 3])
    return xa, xb


def sweep(
    n: int = 500,
    seed: int = 0,
    t_end: float = 40.0,
    dt: float = 0.01,
    record_stride: int = 5,
    tail: float = 0.25,
    d0_range=(-3.0, 1.0),
) -> list[SweepRecord]:
    """Integrate ``n`` random instances in one batch and audit each trajectory.

    Initial diameters are log-uniform over ``10 ** d0_range``.
    """
    rng = np.random.default_rng(seed)
    L = np.array([sample_instance(rng) for _ in range(n)])
    D0 = 10.0 ** rng.uniform(*d0_range, size=(n, 5))
    net = wheatstone()
    cfg = IntegratorConfig(dt=dt, t_end=t_end, record_stride=record_stride)
    traj = integrate_batch(net, D0, cfg, lengths=L)
    xa, xb = _batch_ratios(traj.D, L)
    dxa, dxb = ratio_derivatives_array(traj.D, L)
    Qe = traj.Q[..., net.edge_index["e"]]
    iL, iR = net.node_index["L"], net.node_index["R"]
    drops = traj.p[..., iL] - traj.p[..., iR]
    window = traj.t >= traj.t[-1] - tail * (traj.t[-1] - traj.t[0])
    out = []
    for r in range(n):
        lo = L[r, 0] / (L[r, 0] + L[r, 2])
        hi = L[r, 1] / (L[r, 1] + L[r, 3])
        audit = audit_regimes(xa[:, r], xb[:, r], lo, hi, dxa[:, r], dxb[:, r])
        kind, sign = classify_drops(drops[window, r], 1e-3 * L[r].min())
        label = {1: "directed(L,R)", -1: "directed(R,L)"}.get(sign, kind) if kind == "directed" else kind
        changes = sign_changes(traj.t, Qe[:, r]).count
        out.append(SweepRecord(tuple(map(float, L[r])), tuple(map(float, D0[r])), changes, label, audit))
    return out


def sweep_csv(records: list[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SweepRecord.CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def search_multiple_changes(
    trials: int = 2000,
    seed: int = 0,
    t_end: float = 30.0,
    dt: float = 0.01,
    length_range=(0.2, 5.0),
    d0_range=(-4.0, 2.0),
    want: int = 2,
):
    """Random search for an instance whose middle edge flips at least ``want`` times.

    Returns ``(lengths, D0, DirectionChanges)`` of the instance with the most
    flips, or ``None`` when no trial reaches ``want``.
    """
    rng = np.random.default_rng(seed)
    L = np.array([sample_instance(rng, length_range, min_gap=1e-3) for _ in range(trials)])
    D0 = 10.0 ** rng.uniform(*d0_range, size=(trials, 5))
    net = wheatstone()
    cfg = IntegratorConfig(dt=dt, t_end=t_end, record_stride=1)
    traj = integrate_batch(net, D0, cfg, lengths=L)
    Qe = traj.Q[..., net.edge_index["e"]]
    best = None
    for r in range(trials):
        ch = sign_changes(traj.t, Qe[:, r])
        if best is None or ch.count > best[2].count:
            best = (tuple(map(float, L[r])), tuple(map(float, D0[r])), ch)
    return best if best and best[2].count >= want else None
