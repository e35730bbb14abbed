"""Localized oscillatory integrals behind the high-frequency resolvent bound.

Model facts used throughout (tau = 1, one unstable dimension):
r = b^{-2 rho}, varsigma = 1 - 4 rho, and the unstable Jacobian of T_{-k} is
e^{-k}. Pieces of expanded unstable leaves are horocycle segments y n-(s).
Two pieces through one ball are related by a stable offset w and a flow
offset c, and the phase between them is g(v) = c - 2 ln(1 - v w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammainccinv

from . import model as M
from . import observables as O
from . import operators as P
from .errors import ConfigError, DomainError, SamplingError, ScaleError, SingularConfigurationError
from .fitting import line_fit
from .structures import holonomy_bisection, holonomy_params
from .temporal import temporal_delta_closed

R0 = 0.1  # mandens disk radius, below half the injectivity radius
ALPHA = 0.9  # Hoelder exponent of the amplitudes
LAMBDA = math.e  # unstable expansion per unit time
D = 1  # unstable dimension
MANDENS_C = 10.0
MAX_PIECE_SAMPLES = 1_000_000
_ANCHOR_STEP = 1.0


@dataclass(frozen=True)
class DolgopyatConfig:
    rho: float = 0.1
    tau: float = 1.0
    b: float = 1024.0
    k: int = 4
    l: int | None = None  # None: the smallest l with e^{-l} r0 <= b^{-varsigma}
    thetaCd: float = 3.0
    cd: float = 1.5
    varrho: float = field(init=False)
    varsigma: float = field(init=False)
    r: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if not 0 < self.rho < self.tau / 8:
            raise ConfigError("rho must lie in (0, tau/8)")
        if not self.b > 1:
            raise ConfigError("b must exceed 1")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if not (self.thetaCd >= 1 and self.cd > 1):
            raise ConfigError("need thetaCd >= 1 and cd > 1")
        varrho = (1 - self.tau + 2 * self.rho) / (2 - self.tau)
        varsigma = (1 - 4 * self.rho) / (2 - self.tau)
        object.__setattr__(self, "varrho", varrho)
        object.__setattr__(self, "varsigma", varsigma)
        object.__setattr__(self, "r", self.b ** (-varrho))
        lmin = min_power(self.b, varsigma)
        if self.l is None:
            object.__setattr__(self, "l", lmin)
        elif self.l < lmin:
            raise ConfigError(f"l = {self.l} violates lambda^-l r0 <= b^-varsigma (need l >= {lmin})")

    @property
    def nearThreshold(self) -> float:
        return self.b ** (-self.varsigma)


def min_power(b: float, varsigma: float) -> int:
    """Smallest l >= 1 with LAMBDA^{-l} R0 <= b^{-varsigma} (compared in logs)."""
    need = (varsigma * math.log(b) + math.log(R0)) / math.log(LAMBDA)
    return max(1, math.ceil(need - 1e-12))


# ---------------------------------------------------------------------------
# translate index: radius queries on M against a finite point set


class TranslateIndex:
    """Radius queries against the translates gamma*c of finitely many points of M.

    Base points move at most sqrt(2) per unit of log distance, so candidates
    are the translates whose base point lies in the hyperbolic disk of radius
    sqrt(2) R about the query base point.
    """

    def __init__(self, points: np.ndarray, radius: float, group: M.FuchsianGroup | None = None,
                 chunk: int = 1024):
        group = group or M.bolza_group()
        pts = np.asarray(points, dtype=float).reshape(-1, 2, 2)
        if not 0 < radius <= M.LOG_DOMAIN:
            raise DomainError("index radius must lie in (0, LOG_DOMAIN]")
        reach = math.cosh(group.octagonVertexRadius + math.sqrt(2) * radius + 1e-6)
        mats, owner = [], []
        for s in range(0, pts.shape[0], chunk):
            tr = np.einsum("kij,njl->knil", group.neighbors, pts[s:s + chunk])
            keep = M.cosh_base_distance(tr) <= reach
            mats.append(tr[keep])
            owner.append(np.nonzero(keep)[1] + s)
        self.translates = np.concatenate(mats) if mats else np.empty((0, 2, 2))
        self.owner = np.concatenate(owner) if owner else np.empty(0, int)
        self._inv = M.sl2_inverse(self.translates)
        w = M.disk_point(self.translates)
        self._tree = cKDTree(np.column_stack([w.real, w.imag]))
        self.radius = float(radius)
        self.size = pts.shape[0]

    def _candidates(self, p: np.ndarray, radius: float):
        # hyperbolic ball of radius sqrt(2) R about the base point, as a Euclidean disk
        w = M.disk_point(p)
        th = math.tanh((math.sqrt(2) * radius + 1e-9) / 2)
        a = np.abs(w) ** 2
        den = 1 - a * th * th
        ctr = w * (1 - th * th) / den
        rad = th * (1 - a) / den + 1e-12
        return self._tree.query_ball_point(np.column_stack([ctr.real, ctr.imag]), rad)

    def query(self, p: np.ndarray, radius: float | None = None, chunk: int = 2048):
        """(queryIdx, ownerIdx, distance, translateIdx) for pairs within ``radius``.

        One row per (query, owner) pair: the closest translate wins. Rows are
        sorted by owner, then query index.
        """
        radius = self.radius if radius is None else float(radius)
        if radius > self.radius:
            raise DomainError("query radius exceeds the index radius")
        p = np.asarray(p, dtype=float).reshape(-1, 2, 2)
        parts = []
        for s in range(0, p.shape[0], chunk):
            blk = p[s:s + chunk]
            hits = self._candidates(blk, radius)
            counts = np.fromiter((len(h) for h in hits), int, len(hits))
            if counts.sum() == 0:
                continue
            qi = np.repeat(np.arange(blk.shape[0]), counts)
            ti = np.fromiter((j for h in hits for j in h), int, int(counts.sum()))
            d = M.local_distance(M.mul2(self._inv[ti], blk[qi]))
            ok = np.isfinite(d) & (d <= radius)
            parts.append((qi[ok] + s, ti[ok], d[ok]))
        if not parts:
            e = np.empty(0, int)
            return e, e, np.empty(0), e
        qi, ti, d = (np.concatenate(x) for x in zip(*parts))
        ow = self.owner[ti]
        order = np.lexsort((d, qi, ow))
        qi, ti, d, ow = qi[order], ti[order], d[order], ow[order]
        first = np.ones(qi.size, bool)
        first[1:] = (qi[1:] != qi[:-1]) | (ow[1:] != ow[:-1])
        return qi[first], ow[first], d[first], ti[first]


# ---------------------------------------------------------------------------
# partitions of unity


def _bump01(x):
    """C-infinity step: 1 for x <= 0, 0 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1 - x, 1.0)), 0.0)
        c = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    return a / (a + c)


def _time_bump(t):
    s = np.asarray(t, dtype=float) - 0.5
    inside = np.abs(s) < 1
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(inside, np.exp(-1.0 / np.where(inside, 1 - s * s, 1.0)), 0.0)


@dataclass(frozen=True)
class TimePartition:
    """p with support in [-1/2, 3/2] and sum_k p(t - k) = 1."""

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        frac = t - np.floor(t)
        period = sum(_time_bump(frac + j) for j in range(-2, 3))
        return _time_bump(t) / period


@dataclass
class SpacePartition:
    """phi_i = psi_i / sum_j psi_j with psi_i = 1 on B_r(x_i), 0 outside B_{cd r}(x_i).

    Centers form an r-net, so every point has some psi_j = 1 and the
    denominator is at least 1; gradients are then O(1/r).
    """

    centers: np.ndarray
    r: float
    cd: float
    index: TranslateIndex = field(repr=False)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def raw(self, pts):
        qi, ci, d, _ = self.index.query(pts, self.cd * self.r)
        return qi, ci, _bump01((d / self.r - 1) / (self.cd - 1))

    def weights(self, pts):
        """(pointIdx, centerIdx, phi) for every nonzero phi_i(p)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2, 2)
        qi, ci, psi = self.raw(pts)
        tot = np.bincount(qi, psi, minlength=pts.shape[0])
        keep = psi > 0
        return qi[keep], ci[keep], psi[keep] / tot[qi[keep]]

    def covered(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2, 2)
        qi, _, _, _ = self.index.query(pts, self.r)
        out = np.zeros(pts.shape[0], bool)
        out[qi] = True
        return out


def _greedy_net(cands: np.ndarray, r: float, start: np.ndarray | None = None, block: int = 512) -> np.ndarray:
    """Maximal r-separated subset, scanning ``cands`` in order."""
    centers = [] if start is None else [start]
    n_acc = 0 if start is None else start.shape[0]
    for s in range(0, cands.shape[0], block):
        blk = cands[s:s + block]
        keep = np.ones(blk.shape[0], bool)
        if n_acc:
            qi, _, _, _ = TranslateIndex(np.concatenate(centers), r).query(blk)
            keep[qi] = False
        sub = blk[keep]
        if sub.shape[0] == 0:
            continue
        qi, ow, _, _ = TranslateIndex(sub, r).query(sub)
        nbrs = [[] for _ in range(sub.shape[0])]
        for a, c in zip(qi, ow):
            if a != c:
                nbrs[a].append(c)
        blocked = np.zeros(sub.shape[0], bool)
        take = []
        for i in range(sub.shape[0]):
            if not blocked[i]:
                take.append(i)
                blocked[nbrs[i]] = True
        centers.append(sub[take])
        n_acc += len(take)
    return np.concatenate(centers)


def space_partition(r: float, cd: float = 1.5, seed: int = 0, auditPoints: int = 10_000,
                    rounds: int = 24, separation: float = 0.7) -> SpacePartition:
    """Greedy net at spacing separation * r over dense candidates, then patched with audit holes.

    The log distance is not a metric, so a maximal separated set can leave
    slivers slightly farther than r from every center; patch rounds of
    4 * auditPoints fresh points run until two consecutive rounds find none.
    """
    if not 1e-4 < r < 0.3:
        raise ConfigError("r must lie in (1e-4, 0.3)")
    ncand = int(min(4e5, math.ceil(150 / r**3)))
    cands = M.haar_sample_array(seed, ncand, "rejection", stream=(0x4E4554,))
    centers = _greedy_net(cands, separation * r)
    clean = 0
    for rnd in range(rounds):
        audit = M.haar_sample_array(seed, 4 * auditPoints, "rejection", stream=(0x4E4554, rnd + 1))
        part = SpacePartition(centers, r, cd, TranslateIndex(centers, cd * r))
        holes = audit[~part.covered(audit)]
        if holes.shape[0] == 0:
            clean += 1
            if clean == 2:
                return part
            continue
        clean = 0
        centers = _greedy_net(holes, separation * r, start=centers)
    raise SamplingError("r-net construction failed the coverage audit")


def build_partitions(cfg: DolgopyatConfig, seed: int = 0, auditPoints: int = 10_000):
    return TimePartition(), space_partition(cfg.r, cfg.cd, seed, auditPoints)


# ---------------------------------------------------------------------------
# expanded unstable leaves


def horocycle_points(y: np.ndarray, s: np.ndarray, group: M.FuchsianGroup | None = None) -> np.ndarray:
    """Reduced representatives of y n-(s), anchored every unit of s."""
    s = np.asarray(s, dtype=float)
    k = np.round(s / _ANCHOR_STEP).astype(int)
    kmin, kmax = min(int(k.min()), 0), max(int(k.max()), 0)
    anchors = np.empty((kmax - kmin + 1, 2, 2))
    anchors[-kmin] = M.reduce_array(np.asarray(y, dtype=float).reshape(2, 2), group)
    fwd, back = M.nminus_mat(_ANCHOR_STEP), M.nminus_mat(-_ANCHOR_STEP)
    for j in range(1, kmax + 1):
        anchors[j - kmin] = M.reduce_array(anchors[j - 1 - kmin] @ fwd, group)
    for j in range(-1, kmin - 1, -1):
        anchors[j - kmin] = M.reduce_array(anchors[j + 1 - kmin] @ back, group)
    return M.reduce_array(M.mul2(anchors[k - kmin], M.nminus_mat(s - k * _ANCHOR_STEP)), group)


@dataclass(frozen=True)
class LeafPiece:
    centerIndex: int
    pieceIndex: int
    base: M.ManifoldPoint  # T_k x; the piece is base n-(s) for s in paramInterval
    paramInterval: tuple
    iterationK: int
    discarded: bool
    minDistance: float


@dataclass(frozen=True)
class PieceReport:
    pieces: tuple
    discardedMeasure: float  # preimage measure of the union of discarded pieces
    leafMeasure: float  # m^u(W^u_delta(x)) = 2 delta
    samples: int


def _union_length(intervals) -> float:
    tot, hi = 0.0, -math.inf
    for a, b in sorted(intervals):
        if b <= hi:
            continue
        tot += b - max(a, hi)
        hi = b
    return tot


def expand_leaf_pieces(x, cfg: DolgopyatConfig, partition: SpacePartition | np.ndarray, delta: float = 0.3,
                       step: float | None = None) -> PieceReport:
    """Pieces of T_k W^u_delta(x) inside the balls B_{thetaCd cd r}(x_i) that meet B_{cd r}(x_i).

    A piece is discarded when one of its ends is an end of the expanded leaf
    rather than a point of the outer sphere; a piece containing the whole
    leaf is kept.
    """
    xm = x.m if isinstance(x, M.ManifoldPoint) else np.asarray(x, dtype=float)
    centers = partition.centers if isinstance(partition, SpacePartition) else np.asarray(partition).reshape(-1, 2, 2)
    r = cfg.r
    L = delta * math.exp(cfg.k)
    h = step or r / 4
    n = 2 * math.ceil(L / h) + 1
    if n > MAX_PIECE_SAMPLES:
        raise ScaleError(f"{n} leaf samples exceed the budget; reduce k")
    s = np.linspace(-L, L, n)
    y = M.flow_long(xm[None], float(cfg.k))[0]
    pts = horocycle_points(y, s)
    outer = cfg.thetaCd * cfg.cd * r
    qi, ci, d, _ = TranslateIndex(centers, outer).query(pts)
    pieces, disc = [], []
    if qi.size:
        brk = np.nonzero((np.diff(ci) != 0) | (np.diff(qi) != 1))[0] + 1
        starts = np.concatenate([[0], brk])
        ends = np.concatenate([brk, [qi.size]])
        counter = {}
        for a, b in zip(starts, ends):
            dmin = float(d[a:b].min())
            if dmin > cfg.cd * r:
                continue
            i0, i1 = int(qi[a]), int(qi[b - 1])
            lo_end, hi_end = i0 == 0, i1 == n - 1
            dropped = (lo_end or hi_end) and not (lo_end and hi_end)
            c = int(ci[a])
            m = counter.get(c, 0)
            counter[c] = m + 1
            pieces.append(LeafPiece(c, m, M.point_from_array(y), (float(s[i0]), float(s[i1])), cfg.k, dropped, dmin))
            if dropped:
                disc.append((float(s[i0]), float(s[i1])))
    pieces.sort(key=lambda p: (p.iterationK, p.centerIndex, p.pieceIndex))
    return PieceReport(tuple(pieces), _union_length(disc) * math.exp(-cfg.k), 2 * delta, n)


# ---------------------------------------------------------------------------
# phase function between two pieces in one ball


@dataclass(frozen=True)
class PairGeometry:
    """Piece j is y n-(v) (t = 0); piece j' passes through y n+(w) with time offset c."""

    w: float
    c: float = 0.0


@dataclass(frozen=True)
class PhasePiece:
    j: int
    jPrime: int
    phaseSamples: tuple  # ((v, g(v)), ...)
    pairingClass: str  # "A" near, "B" separated
    geometry: PairGeometry
    maxDisagreement: float

    def __call__(self, v):
        if self.j == self.jPrime:
            return np.zeros_like(np.asarray(v, dtype=float))
        return phase_closed(v, self.geometry)


def phase_closed(v, geom: PairGeometry):
    """g(v) = c - 2 ln(1 - v w), vectorized."""
    return geom.c - 2.0 * np.log1p(-np.asarray(v, dtype=float) * geom.w)


def phase_derivative(v, geom: PairGeometry):
    """d(alpha)(v, w_j'(v)) with w_j'(v) = w / (1 - v w) U+ the holonomy displacement."""
    s = geom.w / (1 - np.asarray(v, dtype=float) * geom.w)
    return 2.0 * s  # = contact_pairing(V_UNSTABLE, s V_STABLE)


def phase_function(j: int, jPrime: int, geom: PairGeometry, params, b: float, varsigma: float,
                   tol: float = 1e-8) -> PhasePiece:
    """g_{j,j'} on the sampled parameters, from the holonomy and from the temporal distance."""
    v = np.asarray(params, dtype=float)
    cls = "B" if abs(geom.w) >= b ** (-varsigma) else "A"
    if j == jPrime:
        return PhasePiece(j, jPrime, tuple((float(a), 0.0) for a in v), cls, PairGeometry(0.0, 0.0), 0.0)
    # way 1: flow time gained by the stable holonomy, then the time coordinate on piece j'
    g1 = np.array([geom.c - holonomy_bisection(float(a), geom.w)[1] for a in v])
    # way 2: temporal distance plus the constant offset t(y_j') - t(y_j)
    g2 = np.array([temporal_delta_closed(float(a), geom.w).delta + geom.c for a in v])
    dis = float(np.max(np.abs(g1 - g2))) if v.size else 0.0
    if dis > tol:
        raise SamplingError(f"phase computations disagree by {dis:.2e}")
    return PhasePiece(j, jPrime, tuple(zip(v.tolist(), g1.tolist())), cls, geom, dis)


def derivative_check(geom: PairGeometry, b: float, vmax: float, per_cell: int = 8) -> float:
    """max over cells of |g(u') - g(a_q) - (u' - a_q) d(alpha)(v, w)| at the frozen point a_q."""
    cells = cell_edges(geom, b, -vmax, vmax)
    worst = 0.0
    for a, e in zip(cells[:-1], cells[1:]):
        u = np.linspace(a, e, per_cell)
        lin = phase_closed(a, geom) + (u - a) * phase_derivative(a, geom)
        worst = max(worst, float(np.max(np.abs(phase_closed(u, geom) - lin))))
    return worst


# ---------------------------------------------------------------------------
# cell decomposition of the oscillatory integral


def frozen_cell_factor() -> complex:
    """int_0^1 e^{-2 pi i s} ds in closed form."""
    return (1 - np.exp(-2j * np.pi)) / (2j * np.pi)


def cell_edges(geom: PairGeometry, b: float, lo: float, hi: float) -> np.ndarray:
    """a_0 = lo, b (a_{q+1} - a_q) g'(a_q) = 2 pi, last cell cut at hi."""
    if max(abs(lo), abs(hi)) * abs(geom.w) > 0.9:
        raise SingularConfigurationError("1 - v w comes within 0.1 of zero on the piece")
    edges = [lo]
    while edges[-1] < hi:
        gp = float(phase_derivative(edges[-1], geom))
        if gp <= 0:
            raise DomainError("phase derivative must be positive on the piece")
        edges.append(edges[-1] + 2 * math.pi / (b * gp))
    edges[-1] = hi
    return np.array(edges)


@dataclass(frozen=True)
class OscillatoryResult:
    value: complex
    cells: int
    maxCellWidth: float
    r: float
    holderNorm: float


class BallAmplitude:
    """G(xi) phibar(xi) on the weak-unstable piece through y_j = x_i n+(-w/2).

    phibar(xi) = phi_i(xi) phi_i(Psi(xi)) with phi_i the radial plateau bump
    of the space partition (1 on B_r(x_i), 0 outside B_{cd r}(x_i)), and
    xi(v, t) = y_j n-(v) a(t).
    """

    def __init__(self, center: np.ndarray, geom: PairGeometry, r: float, cd: float, G, tNodes: int = 24):
        self.center, self.geom, self.r, self.cd, self.G = np.asarray(center, float), geom, r, cd, G
        tmax = 1.05 * cd * r
        tn, tw = np.polynomial.legendre.leggauss(tNodes)
        self.t, self.tw = tmax * tn, tmax * tw

    def _phi(self, local: np.ndarray) -> np.ndarray:
        d = M.local_distance(local)
        d = np.where(np.isfinite(d), d, np.inf)
        return _bump01((d / self.r - 1) / (self.cd - 1))

    def local(self, v: np.ndarray) -> np.ndarray:
        """x_i^{-1} xi(v, t) on the (v, t) grid, shape (len(v), len(t), 2, 2)."""
        v = np.asarray(v, dtype=float)
        yj = M.nplus_mat(-self.geom.w / 2)
        left = M.mul2(yj[None], M.nminus_mat(v))
        return M.mul2(left[:, None], M.a_mat(self.t)[None])

    def density(self, v) -> np.ndarray:
        """G phibar on the grid, shape (len(v), len(t))."""
        v = np.asarray(v, dtype=float)
        loc = self.local(v)
        rho2, _, tau, _ = np.vectorize(holonomy_params)(v, self.geom.w)
        yjp = M.nplus_mat(self.geom.w / 2)
        img = M.mul2(M.mul2(yjp[None], M.nminus_mat(rho2))[:, None], M.a_mat(tau[:, None] + self.t[None]))
        amp = self._phi(loc) * self._phi(img)
        out = np.zeros(amp.shape)
        nz = amp > 0
        if np.any(nz):
            out[nz] = amp[nz] * self.G(M.reduce_array(M.mul2(self.center[None], loc[nz])))
        return out

    def H(self, v) -> np.ndarray:
        """int G phibar dt along the flow direction."""
        return self.density(v) @ self.tw


def holder_norm_on_grid(amp: BallAmplitude, vmax: float, alpha: float = ALPHA, n: int = 24) -> float:
    """|G|_inf + the alpha-Hoelder quotient of G over a (v, t) grid of the piece (leaf coordinates)."""
    v = np.linspace(-vmax, vmax, n)
    loc = amp.local(v)
    g = amp.G(M.reduce_array(M.mul2(amp.center[None], loc.reshape(-1, 2, 2)))).ravel()
    vv, tt = np.meshgrid(v, amp.t, indexing="ij")
    pts = np.column_stack([vv.ravel(), tt.ravel()])
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    dg = np.abs(g[:, None] - g[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dist > 0, dg / dist**alpha, 0.0)
    return float(np.abs(g).max() + q.max())


def oscillatory_integral(phase: PhasePiece, amp: BallAmplitude, b: float, glNodes: int = 10) -> OscillatoryResult:
    """sum over cells of [frozen cell integral + correction] for int e^{-i b g} G phibar.

    Full cells have frozen integral exactly zero; only the last (cut) cell
    keeps a frozen part, and it is evaluated in closed form.
    """
    if phase.pairingClass != "B":
        raise DomainError("oscillatory cells are only used for separated (class B) pairs")
    geom, r = phase.geometry, amp.r
    vmax = 1.05 * amp.cd * r  # phi_i vanishes beyond cd r from x_i
    edges = cell_edges(geom, b, -vmax, vmax)
    widths = np.diff(edges)
    a = edges[:-1]
    He = amp.H(edges)
    Ha = He[:-1]
    xg, wg = np.polynomial.legendre.leggauss(glNodes)
    u = a[:, None] + widths[:, None] * (xg[None] + 1) / 2
    Hu = amp.H(u.ravel()).reshape(u.shape)
    # the cell analysis only matters where the amplitude lives
    live = (He[:-1] != 0) | (He[1:] != 0) | np.any(Hu != 0, axis=1)
    if np.any(live) and widths[live].max() >= r:
        raise ConfigError(f"cells of width {widths[live].max():.3f} are not small against r = {r:.3f}; increase b")
    g_u = phase_closed(u, geom)
    g_a = phase_closed(a, geom)
    gp_a = phase_derivative(a, geom)
    exact = np.exp(-1j * b * g_u) * Hu
    frozen = np.exp(-1j * b * (g_a[:, None] + gp_a[:, None] * (u - a[:, None]))) * Ha[:, None]
    corr = (exact - frozen) @ wg * widths / 2
    # frozen integrals: zero on full cells, closed form on the cut one
    kap = b * gp_a[-1] * widths[-1]
    frz = np.exp(-1j * b * g_a[-1]) * Ha[-1] * widths[-1] * ((1 - np.exp(-1j * kap)) / (1j * kap))
    return OscillatoryResult(complex(corr.sum() + frz), int(widths.size), float(widths[live].max(initial=0.0)), r,
                             holder_norm_on_grid(amp, vmax))


def _envelope_fit(x, y):
    """Nonincreasing envelope from the right and its log-log slope."""
    env = np.maximum.accumulate(np.asarray(y, float)[::-1])[::-1]
    fit = line_fit(np.log(x), np.log(env))
    return env, fit


@dataclass(frozen=True)
class OscillatoryScan:
    b: np.ndarray
    normalized: np.ndarray  # |I| / (r^2 |G|_{C^alpha})
    envelope: np.ndarray
    exponent: float
    r2: float
    fittedC: float
    predicted: float  # alpha * rho


def oscillatory_scan(bGrid, rho: float = 0.1, center=None, G=None, wFactor: float = 1.0, cd: float = 1.5,
                     seed: int = 5) -> OscillatoryScan:
    """|I(b)| for a separated pair at stable offset w = wFactor r(b) in one ball."""
    bGrid = np.asarray(bGrid, float)
    c = M.haar_sample_array(seed, 1, "rejection")[0] if center is None else np.asarray(center, float)
    G = G if G is not None else O.Observable([O.Bump(c, 0.7)], 0.5)
    vals = []
    for b in bGrid:
        cfg = DolgopyatConfig(rho=rho, b=float(b), cd=cd)
        geom = PairGeometry(wFactor * cfg.r, 0.0)
        ph = phase_function(0, 1, geom, [], b, cfg.varsigma)
        amp = BallAmplitude(c, geom, cfg.r, cd, G)
        res = oscillatory_integral(ph, amp, b)
        vals.append(abs(res.value) / (cfg.r**2 * res.holderNorm))
    vals = np.array(vals)
    env, fit = _envelope_fit(bGrid, vals)
    pred = ALPHA * rho
    return OscillatoryScan(bGrid, vals, env, -fit.slope, fit.r2, float(np.max(vals * bGrid**pred)), pred)


# ---------------------------------------------------------------------------
# sup of a^l A^{u*} R(z)^{*l} phi over a point net


def dual_average_trajectories(phi, x: np.ndarray, u: np.ndarray, kw: np.ndarray, h: float, nodes: int) -> np.ndarray:
    """sum_k kw_k phi(T_{ih} (x n-(u_k))) for each point x and node i."""
    x = np.asarray(x, float).reshape(-1, 2, 2)
    xi = M.reduce_array(M.mul2(x[:, None], M.nminus_mat(u)[None])).reshape(-1, 2, 2)
    traj = P.trajectory(phi, xi, h, nodes, direction=1.0).reshape(x.shape[0], u.size, nodes)
    return np.einsum("k,xkn->xn", kw, traj)


def dual_power_values(phi, x: np.ndarray, a: float, b: float, l: int, eps: float = 0.1, quadPoints: int = 17,
                      h: float = 0.0025) -> np.ndarray:
    """A^{u*}_eps R(z)^{*l} phi at each point (complex), z = a + ib."""
    T = float(gammainccinv(l, P.TRUNCATION_TOL)) / a
    panels = math.ceil(T / (2 * h))
    acfg = P.AverageConfig(deltaS=eps, epsU=eps, quadPoints=quadPoints)
    u, ker = P.dual_kernel(acfg)
    _, wq = acfg.nodes(eps)
    avg = dual_average_trajectories(phi, x, u, ker * wq, h, 2 * panels + 1)
    return avg @ P.laplace_weights(complex(a, b), h, panels, l)


@dataclass(frozen=True)
class PhiScan:
    b: np.ndarray
    l: np.ndarray
    sup: np.ndarray  # a^l |Phi_l(phi)|_inf, maximized over the dictionary slice
    quadError: np.ndarray  # |value(h) - value(h/2)| at the maximizing point
    normalized: np.ndarray  # sup / (l |phi|_inf)
    resolved: np.ndarray  # quadError below half the value
    envelope: np.ndarray
    gamma: float
    r2: float
    maxDoublingRatio: float
    partial: bool


def phi_l_sup_scan(bGrid, phis, rho: float = 0.1, a: float = 1.0, eps: float = 0.1, netSize: int = 12,
                   quadPoints: int = 17, h: float = 0.005, seed: int = 0, maxEvaluations: float = 1e8) -> PhiScan:
    """a^l |A^{u*}_eps R(z)^{*l} phi|_inf on a net of points whose forward orbits cross supp phi.

    The weights integrate t^{l-1} e^{-zt} against the quadratic interpolant of
    the amplitude, so the step only has to resolve phi o T_t, not e^{-ibt}.
    Trajectories are sampled at h/2; the h-rule on every other node gives a
    quadrature error estimate, and the fit uses only resolved values.
    """
    bGrid = np.asarray(bGrid, float)
    ls = np.array([DolgopyatConfig(rho=rho, b=float(b)).l for b in bGrid])
    T = float(gammainccinv(int(ls.max()), P.TRUNCATION_TOL)) / a
    panels = 2 * math.ceil(T / (2 * h))  # panels at step h/2; even so the h-rule fits too
    nodes = 2 * panels + 1
    acfg = P.AverageConfig(deltaS=eps, epsU=eps, quadPoints=quadPoints)
    u, ker = P.dual_kernel(acfg)
    _, wq = acfg.nodes(eps)
    kw = ker * wq
    budget = netSize * quadPoints * nodes
    nphi = int(min(len(phis), maxEvaluations // budget))
    partial = nphi < len(phis)
    sup = np.zeros(bGrid.size)
    err = np.zeros(bGrid.size)
    scale = []
    for m, phi in enumerate(phis[:nphi]):
        rng = M.make_rng(seed, 0x50484953, m)
        if isinstance(phi, O.Observable) and not phi.bumps:
            x = M.haar_sample_array(seed, netSize, "rejection", stream=(0x50484953, m))
        else:
            x = phi.support_sample(rng, netSize)
            x = np.stack([M.flow_array(p[None], -float(s))[0] for p, s in zip(x, rng.uniform(0.5, 3.0, netSize))])
        avg = dual_average_trajectories(phi, x, u, kw, h / 2, nodes)
        for i, (b, l) in enumerate(zip(bGrid, ls)):
            z = complex(a, b)
            fine = a**l * np.abs(avg @ P.laplace_weights(z, h / 2, panels, int(l)))
            coarse = a**l * np.abs(avg[:, ::2] @ P.laplace_weights(z, h, panels // 2, int(l)))
            j = int(np.argmax(fine))
            if fine[j] > sup[i]:
                sup[i], err[i] = float(fine[j]), float(abs(fine[j] - coarse[j]))
        scale.append(phi.sup())
    norm = sup / (ls * max(scale)) if scale and max(scale) > 0 else np.zeros_like(sup)
    resolved = (sup > 0) & (err < 0.5 * sup)
    if np.sum(resolved) < 3:
        return PhiScan(bGrid, ls, sup, err, norm, resolved, norm, math.nan, math.nan, 1.0, partial)
    env, fit = _envelope_fit(bGrid[resolved], norm[resolved])
    full_env = np.full(bGrid.size, np.nan)
    full_env[resolved] = env
    dbl = [norm[j] / norm[i] for i in range(bGrid.size) for j in range(bGrid.size)
           if abs(bGrid[j] - 2 * bGrid[i]) < 1e-9 and resolved[i] and resolved[j]]
    return PhiScan(bGrid, ls, sup, err, norm, resolved, full_env, -fit.slope, fit.r2, float(max(dbl, default=1.0)),
                   partial)


# ---------------------------------------------------------------------------
# counting expanded pieces through a stable segment


@dataclass(frozen=True)
class MandensRow:
    k: int
    count: int
    lhs: float
    rhs: float
    crossings: tuple = ()  # (s, w, t): x n+(w) = T_k-leaf point y n-(s) a(t)

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def _gauss_nan(g: np.ndarray):
    """(w, t, s) with g n-(s) a(t) = n+(w), from g = n+(w) a(-t) n-(-s)."""
    g = g * np.where(g[:, 1, 1] < 0, -1.0, 1.0)[:, None, None]
    e = g[:, 1, 1]
    return g[:, 0, 1] / e, 2 * np.log(e), -g[:, 1, 0] / e


def mandens_count(x, r1: float, kGrid, eps: float = 0.3, C: float = MANDENS_C,
                  step: float | None = None) -> list[MandensRow]:
    """Components of T_k W^uc_eps(x) meeting W^s_{r1}(x), weighted by sup J^u T_{-k}.

    Each component crosses the stable segment once; crossings solve
    x^{-1} gamma y n-(s) a(t) = n+(w) and are read off the Gauss
    decomposition for every translate near a sample of the expanded leaf.
    """
    if not 1e-3 < r1 < 0.3:
        raise DomainError("r1 must lie in (1e-3, 0.3)")
    xm = x.m if isinstance(x, M.ManifoldPoint) else np.asarray(x, dtype=float)
    rows = []
    for k in kGrid:
        k = int(k)
        L = eps * math.exp(k)
        h = step if step is not None else min(r1, eps) / 4
        n = 2 * math.ceil(L / h) + 1
        if n > MAX_PIECE_SAMPLES:
            raise ScaleError(f"{n} leaf samples exceed the budget; reduce k")
        s = np.linspace(-L, L, n)
        y = M.flow_long(xm[None], float(k))[0]
        pts = horocycle_points(y, s)
        idx = TranslateIndex(xm[None], min(M.LOG_DOMAIN, 2 * r1 + 2 * eps + h))
        qi, _, _, ti = idx.query(pts)
        sols = set()
        if qi.size:
            g0 = M.mul2(M.mul2(M.sl2_inverse(idx.translates[ti]), pts[qi]), M.nminus_mat(-s[qi]))
            w, t, sst = _gauss_nan(g0)
            ok = (np.abs(w) <= r1) & (np.abs(t) <= eps) & (np.abs(sst) <= L)
            for a, c, e in zip(sst[ok], w[ok], t[ok]):
                sols.add((round(float(a), 6), round(float(c), 6), round(float(e), 6)))
        jac = M.tangent_flow(M.V_UNSTABLE, -k).cMinus  # sup J^u T_{-k}
        cnt = len(sols)
        rows.append(MandensRow(k, cnt, jac * cnt, C * 2 * (r1 + LAMBDA ** (-k) * R0), tuple(sorted(sols))))
    return rows


# ---------------------------------------------------------------------------
# decomposition check: time and space partitions reproduce the direct value


def assembly_check(phi, x: np.ndarray, partition: SpacePartition, a: float = 1.0, b: float = 20.0, l: int = 2,
                   eps: float = 0.1, quadPoints: int = 17, h: float = 0.01) -> dict:
    """a^l A^{u*} R(z)^{*l} phi(x) directly and as sum_k sum_i of time- and space-localized pieces."""
    T = float(gammainccinv(l, P.TRUNCATION_TOL)) / a
    panels = math.ceil(T / (2 * h))
    nodes = 2 * panels + 1
    acfg = P.AverageConfig(deltaS=eps, epsU=eps, quadPoints=quadPoints)
    u, ker = P.dual_kernel(acfg)
    _, wq = acfg.nodes(eps)
    kw = ker * wq
    xi = M.reduce_array(M.mul2(np.asarray(x, float)[None], M.nminus_mat(u)))
    W = P.laplace_weights(complex(a, b), h, panels, l)
    times = h * np.arange(nodes)
    orbit = np.stack([M.orbit(p, times) for p in xi])  # (quad, nodes, 2, 2)
    vals = phi(orbit.reshape(-1, 2, 2)).reshape(orbit.shape[:2])
    direct = a**l * complex(kw @ (vals @ W))
    # each (orbit sample, center) pair contributes phi_i * phi * weight; group by (k, i)
    qi, ci, wts = partition.weights(orbit.reshape(-1, 2, 2))
    quad, node = np.divmod(qi, nodes)
    contrib = kw[quad] * W[node] * vals.ravel()[qi] * wts
    p = TimePartition()
    total, terms = 0j, 0
    for kk in range(-1, math.ceil(T) + 2):
        pk = p(times[node] - kk)
        live = (pk > 0) & (contrib != 0)
        if not np.any(live):
            continue
        grp = np.unique(ci[live], return_inverse=True)[1]
        parts = np.bincount(grp, (pk * contrib)[live].real) + 1j * np.bincount(grp, (pk * contrib)[live].imag)
        total += parts.sum()
        terms += parts.size
    total *= a**l
    return {"direct": direct, "assembled": total, "terms": terms,
            "relError": abs(total - direct) / max(abs(direct), 1e-300)}
