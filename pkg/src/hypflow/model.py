"""Geodesic flow of the Bolza surface as the homogeneous flow on Gamma\\PSL(2,R).

Points of M are cosets Gamma*g; the flow acts on the right, T_t(Gamma g) = Gamma g a(t)
with a(t) = diag(e^{t/2}, e^{-t/2}).  With this normalisation the stable
direction is the upper nilpotent U+ (contracted by e^{-t}), the unstable
direction is the lower nilpotent U- (expanded by e^{t}), curvature is -1 and
the geodesic speed is 1.

Most routines come in two flavours: a scalar one working on ``GroupElement`` /
``ManifoldPoint`` and an ``*_array`` one working on stacks of 2x2 matrices of
shape (..., 2, 2).  Heavy Monte Carlo code only uses the array versions.

Randomness: every sampler draws from ``make_rng``, a Philox4x64 counter-based
generator keyed by ``SeedSequence([seed, *stream])``.  Shards use
``stream = (shard_index,)`` and are reduced in index order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DomainError, ReductionError, SamplingError

FLOW = "flow"
STABLE_PLUS = "stablePlus"
UNSTABLE_MINUS = "unstableMinus"

X_MAT = np.array([[0.5, 0.0], [0.0, -0.5]])
UPLUS_MAT = np.array([[0.0, 1.0], [0.0, 0.0]])
UMINUS_MAT = np.array([[0.0, 0.0], [1.0, 0.0]])
IDENTITY = np.eye(2)

# matrix logarithm is trusted only within this operator-norm distance of I
LOG_DOMAIN = 1.5
# |M - I|_op <= 1.5 forces cosh d(o, M o) <= 2.5^2 = 6.25
LOG_DOMAIN_COSH = 6.25
# 2 * circumradius + arccosh(6.25)
NEIGHBOR_RADIUS = 7.45
FAR = math.inf
MAX_REDUCTION_STEPS = 10_000
FLOW_CHUNK = 2.0
SIGN_EPS = 1e-9
_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox4x64 generator keyed by ``SeedSequence([seed mod 2**64, *stream])``."""
    words = [int(seed) & _MASK64] + [int(s) & _MASK64 for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


# ---------------------------------------------------------------------------
# matrices


def normalize(m: np.ndarray) -> np.ndarray:
    """Renormalise the determinant and fix the sign of the +-I quotient.

    Works on a stack of shape (..., 2, 2) and returns a new array.
    """
    m = np.array(m, dtype=float, copy=True)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    drift = np.abs(det - 1.0) > 1e-13
    if np.any(drift):
        if np.any(det[drift] <= 0):
            raise DomainError("matrix with non-positive determinant")
        m[drift] /= np.sqrt(det[drift])[..., None, None]
    flat = m.reshape(m.shape[:-2] + (4,))
    big = np.abs(flat) > SIGN_EPS
    first = np.argmax(big, axis=-1)
    lead = np.take_along_axis(flat, first[..., None], axis=-1)[..., 0]
    sign = np.where(lead < 0, -1.0, 1.0)
    return m * sign[..., None, None]


def sl2_inverse(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def a_mat(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = np.exp(t / 2)
    out[..., 1, 1] = np.exp(-t / 2)
    return out


def nplus_mat(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 0, 1] = u
    return out


def nminus_mat(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 0] = u
    return out


def rotation_mat(psi) -> np.ndarray:
    """k(psi); acts on the disk as a rotation by 2*psi about the origin."""
    psi = np.asarray(psi, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    out = np.empty(psi.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    return out


_DIRECTION_MATS = {FLOW: a_mat, STABLE_PLUS: nplus_mat, UNSTABLE_MINUS: nminus_mat}


@dataclass(frozen=True)
class GroupElement:
    """Determinant-one 2x2 matrix modulo sign."""

    m: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "m", normalize(np.asarray(self.m, dtype=float).reshape(2, 2)))

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(IDENTITY)

    @property
    def entries(self) -> tuple[float, float, float, float]:
        return tuple(float(v) for v in self.m.ravel())

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.m @ other.m)

    def inverse(self) -> "GroupElement":
        return GroupElement(sl2_inverse(self.m))

    def det(self) -> float:
        return float(np.linalg.det(self.m))

    def __repr__(self):
        return "GroupElement(%r)" % (self.entries,)


def exp_generator(direction: str, amount: float) -> GroupElement:
    """exp(amount * B) for B one of the fixed basis elements X, U+, U-."""
    if direction not in _DIRECTION_MATS:
        raise DomainError(f"unknown direction {direction!r}")
    if not abs(amount) < 50:
        raise DomainError("|amount| must be < 50")
    return GroupElement(_DIRECTION_MATS[direction](amount))


# ---------------------------------------------------------------------------
# Lie algebra and the contact structure


@dataclass(frozen=True)
class AlgebraVector:
    """Coefficients in the basis {X, U+, U-}; Euclidean norm on the triple."""

    cX: float
    cPlus: float
    cMinus: float

    def as_matrix(self) -> np.ndarray:
        return self.cX * X_MAT + self.cPlus * UPLUS_MAT + self.cMinus * UMINUS_MAT

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "AlgebraVector":
        return cls(float(m[0, 0] - m[1, 1]), float(m[0, 1]), float(m[1, 0]))

    def norm(self) -> float:
        return math.sqrt(self.cX**2 + self.cPlus**2 + self.cMinus**2)

    def __add__(self, other):
        return AlgebraVector(self.cX + other.cX, self.cPlus + other.cPlus, self.cMinus + other.cMinus)

    def __mul__(self, s: float):
        return AlgebraVector(s * self.cX, s * self.cPlus, s * self.cMinus)

    __rmul__ = __mul__


V_FLOW = AlgebraVector(1.0, 0.0, 0.0)
V_STABLE = AlgebraVector(0.0, 1.0, 0.0)
V_UNSTABLE = AlgebraVector(0.0, 0.0, 1.0)


def bracket(v: AlgebraVector, w: AlgebraVector) -> AlgebraVector:
    a, b = v.as_matrix(), w.as_matrix()
    return AlgebraVector.from_matrix(a @ b - b @ a)


def tangent_flow(v: AlgebraVector, t: float) -> AlgebraVector:
    """dT_t in the left-invariant frame: Ad(a(-t)) v."""
    m = a_mat(-t) @ v.as_matrix() @ a_mat(t)
    return AlgebraVector.from_matrix(m)


def contact_pairing(v: AlgebraVector, w: AlgebraVector | None = None) -> float:
    """alpha(v) with one argument, d(alpha)(v, w) = -alpha([v, w]) with two."""
    if w is None:
        return v.cX
    return -bracket(v, w).cX


# ---------------------------------------------------------------------------
# hyperbolic plane helpers


def uhp_point(m: np.ndarray) -> np.ndarray:
    """Image of i under the Moebius action of m (complex array)."""
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    return (a * 1j + b) / (c * 1j + d)


def disk_point(m: np.ndarray) -> np.ndarray:
    """Base point of m in the Poincare disk (origin = base point of I)."""
    z = uhp_point(m)
    return (z - 1j) / (z + 1j)


def disk_to_uhp(w):
    return 1j * (1 + w) / (1 - w)


def moebius_disk(m: np.ndarray, w):
    """Action of m (an upper-half-plane matrix) on disk points."""
    z = disk_to_uhp(np.asarray(w, dtype=complex))
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    z2 = (a * z + b) / (c * z + d)
    return (z2 - 1j) / (z2 + 1j)


def cosh_base_distance(m: np.ndarray) -> np.ndarray:
    """cosh of the hyperbolic distance from i to m(i)."""
    return 0.5 * np.sum(m * m, axis=(-1, -2))


def hyperbolic_distance_disk(w1, w2):
    w1, w2 = np.asarray(w1, dtype=complex), np.asarray(w2, dtype=complex)
    num = 2 * np.abs(w1 - w2) ** 2
    den = (1 - np.abs(w1) ** 2) * (1 - np.abs(w2) ** 2)
    return np.arccosh(1 + num / den)


# ---------------------------------------------------------------------------
# the Bolza group


@dataclass(frozen=True)
class FuchsianGroup:
    """Side pairings of the regular octagon (indices k and k+4 are inverse)."""

    generators: np.ndarray = field(repr=False)
    octagonVertexRadius: float
    injectivityRadiusLowerBound: float
    _candidates: np.ndarray = field(repr=False, compare=False, default=None)
    _neighbors: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def candidates(self) -> np.ndarray:
        """Identity, the 8 generators and all 64 pairwise products."""
        return self._candidates

    @property
    def neighbors(self) -> np.ndarray:
        """All distinct gamma with d(o, gamma o) <= NEIGHBOR_RADIUS, identity first.

        Two points of the octagon whose lifts are within the log domain of each
        other differ by one of these; near the vertices that needs words of
        length up to four, which the 73 short candidates miss.
        """
        return self._neighbors

    @staticmethod
    def inverse_index(k: int) -> int:
        return (k + 4) % 8

    def octagon_vertices(self) -> np.ndarray:
        rad = math.tanh(self.octagonVertexRadius / 2)
        ang = math.pi / 8 + np.arange(8) * math.pi / 4
        return rad * np.exp(1j * ang)

    def side_midpoints(self) -> np.ndarray:
        inr = math.acosh(1 + math.sqrt(2))
        rad = math.tanh(inr / 2)
        return rad * np.exp(1j * np.arange(8) * math.pi / 4)


@lru_cache(maxsize=None)
def bolza_group() -> FuchsianGroup:
    s2 = math.sqrt(2)
    g0 = np.array([[1 + s2, math.sqrt(2 + 2 * s2)], [math.sqrt(2 + 2 * s2), 1 + s2]])
    gens = []
    for k in range(4):
        # conjugate by a disk rotation through k*pi/4
        r = rotation_mat(k * math.pi / 8)
        gens.append(r @ g0 @ sl2_inverse(r))
    gens = gens + [sl2_inverse(g) for g in gens]
    gens = normalize(np.array(gens))
    prods = np.einsum("aij,bjk->abik", gens, gens).reshape(64, 2, 2)
    cands = normalize(np.concatenate([IDENTITY[None], gens, prods]))
    vertex_r = math.acosh(3 + 2 * s2)
    neigh = _enumerate_neighbors(gens, NEIGHBOR_RADIUS)
    systole = 2 * math.acosh(1 + s2)
    # base-point speed is at most sqrt(2) per unit of algebra norm
    inj = systole / (2 * s2)
    return FuchsianGroup(gens, vertex_r, inj, cands, neigh)


def _enumerate_neighbors(gens: np.ndarray, radius: float) -> np.ndarray:
    bound = math.cosh(radius)
    # breadth-first over words, pruning only well beyond the target radius
    prune = math.cosh(radius + 2.5)
    seen = {}
    frontier = [IDENTITY]
    seen[_key(IDENTITY)] = IDENTITY
    while frontier:
        new = []
        for g in frontier:
            for h in normalize(gens @ g):
                k = _key(h)
                if k in seen or cosh_base_distance(h) > prune:
                    continue
                seen[k] = h
                new.append(h)
        frontier = new
    out = [m for m in seen.values() if cosh_base_distance(m) <= bound]
    out.sort(key=lambda m: (float(cosh_base_distance(m)), tuple(np.round(m.ravel(), 9))))
    return np.array(out)


def _key(m: np.ndarray) -> tuple:
    return tuple(np.round(normalize(m).ravel(), 6))


# ---------------------------------------------------------------------------
# reduction into the fundamental domain


def mul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting product of stacks of 2x2 matrices (faster than matmul for tiny blocks)."""
    a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
    b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def _gram_features(m: np.ndarray) -> np.ndarray:
    # (p00, 2 p01, p11) of P = m m^T; |gamma m|_F^2 is linear in these
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    return np.stack([a * a + b * b, 2 * (a * c + b * d), c * c + d * d], axis=-1)


@lru_cache(maxsize=None)
def _gram_weights(key: int) -> np.ndarray:
    gens = bolza_group().generators if key == 0 else None
    s = np.einsum("kji,kjl->kil", gens, gens)  # gamma^T gamma
    return np.stack([s[:, 0, 0], s[:, 0, 1], s[:, 1, 1]], axis=0)  # (3, 8)


def _generator_norms(m: np.ndarray, group: FuchsianGroup) -> tuple[np.ndarray, np.ndarray]:
    """(|m|_F^2, |gamma_k m|_F^2 for all k) without forming the products."""
    if group is bolza_group():
        w = _gram_weights(0)
    else:
        s = np.einsum("kji,kjl->kil", group.generators, group.generators)
        w = np.stack([s[:, 0, 0], s[:, 0, 1], s[:, 1, 1]], axis=0)
    f = _gram_features(m)
    return f[..., 0] + f[..., 2], f @ w


def in_fundamental_domain(m: np.ndarray, group: FuchsianGroup | None = None, tol: float = 1e-9) -> np.ndarray:
    """Whether the base point of m lies in the closed Dirichlet octagon."""
    group = group or bolza_group()
    cur, norms = _generator_norms(np.asarray(m, dtype=float), group)
    # compare cosh distances; tol is a relative slack
    return np.all(norms >= (cur * (1 - tol) - tol)[..., None], axis=-1)


def reduce_array(g: np.ndarray, group: FuchsianGroup | None = None) -> np.ndarray:
    """Greedy Dirichlet reduction of a stack of matrices (no words recorded)."""
    group = group or bolza_group()
    g = normalize(g)
    shape = g.shape
    g = g.reshape(-1, 2, 2)
    gens = group.generators
    active = np.arange(g.shape[0])
    for _ in range(MAX_REDUCTION_STEPS):
        if active.size == 0:
            break
        sub = g[active]
        cur, norms = _generator_norms(sub, group)
        best = np.argmin(norms, axis=1)
        bestval = norms[np.arange(active.size), best]
        improve = bestval < cur * (1 - 1e-12)
        if not np.any(improve):
            break
        sel = np.nonzero(improve)[0]
        g[active[sel]] = mul2(gens[best[sel]], sub[sel])
        active = active[sel]
    else:
        raise ReductionError("reduction exceeded %d generator applications" % MAX_REDUCTION_STEPS)
    return normalize(g).reshape(shape)


@dataclass(frozen=True)
class ManifoldPoint:
    """A point of M: representative reduced into the octagon plus the word used."""

    rep: GroupElement
    word: tuple = ()

    @property
    def m(self) -> np.ndarray:
        return self.rep.m


def reduce_mod_gamma(g: GroupElement | np.ndarray, group: FuchsianGroup | None = None) -> ManifoldPoint:
    group = group or bolza_group()
    m = normalize(g.m if isinstance(g, GroupElement) else np.asarray(g, dtype=float))
    if not np.all(np.isfinite(m)):
        raise DomainError("non-finite matrix entries")
    word = []
    gens = group.generators
    for _ in range(MAX_REDUCTION_STEPS):
        cur, norms = _generator_norms(m, group)
        k = int(np.argmin(norms))
        if not norms[k] < cur * (1 - 1e-12):
            return ManifoldPoint(GroupElement(m), tuple(word))
        m = mul2(gens[k], m)
        word.append(k)
    raise ReductionError("reduction exceeded %d generator applications" % MAX_REDUCTION_STEPS)


def point_from_array(m: np.ndarray) -> ManifoldPoint:
    """Wrap an already reduced representative."""
    return ManifoldPoint(GroupElement(m), ())


def points_to_array(points: Sequence[ManifoldPoint]) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points
    if isinstance(points, ManifoldPoint):
        return points.m[None]
    return np.array([p.m for p in points]).reshape(-1, 2, 2)


# ---------------------------------------------------------------------------
# the local (left-invariant) distance


def _op_norm(b: np.ndarray) -> np.ndarray:
    fro2 = np.sum(b * b, axis=(-1, -2))
    det = b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))
    return np.sqrt((fro2 + disc) / 2)


def local_log(m: np.ndarray) -> np.ndarray:
    """Algebra coefficients (cX, cPlus, cMinus) of the principal log of +-m.

    NaN where m is farther than ``LOG_DOMAIN`` from the identity.
    """
    m = np.asarray(m, dtype=float)
    tr = m[..., 0, 0] + m[..., 1, 1]
    s = np.where(tr < 0, -1.0, 1.0)
    m = m * s[..., None, None]
    half = 0.5 * np.abs(tr)
    u = half - 1.0
    a00 = m[..., 0, 0] - half
    a11 = m[..., 1, 1] - half
    q = u * (u + 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.abs(q))
        hyp = np.log1p(u + sq) / sq
        ell = np.arctan2(sq, 1 + u) / sq
    ser = 1 - u / 3 + 2 * u * u / 15
    f = np.where(np.abs(u) < 1e-6, ser, np.where(u > 0, hyp, ell))
    out = np.stack([f * (a00 - a11), f * m[..., 0, 1], f * m[..., 1, 0]], axis=-1)
    bad = _op_norm(m - IDENTITY) > LOG_DOMAIN
    out[bad] = np.nan
    return out


def local_distance(m: np.ndarray) -> np.ndarray:
    """Norm of the principal log (NaN outside the log domain)."""
    c = local_log(m)
    return np.sqrt(np.sum(c * c, axis=-1))


def _neighbor_distances(p: np.ndarray, q: np.ndarray, group: FuchsianGroup) -> np.ndarray:
    """d_gamma = |log((gamma q)^{-1} p)| for every neighbor gamma, shape (K, N).

    Translates whose base point is too far from that of p to be inside the
    log domain are skipped (entry NaN).
    """
    gq = mul2(group.neighbors[:, None], q[None])
    m = mul2(sl2_inverse(gq), p[None])
    close = cosh_base_distance(m) <= LOG_DOMAIN_COSH * (1 + 1e-12)
    out = np.full(close.shape, np.nan)
    if np.any(close):
        out[close] = local_distance(m[close])
    return out


def quotient_distance_array(p: np.ndarray, q: np.ndarray, group: FuchsianGroup | None = None,
                            chunk: int = 2000) -> np.ndarray:
    group = group or bolza_group()
    p = np.asarray(p, dtype=float).reshape(-1, 2, 2)
    q = np.broadcast_to(np.asarray(q, dtype=float).reshape(-1, 2, 2), p.shape)
    out = np.empty(p.shape[0])
    for s in range(0, p.shape[0], chunk):
        d = _neighbor_distances(p[s:s + chunk], q[s:s + chunk], group)
        d = np.where(np.isnan(d), np.inf, d)
        out[s:s + chunk] = d.min(axis=0)
    return out


def quotient_distance(p: ManifoldPoint, q: ManifoldPoint, group: FuchsianGroup | None = None) -> float:
    """Word-search distance over the neighbor translates; ``FAR`` if none is local."""
    return float(quotient_distance_array(p.m, q.m, group)[0])


def lift_near(p: np.ndarray, q: np.ndarray, group: FuchsianGroup | None = None) -> np.ndarray:
    """The translate gamma*q closest to p (raises if none is local)."""
    group = group or bolza_group()
    d = _neighbor_distances(np.asarray(p)[None], np.asarray(q)[None], group)[:, 0]
    if np.all(np.isnan(d)):
        raise DomainError("points are not within the local chart of each other")
    k = int(np.nanargmin(d))
    return group.neighbors[k] @ q


# ---------------------------------------------------------------------------
# the flow


def flow_array(g: np.ndarray, t: float, group: FuchsianGroup | None = None) -> np.ndarray:
    """Right action by a(t) followed by reduction; |t| < 50."""
    if not abs(t) < 50:
        raise DomainError("|t| must be < 50 per call")
    n = max(1, int(math.ceil(abs(t) / FLOW_CHUNK)))
    step = a_mat(t / n)
    out = np.asarray(g, dtype=float)
    for _ in range(n):
        out = reduce_array(out @ step, group)
    return out


def flow_point(p: ManifoldPoint, t: float, group: FuchsianGroup | None = None) -> ManifoldPoint:
    if not abs(t) < 50:
        raise DomainError("|t| must be < 50 per call")
    return reduce_mod_gamma(flow_array(p.m, t, group), group)


def flow_long(g: np.ndarray, t: float, group: FuchsianGroup | None = None) -> np.ndarray:
    """Flow by an arbitrary time in chunks below the per-call guard."""
    n = max(1, int(math.ceil(abs(t) / 40.0)))
    out = np.asarray(g, dtype=float)
    for _ in range(n):
        out = flow_array(out, t / n, group)
    return out


def orbit(g: np.ndarray, times: np.ndarray, group: FuchsianGroup | None = None) -> np.ndarray:
    """Reduced representatives of g*a(t) for every t in ``times``.

    Anchors are advanced sequentially every ``FLOW_CHUNK`` time units so that
    no matrix product ever has entries larger than about e^{FLOW_CHUNK/2}.
    Returns an array of shape (len(times), 2, 2).
    """
    group = group or bolza_group()
    times = np.asarray(times, dtype=float)
    g = normalize(np.asarray(g, dtype=float).reshape(2, 2))
    k = np.round(times / FLOW_CHUNK).astype(int)
    kmin, kmax = min(int(k.min()), 0), max(int(k.max()), 0)
    anchors = {0: reduce_array(g, group)}
    step = a_mat(FLOW_CHUNK)
    back = a_mat(-FLOW_CHUNK)
    for j in range(1, kmax + 1):
        anchors[j] = reduce_array(anchors[j - 1] @ step, group)
    for j in range(-1, kmin - 1, -1):
        anchors[j] = reduce_array(anchors[j + 1] @ back, group)
    base = np.array([anchors[int(j)] for j in k])
    return reduce_array(base @ a_mat(times - k * FLOW_CHUNK), group)


def flow_along_grid(g: np.ndarray, times: np.ndarray, group: FuchsianGroup | None = None):
    """Yield (t, reduced stack) walking a stack of points along a sorted time grid."""
    group = group or bolza_group()
    state = reduce_array(np.asarray(g, dtype=float), group)
    cur = 0.0
    for t in np.asarray(times, dtype=float):
        dt = t - cur
        if dt != 0.0:
            n = max(1, int(math.ceil(abs(dt) / FLOW_CHUNK)))
            step = a_mat(dt / n)
            for _ in range(n):
                state = reduce_array(state @ step, group)
            cur = float(t)
        yield float(t), state


# ---------------------------------------------------------------------------
# Haar sampling

_PROPOSAL_BATCH = 4096
HOROCYCLE_SPACING = (math.sqrt(5) - 1) / 2
_HORO_BLOCK = 64


def _rejection_array(seed: int, n: int, group: FuchsianGroup, stream: tuple = (0,)) -> np.ndarray:
    rng = make_rng(seed, 0x52454A, *stream)
    ch = math.cosh(group.octagonVertexRadius) - 1
    out, have, proposals = [], 0, 0
    while have < n:
        if proposals >= 10**7:
            raise SamplingError("rejection sampler failed to accept enough points")
        u = rng.random((_PROPOSAL_BATCH, 3))
        proposals += _PROPOSAL_BATCH
        r = np.arccosh(1 + u[:, 0] * ch)
        g = rotation_mat(np.pi * u[:, 1]) @ a_mat(r) @ rotation_mat(np.pi * u[:, 2])
        ok = in_fundamental_domain(g, group, tol=0.0)
        acc = g[ok]
        out.append(acc)
        have += acc.shape[0]
    return normalize(np.concatenate(out)[:n])


def _horocycle_array(seed: int, n: int, group: FuchsianGroup, spacing: float, stream: tuple = (0,)) -> np.ndarray:
    rng = make_rng(seed, 0x484F52, *stream)
    start = _rejection_array(int(rng.integers(0, 2**63)), 1, group)[0]
    start = reduce_array(start @ nplus_mat(rng.random() * spacing), group)
    nblocks = -(-n // _HORO_BLOCK)
    jump = nplus_mat(_HORO_BLOCK * spacing)
    anchors = np.empty((nblocks, 2, 2))
    anchors[0] = start
    for k in range(1, nblocks):
        anchors[k] = reduce_array(anchors[k - 1] @ jump, group)
    offs = nplus_mat(spacing * np.arange(_HORO_BLOCK))
    pts = np.einsum("kij,bjl->kbil", anchors, offs).reshape(-1, 2, 2)[:n]
    return reduce_array(pts, group)


def haar_sample_array(seed: int, n: int, method: str = "horocycle", group: FuchsianGroup | None = None,
                      spacing: float = HOROCYCLE_SPACING, stream: tuple = (0,)) -> np.ndarray:
    """n points of M distributed (approximately, for 'horocycle') by normalised Haar measure.

    'horocycle': equally spaced points along one long stable horocycle with a
    random start.  'rejection': exact i.i.d. draws in Cartan coordinates
    g = k(psi) a(r) k(theta), density sinh(r), accepted in the octagon.
    Both are prefix-stable: the first m points do not depend on n >= m.
    """
    group = group or bolza_group()
    if n <= 0:
        return np.empty((0, 2, 2))
    if method == "horocycle":
        return _horocycle_array(seed, n, group, spacing, stream)
    if method == "rejection":
        return _rejection_array(seed, n, group, stream)
    raise DomainError(f"unknown sampling method {method!r}")


def haar_sample(seed: int, n: int, method: str = "horocycle", group: FuchsianGroup | None = None) -> list:
    return [point_from_array(m) for m in haar_sample_array(seed, n, method, group)]
