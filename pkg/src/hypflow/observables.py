"""Bump observables on M, correlations, decay fits and empirical Hoelder norms.

A bump is weight * h(d(p, c)/r) with h(s) = (1 - s^2)^2 on [0, 1), where d is
the left-invariant distance on M.  Evaluation is vectorised: the translates
gamma*c that can reach the octagon are put in a KD-tree on their Poincare-disk
base points, and because hyperbolic length is at least twice Euclidean length
in the disk, a Euclidean ball of radius sqrt(2)*r/2 catches every translate
whose log distance is below r.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import model as M
from .errors import DomainError, FitQualityError, SamplingError
from .fitting import line_fit
from .structures import NormConfig

MAX_RADIUS = 0.7
DICTIONARY_VERSION = 1
_DICT_SEED = 0x44494354
_DICT_RADII = (0.3, 0.4, 0.5, 0.6, 0.7)


def profile(s):
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, (1.0 - s * s) ** 2, 0.0)


class Bump:
    """weight * h(d(p, center)/radius) for one center on M."""

    def __init__(self, center, radius: float, weight: float = 1.0, group: M.FuchsianGroup | None = None):
        if not 0 < radius <= MAX_RADIUS:
            raise DomainError("bump radius must lie in (0, 0.7]")
        group = group or M.bolza_group()
        c = center.m if isinstance(center, M.ManifoldPoint) else np.asarray(center, dtype=float)
        self.center = M.reduce_array(c, group)
        self.radius = float(radius)
        self.weight = float(weight)
        reach = math.cosh(group.octagonVertexRadius + math.sqrt(2) * self.radius + 1e-6)
        tr = np.einsum("kij,jl->kil", group.neighbors, self.center)
        tr = tr[M.cosh_base_distance(tr) <= reach]
        self._translates = tr
        self._inv = M.sl2_inverse(tr)
        w = M.disk_point(tr)
        self._tree = cKDTree(np.column_stack([w.real, w.imag]))
        self._reach = math.sqrt(2) * self.radius / 2 + 1e-9
        # at most one translate may contribute: distinct translates are far apart
        d = M.local_distance(np.einsum("kij,jl->kil", self._inv, self.center))
        d = d[np.isfinite(d)]
        if np.sum(d < 2 * self.radius) > 1:
            raise DomainError("bump support overlaps one of its translates")

    def log_coords(self, p: np.ndarray) -> np.ndarray:
        """(cX, c+, c-) of log((gamma c)^{-1} p) for the nearest translate; NaN beyond reach."""
        p = np.asarray(p, dtype=float).reshape(-1, 2, 2)
        w = M.disk_point(p)
        _, idx = self._tree.query(np.column_stack([w.real, w.imag]), k=2, distance_upper_bound=self._reach)
        out = np.full((p.shape[0], 3), np.nan)
        best = np.full(p.shape[0], np.inf)
        ntr = self._translates.shape[0]
        for j in range(2):
            hit = np.nonzero(idx[:, j] < ntr)[0]
            if hit.size == 0:
                continue
            c = M.local_log(M.mul2(self._inv[idx[hit, j]], p[hit]))
            d = np.sqrt(np.sum(c * c, axis=1))
            better = d < best[hit]  # NaN compares False
            out[hit[better]] = c[better]
            best[hit[better]] = d[better]
        return out

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Log distance from each (reduced) p to the nearest translate of the center; inf if beyond reach."""
        c = self.log_coords(p)
        d = np.sqrt(np.sum(c * c, axis=1))
        return np.where(np.isnan(d), np.inf, d)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return self.weight * profile(self.distance(p) / self.radius)


@dataclass
class Observable:
    """Finite sum of bumps plus a constant; callable on stacks of reduced matrices."""

    bumps: Sequence[Bump] = ()
    constant: float = 0.0

    def __call__(self, p) -> np.ndarray:
        p = M.points_to_array(p) if not isinstance(p, np.ndarray) else p
        shape = p.shape[:-2]
        flat = p.reshape(-1, 2, 2)
        out = np.full(flat.shape[0], self.constant, dtype=float)
        for b in self.bumps:
            out += b(flat)
        return out.reshape(shape)

    def at(self, p: M.ManifoldPoint) -> float:
        return float(self(p.m[None])[0])

    def sup(self) -> float:
        """|f|_inf (bumps have disjoint supports in the dictionary; otherwise an upper bound)."""
        return abs(self.constant) + sum(abs(b.weight) for b in self.bumps)

    def scaled(self, s: float) -> "Observable":
        return Observable([Bump(b.center, b.radius, s * b.weight) for b in self.bumps], s * self.constant)

    def support_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Points spread over the bump supports (uniform in log coordinates of each ball)."""
        if not self.bumps:
            return M.haar_sample_array(int(rng.integers(2**62)), n, "rejection")
        which = rng.integers(len(self.bumps), size=n)
        v = rng.normal(size=(n, 3))
        v *= (rng.random(n) ** (1 / 3) / np.linalg.norm(v, axis=1))[:, None]
        out = np.empty((n, 2, 2))
        for k, b in enumerate(self.bumps):
            sel = which == k
            out[sel] = b.center @ _expm_rows(1.05 * b.radius * v[sel])
        return M.reduce_array(out)


def make_bump(center, radius: float, weight: float = 1.0) -> Observable:
    return Observable([Bump(center, radius, weight)])


def constant_observable(c: float = 1.0) -> Observable:
    return Observable([], c)


def _expm_rows(v: np.ndarray) -> np.ndarray:
    """exp(cX X + c+ U+ + c- U-) for each row of v, in closed form."""
    a = v[:, 0, None, None] * M.X_MAT + v[:, 1, None, None] * M.UPLUS_MAT + v[:, 2, None, None] * M.UMINUS_MAT
    q = v[:, 0] ** 2 / 4 + v[:, 1] * v[:, 2]  # a^2 = q I
    r = np.sqrt(np.abs(q))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(q > 0, np.cosh(r), np.cos(r))
        s = np.where(q > 0, np.sinh(r), np.sin(r)) / r
    s = np.where(r < 1e-8, 1.0 + q / 6, s)
    c = np.where(r < 1e-8, 1.0 + q / 2, c)
    return c[:, None, None] * np.eye(2) + s[:, None, None] * a


expm_algebra = _expm_rows


# ---------------------------------------------------------------------------
# evolved observables and generic functions on M


class Function:
    """Callable on stacks of reduced matrices, with a sampler for its support."""

    def __call__(self, p: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def support_sample(self, rng, n):  # pragma: no cover - interface
        raise NotImplementedError

    def sup(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError


class Composed(Function):
    """phi o T_t (``time`` = t) on stacks; ``time`` = -t gives the transfer operator L_t."""

    def __init__(self, base, time: float):
        self.base, self.time = base, float(time)

    def __call__(self, p):
        return self.base(M.flow_long(p, self.time))

    def support_sample(self, rng, n):
        return M.flow_long(self.base.support_sample(rng, n), -self.time)

    def sup(self):
        return self.base.sup()


def koopman(phi, t: float) -> Composed:
    """T_t phi = phi o T_t."""
    return Composed(phi, t)


def transfer(f, t: float) -> Composed:
    """L_t f = f o T_{-t}."""
    return Composed(f, -t)


def transfer_evolve(f, t: float, p: M.ManifoldPoint) -> float:
    if abs(t) > 1e3:
        raise DomainError("|t| must be <= 1e3")
    return float(f(M.flow_long(p.m[None], -t))[0])


# ---------------------------------------------------------------------------
# Haar measure restricted to bump supports

VOLUME = 4 * math.pi**2  # Riemannian volume of M for the orthonormal frame {X, U+, U-}


def exp_jacobian(v: np.ndarray) -> np.ndarray:
    """Haar density of exp at v: det((1 - e^{-ad v}) / ad v) = sinh(s)^2 / s^2, s^2 = cX^2/4 + c+ c-."""
    q = v[..., 0] ** 2 / 4 + v[..., 1] * v[..., 2]
    s = np.sqrt(np.abs(q))
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(q > 0, np.sinh(s) ** 2, np.sin(s) ** 2) / (s * s)
    return np.where(s < 1e-6, 1.0 + q / 3, j)


@dataclass(frozen=True)
class SupportSample:
    """Points covering the support of an observable with importance weights.

    For any F vanishing off the support, mean(weights * F(points)) is an
    unbiased estimate of the Haar average of F (probability normalisation).
    """

    points: np.ndarray
    weights: np.ndarray


def support_sample(f: "Observable", n: int, seed: int, stream: tuple = (0,)) -> SupportSample:
    """Mixture over the bump balls: pick a bump uniformly, then v uniform in its log ball."""
    if not f.bumps or f.constant != 0:
        raise DomainError("support sampling needs a pure bump observable")
    rng = M.make_rng(seed, 0x535550, *stream)
    k = len(f.bumps)
    which = rng.integers(k, size=n)
    v = rng.normal(size=(n, 3))
    u = rng.random(n) ** (1 / 3)
    v *= (u / np.linalg.norm(v, axis=1))[:, None]
    pts = np.empty((n, 2, 2))
    for j, b in enumerate(f.bumps):
        sel = which == j
        pts[sel] = b.center @ _expm_rows(b.radius * v[sel])
    pts = M.reduce_array(pts)
    # mixture density with respect to Riemannian volume
    dens = np.zeros(n)
    for b in f.bumps:
        c = b.log_coords(pts)
        r = np.sqrt(np.sum(c * c, axis=1))
        inside = r <= b.radius
        vol = 4.0 / 3.0 * math.pi * b.radius**3
        dens[inside] += 1.0 / (k * vol * exp_jacobian(c[inside]))
    return SupportSample(pts, 1.0 / (VOLUME * dens))


# ---------------------------------------------------------------------------
# correlations


@dataclass(frozen=True)
class CorrelationSeries:
    tGrid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    sampleCount: int
    seed: int
    shardValues: np.ndarray = field(default=None, repr=False)


def _shard_sizes(n: int, shards: int) -> list[int]:
    base, extra = divmod(n, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def correlation(f, g, tGrid, n: int, seed: int, shards: int = 16, method: str = "rejection",
                chunk: int = 65536) -> CorrelationSeries:
    """C(t) = E[f g o T_t] - E[f] E[g o T_t] over one sample cloud reused along tGrid.

    method 'rejection' / 'horocycle': plain Haar samples; the sample means of
    f, g o T_t and their product are used directly.  method 'support': the
    cloud is drawn from the Haar measure restricted to the support of f with
    importance weights, so every sample contributes to E[f g o T_t]; E[g o T_t]
    equals E[g] by invariance and is estimated from a cloud on the support of g.
    The estimate pools all samples; the standard error is the spread of the
    per-shard estimates.
    """
    tGrid = np.asarray(tGrid, dtype=float)
    if n < 100:
        raise SamplingError("correlation needs at least 100 samples")
    if tGrid.size == 0 or np.any(np.diff(tGrid) < 0) or tGrid[0] < 0:
        raise DomainError("tGrid must be sorted and nonnegative")
    nt = tGrid.size
    sums = np.zeros((shards, 3, nt))  # weighted sums of f g_t, f, g_t
    sizes = _shard_sizes(n, shards)
    for s, ns in enumerate(sizes):
        if ns == 0:
            continue
        if method == "support":
            smp = support_sample(f, ns, seed, stream=(s,))
            pts, wts = smp.points, smp.weights
            gs = support_sample(g, ns, seed, stream=(s, 1))
            mean_g = float(np.sum(gs.weights * g(gs.points)))
        else:
            pts = M.haar_sample_array(seed, ns, method, stream=(s,))
            wts = np.ones(ns)
        for c0 in range(0, ns, chunk):
            x, w = pts[c0:c0 + chunk], wts[c0:c0 + chunk]
            fx = f(x) * w
            sf = fx.sum()
            for j, (_, xt) in enumerate(M.flow_along_grid(x, tGrid)):
                gx = g(xt)
                sums[s, 0, j] += np.dot(fx, gx)
                sums[s, 1, j] += sf
                if method != "support":
                    sums[s, 2, j] += gx.sum()
        if method == "support":
            sums[s, 2, :] = mean_g
    sizes = np.array(sizes, dtype=float)[:, None]
    per = sums / sizes[:, :, None]
    tot = sums.sum(axis=0) / n
    values = tot[0] - tot[1] * tot[2]
    shard_vals = per[:, 0] - per[:, 1] * per[:, 2]
    stderr = shard_vals.std(axis=0, ddof=1) / math.sqrt(shards)
    return CorrelationSeries(tGrid, values, stderr, int(n), int(seed), shard_vals)


@dataclass(frozen=True)
class DecayFit:
    sigma: float
    prefactor: float
    rSquared: float
    window: tuple
    points: int = 0
    method: str = "loglinear"


def sigma_relation(omega: float, beta: float) -> float:
    """Rate relation sigma = 2 omega (1 - beta) / (3 - beta), reported as metadata."""
    return 2.0 * omega * (1.0 - beta) / (3.0 - beta)


def _upper_envelope(t, a):
    # local maxima of |C| that dominate everything to their right (a decreasing
    # envelope); the last point is a truncated lobe, not a peak
    n = a.size
    peak = np.zeros(n, dtype=bool)
    for i in range(n - 1):
        left = a[i - 1] if i > 0 else -np.inf
        peak[i] = a[i] >= left and a[i] >= a[i + 1]
    env = np.maximum.accumulate(a[::-1])[::-1]
    keep = peak & (a >= env - 1e-300)
    return t[keep], a[keep]


def fit_decay(series: CorrelationSeries, window=None, method: str = "loglinear",
              min_points: int = 5) -> DecayFit:
    """Least squares on log|C| (method 'loglinear') or on the decreasing peak envelope ('envelope')."""
    t, c, se = np.asarray(series.tGrid), np.abs(np.asarray(series.values)), np.asarray(series.stderr)
    lo, hi = window if window is not None else (float(t.min()), float(t.max()))
    sel = (t >= lo) & (t <= hi) & (c > 3 * se) & (c > 0)
    tt, cc = t[sel], c[sel]
    if method == "envelope":
        tt, cc = _upper_envelope(tt, cc)
    elif method != "loglinear":
        raise DomainError(f"unknown fit method {method!r}")
    if tt.size < min_points:
        raise FitQualityError(f"only {tt.size} significant points in the window", partial={"t": tt, "c": cc})
    fit = line_fit(tt, np.log(cc))
    return DecayFit(-fit.slope, math.exp(fit.intercept), max(0.0, min(1.0, fit.r2)), (lo, hi), int(tt.size), method)


# ---------------------------------------------------------------------------
# Hoelder seminorms and norms

_KIND_LEAF = {"stable": M.nplus_mat, "unstable": M.nminus_mat}


def holder_seminorm(f, kind: str, beta: float, cfg: NormConfig = NormConfig(), n: int = 4000,
                    seed: int = 0, support_fraction: float = 0.75) -> float:
    """Empirical sup of |f(x) - f(y)| / d(x, y)^beta over sampled local pairs.

    stable/unstable: y = x n(u) on the strong leaf with pseudo-distance
    d = |u| (1 - e^{-(1-lambda)T}) / (1 - lambda) <= delta; ambient: y = x exp(v),
    d = |v| <= delta.  Most base points are drawn from the support of f.
    A lower bound of the true seminorm.
    """
    if not 0 < beta <= 1:
        raise DomainError("beta must lie in (0, 1]")
    rng = M.make_rng(seed, 0x484F4C)
    n_sup = int(round(support_fraction * n))
    parts = []
    if n_sup and hasattr(f, "support_sample"):
        parts.append(f.support_sample(rng, n_sup))
    parts.append(M.haar_sample_array(int(rng.integers(2**62)), n - sum(p.shape[0] for p in parts), "rejection"))
    x = np.concatenate(parts)
    m = x.shape[0]
    scale = rng.random(m)
    if kind in _KIND_LEAF:
        k = 1.0 - cfg.lam
        factor = (1.0 - math.exp(-k * cfg.truncationT)) / k
        umax = cfg.delta / factor
        u = umax * scale * rng.choice([-1.0, 1.0], size=m)
        y = M.reduce_array(x @ _KIND_LEAF[kind](u))
        d = np.abs(u) * factor
    elif kind == "ambient":
        v = rng.normal(size=(m, 3))
        v *= (cfg.delta * scale / np.linalg.norm(v, axis=1))[:, None]
        y = M.reduce_array(x @ _expm_rows(v))
        d = np.linalg.norm(v, axis=1)
    else:
        raise DomainError(f"unknown kind {kind!r}")
    ok = d > 0
    if not np.any(ok):
        raise SamplingError("no usable pairs")
    diff = np.abs(f(x[ok]) - f(y[ok]))
    return float(np.max(diff / d[ok] ** beta))


def holder_norm(f, kind: str, beta: float, cfg: NormConfig = NormConfig(), n: int = 4000, seed: int = 0) -> float:
    """|f|_{kind, beta} = |f|_inf + H_{kind, beta}(f)."""
    return f.sup() + holder_seminorm(f, kind, beta, cfg, n, seed)


def dictionary(version: int = DICTIONARY_VERSION, size: int = 20) -> list[Observable]:
    """Fixed, versioned list of unit-weight bumps standing in for the test-function ball."""
    if version != 1:
        raise DomainError(f"unknown dictionary version {version}")
    centers = M.haar_sample_array(_DICT_SEED, size, "rejection")
    return [make_bump(c, _DICT_RADII[i % len(_DICT_RADII)]) for i, c in enumerate(centers)]


def normalize_dictionary(dic, beta: float, cfg: NormConfig = NormConfig(), n: int = 4000, seed: int = 0):
    """Scale each element to |phi|_{s, beta} = 1 (estimated)."""
    out = []
    for i, phi in enumerate(dic):
        nrm = holder_norm(phi, "stable", beta, cfg, n, seed + i)
        out.append(phi.scaled(1.0 / nrm) if nrm > 0 else phi)
    return out


def mc_integral(f, n: int = 100_000, seed: int = 0, shards: int = 10) -> tuple[float, float]:
    """Monte Carlo integral over M (probability normalization) with a shard standard error."""
    vals = []
    for s, ns in enumerate(_shard_sizes(n, shards)):
        vals.append(float(np.mean(f(M.haar_sample_array(seed, ns, "rejection", stream=(s,))))))
    vals = np.array(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(shards))


class Product(Function):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def __call__(self, p):
        return self.a(p) * self.b(p)

    def sup(self):
        return self.a.sup() * self.b.sup()


def norm_estimate(f, which: str, dic, cfg: NormConfig = NormConfig(), n: int = 50_000, seed: int = 0,
                  normalized: bool = False) -> tuple[float, float]:
    """Empirical lower bounds of the weak, stable-dual and unstable-Hoelder norms.

    Returns (value, stderr); stderr is 0 for the Hoelder seminorm.
    """
    if which == "unstableHolder":
        return holder_seminorm(f, "unstable", cfg.beta, cfg, seed=seed), 0.0
    if not dic:
        raise DomainError("empty dictionary")
    if which not in ("weak", "stableDual"):
        raise DomainError(f"unknown norm {which!r}")
    beta = 1.0 if which == "weak" else cfg.beta
    elems = dic if normalized else normalize_dictionary(dic, beta, cfg, seed=seed)
    best, best_se = -math.inf, 0.0
    for phi in elems:
        v, se = mc_integral(Product(phi, f), n, seed)
        if abs(v) > best:
            best, best_se = abs(v), se
    return best, best_se
