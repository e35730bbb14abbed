"""Leaf averages, resolvent quadrature and Laplace-domain checks.

R(z) f(p) = int_0^inf e^{-zt} f(T_{-t} p) dt is evaluated along one sampled
trajectory: f(T_{-t} p) is interpolated by quadratics on panels of width 2h
and the products with t^{n-1} e^{-zt} / (n-1)! are integrated exactly
(exponentially fitted Simpson), so constants are reproduced to rounding for
every b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammainccinv, gammaln

from . import model as M
from . import observables as O
from .errors import ConfigError, DomainError, SamplingError
from .fitting import line_fit
from .structures import NormConfig

TRUNCATION_TOL = 1e-10  # e^{-aT}; the stated invariant only needs 1e-8
MAX_POWER = 64


# ---------------------------------------------------------------------------
# averaging operators


@dataclass(frozen=True)
class AverageConfig:
    deltaS: float = 0.1
    epsU: float = 0.1
    quadPoints: int = 33

    def __post_init__(self):
        for name in ("deltaS", "epsU"):
            r = getattr(self, name)
            if not 0 < r <= O.MAX_RADIUS:
                raise ConfigError(f"{name} must lie in (0, {O.MAX_RADIUS}]")
        if self.quadPoints < 16:
            raise ConfigError("quadPoints must be >= 16")

    def nodes(self, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Simpson nodes and weights on [-radius, radius] (arclength)."""
        u = np.linspace(-radius, radius, self.quadPoints)
        w = simpson(np.eye(self.quadPoints), x=u, axis=1)
        return u, w


def _leaf_integral(f, pts: np.ndarray, mat, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2, 2)
    acc = np.zeros(pts.shape[0])
    for uk, wk in zip(u, w):
        acc += wk * f(M.reduce_array(pts @ mat(uk)))
    return acc


def stable_average_array(f, pts: np.ndarray, cfg: AverageConfig = AverageConfig()) -> np.ndarray:
    u, w = cfg.nodes(cfg.deltaS)
    return _leaf_integral(f, pts, M.nplus_mat, u, w) / w.sum()


def stable_average(f, p: M.ManifoldPoint, cfg: AverageConfig = AverageConfig()) -> float:
    """A^s_delta f(p): arclength average over the stable segment of radius deltaS."""
    return float(stable_average_array(f, p.m[None], cfg)[0])


class StableAverage(O.Function):
    """x -> A^s_delta f(x) as a function on M."""

    def __init__(self, base, cfg: AverageConfig):
        self.base, self.cfg = base, cfg

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return stable_average_array(self.base, p.reshape(-1, 2, 2), self.cfg).reshape(p.shape[:-2])

    def support_sample(self, rng, n):
        x = self.base.support_sample(rng, n)
        u = rng.uniform(-self.cfg.deltaS, self.cfg.deltaS, size=n)
        return M.reduce_array(x @ M.nplus_mat(u))

    def sup(self):
        return self.base.sup()


class Difference(O.Function):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def __call__(self, p):
        return self.a(p) - self.b(p)

    def support_sample(self, rng, n):
        return self.a.support_sample(rng, n)

    def sup(self):
        return self.a.sup() + self.b.sup()


def unstable_average_array(f, pts: np.ndarray, cfg: AverageConfig = AverageConfig()) -> np.ndarray:
    """A^u_eps f = Z_eps int_{W^u_eps} f dm^u with Z_eps fixed by A^u_eps 1 = 1."""
    u, w = cfg.nodes(cfg.epsU)
    return _leaf_integral(f, pts, M.nminus_mat, u, w) / w.sum()


def _weak_stable_jacobian(u: float, h: float = 1e-5) -> float:
    """Jacobian of the unstable holonomy W^sc(x) -> W^sc(x n-(u)) at x, Riemannian area.

    Points of W^sc(x) are x n+(s) a(t) with area density e^{-t} ds dt; the image
    of (s, t) is read off from the N+A factor of n-(-u) n+(s) a(t) n-(r).
    """
    def image(s, t):
        g = M.nminus_mat(-u) @ M.nplus_mat(s) @ M.a_mat(t)
        r = -g[1, 0] / g[1, 1]
        hmat = g @ M.nminus_mat(r)
        return np.array([hmat[0, 1] * hmat[0, 0], 2 * math.log(hmat[0, 0])])

    ds = (image(h, 0) - image(-h, 0)) / (2 * h)
    dt = (image(0, h) - image(0, -h)) / (2 * h)
    s1, t1 = image(0.0, 0.0)
    return abs(ds[0] * dt[1] - ds[1] * dt[0]) * math.exp(-t1)


def _chart_density(u: float, h: float = 1e-6) -> float:
    """Volume density of the chart (u, s, t) -> n+(s) a(t) n-(u) at s = t = 0."""
    def chart(u_, s, t):
        return M.nplus_mat(s) @ M.a_mat(t) @ M.nminus_mat(u_)

    y = chart(u, 0.0, 0.0)
    yi = M.sl2_inverse(y)
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        d = (chart(u + e[0], e[1], e[2]) - chart(u - e[0], -e[1], -e[2])) / (2 * h)
        v = M.AlgebraVector.from_matrix(yi @ d)
        cols.append((v.cX, v.cPlus, v.cMinus))
    return abs(np.linalg.det(np.array(cols).T))


def dual_kernel(cfg: AverageConfig = AverageConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Kernel tilde Z_eps(x, x n-(u)) on the quadrature nodes.

    tilde Z = Z_eps(x) J(x) rho(xi) / (J(xi) rho(x)) with J the holonomy Jacobian
    between weak-stable leaves and rho the chart volume density.
    """
    u, w = cfg.nodes(cfg.epsU)
    z_eps = 1.0 / w.sum()
    j0, r0 = _weak_stable_jacobian(0.0), _chart_density(0.0)
    ker = np.array([z_eps * j0 * _chart_density(uk) / (_weak_stable_jacobian(uk) * r0) for uk in u])
    if not np.all(ker > 0):
        raise SamplingError("dual kernel lost positivity")
    return u, ker


def unstable_average_dual_array(phi, pts: np.ndarray, cfg: AverageConfig = AverageConfig()) -> np.ndarray:
    """A^{u*}_eps phi(p) = int_{W^u_eps(p)} tilde Z_eps(p, xi) phi(xi) dm^u(xi)."""
    u, ker = dual_kernel(cfg)
    _, w = cfg.nodes(cfg.epsU)
    return _leaf_integral(phi, pts, M.nminus_mat, u, w * ker)


def unstable_average_dual(phi, p: M.ManifoldPoint, cfg: AverageConfig = AverageConfig()) -> float:
    return float(unstable_average_dual_array(phi, p.m[None], cfg)[0])


class UnstableAverage(O.Function):
    def __init__(self, base, cfg: AverageConfig, dual: bool = False):
        self.base, self.cfg, self.dual = base, cfg, dual

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        fn = unstable_average_dual_array if self.dual else unstable_average_array
        return fn(self.base, p.reshape(-1, 2, 2), self.cfg).reshape(p.shape[:-2])

    def support_sample(self, rng, n):
        x = self.base.support_sample(rng, n)
        u = rng.uniform(-self.cfg.epsU, self.cfg.epsU, size=n)
        return M.reduce_array(x @ M.nminus_mat(u))

    def sup(self):
        return self.base.sup()


@dataclass(frozen=True)
class AverageBounds:
    """Measured sides of the three averaging inequalities (C-free ratios)."""

    delta: float
    supDiff: float  # |A f - f|_inf
    normSB: float  # |f|_{s,beta}
    holderDiff: float  # H_{s,beta}(A f - f)
    holderF: float  # H_{s,beta}(f)
    supF: float
    lipAvg: float  # H_{s,1}(A f)

    def constants(self, beta: float) -> tuple[float, float, float]:
        """Smallest C making each inequality hold for this sample."""
        d = self.delta
        c1 = self.supDiff / (d**beta * self.normSB) if self.normSB > 0 else 0.0
        # H(Af - f) <= (2 + C d) H(f) + C d^{1-beta} |f|_inf
        excess = self.holderDiff - 2 * self.holderF
        c2 = max(0.0, excess / (d * self.holderF + d ** (1 - beta) * self.supF))
        c3 = self.lipAvg * d / self.supF if self.supF > 0 else 0.0
        return c1, c2, c3


def average_bounds(f, delta: float, cfg: NormConfig = NormConfig(), n: int = 2000, seed: int = 0,
                   quadPoints: int = 33) -> AverageBounds:
    acfg = AverageConfig(deltaS=delta, epsU=delta, quadPoints=quadPoints)
    avg = StableAverage(f, acfg)
    diff = Difference(avg, f)
    rng = M.make_rng(seed, 0x415647)
    pts = np.concatenate([avg.support_sample(rng, n), M.haar_sample_array(seed, n // 4, "rejection")])
    sup_diff = float(np.max(np.abs(avg(pts) - f(pts))))
    beta = cfg.beta
    hf = O.holder_seminorm(f, "stable", beta, cfg, n=n, seed=seed)
    hd = O.holder_seminorm(diff, "stable", beta, cfg, n=n, seed=seed)
    lip = O.holder_seminorm(avg, "stable", 1.0, cfg, n=n, seed=seed)
    return AverageBounds(delta, sup_diff, f.sup() + hf, hd, hf, f.sup(), lip)


def ambient_lipschitz_of_average(f, delta: float, cfg: NormConfig = NormConfig(), n: int = 1000,
                                 seed: int = 0) -> float:
    """Ambient Lipschitz constant of A^s_delta f (smoothing property)."""
    avg = StableAverage(f, AverageConfig(deltaS=delta, epsU=delta))
    return O.holder_seminorm(avg, "ambient", 1.0, cfg, n=n, seed=seed)


# ---------------------------------------------------------------------------
# resolvent quadrature


@dataclass(frozen=True)
class ResolventQuery:
    a: float
    b: float
    truncationT: float | None = None
    step: float | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("Re z must be positive")
        rule = min(0.01, math.pi / (8 * max(abs(self.b), 1.0)))
        if self.step is None:
            object.__setattr__(self, "step", rule)
        if self.truncationT is None:
            object.__setattr__(self, "truncationT", -math.log(TRUNCATION_TOL) / self.a)
        if self.step > rule * (1 + 1e-12):
            raise ConfigError(f"step {self.step} exceeds the oscillation rule {rule}")
        if math.exp(-self.a * self.truncationT) > 1e-8:
            raise ConfigError("truncation leaves e^{-aT} > 1e-8")

    @property
    def z(self) -> complex:
        return complex(self.a, self.b)

    def grid(self, n: int = 1) -> tuple[float, int]:
        """(h, panels) for the power-n kernel; the horizon grows so the tail stays below tolerance."""
        T = self.truncationT
        if n > 1:
            T = max(T, float(gammainccinv(n, TRUNCATION_TOL)) / self.a)
        panels = int(math.ceil(T / (2 * self.step)))
        return T / (2 * panels), panels


def _exp_moments(z: complex, L: float, mmax: int) -> np.ndarray:
    """I_m = int_0^L s^m e^{-zs} ds for m = 0..mmax.

    Power series in zL for |zL| <= 4; upward recurrence
    I_m = (m I_{m-1} - L^m e^{-zL}) / z once |zL| >= mmax, where it is stable.
    """
    w = z * L
    if abs(w) <= 4:
        k = np.arange(60)
        terms = np.cumprod(np.concatenate([[1.0], -w / k[1:]]))  # (-w)^k / k!
        m = np.arange(mmax + 1)[:, None]
        return L ** (m[:, 0] + 1) * (terms[None, :] / (m + k[None, :] + 1)).sum(axis=1)
    if abs(w) < mmax:
        raise ConfigError("panel too wide for the moment series")
    e = np.exp(-w)
    out = np.empty(mmax + 1, dtype=complex)
    out[0] = (1 - e) / z
    for m in range(1, mmax + 1):
        out[m] = (m * out[m - 1] - L**m * e) / z
    return out


def laplace_weights(z: complex, h: float, panels: int, n: int = 1) -> np.ndarray:
    """Weights w with sum w_i g(ih) = int_0^{2 h panels} t^{n-1} e^{-zt} / (n-1)! g_quad(t) dt.

    g_quad is the piecewise-quadratic interpolant of g on panels [2jh, 2jh + 2h].
    """
    if not 1 <= n <= MAX_POWER:
        raise DomainError(f"power must lie in [1, {MAX_POWER}]")
    I = _exp_moments(z, 2 * h, n + 1)
    m = np.arange(n)
    # quadratic Lagrange basis on nodes 0, h, 2h against s^m e^{-zs}
    Q = np.empty((n, 3), dtype=complex)
    Q[:, 0] = (I[m + 2] - 3 * h * I[m + 1] + 2 * h * h * I[m]) / (2 * h * h)
    Q[:, 1] = -(I[m + 2] - 2 * h * I[m + 1]) / (h * h)
    Q[:, 2] = (I[m + 2] - h * I[m + 1]) / (2 * h * h)
    tj = 2 * h * np.arange(panels)
    # t^{n-1}/(n-1)! e^{-zt} = e^{-z t_j} sum_m t_j^{n-1-m} / ((n-1-m)! m!) s^m, in log space
    logt = np.log(np.where(tj > 0, tj, 1.0))
    expo = (n - 1 - m)[None, :]
    logc = expo * logt[:, None] - gammaln(n - m)[None, :] - gammaln(m + 1)[None, :]
    logc = logc - z.real * tj[:, None]
    c = np.where((expo > 0) & (tj[:, None] == 0), 0.0, np.exp(logc))
    W = (c @ Q) * np.exp(-1j * z.imag * tj)[:, None]
    out = np.zeros(2 * panels + 1, dtype=complex)
    out[0:-1:2] += W[:, 0]
    out[1::2] += W[:, 1]
    out[2::2] += W[:, 2]
    return out


def trajectory(f, pts: np.ndarray, h: float, nodes: int, direction: float = -1.0) -> np.ndarray:
    """f(T_{direction * i h} p) for i < nodes; shape (len(pts), nodes)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2, 2)
    times = direction * h * np.arange(nodes)
    out = np.empty((pts.shape[0], nodes))
    if pts.shape[0] <= 16:
        # few long orbits: anchored evaluation vectorized over time
        for i, g in enumerate(pts):
            out[i] = f(M.orbit(g, times))
        return out
    block = max(1, (1 << 18) // pts.shape[0])
    buf, start = [], 0
    for i, (_, state) in enumerate(M.flow_along_grid(pts, times)):
        buf.append(state)
        if len(buf) == block or i == nodes - 1:
            stack = np.stack(buf, axis=1)
            out[:, start:i + 1] = f(stack.reshape(-1, 2, 2)).reshape(pts.shape[0], len(buf))
            buf, start = [], i + 1
    return out


def resolvent_power_array(q: ResolventQuery, n: int, f, pts: np.ndarray) -> np.ndarray:
    """R(z)^n f at each point: (1/(n-1)!) int t^{n-1} e^{-zt} f(T_{-t} p) dt."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if n > MAX_POWER:
        raise DomainError(f"n must be <= {MAX_POWER}")
    h, panels = q.grid(n)
    w = laplace_weights(q.z, h, panels, n)
    return trajectory(f, pts, h, w.size) @ w


def resolvent_apply(q: ResolventQuery, f, p: M.ManifoldPoint) -> complex:
    return complex(resolvent_power_array(q, 1, f, p.m[None])[0])


def resolvent_power_apply(q: ResolventQuery, n: int, f, p: M.ManifoldPoint) -> complex:
    return complex(resolvent_power_array(q, n, f, p.m[None])[0])


def resolvent_constant(q: ResolventQuery, n: int = 1, c: float = 1.0) -> complex:
    """R(z)^n applied to the constant c through the same quadrature."""
    h, panels = q.grid(n)
    return complex(c * laplace_weights(q.z, h, panels, n).sum())


def nested_resolvent(q1: ResolventQuery, q2: ResolventQuery, f, p: M.ManifoldPoint) -> complex:
    """R(z1) (R(z2) f)(p) by nested quadrature along one trajectory.

    The inner integral at T_{-t} p reuses the trajectory shifted by t.
    """
    h = min(q1.step, q2.step)
    T1, T2 = q1.truncationT, q2.truncationT
    p1, p2 = int(math.ceil(T1 / (2 * h))), int(math.ceil(T2 / (2 * h)))
    w1 = laplace_weights(q1.z, h, p1, 1)
    w2 = laplace_weights(q2.z, h, p2, 1)
    g = trajectory(f, p.m[None], h, w1.size + w2.size - 1)[0]
    inner = np.lib.stride_tricks.sliding_window_view(g, w2.size)[: w1.size] @ w2
    return complex(inner @ w1)


def resolvent_bound_scan(f, a: float, nPoints: int = 1000, bMax: float = 50.0, seed: int = 0,
                         lead: float = 3.0) -> dict:
    """max over (p, b) of |R(a + ib) f(p)| - |f|_inf / a.

    Points are drawn from the support of f and flowed forward by U(0, lead) so
    that the backward trajectory crosses the support.
    """
    rng = M.make_rng(seed, 0x524253)
    base = f.support_sample(rng, nPoints)
    shift = rng.uniform(0, lead, nPoints)
    pts = np.concatenate([M.flow_array(base[i:i + 1], shift[i]) for i in range(nPoints)])
    bs = rng.uniform(-bMax, bMax, nPoints)
    q0 = ResolventQuery(a, bMax)
    h, panels = q0.grid()
    traj = trajectory(f, pts, h, 2 * panels + 1)
    vals = np.array([traj[i] @ laplace_weights(complex(a, bs[i]), h, panels) for i in range(nPoints)])
    bound = f.sup() / a
    return {"a": a, "maxAbs": float(np.max(np.abs(vals))), "bound": bound,
            "maxExcess": float(np.max(np.abs(vals)) - bound), "values": vals, "b": bs}


def power_identity_scan(a: float, bs, nMax: int = 5) -> float:
    """max |R(z)^n 1 - z^{-n}| over b in bs and n <= nMax."""
    worst = 0.0
    for b in bs:
        q = ResolventQuery(a, float(b))
        for n in range(1, nMax + 1):
            worst = max(worst, abs(resolvent_constant(q, n) - q.z ** (-n)))
    return worst


# ---------------------------------------------------------------------------
# Laplace transform of correlation data


def laplace_correlation_scan(series, aLine: float, bGrid) -> np.ndarray:
    """hat C(a + ib) by exponentially fitted Simpson on the series grid."""
    t = np.asarray(series.tGrid, dtype=float)
    c = np.asarray(series.values, dtype=float)
    if t[0] != 0 or t.size < 3:
        raise DomainError("series must start at t = 0")
    h = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - h)) > 1e-9 * h:
        raise DomainError("series grid must be uniform")
    if t.size % 2 == 0:
        t, c = t[:-1], c[:-1]
    if t[-1] * aLine < 5 * (1 - 1e-12):
        raise DomainError("series too short: need T * aLine >= 5")
    panels = (t.size - 1) // 2
    return np.array([laplace_weights(complex(aLine, b), h, panels) @ c for b in np.asarray(bGrid, float)])


@dataclass(frozen=True)
class StripReport:
    finite: bool
    smooth: bool
    maxRatio: float  # max |hat C| away from b = 0 over the median
    peakB: float
    curvature: float  # max second difference over max |hat C|

    @property
    def passes(self) -> bool:
        return self.finite and self.smooth and self.maxRatio <= 10.0


def strip_report(values: np.ndarray, bGrid, exclude: float = 5.0, smooth_tol: float = 0.1) -> StripReport:
    b = np.asarray(bGrid, dtype=float)
    v = np.abs(np.asarray(values))
    finite = bool(np.all(np.isfinite(v)))
    med = float(np.median(v))
    away = np.abs(b) > exclude
    ratio = float(np.max(v[away]) / med) if med > 0 else math.inf
    curv = float(np.max(np.abs(np.diff(v, 2))) / np.max(v))
    return StripReport(finite, curv <= smooth_tol, ratio, float(b[np.argmax(v)]), curv)


def locate_peak(values: np.ndarray, bGrid, positive: bool = True) -> float:
    b = np.asarray(bGrid, dtype=float)
    v = np.abs(np.asarray(values))
    sel = b > 0 if positive else np.ones(b.size, bool)
    return float(b[sel][np.argmax(v[sel])])


# ---------------------------------------------------------------------------
# inverse Laplace reconstruction


@dataclass(frozen=True)
class InverseLaplaceResult:
    bMax: float
    value: float
    reference: float
    residual: float


def inverse_laplace_check(a: float, bMaxes, f, p: M.ManifoldPoint, t: float, db: float | None = None
                          ) -> list[InverseLaplaceResult]:
    """(1/2pi) int_{-B}^{B} e^{(a+ib)t} R(a+ib) f(p) db for each B in bMaxes.

    f(p)/z is subtracted under the integral and its exact transform f(p) added
    back, which makes the integrand decay like b^{-2}.  The reference is the
    direct evolution f(T_{-t} p).
    """
    if not a > 0:
        raise DomainError("a must be positive")
    if not 0 < t <= 10:
        raise DomainError("t must lie in (0, 10]")
    bMaxes = sorted(float(B) for B in bMaxes)
    top = bMaxes[-1]
    q = ResolventQuery(a, top)
    h, panels = q.grid()
    T = 2 * h * panels
    if db is None:
        db = min(0.05, math.pi / (4 * T))
    nb = 2 * int(math.ceil(top / db)) + 1
    bs = np.linspace(-top, top, nb)
    g = trajectory(f, p.m[None], h, 2 * panels + 1)[0]
    fp = g[0]
    rz = np.empty(nb, dtype=complex)
    for i, b in enumerate(bs):
        rz[i] = laplace_weights(complex(a, b), h, panels) @ g
    zs = a + 1j * bs
    integrand = np.exp(zs * t) * (rz - fp / zs)
    ref = float(f(M.flow_long(p.m[None], -t))[0])
    out = []
    for B in bMaxes:
        sel = np.abs(bs) <= B + 1e-9
        val = fp + float(simpson(integrand[sel], x=bs[sel]).real) / (2 * math.pi)
        out.append(InverseLaplaceResult(B, val, ref, abs(val - ref)))
    return out


def residuals_monotone(results: list[InverseLaplaceResult], slack: float = 1e-4) -> bool:
    r = [x.residual for x in results]
    return all(r[i + 1] <= r[i] + slack for i in range(len(r) - 1))


# ---------------------------------------------------------------------------
# dual resolvent seminorm growth


class DualResolvent(O.Function):
    """x -> A^{u*}_eps (R(z)^* phi)(x), R(z)^* phi(x) = int e^{-zt} phi(T_t x) dt (real part kept)."""

    def __init__(self, phi, q: ResolventQuery, cfg: AverageConfig, part: str = "abs"):
        self.phi, self.q, self.cfg, self.part = phi, q, cfg, part
        h, panels = q.grid()
        self.h, self.w = h, laplace_weights(q.z, h, panels)

    def _rstar(self, pts):
        return trajectory(self.phi, pts, self.h, self.w.size, direction=1.0) @ self.w

    def __call__(self, p):
        p = np.asarray(p, dtype=float).reshape(-1, 2, 2)
        u, ker = dual_kernel(self.cfg)
        _, wq = self.cfg.nodes(self.cfg.epsU)
        acc = np.zeros(p.shape[0], dtype=complex)
        for uk, wk in zip(u, wq * ker):
            acc += wk * self._rstar(M.reduce_array(p @ M.nminus_mat(uk)))
        return acc.real if self.part == "real" else acc.imag

    def support_sample(self, rng, n):
        x = self.phi.support_sample(rng, n)
        return M.flow_array(x, -float(rng.uniform(0, 1.0)))

    def sup(self):
        return self.phi.sup() / self.q.a


def dual_seminorm_growth(phi, bs, a: float = 1.0, eps: float = 0.1, n: int = 200, seed: int = 0,
                         cfg: NormConfig = NormConfig(), quadPoints: int = 16) -> dict:
    """Stable Hoelder seminorm of A^{u*}_eps R(z)^* phi for each b, and its log-log growth exponent."""
    acfg = AverageConfig(deltaS=eps, epsU=eps, quadPoints=quadPoints)
    vals = []
    for b in bs:
        fn = DualResolvent(phi, ResolventQuery(a, float(b), truncationT=-math.log(1e-8) / a), acfg, "real")
        vals.append(O.holder_seminorm(fn, "stable", cfg.beta, cfg, n=n, seed=seed))
    vals = np.array(vals)
    fit = line_fit(np.log(np.asarray(bs, float)), np.log(vals))
    return {"b": np.asarray(bs, float), "seminorm": vals, "exponent": fit.slope, "r2": fit.r2}
