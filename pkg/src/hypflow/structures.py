"""Invariant leaves, dynamical pseudo-distances, holonomies and pinching fits.

Leaves of a point g: W^s(g) = {g n+(u)}, W^u(g) = {g n-(u)}, the flow line
{g a(t)}; weak leaves combine one of the strong leaves with the flow.
Everything is explicit in the model, so the generic constructions only
survive as test oracles (bisection intersections, finite differences).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar

from . import model as M
from .errors import ConfigError, DomainError, FitQualityError, SingularConfigurationError
from .fitting import line_fit, loglog_fit

STABLE, UNSTABLE, CENTER = "stable", "unstable", "center"
_KIND_DIRECTION = {STABLE: M.STABLE_PLUS, UNSTABLE: M.UNSTABLE_MINUS, CENTER: M.FLOW}
_KIND_MATRIX = {STABLE: M.nplus_mat, UNSTABLE: M.nminus_mat, CENTER: M.a_mat}

# typed "infinite distance" value of the pseudo-distances
INFINITE = math.inf
DECAY_THRESHOLD = 1e-6
# entries of a lifted offset this close to 0 (or to the identity) count as exact
LEAF_TOL = 1e-12


@dataclass(frozen=True)
class LeafCoordinate:
    base: M.ManifoldPoint
    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in _KIND_DIRECTION:
            raise DomainError(f"unknown leaf kind {self.kind!r}")


@dataclass(frozen=True)
class HolonomyResult:
    """Stable holonomy image on W^uc of the target.

    ``jacobian`` is the derivative of the strong-unstable coordinate,
    ``ucJacobian`` the same map measured by arclength along the image curve
    inside the weak-unstable leaf (flow drift included).
    """

    image: M.ManifoldPoint
    jacobian: float
    flowOffset: float
    imageParam: float = 0.0
    ucJacobian: float = 1.0


@dataclass(frozen=True)
class NormConfig:
    lam: float = 0.5
    beta: float = 0.25
    betaPrime: float = 0.2
    delta: float = 0.1
    truncationT: float = 40.0
    quadStep: float = 0.01
    tau: float = 1.0
    muHat: float = 1.0

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ConfigError("lambda must lie in (0, 1)")
        if not self.lam < self.muHat:
            raise ConfigError("lambda must be below the measured contraction rate")
        if not 0 < self.betaPrime < self.beta < self.tau**2:
            raise ConfigError("need 0 < betaPrime < beta < tau^2")
        if self.delta <= 0 or self.truncationT <= 0 or self.quadStep <= 0:
            raise ConfigError("delta, truncationT and quadStep must be positive")


@dataclass(frozen=True)
class PinchingReport:
    muHat: float
    aHat: float
    tauD: float
    tauH: float
    tauJ: float
    r2: dict = field(default_factory=dict)
    driftConstant: float = math.nan

    @property
    def tau(self) -> float:
        return min(self.tauD, self.tauH, self.tauJ)


def leaf_matrix(base: np.ndarray, kind: str, param) -> np.ndarray:
    return base @ _KIND_MATRIX[kind](param)


def leaf_point(c: LeafCoordinate) -> M.ManifoldPoint:
    if not abs(c.param) < 50:
        raise DomainError("|param| must be < 50")
    if c.kind == CENTER:
        return M.flow_point(c.base, c.param)
    return M.reduce_mod_gamma(leaf_matrix(c.base.m, c.kind, c.param))


# ---------------------------------------------------------------------------
# dynamical pseudo-distances


def _offset(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # x^{-1} (gamma y) for the translate of y closest to x
    off = M.sl2_inverse(x) @ M.lift_near(x, y)
    # +-I: pick the sign that makes the offset close to the identity
    return off if off[0, 0] + off[1, 1] >= 0 else -off


def dynamical_distance_offset(m0: np.ndarray, side: str, cfg: NormConfig = NormConfig()) -> float:
    """Pseudo-distance for the pair (g, g m0), any g.

    With the lift fixed, d(T_t x, T_t y) = |log(a(-t) m0 a(t))| as long as the
    conjugate stays in the log domain; leaving it means the integrand has not
    decayed and the pair is on different leaves.
    """
    if side not in ("plus", "minus"):
        raise DomainError("side must be 'plus' or 'minus'")
    m0 = np.array(m0, dtype=float)
    # offsets below rounding level would be blown up to O(1) by e^{T}
    m0[np.abs(m0) < LEAF_TOL] = 0.0
    m0[np.abs(m0 - np.eye(2)) < LEAF_TOL] = np.eye(2)[np.abs(m0 - np.eye(2)) < LEAF_TOL]
    n = int(round(cfg.truncationT / cfg.quadStep))
    s = np.linspace(0.0, cfg.truncationT, n + 1)
    t = s if side == "plus" else -s
    mt = M.a_mat(-t) @ m0 @ M.a_mat(t)
    d = M.local_distance(mt)
    if np.any(~np.isfinite(d)):
        return INFINITE
    f = np.exp(cfg.lam * s) * d
    if f[-1] > DECAY_THRESHOLD:
        return INFINITE
    return float(simpson(f, x=s))


def dynamical_distance(x: M.ManifoldPoint, y: M.ManifoldPoint, side: str,
                       cfg: NormConfig = NormConfig()) -> float:
    try:
        m0 = _offset(x.m, y.m)
    except DomainError:
        return INFINITE
    return dynamical_distance_offset(m0, side, cfg)


def on_leaf_distance(u: float, cfg: NormConfig = NormConfig()) -> float:
    """Closed form of the pseudo-distance between g and g n(u) on its strong leaf."""
    k = 1.0 - cfg.lam
    return abs(u) * (1.0 - math.exp(-k * cfg.truncationT)) / k


# ---------------------------------------------------------------------------
# stable holonomy


def holonomy_params(rho: float, w: float) -> tuple[float, float, float, float]:
    """(rho', jacobian, flowOffset, s) for the stable holonomy x n-(rho) -> W^uc(x n+(w))."""
    q = 1.0 - rho * w
    if abs(q) < 1e-6:
        raise SingularConfigurationError("1 - rho*w vanishes")
    return rho / q, q**-2, 2.0 * math.log(abs(q)), w / q


def stable_holonomy(src: LeafCoordinate, target: M.ManifoldPoint) -> HolonomyResult:
    """Slide x n-(rho) along its stable leaf until it meets W^uc(target).

    ``target`` must be on W^s(x); its stable offset w is read off from the lift.
    """
    if src.kind != UNSTABLE:
        raise DomainError("holonomy source must be an unstable-leaf coordinate")
    x = src.base.m
    off = _offset(x, target.m)
    w = float(off[0, 1])
    if abs(off[1, 0]) > 1e-8 or abs(off[0, 0] - 1) > 1e-8:
        raise DomainError("target is not on the stable leaf of the base")
    if max(abs(src.param), abs(w)) > 0.3:
        raise DomainError("holonomy parameters must satisfy |param| <= 0.3")
    rho2, jac, tau, _ = holonomy_params(src.param, w)
    y = x @ M.nplus_mat(w)
    image = M.reduce_mod_gamma(y @ M.nminus_mat(rho2) @ M.a_mat(tau))
    return HolonomyResult(image, jac, tau, rho2, jac * math.exp(tau))


def holonomy_bisection(rho: float, w: float, tol: float = 1e-13) -> tuple[float, float, float]:
    """Oracle: intersect W^s(x n-(rho)) with W^uc(x n+(w)) numerically (x = I).

    Returns (rho', flowOffset, s).
    """
    xi = M.nminus_mat(rho)
    yinv = M.nplus_mat(-w)

    def gap(s):
        return (yinv @ xi @ M.nplus_mat(s))[0, 1]

    lo, hi = -2.0, 2.0
    if gap(lo) * gap(hi) > 0:
        raise SingularConfigurationError("holonomy bisection does not bracket")
    s = brentq(gap, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    m = yinv @ xi @ M.nplus_mat(s)
    e = m[0, 0]
    return m[1, 0] / e, 2.0 * math.log(e), s


def holonomy_product_jacobian(rho: float, w: float, n_terms: int = 20, h: float = 1e-5) -> float:
    """Truncated product formula for the holonomy Jacobian, J^u measured by finite differences.

    J^uT_{-1} at a point is the contraction of the unstable direction under one
    step of the inverse flow; each factor compares the two forward orbits
    T_n(xi) and T_n(Psi xi).
    """
    _, _, tau, _ = holonomy_params(rho, w)
    xi = M.nminus_mat(rho)
    img = M.nplus_mat(w) @ M.nminus_mat(rho / (1 - rho * w)) @ M.a_mat(tau)
    prod = 1.0
    for n in range(n_terms):
        # evaluate at reduced representatives so the matrices stay O(1)
        num = _unstable_jacobian_back(M.reduce_array(img @ M.a_mat(float(n))), h)
        den = _unstable_jacobian_back(M.reduce_array(xi @ M.a_mat(float(n))), h)
        prod *= num / den
    return prod


def _unstable_jacobian_back(g: np.ndarray, h: float) -> float:
    # |dT_{-1} e_u| by a central difference along n-
    p = g @ M.nminus_mat(h) @ M.a_mat(-1.0)
    q = g @ M.nminus_mat(-h) @ M.a_mat(-1.0)
    return float(M.local_distance(M.sl2_inverse(q) @ p)) / (2 * h)


# ---------------------------------------------------------------------------
# pinching / Hoelder exponents


def stable_derivative_norm(g: np.ndarray, t: float, h: float = 1e-6) -> float:
    """|d^sT_t| at g by a finite difference along n+."""
    p = g @ M.a_mat(t)
    q = g @ M.nplus_mat(h) @ M.a_mat(t)
    return float(M.local_distance(M.sl2_inverse(p) @ q)) / h


def unstable_derivative_conorm(g: np.ndarray, t: float, h: float = 1e-6) -> float:
    """theta(d^uT_t): the minimal expansion along n-, by a finite difference."""
    p = g @ M.a_mat(t)
    q = g @ M.nminus_mat(h * math.exp(-t)) @ M.a_mat(t)
    return float(M.local_distance(M.sl2_inverse(p) @ q)) / (h * math.exp(-t))


def _dist_to_unstable_leaf(pt: np.ndarray, y: np.ndarray, guess: float) -> float:
    yinv = M.sl2_inverse(y)

    def f(r):
        return float(M.local_distance(M.sl2_inverse(M.nminus_mat(r)) @ yinv @ pt))

    res = minimize_scalar(f, bracket=(guess - 0.05, guess + 0.05), tol=1e-12)
    return float(res.fun)


def unstable_leaf_drift(offset: np.ndarray, delta: float = 0.1, m: int = 9) -> float:
    """sup over |rho| <= delta of the distance from x n-(rho) to W^u(x offset), with x = I."""
    best = 0.0
    for rho in np.linspace(-delta, delta, m):
        pt = M.nminus_mat(rho)
        best = max(best, _dist_to_unstable_leaf(pt, offset, rho))
    return best


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def pinching_exponents(tGrid, sampleCount: int, seed: int,
                       scales=(1e-4, 1e-1), nScales: int = 7, delta: float = 0.1) -> PinchingReport:
    tGrid = np.asarray(tGrid, dtype=float)
    if tGrid.size == 0 or np.any(tGrid <= 0):
        raise DomainError("tGrid must be nonempty and positive")
    rng = M.make_rng(seed, 0x50494E)
    pts = M.haar_sample_array(seed, sampleCount, "rejection")
    partial: dict = {}

    # Lyapunov rate of the stable direction
    tt, ll = [], []
    for g in pts:
        for t in tGrid:
            tt.append(t)
            ll.append(math.log(stable_derivative_norm(g, t)))
    fit = line_fit(tt, ll)
    partial.update(muHat=-fit.slope, aHat=math.exp(fit.intercept), r2_mu=fit.r2)
    if tGrid.size >= 2 and fit.r2 < 0.8:
        raise FitQualityError("stable rate fit", partial=partial)

    eps = np.geomspace(scales[0], scales[1], nScales)
    dists, drifts, jgap, dgap = [], [], [], []
    for e in eps:
        for _ in range(max(1, sampleCount // 4)):
            v = rng.normal(size=3)
            v = e * v / np.linalg.norm(v)
            off = _expm_alg(v)
            d = float(M.local_distance(off))
            dists.append(d)
            drifts.append(unstable_leaf_drift(off, delta, 5))
            # holonomy jacobian along a stable offset of size d
            rho = rng.uniform(0.5, 1.0) * delta
            jgap.append(abs(1 - holonomy_params(rho, d)[1]))
            g = pts[rng.integers(len(pts))]
            gap = 0.0
            for basis in (M.UPLUS_MAT, M.UMINUS_MAT, M.X_MAT):
                a = (g @ basis).ravel()
                b = (g @ off @ basis).ravel()
                gap = max(gap, float(np.linalg.norm(_unit(a) - _unit(b))))
            dgap.append(gap)
    out = {}
    for name, ys in (("tauH", drifts), ("tauJ", jgap), ("tauD", dgap)):
        try:
            f = loglog_fit(dists, ys, min_decades=3.0, min_r2=0.8, what=name)
        except FitQualityError as err:
            partial[name] = err.partial
            raise FitQualityError(str(err), partial=partial) from None
        out[name] = f
        partial[name] = f.slope
    ratio = np.asarray(drifts) / np.asarray(dists) ** out["tauH"].slope
    return PinchingReport(
        muHat=-fit.slope, aHat=math.exp(fit.intercept),
        tauD=out["tauD"].slope, tauH=out["tauH"].slope, tauJ=out["tauJ"].slope,
        r2={"mu": fit.r2, **{k: f.r2 for k, f in out.items()}},
        driftConstant=float(ratio.max()),
    )


def _expm_alg(v) -> np.ndarray:
    """exp of cX X + c+ U+ + c- U- in closed form."""
    a = v[0] * M.X_MAT + v[1] * M.UPLUS_MAT + v[2] * M.UMINUS_MAT
    q = -np.linalg.det(a)  # a^2 = q I
    if q > 0:
        r = math.sqrt(q)
        return math.cosh(r) * np.eye(2) + (math.sinh(r) / r) * a
    if q < 0:
        r = math.sqrt(-q)
        return math.cos(r) * np.eye(2) + (math.sin(r) / r) * a
    return np.eye(2) + a
