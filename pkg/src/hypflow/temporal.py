"""Temporal distance of the four-leaf quadrilateral and its Katok-Burns expansion.

With y = x n+(w) on the stable leaf and y' = x n-(v) on the unstable leaf,
z  = W^s(y') cap W^uc(y)  and  z' = W^u(y) cap W^sc(y')
lie on one flow line; Delta is the time carrying z to z'.  Solving the two
triangular factorizations by hand gives Delta = -2 ln(1 - v w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import model as M
from .errors import ConfigError, DomainError, FitQualityError
from .fitting import loglog_fit

LOCALITY = 0.3
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class TemporalResult:
    delta: float
    firstOrder: float
    residual: float
    vNorm: float
    wNorm: float


def temporal_delta_closed(v: float, w: float) -> TemporalResult:
    vw = v * w
    if not abs(vw) < 0.9 or abs(1 - vw) <= 0.1:
        raise DomainError("(v, w) outside the locality region |1 - vw| > 0.1")
    delta = -2.0 * math.log1p(-vw)
    first = 2.0 * vw
    return TemporalResult(delta, first, delta - first, abs(v), abs(w))


def _root(fun, lo=-2.0, hi=2.0) -> float:
    flo, fhi = fun(lo), fun(hi)
    if flo * fhi > 0:
        raise ConfigError("leaf intersection is not bracketed")
    return brentq(fun, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def temporal_delta_from_matrices(x: np.ndarray, y: np.ndarray, yp: np.ndarray, roles: str = "standard") -> float:
    """Geometric oracle on lifted matrices: two 1-D root finds for z and z'.

    roles='standard': y on W^s(x), y' on W^u(x).  roles='swapped': y on
    W^u(x), y' on W^s(x), with the stable and unstable leaves exchanged in
    the construction of z and z'.
    """
    yinv, ypinv = M.sl2_inverse(y), M.sl2_inverse(yp)
    if roles == "standard":
        n_z, n_zp, ij_z, ij_zp = M.nplus_mat, M.nminus_mat, (0, 1), (1, 0)
    elif roles == "swapped":
        n_z, n_zp, ij_z, ij_zp = M.nminus_mat, M.nplus_mat, (1, 0), (0, 1)
    else:
        raise DomainError(f"unknown roles {roles!r}")
    # z on the leaf of y' through the complementary weak leaf of y
    s = _root(lambda s: (yinv @ yp @ n_z(s))[ij_z])
    z = yp @ n_z(s)
    p = _root(lambda p: (ypinv @ y @ n_zp(p))[ij_zp])
    zp = y @ n_zp(p)
    d = M.sl2_inverse(z) @ zp
    if abs(d[0, 1]) > 1e-10 or abs(d[1, 0]) > 1e-10:
        raise ConfigError("z and z' are not on one flow line")
    return 2.0 * math.log(abs(d[0, 0]))


def _lift_offset(x: np.ndarray, q: np.ndarray) -> np.ndarray:
    lifted = M.lift_near(x, q)
    off = M.sl2_inverse(x) @ lifted
    if off[0, 0] + off[1, 1] < 0:
        lifted, off = -lifted, -off
    return lifted, off


def temporal_delta_geometric(y: M.ManifoldPoint, yPrime: M.ManifoldPoint, x: M.ManifoldPoint) -> float:
    """Temporal distance of the quadrilateral (x, y, y') built from reduced points.

    Leaf membership is checked on the lifted offsets: x^{-1} y must be upper
    unipotent and x^{-1} y' lower unipotent, both within the locality bound.
    """
    ly, oy = _lift_offset(x.m, y.m)
    lp, op = _lift_offset(x.m, yPrime.m)
    if abs(oy[1, 0]) > MEMBERSHIP_TOL or abs(oy[0, 0] - 1) > MEMBERSHIP_TOL or abs(oy[0, 1]) > LOCALITY + 1e-12:
        raise DomainError("y is not on the local stable leaf of x")
    if abs(op[0, 1]) > MEMBERSHIP_TOL or abs(op[0, 0] - 1) > MEMBERSHIP_TOL or abs(op[1, 0]) > LOCALITY + 1e-12:
        raise DomainError("y' is not on the local unstable leaf of x")
    return temporal_delta_from_matrices(x.m, ly, lp)


@dataclass(frozen=True)
class ResidualScan:
    eps: np.ndarray
    residual: np.ndarray
    bound: np.ndarray
    slope: float
    r2: float

    @property
    def bound_holds(self) -> bool:
        return bool(np.all(self.residual <= self.bound))


def katok_burns_residual_scan(scales, direction=(1.0, 1.0), n: int = 21, mode: str = "joint",
                              C: float = 1.0) -> ResidualScan:
    """Residual |Delta - d(alpha)(v, w)| along a scaling family and its log-log slope.

    mode 'joint' scales (eps v0, eps w0); mode 'v' keeps w = w0 and scales v only.
    """
    lo, hi = float(min(scales)), float(max(scales))
    if hi / lo < 100 * (1 - 1e-12):
        raise DomainError("scales must span at least two decades")
    v0, w0 = direction
    eps = np.geomspace(lo, hi, n)
    res, bnd = [], []
    for e in eps:
        v = e * v0
        w = e * w0 if mode == "joint" else w0
        r = temporal_delta_closed(v, w)
        res.append(abs(r.residual))
        bnd.append(C * (abs(v) * w * w + abs(w) * v * v))
    res, bnd = np.array(res), np.array(bnd)
    fit = loglog_fit(eps, res, what="Katok-Burns residual")
    if fit.r2 < 0.95:
        raise FitQualityError("Katok-Burns residual fit", partial=fit)
    return ResidualScan(eps, res, bnd, fit.slope, fit.r2)
