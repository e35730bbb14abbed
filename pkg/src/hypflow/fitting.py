"""Small regression helpers shared by the scans."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitQualityError


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float
    n: int


def line_fit(x, y) -> LineFit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitQualityError("need at least two points", partial={"n": int(x.size)})
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / tot if tot > 0 else 1.0
    return LineFit(float(slope), float(icpt), float(r2), int(x.size))


def loglog_fit(x, y, min_decades: float = 0.0, min_r2: float = 0.0, what: str = "fit") -> LineFit:
    """Fit log y = slope * log x + c; raise FitQualityError on a poor fit."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size < 3:
        raise FitQualityError(f"{what}: fewer than 3 usable points", partial={"x": x, "y": y})
    span = np.log10(x.max() / x.min())
    fit = line_fit(np.log(x), np.log(y))
    if span < min_decades - 1e-9:
        raise FitQualityError(f"{what}: abscissa spans {span:.2f} decades", partial=fit)
    if fit.r2 < min_r2:
        raise FitQualityError(f"{what}: R^2 = {fit.r2:.3f}", partial=fit)
    return fit
