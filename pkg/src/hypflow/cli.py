"""Config-driven experiment runner: `hypflow <experiment> --config PATH [--seed N] [--out DIR]`.

Each run writes `<experiment>.csv`, `summary.json` and `timing.json` into the
output directory.  The CSV and summary are deterministic functions of the
resolved config and seed; wall-clock time lives only in timing.json.

Exit codes: 0 all invariants hold, 1 an invariant failed, 2 config error,
3 internal error (partial artifacts carry status "partial").
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field, fields

import tomli

FORMAT_VERSION = 1
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


class CliConfigError(ValueError):
    """Malformed config file or parameter table."""


# ---------------------------------------------------------------------------
# property registry: every invariant an experiment can check, keyed by name

PROPERTIES = {
    "contact-invariance": "alpha(dT_t v) = alpha(v) for random v and t",
    "anosov-stable-rate": "fitted stable contraction exponent equals 1",
    "stable-unstable-product": "|d^sT_t| theta(d^uT_t) = 1 along orbits",
    "bunching-exponents": "distance, holonomy and Jacobian exponents of the foliations",
    "stable-holder-contraction": "H_{s,beta}(phi o T_t) <= e^{-lambda beta t} H_{s,beta}(phi)",
    "unstable-norm-contraction": "unstable Hoelder norm of L_t f contracts at the same rate",
    "temporal-closed-form": "closed-form temporal distance matches the four-leaf construction",
    "katok-burns-slope": "residual |Delta - d alpha(v, w)| scales with exponent 4",
    "katok-burns-bound": "explicit cubic bound on the residual with C = 1",
    "average-inequalities": "stable averages: approximation, Hoelder and smoothing inequalities",
    "resolvent-pointwise-bound": "|R(z) f| <= |f|_inf / Re z",
    "resolvent-powers": "R(z)^n 1 = z^{-n}",
    "resonance-strip": "Laplace-transformed correlation is finite and flat on Re z = 0.1",
    "strip-calibration": "synthetic poles are located within one grid step",
    "inverse-laplace": "Bromwich inversion reconstructs L_t f with monotone residuals",
    "mixing-fit-quality": "log-linear envelope fit of the correlation has R^2 >= 0.9",
    "mixing-rate": "fitted decay rate lies in the expected band",
    "mixing-seed-spread": "fitted rate is stable across seeds",
    "phase-two-way": "phase from holonomy matches the closed temporal distance",
    "phase-linearization": "phase derivative is frozen within each cell up to O(b^{-1-2rho})",
    "oscillatory-decay": "oscillatory integral decays at least like b^{-alpha rho / 2}",
    "phi-decay": "sup of high powers of the dual resolvent decays in b",
    "partition-of-unity": "time and space partitions sum to one and cover M",
    "discarded-pieces": "leaf pieces touching the leaf ends have small preimage measure",
    "piece-counting": "expanded unstable pieces crossing a stable segment are few",
}


# ---------------------------------------------------------------------------
# parameter tables


def _tuple(x):
    return tuple(x) if isinstance(x, (list, tuple)) else x


def _require(cond: bool, msg: str):
    if not cond:
        raise CliConfigError(msg)


def _checks(value, allowed, name="checks"):
    _require(isinstance(value, tuple) and len(value) > 0, f"{name} must be a nonempty list")
    bad = [c for c in value if c not in allowed]
    _require(not bad, f"unknown {name} {bad}; allowed {sorted(allowed)}")


@dataclass(frozen=True)
class ContactParams:
    n: int = 1000
    tMax: float = 5.0
    tol: float = 1e-9

    def __post_init__(self):
        _require(self.n >= 1 and 0 < self.tMax < 50, "need n >= 1 and 0 < tMax < 50")


@dataclass(frozen=True)
class PinchingParams:
    checks: tuple = ("rates", "bunching", "contraction")
    tMax: float = 10.0
    nT: int = 11
    samples: int = 20
    rateTol: float = 0.01
    productTol: float = 1e-10
    bunchingSamples: int = 60
    tauTol: float = 0.05
    dictionarySize: int = 20
    holderSamples: int = 1000
    contractionTimes: tuple = (1.0, 2.0, 4.0)
    slack: float = 1.05

    def __post_init__(self):
        _checks(self.checks, {"rates", "bunching", "contraction"})
        _require(0 < self.tMax <= 20 and self.nT >= 3 and self.samples >= 2 and self.bunchingSamples >= 8,
                 "need 0 < tMax <= 20, nT >= 3, samples >= 2, bunchingSamples >= 8")
        _require(1 <= self.dictionarySize <= 20, "dictionarySize must lie in [1, 20]")
        _require(all(t > 0 for t in self.contractionTimes), "contractionTimes must be positive")


@dataclass(frozen=True)
class TemporalParams:
    vmax: float = 0.3
    n: int = 1000
    tol: float = 1e-8
    scaleMin: float = 1e-3
    scaleMax: float = 1e-1
    slopeTol: float = 0.1
    C: float = 1.0

    def __post_init__(self):
        _require(0 < self.vmax <= 0.3, "vmax must lie in (0, 0.3] (locality of the leaf construction)")
        _require(self.n >= 1, "n must be positive")
        _require(0 < self.scaleMin and self.scaleMax / self.scaleMin >= 100 and self.scaleMax <= 0.3,
                 "scales must span two decades inside (0, 0.3]")


@dataclass(frozen=True)
class CorrelationParams:
    n: int = 1_000_000
    seeds: int = 3
    radius: float = 0.7
    centerSeed: int = 5
    tMax: float = 10.0
    dt: float = 0.1
    method: str = "support"
    shards: int = 16
    window: tuple = (1.0, 10.0)
    r2Min: float = 0.9
    sigmaRange: tuple = (0.3, 0.7)
    spreadMax: float = 0.05

    def __post_init__(self):
        _require(self.n >= 100 * self.shards, "n must be at least 100 per shard")
        _require(self.seeds >= 1, "seeds must be positive")
        _require(0 < self.radius <= 0.7, "radius must lie in (0, 0.7]")
        _require(0 < self.dt <= self.tMax <= 60, "need 0 < dt <= tMax <= 60")
        _require(self.method in ("support", "rejection", "horocycle"), "unknown sampling method")
        _require(len(self.window) == 2 and 0 <= self.window[0] < self.window[1] <= self.tMax, "bad fit window")
        _require(len(self.sigmaRange) == 2, "sigmaRange must be [lo, hi]")


@dataclass(frozen=True)
class ResolventParams:
    checks: tuple = ("averages", "bounds", "strip", "inverse")
    deltas: tuple = (0.05, 0.1, 0.2)
    dictionarySize: int = 20
    averageSamples: int = 800
    averageC: float = 10.0
    aValues: tuple = (0.5, 1.0, 2.0)
    bMax: float = 50.0
    nPoints: int = 300
    nPowers: int = 5
    powerTol: float = 1e-8
    boundSlack: float = 1e-6
    stripSamples: int = 100_000
    stripTMax: float = 50.0
    stripDt: float = 0.1
    aLine: float = 0.1
    stripBMax: float = 50.0
    stripDb: float = 0.1
    stripRatio: float = 10.0
    calibrationFrequencies: tuple = (4.0, 13.0)
    inverseA: float = 1.0
    inverseT: float = 1.0
    inverseBMax: tuple = (50.0, 100.0, 200.0, 400.0)
    inverseTol: float = 1e-2

    def __post_init__(self):
        _checks(self.checks, {"averages", "bounds", "strip", "inverse"})
        _require(all(0 < d <= 0.7 for d in self.deltas), "deltas must lie in (0, 0.7]")
        _require(1 <= self.dictionarySize <= 20, "dictionarySize must lie in [1, 20]")
        _require(all(a > 0 for a in self.aValues) and self.aLine > 0 and self.inverseA > 0, "Re z must be positive")
        _require(1 <= self.nPowers <= 64, "nPowers must lie in [1, 64]")
        _require(0 < self.inverseT <= 10, "inverseT must lie in (0, 10]")
        _require(self.stripSamples >= 1600 and self.stripTMax > 0 and self.stripDt > 0, "bad strip series")
        _require(self.stripDb > 0 and self.stripBMax > 0, "bad strip b-grid")


@dataclass(frozen=True)
class DolgopyatParams:
    checks: tuple = ("phase", "oscillatory", "phi")
    rho: float = 0.1
    bMinExp: int = 4
    bMaxExp: int = 12
    wFactor: float = 1.5
    phis: int = 3
    netSize: int = 12
    quadPoints: int = 17
    h: float = 0.005
    gammaR2Min: float = 0.8
    partitionR: float = 0.25
    pieceKMax: int = 7
    auditPoints: int = 10_000

    def __post_init__(self):
        from hypflow.dolgopyat import DolgopyatConfig
        from hypflow.errors import ConfigError as ModuleConfigError

        _checks(self.checks, {"phase", "oscillatory", "phi", "partitions"})
        _require(1 <= self.bMinExp < self.bMaxExp <= 16, "need 1 <= bMinExp < bMaxExp <= 16")
        _require(1 <= self.phis <= 20 and self.netSize >= 1, "need 1 <= phis <= 20 and netSize >= 1")
        _require(2 <= self.pieceKMax <= 9, "pieceKMax must lie in [2, 9]")
        try:
            for e in range(self.bMinExp, self.bMaxExp + 1):
                DolgopyatConfig(rho=self.rho, b=2.0**e)
        except ModuleConfigError as err:
            raise CliConfigError(str(err)) from None
        _require(1e-4 < self.partitionR < 0.3, "partitionR must lie in (1e-4, 0.3)")


@dataclass(frozen=True)
class MandensParams:
    r1: tuple = (0.02, 0.1, 0.25)
    kMin: int = 1
    kMax: int = 8
    eps: float = 0.3
    C: float = 10.0

    def __post_init__(self):
        _require(len(self.r1) > 0 and all(1e-3 < r < 0.3 for r in self.r1), "r1 values must lie in (1e-3, 0.3)")
        _require(0 <= self.kMin <= self.kMax <= 10, "need 0 <= kMin <= kMax <= 10")
        _require(0 < self.eps <= 0.3, "eps must lie in (0, 0.3]")


@dataclass(frozen=True)
class ReportParams:
    summaries: tuple = ()

    def __post_init__(self):
        _require(all(isinstance(x, str) for x in self.summaries), "summaries must be paths")


PARAMS = {
    "contact-check": ContactParams, "pinching": PinchingParams, "temporal": TemporalParams,
    "correlation": CorrelationParams, "resolvent-scan": ResolventParams, "dolgopyat": DolgopyatParams,
    "mandens": MandensParams, "report": ReportParams,
}

# which registry keys each (experiment, check) produces
PRODUCES = {
    "contact-check": {None: ("contact-invariance",)},
    "pinching": {"rates": ("anosov-stable-rate", "stable-unstable-product"), "bunching": ("bunching-exponents",),
                 "contraction": ("stable-holder-contraction", "unstable-norm-contraction")},
    "temporal": {None: ("temporal-closed-form", "katok-burns-slope", "katok-burns-bound")},
    "correlation": {None: ("mixing-fit-quality", "mixing-rate", "mixing-seed-spread")},
    "resolvent-scan": {"averages": ("average-inequalities",),
                       "bounds": ("resolvent-pointwise-bound", "resolvent-powers"),
                       "strip": ("resonance-strip", "strip-calibration"), "inverse": ("inverse-laplace",)},
    "dolgopyat": {"phase": ("phase-two-way", "phase-linearization"), "oscillatory": ("oscillatory-decay",),
                  "phi": ("phi-decay",), "partitions": ("partition-of-unity", "discarded-pieces")},
    "mandens": {None: ("piece-counting",)},
}


def expected_keys(experiment: str, params) -> list:
    table = PRODUCES.get(experiment, {})
    if None in table:
        return list(table[None])
    return [k for c in params.checks for k in table[c]]


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int
    params: object
    out: str

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "params": _jsonable(asdict(self.params))}

    def hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_config(experiment: str, table: dict | None = None, seed: int | None = None,
                 out: str | None = None) -> RunConfig:
    """Validate a parsed config table; raises CliConfigError on any problem."""
    if experiment not in PARAMS:
        raise CliConfigError(f"unknown experiment {experiment!r}; expected one of {sorted(PARAMS)}")
    table = dict(table or {})
    unknown = set(table) - {"experiment", "seed", "out", "params"}
    _require(not unknown, f"unknown top-level keys {sorted(unknown)}")
    _require(table.get("experiment", experiment) == experiment,
             f"config is for {table.get('experiment')!r}, not {experiment!r}")
    seed = table.get("seed", 0) if seed is None else seed
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2**64,
             "seed must be an integer in [0, 2^64)")
    cls = PARAMS[experiment]
    raw = table.get("params", {})
    _require(isinstance(raw, dict), "params must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    _require(not unknown, f"unknown {experiment} parameters {sorted(unknown)}")
    for f in fields(cls):
        if f.name in raw:
            default = f.default
            v = raw[f.name]
            if isinstance(default, tuple):
                _require(isinstance(v, list), f"{f.name} must be a list")
            elif isinstance(default, bool) or isinstance(default, str):
                _require(type(v) is type(default), f"{f.name} must be a {type(default).__name__}")
            elif isinstance(default, int):
                _require(isinstance(v, int) and not isinstance(v, bool), f"{f.name} must be an integer")
            elif isinstance(default, float):
                _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{f.name} must be a number")
    try:
        params = cls(**{k: _tuple(v) for k, v in raw.items()})
    except (TypeError, ValueError) as err:
        raise CliConfigError(str(err)) from None
    out = out or table.get("out") or os.path.join("runs", experiment)
    return RunConfig(experiment, int(seed), params, str(out))


def load_config(path: str, experiment: str, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            table = tomli.load(fh)
    except OSError as err:
        raise CliConfigError(f"cannot read {path}: {err.strerror}") from None
    except tomli.TOMLDecodeError as err:
        raise CliConfigError(f"{path}: {err}") from None
    return build_config(experiment, table, seed, out)


# ---------------------------------------------------------------------------
# results and artifact writing


@dataclass
class Result:
    header: tuple
    rows: list = field(default_factory=list)
    invariants: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    def check(self, key: str, passed: bool, measured, threshold):
        if key not in PROPERTIES:
            raise KeyError(f"unregistered property {key!r}")
        self.invariants[key] = {"pass": bool(passed), "measured": measured, "threshold": threshold}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if isinstance(x, bool) or x is None or isinstance(x, (str, int)):
        return x
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    return str(x)


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        v = float(x)
        if hasattr(x, "dtype") and x.dtype.kind in "iu":
            return str(int(x))
        if hasattr(x, "dtype") and x.dtype.kind == "b":
            return "true" if bool(x) else "false"
        return repr(v) if math.isfinite(v) else ("nan" if v != v else ("inf" if v > 0 else "-inf"))
    return str(x)


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def csv_text(cfg: RunConfig, res: Result) -> str:
    lines = [f"# format_version={FORMAT_VERSION} experiment={cfg.experiment} seed={cfg.seed} "
             f"config_hash={cfg.hash()}", ",".join(res.header)]
    lines += [",".join(_cell(c) for c in row) for row in res.rows]
    return "\n".join(lines) + "\n"


def summary_dict(cfg: RunConfig, res: Result, status: str, error: str | None = None) -> dict:
    out = {"format_version": FORMAT_VERSION, "experiment": cfg.experiment, "seed": cfg.seed,
           "config_hash": cfg.hash(), "config": cfg.echo(), "status": status,
           "invariants": _jsonable(res.invariants), "fits": _jsonable(res.fits)}
    if error is not None:
        out["error"] = error
    return out


def write_artifacts(cfg: RunConfig, res: Result, status: str, runtime: float, error: str | None = None,
                    csv: bool = True):
    os.makedirs(cfg.out, exist_ok=True)
    if csv:
        _atomic_write(os.path.join(cfg.out, f"{cfg.experiment}.csv"), csv_text(cfg, res))
    _atomic_write(os.path.join(cfg.out, "summary.json"),
                  json.dumps(summary_dict(cfg, res, status, error), indent=2, sort_keys=True) + "\n")
    _atomic_write(os.path.join(cfg.out, "timing.json"),
                  json.dumps({"experiment": cfg.experiment, "runtime_s": round(runtime, 3)}, indent=2) + "\n")


# ---------------------------------------------------------------------------
# experiments


def run_contact(p: ContactParams, seed: int, res: Result):
    from hypflow import model as M

    rng = M.make_rng(seed, 0x434F4E)
    worst = 0.0
    for _ in range(p.n):
        c = rng.normal(size=3)
        t = float(rng.uniform(-p.tMax, p.tMax))
        v = M.AlgebraVector(*map(float, c))
        a0, a1 = M.contact_pairing(v), M.contact_pairing(M.tangent_flow(v, t))
        worst = max(worst, abs(a1 - a0))
        res.rows.append((v.cX, v.cPlus, v.cMinus, t, a0, a1, abs(a1 - a0)))
    res.check("contact-invariance", worst <= p.tol, worst, p.tol)


def run_pinching(p: PinchingParams, seed: int, res: Result):
    import numpy as np

    from hypflow import model as M
    from hypflow import observables as O
    from hypflow import structures as S
    from hypflow.fitting import line_fit

    if "rates" in p.checks:
        pts = M.haar_sample_array(seed, p.samples, "rejection")
        ts, logs, worst = [], [], 0.0
        for i, g in enumerate(pts):
            for t in np.linspace(0.0, p.tMax, p.nT):
                fd = S.stable_derivative_norm(g, float(t))
                # tangent action on the one-dimensional leaves; the frame is left invariant
                s = M.tangent_flow(M.V_STABLE, float(t)).norm()
                u = M.tangent_flow(M.V_UNSTABLE, float(t)).norm()
                res.rows.append((i, float(t), fd, s, u, s * u))
                worst = max(worst, abs(s * u - 1))
                ts.append(float(t))
                logs.append(math.log(fd))
        fit = line_fit(ts, logs)
        res.fits["stableRate"] = {"mu": -fit.slope, "r2": fit.r2}
        res.check("anosov-stable-rate", abs(-fit.slope - 1) <= p.rateTol, -fit.slope, [1 - p.rateTol, 1 + p.rateTol])
        res.check("stable-unstable-product", worst <= p.productTol, worst, p.productTol)
    if "bunching" in p.checks:
        tg = np.linspace(p.tMax / (p.nT - 1), p.tMax, p.nT - 1)
        rep = S.pinching_exponents(tg, p.bunchingSamples, seed)
        taus = {"tauD": rep.tauD, "tauH": rep.tauH, "tauJ": rep.tauJ}
        res.fits["bunching"] = {**taus, "muHat": rep.muHat, "aHat": rep.aHat, "driftConstant": rep.driftConstant}
        gap = max(abs(v - 1) for v in taus.values())
        res.check("bunching-exponents", gap <= p.tauTol, gap, p.tauTol)
    if "contraction" in p.checks:
        cfg = S.NormConfig()
        ws, wu = 0.0, 0.0
        for phi in O.dictionary()[:p.dictionarySize]:
            h0 = O.holder_seminorm(phi, "stable", cfg.beta, cfg, n=p.holderSamples, seed=seed)
            u0 = O.holder_seminorm(phi, "unstable", cfg.beta, cfg, n=p.holderSamples, seed=seed)
            for t in p.contractionTimes:
                rate = math.exp(-cfg.lam * cfg.beta * t)
                ht = O.holder_seminorm(O.koopman(phi, t), "stable", cfg.beta, cfg, n=p.holderSamples, seed=seed)
                ut = O.holder_seminorm(O.transfer(phi, t), "unstable", cfg.beta, cfg, n=p.holderSamples, seed=seed)
                ws, wu = max(ws, ht / (h0 * rate)), max(wu, ut / (u0 * rate))
        res.fits["contraction"] = {"stableRatio": ws, "unstableRatio": wu, "lambda": cfg.lam, "beta": cfg.beta}
        res.check("stable-holder-contraction", ws <= p.slack, ws, p.slack)
        res.check("unstable-norm-contraction", wu <= p.slack, wu, p.slack)


def run_temporal(p: TemporalParams, seed: int, res: Result):
    from hypflow import model as M
    from hypflow import temporal as T

    rng = M.make_rng(seed, 0x54454D)
    worst = 0.0
    for x in M.haar_sample(seed, p.n, "rejection"):
        v, w = (float(a) for a in rng.uniform(-p.vmax, p.vmax, size=2))
        y = M.reduce_mod_gamma(x.m @ M.nplus_mat(w))
        yp = M.reduce_mod_gamma(x.m @ M.nminus_mat(v))
        c = T.temporal_delta_closed(v, w)
        g = T.temporal_delta_geometric(y, yp, x)
        worst = max(worst, abs(g - c.delta))
        res.rows.append((v, w, c.delta, g, c.firstOrder, c.residual))
    res.check("temporal-closed-form", worst <= p.tol, worst, p.tol)
    scan = T.katok_burns_residual_scan([p.scaleMin, p.scaleMax], C=p.C)
    res.fits["katokBurns"] = {"slope": scan.slope, "r2": scan.r2}
    res.check("katok-burns-slope", abs(scan.slope - 4) <= p.slopeTol, scan.slope, [4 - p.slopeTol, 4 + p.slopeTol])
    excess = float((scan.residual - scan.bound).max())
    res.check("katok-burns-bound", scan.bound_holds, excess, 0.0)


def _corr_bump(radius: float, centerSeed: int):
    from hypflow import model as M
    from hypflow import observables as O

    return O.make_bump(M.haar_sample_array(centerSeed, 1, "rejection")[0], radius)


def _grid(hi: float, step: float):
    import numpy as np

    return np.round(np.arange(0.0, hi + step / 2, step), 12)


def run_correlation(p: CorrelationParams, seed: int, res: Result):
    from hypflow import observables as O

    f = _corr_bump(p.radius, p.centerSeed)
    tg = _grid(p.tMax, p.dt)
    sig, r2 = [], []
    for j in range(p.seeds):
        s = O.correlation(f, f, tg, p.n, seed + j, shards=p.shards, method=p.method)
        res.rows.extend((seed + j, float(t), float(v), float(e)) for t, v, e in zip(s.tGrid, s.values, s.stderr))
        fit = O.fit_decay(s, tuple(p.window), "envelope")
        full = O.fit_decay(s, (0.0, p.tMax), "envelope")
        res.fits[f"seed{seed + j}"] = {"sigma": fit.sigma, "r2": fit.rSquared, "points": fit.points,
                                       "prefactor": fit.prefactor, "sigmaFullWindow": full.sigma,
                                       "r2FullWindow": full.rSquared}
        sig.append(fit.sigma)
        r2.append(fit.rSquared)
    lo, hi = p.sigmaRange
    res.fits["referenceRate"] = {"value": 0.5, "meanSigma": sum(sig) / len(sig)}
    res.check("mixing-fit-quality", min(r2) >= p.r2Min, min(r2), p.r2Min)
    res.check("mixing-rate", all(lo <= s <= hi for s in sig), sig, [lo, hi])
    spread = max(sig) - min(sig)
    res.check("mixing-seed-spread", spread <= p.spreadMax, spread, p.spreadMax)


def _inverse_probe(f):
    """A point whose backward orbit meets supp f at time 1."""
    import numpy as np

    from hypflow import model as M
    from hypflow import observables as O

    c = f.bumps[0].center
    q = M.reduce_array(c @ O.expm_algebra(np.array([[0.1, 0.2, -0.1]])))
    return M.point_from_array(M.flow_array(q, 1.0)[0])


def run_resolvent(p: ResolventParams, seed: int, res: Result):
    import numpy as np

    from hypflow import observables as O
    from hypflow import operators as P
    from hypflow import structures as S

    cfg = S.NormConfig()
    if "averages" in p.checks:
        worst = np.zeros(3)
        for d in p.deltas:
            for phi in O.dictionary()[:p.dictionarySize]:
                b = P.average_bounds(phi, d, cfg, n=p.averageSamples, seed=seed, quadPoints=17)
                worst = np.maximum(worst, b.constants(cfg.beta))
        res.fits["averageConstants"] = worst
        res.check("average-inequalities", bool(np.all(worst <= p.averageC)), worst, p.averageC)
    if "bounds" in p.checks:
        f = O.dictionary()[0]
        excess, worst_pow = -math.inf, 0.0
        for a in p.aValues:
            r = P.resolvent_bound_scan(f, a, nPoints=p.nPoints, bMax=p.bMax, seed=seed)
            res.fits[f"bound_a{a}"] = {"maxAbs": r["maxAbs"], "bound": r["bound"]}
            excess = max(excess, r["maxExcess"])
            worst_pow = max(worst_pow, P.power_identity_scan(a, np.linspace(-p.bMax, p.bMax, 21), p.nPowers))
        res.check("resolvent-pointwise-bound", excess <= p.boundSlack, excess, p.boundSlack)
        res.check("resolvent-powers", worst_pow <= p.powerTol, worst_pow, p.powerTol)
    if "strip" in p.checks:
        f = _corr_bump(0.7, 5)
        s = O.correlation(f, f, _grid(p.stripTMax, p.stripDt), p.stripSamples, seed, method="support")
        bg = np.round(np.arange(-p.stripBMax, p.stripBMax + p.stripDb / 2, p.stripDb), 12)
        vals = P.laplace_correlation_scan(s, p.aLine, bg)
        res.rows.extend((float(b), float(v.real), float(v.imag), float(abs(v))) for b, v in zip(bg, vals))
        rep = P.strip_report(vals, bg)
        res.fits["strip"] = {"maxRatio": rep.maxRatio, "peakB": rep.peakB, "curvature": rep.curvature}
        res.check("resonance-strip", rep.finite and rep.smooth and rep.maxRatio <= p.stripRatio,
                  rep.maxRatio, p.stripRatio)
        tg = _grid(p.stripTMax, p.stripDt)
        off = []
        for w in p.calibrationFrequencies:
            syn = O.CorrelationSeries(tg, np.exp(-0.5 * tg) * np.cos(w * tg), np.zeros_like(tg), 0, 0)
            off.append(abs(P.locate_peak(P.laplace_correlation_scan(syn, p.aLine, bg), bg) - w))
        res.check("strip-calibration", max(off) <= p.stripDb + 1e-9, max(off), p.stripDb)
    if "inverse" in p.checks:
        f = _corr_bump(0.7, 5)
        out = P.inverse_laplace_check(p.inverseA, list(p.inverseBMax), f, _inverse_probe(f), p.inverseT)
        res.fits["inverseLaplace"] = [{"bMax": r.bMax, "value": r.value, "reference": r.reference,
                                       "residual": r.residual} for r in out]
        ok = out[-1].residual <= p.inverseTol and P.residuals_monotone(out) and out[-1].reference != 0
        res.check("inverse-laplace", ok, out[-1].residual, p.inverseTol)


def run_dolgopyat(p: DolgopyatParams, seed: int, res: Result):
    import numpy as np

    from hypflow import dolgopyat as D
    from hypflow import model as M
    from hypflow import observables as O

    from hypflow.temporal import LOCALITY

    bg = 2.0 ** np.arange(p.bMinExp, p.bMaxExp + 1)
    ls = [D.DolgopyatConfig(rho=p.rho, b=float(b)).l for b in bg]
    if "phase" in p.checks:
        rng = M.make_rng(seed, 0x504853)
        dis, lin = 0.0, 0.0
        for b in bg:
            cfg = D.DolgopyatConfig(rho=p.rho, b=float(b))
            # both phase computations need the quadrilateral inside the locality region |v|, |w| <= 0.3
            vmax = min(cfg.cd * cfg.r, LOCALITY)
            geom = D.PairGeometry(min(p.wFactor * cfg.r, LOCALITY), float(rng.uniform(-1, 1)))
            ph = D.phase_function(0, 1, geom, rng.uniform(-vmax, vmax, 100), b, cfg.varsigma)
            dis = max(dis, ph.maxDisagreement)
            err = D.derivative_check(geom, float(b), vmax)
            lin = max(lin, err * b ** (1 + 2 * p.rho))
        res.check("phase-two-way", dis <= 1e-8, dis, 1e-8)
        res.check("phase-linearization", lin <= 10.0, lin, 10.0)
    if "oscillatory" in p.checks:
        sc = D.oscillatory_scan(bg, p.rho, wFactor=p.wFactor, seed=seed)
        res.rows.extend(("oscillatory", float(b), l, float(v), float(e), True)
                        for b, l, v, e in zip(bg, ls, sc.normalized, sc.envelope))
        res.fits["oscillatory"] = {"exponent": sc.exponent, "r2": sc.r2, "fittedC": sc.fittedC,
                                   "predicted": sc.predicted}
        res.check("oscillatory-decay", sc.exponent >= 0.5 * sc.predicted, sc.exponent, 0.5 * sc.predicted)
    if "phi" in p.checks:
        sc = D.phi_l_sup_scan(bg, O.dictionary()[:p.phis], p.rho, netSize=p.netSize, quadPoints=p.quadPoints,
                              h=p.h, seed=seed)
        res.rows.extend(("phi", float(b), int(l), float(v), float(e), bool(r))
                        for b, l, v, e, r in zip(sc.b, sc.l, sc.normalized, sc.envelope, sc.resolved))
        res.fits["phi"] = {"gamma": sc.gamma, "r2": sc.r2, "maxDoublingRatio": sc.maxDoublingRatio,
                           "resolved": int(np.sum(sc.resolved)), "partial": sc.partial}
        ok = sc.gamma > 0 and sc.r2 >= p.gammaR2Min
        res.check("phi-decay", ok, sc.gamma, {"gamma": 0.0, "r2": p.gammaR2Min})
    if "partitions" in p.checks:
        part = D.space_partition(p.partitionR, seed=seed, auditPoints=p.auditPoints)
        audit = M.haar_sample_array(seed + 1, p.auditPoints, "rejection")
        qi, _, w = part.weights(audit)
        sum_err = float(np.abs(np.bincount(qi, w, minlength=audit.shape[0]) - 1).max())
        t = M.make_rng(seed, 0x54494D).uniform(-30, 30, 1000)
        tp = D.TimePartition()
        time_err = float(np.abs(sum(tp(t - k) for k in range(-40, 41)) - 1).max())
        covered = bool(part.covered(audit).all())
        res.fits["partition"] = {"centers": part.count, "sumError": sum_err, "timeSumError": time_err}
        res.check("partition-of-unity", covered and sum_err <= 1e-12 and time_err <= 1e-12,
                  max(sum_err, time_err), 1e-12)
        x0 = M.haar_sample_array(seed, 1, "rejection")[0]
        ratios = []
        for k in range(2, p.pieceKMax + 1):
            rep = D.expand_leaf_pieces(x0, D.DolgopyatConfig(rho=p.rho, b=p.partitionR ** (-1 / (2 * p.rho)), k=k), part)
            ratios.append(rep.discardedMeasure / (10 * math.exp(-k) * rep.leafMeasure))
        res.fits["discardedRatios"] = ratios
        res.check("discarded-pieces", max(ratios) <= 1.0, max(ratios), 1.0)


def run_mandens(p: MandensParams, seed: int, res: Result):
    from hypflow import dolgopyat as D
    from hypflow import model as M

    x = M.haar_sample_array(seed, 1, "rejection")[0]
    worst = -math.inf
    for r1 in p.r1:
        for row in D.mandens_count(x, r1, range(p.kMin, p.kMax + 1), eps=p.eps, C=p.C):
            res.rows.append((r1, row.k, row.count, row.lhs, row.rhs, row.holds))
            worst = max(worst, row.lhs / row.rhs)
    res.check("piece-counting", worst <= 1.0, worst, 1.0)


EXPERIMENTS = {
    "contact-check": (run_contact, ("cX", "cPlus", "cMinus", "t", "alpha_v", "alpha_dTv", "abs_diff")),
    "pinching": (run_pinching, ("sample", "t", "stable_norm_fd", "stable_norm", "unstable_conorm", "product")),
    "temporal": (run_temporal, ("v", "w", "delta_closed", "delta_geometric", "first_order", "residual")),
    "correlation": (run_correlation, ("seed", "t", "value", "stderr")),
    "resolvent-scan": (run_resolvent, ("b", "re_chat", "im_chat", "abs_chat")),
    "dolgopyat": (run_dolgopyat, ("scan", "b", "l", "normalized", "envelope", "resolved")),
    "mandens": (run_mandens, ("r1", "k", "count", "lhs", "rhs", "holds")),
}


# ---------------------------------------------------------------------------
# report


def emit_report(paths, out: str) -> int:
    """Aggregate summaries into report.json; 2 on bad input, 1 if any invariant failed."""
    paths = list(paths)
    if not paths:
        print("report: no summaries given", file=sys.stderr)
        return EXIT_CONFIG
    runs, bad = [], []
    for pth in paths:
        try:
            with open(pth, encoding="utf-8") as fh:
                s = json.load(fh)
            if s.get("format_version") != FORMAT_VERSION or not isinstance(s.get("invariants"), dict):
                raise ValueError("not a summary")
            runs.append((pth, s))
        except (OSError, ValueError):
            bad.append(pth)
    if bad:
        print("report: missing or corrupt summaries: " + ", ".join(bad), file=sys.stderr)
        return EXIT_CONFIG
    table = {k: {"status": "not-run", "description": d} for k, d in PROPERTIES.items()}
    failed = False
    for pth, s in runs:
        for key, v in s["invariants"].items():
            entry = table.setdefault(key, {"description": ""})
            ok = bool(v.get("pass")) and entry.get("status") != "fail"
            entry.update(status="pass" if ok else "fail", experiment=s["experiment"], measured=v.get("measured"),
                         threshold=v.get("threshold"), source=pth)
            failed |= not v.get("pass")
        failed |= s.get("status") != "pass"
    missing = [k for k, v in table.items() if v["status"] == "not-run"]
    rep = {"format_version": FORMAT_VERSION, "runs": [{"path": p, "experiment": s["experiment"],
                                                       "status": s["status"], "config_hash": s["config_hash"],
                                                       "seed": s["seed"]} for p, s in runs],
           "table": table, "complete": not missing, "missing": missing, "status": "fail" if failed else "pass"}
    os.makedirs(out, exist_ok=True)
    _atomic_write(os.path.join(out, "report.json"), json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return EXIT_INVARIANT if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry points


def run_experiment(cfg: RunConfig) -> int:
    if cfg.experiment == "report":
        return emit_report(cfg.params.summaries, cfg.out)
    fn, header = EXPERIMENTS[cfg.experiment]
    res = Result(header)
    t0 = time.perf_counter()
    try:
        fn(cfg.params, cfg.seed, res)
    except Exception as err:  # noqa: BLE001 - any failure inside a run becomes a partial artifact
        write_artifacts(cfg, res, "partial", time.perf_counter() - t0, f"{type(err).__name__}: {err}")
        traceback.print_exc()
        return EXIT_INTERNAL
    ok = all(v["pass"] for v in res.invariants.values())
    missing = set(expected_keys(cfg.experiment, cfg.params)) - set(res.invariants)
    status = "pass" if ok and not missing else "fail"
    write_artifacts(cfg, res, status, time.perf_counter() - t0)
    return EXIT_OK if status == "pass" else EXIT_INVARIANT


def _apply_threads():
    v = os.environ.get("HYPFLOW_THREADS")
    if v is None:
        return
    if not v.isdigit() or int(v) < 1:
        raise CliConfigError("HYPFLOW_THREADS must be a positive integer")
    for name in _THREAD_VARS:
        os.environ[name] = v


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hypflow", description="Run one experiment and write CSV/JSON artifacts.")
    ap.add_argument("experiment", choices=sorted(PARAMS))
    ap.add_argument("--config", help="TOML config file (defaults are used without one)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", help="output directory (default runs/<experiment>)")
    ap.add_argument("--summary", action="append", default=[], help="report only: summary.json to aggregate")
    args = ap.parse_args(argv)
    try:
        _apply_threads()
        if args.config:
            cfg = load_config(args.config, args.experiment, args.seed, args.out)
        else:
            cfg = build_config(args.experiment, {}, args.seed, args.out)
        if args.summary:
            _require(args.experiment == "report", "--summary only applies to report")
            cfg = RunConfig(cfg.experiment, cfg.seed, ReportParams(tuple(cfg.params.summaries) + tuple(args.summary)),
                            cfg.out)
    except CliConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
