import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, logm

from hypflow import model as M
from hypflow import observables as O
from hypflow import structures as S
from hypflow.errors import DomainError, FitQualityError, SamplingError

CFG = S.NormConfig()
C0 = M.haar_sample_array(5, 1, "rejection")[0]
F = O.make_bump(C0, 0.7)


def _alg(v):
    return v[0] * M.X_MAT + v[1] * M.UPLUS_MAT + v[2] * M.UMINUS_MAT


def test_bump_examples():
    f = O.make_bump(C0, 0.5, 2.0)
    assert f(C0[None])[0] == 2.0
    assert f.sup() == 2.0
    rng = M.make_rng(2)
    v = rng.normal(size=(200, 3))
    v *= (rng.uniform(0.501, 0.69, 200) / np.linalg.norm(v, axis=1))[:, None]
    pts = M.reduce_array(C0 @ O.expm_algebra(v))
    assert np.all(f(pts) == 0.0)
    for r in (0.0, 0.71, -0.1):
        with pytest.raises(DomainError):
            O.make_bump(C0, r)


def test_bump_value_matches_profile_of_distance():
    pts = M.haar_sample(8, 300, "rejection")
    c = M.point_from_array(C0)
    for p in pts:
        d = M.quotient_distance(p, c)
        assert F.at(p) == pytest.approx(float(O.profile(d / 0.7)) if d < 0.7 else 0.0, abs=1e-12)


def test_bump_is_c1():
    # central differences at two steps agree (two-step Richardson comparison)
    rng = M.make_rng(3)
    for _ in range(20):
        v0 = rng.normal(size=3)
        v0 *= rng.uniform(0.1, 0.6) / np.linalg.norm(v0)
        e = rng.normal(size=3)
        e /= np.linalg.norm(e)
        g = lambda s: F(M.reduce_array((C0 @ O.expm_algebra((v0 + s * e)[None]))))[0]
        d = lambda h: (g(h) - g(-h)) / (2 * h)
        d4, d5 = d(1e-4), d(1e-5)
        assert abs(d4 - d5) <= 1e-2 * max(abs(d4), 1e-3)


def test_exp_jacobian_matches_numeric_differential():
    # Haar density of exp at v = |det| of v' -> log(exp(v)^{-1} exp(v')) at v' = v
    rng = M.make_rng(4)
    for _ in range(10):
        v = rng.uniform(-0.7, 0.7, 3)
        base = expm(_alg(v))
        inv = np.linalg.inv(base)
        h = 1e-6
        jac = np.empty((3, 3))
        for i in range(3):
            dv = np.zeros(3)
            dv[i] = h
            lp = logm(inv @ expm(_alg(v + dv))).real
            lm = logm(inv @ expm(_alg(v - dv))).real
            a = (lp - lm) / (2 * h)
            jac[:, i] = [a[0, 0] - a[1, 1], a[0, 1], a[1, 0]]
        assert O.exp_jacobian(v[None])[0] == pytest.approx(abs(np.linalg.det(jac)), rel=1e-6)


def test_support_sample_weights_integrate_bump():
    smp = O.support_sample(F, 100_000, 1)
    w = smp.weights * F(smp.points)
    est, se = w.mean(), w.std() / math.sqrt(w.size)
    h = F(M.haar_sample_array(2, 100_000, "rejection"))
    ref, rse = h.mean(), h.std() / math.sqrt(h.size)
    assert abs(est - ref) <= 3 * math.hypot(se, rse)
    with pytest.raises(DomainError):
        O.support_sample(O.constant_observable(), 10, 0)


def test_samplers_agree_on_bump_mean():
    a = F(M.haar_sample_array(11, 100_000, "rejection"))
    b = F(M.haar_sample_array(11, 100_000, "horocycle"))
    se = math.hypot(a.std(), b.std()) / math.sqrt(100_000)
    assert abs(a.mean() - b.mean()) <= 3 * se
    assert O.constant_observable()(M.haar_sample_array(1, 100, "rejection")).mean() == 1.0


def test_transfer_evolve():
    p = M.haar_sample(6, 1, "rejection")[0]
    assert O.transfer_evolve(F, 0.0, p) == F.at(p)
    lf = O.transfer(F, 0.8)
    pts = M.haar_sample_array(6, 50, "rejection")
    a = O.transfer(lf, 1.3)(pts)
    b = O.transfer(F, 2.1)(pts)
    assert np.abs(a - b).max() <= 1e-9
    with pytest.raises(DomainError):
        O.transfer_evolve(F, 2e3, p)


@pytest.mark.parametrize("t", [1.0, 5.0, 10.0])
def test_volume_preservation(t):
    x = M.haar_sample_array(7, 100_000, "rejection")
    a, b = F(x), O.transfer(F, t)(x)
    se = math.hypot(a.std(), b.std()) / math.sqrt(x.shape[0])
    assert abs(a.mean() - b.mean()) <= 3 * se


def test_correlation_trivial_cases():
    one = O.constant_observable(2.0)
    s = O.correlation(one, one, [0.0, 1.0, 3.0], 1000, 1)
    assert np.all(s.values == 0.0)
    s = O.correlation(F, F, [0.0], 4000, 1)
    assert s.values[0] >= 0
    assert len(s.values) == len(s.stderr) == len(s.tGrid) and np.all(s.stderr >= 0)
    with pytest.raises(SamplingError):
        O.correlation(F, F, [0.0], 50, 1)
    with pytest.raises(DomainError):
        O.correlation(F, F, [1.0, 0.0], 1000, 1)


def test_correlation_deterministic():
    for method in ("rejection", "support"):
        a = O.correlation(F, F, [0.0, 0.5, 2.0], 3000, 9, method=method)
        b = O.correlation(F, F, [0.0, 0.5, 2.0], 3000, 9, method=method)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.stderr.tobytes() == b.stderr.tobytes()


def test_correlation_symmetry():
    # int f g o T_t = int (f o T_{-t}) g
    g = O.make_bump(M.haar_sample_array(12, 1, "rejection")[0], 0.6)
    t = 1.5
    a = O.correlation(F, g, [t], 100_000, 3)
    b = O.correlation(g, O.transfer(F, t), [0.0], 100_000, 4)
    assert abs(a.values[0] - b.values[0]) <= 3 * math.hypot(a.stderr[0], b.stderr[0])


def test_support_estimator_matches_plain_haar():
    ts = [0.0, 0.3, 3.1]
    a = O.correlation(F, F, ts, 200_000, 5)
    b = O.correlation(F, F, ts, 50_000, 5, method="support")
    for i in range(len(ts)):
        assert abs(a.values[i] - b.values[i]) <= 3 * math.hypot(a.stderr[i], b.stderr[i])
    # importance sampling on the support is much sharper
    assert b.stderr[0] < a.stderr[0] / 2


def _synthetic(values, tg, rel_err=0.01):
    return O.CorrelationSeries(tg, values, rel_err * np.abs(values), 0, 0, None)


def test_fit_decay_exact():
    tg = np.linspace(0, 10, 21)
    fit = O.fit_decay(_synthetic(3 * np.exp(-0.5 * tg), tg), (0, 10))
    assert fit.sigma == pytest.approx(0.5, abs=1e-10)
    assert fit.prefactor == pytest.approx(3.0, abs=1e-10)
    assert fit.rSquared == pytest.approx(1.0, abs=1e-10)


def test_fit_decay_noisy():
    rng = M.make_rng(13)
    tg = np.linspace(0, 10, 41)
    for _ in range(20):
        y = 3 * np.exp(-0.5 * tg) * (1 + 0.05 * rng.normal(size=tg.size))
        fit = O.fit_decay(_synthetic(y, tg), (0, 10))
        assert abs(fit.sigma - 0.5) <= 0.05


def test_fit_decay_envelope_of_oscillation():
    tg = np.linspace(0, 10, 201)
    y = np.exp(-0.5 * tg) * np.cos(3 * tg)
    fit = O.fit_decay(_synthetic(y, tg, 1e-3), (0, 10), method="envelope")
    assert fit.sigma == pytest.approx(0.5, abs=0.02)
    assert fit.rSquared > 0.99


def test_fit_decay_needs_significant_points():
    tg = np.linspace(0, 10, 21)
    s = O.CorrelationSeries(tg, np.exp(-tg), np.full(tg.size, 0.1), 0, 0, None)
    with pytest.raises(FitQualityError):
        O.fit_decay(s, (0, 10))


def test_sigma_relation():
    # 2 * 0.3 * 0.5 / 2.5
    assert O.sigma_relation(0.3, 0.5) == pytest.approx(0.12, abs=1e-15)


def test_holder_constant_is_zero():
    for kind in ("stable", "unstable", "ambient"):
        assert O.holder_seminorm(O.constant_observable(3.0), kind, 0.5, CFG, n=500) == 0.0
    with pytest.raises(DomainError):
        O.holder_seminorm(F, "stable", 0.0, CFG)


@pytest.mark.parametrize("radius", [0.3, 0.7])
def test_holder_linearized_slope(radius):
    # max |h'| = 8 / (3 sqrt 3) along a unit-speed leaf through the center,
    # divided by the pseudo-distance factor (1 - e^{-(1-lam)T}) / (1 - lam)
    f = O.make_bump(C0, radius)
    k = 1 - CFG.lam
    factor = (1 - math.exp(-k * CFG.truncationT)) / k
    expect = 8 / (3 * math.sqrt(3)) / radius / factor
    assert O.holder_seminorm(f, "stable", 1.0, CFG, n=8000, seed=1) == pytest.approx(expect, rel=0.1)


@pytest.mark.parametrize("t", [1.0, 2.0, 4.0])
def test_stable_holder_contraction(t):
    beta = CFG.beta
    h0 = O.holder_seminorm(F, "stable", beta, CFG, n=4000, seed=1)
    ht = O.holder_seminorm(O.koopman(F, t), "stable", beta, CFG, n=4000, seed=1)
    assert ht <= math.exp(-CFG.lam * beta * t) * h0 * 1.05
    assert O.koopman(F, t).sup() == F.sup()


@pytest.mark.parametrize("t", [1.0, 2.0, 4.0])
def test_unstable_norm_contraction(t):
    u0, _ = O.norm_estimate(F, "unstableHolder", [], CFG, seed=1)
    ut, _ = O.norm_estimate(O.transfer(F, t), "unstableHolder", [], CFG, seed=1)
    assert ut <= math.exp(-CFG.beta * CFG.lam * t) * u0 * 1.05


def test_norm_estimate_examples():
    one = O.constant_observable()
    v, se = O.norm_estimate(one, "weak", [one], CFG, n=20_000, normalized=True)
    assert v == 1.0 and se == 0.0
    dic = O.normalize_dictionary(O.dictionary()[:4], 1.0, CFG, n=1000)
    for f in O.dictionary()[:3]:
        v, se = O.norm_estimate(f, "weak", dic, CFG, n=20_000, normalized=True)
        assert v <= f.sup() * (1 + 3 * se)
    with pytest.raises(DomainError):
        O.norm_estimate(F, "weak", [], CFG)


def test_dictionary_is_versioned_and_disjoint():
    a, b = O.dictionary(), O.dictionary()
    assert len(a) == 20
    assert all(np.array_equal(x.bumps[0].center, y.bumps[0].center) for x, y in zip(a, b))
    with pytest.raises(DomainError):
        O.dictionary(version=2)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.69))
def test_bump_radial_monotone(r):
    v = np.array([[r, 0.0, 0.0]])
    a = F(M.reduce_array(C0 @ O.expm_algebra(v)))[0]
    b = F(M.reduce_array(C0 @ O.expm_algebra(v * 1.01)))[0]
    assert 0 <= b <= a <= 1
