import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypflow import model as M
from hypflow import structures as S
from hypflow.errors import ConfigError, SingularConfigurationError

CFG = S.NormConfig()
X0 = M.haar_sample(3, 1, "rejection")[0]


def test_leaf_point_examples():
    c0 = S.LeafCoordinate(X0, S.STABLE, 0.0)
    assert np.allclose(S.leaf_point(c0).m, X0.m)
    c = S.LeafCoordinate(X0, S.CENTER, 1.7)
    assert np.abs(S.leaf_point(c).m - M.flow_point(X0, 1.7).m).max() <= 1e-12
    y = S.leaf_point(S.LeafCoordinate(X0, S.STABLE, 0.1))
    d0 = M.quotient_distance(X0, y)
    d3 = M.quotient_distance(M.flow_point(X0, 3.0), M.flow_point(y, 3.0))
    assert d3 / d0 == pytest.approx(math.exp(-3), rel=0.02)
    # unstable leaves contract backwards
    z = S.leaf_point(S.LeafCoordinate(X0, S.UNSTABLE, 0.1))
    d3 = M.quotient_distance(M.flow_point(X0, -3.0), M.flow_point(z, -3.0))
    assert d3 / 0.1 == pytest.approx(math.exp(-3), rel=0.02)


def test_dynamical_distance_examples():
    assert S.dynamical_distance(X0, X0, "minus", CFG) == 0.0
    y = M.reduce_mod_gamma(X0.m @ M.nminus_mat(0.1))
    assert S.dynamical_distance(X0, y, "minus", CFG) == pytest.approx(0.2, rel=0.05)
    assert S.dynamical_distance(X0, y, "minus", CFG) == pytest.approx(S.on_leaf_distance(0.1), rel=1e-8)
    assert S.dynamical_distance(X0, y, "plus", CFG) == S.INFINITE
    y2 = M.reduce_mod_gamma(X0.m @ M.nplus_mat(0.1))
    assert S.dynamical_distance(X0, y2, "minus", CFG) == S.INFINITE
    assert S.dynamical_distance(X0, y2, "plus", CFG) == pytest.approx(0.2, rel=0.05)
    # a flow offset puts the points on different strong leaves
    y3 = M.flow_point(X0, 0.05)
    assert S.dynamical_distance(X0, y3, "plus", CFG) == S.INFINITE


def test_norm_config_validation():
    with pytest.raises(ConfigError):
        S.NormConfig(beta=0.1, betaPrime=0.2)
    with pytest.raises(ConfigError):
        S.NormConfig(lam=1.2)
    with pytest.raises(ConfigError):
        S.NormConfig(beta=1.5)


def test_leaf_distance_contraction():
    rng = M.make_rng(9)
    pts = M.haar_sample(9, 100, "rejection")
    for p in pts:
        u = rng.uniform(-0.2, 0.2)
        q = M.reduce_mod_gamma(p.m @ M.nminus_mat(u))
        d0 = S.dynamical_distance(p, q, "minus", CFG)
        for t in (1.0, 2.0, 4.0):
            dt = S.dynamical_distance(M.flow_point(p, -t), M.flow_point(q, -t), "minus", CFG)
            assert dt <= math.exp(-CFG.lam * t) * d0 * 1.02


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_pseudo_distance_axioms_on_leaf(a, b, c):
    p = [M.reduce_mod_gamma(X0.m @ M.nminus_mat(u)) for u in (a, b, c)]
    d = lambda i, j: S.dynamical_distance(p[i], p[j], "minus", CFG)
    assert abs(d(0, 1) - d(1, 0)) <= 1e-6
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-6


def test_holonomy_examples():
    r = S.stable_holonomy(S.LeafCoordinate(X0, S.UNSTABLE, 0.2), X0)
    assert r.jacobian == 1.0 and r.flowOffset == 0.0 and r.imageParam == 0.2
    tgt = M.reduce_mod_gamma(X0.m @ M.nplus_mat(0.1))
    r = S.stable_holonomy(S.LeafCoordinate(X0, S.UNSTABLE, 0.2), tgt)
    assert r.imageParam == pytest.approx(0.204082, abs=1e-6)
    assert r.jacobian == pytest.approx(1.041233, abs=1e-6)
    # the image sits on W^uc(target) and on W^s(source)
    src = X0.m @ M.nminus_mat(0.2)
    off = M.sl2_inverse(src) @ M.lift_near(src, r.image.m)
    assert abs(off[1, 0]) < 1e-9 and abs(off[0, 0] - 1) < 1e-9
    off2 = M.sl2_inverse(M.lift_near(r.image.m, tgt.m)) @ r.image.m
    assert abs(off2[0, 1]) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_holonomy_matches_bisection(rho, w):
    rho2, _, tau, s = S.holonomy_params(rho, w)
    b_rho, b_tau, b_s = S.holonomy_bisection(rho, w)
    assert abs(rho2 - b_rho) <= 1e-8
    assert abs(tau - b_tau) <= 1e-8
    assert abs(s - b_s) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_holonomy_composition(rho, w):
    rho2, j1, t1, _ = S.holonomy_params(rho, w)
    rho3, j2, t2, _ = S.holonomy_params(rho2, -w)
    assert abs(rho3 - rho) <= 1e-8
    assert abs(j1 * j2 - 1) <= 1e-8
    assert abs(t1 + t2) <= 1e-8


def test_holonomy_singular():
    with pytest.raises(SingularConfigurationError):
        S.holonomy_params(2.0, 0.5)


def test_product_formula_matches_weak_unstable_jacobian():
    # J^uT_{-1} is constant, so the truncated product is the Jacobian measured
    # along W^uc (coordinate Jacobian times e^{flowOffset}), which is exactly 1
    for rho, w in [(0.2, 0.1), (-0.25, 0.3), (0.1, -0.2)]:
        r = S.stable_holonomy(S.LeafCoordinate(X0, S.UNSTABLE, rho),
                              M.reduce_mod_gamma(X0.m @ M.nplus_mat(w)))
        assert S.holonomy_product_jacobian(rho, w) == pytest.approx(r.ucJacobian, abs=1e-6)
        assert r.ucJacobian == pytest.approx(1.0, abs=1e-12)


def test_pinching_exponents():
    rep = S.pinching_exponents([1.0, 2.0, 4.0, 8.0], 20, seed=1)
    assert rep.muHat == pytest.approx(1.0, abs=0.01)
    assert rep.tauH == pytest.approx(1.0, abs=0.05)
    assert rep.tauJ >= 0.95
    assert rep.tauD == pytest.approx(1.0, abs=0.05)
    assert all(math.isfinite(v) and v > 0 for v in (rep.muHat, rep.aHat, rep.tauD, rep.tauH, rep.tauJ))


def test_unstable_drift_constant():
    rng = M.make_rng(21)
    worst = 0.0
    for _ in range(1000):
        e = 10 ** rng.uniform(-3, -1)
        v = rng.normal(size=3)
        off = S._expm_alg(e * v / np.linalg.norm(v))
        d = float(M.local_distance(off))
        worst = max(worst, S.unstable_leaf_drift(off, 0.1, 3) / d)
    assert worst <= 10
