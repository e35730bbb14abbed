import math

import numpy as np
import pytest
from scipy.integrate import simpson

from hypflow import dolgopyat as D
from hypflow import model as M
from hypflow import observables as O
from hypflow import operators as P
from hypflow.errors import ConfigError, DomainError, ScaleError

X0 = M.haar_sample_array(3, 1, "rejection")[0]


@pytest.fixture(scope="module")
def partition():
    return D.space_partition(0.25, seed=0)


def test_config_coupling():
    cfg = D.DolgopyatConfig(rho=0.1, b=1024.0)
    assert cfg.varrho == pytest.approx(0.2) and cfg.varsigma == pytest.approx(0.6)
    assert cfg.r == pytest.approx(0.25)
    assert math.exp(-cfg.l) * D.R0 <= cfg.b ** -cfg.varsigma
    assert math.exp(-(cfg.l - 1)) * D.R0 > cfg.b ** -cfg.varsigma or cfg.l == 1
    for kw in ({"rho": 0.125}, {"rho": 0.0}, {"b": 1.0}, {"k": -1}, {"b": 1e6, "l": 1}):
        with pytest.raises(ConfigError):
            D.DolgopyatConfig(**kw)


def test_time_partition_sums_to_one():
    p = D.TimePartition()
    t = np.random.default_rng(0).uniform(-30, 30, 1000)
    assert np.abs(sum(p(t - k) for k in range(-40, 41)) - 1).max() <= 1e-12
    s = np.linspace(-3, 4, 7001)
    assert np.all(p(s)[(s <= -0.5) | (s >= 1.5)] == 0)


def test_translate_index_matches_word_search():
    p = M.haar_sample_array(1, 15, "rejection")
    q = M.haar_sample_array(2, 2000, "rejection")
    for R in (0.2, 1.0):
        qi, ow, d, _ = D.TranslateIndex(q, R).query(p)
        got = {(int(a), int(b)): c for a, b, c in zip(qi, ow, d)}
        for i in range(p.shape[0]):
            ref = M.quotient_distance_array(np.repeat(p[i][None], q.shape[0], 0), q)
            near = np.nonzero(ref <= R)[0]
            assert {b for a, b in got if a == i} == set(near.tolist())
            for j in near:
                assert got[(i, int(j))] == pytest.approx(ref[j], abs=1e-12)


def test_space_partition_properties(partition):
    r = partition.r
    audit = M.haar_sample_array(77, 10_000, "rejection")
    assert partition.covered(audit).all()
    assert partition.count <= 50 * r**-3
    qi, ci, w = partition.weights(audit[:3000])
    assert np.abs(np.bincount(qi, w, minlength=3000) - 1).max() <= 1e-12
    # raw bumps: 1 at the centers, supported in B_{cd r}
    qi, ci, psi = partition.raw(partition.centers[:50])
    assert np.all(psi[qi == ci] == 1.0)
    # Lipschitz constant of the normalized functions is O(1/r)
    v = np.random.default_rng(1).normal(size=(1000, 3))
    v *= (0.01 / np.linalg.norm(v, axis=1))[:, None]
    q2 = M.reduce_array(M.mul2(audit[:1000], O.expm_algebra(v)))
    a = dict(((int(i), int(c)), x) for i, c, x in zip(*partition.weights(audit[:1000])))
    b = dict(((int(i), int(c)), x) for i, c, x in zip(*partition.weights(q2)))
    lip = max(abs(a.get(key, 0.0) - b.get(key, 0.0)) for key in set(a) | set(b)) / 0.01
    assert lip <= 20 / r


def test_unexpanded_leaf_is_one_piece():
    rep = D.expand_leaf_pieces(X0, D.DolgopyatConfig(b=1024.0, k=0), X0[None], delta=0.01)
    assert len(rep.pieces) == 1 and not rep.pieces[0].discarded
    assert rep.discardedMeasure == 0.0


def test_discarded_mass_and_piece_sizes(partition):
    for k in range(2, 8):
        cfg = D.DolgopyatConfig(b=1024.0, k=k)
        rep = D.expand_leaf_pieces(X0, cfg, partition)
        outer = cfg.thetaCd * cfg.cd * cfg.r
        assert rep.pieces
        # log balls are not convex along leaves, so chords run past 2 * outer (max seen about 2.3)
        assert all(p.paramInterval[1] - p.paramInterval[0] <= 3 * outer for p in rep.pieces)
        assert all(p.minDistance <= cfg.cd * cfg.r for p in rep.pieces)
        assert rep.discardedMeasure <= 10 * math.exp(-k) * rep.leafMeasure


def test_piece_budget():
    with pytest.raises(ScaleError):
        D.expand_leaf_pieces(X0, D.DolgopyatConfig(b=1024.0, k=20), X0[None])


def test_phase_two_ways_and_self_pair():
    v = np.random.default_rng(2).uniform(-0.3, 0.3, 100)
    ph = D.phase_function(0, 1, D.PairGeometry(0.25, 0.4), v, 1024.0, 0.6)
    assert ph.maxDisagreement <= 1e-8 and ph.pairingClass == "B"
    g = np.array([s[1] for s in ph.phaseSamples])
    assert np.abs(g - ph(v)).max() <= 1e-12
    same = D.phase_function(2, 2, D.PairGeometry(0.25, 0.4), v, 1024.0, 0.6)
    assert np.all(same(v) == 0) and all(s[1] == 0 for s in same.phaseSamples)
    near = D.phase_function(0, 1, D.PairGeometry(1e-3, 0.0), v[:3], 1024.0, 0.6)
    assert near.pairingClass == "A"


def test_phase_derivative_is_contact_pairing():
    geom = D.PairGeometry(0.2, 0.1)
    for v in (-0.3, 0.0, 0.25):
        s = geom.w / (1 - v * geom.w)
        pairing = M.contact_pairing(M.V_UNSTABLE, M.AlgebraVector(0.0, s, 0.0))
        assert D.phase_derivative(v, geom) == pytest.approx(pairing, rel=1e-12)
        h = 1e-5
        fd = (D.phase_closed(v + h, geom) - D.phase_closed(v - h, geom)) / (2 * h)
        assert fd == pytest.approx(pairing, rel=1e-8)


@pytest.mark.parametrize("b", [256.0, 1024.0, 4096.0])
def test_linearization_within_cells(b):
    rho = 0.1
    r = b ** (-2 * rho)
    err = D.derivative_check(D.PairGeometry(r, 0.0), b, 1.5 * r)
    assert err <= 10 * b ** (-1 - 2 * rho)


def _amplitude(b, G=None):
    cfg = D.DolgopyatConfig(b=b)
    geom = D.PairGeometry(1.5 * cfg.r, 0.0)
    G = G if G is not None else O.Observable([O.Bump(X0, 0.7)], 0.5)
    return cfg, D.phase_function(0, 1, geom, [], b, cfg.varsigma), D.BallAmplitude(X0, geom, cfg.r, cfg.cd, G)


def test_frozen_cell_and_trivial_amplitude():
    assert abs(D.frozen_cell_factor()) <= 1e-15
    _, ph, amp = _amplitude(256.0, O.constant_observable(0.0))
    assert D.oscillatory_integral(ph, amp, 256.0).value == 0


def test_cells_match_direct_quadrature():
    b = 256.0
    _, ph, amp = _amplitude(b)
    got = D.oscillatory_integral(ph, amp, b).value
    vmax = 1.05 * amp.cd * amp.r
    v = np.linspace(-vmax, vmax, 40_001)
    f = np.exp(-1j * b * D.phase_closed(v, ph.geometry)) * amp.H(v)
    ref = simpson(f, x=v)
    assert abs(ref) > 1e-7
    assert abs(got - ref) <= 1e-5 * abs(ref)


def test_cell_preconditions():
    _, ph, amp = _amplitude(256.0)
    with pytest.raises(ConfigError):
        D.oscillatory_integral(ph, amp, 2.0)
    near = D.phase_function(0, 1, D.PairGeometry(1e-4, 0.0), [], 256.0, 0.6)
    with pytest.raises(DomainError):
        D.oscillatory_integral(near, amp, 256.0)


def test_oscillatory_scan_decays():
    sc = D.oscillatory_scan(2.0 ** np.arange(4, 13), wFactor=1.5)
    assert sc.exponent >= 0.5 * sc.predicted
    assert sc.fittedC <= 10
    assert np.all(np.diff(sc.envelope) <= 0)


def test_dual_power_values_match_dual_resolvent():
    phi = O.dictionary()[0]
    x = M.flow_array(phi.support_sample(M.make_rng(1), 3), -1.0)
    cfg = P.AverageConfig(deltaS=0.1, epsU=0.1, quadPoints=17)
    for b in (3.0, 40.0):
        got = D.dual_power_values(phi, x, 1.0, b, 1)
        q = P.ResolventQuery(1.0, b)
        ref = P.DualResolvent(phi, q, cfg, "real")(x) + 1j * P.DualResolvent(phi, q, cfg, "imag")(x)
        assert np.abs(got - ref).max() <= 1e-3 * np.abs(ref).max()


def test_phi_scan_zero_and_decay():
    zero = D.phi_l_sup_scan([16.0, 64.0, 256.0], [O.constant_observable(0.0)], netSize=2, quadPoints=16)
    assert np.all(zero.sup == 0)
    sc = D.phi_l_sup_scan(2.0 ** np.arange(4, 11), O.dictionary()[:1], netSize=6, quadPoints=16)
    assert sc.resolved.sum() >= 5
    assert sc.gamma > 0 and sc.r2 >= 0.8
    assert sc.maxDoublingRatio <= 1.1


def test_mandens_counting():
    rows = D.mandens_count(X0, 0.1, [0])
    assert rows[0].count == 1 and rows[0].lhs == pytest.approx(1.0)
    for r1 in (0.02, 0.1, 0.25):
        rows = D.mandens_count(X0, r1, range(1, 9))
        assert all(m.holds for m in rows)
        # every crossing is a genuine intersection of the two leaves
        for m in rows:
            y = M.flow_long(X0[None], float(m.k))[0]
            for s, w, t in m.crossings:
                p1 = M.reduce_array(X0 @ M.nplus_mat(w))
                p2 = M.reduce_array(D.horocycle_points(y, np.array([s]))[0] @ M.a_mat(t))
                assert M.quotient_distance_array(p1[None], p2[None])[0] <= 1e-5
    with pytest.raises(DomainError):
        D.mandens_count(X0, 0.5, [1])


def test_mandens_counts_stable_under_finer_sampling():
    # counts do not depend on the leaf sampling step (completeness of the enumeration)
    a = [m.count for m in D.mandens_count(X0, 0.1, range(5, 9))]
    b = [m.count for m in D.mandens_count(X0, 0.1, range(5, 9), step=0.0125)]
    assert a == b and sum(a) > 0


def test_assembly_reproduces_direct_value(partition):
    phi = O.dictionary()[0]
    x = M.flow_array(phi.support_sample(M.make_rng(1), 1), -1.5)[0]
    res = D.assembly_check(phi, x, partition, b=20.0, l=2)
    assert abs(res["direct"]) > 1e-6
    assert res["relError"] <= 0.2
    assert res["terms"] > 10
