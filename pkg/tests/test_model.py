import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypflow import model as M
from hypflow.errors import DomainError

G = M.bolza_group()


def test_exp_generator_examples():
    assert np.allclose(M.exp_generator(M.FLOW, 0.0).m, np.eye(2))
    assert np.allclose(M.exp_generator(M.STABLE_PLUS, 0.3).m, [[1, 0.3], [0, 1]])
    assert np.allclose(M.exp_generator(M.FLOW, math.log(4)).m, np.diag([2, 0.5]))
    with pytest.raises(DomainError):
        M.exp_generator(M.FLOW, 50.0)


def test_generator_traces_and_side_pairing():
    for g in G.generators:
        assert abs(np.trace(g) - 2 * (1 + math.sqrt(2))) < 1e-10
    mids, verts = G.side_midpoints(), G.octagon_vertices()
    for k, g in enumerate(G.generators):
        # gamma_k pairs side k+2 with the opposite side k+6
        src, dst = (k + 2) % 8, (k + 6) % 8
        assert abs(M.moebius_disk(g, mids[src]) - mids[dst]) < 1e-8
        # the two endpoints of the source side go to the endpoints of the target side
        ends = M.moebius_disk(g, verts[[src - 1, src]])
        tgt = verts[[dst - 1, dst]]
        assert min(abs(ends[0] - tgt[0]) + abs(ends[1] - tgt[1]),
                   abs(ends[0] - tgt[1]) + abs(ends[1] - tgt[0])) < 1e-8
        assert np.allclose(g @ G.generators[G.inverse_index(k)], np.eye(2))


def test_group_element_invariants():
    g = M.GroupElement(np.array([[-2.0, 0.0], [1.0, -0.5]]) * 1.0000001)
    assert abs(g.det() - 1) < 1e-12
    assert g.m[0, 0] > 0
    assert np.allclose((g @ g.inverse()).m, np.eye(2))


def test_reduce_examples():
    p = M.reduce_mod_gamma(M.GroupElement.identity())
    assert p.word == () and np.allclose(p.m, np.eye(2))
    q = M.reduce_mod_gamma(M.GroupElement(G.generators[0]))
    assert q.word == (4,)
    assert np.allclose(q.m, np.eye(2), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-4, 4), st.floats(0, 6), st.floats(-4, 4))
def test_reduction_idempotent_and_in_domain(psi, r, th):
    g = M.rotation_mat(psi) @ M.a_mat(r) @ M.rotation_mat(th) @ M.nplus_mat(0.7)
    p = M.reduce_mod_gamma(g)
    assert bool(M.in_fundamental_domain(p.m))
    q = M.reduce_mod_gamma(p.rep)
    assert q.word == ()
    assert np.allclose(q.m, p.m, atol=1e-12)


def test_reduce_array_matches_scalar():
    pts = M.rotation_mat(np.linspace(0, 3, 50)) @ M.a_mat(np.linspace(0, 7, 50))
    arr = M.reduce_array(pts)
    for g, r in zip(pts, arr):
        assert np.allclose(M.reduce_mod_gamma(g).m, r, atol=1e-10)


def test_contact_pairing_examples():
    assert M.contact_pairing(M.V_FLOW) == 1.0
    assert M.contact_pairing(M.V_UNSTABLE, M.V_STABLE) == pytest.approx(2.0, abs=1e-14)
    assert M.contact_pairing(M.V_FLOW, M.V_STABLE) == 0.0
    assert M.contact_pairing(M.V_FLOW, M.V_UNSTABLE) == 0.0
    assert M.contact_pairing(M.V_STABLE) == 0.0 and M.contact_pairing(M.V_UNSTABLE) == 0.0


def _alpha_along(path):
    # alpha(g^{-1} dg), integrated with the trapezoid rule on a closed loop
    tot = 0.0
    for a, b in zip(path[:-1], path[1:]):
        mid = M.sl2_inverse(0.5 * (a + b)) @ (b - a)
        tot += mid[0, 0] - mid[1, 1]
    return tot


def test_dalpha_by_circulation():
    # Stokes on the coordinate square (s, u) -> n-(s) n+(u): the loop integral of alpha
    # over eps^2 approximates d(alpha)(U-, U+)
    eps, n = 1e-3, 400
    s = np.linspace(0, eps, n)
    chart = lambda a, b: M.nminus_mat(a) @ M.nplus_mat(b)
    loop = ([chart(x, 0.0) for x in s] + [chart(eps, x) for x in s[1:]]
            + [chart(eps - x, eps) for x in s[1:]] + [chart(0.0, eps - x) for x in s[1:]])
    circ = _alpha_along(loop)
    assert circ / eps**2 == pytest.approx(2.0, rel=1e-2)


def test_contact_invariance_and_splitting():
    rng = M.make_rng(3)
    for _ in range(200):
        v = M.AlgebraVector(*rng.normal(size=3))
        t = rng.uniform(-5, 5)
        w = M.tangent_flow(v, t)
        assert abs(M.contact_pairing(w) - M.contact_pairing(v)) <= 1e-9
        assert w.cPlus == pytest.approx(v.cPlus * math.exp(-t), rel=1e-12)
        assert w.cMinus == pytest.approx(v.cMinus * math.exp(t), rel=1e-12)


def test_flow_examples():
    p = M.haar_sample(11, 1, "rejection")[0]
    assert np.allclose(M.flow_point(p, 0.0).m, p.m)
    back = M.flow_point(M.flow_point(p, 1.3), -1.3)
    assert np.abs(back.m - p.m).max() <= 1e-10
    q = p.m @ M.nplus_mat(0.1)
    pt, qt = p.m @ M.a_mat(2.0), q @ M.a_mat(2.0)
    off = M.sl2_inverse(pt) @ qt
    assert off[0, 1] == pytest.approx(0.1 * math.exp(-2), abs=1e-12)
    assert off[0, 1] == pytest.approx(0.013534, abs=1e-6)


def test_flow_group_law():
    for p in M.haar_sample(5, 10, "rejection"):
        a = M.flow_point(M.flow_point(p, 1.7), 2.4)
        b = M.flow_point(p, 4.1)
        assert M.quotient_distance(a, b) <= 1e-10


def test_orbit_matches_flow():
    p = M.haar_sample(8, 1, "rejection")[0]
    times = np.array([-3.1, -0.5, 0.0, 0.9, 4.2, 7.7])
    orb = M.orbit(p.m, times)
    for t, m in zip(times, orb):
        assert M.quotient_distance(M.point_from_array(m), M.flow_point(p, t)) < 1e-10


def test_quotient_distance_properties():
    pts = M.haar_sample(2, 200, "rejection")
    for p, q in zip(pts[:100], pts[100:]):
        assert M.quotient_distance(p, p) == 0.0
        d1, d2 = M.quotient_distance(p, q), M.quotient_distance(q, p)
        if math.isfinite(d1):
            assert abs(d1 - d2) <= 1e-10
        else:
            assert not math.isfinite(d2)
    for p in pts[:20]:
        for g in G.generators:
            assert M.quotient_distance(p, M.reduce_mod_gamma(g @ p.m)) <= 1e-9


def test_local_distance_of_exponentials():
    for v in [(0.3, 0.0, 0.0), (0.0, 0.2, 0.0), (0.1, -0.4, 0.25), (1e-9, 2e-9, 0.0)]:
        av = M.AlgebraVector(*v)
        from scipy.linalg import expm
        m = expm(av.as_matrix())
        assert M.local_distance(m) == pytest.approx(av.norm(), rel=1e-9)


def test_haar_determinism_and_prefix():
    a = M.haar_sample_array(7, 300)
    b = M.haar_sample_array(7, 300)
    assert a.tobytes() == b.tobytes()
    assert np.array_equal(M.haar_sample_array(7, 100), a[:100])
    assert np.array_equal(M.haar_sample_array(7, 100, "rejection"), M.haar_sample_array(7, 300, "rejection")[:100])
    assert M.haar_sample(7, 0) == []


def test_samplers_in_domain():
    for method in ("horocycle", "rejection"):
        assert M.in_fundamental_domain(M.haar_sample_array(4, 2000, method)).all()
