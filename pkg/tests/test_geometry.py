"""Metric, Christoffel symbols, geodesics, transport, distance."""

import math

import numpy as np
import pytest

from orbitclose.errors import GeodesicAmbiguous
from orbitclose.geometry import (Euclidean, FlatTorus, Sphere2, christoffel,
                                 distance, exp_map, geodesic,
                                 orthonormal_complement, parallel_transport)

E2 = Euclidean(2)
E3 = Euclidean(3)
T2 = FlatTorus((1.0, 1.0))
S2 = Sphere2(1.0)


def random_sphere_point(rng, R=1.0):
    p = rng.normal(size=3)
    return R * p / np.linalg.norm(p)


def random_tangent(rng, man, p):
    if man.kind == "sphere2":
        v = rng.normal(size=3)
        v -= (v @ p) * p / (p @ p)
        return v
    return rng.normal(size=man.dimension)


# --------------------------------------------------------------------------
# christoffel
# --------------------------------------------------------------------------

def test_christoffel_flat_zero():
    assert not np.any(christoffel(E3, np.array([0.3, -1.0, 2.0])))
    assert not np.any(christoffel(T2, np.array([0.2, 0.9])))


def test_christoffel_sphere_matches_closed_form():
    """Jet route vs the conformal-factor closed form g = 4R^4/(R^2+|x|^2)^2."""
    rng = np.random.default_rng(0)
    for R in (1.0, 2.5):
        man = Sphere2(R)
        for _ in range(10):
            u = rng.uniform(-1.2 * R, 1.2 * R, size=2)
            got = man.christoffel(u)
            want = man.christoffel_fast(u)
            np.testing.assert_allclose(got, want, atol=1e-10)
            # symmetry in the lower pair
            np.testing.assert_allclose(got, got.transpose(0, 2, 1), atol=1e-12)


def test_christoffel_sphere_origin():
    # at the chart origin the conformal factor is stationary: all Gammas vanish
    np.testing.assert_allclose(S2.christoffel(np.zeros(2)), 0.0, atol=1e-12)


def test_metric_positive_definite_and_compatible():
    """min eig > 0 and nabla g = 0 for the derived connection."""
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.uniform(-1.4, 1.4, size=2)
        g = S2.chart_metric(u)
        assert np.linalg.eigvalsh(g).min() > 0
        jets = S2.metric_jets(u, 1)
        gam = S2.christoffel(u)
        for k in range(2):
            e = [0, 0]
            e[k] = 1
            for i in range(2):
                for j in range(2):
                    dg = jets[i][j].partial(e)
                    corr = sum(gam[m, k, i] * S2.chart_metric(u)[m, j]
                               + gam[m, k, j] * S2.chart_metric(u)[i, m]
                               for m in range(2))
                    assert abs(dg - corr) <= 1e-9


# --------------------------------------------------------------------------
# geodesics
# --------------------------------------------------------------------------

def test_geodesic_euclidean_straight_line():
    p, v = np.array([1.0, -2.0]), np.array([0.5, 2.0])
    seg = geodesic(E2, p, v, 3.0)
    np.testing.assert_allclose(seg.point(2.0), p + 2.0 * v)
    assert seg.speed == pytest.approx(np.linalg.norm(v))


def test_geodesic_torus_wraps():
    seg = geodesic(T2, np.array([0.0, 0.0]), np.array([1.0, math.sqrt(2)]), 10.0)
    end = T2.wrap(seg.end_point())
    want = np.array([10.0 % 1.0, (10.0 * math.sqrt(2)) % 1.0])
    np.testing.assert_allclose(end, want, atol=1e-12)


def great_circle(p, v, tau, R=1.0):
    s = np.linalg.norm(v)
    ang = s * tau / R
    return math.cos(ang) * p + math.sin(ang) * R * v / s


def test_geodesic_sphere_great_circle():
    rng = np.random.default_rng(2)
    for _ in range(8):
        p = random_sphere_point(rng)
        v = random_tangent(rng, S2, p)
        tau_end = rng.uniform(0.5, 4.0)
        seg = geodesic(S2, p, v, tau_end)
        for tau in np.linspace(0.0, tau_end, 7):
            np.testing.assert_allclose(seg.point(tau), great_circle(p, v, tau),
                                       atol=1e-8)


def test_geodesic_sphere_speed_conserved():
    rng = np.random.default_rng(3)
    p = random_sphere_point(rng)
    v = random_tangent(rng, S2, p)
    seg = geodesic(S2, p, v, 5.0)
    s0 = np.linalg.norm(v)
    for tau in np.linspace(0.0, 5.0, 50):
        assert np.linalg.norm(seg.velocity(tau)) == pytest.approx(s0, rel=1e-8)


# --------------------------------------------------------------------------
# parallel transport
# --------------------------------------------------------------------------

def test_transport_euclidean_identity():
    seg = geodesic(E3, np.zeros(3), np.array([1.0, 0.0, 0.0]), 2.0)
    w = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(parallel_transport(E3, seg, w), w)


def test_transport_sphere_isometry_and_reversal():
    rng = np.random.default_rng(4)
    for _ in range(25):
        p = random_sphere_point(rng)
        v = random_tangent(rng, S2, p)
        tau_end = rng.uniform(0.3, 3.0)
        seg = geodesic(S2, p, v, tau_end)
        w1 = random_tangent(rng, S2, p)
        w2 = random_tangent(rng, S2, p)
        t1 = parallel_transport(S2, seg, w1)
        t2 = parallel_transport(S2, seg, w2)
        assert t1 @ t2 == pytest.approx(w1 @ w2, abs=1e-8)
        # reversal: transport back along the reversed geodesic
        q = seg.end_point()
        vq = seg.velocity(tau_end)
        back = geodesic(S2, q, -vq, tau_end)
        np.testing.assert_allclose(parallel_transport(S2, back, t1), w1, atol=1e-8)


def test_transport_latitude_holonomy():
    """Loop at polar angle theta0: rotation by 2*pi*(1-cos(theta0))."""
    for theta0 in (0.3, 0.8, 1.2):
        a = math.tan(theta0 / 2.0)  # chart-1 radius of the latitude circle

        def path(phi, a=a):
            u = np.array([a * math.cos(phi), a * math.sin(phi)])
            du = np.array([-a * math.sin(phi), a * math.cos(phi)])
            return u, du

        w0 = np.array([1.0, 0.0])
        w1 = S2.parallel_transport_curve(path, (0.0, 2 * math.pi), w0, chart=1)
        rot = math.atan2(w0[0] * w1[1] - w0[1] * w1[0], w0 @ w1)
        expected = 2 * math.pi * (1 - math.cos(theta0))
        diff = (rot - expected + math.pi) % (2 * math.pi) - math.pi
        diff_flip = (-rot - expected + math.pi) % (2 * math.pi) - math.pi
        assert min(abs(diff), abs(diff_flip)) <= 1e-6


# --------------------------------------------------------------------------
# exp_map and distance
# --------------------------------------------------------------------------

def test_exp_map_euclidean():
    p, v = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
    np.testing.assert_allclose(exp_map(E2, p, v), p + v)
    np.testing.assert_allclose(exp_map(E2, p, np.zeros(2)), p)


def test_exp_map_sphere_antipode():
    rng = np.random.default_rng(5)
    p = random_sphere_point(rng)
    v = random_tangent(rng, S2, p)
    v *= math.pi / np.linalg.norm(v)
    q = exp_map(S2, p, v)
    np.testing.assert_allclose(q, -p, atol=1e-7)


def test_distance_basics():
    assert distance(E2, [1.0, 2.0], [1.0, 2.0]) == 0.0
    assert distance(T2, [0.1, 0.0], [0.9, 0.0]) == pytest.approx(0.2)
    p = np.array([0.0, 0.0, 1.0])
    assert distance(S2, p, -p) == pytest.approx(math.pi)


def test_distance_triangle_inequality():
    rng = np.random.default_rng(6)
    for man, sampler in ((E3, lambda: rng.normal(size=3)),
                         (T2, lambda: rng.uniform(0, 1, size=2)),
                         (S2, lambda: random_sphere_point(rng))):
        for _ in range(200):
            a, b, c = sampler(), sampler(), sampler()
            assert distance(man, a, c) <= \
                distance(man, a, b) + distance(man, b, c) + 1e-12


def test_torus_minimal_geodesic_ambiguous():
    with pytest.raises(GeodesicAmbiguous):
        FlatTorus((1.0,)).minimal_geodesic(np.array([0.0]), np.array([0.5]))


def test_orthonormal_complement():
    rng = np.random.default_rng(7)
    for _ in range(10):
        v = rng.normal(size=3)
        B = orthonormal_complement(E3, np.zeros(3), v)
        assert B.shape == (3, 2)
        np.testing.assert_allclose(B.T @ B, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(B.T @ v, 0.0, atol=1e-10)
