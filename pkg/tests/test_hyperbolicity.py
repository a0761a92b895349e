"""Monodromy, margins, eigenvalue surgery, Gronwall, splitting continuity."""

import math

import numpy as np
import pytest

from orbitclose import parse_field
from orbitclose.catalog import catalog_field
from orbitclose.closing import hermite_close, project, OUTSIDE
from orbitclose.errors import NotPeriodic, WindowTooWide
from orbitclose.flow import (ReturnEvent, find_returns, integrate,
                             return_time_map)
from orbitclose.geometry import Euclidean
from orbitclose.hyperbolicity import (check_hyperbolic_margin,
                                      eigenvalue_adjuster, gronwall_check,
                                      make_cross_section, section_monodromy,
                                      splitting_continuity)
from orbitclose.perturbation import make_bump

E2, E3 = Euclidean(2), Euclidean(3)
LC, _ = catalog_field("limit_cycle_r3")
ROT, _ = catalog_field("rotation2d")
LORENZ, _ = catalog_field("lorenz")
SKEW, _ = catalog_field("linear_skew_mu", mu=0.9)


# --------------------------------------------------------------------------
# section_monodromy
# --------------------------------------------------------------------------

def test_monodromy_limit_cycle_floquet():
    rep = section_monodromy(LC, E2, np.array([1.0, 0.0]), 0.0, 2 * math.pi)
    assert len(rep.eigenvalues) == 1
    mult = rep.eigenvalues[0]
    assert abs(mult.imag) < 1e-12
    assert mult.real == pytest.approx(math.exp(-4 * math.pi), rel=1e-6)
    assert rep.splitting_dims == {"s": 1, "u": 0, "c": 0}


def test_monodromy_rotation_neutral():
    rep = section_monodromy(ROT, E2, np.array([1.0, 0.0]), 0.0, 2 * math.pi)
    assert abs(rep.eigenvalues[0]) == pytest.approx(1.0, abs=1e-9)
    assert rep.splitting_dims["c"] == 1
    assert rep.margin == 0.0


def test_monodromy_skew_multipliers():
    rep = section_monodromy(SKEW, E3, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    mags = sorted(np.abs(rep.eigenvalues))
    assert mags[0] == pytest.approx(math.exp(-4 * math.pi), rel=1e-6)
    assert mags[1] == pytest.approx(0.9, rel=1e-8)
    assert rep.splitting_dims == {"s": 2, "u": 0, "c": 0}


def test_monodromy_not_periodic():
    with pytest.raises(NotPeriodic):
        section_monodromy(LORENZ, E3, np.array([1.0, 1.0, 1.0]), 0.0, 2.0)


def test_monodromy_det_consistency():
    rep = section_monodromy(SKEW, E3, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    # Liouville: det dphi_T = exp(int div X dt)
    assert rep.det_full == pytest.approx(math.exp(rep.divergence_integral),
                                         rel=1e-6)
    # product of section multipliers = det / (flow multiplier = 1)
    prod = float(np.prod(np.abs(rep.eigenvalues)))
    assert prod == pytest.approx(abs(rep.det_full), rel=1e-6)


def test_monodromy_splitting_invariance():
    rep = section_monodromy(SKEW, E3, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    B = rep.stable_basis
    img = rep.matrix @ B
    # image stays in span(B)
    resid = img - B @ (np.linalg.lstsq(B, img, rcond=None)[0])
    assert np.linalg.norm(resid) < 1e-7


def test_monodromy_iterated_contraction():
    rep = section_monodromy(SKEW, E3, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    C, lam = rep.contraction_C, rep.contraction_rate
    assert 0 < lam < 1
    Pk = np.eye(rep.matrix.shape[0])
    for k in range(1, 6):
        Pk = rep.matrix @ Pk
        assert np.linalg.norm(Pk @ rep.stable_basis, 2) <= C * lam ** k + 1e-12


# --------------------------------------------------------------------------
# check_hyperbolic_margin
# --------------------------------------------------------------------------

def test_margin_limit_cycle_passes():
    rep = section_monodromy(LC, E2, np.array([1.0, 0.0]), 0.0, 2 * math.pi)
    ok, witness = check_hyperbolic_margin(rep, 0.5)
    assert ok and witness is None


def test_margin_rotation_fails():
    rep = section_monodromy(ROT, E2, np.array([1.0, 0.0]), 0.0, 2 * math.pi)
    ok, witness = check_hyperbolic_margin(rep, 0.1)
    assert not ok
    assert abs(witness) == pytest.approx(1.0, abs=1e-9)


def test_margin_skew_prescribed():
    # contracting z-direction: multipliers {e^{-4pi}, 0.5}, margin 0.5
    skew, man = catalog_field("linear_skew_mu", mu=0.5)
    rep = section_monodromy(skew, man, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    ok, _ = check_hyperbolic_margin(rep, 0.4)
    assert ok
    assert rep.margin == pytest.approx(0.5, abs=1e-6)


def test_margin_skew_expanding():
    # saddle section map: multipliers {e^{-4pi}, 2.0}; margin 1 - 1/2 = 0.5
    skew, man = catalog_field("linear_skew_mu", mu=2.0)
    rep = section_monodromy(skew, man, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    assert rep.splitting_dims == {"s": 1, "u": 1, "c": 0}
    ok, _ = check_hyperbolic_margin(rep, 0.4)
    assert ok
    assert rep.margin == pytest.approx(0.5, abs=1e-6)
    assert rep.unstable_basis.shape[1] == 1


# --------------------------------------------------------------------------
# eigenvalue_adjuster
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def skew_setup():
    x0 = np.array([1.0, 0.0, 0.0])
    T = 2 * math.pi
    traj = integrate(SKEW, E3, x0, (0.0, T), rtol=1e-12, atol=1e-12)
    ev = ReturnEvent(x0=x0, T=T, x_ret=traj(T), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    rep = section_monodromy(SKEW, E3, x0, 0.0, T)
    return orbit, rep


@pytest.fixture(scope="module")
def adjusted(skew_setup):
    orbit, rep = skew_setup
    bump = make_bump(0.35, order=2)
    return eigenvalue_adjuster(SKEW, E3, orbit, rep,
                               np.array([0.0, 0.0, 1.0]), bump)


def test_adjuster_moves_target_to_one(adjusted):
    assert abs(adjusted.mu_after - 1.0) < 1e-6
    assert adjusted.mu_before == pytest.approx(0.9, rel=1e-8)


def test_adjuster_off_target_unchanged(adjusted):
    assert len(adjusted.off_target_before) == len(adjusted.off_target_after) == 1
    assert abs(adjusted.off_target_before[0] - adjusted.off_target_after[0]) \
        < 1e-6


def test_adjuster_preserves_return_time(adjusted):
    sec = make_cross_section(SKEW, E3, np.array([1.0, 0.0, 0.0]))
    T_y, _ = return_time_map(SKEW, E3, sec, sec.anchor, horizon=10.0,
                             with_gradient=False)
    T_z, _ = return_time_map(adjusted.field, E3, sec, sec.anchor, horizon=10.0,
                             with_gradient=False)
    assert abs(T_y - T_z) < 1e-8


def test_adjuster_bitwise_outside(adjusted):
    Z = adjusted.field
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(300):
        x = rng.uniform(-3, 3, size=3)
        if project(Z.box, x) is OUTSIDE:
            assert np.array_equal(Z.value(x), SKEW.value(x))
            checked += 1
    assert checked > 100


def test_adjuster_window_rejection(skew_setup):
    orbit, _ = skew_setup
    skew_low, man = catalog_field("linear_skew_mu", mu=0.3)
    rep = section_monodromy(skew_low, man, np.array([1.0, 0.0, 0.0]),
                            0.0, 2 * math.pi)
    with pytest.raises(WindowTooWide):
        eigenvalue_adjuster(skew_low, man, orbit, rep,
                            np.array([0.0, 0.0, 1.0]), make_bump(0.35, order=2),
                            delta_win=0.5)


# --------------------------------------------------------------------------
# gronwall_check
# --------------------------------------------------------------------------

def test_gronwall_linear_saturates():
    spec = parse_field("[1.5*x]", 1)
    from orbitclose.geometry import Euclidean as E
    rep = gronwall_check(spec, E(1), np.array([1.0]), np.array([1.001]), 2.0)
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-6)
    assert rep.passed


def test_gronwall_rotation():
    rep = gronwall_check(ROT, E2, np.array([1.0, 0.0]), np.array([1.0, 1e-3]),
                         5.0)
    # distances constant, bound decays the ratio; max at t = 0
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-9)
    assert rep.t_worst == 0.0


def test_gronwall_lorenz_pairs():
    rng = np.random.default_rng(1)
    base = integrate(LORENZ, E3, [1.0, 1.0, 1.0], (0.0, 40.0))
    for _ in range(10):
        t = rng.uniform(5.0, 35.0)
        p = base(t)
        w = p + rng.normal(size=3) * 1e-4
        rep = gronwall_check(LORENZ, E3, p, w, 3.0)
        assert rep.max_ratio <= 1.01


# --------------------------------------------------------------------------
# splitting_continuity
# --------------------------------------------------------------------------

def _closed_orbit_from(field, man, x0, alpha_max=0.5, horizon=15.0):
    events = find_returns(field, man, x0, alpha_max=alpha_max, horizon=horizon,
                          t_min_filter=3.0)
    assert events
    ev = events[0]
    traj = integrate(field, man, ev.x0, (0.0, ev.T), rtol=1e-11, atol=1e-11)
    return hermite_close(traj, ev, 2)


def test_splitting_continuity_limit_cycle():
    omega = np.array([1.0, 0.0])
    family = []
    for d in (1e-2, 1e-3, 1e-4):
        family.append(_closed_orbit_from(LC, E2, np.array([1.0 + d, 0.0])))
    rep = splitting_continuity(LC, E2, family, omega, epsilon=0.2,
                               segments=8, rtol=1e-9, atol=1e-9)
    assert len(rep.principal_angles) == 2
    assert rep.monotone
    assert rep.principal_angles[-1] <= rep.principal_angles[0] + 1e-12


def test_splitting_continuity_identical():
    orbit = _closed_orbit_from(LC, E2, np.array([1.001, 0.0]))
    rep = splitting_continuity(LC, E2, [orbit, orbit, orbit],
                               np.array([1.0, 0.0]), epsilon=0.2,
                               segments=8, rtol=1e-9, atol=1e-9)
    assert all(a <= 1e-10 for a in rep.principal_angles)


def test_splitting_continuity_needs_three():
    from orbitclose.errors import InsufficientFamily
    orbit = _closed_orbit_from(LC, E2, np.array([1.001, 0.0]))
    with pytest.raises(InsufficientFamily):
        splitting_continuity(LC, E2, [orbit, orbit], np.array([1.0, 0.0]))
