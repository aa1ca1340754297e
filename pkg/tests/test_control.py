import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evavoid.clustering import ObjectEstimate
from evavoid.control import (DEFAULT_LIMITS, ControlCommand, ControllerGains, RiskMode,
                             SafetyGeometry, SurrogateDynamics, clamp_deflections,
                             collision_limits, estimate_depth, evaluate_risk, reactive_command,
                             refine_with_model)
from evavoid.detection import RobotKinematicState
from oracles import QuadDyn, dense_argmax

LAM = 256.5
DEG = math.radians(1)
STATE = RobotKinematicState(v_z=4.5)


def obs(psi=0.0, theta=0.0, L=40.0, v=(0.0, 0.0)):
    return ObjectEstimate(0, 0.0, 0.0, v[0], v[1], L, psi, theta, 10)


class LinearDyn:
    def __init__(self, gx=0.0, gy=0.0):
        self.g = (gx, gy)

    def acceleration(self, state, u):
        u = np.asarray(u, float)
        a = np.stack([self.g[0] * u[..., 0], self.g[1] * u[..., 1], np.zeros(u.shape[:-1])], -1)
        return a


# -- depth and collision cone -----------------------------------------------

def test_depth_examples():
    assert estimate_depth(50, 0.375, 300) == pytest.approx(2.25)
    assert estimate_depth(300, 0.375, 300) == pytest.approx(0.375)
    assert estimate_depth(600, 0.375, 300) == pytest.approx(estimate_depth(300, 0.375, 300) / 2)
    assert estimate_depth(0, 0.375, 300) is None


def test_collision_limit_example():
    geom = SafetyGeometry(W=0.75, R=0.3, b=0.2)
    psi_s, theta_s = collision_limits(5.0, geom)
    assert math.degrees(psi_s) == pytest.approx(23.63, abs=0.005)
    assert psi_s == pytest.approx(math.atan(1.75 / 4))
    assert theta_s == pytest.approx(math.atan((0.25 + 1.0) / 4))


def test_collision_limits_vanish_far_away():
    assert max(collision_limits(1e9, SafetyGeometry())) < 1e-8


def test_immediate_risk_at_two_r_prime():
    geom = SafetyGeometry()
    assert collision_limits(2 * geom.R_prime, geom) is None
    r = evaluate_risk(obs(psi=1.0), RiskMode.DEPTH_AND_RADIUS_KNOWN, geom, LAM, z_measured=0.5)
    assert r.risk


@settings(max_examples=500)
@given(st.floats(0.05, 2.0), st.floats(0.01, 1.0), st.floats(0.01, 50), st.floats(1e-3, 10))
def test_cone_monotone(R, b, margin, dz):
    g = SafetyGeometry(R=R, b=b)
    z = 2 * g.R_prime + margin
    near, far = collision_limits(z, g), collision_limits(z + dz, g)
    assert far[0] < near[0] and far[1] < near[1]
    g2 = SafetyGeometry(R=R + 0.01, b=b)
    if z > 2 * g2.R_prime:
        wide = collision_limits(z, g2)
        assert wide[0] > near[0] and wide[1] > near[1]


def test_geometry_validation():
    with pytest.raises(ValueError):
        SafetyGeometry(W=-1)
    assert SafetyGeometry(R=0.3, b=0.2).R_prime == pytest.approx(0.5)


# -- risk predicate ---------------------------------------------------------

def test_unknown_mode_always_risk():
    assert evaluate_risk(obs(psi=1.2, theta=-1.0), RiskMode.UNKNOWN, SafetyGeometry(), LAM).risk


def test_head_on_is_risk():
    assert evaluate_risk(obs(), RiskMode.RADIUS_KNOWN, SafetyGeometry(), LAM).risk


def test_outside_gate_is_clear():
    g = SafetyGeometry()
    psi_s, _ = collision_limits(4.0, g)
    r = evaluate_risk(obs(psi=2 * psi_s), RiskMode.DEPTH_AND_RADIUS_KNOWN, g, LAM, z_measured=4.0)
    assert not r.risk


def test_missing_depth_is_config_error():
    with pytest.raises(ValueError):
        evaluate_risk(obs(), RiskMode.DEPTH_AND_RADIUS_KNOWN, SafetyGeometry(), LAM)


def test_radius_mode_uses_apparent_size():
    g = SafetyGeometry()
    r = evaluate_risk(obs(L=LAM * g.R / 3.0), "radius_known", g, LAM)
    assert r.z == pytest.approx(3.0)


def test_zero_extent_gives_no_risk():
    r = evaluate_risk(obs(L=0.0), RiskMode.RADIUS_KNOWN, SafetyGeometry(), LAM)
    assert not r.risk and r.z == math.inf


@settings(max_examples=300)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(1.3, 20),
       st.sampled_from(list(RiskMode)))
def test_risk_sign_symmetric(psi, theta, z, mode):
    g = SafetyGeometry()
    base = evaluate_risk(obs(psi, theta), mode, g, LAM, z_measured=z).risk
    for sp, st_ in ((-1, 1), (1, -1), (-1, -1)):
        assert evaluate_risk(obs(sp * psi, st_ * theta), mode, g, LAM, z_measured=z).risk == base


# -- reactive law -----------------------------------------------------------

def test_zero_flow_zero_command():
    assert reactive_command((0, 0)) == (0.0, 0.0)


def test_pure_proportional():
    k = 0.02
    u = reactive_command((1, 0), ControllerGains(kappa0=(k, k), kappa1=(0, 0)))
    assert u == pytest.approx((-k, 0.0))


def test_hand_evaluated_law():
    g = ControllerGains(kappa0=(0.01, 0.01), kappa1=(1e-4, 1e-4))
    k = 0.01 + 1e-4 * math.sqrt(100 ** 2 + 50 ** 2)
    u = reactive_command((100, -50), g)
    assert u == pytest.approx((-100 * k, 50 * k), rel=1e-12)
    assert u.delta_e < 0 < u.delta_r


def test_default_gains_saturate_at_500_px_s():
    u = reactive_command((500, 0))
    assert u.delta_e == pytest.approx(-math.radians(30))


@settings(max_examples=300)
@given(st.floats(-3000, 3000), st.floats(-3000, 3000), st.floats(1.0, 3.0))
def test_sign_opposition_and_growth(vx, vy, scale):
    u = reactive_command((vx, vy))
    for ui, vi in zip(u, (vx, vy)):
        assert ui * vi <= 0
        if abs(vi) > 1e-150:   # below this the product underflows to zero
            assert np.sign(ui) == -np.sign(vi)
    assert math.hypot(*reactive_command((scale * vx, scale * vy))) >= math.hypot(*u) - 1e-12


def test_gains_non_negative():
    with pytest.raises(ValueError):
        ControllerGains(kappa0=(-1, 0))


# -- model refinement -------------------------------------------------------

def test_constant_model_keeps_reactive():
    dyn = LinearDyn(0.0, 0.0)
    u = ControlCommand(0.1, -0.05)
    assert refine_with_model(u, STATE, dyn) == pytest.approx(u)


def test_increasing_model_goes_to_upper_edge():
    dyn = LinearDyn(3.0, 0.0)
    u = refine_with_model(ControlCommand(0.1, 0.0), STATE, dyn)
    assert u.delta_e == pytest.approx(0.1 + 10 * DEG)
    assert u.delta_r == pytest.approx(0.0)


def test_step_must_divide_span():
    with pytest.raises(ValueError):
        refine_with_model(ControlCommand(0, 0), STATE, LinearDyn(1, 1), grid_step=math.radians(3))


@settings(max_examples=100)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2),
       st.floats(0.5, 4.0), st.floats(0.5, 4.0), st.floats(-0.5, 0.5))
def test_refine_matches_dense_grid(be, br, ce, cr, ke, kr, cross):
    base = ControlCommand(be, br)
    dyn = QuadDyn((be + ce, br + cr), (ke, kr), cross * math.sqrt(ke * kr))
    u = refine_with_model(base, STATE, dyn, direction=(1.0, 0.0))
    got = np.array([u.delta_e - be, u.delta_r - br])
    ref = dense_argmax(dyn, STATE, base, 10 * DEG)
    assert np.all(np.abs(got - ref) <= 2 * DEG + 1e-12)
    assert np.all(np.abs(got) <= 10 * DEG + 1e-12)


def test_default_surrogate_loads_and_is_linear():
    dyn = SurrogateDynamics.default()
    assert dyn.A.shape == (3, 6) and dyn.B.shape == (3, 2)
    u = np.array([[0.1, 0.0], [0.0, 0.1], [0.1, 0.1]])
    a = dyn.acceleration(STATE, u)
    np.testing.assert_allclose(a[2] - a[0], a[1] - dyn.acceleration(STATE, np.zeros(2)), atol=1e-12)


def test_surrogate_file_round_trip(tmp_path):
    dyn = SurrogateDynamics(np.arange(18).reshape(3, 6) * 0.1, [[1, 2], [3, 4], [5, 6]], [0, 1, 2])
    dyn.to_file(tmp_path / "d.txt")
    back = SurrogateDynamics.from_file(tmp_path / "d.txt")
    np.testing.assert_allclose(back.A, dyn.A)
    np.testing.assert_allclose(back.B, dyn.B)
    np.testing.assert_allclose(back.c, dyn.c)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(ValueError):
        SurrogateDynamics.from_file(tmp_path / "bad.txt")


# -- clamp ------------------------------------------------------------------

def test_clamp_examples():
    lim = DEFAULT_LIMITS
    assert clamp_deflections(ControlCommand(0.1, -0.1), lim) == (0.1, -0.1)
    assert clamp_deflections(ControlCommand(2.0, 0.0), lim).delta_e == lim[0][1]
    assert clamp_deflections(ControlCommand(-2.0, -2.0), lim) == (lim[0][0], lim[1][0])


def test_clamp_rejects_empty_interval():
    with pytest.raises(ValueError):
        clamp_deflections(ControlCommand(0, 0), ((1, -1), (0, 0)))


@settings(max_examples=300)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 1), st.floats(0.01, 1))
def test_clamped_within_limits(e, r, a, b):
    lim = ((-a, a), (-b, b))
    u = clamp_deflections(ControlCommand(e, r), lim)
    assert -a <= u.delta_e <= a and -b <= u.delta_r <= b
