import math

import pytest

from sttube.control import (
    ControllerConfig,
    ControllerIntegrityError,
    Funnel,
    StageTelemetry,
    control_input,
    stage1_error,
    stage_k_error,
    stage_output,
    transform_error,
    xi_matrix,
)

E_MAX = 1.0 - 1e-9


def test_stage1_error_center_and_affine():
    assert stage1_error((0.5,), (0.0,), (1.0,)) == (0.0,)
    assert stage1_error((0.75,), (0.0,), (1.0,)) == (0.5,)


def test_stage1_error_robot_start(robots_table):
    from sttube.tube import eval_face

    dims = robots_table.agents[0].dims
    lower = tuple(eval_face(d.lower, 0.0) for d in dims)
    upper = tuple(eval_face(d.upper, 0.0) for d in dims)
    e = stage1_error((4.75, 0.25), lower, upper)
    assert e == pytest.approx((0.0, 0.0), abs=1e-12)


def test_transform_error_values():
    eps, clamped = transform_error((0.0,), E_MAX)
    assert eps == (0.0,) and clamped == 0
    eps, clamped = transform_error((0.5,), E_MAX)
    assert eps[0] == pytest.approx(math.log(3.0), abs=1e-12)
    assert clamped == 0
    # odd function
    neg, _ = transform_error((-0.5,), E_MAX)
    assert neg[0] == -eps[0]
    # guard engages above e_max, stays finite, and is counted
    eps, clamped = transform_error((0.9999999999,), E_MAX)
    assert clamped == 1 and math.isfinite(eps[0])
    eps, clamped = transform_error((0.999999,), E_MAX)
    assert clamped == 0 and math.isfinite(eps[0])


def test_xi_values():
    assert xi_matrix((0.0,), (0.5,)) == (8.0,)
    assert xi_matrix((0.5,), (1.0,))[0] == pytest.approx(16.0 / 3.0, abs=1e-12)
    with pytest.raises(ControllerIntegrityError):
        xi_matrix((0.0,), (0.0,))


def test_xi_barrier_growth():
    prev = 0.0
    for e in (0.0, 0.5, 0.9, 0.99, 0.999999):
        val = xi_matrix((e,), (1.0,))[0]
        assert val > prev
        prev = val


def test_stage_output_composition():
    eps, _ = transform_error((0.5,), E_MAX)
    xi = xi_matrix((0.5,), (1.0,))
    r = stage_output(1.0, eps, xi)
    assert r[0] == pytest.approx(-5.859, abs=1e-3)
    # negative-definite input gain flips the sign
    r_neg = stage_output(1.0, eps, xi, negative_definite=True)
    assert r_neg[0] == pytest.approx(5.859, abs=1e-3)


def test_funnel_radius_and_stage_k_error():
    funnel = Funnel(p=(1.0,), q=(0.1,), mu=(1.0,))
    radius = funnel.radius(1.0)
    assert radius[0] == pytest.approx(0.9 * math.exp(-1.0) + 0.1, abs=1e-12)
    e = stage_k_error((0.2,), (0.0,), radius)
    assert e[0] == pytest.approx(0.4639, abs=1e-4)
    # at t=0, a gap equal to p sits exactly on the funnel boundary
    e0 = stage_k_error((1.0,), (0.0,), funnel.radius(0.0))
    assert e0[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        Funnel(p=(0.1,), q=(0.2,), mu=(1.0,))


def _single_stage_config():
    return ControllerConfig(kappa=(1.0,), funnels=(), e_max=E_MAX)


def test_control_input_centered_is_zero():
    u = control_input(
        [(0.5, 0.5)], (0.0, 0.0), (1.0, 1.0), _single_stage_config(), t=0.0
    )
    assert u == (0.0, 0.0)


def test_control_input_single_stage_is_first_reference():
    # N = 1: the cascade's first reference IS the plant input
    x = (0.7, 0.4)
    u = control_input([x], (0.0, 0.0), (1.0, 1.0), _single_stage_config(), t=0.0)
    e = stage1_error(x, (0.0, 0.0), (1.0, 1.0))
    eps, _ = transform_error(e, E_MAX)
    xi = xi_matrix(e, (1.0, 1.0))
    assert u == stage_output(1.0, eps, xi)


def test_control_input_odd_symmetry():
    cfg = _single_stage_config()
    u_plus = control_input([(0.75,)], (0.0,), (1.0,), cfg, t=0.0)
    u_minus = control_input([(0.25,)], (0.0,), (1.0,), cfg, t=0.0)
    assert u_plus[0] == pytest.approx(-u_minus[0], abs=1e-12)


def test_control_input_integrity_error_carries_stage():
    cfg = _single_stage_config()
    with pytest.raises(ControllerIntegrityError) as err:
        control_input([(1.5,)], (0.0,), (1.0,), cfg, t=0.0)
    assert err.value.stage == 1
    # non-strict evaluation clamps instead of raising
    tel = StageTelemetry()
    u = control_input([(1.5,)], (0.0,), (1.0,), cfg, t=0.0, strict=False, telemetry=tel)
    assert math.isfinite(u[0]) and tel.clamp_count == 1

    cfg2 = ControllerConfig(
        kappa=(1.0, 1.0), funnels=(Funnel(p=(0.5,), q=(0.1,), mu=(1.0,)),), e_max=E_MAX
    )
    with pytest.raises(ControllerIntegrityError) as err:
        control_input([(0.5,), (99.0,)], (0.0,), (1.0,), cfg2, t=0.0)
    assert err.value.stage == 2


def test_two_stage_cascade_centered():
    cfg = ControllerConfig(
        kappa=(1.0, 1.0), funnels=(Funnel(p=(0.5,), q=(0.1,), mu=(1.0,)),), e_max=E_MAX
    )
    u = control_input([(0.5,), (0.0,)], (0.0,), (1.0,), cfg, t=0.0)
    assert u == (0.0,)


def test_decentralization_byte_identity(robots_table):
    """An agent's input depends only on its own state and tubes: computing
    it with the other agents' data absent gives bit-identical bytes."""
    import struct

    from sttube.tube import TubeSet, eval_face

    cfg = _single_stage_config()
    t = 3.7
    dims = robots_table.agents[1].dims
    lower = tuple(eval_face(d.lower, t) for d in dims)
    upper = tuple(eval_face(d.upper, t) for d in dims)
    x = tuple(0.25 * lo + 0.75 * hi for lo, hi in zip(lower, upper))
    u_full = control_input([x], lower, upper, cfg, t)

    solo = TubeSet(horizon=robots_table.horizon, agents=(robots_table.agents[1],))
    dims_solo = solo.agents[0].dims
    lower_s = tuple(eval_face(d.lower, t) for d in dims_solo)
    upper_s = tuple(eval_face(d.upper, t) for d in dims_solo)
    u_solo = control_input([x], lower_s, upper_s, cfg, t)
    assert struct.pack("<2d", *u_full) == struct.pack("<2d", *u_solo)


def test_config_invariants():
    with pytest.raises(ValueError):
        ControllerConfig(kappa=(0.0,))
    with pytest.raises(ValueError):
        ControllerConfig(kappa=(1.0,), e_max=1.5)
    with pytest.raises(ValueError):
        ControllerConfig(kappa=(1.0, 1.0), funnels=())
