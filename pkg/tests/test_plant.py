import math

import numpy as np
import pytest

from sttube.plant import (
    Disturbance,
    PlantStateError,
    dynamics,
    make_custom_plant,
    make_plant,
    omni_gain_min_eigenvalue,
)
from sttube.scenario import PlantConfig


OMNI = make_plant(PlantConfig(kind="omnidirectional"), scenario_dims=2)
DRONE = make_plant(PlantConfig(kind="drone_chain"), scenario_dims=3)


def test_omni_identity_rotation():
    dx = dynamics(OMNI, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0)
    assert dx == pytest.approx((1.0, 0.0, 0.0), abs=1e-15)


def test_omni_quarter_turn():
    dx = dynamics(OMNI, (0.0, 0.0, math.pi / 2), (1.0, 0.0, 0.0), (0.0,) * 3, 0.0)
    assert dx == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


def test_drone_pure_integrator():
    state = (0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    dx = dynamics(DRONE, state, (0.0, 0.0, 0.0), (0.0,) * 6, 0.0)
    assert dx == (0.0, 0.0, 1.0, 0.0, 0.0, 0.0)


def test_custom_chain_matches_builtin_drone():
    eye = np.eye(3)
    custom = make_custom_plant(
        stages=2,
        dims=3,
        f=[lambda xb: np.zeros(3), lambda xb: np.zeros(3)],
        g=[lambda xb: eye, lambda xb: eye],
    )
    state = (0.5, -0.2, 1.0, 0.1, 0.2, 0.3)
    u = (0.4, -0.5, 0.6)
    w = tuple(np.linspace(-0.01, 0.01, 6))
    assert dynamics(custom, state, u, w, 1.0) == pytest.approx(
        dynamics(DRONE, state, u, w, 1.0), abs=1e-15
    )


def test_nonfinite_state_aborts():
    with pytest.raises(PlantStateError):
        dynamics(OMNI, (float("nan"), 0.0, 0.0), (0.0,) * 3, (0.0,) * 3, 0.0)


def test_gain_min_eigenvalue():
    # symmetric part of the rotation block is diag(cos, cos, 1)
    assert omni_gain_min_eigenvalue(0.0) == 1.0
    assert omni_gain_min_eigenvalue(1.0) == pytest.approx(math.cos(1.0))
    assert omni_gain_min_eigenvalue(math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert omni_gain_min_eigenvalue(2.0) < 0.0
    theta = 0.3
    c, s = math.cos(theta), math.sin(theta)
    g = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    sym = 0.5 * (g + g.T)
    assert np.linalg.eigvalsh(sym).min() == pytest.approx(
        omni_gain_min_eigenvalue(theta), abs=1e-12
    )


@pytest.mark.parametrize("kind", ["zero", "uniform", "sinusoidal"])
def test_disturbance_respects_bound(kind):
    dist = Disturbance(bound=0.01, kind=kind, seed=3)
    sampler = dist.make_sampler(agent=0, size=6)
    for step in range(200):
        w = sampler(step * 1e-3)
        assert all(abs(v) <= 0.01 + 1e-15 for v in w)


def test_disturbance_deterministic_per_agent():
    d = Disturbance(bound=0.01, kind="uniform", seed=5)
    s1 = d.make_sampler(0, 3)
    s2 = Disturbance(bound=0.01, kind="uniform", seed=5).make_sampler(0, 3)
    other = Disturbance(bound=0.01, kind="uniform", seed=5).make_sampler(1, 3)
    a, b, c = s1(0.0), s2(0.0), other(0.0)
    assert a == b
    assert a != c


def test_plant_kind_validation():
    with pytest.raises(ValueError):
        make_plant(PlantConfig(kind="omnidirectional"), scenario_dims=3)
    with pytest.raises(ValueError):
        make_plant(PlantConfig(kind="nonsense"), scenario_dims=2)
