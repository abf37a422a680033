import numpy as np
import pytest

from sttube.sampling import sample_unsafe
from sttube.scenario import scenario_from_dict
from sttube.synth import (
    DisjunctAssignment,
    SolveDiagnostics,
    SynthesisError,
    TubeTemplate,
    build_sop,
    certify,
    composite_lipschitz,
    refine_assignment,
    seed_assignment,
    solve_sop,
    synthesize,
    validate_tubes,
)


# ---------------------------------------------------------------------------
# instance construction


def test_variable_layout_counts(robots_spec):
    samples = sample_unsafe(robots_spec)
    inst = build_sop(robots_spec, samples)
    # robots 1-3 quadratic (3 coefficients), robot 4 cubic (4), two faces
    # per dim, one slack per agent-dim, one global slack
    coeffs = 3 * 2 * 2 * 3 + 1 * 2 * 2 * 4
    assert inst.n_vars == coeffs + 4 * 2 + 1
    off, z = inst.coeff_offset[(3, 0, "lower")]
    assert z == 4


def test_degree_zero_is_a_construction_error(robots_spec):
    samples = sample_unsafe(robots_spec)
    with pytest.raises(SynthesisError, match="higher-degree"):
        build_sop(robots_spec, samples, TubeTemplate.from_spec(robots_spec, 0))


def test_single_agent_instance_has_no_disjunctions():
    spec = scenario_from_dict({
        "dims": 2, "horizon": 2.0, "epsilon": 0.05,
        "arena": [[0.0, 4.0], [0.0, 4.0]],
        "agents": [{"start": [[0.0, 1.0], [0.0, 1.0]], "goal": [[3.0, 4.0], [3.0, 4.0]],
                    "tube_degree": [2, 2]}],
        "obstacles": [],
    })
    samples = sample_unsafe(spec)
    asg = seed_assignment(spec, samples)
    assert not asg.unsafe and not asg.collision
    inst = build_sop(spec, samples)
    tubes, eta = solve_sop(inst, asg)
    # the width family binds: strictly negative optimum
    assert eta < -0.2


# ---------------------------------------------------------------------------
# seeding


def test_seed_picks_clear_dimension(mini_spec):
    samples = sample_unsafe(mini_spec)
    asg = seed_assignment(mini_spec, samples)
    # obstacle sits at the arena center; both agents' straight paths run
    # right through it, so mid-horizon picks are tie-broken / clearance
    # driven, while early samples keep the largest-clearance dimension
    first = asg.unsafe[(0, 0, 0)]
    assert first == (0, "below")  # agent starts left of the box
    # the swap pair separates in dim 1 at t=0, symmetric order
    assert asg.collision[(0, 1, 0)] == (0, "jk")


def test_seed_obstacle_strictly_left_means_above_everywhere():
    spec = scenario_from_dict({
        "dims": 2, "horizon": 2.0, "epsilon": 0.05,
        "arena": [[0.0, 8.0], [0.0, 8.0]],
        "agents": [{"start": [[4.0, 5.0], [0.0, 1.0]], "goal": [[6.0, 7.0], [6.0, 7.0]],
                    "tube_degree": [2, 2]}],
        "obstacles": [{"interpolation": "static",
                       "keyframes": [[0.0, [[0.5, 1.5], [0.5, 1.5]]]]}],
    })
    samples = sample_unsafe(spec)
    asg = seed_assignment(spec, samples)
    assert all(choice == (0, "above") for choice in asg.unsafe.values())


def test_seed_identical_references_tie_break_to_first_dim():
    spec = scenario_from_dict({
        "dims": 2, "horizon": 2.0, "epsilon": 0.05,
        "arena": [[0.0, 8.0], [0.0, 8.0]],
        "agents": [
            {"start": [[0.0, 1.0], [0.0, 1.0]], "goal": [[7.0, 8.0], [7.0, 8.0]],
             "tube_degree": [2, 2]},
            {"start": [[0.0, 1.0], [0.0, 1.0]], "goal": [[7.0, 8.0], [7.0, 8.0]],
             "tube_degree": [2, 2]},
        ],
        "obstacles": [],
    })
    samples = sample_unsafe(spec)
    asg = seed_assignment(spec, samples)
    assert all(key[2] is not None and choice[0] == 0
               for key, choice in asg.collision.items())


# ---------------------------------------------------------------------------
# certification arithmetic


def test_certificate_matches_case_study(robots_table):
    cert = certify(-0.05, robots_table, 0.002)
    assert cert.lipschitz_composite == pytest.approx(7.8174, abs=1e-9)
    assert cert.margin == pytest.approx(-0.05 + 7.8174 * 0.002, abs=1e-12)
    assert cert.passed


def test_certificate_never_passes_nonnegative_eta(robots_table):
    cert = certify(0.0, robots_table, 0.002)
    assert cert.margin > 0 and not cert.passed


def test_composite_bound_small_slopes():
    assert composite_lipschitz(0.4, 0.4) == pytest.approx(1.4)
    assert composite_lipschitz(3.946, 3.871) == pytest.approx(7.817)


# ---------------------------------------------------------------------------
# box-pair separation criterion vs brute force


def _boxes_intersect(a, b):
    return all(al <= bh and bl <= ah for (al, ah), (bl, bh) in zip(a, b))


def _separation_criterion(a, b):
    return any(
        min(ah - bl, bh - al) < 0 for (al, ah), (bl, bh) in zip(a, b)
    )


def test_separation_criterion_matches_brute_force():
    rng = np.random.default_rng(123)
    agree = 0
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        a = [sorted(rng.uniform(0, 4, 2)) for _ in range(n)]
        b = [sorted(rng.uniform(0, 4, 2)) for _ in range(n)]
        assert _separation_criterion(a, b) == (not _boxes_intersect(a, b))
        agree += 1
    assert agree == 1000


# ---------------------------------------------------------------------------
# solving and refinement


def test_contradictory_assignment_cannot_certify(mini_spec):
    """Forcing both orders of the swap pair at nearby samples squeezes the
    pair against the width family: the optimum exceeds zero and no
    certificate is possible."""
    samples = sample_unsafe(mini_spec)
    inst = build_sop(mini_spec, samples)
    asg = seed_assignment(mini_spec, samples)
    n_t = inst.n_t
    bad = asg.copy()
    for (j, k, r_idx) in bad.collision:
        bad.collision[(j, k, r_idx)] = (0, "jk" if r_idx % 2 == 0 else "kj")
    tubes, eta = solve_sop(inst, bad)
    assert eta > 0.0
    assert not certify(eta, tubes, mini_spec.epsilon).passed


def test_mini_synthesis_certifies(mini_result, mini_spec):
    cert = mini_result.certificate
    assert cert.passed and cert.margin <= 0.0
    assert mini_result.validation.all_pass


def test_soundness_chain(mini_result, mini_spec):
    """Certificate passing implies the dense oracle passes at eps/4: the
    sampled-to-robust argument made executable."""
    report = validate_tubes(
        mini_result.tubes, mini_spec,
        resolution=mini_spec.epsilon / 4.0, tolerance=1e-4,
    )
    assert report.all_pass
    # certified families clear zero strictly on the dense grid
    for family in ("width", "unsafe", "collision"):
        assert report.families[family].worst_margin < 0.0


def test_assignment_independent_soundness(mini_spec, mini_result):
    """Any assignment whose optimum certifies yields tubes the oracle
    accepts; witnesses affect optimality, never soundness."""
    samples = sample_unsafe(mini_spec)
    inst = build_sop(mini_spec, samples)
    asg = mini_result.assignment.copy()
    # perturb a few non-binding witnesses away from the converged choice
    for key in list(asg.collision)[:5]:
        i, order = asg.collision[key]
        asg.collision[key] = (i, "kj" if order == "jk" else "jk")
    tubes, eta = solve_sop(inst, asg)
    cert = certify(eta, tubes, mini_spec.epsilon)
    if cert.passed:
        report = validate_tubes(
            tubes, mini_spec, resolution=mini_spec.epsilon / 4.0, tolerance=1e-4
        )
        assert report.all_pass


def test_margin_monotone_in_epsilon(mini_spec):
    from sttube.scenario import scenario_from_dict, scenario_to_dict

    margins = []
    for eps in (0.02, 0.01):
        raw = scenario_to_dict(mini_spec)
        raw["epsilon"] = eps
        res = synthesize(scenario_from_dict(raw))
        margins.append(res.certificate.margin)
    assert margins[1] <= margins[0]


def test_adversarial_seed_recovers(mini_spec):
    """Local search escapes an all-wrong-dimension seed within budget."""
    samples = sample_unsafe(mini_spec)
    inst = build_sop(mini_spec, samples)
    asg = seed_assignment(mini_spec, samples)
    bad = DisjunctAssignment(
        unsafe={k: (1, v[1]) for k, v in asg.unsafe.items()},
        collision={k: (1, v[1]) for k, v in asg.collision.items()},
    )
    warm = ()
    for _ in range(25):
        diag = SolveDiagnostics()
        tubes, eta = solve_sop(inst, bad, diag, warm_keys=warm)
        warm = diag.active_keys
        cert = certify(eta, tubes, mini_spec.epsilon)
        if cert.passed:
            break
        bad = refine_assignment(inst, bad, diag)
    assert cert.passed


# ---------------------------------------------------------------------------
# dense validation oracle


def test_published_tables_validate_at_rounding_tolerance(
    robots_table, robots_spec, drones_table, drones_spec
):
    """All constraint families hold up to the coefficient-rounding bound
    (5e-5 times the sum of horizon powers: 0.056 for the cubic robot
    rows, 0.021 for the quadratic drone rows)."""
    rob = validate_tubes(robots_table, robots_spec, resolution=0.001, tolerance=0.056)
    assert rob.all_pass, rob.summary()
    dro = validate_tubes(drones_table, drones_spec, resolution=0.001, tolerance=0.021)
    assert dro.all_pass, dro.summary()
    # families beyond the endpoint/arena pair already hold at 0.01
    for report in (rob, dro):
        for family in ("width", "unsafe", "collision"):
            assert report.families[family].worst_margin <= 0.01


def test_published_drone_pair_overlap_is_within_rounding(drones_table, drones_spec):
    # the published second and fourth drone tubes brush each other by
    # +0.009, inside the rounding tolerance but not strictly separated
    report = validate_tubes(drones_table, drones_spec, resolution=0.001)
    assert report.families["collision"].worst_margin == pytest.approx(0.0091, abs=2e-3)


def test_validation_catches_swapped_faces(robots_table, robots_spec):
    from sttube.tube import tubes_from_dict, tubes_to_dict

    raw = tubes_to_dict(robots_table)
    a0 = raw["agents"][0]["dims"][0]
    a1 = raw["agents"][1]["dims"][0]
    a0["lower"], a1["lower"] = a1["lower"], a0["lower"]
    a0["upper"], a1["upper"] = a1["upper"], a0["upper"]
    broken = tubes_from_dict(raw)
    report = validate_tubes(broken, robots_spec, resolution=0.01, tolerance=0.056)
    assert not report.families["collision"].passed


def test_robot_synthesis_result(robots_result, robots_spec):
    cert = robots_result.certificate
    assert cert.passed
    # the published scenario solved to -0.05; ours must reach at least -0.03
    assert cert.eta_star <= -0.03
    assert robots_result.validation.all_pass
    assert robots_result.wall_time < 300.0
