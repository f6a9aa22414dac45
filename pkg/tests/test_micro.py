import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from replicator_swarm.core import build_payoff_example1, build_payoff_example2, replicator_rhs
from replicator_swarm.errors import DegeneratePopulationError, ParameterError
from replicator_swarm.micro import (
    AgentState,
    InteractionRules,
    MicroConfig,
    World,
    _Estimator,
    estimate_populations,
    init_world,
    interaction_radius,
    interaction_radius_controlled,
    run_micro,
    step_world,
)
from replicator_swarm.odeint import integrate
from replicator_swarm.rng import trial_rng
from replicator_swarm.spatial import pairs_bruteforce, pairs_grid

from conftest import EX1

ALPHA_FIG3 = np.zeros((3, 3))
ALPHA_FIG3[1, 0], ALPHA_FIG3[1, 2], ALPHA_FIG3[2, 0], ALPHA_FIG3[2, 1] = 2.0, 0.2, 1.5, 0.4


def two_task_rules(rate=1.0, **kw):
    k = np.array([[0.0, rate], [0.0, 0.0]])
    kw.setdefault("relative_speed", 2.0)
    kw.setdefault("guard", False)
    return InteractionRules(k=k, **kw)


def world(positions, tasks, rules, speeds=0.0, size=(18.0, 18.0), mode="centralized",
          radius=math.inf, headings=None):
    n = len(tasks)
    return World(size[0], size[1], np.array(positions, float),
                 np.zeros(n) if headings is None else np.array(headings, float),
                 speeds, np.array(tasks), radius, rules, mode)


def ref1(t_end=100.0):
    k = build_payoff_example1(**EX1)
    return integrate(lambda t, y: replicator_rhs(k, y), [0.2, 0.2, 0.6], 0.01, t_end)


# ---- radii -------------------------------------------------------------------------

def test_radius_value():
    r = interaction_radius(324.0, 0.01, 2.0, 5, 10)
    assert r == pytest.approx(math.sqrt(0.0324 / math.pi))
    assert r == pytest.approx(0.10155, abs=1e-5)


def test_radius_zero_rate_and_homogeneity():
    assert interaction_radius(324.0, 0.0, 2.0, 5, 10) == 0.0
    r1 = interaction_radius(100.0, 0.3, 2.0, 4, 7)
    r2 = interaction_radius(200.0, 0.3, 2.0, 4, 7)
    assert r2 / r1 == pytest.approx(math.sqrt(2))


def test_radius_cap():
    assert interaction_radius(324.0, 100.0, 2.0, 1, 1, cap=9.0) == 9.0


@pytest.mark.parametrize("v,ni,nj", [(0.0, 1, 1), (2.0, 0, 1), (2.0, 1, 0)])
def test_radius_degenerate_inputs(v, ni, nj):
    with pytest.raises(DegeneratePopulationError):
        interaction_radius(324.0, 0.1, v, ni, nj)


def test_controlled_radius_examples():
    assert interaction_radius_controlled(324.0, 0.5, 10, 10, 5, 2.0) == (0.0, 1)
    r4, _ = interaction_radius_controlled(324.0, 0.5, 14, 10, 5, 2.0)
    r2, _ = interaction_radius_controlled(324.0, 0.5, 12, 10, 5, 2.0)
    assert r4 / r2 == pytest.approx(math.sqrt(2))
    r_neg, direction = interaction_radius_controlled(324.0, 0.5, 6, 10, 5, 2.0)
    assert direction == -1 and r_neg == pytest.approx(r4)
    with pytest.raises(DegeneratePopulationError):
        interaction_radius_controlled(324.0, 0.5, 6, 10, 0, 2.0)


@given(st.floats(0.01, 5), st.floats(0, 50), st.floats(0, 50), st.integers(1, 50))
def test_controlled_radius_monotone_in_error(alpha, e1, e2, nj):
    lo, hi = sorted((e1, e2))
    r_lo, _ = interaction_radius_controlled(324.0, alpha, 10 + lo, 10, nj, 2.0)
    r_hi, _ = interaction_radius_controlled(324.0, alpha, 10 + hi, 10, nj, 2.0)
    assert r_hi >= r_lo


# ---- estimation -----------------------------------------------------------------------

def test_local_estimate_counts_self_and_neighbours():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    w = world([[5, 5], [5.5, 5], [5, 5.5], [6, 6], [15, 15]], [0, 1, 1, 2, 2], rules,
              mode="distributed", radius=2.0)
    np.testing.assert_array_equal(estimate_populations(0, w), [1, 2, 1])
    np.testing.assert_array_equal(estimate_populations(w.agents[4], w), [0, 0, 1])


def test_large_radius_equals_global_counts():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, 18, size=(30, 2))
    tasks = rng.integers(0, 3, 30)
    w = world(pos, tasks, rules, mode="distributed", radius=18 * math.sqrt(2))
    for i in range(30):
        np.testing.assert_array_equal(estimate_populations(i, w), w.counts())
    est = _Estimator(w)
    np.testing.assert_array_equal(est.local, np.tile(w.counts(), (30, 1)))


def test_tiny_radius_sees_only_self():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    w = world([[1, 1], [3, 3], [5, 5]], [0, 1, 2], rules, mode="distributed", radius=0.1)
    np.testing.assert_array_equal(estimate_populations(1, w), [0, 1, 0])


@given(st.integers(0, 10_000), st.floats(0.5, 8.0))
def test_incremental_local_counts_match_recount(seed, radius):
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    rng = np.random.default_rng(seed)
    w = world(rng.uniform(0, 18, (25, 2)), rng.integers(0, 3, 25), rules,
              mode="distributed", radius=radius)
    est = _Estimator(w)
    for agent in rng.integers(0, 25, 5):
        old, new = int(w.tasks[agent]), int((w.tasks[agent] + 1) % 3)
        w.tasks[agent] = new
        est.apply_switch(agent, old, new)
    for i in range(25):
        np.testing.assert_array_equal(est.local[i], estimate_populations(i, w))


# ---- stepping -----------------------------------------------------------------------------

def test_pair_inside_radius_switches_once():
    rules = two_task_rules(rate=1.0)
    r = interaction_radius(324.0, 1.0, 2.0, 1, 1, cap=9.0)
    w = world([[5, 5], [5 + 0.5 * r, 5]], [0, 1], rules)
    log = []
    w2 = step_world(w, 0.05, encounters=log)
    assert len(log) == 1
    # k[0,1] > 0: the task-1 agent becomes task 0
    np.testing.assert_array_equal(w2.tasks, [0, 0])
    assert log[0][3] == 1 and log[0][4:] == (1, 0)


def test_pair_outside_radius_does_nothing():
    rules = two_task_rules(rate=0.01)
    r = interaction_radius(324.0, 0.01, 2.0, 1, 1)
    w = world([[5, 5], [5 + 1.1 * r, 5]], [0, 1], rules)
    w2 = step_world(w, 0.05)
    np.testing.assert_array_equal(w2.tasks, [0, 1])


def test_zero_rate_never_switches():
    rules = two_task_rules(rate=0.0)
    w = world([[5, 5], [5, 5]], [0, 1], rules)
    assert np.array_equal(step_world(w, 0.05).tasks, [0, 1])


def test_refractory_until_separation():
    rules = two_task_rules(rate=1.0)
    w = world([[5, 5], [5.1, 5]], [0, 1], rules)
    w = step_world(w, 0.05)
    assert w.refractory_pairs == {(0, 1)}
    # someone else flips agent 1 back while the pair is still touching
    w.tasks[1] = 1
    log = []
    w = step_world(w, 0.05, encounters=log)
    assert log == [] and np.array_equal(w.tasks, [0, 1])
    w.positions[1] = [15.0, 15.0]
    w = step_world(w, 0.05)
    assert w.refractory_pairs == set()
    w.positions[1] = [5.1, 5.0]
    w = step_world(w, 0.05, encounters=log)
    assert len(log) == 1


def test_guard_skips_switch_that_empties_a_task():
    rules = two_task_rules(rate=1.0, guard=True)
    w = world([[5, 5], [5.1, 5]], [0, 1], rules)
    log = []
    w2 = step_world(w, 0.05, encounters=log)
    assert log == [] and np.array_equal(w2.tasks, [0, 1])
    assert w2.refractory_pairs == {(0, 1)}  # the encounter still happened


def test_initiator_estimate_governs_distributed_switch():
    # agent 0 sees only itself and agent 1; agent 1 also sees agents 2, 3
    # small gain: radius ~0.72 reaches the partner at 0.3 but not agents 2, 3
    alpha = np.array([[0.0, 0.01], [0.0, 0.0]])
    rules = InteractionRules(k=np.zeros((2, 2)), alpha=alpha, relative_speed=2.0, guard=False)
    pos = [[5, 5], [5.3, 5], [7, 5], [7.2, 5]]
    radius = [0.5, 3.0, 0.1, 0.1]
    w = world(pos, [0, 1, 0, 0], rules, mode="distributed", radius=radius)
    ref = integrate(lambda t, y: np.zeros(2), [0.5, 0.5], 0.05, 1.0)
    # initiator 0: counts [1, 1], target 0.5*2 = 1 -> zero error, no switch
    assert np.array_equal(step_world(w, 0.05, ref).tasks, [0, 1, 0, 0])
    # swap ids so the well-informed agent initiates: counts [3, 1] -> task 0 over target
    w = world([pos[1], pos[0], pos[2], pos[3]], [1, 0, 0, 0], rules, mode="distributed",
              radius=[radius[1], radius[0], 0.1, 0.1])
    log = []
    w2 = step_world(w, 0.05, ref, encounters=log)
    assert len(log) == 1 and np.array_equal(w2.tasks, [1, 1, 0, 0])


def test_boundary_rotates_heading_inward():
    rules = two_task_rules()
    w = world([[17.99, 9.0], [1.0, 1.0]], [0, 1], rules, speeds=1.0, headings=[0.3, math.pi / 4])
    w2 = step_world(w, 0.05)
    assert w2.positions[0, 0] == 18.0
    assert w2.headings[0] == pytest.approx(0.3 + math.pi / 2)


def test_heading_parallel_to_wall_is_not_inward():
    # +pi/2 from a head-on hit runs along the wall, so a second turn is needed
    rules = two_task_rules()
    w = world([[17.99, 9.0], [1.0, 1.0]], [0, 1], rules, speeds=1.0, headings=[0.0, math.pi / 4])
    w2 = step_world(w, 0.05)
    assert w2.headings[0] == pytest.approx(math.pi)


def test_corner_falls_back_to_centre():
    rules = two_task_rules()
    w = world([[17.99, 17.99], [1.0, 1.0]], [0, 1], rules, speeds=1.0,
              headings=[math.pi / 4, 0.0])
    w2 = step_world(w, 0.05)
    h = w2.headings[0]
    assert np.cos(h) < 0 and np.sin(h) < 0


def test_specular_boundary():
    rules = two_task_rules(boundary="specular")
    w = world([[17.99, 9.0], [1.0, 1.0]], [0, 1], rules, speeds=1.0, headings=[0.3, 0.0])
    w2 = step_world(w, 0.05)
    assert w2.headings[0] == pytest.approx(math.pi - 0.3)


@given(st.integers(0, 2**32), st.sampled_from(["rotate", "specular"]))
def test_agents_stay_in_arena(seed, boundary):
    rules = InteractionRules(k=build_payoff_example2(0.05, 0.5).entries, boundary=boundary)
    cfg = MicroConfig([3, 3, 3, 3], rules, arena=(4.0, 2.0), speed=3.0, dt=0.1, t_end=3.0,
                      snapshot_every=1)
    res = run_micro(cfg, seed)
    snaps = np.array(res.snapshots)
    assert np.all((snaps[:, 2] >= 0) & (snaps[:, 2] <= 4.0))
    assert np.all((snaps[:, 3] >= 0) & (snaps[:, 3] <= 2.0))


# ---- pair search ----------------------------------------------------------------------------

@given(st.integers(0, 2**32), st.integers(0, 120), st.floats(0.05, 6.0))
def test_grid_search_matches_bruteforce(seed, n, radius):
    pos = np.random.default_rng(seed).uniform(0, 1, (n, 2)) * [18.0, 11.0]
    a1, b1, d1 = pairs_bruteforce(pos, radius)
    a2, b2, d2 = pairs_grid(pos, radius, 18.0, 11.0)
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)
    np.testing.assert_allclose(d1, d2)


def test_grid_and_brute_runs_identical():
    base = dict(k=build_payoff_example2(0.05, 0.5).entries, alpha=None)
    out = []
    for how in ("brute", "grid"):
        cfg = MicroConfig([5, 10, 20, 15], InteractionRules(**base, neighbor_search=how), t_end=10.0)
        out.append(run_micro(cfg, 4))
    assert out[0].encounters == out[1].encounters


# ---- full runs -----------------------------------------------------------------------------------

def test_init_rejects_more_tasks_than_agents():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    with pytest.raises(ParameterError):
        init_world(MicroConfig([1, 1, 0], rules), 0)


def test_init_positions_and_blocks():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries)
    w = init_world(MicroConfig([2, 3, 4], rules), 0)
    np.testing.assert_array_equal(w.tasks, [0, 0, 1, 1, 1, 2, 2, 2, 2])
    assert np.all((w.positions >= 0) & (w.positions <= 18))


def test_conservation_and_floor():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries, alpha=ALPHA_FIG3)
    res = run_micro(MicroConfig([2, 25, 25], rules, reference=ref1(), t_end=40.0), trial_rng(3, 0))
    assert np.all(res.counts.sum(axis=1) == 52)
    assert res.counts.min() >= 1


def test_stationary_agents_never_meet():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries, alpha=ALPHA_FIG3)
    res = run_micro(MicroConfig([2, 25, 25], rules, reference=ref1(), speed=0.0, t_end=5.0), 1)
    assert res.encounters == []
    assert np.all(res.counts == [2, 25, 25])


def test_same_seed_same_run():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries, alpha=ALPHA_FIG3)
    cfg = MicroConfig([2, 25, 25], rules, reference=ref1(), t_end=20.0, mode="distributed",
                      sensing_radius=5.0)
    a, b = run_micro(cfg, trial_rng(9, 2)), run_micro(cfg, trial_rng(9, 2))
    assert a.encounters == b.encounters
    assert np.array_equal(a.counts, b.counts)


def test_full_sensing_radius_matches_centralized():
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries, alpha=ALPHA_FIG3)
    base = dict(counts0=[2, 25, 25], rules=rules, reference=ref1(), t_end=30.0)
    cen = run_micro(MicroConfig(**base), trial_rng(5, 0))
    dis = run_micro(MicroConfig(**base, mode="distributed", sensing_radius=18 * math.sqrt(2)),
                    trial_rng(5, 0))
    assert cen.encounters == dis.encounters
    assert len(cen.encounters) > 0


def test_centralized_control_tracks_reference():
    ref = ref1()
    rules = InteractionRules(k=build_payoff_example1(**EX1).entries, alpha=ALPHA_FIG3)
    res = run_micro(MicroConfig([2, 25, 25], rules, reference=ref), trial_rng(0, 0))
    y = res.trajectory.states
    target = ref.states[np.searchsorted(ref.times, res.trajectory.times - 1e-9)]
    assert np.sqrt(np.mean((y - target) ** 2)) < 0.05


def test_agent_state_view():
    rules = two_task_rules()
    w = world([[1, 2], [3, 4]], [0, 1], rules, speeds=[1.0, 2.0], headings=[0.5, 1.5])
    a = w.agents[1]
    assert isinstance(a, AgentState)
    assert (a.id, a.x, a.y, a.heading, a.speed, a.task) == (1, 3.0, 4.0, 1.5, 2.0, 1)
