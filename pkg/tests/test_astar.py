import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilkit import ad
from ilkit.astar import (
    LN2,
    GridPlanInstance,
    IAStarConfig,
    MapFormatError,
    astar_classic,
    compose_heuristic,
    diff_astar_forward,
    dijkstra,
    format_map,
    heuristic_field,
    heuristic_net_forward,
    init_heuristic_net,
    load_map,
    metric_exp_rt,
    optimal_path,
    parse_map,
    path_cost,
    random_instance,
    save_map,
    search_area_cost,
    train_iastar,
    ul_cost,
    ul_step_grad,
)
from ilkit.rng import make_rng


def empty(h, w, start, goal):
    return GridPlanInstance(np.zeros((h, w)), start, goal)


def unique_optimum(inst):
    """True when exactly one shortest path exists (counted via Dijkstra layers)."""
    ds, dg = dijkstra(inst), dijkstra(inst, inst.goal)
    best = ds[inst.goal]
    on = np.isclose(ds + dg, best, atol=1e-9)
    return int(on.sum()) == len(optimal_path(inst, dg))


# -- classic planner ----------------------------------------------------------


def test_empty_3x3_diagonal():
    res = astar_classic(empty(3, 3, (0, 0), (2, 2)))
    assert res.path_cost == pytest.approx(2 * math.sqrt(2), abs=1e-15)
    assert res.path == [(0, 0), (1, 1), (2, 2)]


def test_straight_corridor():
    inst = parse_map("#######\n#S...G#\n#######\n")
    res = astar_classic(inst)
    assert res.path_cost == 4.0
    corridor = inst.free
    assert np.all(res.explored[~corridor] == 0)


def test_walled_goal_has_no_path():
    inst = parse_map("S....\n..###\n..#G#\n..###\n")
    res = astar_classic(inst)
    assert res.path is None and not res.found and math.isinf(res.path_cost)


def test_astar_zero_heuristic_matches_dijkstra_on_random_maps():
    rng = make_rng(11)
    for _ in range(200):
        inst = random_instance(rng, 16)
        opt = dijkstra(inst)[inst.goal]
        res = astar_classic(inst)
        assert res.path_cost == opt
        assert path_cost(res.path) == res.path_cost


def test_euclidean_heuristic_is_admissible_on_random_maps():
    rng = make_rng(12)
    for _ in range(200):
        inst = random_instance(rng, 16)
        assert astar_classic(inst, inst.euclidean()).path_cost == dijkstra(inst)[inst.goal]


def test_path_is_connected_through_free_cells():
    inst = random_instance(make_rng(3), 24)
    path = astar_classic(inst, inst.euclidean()).path
    assert path[0] == inst.start and path[-1] == inst.goal
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        assert max(abs(r0 - r1), abs(c0 - c1)) == 1
        assert inst.free[r1, c1]


# -- differentiable planner ---------------------------------------------------


def test_soft_planner_3x3_matches_classic():
    inst = empty(3, 3, (0, 0), (2, 2))
    soft = diff_astar_forward(inst, inst.euclidean(), temperature=1e-3)
    assert soft.path == astar_classic(inst, inst.euclidean()).path


def test_soft_to_hard_consistency_on_unique_optimum_maps():
    rng = make_rng(21)
    checked = 0
    while checked < 50:
        inst = random_instance(rng, 12, min_dist=6)
        if not unique_optimum(inst):
            continue
        soft = diff_astar_forward(inst, inst.euclidean(), temperature=1e-3)
        hard = astar_classic(inst, inst.euclidean())
        assert abs(soft.path_cost - hard.path_cost) <= 1e-9
        np.testing.assert_array_equal(soft.explored.numpy(), hard.explored)
        checked += 1


def test_corridor_field_limits_exploration_to_path():
    inst = empty(8, 8, (0, 0), (7, 7))
    path = optimal_path(inst)
    h = np.full(inst.shape, 1e6)
    for k, cell in enumerate(path):
        h[cell] = path_cost(path[k:])
    res = diff_astar_forward(inst, h)
    assert res.explored_count == len(path)


def test_high_temperature_selection_is_uniform_at_first_expansion():
    inst = empty(5, 5, (2, 2), (0, 0))
    tape = ad.Tape()
    h = tape.variable(np.zeros(inst.shape))
    res = diff_astar_forward(inst, h, temperature=1e12, max_iters=2)
    # gradient of the second selection w.r.t. h is -p(1-p)/tau at each open cell: all equal
    g = ad.gradient(ad.tsum(res.explored * ad.constant(np.arange(25.0).reshape(5, 5))), [h])[0].numpy()
    ring = g[1:4, 1:4].copy()
    ring[1, 1] = ring[0, 0]
    assert np.allclose(ring, ring[0, 0], rtol=1e-6)


def test_budget_exhaustion_is_flagged():
    inst = empty(10, 10, (0, 0), (9, 9))
    res = diff_astar_forward(inst, None, max_iters=3)
    assert res.flagged and res.path is None and res.iterations == 3


def test_nonpositive_temperature_rejected():
    with pytest.raises(ValueError):
        diff_astar_forward(empty(3, 3, (0, 0), (2, 2)), None, temperature=0.0)


# -- network ------------------------------------------------------------------


def test_zero_net_gives_ln2_field():
    inst = random_instance(make_rng(0), 16)
    field = heuristic_field(init_heuristic_net(None).values(), inst)
    np.testing.assert_allclose(field, LN2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(compose_heuristic(inst.euclidean(), field), inst.euclidean(), atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_field_is_nonnegative_for_any_weights(seed):
    rng = np.random.default_rng(seed)
    params = init_heuristic_net(rng).values()
    params = {k: v + 3.0 * rng.normal(size=v.shape) for k, v in params.items()}
    assert heuristic_field(params, random_instance(rng, 12)).min() >= 0.0


def test_net_forward_gradient_matches_finite_difference():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 8, min_dist=4)
    store = init_heuristic_net(rng, width=4)
    store.assign({k: v + 0.1 * rng.normal(size=v.shape) for k, v in store.values().items()})
    w = rng.normal(size=inst.shape)
    name = "conv0.nbr"
    tape = ad.Tape()
    bound = store.bind(tape)
    out = ad.tsum(heuristic_net_forward(bound, inst) * ad.constant(w))
    g = ad.gradient(out, [bound[name]])[0].numpy()
    base = store.values()
    eps = 1e-6
    for idx in [(0, 0), (3, 2), (5, 1)]:
        hi, lo = dict(base), dict(base)
        hi[name] = base[name].copy()
        lo[name] = base[name].copy()
        hi[name][idx] += eps
        lo[name][idx] -= eps
        fd = (np.sum(heuristic_field(hi, inst) * w) - np.sum(heuristic_field(lo, inst) * w)) / (2 * eps)
        assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


# -- upper-level cost and metrics -----------------------------------------------


def test_ul_cost_without_area_weight_is_path_length():
    res = astar_classic(empty(4, 4, (0, 0), (3, 3)))
    assert ul_cost(res, 0.0, 1.0).item() == res.path_cost


def test_ul_cost_linear_in_explored_mass():
    res = astar_classic(empty(4, 4, (0, 0), (3, 3)))
    full = ul_cost(res, 0.5, 1.0).item()
    res.explored = res.explored * 0.5
    half = ul_cost(res, 0.5, 1.0).item()
    assert full - half == pytest.approx(0.5 * res.explored.sum(), abs=1e-12)


def test_ul_cost_hand_sum():
    inst = empty(3, 3, (0, 0), (0, 2))
    res = astar_classic(inst)
    ref = np.zeros((3, 3))
    ref[0, :] = 1.0
    # path cost 2; explored vs reference gap = cells explored off row 0 + row-0 cells missed
    gap = res.explored[1:].sum() + (1 - res.explored[0]).sum()
    assert ul_cost(res, 2.0, 3.0, ref).item() == pytest.approx(3.0 * 2.0 + 2.0 * gap, abs=1e-12)
    assert search_area_cost(res).item() == res.explored_count


def test_ul_cost_requires_found_path():
    res = diff_astar_forward(empty(10, 10, (0, 0), (9, 9)), None, max_iters=2)
    with pytest.raises(ValueError):
        ul_cost(res, 1.0, 1.0)


def test_metric_exp_rt():
    assert metric_exp_rt(200, 150, 1.0, 1.0) == (25.0, 0.0)
    assert metric_exp_rt(200, 200, 2.0, 1.0) == (0.0, 50.0)
    assert metric_exp_rt(100, 108.9, 1.0, 1.0)[0] == pytest.approx(-8.9, abs=1e-12)
    with pytest.raises(ValueError):
        metric_exp_rt(0, 1, 1, 1)
    with pytest.raises(ValueError):
        metric_exp_rt(1, 1, 0, 1)


# -- training -----------------------------------------------------------------


def test_zero_weights_give_zero_gradient_and_no_update():
    rng = make_rng(5)
    inst = random_instance(rng, 12)
    cfg = IAStarConfig(epochs=1, w_a=0.0, w_l=0.0, width=4)
    params = init_heuristic_net(rng, 4)
    _, g = ul_step_grad(params, inst, cfg, None)
    assert all(not v.any() for v in g.values())
    before = params.values()
    trained, _ = train_iastar([inst], cfg, rng, params=params.copy())
    for k, v in trained.values().items():
        assert np.array_equal(v, before[k])


def test_smoke_training_cost_non_increasing_on_one_map():
    rng = make_rng(6)
    inst = random_instance(rng, 16)
    cfg = IAStarConfig(epochs=10, lr=1e-3, batch=1, width=8)
    _, hist = train_iastar([inst], cfg, rng)
    costs = hist.step_cost[:10]
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))


def test_validation_checkpoint_never_worse_than_start():
    rng = make_rng(8)
    maps = [random_instance(rng, 16) for _ in range(8)]
    cfg = IAStarConfig(epochs=1, batch=2, width=8, eval_every=1)
    _, hist = train_iastar(maps[:6], cfg, rng, validation=maps[6:])
    assert hist.best_step >= 0
    assert hist.val_cost_ok[0] == 1.0 and hist.val_exp[0] == 0.0


# -- map files ----------------------------------------------------------------


def test_map_round_trip(tmp_path):
    inst = random_instance(make_rng(9), 16)
    path = tmp_path / "m.txt"
    save_map(path, inst)
    back = load_map(path)
    assert np.array_equal(back.grid, inst.grid) and back.start == inst.start and back.goal == inst.goal
    assert format_map(back) == path.read_text()


@pytest.mark.parametrize(
    "text",
    ["", "S..\n..\n..G\n", "S.x\n...\n..G\n", "S..\n...\n...\n", "S.S\n...\n..G\n", "S#.\n...\n..G#\n"],
)
def test_bad_maps_rejected(text):
    with pytest.raises(MapFormatError):
        parse_map(text)


def test_instance_validation():
    with pytest.raises(ValueError):
        GridPlanInstance(np.zeros((3, 3)), (0, 0), (0, 0))
    with pytest.raises(ValueError):
        GridPlanInstance(np.ones((3, 3)), (0, 0), (2, 2))
    with pytest.raises(ValueError):
        GridPlanInstance(np.zeros((2, 5)), (0, 0), (1, 1))
