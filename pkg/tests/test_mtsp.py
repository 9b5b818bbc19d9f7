import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilkit import ad
from ilkit.discrete import CategoricalDistribution
from ilkit.mtsp import (
    IMtspConfig,
    InstanceFormatError,
    MtspInstance,
    allocation_cost,
    allocation_logits,
    allocation_probs,
    allocation_tours,
    angular_sector_assignment,
    brute_force_tsp,
    dumps_instance,
    evaluate_allocation,
    greedy_assignment,
    imtsp_grad,
    imtsp_train,
    init_allocation_net,
    init_surrogate_net,
    load_instance,
    loads_instance,
    minmax_cost,
    random_mtsp,
    route_length,
    save_instance,
    tsp_solve,
    two_opt_deltas,
    write_mtsp_csv,
)
from ilkit.mtsp.tsp import _dist
from ilkit.rng import make_rng


def perturbed(store, rng, scale=0.5):
    store.assign({k: v + scale * rng.normal(size=v.shape) for k, v in store.values().items()})
    return store


def enumeration(inst, alloc, surrogate, estimator):
    """(expected estimator over all allocations, exact gradient of sum_a P(a) L(a)) as flat vectors."""
    Z = np.array(list(itertools.product(range(inst.agents), repeat=inst.n_cities)))
    L = np.array([allocation_cost(inst, z) for z in Z])
    P = allocation_probs(alloc.values(), inst)
    pz = np.prod(P[np.arange(inst.n_cities), Z], axis=1)
    g = imtsp_grad(alloc, surrogate, inst, Z, L, estimator)
    tape = ad.Tape()
    th = alloc.bind(tape)
    dist = CategoricalDistribution(allocation_logits(th, inst))
    obj = ad.tsum(ad.exp(dist.log_prob(Z)) * ad.constant(L))
    exact = np.concatenate([t.numpy().ravel() for t in ad.gradient(obj, [th[n] for n in alloc.trainable_names()])])
    return (pz[:, None] * g.per_sample).sum(axis=0), exact


# -- instances ----------------------------------------------------------------


def test_instance_round_trip(tmp_path):
    inst = random_mtsp(make_rng(0), 20, 3)
    path = tmp_path / "i.json"
    save_instance(path, inst)
    back = load_instance(path)
    assert np.array_equal(back.cities, inst.cities) and np.array_equal(back.depot, inst.depot) and back.agents == 3
    assert dumps_instance(back) == path.read_text()


@pytest.mark.parametrize(
    "text",
    [
        "not json",
        "[]",
        '{"depot": [0.5, 0.5], "cities": [[0.1, 0.2]]}',
        '{"depot": [0.5, 0.5], "cities": [[0.1, 0.2]], "agents": 2}',
        '{"depot": [0.5, 1.5], "cities": [[0.1, 0.2], [0.3, 0.3]], "agents": 2}',
        '{"depot": [0.5, 0.5], "cities": [[0.1, 0.2], [0.3, 0.3]], "agents": 1.5}',
        '{"depot": [0.5, 0.5], "cities": [[0.1, 0.2], [0.3, 0.3]], "agents": 2, "extra": 1}',
    ],
)
def test_bad_instances_rejected(text):
    with pytest.raises(InstanceFormatError):
        loads_instance(text)


def test_generator_coordinates_in_range():
    inst = random_mtsp(make_rng(1), 50, 5)
    assert inst.cities.shape == (50, 2) and inst.cities.min() >= 0 and inst.cities.max() <= 1


# -- TSP lower level ----------------------------------------------------------


def test_empty_tour_has_zero_length():
    t = tsp_solve([0.5, 0.5], np.zeros((0, 2)))
    assert t.order == [] and t.length == 0.0


def test_single_city_round_trip():
    assert tsp_solve([0.0, 0.0], [[0.3, 0.4]]).length == pytest.approx(1.0, abs=1e-15)


def test_square_corners_from_center():
    corners = [[0, 0], [1, 0], [1, 1], [0, 1]]
    t = tsp_solve([0.5, 0.5], corners)
    assert t.length == pytest.approx(brute_force_tsp([0.5, 0.5], corners).length, abs=1e-12)
    assert t.length == pytest.approx(3 + math.sqrt(2), abs=1e-12)


def test_collinear_points_sweep():
    pts = np.array([[0.9, 0.5], [0.2, 0.5], [0.6, 0.5], [0.4, 0.5], [0.75, 0.5]])
    t = tsp_solve([0.0, 0.5], pts)
    assert t.length == pytest.approx(1.8, abs=1e-12)
    assert t.length == pytest.approx(brute_force_tsp([0.0, 0.5], pts).length, abs=1e-12)
    xs = pts[t.order, 0]
    assert list(xs) == sorted(xs) or list(xs) == sorted(xs, reverse=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_two_opt_terminal_and_strictly_decreasing(seed, n):
    rng = np.random.default_rng(seed)
    depot, pts = rng.random(2), rng.random((n, 2))
    trace = []
    t = tsp_solve(depot, pts, trace)
    assert all(b < a for a, b in zip(trace, trace[1:]))
    assert sorted(t.order) == list(range(n))
    route = [0] + [k + 1 for k in t.order] + [0]
    assert two_opt_deltas(_dist(np.vstack([depot, pts])), route).min() >= -1e-12


def test_brute_force_gap():
    rng = make_rng(2)
    gaps = []
    for _ in range(200):
        n = int(rng.integers(3, 9))
        depot, pts = rng.random(2), rng.random((n, 2))
        gaps.append(tsp_solve(depot, pts).length / brute_force_tsp(depot, pts).length - 1.0)
    gaps = np.array(gaps)
    assert gaps.min() >= -1e-12
    assert np.mean(gaps <= 0.05) >= 0.95


def test_minmax_examples():
    assert minmax_cost([1.0, 3.0, 2.0]) == 3.0
    assert minmax_cost([2.5, 2.5]) == 2.5
    assert minmax_cost([1.7]) == 1.7
    with pytest.raises(ValueError):
        minmax_cost([])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_max_route_at_least_mean(seed):
    rng = np.random.default_rng(seed)
    inst = random_mtsp(rng, 12, 3)
    tours = allocation_tours(inst, rng.integers(0, 3, 12))
    assert minmax_cost(tours) >= sum(t.length for t in tours) / 3 - 1e-15
    assert sorted(c for t in tours for c in t.order) == list(range(12))
    for t in tours:
        assert t.length == pytest.approx(route_length(inst.depot, inst.cities, t.order), abs=1e-12)


def test_bad_assignment_rejected():
    inst = random_mtsp(make_rng(3), 5, 2)
    with pytest.raises(ValueError):
        allocation_cost(inst, [0, 1, 2, 0, 1])
    with pytest.raises(ValueError):
        allocation_cost(inst, [0, 1])


def test_angular_sectors_are_contiguous_and_balanced():
    inst = random_mtsp(make_rng(4), 23, 5, depot=(0.5, 0.5))
    a = angular_sector_assignment(inst)
    counts = np.bincount(a, minlength=5)
    assert counts.max() - counts.min() <= 1
    d = inst.cities - inst.depot
    order = np.argsort(np.arctan2(d[:, 1], d[:, 0]), kind="stable")
    changes = np.sum(a[order] != np.roll(a[order], 1))
    assert changes == 5


# -- networks -----------------------------------------------------------------


def test_zero_allocation_net_is_uniform():
    inst = random_mtsp(make_rng(5), 10, 4)
    np.testing.assert_allclose(allocation_probs(init_allocation_net(None, 4).values(), inst), 0.25, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_allocation_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    inst = random_mtsp(rng, 15, 4)
    P = allocation_probs(perturbed(init_allocation_net(rng, 4), rng, 2.0).values(), inst)
    assert P.min() >= 0 and np.abs(P.sum(axis=1) - 1).max() <= 1e-12


def test_permuting_output_columns_permutes_allocation():
    rng = make_rng(6)
    inst = random_mtsp(rng, 8, 3)
    params = perturbed(init_allocation_net(rng, 3), rng).values()
    perm = np.array([2, 0, 1])
    swapped = dict(params)
    swapped["alloc.W2"] = params["alloc.W2"][:, perm]
    swapped["alloc.b2"] = params["alloc.b2"][perm]
    np.testing.assert_allclose(allocation_probs(swapped, inst), allocation_probs(params, inst)[:, perm], atol=1e-15)


# -- estimator ----------------------------------------------------------------


@pytest.mark.parametrize("estimator", ["control_variate", "score"])
def test_enumeration_oracle_two_agents_three_cities(estimator):
    rng = make_rng(7)
    inst = random_mtsp(rng, 3, 2)
    alloc = perturbed(init_allocation_net(rng, 2, 8), rng)
    sur = perturbed(init_surrogate_net(rng, 2, 16), rng)
    expected, exact = enumeration(inst, alloc, sur, estimator)
    assert np.abs(expected - exact).max() <= 1e-10


def test_symmetric_instance_gives_symmetric_expected_gradient():
    # agents are interchangeable and the zero net is uniform: the agent bias gradients coincide
    inst = MtspInstance([0.5, 0.5], [[0.1, 0.5], [0.9, 0.5], [0.5, 0.9]], 2)
    rng = make_rng(8)
    alloc = init_allocation_net(rng, 2, 8)
    sur = perturbed(init_surrogate_net(rng, 2, 16), rng)
    expected, exact = enumeration(inst, alloc, sur, "control_variate")
    names = alloc.trainable_names()
    sizes = [alloc[n].value.size for n in names]
    start = int(np.sum(sizes[: names.index("alloc.b2")]))
    b2 = expected[start : start + 2]
    assert abs(b2[0] - b2[1]) <= 1e-12
    assert np.abs(expected - exact).max() <= 1e-10


def test_surrogate_equal_to_cost_leaves_pathwise_term():
    rng = make_rng(9)
    inst = random_mtsp(rng, 6, 2)
    alloc = perturbed(init_allocation_net(rng, 2, 8), rng)
    sur = perturbed(init_surrogate_net(rng, 2, 16), rng)
    z = rng.integers(0, 2, (5, 6))
    s = imtsp_grad(alloc, sur, inst, z, np.zeros(5)).surrogate_values
    g = imtsp_grad(alloc, sur, inst, z, s)
    # L = L' removes the score term, so every single-sample estimate is the same pathwise vector
    assert np.abs(g.per_sample - g.per_sample[0]).max() <= 1e-15
    assert np.abs(g.per_sample[0]).max() > 0


def test_sampled_estimator_converges_to_enumeration():
    rng = make_rng(10)
    inst = random_mtsp(rng, 3, 2)
    alloc = perturbed(init_allocation_net(rng, 2, 8), rng)
    sur = perturbed(init_surrogate_net(rng, 2, 16), rng)
    _, exact = enumeration(inst, alloc, sur, "control_variate")
    logits = allocation_logits({k: ad.constant(v) for k, v in alloc.values().items()}, inst)
    z = CategoricalDistribution(logits).sample(rng, 4000)
    costs = np.array([allocation_cost(inst, zi) for zi in z])
    ps = imtsp_grad(alloc, sur, inst, z, costs).per_sample
    se = ps.std(axis=0) / math.sqrt(len(ps))
    assert np.all(np.abs(ps.mean(axis=0) - exact) <= 5 * se + 1e-12)


def test_control_variate_needs_surrogate():
    rng = make_rng(11)
    inst = random_mtsp(rng, 4, 2)
    with pytest.raises(ValueError):
        imtsp_grad(init_allocation_net(rng, 2), None, inst, [[0, 1, 0, 1]], [1.0])


# -- training -----------------------------------------------------------------


def test_single_agent_reduces_to_tsp():
    inst = random_mtsp(make_rng(12), 6, 1)
    res = imtsp_train(inst, IMtspConfig(iters=3, samples=4, surrogate_hidden=8), make_rng(13))
    np.testing.assert_array_equal(allocation_probs(res.alloc.values(), inst), 1.0)
    assert res.history[-1].mean_minmax == pytest.approx(tsp_solve(inst.depot, inst.cities).length, abs=1e-15)


def test_training_is_deterministic_and_writes_csv(tmp_path):
    inst = random_mtsp(make_rng(14), 10, 3)
    cfg = IMtspConfig(iters=4, samples=6, surrogate_hidden=16)
    a = imtsp_train(inst, cfg, make_rng(15))
    b = imtsp_train(inst, cfg, make_rng(15))
    assert [r.mean_minmax for r in a.history] == [r.mean_minmax for r in b.history]
    for k, v in a.alloc.values().items():
        assert np.array_equal(v, b.alloc.values()[k])
    path = tmp_path / "m.csv"
    write_mtsp_csv(path, a.history)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "mean_minmax", "log_grad_variance"] and len(rows) == 5


def test_training_from_generator_and_agent_mismatch():
    cfg = IMtspConfig(iters=2, samples=4, surrogate_hidden=8)
    res = imtsp_train(lambda r: random_mtsp(r, 8, 2), cfg, make_rng(16))
    assert len(res.history) == 2
    counter = iter([2, 3])
    with pytest.raises(ValueError, match="agents"):
        imtsp_train(lambda r: random_mtsp(r, 8, next(counter)), cfg, make_rng(17))


def test_surrogate_lowers_gradient_variance_after_warmup():
    inst = random_mtsp(make_rng(18), 15, 3)
    res = imtsp_train(inst, IMtspConfig(iters=40, samples=16), make_rng(19))
    post = res.history[10:]
    assert np.mean([r.log_grad_variance < r.score_log_variance for r in post]) >= 0.8


def test_evaluation_rows():
    inst = random_mtsp(make_rng(20), 12, 3)
    params = init_allocation_net(make_rng(21), 3)
    (row,) = evaluate_allocation(params, [inst])
    assert row.minmax == allocation_cost(inst, greedy_assignment(params, inst))
    assert row.baseline_minmax == allocation_cost(inst, angular_sector_assignment(inst))


def test_config_validation():
    with pytest.raises(ValueError):
        IMtspConfig(estimator="reinforce")
    with pytest.raises(ValueError):
        IMtspConfig(samples=1)
