import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilkit.pgo import (
    GNConfig,
    GraphFormatError,
    NotStationary,
    PoseGraph2D,
    SyntheticFrontEnd,
    Trajectory,
    ate,
    biased_sensor,
    cost_of,
    edge_residual,
    edge_residuals,
    format_graph,
    frontend_graph,
    gauss_newton_solve,
    gn_step,
    hypergrad_fixture,
    imperative_slam_train,
    load_graph,
    looping_trajectory,
    one_step_hypergrad,
    parse_graph,
    recoverable_bias_fixture,
    save_graph,
    se2,
    unrolled_hypergrad,
    write_slam_csv,
)
from ilkit.rng import make_rng

angles = st.floats(-10.0, 10.0, allow_nan=False)
coords = st.floats(-5.0, 5.0, allow_nan=False)
poses = st.tuples(coords, coords, angles)


def two_node(z, w=(1.0, 1.0, 1.0), init=(0.0, 0.0, 0.0)):
    return PoseGraph2D([[0.0, 0.0, 0.0], list(init)], [0], [1], [z], [w])


def line_trajectory(n_nodes=10, step=0.5, w_odo=1.0, w_lc=10.0):
    """Straight drive along x with exact odometry and one closure from the first to the last node."""
    truth = np.zeros((n_nodes, 3))
    truth[:, 0] = step * np.arange(n_nodes)
    odo = np.tile([step, 0.0, 0.0], (n_nodes - 1, 1))
    lc_Z = np.array([[step * (n_nodes - 1), 0.0, 0.0]])
    return Trajectory(truth, odo, np.array([0]), np.array([n_nodes - 1]), lc_Z, np.full(3, w_odo), np.full(3, w_lc))


# -- SE(2) and residuals ------------------------------------------------------


def test_residual_consistent_pair_is_zero():
    g = two_node([1.0, 0.0, 0.0], init=(1.0, 0.0, 0.0))
    np.testing.assert_array_equal(edge_residual(g, 0), np.zeros(3))


def test_residual_translation_error():
    g = two_node([1.0, 0.0, 0.0], init=(2.0, 0.0, 0.0))
    np.testing.assert_allclose(edge_residual(g, 0), [1.0, 0.0, 0.0], atol=1e-15)


def test_consistent_chain_has_zero_residuals():
    tr = looping_trajectory(make_rng(0), 20, 2.0, odo_sigma=(0, 0, 0), lc_sigma=(0, 0, 0))
    odo = se2.between(tr.truth[:-1], tr.truth[1:]).numpy()
    r = edge_residuals(tr.graph(odo, tr.truth)).numpy()
    assert np.abs(r).max() <= 1e-12


@settings(max_examples=50, deadline=None)
@given(poses, poses)
def test_composition_keeps_angle_wrapped(a, b):
    t = se2.compose(np.array(a), np.array(b)).numpy()[2]
    assert -math.pi < t <= math.pi


@settings(max_examples=50, deadline=None)
@given(coords, coords, st.floats(-3.1, 3.1))
def test_exp_log_round_trip(x, y, t):
    v = np.array([x, y, t])
    np.testing.assert_allclose(se2.log(se2.exp(v)).numpy(), v, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(poses, poses)
def test_between_inverts_compose(a, b):
    a, b = np.array(a), np.array(b)
    back = se2.between(a, se2.compose(a, b)).numpy()
    np.testing.assert_allclose(back[:2], b[:2], atol=1e-9)
    assert abs(se2.wrap(back[2] - b[2]).numpy()) <= 1e-9


# -- back-end -----------------------------------------------------------------


def test_zero_noise_triangle_from_perturbed_init():
    rng = make_rng(1)
    truth = np.array([[0.0, 0.0, 0.0], [1.0, 0.2, 0.5], [0.3, 1.1, 2.0]])
    i, j = np.array([0, 1, 0]), np.array([1, 2, 2])
    Z = se2.between(truth[i], truth[j]).numpy()
    init = truth + np.vstack([np.zeros(3), rng.uniform(-0.1, 0.1, (2, 3))])
    res = gauss_newton_solve(PoseGraph2D(init, i, j, Z, np.ones((3, 3))))
    assert res.converged and res.cost <= 1e-16


def test_two_node_graph_exact_after_one_iteration():
    z = np.array([0.7, -0.4, 0.0])
    res = gauss_newton_solve(two_node(z), GNConfig(kind="gn", max_iters=1))
    np.testing.assert_allclose(res.poses[1], z, atol=1e-15)


def test_large_damping_shrinks_step_to_zero():
    g = two_node([1.0, 0.5, 0.3], init=(0.2, -0.1, 0.0))
    norms = [np.linalg.norm(gn_step(g, g.poses, lam)[0]) for lam in (0.0, 1.0, 1e3, 1e6, 1e12)]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] <= 1e-11


def test_singular_normal_equations_are_damped_and_flagged():
    # no heading information: the normal equations are singular
    g = two_node([1.0, 0.0, 0.0], w=(1.0, 1.0, 0.0))
    res = gauss_newton_solve(g, GNConfig(kind="gn"))
    assert res.flagged and res.converged
    np.testing.assert_allclose(res.poses[1, :2], [1.0, 0.0], atol=1e-9)


def test_lm_cost_non_increasing_and_converges():
    g = frontend_graph(recoverable_bias_fixture(make_rng(0, 4)), np.array([0.0, 0.0, 0.0, 1.0]))
    res = gauss_newton_solve(g)
    assert res.converged and res.grad_norm <= 1e-9
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res.costs, res.costs[1:]))
    assert res.cost < cost_of(g, g.poses)


def test_gauge_invariance_of_final_cost():
    tr = looping_trajectory(make_rng(2), 30, 2.0)
    g = frontend_graph(tr, np.array([0.0, 0.0, 0.0, 1.0]))
    T = np.array([1.3, -0.7, 2.1])
    moved = g.with_poses(se2.compose(T, g.poses).numpy())
    a, b = gauss_newton_solve(g), gauss_newton_solve(moved)
    assert abs(a.cost - b.cost) <= 1e-10


def test_gn_config_validation():
    with pytest.raises(ValueError):
        GNConfig(kind="newton")
    with pytest.raises(ValueError):
        GNConfig(max_iters=0)


# -- hypergradient ------------------------------------------------------------


def test_unbiased_noiseless_front_end_has_zero_gradient():
    tr = looping_trajectory(make_rng(3), 20, 2.0, odo_sigma=(0, 0, 0), lc_sigma=(0, 0, 0))
    theta = np.array([0.0, 0.0, 0.0, 1.0])
    sol = gauss_newton_solve(frontend_graph(tr, theta))
    assert sol.cost <= 1e-20
    assert np.abs(one_step_hypergrad(tr, theta, sol)).max() <= 1e-9


def test_one_step_matches_unrolled_on_line_graph():
    tr = biased_sensor(line_trajectory(10), bias=(0.05, -0.02, 0.01), scale=1.05)
    theta = np.array([0.0, 0.0, 0.0, 1.0])
    sol = gauss_newton_solve(frontend_graph(tr, theta))
    a, b = one_step_hypergrad(tr, theta, sol), unrolled_hypergrad(tr, theta, 20)
    assert np.linalg.norm(a - b) <= 0.05 * np.linalg.norm(b)


def test_translation_bias_gradient_closed_form():
    # series springs: L* = n^2 w_o w_c b^2 / (2 (w_o + n w_c)) with n odometry edges
    n_nodes, w_o, w_c, b = 8, 2.0, 5.0, 0.03
    tr = line_trajectory(n_nodes, w_odo=w_o, w_lc=w_c)
    theta = np.array([b, 0.0, 0.0, 1.0])
    sol = gauss_newton_solve(frontend_graph(tr, theta))
    g = one_step_hypergrad(tr, theta, sol)
    n = n_nodes - 1
    assert g[0] == pytest.approx(n * n * w_o * w_c * b / (w_o + n * w_c), rel=1e-9)
    assert g[0] > 0 and abs(g[1]) <= 1e-12
    flipped = np.array([-b, 0.0, 0.0, 1.0])
    assert one_step_hypergrad(tr, flipped, gauss_newton_solve(frontend_graph(tr, flipped)))[0] < 0


def test_one_step_refuses_non_stationary_solution():
    tr = recoverable_bias_fixture(make_rng(0, 4))
    theta = np.array([0.0, 0.0, 0.0, 1.0])
    sol = gauss_newton_solve(frontend_graph(tr, theta), GNConfig(max_iters=1))
    assert sol.grad_norm > 1e-9
    with pytest.raises(NotStationary, match="not stationary"):
        one_step_hypergrad(tr, theta, sol)


def test_one_step_matches_unrolled_on_random_fixtures():
    for k in range(3):
        tr, theta = hypergrad_fixture(make_rng(k, 4), 20)
        sol = gauss_newton_solve(frontend_graph(tr, theta))
        a, b = one_step_hypergrad(tr, theta, sol), unrolled_hypergrad(tr, theta, 20)
        assert np.linalg.norm(a - b) <= 0.05 * np.linalg.norm(b)


def test_front_end_scale_must_be_positive():
    with pytest.raises(ValueError):
        SyntheticFrontEnd(np.array([0.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(SyntheticFrontEnd().predict(np.array([[1.0, 2.0, 0.1]])), [[1.0, 2.0, 0.1]])


# -- ATE ----------------------------------------------------------------------


def test_ate_identical_is_zero():
    tr = looping_trajectory(make_rng(0), 10, 1.0)
    assert ate(tr.truth, tr.truth) == 0.0


def test_ate_uniform_offset():
    N, d = 10, 0.3
    gt = np.zeros((N, 3))
    gt[:, 0] = np.arange(N)
    est = gt.copy()
    est[1:, 1] += d
    assert ate(est, gt) == pytest.approx(d * math.sqrt((N - 1) / N), abs=1e-15)


def test_ate_single_node_error():
    N, e = 16, 0.8
    gt = np.zeros((N, 3))
    gt[:, 0] = np.arange(N)
    est = gt.copy()
    est[5, 0] += e
    assert ate(est, gt) == pytest.approx(e / math.sqrt(N), abs=1e-15)


def test_ate_length_mismatch():
    with pytest.raises(ValueError):
        ate(np.zeros((3, 3)), np.zeros((4, 3)))


# -- imperative training ------------------------------------------------------


def test_recoverable_bias_training_reduces_ate():
    res = imperative_slam_train(recoverable_bias_fixture(make_rng(0, 4)), iters=50)
    h = res.history
    assert h[-1].ate_frontend <= 0.8 * h[0].ate_frontend
    assert all(r.ate_optimized <= r.ate_frontend for r in h)
    assert all(r.grad_norm <= 1e-9 for r in h)


def test_zero_bias_training_stays_flat():
    res = imperative_slam_train(looping_trajectory(make_rng(0, 4)), iters=20)
    ates = [r.ate_frontend for r in res.history]
    assert max(ates) <= 1.25 * ates[0]
    assert np.abs(res.theta - [0.0, 0.0, 0.0, 1.0]).max() <= 0.05


def test_slam_training_is_deterministic():
    a = imperative_slam_train(recoverable_bias_fixture(make_rng(5, 4), 20, 2.0), iters=3)
    b = imperative_slam_train(recoverable_bias_fixture(make_rng(5, 4), 20, 2.0), iters=3)
    assert np.array_equal(a.theta, b.theta)


def test_slam_csv(tmp_path):
    res = imperative_slam_train(recoverable_bias_fixture(make_rng(0, 4), 20, 2.0), iters=2)
    path = tmp_path / "slam.csv"
    write_slam_csv(path, res.history)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "ate_frontend", "ate_optimized"]
    assert len(rows) == 3 and float(rows[1][1]) == res.history[0].ate_frontend


# -- graph files and validation -----------------------------------------------


def test_graph_round_trip(tmp_path):
    g = frontend_graph(recoverable_bias_fixture(make_rng(0, 4), 20, 2.0), np.array([0.01, 0.0, 0.0, 1.0]))
    path = tmp_path / "g.txt"
    save_graph(path, g)
    back = load_graph(path)
    for name in ("poses", "i", "j", "Z", "W"):
        assert np.array_equal(getattr(back, name), getattr(g, name))
    assert format_graph(back) == path.read_text()


@pytest.mark.parametrize(
    "text",
    [
        "",
        "NODE 0 0 0 0\n",
        "NODE 0 0 0 0\nNODE 1 1 0 0\nEDGE 0 1 1 0 0 1 1\n",
        "NODE 0 0 0 0\nNODE 2 1 0 0\nEDGE 0 2 1 0 0 1 1 1\n",
        "NODE 0 0 0 0\nNODE 0 1 0 0\nEDGE 0 1 1 0 0 1 1 1\n",
        "NODE 0 0 0 0\nNODE 1 1 0 x\nEDGE 0 1 1 0 0 1 1 1\n",
        "NODE 0 0 0 0\nNODE 1 1 0 0\nNODE 2 2 0 0\nEDGE 0 1 1 0 0 1 1 1\n",
        "NODE 0 0 0 0\nNODE 1 1 0 0\nEDGE 0 5 1 0 0 1 1 1\n",
        "NODE 0 0 0 0\nNODE 1 1 0 0\nEDGE 0 1 1 0 0 1 -1 1\n",
        "VERTEX 0 0 0 0\n",
    ],
)
def test_bad_graph_files_rejected(text):
    with pytest.raises(GraphFormatError):
        parse_graph(text)


def test_graph_comments_and_blank_lines_ignored():
    g = parse_graph("# header\n\nNODE 0 0 0 0\nNODE 1 1 0 0\nEDGE 0 1 1 0 0 1 1 1\n")
    assert g.n_nodes == 2 and g.n_edges == 1


def test_graph_validation():
    with pytest.raises(ValueError, match="self-loop"):
        PoseGraph2D(np.zeros((2, 3)), [0, 1], [1, 1], np.zeros((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="connected"):
        PoseGraph2D(np.zeros((3, 3)), [0], [1], np.zeros((1, 3)), np.ones((1, 3)))
    with pytest.raises(ValueError):
        looping_trajectory(make_rng(0), 2)
