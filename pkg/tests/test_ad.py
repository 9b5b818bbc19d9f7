import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilkit import ad
from ilkit.ad import DomainError, ShapeError, Tape, constant, gradient, hessian, hvp


def central_diff(f, x, eps=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


def check_grad(fn, *inputs, seed=0):
    """Compare reverse-mode gradients of sum(w * fn(...)) with central differences."""
    rng = np.random.default_rng(seed)
    tape = Tape()
    xs = [tape.variable(x) for x in inputs]
    out = fn(*xs)
    w = constant(rng.uniform(-1, 1, out.shape))
    grads = gradient(ad.tsum(out * w), xs)
    for k, x in enumerate(inputs):

        def scalar(v, k=k):
            args = [constant(a) for a in inputs]
            args[k] = constant(v)
            return float(np.sum(fn(*args).data * w.data))

        fd = central_diff(scalar, x)
        np.testing.assert_allclose(grads[k].data, fd, atol=1e-6, rtol=1e-5)


R = np.random.default_rng(42)


def u(*shape):
    return R.uniform(-1, 1, shape)


UNARY = {
    "exp": ad.exp,
    "log": lambda x: ad.log(x + 2.0),
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "relu": ad.relu,
    "softplus": ad.softplus,
    "sqrt": lambda x: ad.sqrt(x + 2.0),
    "sin": ad.sin,
    "cos": ad.cos,
    "neg": ad.neg,
    "square": ad.square,
    "power3": lambda x: ad.power(x, 3),
    "softmax": lambda x: ad.softmax(x, axis=-1),
    "log_softmax": lambda x: ad.log_softmax(x, axis=0),
    "sum_axis0": lambda x: ad.tsum(x, axis=0),
    "mean_axis1": lambda x: ad.mean(x, axis=1, keepdims=True),
    "max_axis1": lambda x: ad.tmax(x, axis=1),
    "max_all": ad.tmax,
    "slice": lambda x: x[1:, :2],
    "fancy_index": lambda x: x[np.array([0, 2, 2])],
    "transpose": ad.transpose,
    "reshape": lambda x: ad.reshape(x, (x.size,)),
    "aggregate": ad.neighborhood_aggregate,
    "where": lambda x: ad.where(np.eye(3, 4, dtype=bool), x, ad.exp(x)),
    "masked_softmax": lambda x: ad.softmax(x, axis=1, mask=np.array([[1, 0, 1, 1]] * 3, dtype=bool)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_central_differences(name):
    x = u(3, 4)
    if name == "relu":
        x = np.where(np.abs(x) < 1e-3, 0.5, x)
    check_grad(UNARY[name], x)


BINARY = {
    "add": (lambda a, b: a + b, (3, 4), (3, 4)),
    "add_row": (lambda a, b: a + b, (3, 4), (4,)),
    "add_col": (lambda a, b: a + b, (3, 4), (3, 1)),
    "sub_scalar": (lambda a, b: a - b, (3, 4), ()),
    "mul": (lambda a, b: a * b, (3, 4), (3, 4)),
    "div": (lambda a, b: a / (b + 2.0), (3, 4), (1, 4)),
    "matmul": (ad.matmul, (3, 4), (4, 2)),
    "matvec": (ad.matmul, (3, 4), (4,)),
    "vecmat": (ad.matmul, (3,), (3, 2)),
    "dot": (ad.matmul, (4,), (4,)),
    "atan2": (lambda a, b: ad.atan2(a, b + 2.0), (2, 3), (2, 3)),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), (2, 3), (2, 2)),
    "solve": (lambda a, b: ad.solve(a + constant(3 * np.eye(3)), b), (3, 3), (3,)),
    "solve_mat": (lambda a, b: ad.solve(a + constant(3 * np.eye(3)), b), (3, 3), (3, 2)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_ops_match_central_differences(name):
    fn, sa, sb = BINARY[name]
    check_grad(fn, u(*sa), u(*sb))


def test_matmul_example():
    out = ad.matmul(constant([[1, 2], [3, 4]]), constant([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_array_equal(ad.softmax(constant([0.0, 0.0])).data, [0.5, 0.5])


def test_aggregate_one_hot_gives_neighbour_indicator():
    # by hand: every cell of the 3x3 map except the centre touches the centre
    m = np.zeros((3, 3))
    m[1, 1] = 1.0
    out = ad.neighborhood_aggregate(constant(m)).data
    expected = np.ones((3, 3))
    expected[1, 1] = 0.0
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(ad.NEIGHBOR_KERNEL, expected)


def test_gradient_examples():
    tape = Tape()
    x = tape.variable(3.0)
    assert gradient(x * x, [x])[0].item() == 6.0

    x = tape.variable(R.normal(size=5))
    np.testing.assert_allclose(gradient(ad.tsum(ad.softmax(x)), [x])[0].data, 0.0, atol=1e-15)

    x = tape.variable([1.0, 1.0])
    f = 0.5 * ad.tsum(x * constant([1.0, 2.0]) * x)
    np.testing.assert_array_equal(gradient(f, [x])[0].data, [1.0, 2.0])


def test_gradient_rejects_non_scalar_and_zero_for_unreachable():
    tape = Tape()
    x = tape.variable([1.0, 2.0])
    y = tape.variable([5.0])
    with pytest.raises(ShapeError):
        gradient(x * 2.0, [x])
    gx, gy = gradient(ad.tsum(x * x), [x, y])
    np.testing.assert_array_equal(gy.data, [0.0])


def test_recorded_gradient_is_differentiable():
    tape = Tape()
    x = tape.variable(2.0)
    (g,) = gradient(x * x * x, [x], record=True)
    assert g.tracked
    (gg,) = gradient(g, [x])
    assert gg.item() == pytest.approx(12.0)


def test_backward_does_not_mutate_cached_values():
    tape = Tape()
    x = tape.variable(R.normal(size=4))
    y = ad.tsum(ad.exp(x) * ad.tanh(x))
    before = [n.value.copy() for n in tape.nodes]
    gradient(y, [x], record=True)
    for b, n in zip(before, tape.nodes):
        np.testing.assert_array_equal(b, n.value)
        assert not n.value.flags.writeable


def test_hvp_examples():
    f = lambda x: 0.5 * ad.tsum(x * constant([1.0, 2.0]) * x)
    np.testing.assert_allclose(hvp(f, [0.3, -0.2], [1.0, 1.0]), [1.0, 2.0])
    g = lambda x: 0.5 * ad.tsum(x * x)
    v = R.normal(size=3)
    np.testing.assert_allclose(hvp(g, R.normal(size=3), v), v)
    # quartic: explicit Hessian ||x||^2 I + 2 x x^T = diag(3, 1) at (1, 0)
    q = lambda x: 0.25 * ad.tsum(x * x) ** 2
    np.testing.assert_allclose(hvp(q, [1.0, 0.0], [0.0, 1.0]), [0.0, 1.0])
    with pytest.raises(ShapeError):
        hvp(q, [1.0, 0.0], [1.0])


def random_smooth_function(seed, n):
    rng = np.random.default_rng(seed)
    A = constant(rng.normal(size=(n, n)))
    b = constant(rng.normal(size=n))
    c = constant(rng.normal(size=n))

    def f(x):
        z = ad.matmul(A, x)
        return ad.tsum(ad.tanh(z) * b) + ad.tsum(ad.softplus(x * c)) + 0.1 * ad.tsum(ad.exp(0.3 * z))

    return f


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 10))
def test_hvp_symmetry(seed, n):
    rng = np.random.default_rng(seed + 1)
    f = random_smooth_function(seed, n)
    x, uu, vv = rng.uniform(-1, 1, (3, n))
    uhv = uu @ hvp(f, x, vv)
    vhu = vv @ hvp(f, x, uu)
    assert abs(uhv - vhu) <= 1e-8 * (1 + abs(uhv))


@pytest.mark.parametrize("seed", range(10))
def test_hvp_matches_explicit_hessian(seed):
    n = 1 + seed % 10
    rng = np.random.default_rng(100 + seed)
    f = random_smooth_function(seed, n)
    x, v = rng.uniform(-1, 1, (2, n))
    H = hessian(f, x)
    np.testing.assert_allclose(hvp(f, x, v), H @ v, atol=1e-8)


def test_determinism_of_tapes_and_gradients():
    def run():
        rng = np.random.default_rng(7)
        tape = Tape()
        x = tape.variable(rng.normal(size=(4, 3)))
        W = tape.variable(rng.normal(size=(3, 2)))
        y = ad.tsum(ad.softmax(ad.matmul(x, W), axis=1) * ad.tanh(ad.matmul(x, W)))
        g = gradient(y, [x, W], record=True)
        return tape.signature(), [t.data.tobytes() for t in g]

    assert run() == run()


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="add"):
        constant(np.ones((2, 3))) + constant(np.ones((3, 2)))
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        constant(np.ones((2, 3, 4))) + constant(np.ones((3, 4)))


def test_domain_errors():
    with pytest.raises(DomainError):
        ad.log(constant([1.0, 0.0]))
    with pytest.raises(DomainError):
        constant([1.0]) / constant([0.0])
    with pytest.raises(DomainError):
        ad.solve(constant(np.zeros((2, 2))), constant([1.0, 1.0]))


def test_mixed_tapes_rejected():
    a = Tape().variable(1.0)
    b = Tape().variable(1.0)
    with pytest.raises(ValueError):
        a + b


def test_weights_roundtrip_is_lossless(tmp_path):
    store = ad.ParameterStore()
    store.add("layer.W0", R.normal(size=(3, 2)) * 1e-7)
    store.add("layer.b0", np.array([np.pi, 1 / 3, -2.5e-300]))
    path = tmp_path / "w.json"
    ad.save_weights(path, store)
    back = ad.load_weights(path)
    for k, v in store.values().items():
        assert back[k].tobytes() == v.tobytes()
    assert "3.1415926535897931" in path.read_text()


def test_parameter_names_unique_and_bind():
    store = ad.ParameterStore()
    store.add("a", [1.0])
    store.add("frozen", [2.0], trainable=False)
    with pytest.raises(KeyError):
        store.add("a", [0.0])
    tape = Tape()
    bound = store.bind(tape)
    assert bound["a"].tracked and not bound["frozen"].tracked


def test_adam_and_sgd_create_fresh_values():
    x = {"w": np.array([1.0, -1.0])}
    g = {"w": np.array([0.5, 0.5])}
    for opt in (ad.SGD(0.1), ad.Adam(0.1)):
        new = opt.step(x, g)
        assert new["w"] is not x["w"]
        np.testing.assert_array_equal(x["w"], [1.0, -1.0])
