import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpgn.errors import ContractError, DimensionError, StaleTapeError
from hpgn.gradcheck import gradcheck
from hpgn.tensor import (
    Tensor,
    abs_,
    add,
    backward,
    broadcast_to,
    clamp,
    concat,
    conv2d,
    default_dtype,
    down2,
    elementwise,
    global_avg_pool,
    leaky_relu,
    mean,
    mul,
    narrow,
    no_grad,
    ones_like,
    precision,
    relu,
    reshape,
    resample,
    sigmoid,
    softmax,
    softplus,
    sub,
    sum_,
    tanh,
    up2,
    zeros_like,
)


def loop_conv(x, w, b, stride, padding, groups):
    N, C, H, W = x.shape
    O, Cg, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    out = np.zeros((N, O, Ho, Wo))
    per_group = O // groups
    for n in range(N):
        for o in range(O):
            g = o // per_group
            for i in range(Ho):
                for j in range(Wo):
                    total = b[o]
                    for c in range(Cg):
                        for u in range(k):
                            for v in range(k):
                                total += w[o, c, u, v] * xp[n, g * Cg + c, i * stride + u, j * stride + v]
                    out[n, o, i, j] = total
    return out


class TestEngine:
    def test_default_dtype_is_float32(self):
        """Tensors are 32-bit unless a 64-bit block is active"""
        assert Tensor([1.0, 2.0]).dtype == np.float32
        with precision("float64"):
            assert Tensor([1.0]).dtype == np.float64
            assert default_dtype() == np.float64
        assert default_dtype() == np.float32

    def test_precision_rejects_other_types(self):
        """Only float32 and float64 are supported"""
        with pytest.raises(ContractError):
            with precision("int32"):
                pass

    def test_linear_form_gradient(self):
        """loss = sum(w·x) with x fixed gives grad(w) = x"""
        with precision("float64"):
            x = Tensor(np.arange(6.0).reshape(2, 3))
            w = Tensor(np.ones((2, 3)), requires_grad=True)
            sum_(mul(w, x)).backward()
            np.testing.assert_array_equal(w.grad, x.data)

    def test_quadratic_gradient(self):
        """loss = sum(w²)/2 gives grad(w) = w"""
        with precision("float64"):
            w = Tensor(np.array([1.5, -2.0, 0.25]), requires_grad=True)
            mul(sum_(mul(w, w)), 0.5).backward()
            np.testing.assert_allclose(w.grad, w.data)

    def test_backward_returns_leaves(self):
        """backward() reports the leaf tensors it reached"""
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0, 4.0], requires_grad=True)
        leaves = backward(sum_(mul(a, b)))
        assert {id(t) for t in leaves} == {id(a), id(b)}

    def test_backward_needs_scalar(self):
        """Non-scalar roots are refused"""
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ContractError):
            mul(x, 2.0).backward()

    def test_shape_one_root_is_accepted(self):
        """A [1]-shaped loss counts as scalar"""
        x = Tensor([2.0], requires_grad=True)
        mul(x, x).backward()
        assert x.grad[0] == pytest.approx(4.0)

    def test_second_backward_is_stale(self):
        """The tape is consumed by backward"""
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = sum_(mul(x, x))
        loss.backward()
        with pytest.raises(StaleTapeError):
            loss.backward()

    def test_gradients_accumulate_over_shared_inputs(self):
        """A tensor used twice receives the sum of both contributions"""
        with precision("float64"):
            x = Tensor([3.0], requires_grad=True)
            sum_(add(mul(x, 2.0), mul(x, 5.0))).backward()
            assert x.grad[0] == 7.0

    def test_no_grad_records_nothing(self):
        """Results computed under no_grad are detached"""
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = mul(x, 3.0)
        assert not y.requires_grad and y.is_leaf

    def test_item(self):
        """item() only works on single-element tensors"""
        assert Tensor([2.5]).item() == 2.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_broadcast_mismatch(self):
        """Incompatible shapes raise a dimension error"""
        with pytest.raises(DimensionError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


class TestElementwise:
    def test_identities_are_exact(self):
        """Multiplying by ones and adding zeros change nothing"""
        x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4, 4)))
        np.testing.assert_array_equal(mul(x, ones_like(x)).data, x.data)
        np.testing.assert_array_equal(add(x, zeros_like(x)).data, x.data)

    def test_sigmoid_of_zero(self):
        """sigmoid(0) = 0.5"""
        assert elementwise("sigmoid", Tensor([0.0])).item() == 0.5

    def test_dispatch(self):
        """elementwise() routes by name and validates operands"""
        x = Tensor([-2.0, 0.5, 3.0])
        np.testing.assert_allclose(elementwise("leaky_relu", x, alpha=0.1).data, [-0.2, 0.5, 3.0], rtol=1e-6)
        np.testing.assert_array_equal(elementwise("clamp", x, low=0.0, high=1.0).data, [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(elementwise("relu", x).data, [0.0, 0.5, 3.0])
        np.testing.assert_array_equal(elementwise("sub", x, x).data, [0.0, 0.0, 0.0])
        with pytest.raises(ContractError):
            elementwise("add", x)
        with pytest.raises(ContractError):
            elementwise("cube", x)

    def test_channel_broadcast_matches_loop(self):
        """N×C×H×W + N×C×1×1 adds each channel's constant"""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 3, 4, 5))
        b = rng.normal(size=(2, 3, 1, 1))
        expected = np.empty_like(x)
        for n in range(2):
            for c in range(3):
                expected[n, c] = x[n, c] + b[n, c, 0, 0]
        with precision("float64"):
            np.testing.assert_array_equal(add(Tensor(x), Tensor(b)).data, expected)


class TestConv:
    def test_zero_input(self):
        """Zero input and zero bias give zero output"""
        out = conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))
        assert out.shape == (1, 1, 1, 1) and out.data.sum() == 0

    def test_identity_kernel(self):
        """A 1×1 kernel of one reproduces the input"""
        x = Tensor(np.arange(9.0).reshape(1, 1, 3, 3))
        np.testing.assert_array_equal(conv2d(x, Tensor(np.ones((1, 1, 1, 1)))).data, x.data)

    @pytest.mark.parametrize(
        "shape,weight_shape,stride,padding,groups",
        [
            ((1, 2, 5, 5), (3, 2, 3, 3), 1, 0, 1),
            ((2, 2, 6, 7), (4, 2, 3, 3), 2, 1, 1),
            ((1, 4, 6, 6), (4, 1, 5, 5), 1, 2, 4),
            ((1, 4, 5, 5), (6, 2, 3, 3), 1, 1, 2),
        ],
    )
    def test_matches_loop_oracle(self, shape, weight_shape, stride, padding, groups):
        """Output equals the nested-sum definition"""
        rng = np.random.default_rng(2)
        x = rng.normal(size=shape)
        w = rng.normal(size=weight_shape)
        b = rng.normal(size=weight_shape[0])
        with precision("float64"):
            out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding, groups=groups)
        np.testing.assert_allclose(out.data, loop_conv(x, w, b, stride, padding, groups), atol=1e-10)

    def test_linearity(self):
        """conv(a·x + b·y) = a·conv(x) + b·conv(y) without bias"""
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=(2, 1, 2, 6, 6))
        w = Tensor(rng.normal(size=(3, 2, 3, 3)))
        with precision("float64"):
            lhs = conv2d(Tensor(2.0 * x - 0.5 * y), w, padding=1).data
            rhs = 2.0 * conv2d(Tensor(x), w, padding=1).data - 0.5 * conv2d(Tensor(y), w, padding=1).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_channel_mismatch(self):
        """Weight channels must match input channels"""
        with pytest.raises(DimensionError):
            conv2d(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.ones((2, 2, 3, 3))))


class TestResample:
    def test_down2_mean(self):
        """down2 of [[1,3],[5,7]] is [[4]]"""
        x = Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))
        np.testing.assert_array_equal(down2(x).data, [[[[4.0]]]])

    @pytest.mark.parametrize("mode", ["down2", "up2"])
    def test_constants_are_fixed_points(self, mode):
        """Averaging and interpolation keep constants"""
        x = Tensor(np.full((1, 2, 4, 6), 0.375))
        np.testing.assert_array_equal(resample(x, mode).data, 0.375)

    def test_down2_needs_even_extent(self):
        """Odd extents cannot be pooled"""
        with pytest.raises(DimensionError):
            down2(Tensor(np.ones((1, 1, 3, 4))))

    def test_unknown_mode(self):
        """Only down2 and up2 exist"""
        with pytest.raises(ContractError):
            resample(Tensor(np.ones((1, 1, 2, 2))), "up3")

    @settings(max_examples=30, deadline=None)
    @given(h=st.integers(1, 9), w=st.integers(1, 9), seed=st.integers(0, 2**16))
    def test_up2_preserves_mean(self, h, w, seed):
        """up2 keeps the spatial mean"""
        x = np.random.default_rng(seed).normal(size=(1, 2, h, w))
        with precision("float64"):
            out = up2(Tensor(x))
        assert out.shape == (1, 2, 2 * h, 2 * w)
        np.testing.assert_allclose(out.data.mean(axis=(2, 3)), x.mean(axis=(2, 3)), atol=1e-12)

    def test_global_avg_pool(self):
        """Pooling matches direct summation; single pixels pass through"""
        x = np.random.default_rng(4).normal(size=(2, 3, 5, 4))
        with precision("float64"):
            np.testing.assert_allclose(global_avg_pool(Tensor(x)).data[..., 0, 0], x.sum(axis=(2, 3)) / 20, atol=1e-12)
            single = Tensor(x[:, :, :1, :1])
            np.testing.assert_array_equal(global_avg_pool(single).data, single.data)
        np.testing.assert_array_equal(global_avg_pool(Tensor(np.ones((1, 2, 3, 3)))).data, 1.0)


def _directional_loss(op, inputs, direction):
    return lambda: mean(mul(op(*inputs), direction))


def _draw(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


def _unary(fn):
    def case(rng):
        return fn, [(_draw(rng, 1, 2), _draw(rng, 1, 4), _draw(rng, 1, 5))]

    return case


def _mul_broadcast(rng):
    n, c, h, w = _draw(rng, 1, 2), _draw(rng, 1, 3), _draw(rng, 1, 4), _draw(rng, 1, 4)
    return mul, [(n, c, h, w), (n, c, 1, 1)]


def _add_broadcast(rng):
    n, c, h, w = _draw(rng, 1, 2), _draw(rng, 1, 3), _draw(rng, 1, 4), _draw(rng, 1, 4)
    return add, [(n, c, h, w), (1, c, 1, w)]


def _sub(rng):
    shape = (_draw(rng, 1, 4), _draw(rng, 1, 5))
    return sub, [shape, shape]


def _reshape(rng):
    n, c, h = _draw(rng, 1, 2), _draw(rng, 1, 4), _draw(rng, 1, 5)
    return (lambda x: reshape(x, (n * c, h))), [(n, c, h)]


def _broadcast_to(rng):
    n, c, h, w = _draw(rng, 1, 2), _draw(rng, 1, 3), _draw(rng, 1, 4), _draw(rng, 1, 4)
    return (lambda x: broadcast_to(x, (n, c, h, w))), [(n, c, 1, 1)]


def _concat(rng):
    h, w = _draw(rng, 1, 4), _draw(rng, 1, 4)
    return (lambda a, b: concat([a, b], axis=1)), [(1, _draw(rng, 1, 3), h, w), (1, _draw(rng, 1, 3), h, w)]


def _narrow(rng):
    c = _draw(rng, 2, 5)
    return (lambda x: narrow(x, 1, 1, c - 1)), [(_draw(rng, 1, 2), c, _draw(rng, 1, 4))]


def _conv2d(rng):
    k = int(rng.choice([1, 3]))
    cin, cout = _draw(rng, 1, 3), _draw(rng, 1, 3)
    shapes = [(_draw(rng, 1, 2), cin, _draw(rng, k, 6), _draw(rng, k, 6)), (cout, cin, k, k), (cout,)]
    return (lambda x, w, b: conv2d(x, w, b, padding=k // 2)), shapes


def _conv2d_strided(rng):
    cin, cout = _draw(rng, 1, 2), _draw(rng, 1, 2)
    return (lambda x, w: conv2d(x, w, stride=2, padding=1)), [(1, cin, _draw(rng, 3, 7), _draw(rng, 3, 7)), (cout, cin, 3, 3)]


def _conv2d_grouped(rng):
    groups, k = _draw(rng, 1, 3), int(rng.choice([3, 5]))
    cin, cout = groups * _draw(rng, 1, 2), groups * _draw(rng, 1, 2)
    shapes = [(1, cin, _draw(rng, 3, 6), _draw(rng, 3, 6)), (cout, cin // groups, k, k)]
    return (lambda x, w: conv2d(x, w, padding=k // 2, groups=groups)), shapes


def _down2(rng):
    return down2, [(_draw(rng, 1, 2), _draw(rng, 1, 3), 2 * _draw(rng, 1, 4), 2 * _draw(rng, 1, 4))]


def _image(fn):
    def case(rng):
        return fn, [(_draw(rng, 1, 2), _draw(rng, 1, 3), _draw(rng, 1, 5), _draw(rng, 1, 5))]

    return case


GRADIENT_CASES = {
    "sigmoid": _unary(sigmoid),
    "tanh": _unary(tanh),
    "softplus": _unary(softplus),
    "relu": _unary(relu),
    "leaky_relu": _unary(lambda x: leaky_relu(x, 0.2)),
    "abs": _unary(abs_),
    "clamp": _unary(lambda x: clamp(x, -0.5, 0.5)),
    "mul_broadcast": _mul_broadcast,
    "add_broadcast": _add_broadcast,
    "sub": _sub,
    "sum_axis": _unary(lambda x: sum_(x, axis=1, keepdims=True)),
    "mean_axes": _image(lambda x: mean(x, axis=(2, 3))),
    "softmax": _unary(lambda x: softmax(x, axis=1)),
    "reshape": _reshape,
    "broadcast_to": _broadcast_to,
    "concat": _concat,
    "narrow": _narrow,
    "conv2d": _conv2d,
    "conv2d_strided": _conv2d_strided,
    "conv2d_grouped": _conv2d_grouped,
    "down2": _down2,
    "up2": _image(up2),
    "global_avg_pool": _image(global_avg_pool),
}


@pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
@pytest.mark.parametrize("seed", range(10))
def test_primitive_gradients(name, seed):
    """Every primitive matches central finite differences in 64-bit mode on a random small shape"""
    rng = np.random.default_rng(seed)
    op, shapes = GRADIENT_CASES[name](rng)
    with precision("float64"):
        inputs = [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]
        with no_grad():
            direction = Tensor(rng.normal(size=op(*inputs).shape))
        assert gradcheck(_directional_loss(op, inputs, direction), inputs, eps=1e-6) <= 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_float32_gradients_are_close(seed):
    """32-bit mode stays within 1e-3 at eps=1e-2"""
    rng = np.random.default_rng(seed)
    cin, cout = _draw(rng, 1, 2), _draw(rng, 1, 2)
    x = Tensor(rng.normal(size=(1, cin, _draw(rng, 4, 6), _draw(rng, 4, 6))), requires_grad=True)
    w = Tensor(rng.normal(size=(cout, cin, 3, 3)), requires_grad=True)
    assert x.data.dtype == np.float32
    assert gradcheck(lambda: mean(mul(conv2d(x, w, padding=1), conv2d(x, w, padding=1))), [x, w], eps=1e-2) <= 1e-3


class TestGradcheck:
    def test_several_steps_keep_the_best(self):
        """A kink inside the large step is forgiven when a small step agrees"""
        with precision("float64"):
            x = Tensor(np.array([1e-5]), requires_grad=True)
            assert gradcheck(lambda: sum_(abs_(x)), [x], eps=1e-3) > 0.5
            assert gradcheck(lambda: sum_(abs_(x)), [x], eps=(1e-3, 1e-7)) <= 1e-6

    def test_smooth_function_agrees(self):
        """Quadratics agree at every step size, sampled or not"""
        with precision("float64"):
            x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
            assert gradcheck(lambda: sum_(mul(x, x)), [x], eps=(1e-4, 1e-6)) <= 1e-8
            assert gradcheck(lambda: sum_(mul(x, x)), [x], eps=(1e-4, 1e-6), samples=1) <= 1e-8
