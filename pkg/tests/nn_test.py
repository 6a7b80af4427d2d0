import numpy as np
import pytest

from hpgn.errors import CheckpointError, ContractError, NumericError
from hpgn.nn import MLP, Conv2d, Module, ModuleList, Parameter
from hpgn.optim import Adam, AdamMoments, adam_step, block_of
from hpgn.tensor import Tensor, mul, precision, sum_


class Pair(Module):
    def __init__(self, rng):
        super().__init__()
        self.first = Conv2d(2, 3, 3, rng)
        self.stack = ModuleList([Conv2d(3, 3, 1, rng, bias=False) for _ in range(2)])
        self.scale = Parameter(np.ones(3))


class TestModule:
    def test_names_follow_attribute_paths(self):
        """Parameters are named by their attribute path, in registration order"""
        model = Pair(np.random.default_rng(0))
        assert list(model.params()) == ["scale", "first.weight", "first.bias", "stack.0.weight", "stack.1.weight"]

    def test_parameter_count(self):
        """Counts every scalar weight"""
        model = Pair(np.random.default_rng(0))
        assert model.parameter_count() == 3 + (3 * 2 * 9 + 3) + 2 * 9

    def test_state_dict_round_trip(self):
        """Loading a state dict reproduces the weights of another instance"""
        source = Pair(np.random.default_rng(1))
        target = Pair(np.random.default_rng(2))
        target.load_state_dict(source.state_dict())
        for name, param in target.params().items():
            np.testing.assert_array_equal(param.data, source.params()[name].data)

    def test_load_rejects_mismatches(self):
        """Unknown names or shapes are refused"""
        model = Pair(np.random.default_rng(0))
        state = model.state_dict()
        with pytest.raises(CheckpointError):
            model.load_state_dict({**state, "extra": np.zeros(1)})
        with pytest.raises(CheckpointError):
            model.load_state_dict({**state, "scale": np.zeros(4)})

    def test_zero_parameters(self):
        """zero_parameters clears every weight"""
        model = Pair(np.random.default_rng(0)).zero_parameters()
        assert all(not np.any(p.data) for p in model.parameters())

    def test_astype(self):
        """astype converts parameters for 64-bit checks"""
        model = Pair(np.random.default_rng(0)).astype(np.float64)
        assert all(p.dtype == np.float64 for p in model.parameters())

    def test_mlp_shape(self):
        """An MLP maps N×F×1×1 to N×out×1×1"""
        with precision("float64"):
            mlp = MLP([4, 8, 8, 6], np.random.default_rng(0))
            out = mlp(Tensor(np.ones((2, 4, 1, 1))))
        assert out.shape == (2, 6, 1, 1)
        assert mlp.head is mlp.layers[2]


def _bowl(values):
    params = {"bowl.w": Parameter(np.array(values))}
    return params, params["bowl.w"]


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        """A zero gradient moves nothing"""
        with precision("float64"):
            params, w = _bowl([1.0, -2.0])
            before = w.data.copy()
            adam_step(params, {"bowl.w": np.zeros(2)}, AdamMoments(), 2e-4, 0.9, 0.999, 1e-8, 1)
        np.testing.assert_array_equal(w.data, before)

    def test_first_step_is_sign_of_gradient(self):
        """From zero moments the first update is -lr·sign(g)"""
        with precision("float64"):
            params, w = _bowl([0.0, 0.0, 0.0])
            adam_step(params, {"bowl.w": np.array([0.3, -5.0, 2e-2])}, AdamMoments(), 1e-3, 0.9, 0.999, 1e-8, 1)
        np.testing.assert_allclose(w.data, [-1e-3, 1e-3, -1e-3], rtol=1e-5)

    def test_quadratic_bowl_descends(self):
        """100 steps on sum(w²)/2 decrease the loss monotonically after step 5"""
        with precision("float64"):
            params, w = _bowl([2.0, -3.0, 5.0])
            optimizer = Adam(params, lr=1e-2)
            losses = []
            for _ in range(100):
                optimizer.zero_grad()
                loss = mul(sum_(mul(w, w)), 0.5)
                losses.append(loss.item())
                loss.backward()
                optimizer.step()
        assert all(b < a for a, b in zip(losses[5:], losses[6:]))
        assert optimizer.t == 100

    def test_non_finite_gradient_names_block(self):
        """NaN gradients abort the step and name the parameter block"""
        params, w = _bowl([1.0])
        before = w.data.copy()
        with pytest.raises(NumericError, match="bowl"):
            adam_step(params, {"bowl.w": np.array([np.nan])}, AdamMoments(), 1e-3, 0.9, 0.999, 1e-8, 1)
        np.testing.assert_array_equal(w.data, before)

    def test_step_index_starts_at_one(self):
        """t = 0 has no bias correction and is refused"""
        params, _ = _bowl([1.0])
        with pytest.raises(ContractError):
            adam_step(params, {"bowl.w": np.ones(1)}, AdamMoments(), 1e-3, 0.9, 0.999, 1e-8, 0)

    def test_state_round_trip(self):
        """Restored moments continue identically"""
        with precision("float64"):
            params_a, w_a = _bowl([1.0, 2.0])
            params_b, w_b = _bowl([1.0, 2.0])
            first = Adam(params_a, lr=0.1)
            second = Adam(params_b, lr=0.1)
            for optimizer, w in ((first, w_a), (second, w_b)):
                w.grad = np.array([0.5, -0.25])
                optimizer.step()
            second.load_state_dict(first.state_dict(), first.t)
            for optimizer, w in ((first, w_a), (second, w_b)):
                w.grad = np.array([0.1, 0.2])
                optimizer.step()
        np.testing.assert_array_equal(w_a.data, w_b.data)
        assert set(first.state_dict()) == {"adam.m.bowl.w", "adam.v.bowl.w"}

    def test_block_of(self):
        """Blocks are the first name segment"""
        assert block_of("enhancer.rmrbs.0.tail.weight") == "enhancer"
