"""Tensor construction, the tape, and gradient rules of the base primitives."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gramnet.errors import ContractError, InvalidShapeError
from gramnet.tensor import (Tape, Tensor, add, backward, matmul, mul, scale,
                            tensor_new, tsum)

from helpers import check_grads


class TestTensorNew:
    def test_zero_fill(self):
        t = tensor_new([2, 2], 0.0)
        assert t.shape == (2, 2)
        assert np.array_equal(t.data, np.zeros((2, 2), np.float32))

    def test_constant_fill(self):
        t = tensor_new([3], 1.0)
        assert np.array_equal(t.data, np.ones(3, np.float32))

    @pytest.mark.parametrize("shape", [[2, 0], [0], [3, -1]])
    def test_degenerate_extent_rejected(self, shape):
        with pytest.raises(InvalidShapeError):
            tensor_new(shape)

    def test_rank_5_rejected(self):
        with pytest.raises(InvalidShapeError):
            tensor_new([2, 2, 2, 2, 2])

    def test_glorot_bounds_and_determinism(self):
        shape = (8, 4, 3, 3)
        a = tensor_new(shape, "glorot_uniform", rng=np.random.default_rng(5))
        b = tensor_new(shape, "glorot_uniform", rng=np.random.default_rng(5))
        assert np.array_equal(a.data, b.data)
        limit = np.sqrt(6.0 / (4 * 9 + 8 * 9))
        assert np.abs(a.data).max() <= limit

    def test_glorot_needs_rng(self):
        with pytest.raises(ContractError):
            tensor_new([2, 2], "glorot_uniform")

    def test_unknown_rule(self):
        with pytest.raises(ContractError):
            tensor_new([2, 2], "kaiming")

    def test_grad_slot_absent_until_backward(self):
        t = tensor_new([2], 0.0, requires_grad=True)
        assert t.grad is None


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.array([3.0, 4.0, 5.0]), requires_grad=True)
        with Tape() as tape:
            loss = tsum(x)
        backward(tape, loss)
        assert np.array_equal(x.grad, np.ones(3, np.float32))

    def test_quadratic_hand_gradient(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            loss = tsum(mul(x, x))
        tape.backward(loss)
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_accumulation_over_two_uses(self):
        x = Tensor(np.ones(4), requires_grad=True)
        with Tape() as tape:
            loss = add(tsum(x), tsum(x))
        tape.backward(loss)
        assert np.array_equal(x.grad, 2 * np.ones(4, np.float32))

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)

    def test_loss_not_from_tape_rejected(self):
        x = Tensor(np.ones(1), requires_grad=True)
        with Tape() as tape:
            pass
        with pytest.raises(ContractError):
            tape.backward(x)

    def test_no_recording_outside_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = mul(x, x)
        tape = Tape()
        assert tape.nodes == []
        assert y.requires_grad


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        m = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
        assert np.array_equal(matmul(eye, m).data, m.data)

    def test_hand_inner_product(self):
        a = Tensor(np.array([[1.0, 2.0]]))
        b = Tensor(np.array([[3.0], [4.0]]))
        assert np.array_equal(matmul(a, b).data, [[11.0]])

    def test_inner_extent_mismatch(self):
        a = Tensor(np.ones((2, 3)))
        with pytest.raises(InvalidShapeError):
            matmul(a, Tensor(np.ones((2, 3))))

    def test_rank_1_rejected(self):
        with pytest.raises(InvalidShapeError):
            matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


class TestElementwise:
    def test_add_shape_mismatch(self):
        with pytest.raises(InvalidShapeError):
            add(Tensor(np.ones(2)), Tensor(np.ones(3)))

    def test_scale(self):
        x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        with Tape() as tape:
            loss = tsum(scale(x, 2.5))
        tape.backward(loss)
        assert np.allclose(x.grad, [2.5, 2.5])


class TestDeterminism:
    def test_forward_bit_identity(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(3, 4)).astype(np.float32)
        a = matmul(Tensor(data), Tensor(data.T))
        b = matmul(Tensor(data.copy()), Tensor(data.T.copy()))
        assert np.array_equal(a.data, b.data)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.data())
def test_accumulation_property(rank, extent, data):
    """A leaf used k times receives k times the single-use gradient."""
    shape = tuple(data.draw(st.integers(1, 4)) for _ in range(rank))
    x = Tensor(np.random.default_rng(extent).normal(size=shape), requires_grad=True)
    k = data.draw(st.integers(2, 4))
    with Tape() as tape:
        total = tsum(x)
        for _ in range(k - 1):
            total = add(total, tsum(x))
    tape.backward(total)
    assert np.allclose(x.grad, k * np.ones(shape))


class TestGradientChecks:
    """Finite-difference oracle for the base primitives, at 64-bit."""

    @pytest.mark.parametrize("seed", range(20))
    def test_matmul(self, seed):
        rng = np.random.default_rng(1000 + seed)
        m, k, n = rng.integers(1, 5, size=3)
        a = Tensor(rng.normal(size=(m, k)), requires_grad=True)
        b = Tensor(rng.normal(size=(k, n)), requires_grad=True)
        check_grads(lambda: matmul(a, b), [a, b], rng)

    @pytest.mark.parametrize("seed", range(20))
    def test_mul_add_sum(self, seed):
        rng = np.random.default_rng(2000 + seed)
        shape = tuple(rng.integers(1, 5, size=rng.integers(1, 5)))
        a = Tensor(rng.normal(size=shape), requires_grad=True)
        b = Tensor(rng.normal(size=shape), requires_grad=True)

        def f(a, b):
            return mul(add(a, b), a)

        check_grads(lambda: f(a, b), [a, b], rng)

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_op(self, seed):
        rng = np.random.default_rng(3000 + seed)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        check_grads(lambda: scale(x, -1.75), [x], rng)
