#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
#   Copyright 2026 Kaede Hoshikawa
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.

from test_helper import TestHelper
import numpy as np
import pytest

from prunedistill import (
    BackwardError,
    DimensionError,
    Tensor,
    binary_cross_entropy,
    conv2d,
    cross_entropy,
    global_avg_pool,
    is_grad_enabled,
    linear,
    max_pool2x2,
    mse_loss,
    no_grad,
    relu,
    resize_bilinear,
    sigmoid,
    to_half_precision,
)

helper = TestHelper()


def away_from_zero(shape, seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 1.0, size=shape)

    return values * rng.choice([-1.0, 1.0], size=shape)


class TensorTestCase:
    def test_init_copies(self):
        arr = np.ones(3)
        t = Tensor(arr)
        arr[0] = 5

        assert t.data[0] == 1.0
        assert t.dtype == np.float64
        assert t.is_leaf

    def test_integer_data_becomes_float(self):
        assert Tensor([1, 2, 3]).dtype == np.float64

    def test_data_setter_checks_shape(self):
        t = Tensor(np.zeros(3))

        with pytest.raises(DimensionError):
            t.data = np.zeros(4)

    def test_backward_needs_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)

        with pytest.raises(BackwardError):
            (t * 2.0).backward()

    def test_backward_needs_grad(self):
        with pytest.raises(BackwardError):
            Tensor(np.ones(3)).sum().backward()

    def test_reused_tensor_accumulates(self):
        x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        (x * x).sum().backward()

        np.testing.assert_allclose(x.grad, [2.0, -4.0, 6.0])

    def test_grads_accumulate_across_calls(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        x.sum().backward()
        x.sum().backward()

        np.testing.assert_allclose(x.grad, [2.0, 2.0])

        x.zero_grad()
        assert x.grad is None

    def test_no_grad(self):
        x = Tensor(np.ones(2), requires_grad=True)

        with no_grad():
            assert not is_grad_enabled()
            y = x * 3.0

        assert is_grad_enabled()
        assert not y.requires_grad

    def test_detach(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = (x * 2.0).detach()

        assert not y.requires_grad
        assert y.is_leaf

    def test_item(self):
        assert Tensor(np.array([[2.5]])).item() == 2.5

        with pytest.raises(DimensionError):
            Tensor(np.ones(2)).item()

    def test_arithmetic_gradients(self):
        def fn(a, b):
            return helper.weighted_sum((a * b + a - b * 2.0) / 3.0 - (-a))

        helper.check_gradients(
            fn,
            helper.rng.normal(size=(2, 3)),
            helper.rng.normal(size=(1, 3)),
        )

    def test_indexing_and_reshape_gradients(self):
        def fn(a):
            return helper.weighted_sum(a.reshape(3, 4)[:, 1:3].reshape(6))

        helper.check_gradients(fn, helper.rng.normal(size=(2, 6)))

    def test_mean_gradient(self):
        helper.check_gradients(
            lambda a: (a * a).mean(), helper.rng.normal(size=(4, 2))
        )


class OperationGradientTestCase:
    def test_relu(self):
        helper.check_gradients(
            lambda x: helper.weighted_sum(relu(x)),
            away_from_zero((2, 3, 4), 0),
        )

    def test_sigmoid(self):
        helper.check_gradients(
            lambda x: helper.weighted_sum(sigmoid(x)),
            helper.rng.normal(size=(3, 5)) * 3.0,
        )

    @pytest.mark.parametrize(
        "stride,padding", [(1, 0), (1, 1), (2, 1)], ids=str
    )
    def test_conv2d(self, stride, padding):
        def fn(x, w, b):
            return helper.weighted_sum(
                conv2d(x, w, b, stride=stride, padding=padding)
            )

        helper.check_gradients(
            fn,
            helper.rng.normal(size=(2, 3, 5, 5)),
            helper.rng.normal(size=(4, 3, 3, 3)),
            helper.rng.normal(size=(4,)),
        )

    def test_conv2d_without_bias(self):
        helper.check_gradients(
            lambda x, w: helper.weighted_sum(conv2d(x, w)),
            helper.rng.normal(size=(1, 2, 4, 4)),
            helper.rng.normal(size=(3, 2, 1, 1)),
        )

    def test_conv2d_shapes(self):
        out = conv2d(
            Tensor(np.zeros((2, 3, 8, 8))),
            Tensor(np.zeros((5, 3, 3, 3))),
            stride=2,
            padding=1,
        )

        assert out.shape == (2, 5, 4, 4)

        with pytest.raises(DimensionError):
            conv2d(
                Tensor(np.zeros((2, 4, 8, 8))),
                Tensor(np.zeros((5, 3, 3, 3))),
            )

    def test_max_pool(self):
        values = helper.rng.permutation(64).reshape(1, 1, 8, 8) / 10.0

        helper.check_gradients(
            lambda x: helper.weighted_sum(max_pool2x2(x)), values
        )

        out = max_pool2x2(Tensor(values))
        assert out.shape == (1, 1, 4, 4)
        assert out.data[0, 0, 0, 0] == values[0, 0, :2, :2].max()

    def test_global_avg_pool(self):
        helper.check_gradients(
            lambda x: helper.weighted_sum(global_avg_pool(x)),
            helper.rng.normal(size=(2, 3, 4, 4)),
        )

    def test_linear(self):
        helper.check_gradients(
            lambda x, w, b: helper.weighted_sum(linear(x, w, b)),
            helper.rng.normal(size=(4, 5)),
            helper.rng.normal(size=(3, 5)),
            helper.rng.normal(size=(3,)),
        )

    @pytest.mark.parametrize("size", [(8, 6), (2, 3), (4, 4)], ids=str)
    def test_resize_bilinear(self, size):
        helper.check_gradients(
            lambda x: helper.weighted_sum(resize_bilinear(x, size)),
            helper.rng.normal(size=(1, 2, 4, 3)),
        )

    def test_mse_loss(self):
        target = helper.rng.normal(size=(3, 4))

        helper.check_gradients(
            lambda x: mse_loss(x, target), helper.rng.normal(size=(3, 4))
        )

    def test_binary_cross_entropy(self):
        target = (helper.rng.uniform(size=(2, 6)) > 0.5).astype(float)

        helper.check_gradients(
            lambda p: binary_cross_entropy(p, target),
            helper.rng.uniform(0.1, 0.9, size=(2, 6)),
        )

    def test_cross_entropy(self):
        labels = np.array([0, 2, 1])

        helper.check_gradients(
            lambda z: cross_entropy(z, labels),
            helper.rng.normal(size=(3, 3)),
        )

    def test_half_precision_passes_gradient_through(self):
        x = Tensor(helper.rng.normal(size=(2, 3)), requires_grad=True)
        to_half_precision(x).sum().backward()

        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


class OperationValueTestCase:
    def test_resize_same_size_is_identity(self):
        x = Tensor(helper.rng.normal(size=(1, 2, 4, 4)))

        assert resize_bilinear(x, (4, 4)) is x

    def test_resize_preserves_constants(self):
        x = Tensor(np.full((1, 1, 2, 2), 3.0))

        np.testing.assert_allclose(resize_bilinear(x, (5, 3)).data, 3.0)

    def test_resize_half_pixel_centres(self):
        ramp = Tensor(np.arange(4.0).reshape(1, 1, 1, 4))

        np.testing.assert_allclose(
            resize_bilinear(ramp, (1, 2)).data.ravel(), [0.5, 2.5]
        )

    def test_half_precision_rounds_and_saturates(self):
        x = Tensor(np.array([1.0 / 3.0, 1e6, -1e6]))
        out = to_half_precision(x).data

        assert out[0] == float(np.float16(1.0 / 3.0))
        assert out[1] == 65504.0
        assert out[2] == -65504.0
        assert out.dtype == np.float64

    def test_bce_clamps_probabilities(self):
        p = Tensor(np.array([0.0, 1.0]))
        loss = binary_cross_entropy(p, np.array([1.0, 0.0]))

        assert np.isfinite(loss.item())
        assert loss.item() == pytest.approx(-np.log(1e-7), rel=1e-6)

    def test_cross_entropy_value(self):
        loss = cross_entropy(Tensor(np.zeros((2, 2))), np.array([0, 1]))

        assert loss.item() == pytest.approx(np.log(2.0))

    def test_mse_mismatched_shapes(self):
        with pytest.raises(DimensionError):
            mse_loss(Tensor(np.zeros(3)), np.zeros(4))
