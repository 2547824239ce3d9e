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
    ConfigurationError,
    DimensionError,
    LayerKind,
    LayerSpec,
    Tensor,
    forward,
    init_layer_parameters,
)

helper = TestHelper()


class LayerSpecTestCase:
    def test_conv_parameter_count(self):
        spec = LayerSpec("c", LayerKind.CONV2D, 3, 16, kernel=3)

        assert spec.weight_shape == (16, 3, 3, 3)
        assert spec.parameter_count == 16 * 3 * 9 + 16

    def test_linear_parameter_count(self):
        spec = LayerSpec("fc", LayerKind.LINEAR, 64, 6)

        assert spec.weight_shape == (6, 64)
        assert spec.parameter_count == 64 * 6 + 6

    def test_pass_through_has_no_parameters(self):
        spec = LayerSpec("r", LayerKind.RELU, 8, 8)

        assert spec.parameter_count == 0

        with pytest.raises(AttributeError):
            spec.weight_shape

    def test_only_convs_are_prunable(self):
        with pytest.raises(ConfigurationError):
            LayerSpec("r", LayerKind.RELU, 8, 8, prunable=True)

    def test_pass_through_keeps_channels(self):
        with pytest.raises(ConfigurationError):
            LayerSpec("r", LayerKind.RELU, 8, 4)

    def test_positive_sizes(self):
        with pytest.raises(ConfigurationError):
            LayerSpec("c", LayerKind.CONV2D, 0, 4)

    def test_dict_round_trip(self):
        spec = LayerSpec(
            "c",
            LayerKind.CONV2D,
            3,
            16,
            source="x",
            kernel=3,
            stride=2,
            padding=1,
            prunable=True,
        )

        assert LayerSpec.from_dict(spec.to_dict()) == spec
        assert spec.to_dict()["kind"] == "conv2d"


class LayerForwardTestCase:
    def test_init_parameters(self):
        spec = LayerSpec("c", LayerKind.CONV2D, 3, 8, kernel=3)
        params = init_layer_parameters(spec, np.random.default_rng(0))

        assert params.weight.shape == (8, 3, 3, 3)
        assert params.weight.dtype == np.float32
        assert params.weight.requires_grad
        np.testing.assert_array_equal(params.bias.data, np.zeros(8))

    def test_conv_forward(self):
        spec = LayerSpec(
            "c", LayerKind.CONV2D, 3, 8, kernel=3, stride=2, padding=1
        )
        params = init_layer_parameters(spec, np.random.default_rng(0))
        out = forward(spec, Tensor(np.zeros((2, 3, 8, 8))), params)

        assert out.shape == (2, 8, 4, 4)

    def test_upsample_uses_stride_as_scale(self):
        spec = LayerSpec("u", LayerKind.BILINEAR_UPSAMPLE, 2, 2, stride=2)
        out = forward(spec, Tensor(np.ones((1, 2, 3, 5))))

        assert out.shape == (1, 2, 6, 10)

    def test_pooling_kinds(self):
        x = Tensor(helper.rng.normal(size=(2, 4, 4, 4)))

        pooled = forward(LayerSpec("p", LayerKind.MAXPOOL2X2, 4, 4), x)
        gap = forward(LayerSpec("g", LayerKind.GLOBAL_AVG_POOL, 4, 4), x)

        assert pooled.shape == (2, 4, 2, 2)
        assert gap.shape == (2, 4)

    def test_channel_mismatch_names_layer(self):
        spec = LayerSpec("backbone.conv2", LayerKind.CONV2D, 16, 32)
        params = init_layer_parameters(spec, np.random.default_rng(0))

        with pytest.raises(DimensionError, match="backbone.conv2"):
            forward(spec, Tensor(np.zeros((1, 15, 4, 4))), params)

    def test_missing_parameters(self):
        spec = LayerSpec("fc", LayerKind.LINEAR, 4, 2)

        with pytest.raises(DimensionError):
            forward(spec, Tensor(np.zeros((1, 4))))
