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
    Model,
    ModelGraph,
    Task,
    build_reference_graph,
    forward_with_taps,
    init_model,
    parameter_count,
)

helper = TestHelper()


class ModelGraphTestCase:
    def test_reference_parameter_count(self):
        graph = build_reference_graph()

        assert parameter_count(graph) == 79400
        assert init_model(graph, 0).num_parameters() == 79400

    def test_reference_prunable_layers(self):
        graph = build_reference_graph()

        assert [s.id for s in graph.prunable_layers] == [
            "backbone.conv1",
            "backbone.conv2",
            "backbone.conv3",
        ]

    def test_shared_layers(self):
        shared = build_reference_graph().shared_layers()

        assert "encoder.relu" in shared
        assert "backbone.conv1" in shared
        assert "det.fc" not in shared
        assert "da.conv" not in shared

    def test_heads_and_consumers(self):
        graph = build_reference_graph()

        assert graph.heads[Task.DA] == "da.out"
        assert {s.id for s in graph.consumers("encoder.relu")} == {
            "det.pool",
            "da.conv",
            "lane.conv",
        }
        assert ("backbone.conv1", "backbone.relu1") in graph.edges

    def test_producer_of(self):
        graph = build_reference_graph()

        assert graph.producer_of("backbone.relu2").id == "backbone.conv2"
        assert graph.producer_of("da.up3").id == "da.conv"

    def test_duplicate_ids(self):
        with pytest.raises(ConfigurationError):
            ModelGraph(
                [
                    LayerSpec("a", LayerKind.CONV2D, 3, 4),
                    LayerSpec("a", LayerKind.RELU, 4, 4, source="a"),
                ],
                heads={Task.DET: "a"},
            )

    def test_source_must_come_first(self):
        with pytest.raises(ConfigurationError):
            ModelGraph(
                [LayerSpec("a", LayerKind.RELU, 3, 3, source="b")],
                heads={Task.DET: "a"},
            )

    def test_prunable_must_be_shared(self):
        with pytest.raises(ConfigurationError):
            ModelGraph(
                [
                    LayerSpec("stem", LayerKind.CONV2D, 3, 8),
                    LayerSpec(
                        "a", LayerKind.CONV2D, 8, 8, "stem", prunable=True
                    ),
                    LayerSpec("b", LayerKind.CONV2D, 8, 8, "stem"),
                ],
                heads={Task.DET: "a", Task.DA: "b"},
            )

    def test_unknown_layer(self):
        with pytest.raises(ConfigurationError):
            build_reference_graph().layer("nope")

    def test_dict_round_trip(self):
        graph = helper.tiny_graph()

        assert ModelGraph.from_dict(graph.to_dict()) == graph

    def test_malformed_dict(self):
        with pytest.raises(ConfigurationError):
            ModelGraph.from_dict({"layers": [{"id": "x"}], "heads": {}})


class ModelTestCase:
    def test_forward_shapes(self):
        model = helper.tiny_model()
        images = helper.rng.uniform(size=(2, 3, 16, 16))

        predictions, features = forward_with_taps(
            model, images, ["backbone.conv3", "encoder.relu"]
        )

        assert predictions[Task.DET].shape == (2, 6)
        assert predictions[Task.DA].shape == (2, 1, 16, 16)
        assert predictions[Task.LANE].shape == (2, 1, 16, 16)
        assert features["backbone.conv3"].shape == (2, 32, 2, 2)
        assert list(features) == ["backbone.conv3", "encoder.relu"]

    def test_unknown_tap(self):
        with pytest.raises(ConfigurationError):
            forward_with_taps(
                helper.tiny_model(), np.zeros((1, 3, 16, 16)), ["nope"]
            )

    def test_only_tap_points_are_recorded(self):
        model = helper.tiny_model()

        assert "det.fc" in model.graph
        assert "det.fc" not in model.graph.tap_points

        with pytest.raises(ConfigurationError, match="tap point"):
            forward_with_taps(model, np.zeros((1, 3, 16, 16)), ["det.fc"])

    def test_images_must_be_4d(self):
        with pytest.raises(DimensionError):
            forward_with_taps(helper.tiny_model(), np.zeros((3, 16, 16)))

    def test_parameter_mapping_is_checked(self):
        model = helper.tiny_model()
        params = {
            spec.id: model.layer_parameters(spec.id)
            for spec in model.graph.parametric_layers[1:]
        }

        with pytest.raises(ConfigurationError):
            Model(model.graph, params)

    def test_named_parameters_follow_graph_order(self):
        names = [name for name, _ in helper.tiny_model().named_parameters()]

        assert names[:4] == [
            "backbone.conv1.weight",
            "backbone.conv1.bias",
            "backbone.conv2.weight",
            "backbone.conv2.bias",
        ]

    def test_init_is_deterministic(self):
        first = helper.tiny_model(5).checksum()

        assert helper.tiny_model(5).checksum() == first
        assert helper.tiny_model(6).checksum() != first

    def test_clone_is_independent(self):
        model = helper.tiny_model()
        copy = model.clone()
        before = model.checksum()

        copy.parameters()[0].data = copy.parameters()[0].data + 1.0

        assert model.checksum() == before
        assert copy.checksum() != before

    def test_clone_dtype(self):
        copy = helper.tiny_model().clone(dtype=np.float32)

        assert all(p.dtype == np.float32 for p in copy.parameters())

    def test_freeze(self):
        model = helper.tiny_model()

        assert not model.frozen
        assert model.freeze() is model
        assert model.frozen
