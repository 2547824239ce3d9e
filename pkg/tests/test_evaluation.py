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
import pytest

from prunedistill import (
    METRICS_NOTE,
    ConfigurationError,
    EvalConfig,
    apply_plan,
    compare_reports,
    evaluate_model,
    measure_latency,
)

helper = TestHelper()

TINY_EVAL = EvalConfig(batch_size=8, latency_runs=2)


class EvaluateModelTestCase:
    def test_ranges(self):
        model = helper.tiny_model()
        report = evaluate_model(model, helper.tiny_samples(8), TINY_EVAL)

        for value in [
            report.da_pixel_accuracy,
            report.lane_pixel_accuracy,
            report.class_accuracy,
        ]:
            assert 0.0 <= value <= 1.0

        assert report.box_mse >= 0.0
        assert report.parameters == model.num_parameters()
        assert report.latency_ms is not None and report.latency_ms > 0.0
        assert set(report.losses) == {"det", "da", "lane", "total"}

    def test_self_comparison_is_zero(self):
        model = helper.tiny_model()
        samples = helper.tiny_samples(8)

        diff = compare_reports(
            evaluate_model(model, samples, TINY_EVAL),
            evaluate_model(model.clone(), samples, TINY_EVAL),
        )

        assert diff
        assert all(value == 0.0 for value in diff.values())
        assert "latency_ms" not in diff

    def test_pruned_parameter_difference(self):
        model = helper.tiny_model()
        plan = helper.plan_from_indices(model.graph, {"backbone.conv1": [0]})
        samples = helper.tiny_samples(4)

        diff = compare_reports(
            evaluate_model(model, samples, measure_time=False),
            evaluate_model(
                apply_plan(model, plan), samples, measure_time=False
            ),
        )

        assert diff["parameters"] < 0

    def test_to_dict_carries_note(self):
        report = evaluate_model(
            helper.tiny_model(), helper.tiny_samples(4), measure_time=False
        )
        record = report.to_dict()

        assert record["note"] == METRICS_NOTE
        assert "not comparable" in METRICS_NOTE
        assert record["latency_ms"] is None

    def test_empty_samples(self):
        with pytest.raises(ConfigurationError):
            evaluate_model(helper.tiny_model(), [], TINY_EVAL)

    def test_latency(self):
        sample = helper.tiny_samples(1)[0]

        assert measure_latency(helper.tiny_model(), sample, 3) > 0.0
