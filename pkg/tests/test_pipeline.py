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

import json

from test_helper import TestHelper
import pytest

from prunedistill import (
    METRICS_NOTE,
    CheckpointMalformedError,
    PipelineConfig,
    DependencyError,
    build_reference_graph,
    cmd_collect,
    cmd_distill,
    cmd_eval,
    cmd_plan,
    cmd_prune,
    cmd_train,
    file_sha256,
    load_checkpoint,
    load_plan,
    load_stats,
    parameter_count,
    predicted_parameter_count,
    save_checkpoint,
)
from prunedistill.codecs import parse_json_lines

helper = TestHelper()

ALL_SAFE = {"theta_max": 2.0, "theta_avg": 2.0}


def run_until(cfg, stage):
    summaries = {}

    for name, cmd in [
        ("train", cmd_train),
        ("collect", cmd_collect),
        ("plan", cmd_plan),
        ("prune", cmd_prune),
        ("distill", cmd_distill),
    ]:
        summaries[name] = cmd(cfg)

        if name == stage:
            break

    return summaries


class PipelineTestCase:
    def test_full_chain(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path, pruning=ALL_SAFE)
        summaries = run_until(cfg, "distill")
        report = cmd_eval(cfg)

        assert [row["name"] for row in report["rows"]] == [
            "teacher",
            "pruned",
            "student",
        ]

        assert (tmp_path / "logs" / "train.jsonl").exists()
        assert (tmp_path / "logs" / "distill.jsonl").exists()

        document = json.loads((tmp_path / "report.json").read_text())

        assert document["note"] == METRICS_NOTE
        assert document["ablation"] is False

        student = load_checkpoint(tmp_path / "student.ckpt")

        assert student.metadata["plan_hash"] == summaries["plan"]["plan_hash"]
        assert student.metadata["teacher_hash"] == file_sha256(
            tmp_path / "teacher.ckpt"
        )

    def test_train_is_deterministic(self, tmp_path):
        checksums = []

        for name, seed in [("a", 3), ("b", 3), ("c", 4)]:
            cfg = helper.pipeline_config(tmp_path / name).with_seed(seed)
            summary = cmd_train(cfg)
            checksums.append(
                load_checkpoint(summary["checkpoint"]).model.checksum()
            )

        assert checksums[0] == checksums[1]
        assert checksums[2] != checksums[0]

    def test_collect_records(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path)
        run_until(cfg, "collect")

        records = parse_json_lines((tmp_path / "stats.jsonl").read_text())
        kinds = [record["kind"] for record in records]

        assert kinds == ["meta"] + ["importance"] * 9 + ["conflict"] * 3

        meta, stats = load_stats(cfg)

        assert meta["teacher_hash"] == file_sha256(tmp_path / "teacher.ckpt")
        assert [s.layer_id for s in stats] == [
            "backbone.conv1",
            "backbone.conv2",
            "backbone.conv3",
        ]
        assert all(s.sample_count == 2 for s in stats)

    def test_plan_hash_is_stable(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path)
        first = run_until(cfg, "plan")["plan"]
        second = cmd_plan(cfg)

        assert first["plan_hash"] == second["plan_hash"]
        assert load_plan(cfg).plan_hash == first["plan_hash"]
        assert "C before" in first["table"]

    def test_reduction_matches_prediction(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path, pruning=ALL_SAFE)
        summary = run_until(cfg, "prune")["prune"]
        graph = build_reference_graph(cfg.model)
        plan = load_plan(cfg)

        assert summary["parameters_before"] == parameter_count(graph)
        assert summary["parameters_after"] == predicted_parameter_count(
            graph, plan
        )
        assert summary["parameters_after"] < summary["parameters_before"]
        assert summary["reduction_percent"] == pytest.approx(
            100.0
            * (summary["parameters_before"] - summary["parameters_after"])
            / summary["parameters_before"]
        )
        assert [layer.kept_count for layer in plan.layers.values()] == [
            8,
            16,
            24,
        ]

    def test_prune_before_collect(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path)
        cmd_train(cfg)

        with pytest.raises(DependencyError):
            cmd_prune(cfg)

        with pytest.raises(DependencyError):
            cmd_plan(cfg)

    def test_collect_before_train(self, tmp_path):
        with pytest.raises(DependencyError, match="train"):
            cmd_collect(helper.pipeline_config(tmp_path))

    def test_changed_teacher(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path)
        run_until(cfg, "plan")

        teacher = load_checkpoint(tmp_path / "teacher.ckpt")
        save_checkpoint(
            tmp_path / "teacher.ckpt",
            teacher.model,
            {**teacher.metadata, "retrained": True},
        )

        with pytest.raises(DependencyError, match="changed"):
            cmd_prune(cfg)

    def test_stale_pruned_checkpoint(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path, pruning=ALL_SAFE)
        run_until(cfg, "prune")

        other = helper.pipeline_config(tmp_path, pruning={"rate": 0.6})
        cmd_plan(other)

        with pytest.raises(DependencyError, match="current plan"):
            cmd_distill(other)

    def test_tampered_plan(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path)
        run_until(cfg, "plan")

        path = tmp_path / "plan.json"
        document = json.loads(path.read_text())
        document["teacher_hash"] = "0" * 64
        path.write_text(json.dumps(document))

        with pytest.raises(CheckpointMalformedError):
            load_plan(cfg)

    def test_ablation(self, tmp_path):
        cfg = helper.pipeline_config(tmp_path, pruning=ALL_SAFE)
        run_until(cfg, "collect")

        report = cmd_eval(cfg, ablation=True)
        names = [row["name"] for row in report["rows"]]

        assert names == ["teacher", "+TCI", "+TCI+GCP", "+TCI+GCP+KD"]
        assert report["rows"][1]["parameters"] < (
            report["rows"][0]["parameters"]
        )
        assert report["rows"][3]["parameters"] == (
            report["rows"][2]["parameters"]
        )
        assert (tmp_path / "logs" / "ablation.jsonl").exists()

    def test_distillation_recovers_pruning_loss(self, tmp_path):
        for seed in [0, 1, 2]:
            cfg = helper.pipeline_config(
                tmp_path / str(seed),
                dataset={"n_train": 32, "n_val": 16},
                train={"epochs": 3},
                pruning=ALL_SAFE,
                distill={"epochs": 4},
            ).with_seed(seed)
            run_until(cfg, "collect")

            rows = {
                row["name"]: row
                for row in cmd_eval(cfg, ablation=True)["rows"]
            }

            assert rows["+TCI+GCP+KD"]["losses"]["total"] <= (
                rows["+TCI"]["losses"]["total"]
            )


class DefaultConfigTestCase:
    def test_reference_model_with_default_thresholds(self, tmp_path):
        cfg = PipelineConfig().with_workdir(tmp_path)

        train = cmd_train(cfg)

        assert train["final_val_total"] < train["initial_val_total"]

        cmd_collect(cfg)
        cmd_plan(cfg)
        summary = cmd_prune(cfg)
        plan = load_plan(cfg)

        assert 20.0 <= summary["reduction_percent"] <= 40.0
        assert sum(layer.unsafe_count for layer in plan.layers.values()) > 0
        assert summary["parameters_before"] == 79400

        for layer in plan.layers.values():
            assert layer.kept_count % 8 == 0 or layer.shortfall

            for index in layer.pruned_indices:
                assert layer.safe[index]
