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

from prunedistill import TrainingDivergedError, load_checkpoint, pipeline
from prunedistill.__main__ import (
    EXIT_CONFIG,
    EXIT_DEPENDENCY,
    EXIT_DIVERGED,
    EXIT_OK,
    main,
)

helper = TestHelper()


class MainTestCase:
    def test_train(self, tmp_path, capsys):
        path = helper.write_config(tmp_path)

        assert main(["train", "--config", str(path)]) == EXIT_OK

        summary = json.loads(capsys.readouterr().out)

        assert summary["epochs_run"] == 2
        assert (tmp_path / "teacher.ckpt").exists()

    def test_plan_prints_table(self, tmp_path, capsys):
        path = str(helper.write_config(tmp_path))

        for stage in ["train", "collect"]:
            assert main([stage, "--config", path]) == EXIT_OK

        capsys.readouterr()

        assert main(["plan", "--config", path]) == EXIT_OK

        out = capsys.readouterr().out

        assert out.startswith("layer")
        assert '"plan_hash"' in out

    def test_seed_override(self, tmp_path, capsys):
        path = helper.write_config(tmp_path)

        assert main(["train", "--config", str(path), "--seed", "9"]) == 0

        teacher = json.loads(capsys.readouterr().out)["checkpoint"]

        assert load_checkpoint(teacher).metadata["seed"] == 9

    def test_missing_config(self, tmp_path):
        code = main(["train", "--config", str(tmp_path / "absent.json")])

        assert code == EXIT_CONFIG

    def test_invalid_config(self, tmp_path):
        path = helper.write_config(tmp_path, pruning={"rate": 1.5})

        assert main(["plan", "--config", str(path)]) == EXIT_CONFIG

    def test_ablation_outside_eval(self, tmp_path):
        path = helper.write_config(tmp_path)

        assert (
            main(["train", "--config", str(path), "--ablation"])
            == EXIT_CONFIG
        )

    def test_missing_dependency(self, tmp_path):
        path = helper.write_config(tmp_path)

        assert main(["prune", "--config", str(path)]) == EXIT_DEPENDENCY
        assert main(["eval", "--config", str(path)]) == EXIT_DEPENDENCY

    def test_divergence(self, tmp_path, monkeypatch):
        def diverge(cfg):
            raise TrainingDivergedError("The total loss is not finite.")

        monkeypatch.setitem(pipeline.STAGES, "train", diverge)
        path = helper.write_config(tmp_path)

        assert main(["train", "--config", str(path)]) == EXIT_DIVERGED

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["bogus", "--config", "x.json"])

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])

        assert capsys.readouterr().out.strip() == helper.get_version_str()
