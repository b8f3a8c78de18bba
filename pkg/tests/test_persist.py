"""Artifact persistence: canonical encoding and byte-exact round trips."""

from __future__ import annotations

import json
import random

import pytest

from plancert.persist import (
    UnsupportedFormat,
    artifact_from_jsonable,
    artifact_to_jsonable,
    canonical_bytes,
    dumps_artifact,
    read_artifacts,
    write_artifacts,
)
from plancert.core import run_episode

from _scenarios import build_linear_scenario, random_artifact


def test_encode_decode_identity_on_engine_output():
    scenario = build_linear_scenario(n=5, cascades={1: 2}, failures={3: 1})
    artifact = run_episode(scenario.config, scenario.ops, scenario.env_factory(), scenario.task)
    decoded = artifact_from_jsonable(artifact_to_jsonable(artifact))
    assert decoded == artifact


def test_line_round_trip_is_byte_identical():
    rng = random.Random(5)
    artifact = random_artifact(rng)
    line = dumps_artifact(artifact)
    again = dumps_artifact(artifact_from_jsonable(json.loads(line)))
    assert line == again


def test_file_round_trip(tmp_path):
    rng = random.Random(6)
    artifacts = [random_artifact(rng, task_id=f"t{i}") for i in range(20)]
    first = tmp_path / "first.jsonl"
    second = tmp_path / "second.jsonl"
    assert write_artifacts(first, artifacts) == 20
    loaded = read_artifacts(first)
    write_artifacts(second, loaded)
    assert first.read_bytes() == second.read_bytes()


def test_canonical_bytes_ignore_timing():
    rng = random.Random(7)
    artifact = random_artifact(rng)
    from dataclasses import replace
    from plancert.core import Timing
    retimed = replace(artifact, timing=Timing(started_at=123.0, elapsed_s=9.9))
    assert canonical_bytes(artifact) == canonical_bytes(retimed)
    assert dumps_artifact(artifact) != dumps_artifact(retimed)


def test_version_guard():
    record = artifact_to_jsonable(random_artifact(random.Random(8)))
    record["format_version"] = 99
    with pytest.raises(UnsupportedFormat):
        artifact_from_jsonable(record)


def test_blank_lines_skipped(tmp_path):
    rng = random.Random(9)
    artifact = random_artifact(rng)
    path = tmp_path / "padded.jsonl"
    path.write_text(dumps_artifact(artifact) + "\n\n\n")
    assert len(read_artifacts(path)) == 1
