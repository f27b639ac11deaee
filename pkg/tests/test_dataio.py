import json
import math

import numpy as np
import pytest

from conftest import make_group
from disco.dataio import (
    ConfigError,
    DatasetHeader,
    GroupInconsistency,
    NormError,
    RunConfig,
    SchemaError,
    parse_config,
    read_dataset,
    read_groups,
    write_groups,
)
from disco.rewards import WEIGHT_PRESETS
from oracles import random_unit_vectors

HEADER = {"format_version": "disco/1", "embedding_dim": 2,
          "det_threshold": 0.7, "producer": "test"}


def write_lines(path, *objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n", encoding="utf-8")


def record(image_id="a", prompt_id="p1", target_count=2, faces=None, **extra):
    if faces is None:
        faces = [
            {"embedding": [1.0, 0.0], "confidence": 0.9},
            {"embedding": [0.0, 1.0], "confidence": 0.8},
        ]
    return {"image_id": image_id, "prompt_id": prompt_id,
            "target_count": target_count, "faces": faces, **extra}


class TestReadGroups:
    def test_two_group_fixture(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(
            path,
            HEADER,
            record("a", "p1"),
            record("b", "p1", faces=[{"embedding": [1.0, 0.0], "confidence": 0.75}]),
            record("c", "p2", target_count=1,
                   faces=[{"embedding": [0.0, 1.0], "confidence": 1.0}]),
        )
        groups = read_groups(path)
        assert [g.prompt_id for g in groups] == ["p1", "p2"]
        assert [img.face_count for img in groups[0].images] == [2, 1]
        assert groups[1].images[0].target_count == 1

    def test_bad_norm_reports_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(
            path,
            HEADER,
            record("a", "p1"),
            record("b", "p1", faces=[{"embedding": [0.9, 0.0], "confidence": 0.9}]),
        )
        with pytest.raises(NormError) as err:
            read_groups(path)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_slightly_off_norm_is_renormalized(self, tmp_path):
        path = tmp_path / "data.jsonl"
        eps = 5e-7
        write_lines(
            path,
            HEADER,
            record("a", "p1",
                   faces=[{"embedding": [1.0 + eps, 0.0], "confidence": 0.9}]),
        )
        (group,) = read_groups(path)
        assert np.linalg.norm(group.images[0].faces[0].embedding) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_mixed_target_count_in_group(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, HEADER, record("a", "p1", 2), record("b", "p1", 3))
        with pytest.raises(GroupInconsistency) as err:
            read_groups(path)
        assert err.value.prompt_id == "p1"

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps(HEADER) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(SchemaError) as err:
            read_groups(path)
        assert err.value.line == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SchemaError) as err:
            read_groups(path)
        assert err.value.line == 1

    def test_blank_lines_tolerated(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(
            json.dumps(HEADER) + "\n\n" + json.dumps(record()) + "\n\n",
            encoding="utf-8",
        )
        assert len(read_groups(path)) == 1

    @pytest.mark.parametrize(
        "mutate,reason_part",
        [
            (lambda h: {**h, "format_version": "disco/2"}, "format_version"),
            (lambda h: {k: v for k, v in h.items() if k != "producer"}, "missing"),
            (lambda h: {**h, "extra": 1}, "unknown"),
            (lambda h: {**h, "embedding_dim": 1}, "embedding_dim"),
        ],
    )
    def test_header_validation(self, tmp_path, mutate, reason_part):
        path = tmp_path / "data.jsonl"
        write_lines(path, mutate(HEADER), record())
        with pytest.raises(SchemaError) as err:
            read_groups(path)
        assert err.value.line == 1
        assert reason_part in err.value.reason

    @pytest.mark.parametrize(
        "face",
        [
            {"embedding": [1.0, 0.0, 0.0], "confidence": 0.9},  # wrong dim
            {"embedding": [1.0, 0.0], "confidence": 0.5},  # below det threshold
            {"embedding": [1.0, 0.0], "confidence": 1.5},  # out of range
            {"embedding": [1.0, 0.0], "confidence": 0.9, "bbox": [5, 5, 1, 9]},
            {"embedding": [1.0, 0.0], "confidence": 0.9, "bbox": [1, 2, 3]},
            {"embedding": [1.0, 0.0], "confidence": 0.9, "typo": 1},
        ],
    )
    def test_face_validation(self, tmp_path, face):
        path = tmp_path / "data.jsonl"
        write_lines(path, HEADER, record(faces=[face]))
        with pytest.raises(SchemaError) as err:
            read_groups(path)
        assert err.value.line == 2

    @pytest.mark.parametrize(
        "rec",
        [
            record(target_count=0),
            {**record(), "unknown_key": 1},
            {k: v for k, v in record().items() if k != "image_id"},
            record(tag=7),
        ],
    )
    def test_record_validation(self, tmp_path, rec):
        path = tmp_path / "data.jsonl"
        write_lines(path, HEADER, rec)
        with pytest.raises(SchemaError):
            read_groups(path)

    def test_optional_fields_parsed(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(
            path,
            HEADER,
            record(
                tag="varied",
                quality_raw=6.5,
                faces=[{"embedding": [1.0, 0.0], "confidence": 0.9,
                        "bbox": [0, 0, 10.5, 20]}],
            ),
        )
        (group,) = read_groups(path)
        img = group.images[0]
        assert img.tag == "varied"
        assert img.quality_raw == 6.5
        assert img.faces[0].bbox == (0.0, 0.0, 10.5, 20.0)


class TestRoundTrip:
    def test_bitwise_lossless(self, tmp_path, rng):
        face_lists = [random_unit_vectors(rng, k, 8) for k in (2, 0, 3)]
        group = make_group(face_lists, prompt_id="p1", target_count=2,
                           quality_raw=4.25)
        group.images[1].tag = "plain"
        header = DatasetHeader(embedding_dim=8, det_threshold=0.5, producer="rt")
        path = tmp_path / "rt.jsonl"
        write_groups(path, [group], header)
        header_back, groups_back = read_dataset(path)
        assert header_back == header
        (gb,) = groups_back
        assert gb.prompt_id == "p1"
        for orig, back in zip(group.images, gb.images):
            assert back.image_id == orig.image_id
            assert back.quality_raw == orig.quality_raw
            assert back.tag == orig.tag
            for fo, fb in zip(orig.faces, back.faces):
                np.testing.assert_array_equal(fo.embedding, fb.embedding)

    def test_written_file_is_stable(self, tmp_path, rng):
        group = make_group([random_unit_vectors(rng, 2, 4)], target_count=2)
        header = DatasetHeader(embedding_dim=4)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_groups(p1, [group], header)
        write_groups(p2, [group], header)
        assert p1.read_bytes() == p2.read_bytes()


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.seed == 0
        assert cfg.metrics.dup_threshold == 0.5
        assert cfg.train.group_size == 21
        assert cfg.train.beta_kl == 0.01

    def test_parse_full_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            """
# comment line
seed = 42
rewards.preset = table-a2
rewards.lambda_sigmoid = 4.0
metrics.dup_threshold = 0.6
curriculum.n_max = 5
curriculum.simple_set = 2,3
curriculum.t_curriculum = 200
train.group_size = 8
train.learning_rate = 0.01
flow.sigmas = 0.1,0.3
toy.steps = 50
""",
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.seed == 42
        assert cfg.train.seed == 42
        assert cfg.weights.gamma == WEIGHT_PRESETS["table-a2"].gamma
        assert cfg.weights.lambda_sigmoid == 4.0  # explicit key overrides preset
        assert cfg.metrics.dup_threshold == 0.6
        assert cfg.curriculum.simple_set == frozenset({2, 3})
        assert cfg.flow.sigmas == (0.1, 0.3)
        assert cfg.toy.steps == 50

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("rewards.delta = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_unknown_preset_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("rewards.preset = best\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("train.group_size = eight\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just words\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_invalid_domain_value_becomes_config_error(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("curriculum.gamma_c = 0.5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)
