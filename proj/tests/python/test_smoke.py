import hashlib
import json
import os
from pathlib import Path

import pytest

import laylens

FIXTURES = Path(os.environ.get("LAYLENS_FIXTURES_DIR", Path(__file__).resolve().parents[2] / "fixtures"))


def test_sha256_matches_hashlib():
    for blob in (b"", b"abc", bytes(range(256)) * 7):
        assert laylens.sha256_hex(blob) == hashlib.sha256(blob).hexdigest()


def test_rle_round_trip():
    bits = [0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1]
    rle = laylens.rle_encode(4, 3, bits)
    assert rle["runs"] == [2, 3, 1, 1, 4, 1]
    w, h, back = laylens.rle_decode(rle)
    assert (w, h) == (4, 3)
    assert list(back) == bits


def test_rle_rejects_bad_runs():
    with pytest.raises(laylens.ValidationError):
        laylens.rle_decode({"width": 2, "height": 2, "runs": [1, 1]})


def test_mock_detect_on_fixtures():
    fake = laylens.mock_detect((FIXTURES / "three_regions.png").read_bytes())
    assert fake["verdict"] == "fake"
    assert len(fake["regions"]) == 3
    real = laylens.mock_detect((FIXTURES / "real_sample.png").read_bytes())
    assert real["verdict"] == "real"
    assert real["regions"] == []


def test_undecodable_image_raises():
    with pytest.raises(laylens.DecodeError):
        laylens.mock_detect((FIXTURES / "not_an_image.png").read_bytes())


def test_parser_matches_one_golden_file():
    corpus = FIXTURES / "parser_corpus"
    for src in sorted(corpus.glob("*.input.txt"))[:5]:
        expected = json.loads(src.with_name(src.name.replace(".input.txt", ".expected.json")).read_text())
        assert laylens.parse_explanations(src.read_text(encoding="utf-8")) == expected


def test_wilcoxon_symmetric():
    r = laylens.wilcoxon([(0, 1), (1, 0), (0, 2), (2, 0)])
    assert r["w_plus"] == 5 and r["w_minus"] == 5
    assert r["p_two_sided"] == 1.0
    with pytest.raises(laylens.ValidationError):
        laylens.wilcoxon([(3, 3)])


def test_survey_summary_fixture():
    s = laylens.survey_summary(FIXTURES / "user_study_synthetic.jsonl")
    assert s["participant_count"] == 15
    text = laylens.survey_summary(FIXTURES / "user_study_synthetic.jsonl", format="text")
    assert "65.3%" in text


def test_analyze_fake_fixture(tmp_path):
    job = laylens.analyze((FIXTURES / "fake_sample.png").read_bytes(), data_dir=str(tmp_path))
    assert job["state"] == "COMPLETED"
    assert job["verdict"] == "fake"
    assert job["findings"]
    assert job["reconstruction"]["media_type"] == "image/png"
    again = laylens.analyze((FIXTURES / "fake_sample.png").read_bytes(), data_dir=str(tmp_path))
    assert again["job_id"] == job["job_id"]
