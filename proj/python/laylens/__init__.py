"""Python access to the laylens core."""

import json as _json

from . import _core
from ._core import DecodeError, LaylensError, NotFoundError, ValidationError

__all__ = [
    "DecodeError",
    "LaylensError",
    "NotFoundError",
    "ValidationError",
    "analyze",
    "mock_detect",
    "parse_explanations",
    "rle_decode",
    "rle_encode",
    "sha256_hex",
    "survey_summary",
    "wilcoxon",
]


def sha256_hex(data: bytes) -> str:
    return _core.sha256_hex(bytes(data))


def rle_encode(width: int, height: int, bits) -> dict:
    """Row-major 0/1 values (any iterable or bytes) to {width, height, runs}."""
    return _json.loads(_core.rle_encode(width, height, bytes(bytearray(1 if b else 0 for b in bits))))


def rle_decode(rle: dict) -> tuple:
    """Returns (width, height, bits) with bits as bytes of 0/1."""
    return _core.rle_decode(_json.dumps(rle))


def mock_detect(image: bytes, fault: str = "") -> dict:
    return _json.loads(_core.mock_detect(bytes(image), fault))


def parse_explanations(raw: str) -> dict:
    return _json.loads(_core.parse_explanations(raw))


def wilcoxon(pairs) -> dict:
    return _json.loads(_core.wilcoxon([(float(a), float(b)) for a, b in pairs]))


def survey_summary(path: str, format: str = "json"):
    out = _core.survey_summary(str(path), format)
    return _json.loads(out) if format == "json" else out


def analyze(image: bytes, data_dir: str = "", detector_url: str = "", simplifier_url: str = "",
            editor_url: str = "", timeout_s: float = 60.0) -> dict:
    """Runs one image through the pipeline; mock backends unless URLs are given."""
    return _json.loads(_core.analyze(bytes(image), str(data_dir), detector_url, simplifier_url, editor_url,
                                     timeout_s))
