#!/usr/bin/env python3
"""Regenerates everything under fixtures/.

PNGs are written with zlib + struct so the bytes (and therefore the SHA-256
digests the mock detector keys on) do not depend on an imaging library
version. A tEXt "Comment" chunk is bumped until the digest has the wanted
leading bytes; pixel data is unaffected.
"""

import hashlib
import io
import json
import random
import struct
import sys
import zlib
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def chunk(kind, data):
    body = kind + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


def png_bytes(width, height, pixels, comment=None):
    """pixels: rows of (r, g, b) or (r, g, b, a) tuples."""
    channels = len(pixels[0][0])
    color_type = {3: 2, 4: 6}[channels]
    raw = bytearray()
    for row in pixels:
        raw.append(0)
        for px in row:
            raw.extend(px)
    out = b"\x89PNG\r\n\x1a\n"
    out += chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, color_type, 0, 0, 0))
    if comment is not None:
        out += chunk(b"tEXt", b"Comment\x00" + comment.encode())
    out += chunk(b"IDAT", zlib.compress(bytes(raw), 9))
    out += chunk(b"IEND", b"")
    return out


def png_with_digest(width, height, pixels, accept, tag):
    for n in range(1 << 24):
        data = png_bytes(width, height, pixels, f"laylens fixture {tag} {n}")
        if accept(hashlib.sha256(data).digest()):
            return data
    raise RuntimeError("no matching digest for " + tag)


def scene(width, height, seed):
    rng = random.Random(seed)
    sun_x, sun_y, sun_r = width * 0.7, height * 0.25, min(width, height) * 0.12
    rows = []
    for y in range(height):
        row = []
        for x in range(width):
            if y < height * 0.6:
                t = y / (height * 0.6)
                px = (int(90 + 60 * t), int(150 + 50 * t), int(230 - 20 * t))
            else:
                t = (y - height * 0.6) / (height * 0.4)
                px = (int(70 + 40 * t), int(130 - 30 * t), int(50 + 10 * t))
            if (x - sun_x) ** 2 + (y - sun_y) ** 2 <= sun_r ** 2:
                px = (250, 220, 120)
            j = rng.randint(-6, 6)
            row.append(tuple(max(0, min(255, c + j)) for c in px))
        rows.append(row)
    return rows


def rle(bits, width, height):
    runs, cur, n = [], 0, 0
    for y in range(height):
        for x in range(width):
            v = bits[y][x]
            if v != cur:
                runs.append(n)
                cur, n = v, 0
            n += 1
    runs.append(n)
    return {"width": width, "height": height, "runs": runs}


def mask_from(width, height, pred):
    return [[1 if pred(x, y) else 0 for x in range(width)] for y in range(height)]


def write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    path.write_bytes(data)
    print(f"wrote {path.relative_to(ROOT.parent)} ({len(data)} bytes)")


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def make_images():
    w, h = 160, 120
    px = scene(w, h, 7)
    # fake verdict with two regions: d[0] even, d[1] % 3 == 1
    write(ROOT / "fake_sample.png", png_with_digest(w, h, px, lambda d: d[0] % 2 == 0 and d[1] % 3 == 1, "fake"))
    # real verdict: digest starts 0x01
    write(ROOT / "real_sample.png", png_with_digest(w, h, scene(w, h, 8), lambda d: d[0] == 0x01, "real"))
    # three regions: digest starts 0x00, d[1] = 5
    write(ROOT / "three_regions.png",
          png_with_digest(96, 64, scene(96, 64, 9), lambda d: d[0] == 0x00 and d[1] == 5, "three"))

    two_tone = [[(30, 60, 90) if x < 24 else (210, 190, 170) for x in range(48)] for _ in range(32)]
    write(ROOT / "two_tone.png", png_bytes(48, 32, two_tone))

    write(ROOT / "not_an_image.png", "this is a plain text file with a .png name\n")

    try:
        from PIL import Image
    except ImportError:
        print("Pillow missing; keeping existing sample.jpg", file=sys.stderr)
    else:
        img = Image.new("RGB", (64, 48))
        img.putdata([(x * 4, y * 5, 128) for y in range(48) for x in range(64)])
        buf = io.BytesIO()
        img.save(buf, format="JPEG", quality=90)
        write(ROOT / "sample.jpg", buf.getvalue())


def make_overlay_fixtures():
    cases = []
    # 1: two overlapping rectangles inside the frame
    w, h = 64, 48
    cases.append((w, h, scene(w, h, 11), [
        mask_from(w, h, lambda x, y: 10 <= x < 30 and 8 <= y < 24),
        mask_from(w, h, lambda x, y: 24 <= x < 40 and 18 <= y < 36),
    ]))
    # 2: disc touching the left edge and an L shape in the bottom-right corner
    w, h = 50, 50
    cases.append((w, h, scene(w, h, 12), [
        mask_from(w, h, lambda x, y: (x - 3) ** 2 + (y - 20) ** 2 <= 64),
        mask_from(w, h, lambda x, y: (x >= 44 and y >= 30) or (y >= 46 and x >= 30)),
    ]))
    # 3: RGBA with varying alpha, single-pixel and diagonal regions
    w, h = 40, 30
    rgba = [[(x * 6 % 256, y * 8 % 256, (x + y) * 3 % 256, (x * 17 + y * 5) % 256) for x in range(w)]
            for y in range(h)]
    cases.append((w, h, rgba, [
        mask_from(w, h, lambda x, y: x == 20 and y == 15),
        mask_from(w, h, lambda x, y: abs(x - y) <= 1 and x < 12),
        mask_from(w, h, lambda x, y: 30 <= x < 38 and 2 <= y < 6),
    ]))
    for i, (w, h, px, masks) in enumerate(cases, start=1):
        write(ROOT / "overlay" / f"{i:02d}.png", png_bytes(w, h, px))
        write(ROOT / "overlay" / f"{i:02d}.masks.json", json.dumps([rle(m, w, h) for m in masks]) + "\n")


# ---------------------------------------------------------------------------
# Survey
# ---------------------------------------------------------------------------

def clamp(v):
    return max(1, min(5, v))


def make_survey():
    rng = random.Random(20240915)
    participants = [f"P{i:02d}" for i in range(1, 16)]
    items = [f"img{i:02d}" for i in range(1, 11)]
    cells = [(p, it) for p in participants for it in items]

    def chosen(hits, total, salt):
        order = list(range(total))
        random.Random(salt).shuffle(order)
        return set(order[:hits])

    prefer = chosen(98, 150, 1)
    load = chosen(122, 150, 2)
    compare = chosen(104, 150, 3)
    confident = chosen(12, 15, 4)
    would_use = chosen(14, 15, 5)

    lines = []

    def emit(p, item, q, **kw):
        rec = {"participant_id": p, "item_id": item, "question_id": q}
        rec.update(kw)
        lines.append(json.dumps(rec, ensure_ascii=False))

    for idx, (p, it) in enumerate(cells):
        # ease: large shift; clarity: moderate; accuracy: small
        base = rng.randint(2, 3)
        emit(p, it, "ease_complex", rating=base)
        emit(p, it, "ease_simplified", rating=clamp(base + rng.choice([1, 1, 2, 2, 1, 0])))
        base = rng.randint(2, 4)
        emit(p, it, "clarity_complex", rating=base)
        emit(p, it, "clarity_simplified", rating=clamp(base + rng.choice([1, 0, 0, 1, -1, 0, 1, 0])))
        base = rng.randint(2, 4)
        emit(p, it, "accuracy_complex", rating=base)
        emit(p, it, "accuracy_simplified", rating=clamp(base + rng.choice([0, 0, 1, -1, 0, 0, 1, -1, 0, 1])))
        emit(p, it, "preference", choice="simplified" if idx in prefer else "complex")
        emit(p, it, "cognitive_load_reduced", answer=idx in load)
        emit(p, it, "comparison_helpful", answer=idx in compare)
    for i, p in enumerate(participants):
        emit(p, "overall", "confidence_improved", answer=i in confident)
        emit(p, "overall", "would_use", answer=i in would_use)
    write(ROOT / "user_study_synthetic.jsonl", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Parser corpus: (input text, expected result). Expected values are written
# by hand, not produced by the parser.
# ---------------------------------------------------------------------------

BEAR = {
    "region": "Central Teddy Bear",
    "simple_explanation": "The bear's fur looks pasted on.",
    "emoji": "🧸",
    "edit_instruction": "Remove the teddy bear and restore the background.",
}
LAMP = {
    "region": "Desk Lamp",
    "simple_explanation": "The light falls the wrong way.",
    "emoji": "💡",
    "edit_instruction": "Remove the desk lamp.",
}


def ok(regions, repairs=(), entry_errors=(), subs=(), summary=None):
    out = {"regions": list(regions), "repairs": list(repairs), "entry_errors": list(entry_errors),
           "emoji_substitutions": list(subs)}
    if summary is not None:
        out["overall_summary"] = summary
    return out


def err(cls, repairs=()):
    return {"error": cls, "repairs": list(repairs)}


def with_(entry, **kw):
    e = dict(entry)
    e.update(kw)
    return e


def dumps(obj):
    return json.dumps(obj, ensure_ascii=False)


FALLBACK = "🔍"

CORPUS = [
    # clean
    (dumps({"regions": [BEAR]}), ok([BEAR])),
    # fences
    ("```json\n{\"regions\":[]}\n```", ok([], ["strip_code_fences"])),
    ("```\n" + dumps({"regions": [LAMP]}) + "\n```", ok([LAMP], ["strip_code_fences"])),
    # surrounding prose
    ("Here is the analysis you asked for:\n" + dumps({"regions": [BEAR]}) + "\nLet me know if you need more.",
     ok([BEAR], ["trim_surrounding_prose"])),
    ("Note {this} first. " + dumps({"regions": [LAMP]}),
     err("unrecoverable", ["trim_surrounding_prose"])),
    ("Result: " + dumps({"regions": [with_(BEAR, simple_explanation="A stray } brace and a { one.")]}) + " Done.",
     ok([with_(BEAR, simple_explanation="A stray } brace and a { one.")], ["trim_surrounding_prose"])),
    # trailing commas
    ('{"regions":[' + dumps(LAMP)[:-1] + ',}]}', ok([LAMP], ["remove_trailing_commas"])),
    ('{"regions":[' + dumps(BEAR) + ', ' + dumps(LAMP) + ',\n]}',
     ok([BEAR, LAMP], ["remove_trailing_commas"])),
    ('{"regions":[' + dumps(with_(LAMP, simple_explanation="Commas, like this ,} stay.")) + ']}',
     ok([with_(LAMP, simple_explanation="Commas, like this ,} stay.")])),
    # curly quotes
    ("{“regions”: [{“region”: “Desk Lamp”, “simple_explanation”: “The light falls the wrong way.”, "
     "“emoji”: “💡”, “edit_instruction”: “Remove the desk lamp.”}]}",
     ok([LAMP], ["normalize_curly_quotes"])),
    ("```json\n" + dumps({"regions": [with_(BEAR, simple_explanation="It “looks” off.")]}) + "\n```",
     ok([with_(BEAR, simple_explanation="It “looks” off.")], ["strip_code_fences"])),
    # combined
    ("Sure!\n```json\n" + dumps({"regions": [BEAR]})[:-2] + ",]}\n```\nHope this helps.",
     ok([BEAR], ["strip_code_fences", "remove_trailing_commas"])),
    ("Okay: {“regions”: [{“region”: “Desk Lamp”, “simple_explanation”: “The light falls the wrong way.”, "
     "“emoji”: “💡”, “edit_instruction”: “Remove the desk lamp.”},]} thanks",
     ok([LAMP], ["trim_surrounding_prose", "remove_trailing_commas", "normalize_curly_quotes"])),
    # emoji handling
    (dumps({"regions": [with_(BEAR, emoji="not-an-emoji")]}), ok([with_(BEAR, emoji=FALLBACK)], subs=[0])),
    (dumps({"regions": [{k: v for k, v in LAMP.items() if k != "emoji"}]}),
     ok([with_(LAMP, emoji=FALLBACK)], subs=[0])),
    (dumps({"regions": [BEAR, with_(LAMP, emoji="🧸🐻")]}), ok([BEAR, with_(LAMP, emoji=FALLBACK)], subs=[1])),
    (dumps({"regions": [with_(BEAR, emoji="👩‍🔬")]}), ok([with_(BEAR, emoji="👩‍🔬")])),
    (dumps({"regions": [with_(LAMP, emoji="🇫🇷")]}), ok([with_(LAMP, emoji="🇫🇷")])),
    (dumps({"regions": [with_(LAMP, emoji="👍🏽")]}), ok([with_(LAMP, emoji="👍🏽")])),
    (dumps({"regions": [with_(BEAR, emoji="☀️")]}), ok([with_(BEAR, emoji="☀️")])),
    (dumps({"regions": [with_(BEAR, emoji=7)]}), ok([with_(BEAR, emoji=FALLBACK)], subs=[0])),
    # per-entry salvage
    (dumps({"regions": [BEAR, {k: v for k, v in LAMP.items() if k != "simple_explanation"}]}),
     ok([BEAR], entry_errors=[{"index": 1, "field": "simple_explanation", "reason": "missing"}])),
    (dumps({"regions": [with_(LAMP, region="   "), BEAR]}),
     ok([BEAR], entry_errors=[{"index": 0, "field": "region", "reason": "blank"}])),
    (dumps({"regions": ["Region A is fake", LAMP]}),
     ok([LAMP], entry_errors=[{"index": 0, "field": "", "reason": "entry is not an object"}])),
    (dumps({"regions": [with_(BEAR, edit_instruction=["Remove it"]), LAMP]}),
     ok([LAMP], entry_errors=[{"index": 0, "field": "edit_instruction", "reason": "not a string"}])),
    (dumps({"regions": [with_(LAMP, matched_region_index=-1), with_(BEAR, matched_region_index=0)]}),
     ok([with_(BEAR, matched_region_index=0)],
        entry_errors=[{"index": 0, "field": "matched_region_index", "reason": "not a non-negative integer"}])),
    (dumps({"regions": [with_(BEAR, confidence=0.9)], "overall_summary": "One object was added.", "model": "x"}),
     ok([BEAR], summary="One object was added.")),
    # failures
    ("I could not find anything suspicious in this picture.", err("unrecoverable")),
    ('{"regions": [{"region": "Desk Lamp", "simple_explanation": "The light', err("unrecoverable")),
    (dumps({"explanations": [BEAR]}), err("invalid_shape")),
    (dumps({"regions": {"0": BEAR}}), err("invalid_shape")),
    ("```json\n[" + dumps(BEAR) + "]\n```", err("invalid_shape", ["strip_code_fences", "trim_surrounding_prose"])),
    (dumps({"regions": [{"region": "Desk Lamp"}, {"emoji": "💡"}]}), err("no_valid_entries")),
]


def make_corpus():
    out = ROOT / "parser_corpus"
    for old in out.glob("*"):
        old.unlink()
    for i, (text, expected) in enumerate(CORPUS, start=1):
        write(out / f"{i:03d}.input.txt", text)
        write(out / f"{i:03d}.expected.json", json.dumps(expected, ensure_ascii=False, indent=2) + "\n")


if __name__ == "__main__":
    make_images()
    make_overlay_fixtures()
    make_survey()
    make_corpus()
