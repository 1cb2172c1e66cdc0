"""Regenerate the grill-steak fixture pack.

The pack holds two short videos as pre-extracted frames:

* ``dl91S-X_VJs`` - a backyard grilling video (goal inference, ground
  truth "Grill Steak"), mostly a man talking to the camera with a few
  charcoal / steak shots in between;
* ``v_Biking_g01_c01`` - a cycling clip (action recognition, ground
  truth "Biking"), there so corpus-level CIDEr has two references.

Every frame has a hidden "visual content" phrase; its precomputed
embedding is the bag-of-words text vector of that phrase plus seeded
noise, so step texts about charcoal or steak land on the matching shots.

Run from the repository root:  python fixtures/build_grill_steak.py
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from videoinfer.backends import BagOfWordsEmbedder, write_embedding_file

ROOT = Path(__file__).resolve().parent / "grill-steak"
DIM, SEED = 64, 42
NOISE = 0.35


def tiny_png(path: Path, rgb: tuple[int, int, int]) -> None:
    width = height = 4
    raw = b"".join(b"\x00" + bytes(rgb) * width for _ in range(height))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    png = b"\x89PNG\r\n\x1a\n"
    png += chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
    png += chunk(b"IDAT", zlib.compress(raw, 9))
    png += chunk(b"IEND", b"")
    path.write_bytes(png)


TALKING = [
    ("man talking camera backyard", "a man standing in a backyard"),
    ("man talking camera backyard", "a man talking to the camera"),
    ("man shirt fence backyard", "a man in a black shirt standing next to a fence"),
]

GRILL_SEGMENTS = [
    # (first frame, last frame, content, caption) ; talking fills the gaps
    (12, 15, "bag charcoal ground", "a bag of charcoal on the ground"),
    (28, 31, "charcoal burning grill fire", "a grill with burning charcoal"),
    (44, 47, "raw steaks seasoned salt pepper tray", "raw steaks seasoned with salt and pepper on a tray"),
    (48, 55, "steaks cooking grill charcoal tongs", "steaks cooking on a charcoal grill"),
    (60, 63, "grilled steak plate served", "a grilled steak on a white plate"),
]

BIKING = [
    ("bicycle riding road helmet", "a man riding a bike on a road"),
    ("bicycle pedals cycling street", "a person cycling down a street"),
    ("bicycle rider trees park", "a cyclist riding through a park"),
]


def grill_frames() -> list[tuple[str, str]]:
    frames = []
    for i in range(128):
        seg = next((s for s in GRILL_SEGMENTS if s[0] <= i <= s[1]), None)
        if seg:
            frames.append((seg[2], seg[3]))
        else:
            frames.append(TALKING[(i // 4) % len(TALKING)])
    return frames


def biking_frames() -> list[tuple[str, str]]:
    return [BIKING[(i // 6) % len(BIKING)] for i in range(48)]


def write_video(video_id: str, frames: list[tuple[str, str]], embedder: BagOfWordsEmbedder, rng, colour_base: int) -> list[tuple[str, str]]:
    fdir = ROOT / "frames" / video_id
    fdir.mkdir(parents=True, exist_ok=True)
    rows = {}
    table = []
    for i, (content, caption) in enumerate(frames):
        name = f"{i:06d}.png"
        tiny_png(fdir / name, ((colour_base + i * 7) % 256, (i * 13) % 256, (colour_base * 3 + i) % 256))
        v = embedder.vector(content)
        v = v / np.linalg.norm(v)
        noise = rng.standard_normal(DIM)
        v = v + NOISE * noise / np.linalg.norm(noise)
        rows[i] = v / np.linalg.norm(v)
        table.append((f"frames/{video_id}/{name}", caption))
    write_embedding_file(fdir / "embeddings.txt", rows)
    return table


H_GRILL = [
    "Have a Backyard Barbecue",
    "Light a Charcoal Grill",
    "Prepare a Steak Dinner",
    "Season a Steak",
    "Clean a Grill",
]
H_GRILL_POST = [
    "Cooking Steaks on a Grill",
    "Grill Steak",
    "Light a Charcoal Grill",
    "Make Grilled Steak",
    "Season a Steak",
]
STEPS_GRILL = """Have a Backyard Barbecue:
1. Light the charcoal in the grill
2. Place the steaks on the grill
3. Serve the grilled steak on a plate
Light a Charcoal Grill:
1. Open a bag of charcoal
2. Pile the charcoal in the grill
3. Light the charcoal until burning
Prepare a Steak Dinner:
1. Season the raw steaks with salt and pepper
2. Cook the steaks on the grill
3. Serve the steak on a plate
Season a Steak:
1. Place the raw steaks on a tray
2. Season with salt and pepper
Clean a Grill:
1. Scrub the grill grates
2. Empty the charcoal ashes"""

H_BIKE = ["Cycling", "Biking", "Riding a Bike", "Mountain Biking", "Commuting"]
STEPS_BIKE = """Cycling:
- Sit on the bicycle
- Push the pedals
Biking:
- Ride the bicycle along the road
Riding a Bike:
- Hold the handlebars
- Pedal down the street
Mountain Biking:
- Ride through the park trails
Commuting:
- Cycle down the street"""


def numbered(items: list[str]) -> str:
    return "\n".join(f"{i}: {t}" for i, t in enumerate(items, 1))


def main() -> None:
    ROOT.mkdir(parents=True, exist_ok=True)
    embedder = BagOfWordsEmbedder(DIM, SEED)
    rng = np.random.default_rng(SEED)
    table = write_video("dl91S-X_VJs", grill_frames(), embedder, rng, 17)
    table += write_video("v_Biking_g01_c01", biking_frames(), embedder, rng, 101)
    with open(ROOT / "captions.tsv", "w", encoding="utf-8") as fh:
        fh.write("# frame_path\tcaption\n")
        for path, caption in table:
            fh.write(f"{path}\t{caption}\n")

    rules = [
        # final selection, first the baseline over the raw talking-head description
        {"contains": ["Based on these options:", "ongoing action"], "reply": "Cycling"},
        {"contains": ["Based on these options:", "Based on the description: a man standing in a backyard"], "reply": "Have a Backyard Barbecue"},
        {"contains": ["Based on these options:"], "reply": "Cooking Steaks on a Grill"},
        {"contains": ["Briefly list down the steps to perform Have a Backyard Barbecue"], "reply": STEPS_GRILL},
        {"contains": ["Briefly list down the steps to perform Cooking Steaks on a Grill"], "reply": STEPS_GRILL.replace("Have a Backyard Barbecue", "Cooking Steaks on a Grill")},
        {"contains": ["Briefly list down the steps to perform"], "reply": STEPS_BIKE},
        {"contains": ["ongoing action"], "reply": numbered(H_BIKE)},
        {"contains": ["Based on the description: a man standing in a backyard"], "reply": numbered(H_GRILL)},
        {"contains": ["action goal"], "reply": numbered(H_GRILL_POST)},
    ]
    (ROOT / "chat_script.json").write_text(json.dumps({"rules": rules}, indent=2) + "\n", encoding="utf-8")

    judge_rules = [
        {"contains": ["Let A = Grill Steak, Let B = Cooking Steaks on a Grill."], "reply": "Yes"},
        {"contains": ["Let A = Biking, Let B = Cycling."], "reply": "Yes"},
        {"contains": ["Let A = Grill Steak, Let B = Grill Steak."], "reply": "Yes"},
        {"contains": ["Let A ="], "reply": "No"},
    ]
    (ROOT / "judge_script.json").write_text(json.dumps({"rules": judge_rules}, indent=2) + "\n", encoding="utf-8")

    (ROOT / "fixture.json").write_text(
        json.dumps(
            {
                "captions": "captions.tsv",
                "chat_script": "chat_script.json",
                "judge_script": "judge_script.json",
                "text_embedder": {"kind": "bow", "dim": DIM, "seed": SEED},
                "frame_embedder": {"kind": "precomputed", "file": "embeddings.txt"},
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    manifest = [
        {"video_id": "dl91S-X_VJs", "frame_dir": "frames/dl91S-X_VJs", "frame_count": 128, "ground_truth": "Grill Steak", "task": "goal_inference", "rho": 0.5},
    ]
    both = manifest + [
        {"video_id": "v_Biking_g01_c01", "frame_dir": "frames/v_Biking_g01_c01", "frame_count": 48, "ground_truth": "Biking", "task": "action_recognition", "rho": 1.0},
    ]
    (ROOT / "manifest.jsonl").write_text("".join(json.dumps(m) + "\n" for m in manifest), encoding="utf-8")
    (ROOT / "manifest_all.jsonl").write_text("".join(json.dumps(m) + "\n" for m in both), encoding="utf-8")
    (ROOT / "config.ini").write_text("[videoinfer]\nk = 5\nL = 16\nM_cap = 16\nN_max = 64\n", encoding="utf-8")


if __name__ == "__main__":
    main()
