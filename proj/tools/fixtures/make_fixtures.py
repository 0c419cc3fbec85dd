#!/usr/bin/env python3
"""Regenerates the deterministic fixture files under data/.

Usage: python3 tools/fixtures/make_fixtures.py [repo_root]
"""
import json
import math
import random
import struct
import sys
import zlib
from pathlib import Path

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[2]
DATA = ROOT / "data"
FIX = DATA / "fixtures"

KEYWORDS = {
    "alcohol_tobacco_drugs": {"mild": ["beer", "wine", "cocktail", "cigarette"],
                              "strong": ["cocaine", "heroin", "drug dealing"]},
    "horror_fear_themes": {"mild": ["spooky", "ghost"], "strong": ["terrifying"]},
    "mature_suggestive_themes": {"mild": ["flirt", "romance", "dating"], "strong": ["adult themes"]},
    "medical_treatment_information": {"mild": ["symptom", "wellness tips"], "strong": ["prescription", "diagnosis"]},
    "profanity_crude_humor": {"mild": ["crude jokes", "toilet humor"], "strong": ["profanity", "swearing"]},
    "cartoon_fantasy_violence": {"mild": ["cartoon battles", "slapstick"], "strong": ["monster slaying", "magic combat"]},
    "realistic_violence": {"mild": ["fistfight", "street brawl"], "strong": ["gunfight", "bloodshed"]},
    "sexual_content_nudity": {"mild": ["swimwear"], "strong": ["nudity", "sexual content"]},
    "simulated_gambling": {"mild": ["casino chips", "slot machine", "poker"], "strong": ["roulette", "blackjack"]},
    "real_gambling": ["real-money wagers", "sports betting"],
    "unrestricted_web_access": ["built-in browser", "open web"],
    "contests": ["sweepstakes", "giveaway"],
}
UNSUPPORTED = {"real_gambling", "unrestricted_web_access", "contests"}
APPLE_IDS = list(KEYWORDS)

FILLER = [
    "Track your progress with daily goals.",
    "Share highlights with friends and family.",
    "Customize layouts and colors to suit your style.",
    "Enjoy a clean interface that works offline.",
    "New levels and features arrive every month.",
    "Sync your data across all of your devices.",
    "Get helpful reminders at the right moment.",
    "Join a friendly community of enthusiasts.",
]

GENRES = ["Games", "Entertainment", "Social Networking", "Health & Fitness", "Medical", "Lifestyle", "Books", "Sports"]

# (rating, declared descriptors as (id, severity)); index i -> app-(i+1)
PLAN = [
    ("4+", []), ("4+", []), ("4+", []), ("4+", []), ("4+", []), ("4+", []),
    ("9+", [("cartoon_fantasy_violence", "mild")]),
    ("9+", [("profanity_crude_humor", "mild")]),
    ("9+", [("horror_fear_themes", "mild"), ("cartoon_fantasy_violence", "mild")]),
    ("9+", [("horror_fear_themes", "mild")]),                       # planted drop
    ("9+", [("mature_suggestive_themes", "mild")]),
    ("9+", [("medical_treatment_information", "mild"), ("contests", "none")]),
    ("9+", [("simulated_gambling", "mild")]),
    ("9+", []),
    ("9+", [("cartoon_fantasy_violence", "mild"), ("profanity_crude_humor", "mild")]),
    ("12+", [("realistic_violence", "mild"), ("profanity_crude_humor", "strong")]),
    ("12+", [("simulated_gambling", "strong")]),
    ("12+", [("mature_suggestive_themes", "mild"), ("alcohol_tobacco_drugs", "mild")]),
    ("12+", [("cartoon_fantasy_violence", "strong")]),
    ("12+", [("contests", "none")]),                                # planted drop
    ("12+", [("horror_fear_themes", "strong"), ("realistic_violence", "mild")]),
    ("12+", [("medical_treatment_information", "strong")]),
    ("12+", [("sexual_content_nudity", "mild")]),
    ("12+", [("alcohol_tobacco_drugs", "mild"), ("profanity_crude_humor", "mild"), ("unrestricted_web_access", "none")]),
    ("17+", [("realistic_violence", "strong"), ("profanity_crude_humor", "strong")]),
    ("17+", [("unrestricted_web_access", "none")]),
    ("17+", [("medical_treatment_information", "mild")]),           # planted drop
    ("17+", [("alcohol_tobacco_drugs", "strong"), ("mature_suggestive_themes", "strong")]),
    ("17+", [("real_gambling", "none"), ("simulated_gambling", "strong")]),
    ("17+", [("sexual_content_nudity", "strong"), ("mature_suggestive_themes", "strong")]),
    ("17+", [("horror_fear_themes", "strong"), ("realistic_violence", "strong"), ("alcohol_tobacco_drugs", "mild")]),
    ("17+", [("contests", "none"), ("real_gambling", "none")]),
]
assert len(PLAN) == 32
PLANTED_DROPS = {"app-010": "horror_fear_themes", "app-020": "contests", "app-027": "medical_treatment_information"}

# Under-disclosures planted in the audit predictions: (app, descriptor, severity).
UNDER_DISCLOSED = [
    ("app-003", "mature_suggestive_themes", "mild"),
    ("app-016", "simulated_gambling", "strong"),
    ("app-026", "realistic_violence", "strong"),
]
# Declared cells the predictions miss (false negatives, never non-disclosures).
MISSED = [("app-012", "contests"), ("app-029", "real_gambling")]


def triggers(descriptor, severity):
    entry = KEYWORDS[descriptor]
    if isinstance(entry, list):
        return entry
    return entry["strong"] if severity == "strong" else entry["mild"]


def png_bytes(seed):
    rng = random.Random(seed)
    w = h = 4
    raw = b"".join(b"\x00" + bytes(rng.randrange(256) for _ in range(3 * w)) for _ in range(h))

    def chunk(tag, data):
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def corpus():
    rng = random.Random(20231101)
    names = ["Pixel", "Nova", "Harbor", "Sprout", "Echo", "Quill", "Atlas", "Comet"]
    nouns = ["Quest", "Studio", "Arena", "Journal", "Buddy", "Hub", "Tales", "Lab"]
    apps = []
    for i, (rating, declared) in enumerate(PLAN):
        app_id = f"app-{i + 1:03d}"
        genre = GENRES[i % len(GENRES)]
        sentences = rng.sample(FILLER, 3)
        for d, sev in declared:
            if PLANTED_DROPS.get(app_id) == d:
                continue
            kw = rng.choice(triggers(d, sev))
            sentences.insert(rng.randrange(len(sentences) + 1), f"Expect {kw} along the way.")
        shots = 3 if i % 5 == 0 else 2
        refs = [f"screenshots/{app_id}_{k + 1}.png" for k in range(shots)]
        decl = []
        for d, sev in declared:
            entry = {"descriptor": d}
            if sev != "none":
                entry["severity"] = sev
            decl.append(entry)
        apps.append({
            "app_id": app_id,
            "name": f"{names[i % 8]} {nouns[(i * 3) % 8]}",
            "genre": genre,
            "description_short": f"A {genre.lower()} app for everyday use.",
            "description_long": " ".join(sentences),
            "screenshot_refs": refs,
            "icon_ref": f"screenshots/{app_id}_1.png",
            "declared_rating": rating,
            "declared_descriptors": decl,
            "rating_count": rng.randrange(100, 500000),
            "avg_stars": round(rng.uniform(2.5, 5.0), 2),
            "popularity_rank": i + 1,
        })
    return apps


def predictions_and_labels(apps):
    preds, labels = [], []
    under = {(a, d): s for a, d, s in UNDER_DISCLOSED}
    missed = set(MISSED)
    for app in apps:
        declared = {d["descriptor"]: d.get("severity", "none") for d in app["declared_descriptors"]}
        for d in APPLE_IDS:
            truth_present = d in declared or (app["app_id"], d) in under
            truth_sev = declared.get(d) or under.get((app["app_id"], d), "none")
            if d in UNSUPPORTED or not truth_present:
                truth_sev = "none"
            labels.append({"app_id": app["app_id"], "descriptor": d, "present": truth_present, "severity": truth_sev})
            p_present = truth_present and (app["app_id"], d) not in missed
            preds.append({"app_id": app["app_id"], "descriptor": d, "present": p_present,
                          "severity": truth_sev if p_present else "none"})
    return preds, labels


def loss_fixture():
    rng = random.Random(7)
    rows = []
    for k in range(1000):
        rows.append({"id": f"rand-{k:04d}", "kind": "dpo",
                     "policy_lp_w": -rng.uniform(0.0, 200.0), "policy_lp_l": -rng.uniform(0.0, 200.0),
                     "ref_lp_w": -rng.uniform(0.0, 200.0), "ref_lp_l": -rng.uniform(0.0, 200.0),
                     "beta": rng.choice([0.05, 0.1, 0.2, 0.5])})
    for k in range(4):
        lp = -rng.uniform(1.0, 50.0)
        rows.append({"id": f"zero-{k}", "kind": "dpo", "policy_lp_w": lp, "policy_lp_l": lp - 3.0,
                     "ref_lp_w": lp, "ref_lp_l": lp - 3.0, "beta": 0.1})
    # |delta| = 50 at beta 0.1
    rows.append({"id": "extreme-pos", "kind": "dpo", "policy_lp_w": 0.0, "policy_lp_l": -250.0,
                 "ref_lp_w": -250.0, "ref_lp_l": 0.0, "beta": 0.1})
    rows.append({"id": "extreme-neg", "kind": "dpo", "policy_lp_w": -250.0, "policy_lp_l": 0.0,
                 "ref_lp_w": 0.0, "ref_lp_l": -250.0, "beta": 0.1})
    for v in (2, 100, 50000):
        rows.append({"id": f"sft-uniform-{v}", "kind": "sft", "token_logprobs": [-math.log(v)] * 16})
    return rows


def main():
    apps = corpus()
    write_jsonl(FIX / "corpus32.jsonl", apps)
    for app in apps:
        for ref in app["screenshot_refs"]:
            p = FIX / ref
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(png_bytes(ref))
    preds, labels = predictions_and_labels(apps)
    write_jsonl(FIX / "predictions32.jsonl", preds)
    write_jsonl(FIX / "labels32.jsonl", labels)
    write_jsonl(FIX / "loss_fixture.jsonl", loss_fixture())

    write_json(DATA / "mock" / "keywords.json", KEYWORDS)
    write_json(DATA / "mock" / "generator.json", {
        "kind": "rule_engine", "keywords": "keywords.json",
        "variants": [
            {"phrasing": "Based on the screenshot and the description,"},
            {"phrasing": "Looking at the available evidence,"},
            {"phrasing": "After reviewing the app materials,"},
            {"phrasing": "Considering the listing as a whole,"},
            {"phrasing": "", "malformed": True},
        ]})
    write_json(DATA / "mock" / "policy.json", {
        "kind": "rule_engine", "keywords": "keywords.json",
        "variants": [
            {"phrasing": "Based on the screenshot and the description,"},
            {"phrasing": "From what the listing shows,"},
            {"phrasing": "", "flip_verdict": True},
            {"phrasing": "Looking at the available evidence,"},
            {"phrasing": "", "shift_severity": True},
            {"phrasing": "After reviewing the app materials,"},
            {"phrasing": "Judging from the screenshot,"},
        ]})
    write_json(DATA / "mock" / "judge.json", {
        "kind": "judge",
        "variants": [
            {"phrasing": "Compared the candidate with the reference."},
            {"phrasing": "Rubric applied to both answers."},
            {"phrasing": "Assessment complete."},
            {"malformed": True},
        ]})
    write_json(DATA / "policy_rules.json", {"rules": [
        {"rule_id": "floor-4plus-no-objectionable", "descriptors": [], "min_severity": "none",
         "minimum_rating": "9+",
         "description": "Apps rated 4+ contain no objectionable material; any detected descriptor requires 9+ or higher."},
        {"rule_id": "floor-9plus-mild-families",
         "descriptors": ["cartoon_fantasy_violence", "profanity_crude_humor", "mature_suggestive_themes",
                         "horror_fear_themes"],
         "min_severity": "mild", "minimum_rating": "9+",
         "description": "Mild cartoon or fantasy violence, mild profanity or crude humor, or mild mature, "
                        "suggestive or horror themes require 9+ or higher."},
    ]})


if __name__ == "__main__":
    main()
