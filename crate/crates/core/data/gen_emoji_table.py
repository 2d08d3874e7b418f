"""Regenerate emoji-en.tsv from the CLDR short names shipped in the `emoji` package.

    pip install emoji==2.16.0
    python3 gen_emoji_table.py > emoji-en.tsv
"""
import unicodedata

import emoji

# Newest emoji version the Rust side (unicode-properties 0.1.4) recognizes.
MAX_EMOJI_VERSION = 17


def name_of(entry):
    return entry["en"].strip(":").replace("_", " ").lower()


rows = {}
for seq, entry in emoji.EMOJI_DATA.items():
    if entry["E"] > MAX_EMOJI_VERSION:
        continue
    key = unicodedata.normalize("NFC", seq)
    name = " ".join(name_of(entry).split())
    if name:
        rows[key] = name

for key in sorted(rows):
    print(f"{key}\t{rows[key]}")
