"""Rebuilds assets/wordlist/en-100k.txt from a wordfreq wheel.

usage: python3 tools/make_wordlist.py path/to/wordfreq-3.1.1-py3-none-any.whl
"""
import gzip
import pathlib
import sys
import zipfile

import msgpack

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/straighten/assets/wordlist/en-100k.txt"


def usable(w):
    parts = w.replace("'", "-").split("-")
    return w.isascii() and any(parts) and all(p.isalpha() for p in parts if p)


def main(wheel):
    raw = zipfile.ZipFile(wheel).read("wordfreq/data/large_en.msgpack.gz")
    buckets = msgpack.unpackb(gzip.decompress(raw), raw=False, strict_map_key=False)[1:]
    words = [w for b in buckets for w in b if usable(w)][:100_000]
    header = "# top 100000 ASCII word forms from wordfreq 3.1.1 large_en (data CC-BY-SA 4.0), frequency ranked\n"
    OUT.write_text(header + "\n".join(words) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
