"""Brute-force reference values for the caption metrics.

Enumerates every alignment between hypothesis and reference tokens (exact
matches between identical words, stem matches between different words with
equal Snowball English stems), keeps the lexicographically best
(exact matches, total matches, -chunks), and scores it with
F = 10PR/(R+9P) and penalty 0.5 (chunks/matches)^3. CIDEr is the mean over
n = 1..4 of the cosine between TF-IDF n-gram vectors times a Gaussian length
penalty (sigma 6), with idf = ln(N / max(1, df)) over the corpus.

Writes ../fixtures/caption_pairs.json. Requires `snowballstemmer`.
"""

import json
import math
import os
import re
from collections import Counter

import snowballstemmer

STEMMER = snowballstemmer.stemmer("english")


def tokenize(s):
    return re.sub(r"[^0-9a-z]", " ", s.lower()).split()


def best_alignment(hyp, ref):
    hs = [STEMMER.stemWord(t) for t in hyp]
    rs = [STEMMER.stemWord(t) for t in ref]
    best = (0, 0, 0)  # (exact, total, -chunks)

    def chunks(pairs):
        pairs = sorted(pairs)
        c = 0
        prev = None
        for i, j in pairs:
            if prev is None or not (i == prev[0] + 1 and j == prev[1] + 1):
                c += 1
            prev = (i, j)
        return c

    def rec(i, used, pairs, exact):
        nonlocal best
        if i == len(hyp):
            key = (exact, len(pairs), -chunks(pairs))
            if key > best:
                best = key
            return
        rec(i + 1, used, pairs, exact)
        for j in range(len(ref)):
            if j in used:
                continue
            if hyp[i] == ref[j]:
                rec(i + 1, used | {j}, pairs + [(i, j)], exact + 1)
            elif hs[i] == rs[j]:
                rec(i + 1, used | {j}, pairs + [(i, j)], exact)

    rec(0, frozenset(), [], 0)
    return best[0], best[1], -best[2]


def meteor(pred, ref):
    h, r = tokenize(pred), tokenize(ref)
    if not h or not r:
        return 0.0, 0, 0
    _, m, ch = best_alignment(h, r)
    if m == 0:
        return 0.0, 0, 0
    p, rc = m / len(h), m / len(r)
    f = 10 * p * rc / (rc + 9 * p)
    return f * (1 - 0.5 * (ch / m) ** 3), m, ch


def ngrams(tokens, n):
    return Counter(tuple(tokens[k:k + n]) for k in range(len(tokens) - n + 1))


def cider(pred, ref, corpus):
    docs = [tokenize(c) for c in corpus]
    df = Counter()
    for d in docs:
        for n in range(1, 5):
            for g in ngrams(d, n):
                df[g] += 1
    N = len(docs)

    def idf(g):
        return max(0.0, math.log(N / max(1, df[g]))) if N else 0.0

    h, r = tokenize(pred), tokenize(ref)
    pen = math.exp(-((len(h) - len(r)) ** 2) / (2 * 36.0))
    total = 0.0
    for n in range(1, 5):
        vh = {g: c * idf(g) for g, c in ngrams(h, n).items()}
        vr = {g: c * idf(g) for g, c in ngrams(r, n).items()}
        nh = math.sqrt(sum(v * v for v in vh.values()))
        nr = math.sqrt(sum(v * v for v in vr.values()))
        if nh == 0 or nr == 0:
            continue
        dot = sum(v * vr.get(g, 0.0) for g, v in vh.items())
        total += min(1.0, max(0.0, dot / (nh * nr))) * pen
    return total / 4


CORPUS = [
    "a red car parks",
    "a blue car drives",
    "a man walks a dog",
]

PAIRS = [
    ("a red car", "a blue car"),
    ("a red car parks", "a red car parks"),
    ("a man walks a dog", "a man walks a dog"),
    ("a man walks a dog", "a dog walks a man"),
    ("the dogs running", "the dog runs"),
    ("a car", "a blue car drives"),
    ("blue car", "a blue car drives"),
    ("a man walking his dogs", "a man walks a dog"),
    ("a cat", "a dog"),
    ("", "a dog"),
    ("a dog", ""),
    ("dog", "dog"),
    ("a a a a", "a a"),
    ("the cat sat on the mat", "on the mat the cat sat"),
    ("a cat and a dog", "a dog and a cat"),
    ("red car parks near a blue car", "a red car parks"),
    ("cars parked", "a red car parks"),
    ("A Man, walking!", "a man walks a dog"),
    ("a man drives a red car", "a red car drives a man"),
    ("a blue car drives a blue car", "a blue car drives"),
    ("walks walks walks", "a man walks a dog"),
    ("a red car parks a blue car drives", "a man walks a dog"),
    ("parks", "parking"),
    ("a man", "a woman"),
    ("the quick brown fox jumps", "a quick brown dog jumps over"),
]


def main():
    out = {"corpus": CORPUS, "pairs": []}
    for p, r in PAIRS:
        m, matches, ch = meteor(p, r)
        out["pairs"].append({
            "pred": p,
            "ref": r,
            "matches": matches,
            "chunks": ch,
            "meteor": m,
            "cider": cider(p, r, CORPUS),
        })
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "fixtures", "caption_pairs.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
