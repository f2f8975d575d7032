"""Independent evaluation of the hashed bag-of-words embedder.

Prints cosine values used as frozen constants in test_rag.cpp and
test_alarms.cpp.
"""
import math
import re
import sys

D = 256
BUCKET_SEED = 0xCBF29CE484222325
SIGN_SEED = 0x84222325CBF29CE4
MASK = (1 << 64) - 1


def fnv(s, basis):
    h = basis
    for b in s.encode():
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def embed(text):
    v = [0.0] * D
    for t in re.findall(r"[a-z0-9]+", text.lower()):
        v[fnv(t, BUCKET_SEED) % D] += -1.0 if fnv(t, SIGN_SEED) & 1 else 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v] if n else v


def cos(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if not na or not nb:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


if __name__ == "__main__":
    pairs = [
        ("EDFA gain tilt", "EDFA gain tilt noise"),
        ("EDFA gain tilt", "routing wavelength assignment"),
    ] + [tuple(a.split("|")) for a in sys.argv[1:]]
    for a, b in pairs:
        print(f"{cos(embed(a), embed(b)):.17g}\t{a!r}\t{b!r}")


def rank_manual(directory, query):
    """Exhaustive cosine ranking of single-chunk manual files."""
    import os
    q = embed(query)
    rows = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".txt"):
            text = open(os.path.join(directory, name)).read()
            rows.append((-cos(q, embed(text)), name[:-4]))
    for score, doc in sorted(rows):
        print(f"{-score:.17g}\t{doc}")
