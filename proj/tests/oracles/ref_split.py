#!/usr/bin/env python3
"""Reference splitter used to freeze expected assignments for the C++ tests.

Written independently of the C++ code: SplitMix64 stream, rejection-sampled
bounded draws, Fisher-Yates from the top, largest-remainder counts with ties
going to the earlier split.
"""
import hashlib
import sys
from fractions import Fraction

MASK = (1 << 64) - 1


def sample_id(text, code):
    h = hashlib.sha256(text.encode("utf-8") + b"\x1f" + str(code).encode())
    return h.hexdigest()[:32]


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, bound):
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next()
            if r >= threshold:
                return r % bound


def class_seed(seed, code):
    return (seed ^ ((0xD1B54A32D192ED03 * (code + 1)) & MASK)) & MASK


def counts(n, fractions):
    exact = [Fraction(f) * n for f in fractions]
    base = [int(e) for e in exact]
    left = n - sum(base)
    order = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def split(samples, fractions, seed):
    """samples: list of (text, code). Returns {id: 'train'|'dev'|'test'}."""
    out = {}
    for code in range(3):
        ids = sorted(sample_id(t, c) for t, c in samples if c == code)
        if not ids:
            continue
        rng = SplitMix64(class_seed(seed, code))
        for i in range(len(ids) - 1, 0, -1):
            j = rng.below(i + 1)
            ids[i], ids[j] = ids[j], ids[i]
        c = counts(len(ids), fractions)
        tags = ["train"] * c[0] + ["dev"] * c[1] + ["test"] * c[2]
        for sid, tag in zip(ids, tags):
            out[sid] = tag
    return out


if __name__ == "__main__":
    fixture = [(f"alpha sample {i}", 0) for i in range(5)] + [
        (f"bravo sample {i}", 1) for i in range(5)
    ]
    result = split(fixture, ["0.6", "0.2", "0.2"], 42)
    for text, code in fixture:
        sid = sample_id(text, code)
        print(f'{{"{text}", {code}, "{sid}", "{result[sid]}"}},')
    rng = SplitMix64(42)
    print("splitmix64(42) first three:", [hex(rng.next()) for _ in range(3)], file=sys.stderr)
