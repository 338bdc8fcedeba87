"""Brute-force BLEU used as an independent oracle in tests.

Counts n-grams by explicit position scans rather than hashing, and follows
the textbook definition directly: clipped precision per order over the
corpus, effective orders only, geometric mean, brevity penalty.
"""

import math


def _positions(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def brute_bleu(hyps, refs, max_order=4):
    c = sum(len(h) for h in hyps)
    r = sum(len(x) for x in refs)
    if c == 0:
        return 0.0
    logs = []
    for n in range(1, max_order + 1):
        matched = total = 0
        for h, ref in zip(hyps, refs):
            hg, rg = _positions(h, n), _positions(ref, n)
            total += len(hg)
            for g in set(hg):
                matched += min(hg.count(g), rg.count(g))
        if total == 0:
            continue
        if matched == 0:
            return 0.0
        logs.append(math.log(matched) - math.log(total))
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / len(logs))
