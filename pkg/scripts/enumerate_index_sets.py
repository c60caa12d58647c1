"""Enumerate reduced index tuples and qualifying pairs from the definitions,
without importing the package, and freeze them as a test fixture.

usage: python scripts/enumerate_index_sets.py [out.json]
"""
import itertools
import json
import sys
from collections import Counter
from pathlib import Path


def mult(t, N):
    c = Counter(t)
    return [c.get(l, 0) for l in range(1, N + 1)]


def reduced(t, N):
    a = mult(t, N)
    nz = [x for x in a if x]
    r = len(nz)
    # nonzero multiplicities first, in nondecreasing order, then zeros
    return r > 0 and a[:r] == nz and nz == sorted(nz)


def in_J(t, N, m, n):
    b = mult(t, N)
    first = b[:m]
    tail = b[m + n:]
    return min(first, default=1) >= 1 and 1 not in tail


def case(I, J, N):
    a, b = mult(I, N), mult(J, N)
    if any(x == 1 and y == 0 for x, y in zip(a, b)):
        return "first"
    if any(y == 1 and x == 0 for x, y in zip(a, b)):
        return "second"
    return "none"


def build(N, p):
    tuples = list(itertools.product(range(1, N + 1), repeat=p))
    red = [t for t in tuples if reduced(t, N)]
    pairs = []
    for I in red:
        a = mult(I, N)
        m = a.count(1)
        n = sum(1 for x in a if x > 1)
        for J in tuples:
            if not in_J(J, N, m, n):
                pairs.append({"I": list(I), "J": list(J), "case": case(I, J, N)})
    return {"N": N, "p": p, "reduced": [list(t) for t in red], "pairs": pairs}


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/index_sets.json")
    data = [build(N, p) for N in (2, 3) for p in (1, 2, 3)]
    out.write_text(json.dumps(data, indent=1) + "\n")
    for d in data:
        cases = Counter(q["case"] for q in d["pairs"])
        print(f"N={d['N']} p={d['p']} reduced={len(d['reduced'])} pairs={len(d['pairs'])} {dict(cases)}")
