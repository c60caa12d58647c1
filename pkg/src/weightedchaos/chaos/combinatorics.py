"""Index tuples, multiplicities and the two index classes used by the
cancellation argument."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product


@dataclass(frozen=True)
class IndexTuple:
    """(i_1, ..., i_p) with entries in 1..N (1-based, as in the combinatorics)."""
    entries: tuple
    N: int

    def __post_init__(self):
        e = tuple(int(v) for v in self.entries)
        if any(not 1 <= v <= self.N for v in e):
            raise ValueError(f"entries must lie in 1..{self.N}")
        object.__setattr__(self, "entries", e)

    @property
    def p(self) -> int:
        return len(self.entries)

    @property
    def multiplicities(self) -> tuple:
        """a_l = #{nu : i_nu = l} for l = 1..N."""
        return tuple(self.entries.count(l) for l in range(1, self.N + 1))

    @property
    def m(self) -> int:
        return sum(1 for a in self.multiplicities if a == 1)

    @property
    def n(self) -> int:
        return sum(1 for a in self.multiplicities if a > 1)

    def in_reduced_set(self) -> bool:
        """1 <= a_1 <= ... <= a_{m+n}, all later multiplicities 0."""
        a = self.multiplicities
        r = self.m + self.n
        if r == 0:
            return False
        head = a[:r]
        return head[0] >= 1 and all(x <= y for x, y in zip(head, head[1:])) and not any(a[r:])

    def in_J(self, m: int, n: int) -> bool:
        """Membership in J_{m,n}: b_l >= 1 for l <= m and b_l != 1 for l > m + n."""
        b = self.multiplicities
        return all(b[l] >= 1 for l in range(min(m, self.N))) and \
            all(b[l] != 1 for l in range(m + n, self.N))

    def in_effective_set(self) -> bool:
        return all(a != 1 for a in self.multiplicities)


def all_tuples(N: int, p: int):
    for e in product(range(1, N + 1), repeat=p):
        yield IndexTuple(e, N)


def reduced_set(N: int, p: int) -> list:
    return [I for I in all_tuples(N, p) if I.in_reduced_set()]


def qualifying_pairs(N: int, p: int) -> list:
    """All (I, J) with I in the reduced set and J outside J_{m_I, n_I}."""
    out = []
    for I in reduced_set(N, p):
        for J in all_tuples(N, p):
            if not J.in_J(I.m, I.n):
                out.append((I, J))
    return out


def cancellation_case(I: IndexTuple, J: IndexTuple) -> str:
    """Which variable carries the cancellation for a qualifying pair.

    "first":  some l appears once in I and not in J (integrate z_l in the first slot).
    "second": some l appears once in J and not in I (second slot).
    """
    a, b = I.multiplicities, J.multiplicities
    for l in range(I.N):
        if a[l] == 1 and b[l] == 0:
            return "first"
    for l in range(I.N):
        if b[l] == 1 and a[l] == 0:
            return "second"
    return "none"
