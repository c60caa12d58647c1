"""Relative entropy and the three inequalities built on it, for discrete laws."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized(cls, w) -> "DiscreteDistribution":
        w = np.asarray(w, dtype=float).ravel()
        p = w / math.fsum(w)
        # push the last ulps of the normalization error into the largest entry
        p[np.argmax(p)] += 1.0 - math.fsum(p)
        return cls(p)

    @property
    def size(self) -> int:
        return self.probs.size


def _probs(p):
    return p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=float).ravel()


@dataclass
class EntropyValue:
    value: float
    absolutely_continuous: bool

    def __float__(self):
        return self.value


def relative_entropy(p, q, normalizer: float = 1.0) -> float:
    """(1/normalizer) sum p log(p/q); +inf when p is not absolutely continuous w.r.t. q."""
    return relative_entropy_report(p, q, normalizer).value


def relative_entropy_report(p, q, normalizer: float = 1.0) -> EntropyValue:
    if not normalizer > 0:
        raise ValueError("normalizer must be positive")
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError("supports differ in size")
    pos = p > 0
    if np.any(q[pos] <= 0):
        return EntropyValue(math.inf, False)
    terms = p[pos] * (np.log(p[pos]) - np.log(q[pos]))
    return EntropyValue(max(math.fsum(terms), 0.0) / normalizer, True)


def ckp_check(p, q, k: int = 1, normalizer: float = 1.0) -> dict:
    """l1 = |p - q|_1 against sqrt(2 k H)."""
    l1 = math.fsum(np.abs(_probs(p) - _probs(q)))
    H = relative_entropy(p, q, normalizer)
    bound = math.sqrt(2 * k * H) if math.isfinite(H) else math.inf
    return {"l1": l1, "bound": bound, "holds": l1 <= bound + 1e-12}


def variational_entropy_check(p, candidates) -> dict:
    """Entropy against the dual sup_Phi (sum p Phi - log sum e^Phi) over counting measure."""
    pp = _probs(p)
    if np.any(pp <= 0):
        raise ValueError("p must be strictly positive")
    ent = math.fsum(pp * np.log(pp))
    duals = [math.fsum(pp * np.asarray(phi, dtype=float)) - float(logsumexp(phi)) for phi in candidates]
    at_log_p = math.fsum(pp * np.log(pp)) - float(logsumexp(np.log(pp)))
    best = max(duals) if duals else -math.inf
    return {"entropy": ent, "duals": duals, "best_dual": best, "dual_at_log_p": at_log_p,
            "gap": ent - best, "all_below": all(d <= ent + 1e-12 for d in duals),
            "equality_gap": abs(at_log_p - ent)}


def change_of_law_check(p, q, phi, N: int, normalizer: float | None = None) -> dict:
    """sum Phi p <= H(p|q)/normalizer + (1/N) log sum e^{N Phi} q.

    The default normalizer N treats p, q as N-particle laws with entropy
    scaled by 1/N; normalizer 1 gives a weaker bound for N > 1. The log term
    is evaluated with log-sum-exp and never overflows."""
    pp, qq = _probs(p), _probs(q)
    phi = np.asarray(phi, dtype=float).ravel()
    lhs = math.fsum(phi * pp)
    H = relative_entropy(pp, qq, float(N if normalizer is None else normalizer))
    pos = qq > 0
    lse = float(logsumexp(N * phi[pos], b=qq[pos]))
    rhs = H + lse / N
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-12}
