"""Explicit a-priori constants for the mean-field equation and the smallness tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

T_CAP = 1.0e3  # T_star when K(T) vanishes identically


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _mul(a: float, b: float) -> float:
    """a*b with 0*inf = 0 (a vanishing coefficient kills the term)."""
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


@dataclass(frozen=True)
class BoundsParams:
    S0: float
    S1: float
    S2: float
    a_sup: float
    C: float
    grad_psi0_l1: float
    grad_mu0_l1: float
    M_in: float
    mu_bar: float
    Lam: float = 1.0
    T: float = 1.0
    b: int = 1
    p: int = 1

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{k} must be finite")
        if self.Lam <= 0:
            raise ValueError("Lambda must be positive")
        if self.C < 1.0:
            raise ValueError("envelope constant C must be >= 1")

    @property
    def Y0(self) -> float:
        return 1.0 + self.grad_psi0_l1 + self.grad_mu0_l1

    # --- constants as functions of T ------------------------------------

    def K_dm(self, T: float) -> float:
        """Bound on e^m |d_m psi|."""
        S0, S1, S2 = self.S0, self.S1, self.S2
        inner = 1.0 + _mul(T * S2, _exp((S0 + S1) * T))
        return self.C * inner * _exp(S1 * T)

    def K_logm(self, T: float) -> float:
        """Bound on |d_m log psi|."""
        S0, S1, S2 = self.S0, self.S1, self.S2
        inner = 1.0 + _mul(S2 * T, _exp((S0 + S1) * T))
        return self.C ** 2 * inner * _exp((S0 + 2 * S1) * T)

    def K_gradx(self, T: float) -> float:
        """Bound on e^m |grad_x psi|, kept in its unsimplified product form."""
        S0, S1, a = self.S0, self.S1, self.a_sup
        Y0 = self.Y0
        pre = _exp((S0 + S1 + 2 * a * Y0) * T)
        inner = _mul(S1 * self.C, _exp((S0 + S1) * T)) + _mul(S0, self.K_dm(T))
        return pre * (self.C + _mul(2 * T, inner) * Y0)

    def gradx_log_bound(self, T: float) -> float:
        return _mul(self.C * self.K_gradx(T), _exp((self.S0 + self.S1) * T))

    def K(self, T: float) -> float:
        return 3 * self.a_sup + 3 * self.S1 + _mul(2 + self.K_dm(T), self.S0)

    def Mbar(self, b: int | None = None, p: int | None = None) -> float:
        b = self.b if b is None else b
        p = self.p if p is None else p
        return (b * p + 1) * self.S0 + (p + 1) * self.S1

    def T_star(self, tol: float = 1e-6) -> tuple[float, bool]:
        """Largest T with T K(T) <= 1/(2 Y0); second entry flags the cap."""
        Y0 = self.Y0
        if not Y0 > 0:
            raise RuntimeError("Y(0) must be positive")
        target = 1.0 / (2.0 * Y0)

        def g(T):
            return _mul(T, self.K(T)) - target

        hi = 1.0
        while g(hi) <= 0:
            hi *= 2.0
            if hi >= T_CAP:
                return T_CAP, True
        lo = 0.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if g(mid) <= 0:
                lo = mid
            else:
                hi = mid
        return lo, False


@dataclass(frozen=True)
class BoundsLedger:
    inputs: dict
    Y0: float
    T_star: float
    T_star_capped: bool
    T_ss: float
    K_dm: float
    K_logm: float
    K_gradx: float
    K_T: float
    gradx_log_bound: float
    Mbar: float
    small_lhs_1: float
    small_lhs_2: float
    small_cond_1: bool
    small_cond_2: bool

    def to_dict(self) -> dict:
        return asdict(self)


def bounds_ledger(params: BoundsParams, T_ss: float | None = None) -> BoundsLedger:
    """All ledger constants. K-values are evaluated at T** (default
    min(T_star, params.T)); K(T) at the same time."""
    T_star, capped = params.T_star()
    if T_ss is None:
        T_ss = min(T_star, params.T)
    S0, S1 = params.S0, params.S1
    K_gx = params.K_gradx(T_ss)
    lhs1 = 4 * S1 + 4 * _mul(S0, params.K_logm(T_ss))
    tail = params.mu_bar + S0 * T_ss + _mul(_exp(2 * (S0 + S1) * T_ss), params.M_in)
    lhs2 = _mul(2 * params.a_sup * params.C * K_gx * _exp((S0 + S1) * T_ss), tail)
    half = params.Lam / 2
    return BoundsLedger(
        inputs=asdict(params), Y0=params.Y0, T_star=T_star, T_star_capped=capped,
        T_ss=T_ss, K_dm=params.K_dm(T_ss), K_logm=params.K_logm(T_ss), K_gradx=K_gx,
        K_T=params.K(T_ss), gradx_log_bound=params.gradx_log_bound(T_ss), Mbar=params.Mbar(),
        small_lhs_1=lhs1, small_lhs_2=lhs2, small_cond_1=lhs1 < half, small_cond_2=lhs2 < half,
    )
