"""Interaction kernel a and influence kernel S on the d-torus.

Both kernels are immutable value objects. Evaluation is vectorized: torus
points are arrays of shape (..., d).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

INTERACTION_FAMILIES = ("constant", "shear-sign", "perp-gradient-trig", "tabulated")
S_TYPES = ("zero", "const", "sin", "cos", "sign-sin", "sign-cos")
CHI_TYPES = ("bump", "const")


def as_points(x, dim: int) -> np.ndarray:
    """Coerce x to shape (..., dim). Scalars are accepted when dim == 1."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"point has dimension {x.shape[-1]}, kernel has dim {dim}")
    return x


def wrap(x):
    """Wrap onto [0, 1)."""
    y = np.mod(x, 1.0)
    # mod can return exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def sign_sin(z):
    """sign(sin 2 pi z) on wrapped z, exactly 0 on the zero set {0, 1/2}."""
    z = wrap(z)
    return np.where(z == 0.0, 0.0, np.where(z < 0.5, 1.0, np.where(z == 0.5, 0.0, -1.0)))


def sign_cos(z):
    """sign(cos 2 pi z), exactly 0 at z = 1/4 and 3/4."""
    return sign_sin(np.asarray(z, dtype=float) + 0.25)


def wrap_centered(z):
    """Wrap displacements componentwise into (-1/2, 1/2]."""
    z = np.asarray(z, dtype=float)
    return 0.5 - wrap(0.5 - z)


@dataclass(frozen=True, eq=False)
class InteractionKernel:
    dim: int
    family: str
    params: tuple = ()
    table: np.ndarray | None = None
    sup_bound: float | None = None
    divergence_free: bool | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.family not in INTERACTION_FAMILIES:
            raise ValueError(f"unknown interaction family {self.family!r}")
        p = tuple(float(v) for v in self.params)
        if self.family == "constant":
            if len(p) != self.dim:
                raise ValueError("constant family needs one component per axis")
        elif self.family in ("shear-sign", "perp-gradient-trig"):
            if self.dim != 2:
                raise ValueError(f"{self.family} is a d=2 family")
            if self.family == "shear-sign" and len(p) != 1:
                raise ValueError("shear-sign takes (amplitude,)")
            if self.family == "perp-gradient-trig":
                if len(p) == 1:
                    p = (p[0], 0.0, 0.5 * np.pi)
                if len(p) != 3:
                    raise ValueError("perp-gradient-trig takes (amplitude, phase1, phase2)")
        elif self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated family needs a table")
            t = np.asarray(self.table, dtype=float)
            G = t.shape[0]
            if t.shape != (G,) * self.dim + (self.dim,):
                raise ValueError("table must have shape (G,)*d + (d,)")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)
        object.__setattr__(self, "params", p)
        if self.sup_bound is None:
            object.__setattr__(self, "sup_bound", self._natural_bound())
        if self.divergence_free is None:
            object.__setattr__(self, "divergence_free", self.family != "tabulated")

    def _natural_bound(self) -> float:
        p = self.params
        if self.family == "constant":
            return float(np.sqrt(sum(c * c for c in p)))
        if self.family == "shear-sign":
            return abs(p[0])
        if self.family == "perp-gradient-trig":
            # |grad K| <= 2*pi for the product of two unit sines
            return TWO_PI * abs(p[0])
        return float(np.max(np.linalg.norm(self.table, axis=-1)))

    @property
    def discontinuity_lines(self) -> tuple:
        """(axis, position) pairs where the field jumps."""
        if self.family == "shear-sign":
            return ((1, 0.0), (1, 0.5))
        return ()

    def evaluate(self, z) -> np.ndarray:
        z = as_points(z, self.dim)
        p = self.params
        if self.family == "constant":
            return np.broadcast_to(np.array(p), z.shape).copy()
        if self.family == "tabulated":
            G = self.table.shape[0]
            zc = wrap_centered(z)
            idx = np.floor((zc + 0.5) * G).astype(int)
            idx = np.clip(idx, 0, G - 1)
            return self.table[tuple(idx[..., k] for k in range(self.dim))]
        z = wrap(z)
        out = np.zeros(z.shape)
        if self.family == "shear-sign":
            out[..., 0] = p[0] * sign_sin(z[..., 1])
            return out
        amp, ph1, ph2 = p
        u = TWO_PI * z[..., 0] + ph1
        v = TWO_PI * z[..., 1] + ph2
        # K = sin u sin v, a = amp * (dK/dx2, -dK/dx1)
        out[..., 0] = amp * TWO_PI * np.sin(u) * np.cos(v)
        out[..., 1] = -amp * TWO_PI * np.cos(u) * np.sin(v)
        return out

    __call__ = evaluate

    @property
    def is_zero(self) -> bool:
        if self.family == "tabulated":
            return not np.any(self.table)
        if self.family == "constant":
            return not any(self.params)
        return self.params[0] == 0.0


def constant_kernel(c, dim: int | None = None) -> InteractionKernel:
    c = tuple(np.atleast_1d(np.asarray(c, dtype=float)))
    return InteractionKernel(dim=dim or len(c), family="constant", params=c)


def zero_interaction(dim: int = 1) -> InteractionKernel:
    return InteractionKernel(dim=dim, family="constant", params=(0.0,) * dim)


def eval_interaction(kernel: InteractionKernel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.ndim(x) > 1 or np.size(x) != kernel.dim:
        raise ValueError(f"expected a point of dimension {kernel.dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    return kernel.evaluate(x.reshape(kernel.dim))


# ---------------------------------------------------------------------------
# influence kernel


@dataclass(frozen=True)
class SSpec:
    type: str = "sin"
    amplitude: float = 1.0
    offset: float = 0.0
    parity: str | None = None

    def __post_init__(self):
        if self.type not in S_TYPES:
            raise ValueError(f"unknown s type {self.type!r}")
        if self.parity is None:
            object.__setattr__(self, "parity", self.natural_parity())
        if self.parity not in ("even", "odd", "none"):
            raise ValueError("parity must be even, odd or none")

    def natural_parity(self) -> str:
        if self.type in ("zero", "const", "cos", "sign-cos"):
            return "even"
        return "odd" if self.offset == 0.0 else "none"

    def base(self, z):
        t = TWO_PI * z
        if self.type == "zero":
            return np.zeros_like(z)
        if self.type == "const":
            return np.ones_like(z)
        if self.type == "sin":
            return np.sin(t)
        if self.type == "cos":
            return np.cos(t)
        if self.type == "sign-sin":
            return sign_sin(z)
        return sign_cos(z)

    def __call__(self, z):
        """s(z) = amplitude * (offset + mean over axes of base(z_k))."""
        z = wrap(np.asarray(z, dtype=float))
        if self.type == "zero":
            return np.zeros(z.shape[:-1])
        b = np.mean(self.base(z), axis=-1) if self.type != "const" else 1.0
        return self.amplitude * (self.offset + b) * np.ones(z.shape[:-1])

    @property
    def sup(self) -> float:
        if self.type == "zero":
            return 0.0
        if self.type == "const":
            return abs(self.amplitude * (self.offset + 1.0))
        return abs(self.amplitude) * (abs(self.offset) + 1.0)


@dataclass(frozen=True)
class ChiSpec:
    """Weight cutoff chi(m).

    type "bump" is exp(1 - 1/(1 - u^2)) on u = (2m - lo - hi)/(hi - lo), zero
    outside (lo, hi). type "const" is the constant `value` with no support
    restriction (used only to build kernels with dS/dm = 0).
    """
    type: str = "bump"
    support: tuple = (0.5, 3.0)
    value: float = 1.0

    def __post_init__(self):
        if self.type not in CHI_TYPES:
            raise ValueError(f"unknown chi type {self.type!r}")
        lo, hi = (float(v) for v in self.support)
        if self.type == "bump" and not (0.0 < lo < hi):
            raise ValueError("chi support must satisfy 0 < lo < hi")
        object.__setattr__(self, "support", (lo, hi))

    def __call__(self, m, order: int = 0):
        m = np.asarray(m, dtype=float)
        if self.type == "const":
            return np.full(m.shape, self.value if order == 0 else 0.0)
        lo, hi = self.support
        c = 2.0 / (hi - lo)
        u = c * m - (lo + hi) / (hi - lo)
        inside = np.abs(u) < 1.0
        uu = np.where(inside, u, 0.0)
        w = 1.0 - uu * uu
        chi = np.where(inside, self.value * np.exp(1.0 - 1.0 / w), 0.0)
        if order == 0:
            return chi
        g = -2.0 * uu / (w * w)
        if order == 1:
            return chi * g * c
        if order == 2:
            return chi * (g * g - 2.0 / (w * w) - 8.0 * uu * uu / w ** 3) * c * c
        raise ValueError("order must be 0, 1 or 2")

    def sup(self, order: int = 0) -> float:
        if self.type == "const":
            return abs(self.value) if order == 0 else 0.0
        lo, hi = self.support
        m = np.linspace(lo, hi, 200001)
        return float(np.max(np.abs(self(m, order))))

    @property
    def center(self) -> float:
        return 0.5 * (self.support[0] + self.support[1])


@dataclass(frozen=True)
class InfluenceKernel:
    """S(x, m, y, n) = chi1(m) chi2(n) s(x - y)  (form "separable"), or
    m n s(x - y) (form "product-weights", only for the reduced mu-equation)."""
    dim: int = 1
    form: str = "separable"
    s: SSpec = field(default_factory=SSpec)
    chi1: ChiSpec = field(default_factory=ChiSpec)
    chi2: ChiSpec = field(default_factory=ChiSpec)
    bounds: tuple | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.form not in ("separable", "product-weights"):
            raise ValueError(f"unknown influence form {self.form!r}")
        if self.bounds is None and self.form == "separable":
            object.__setattr__(self, "bounds", self.sampled_bounds())
        elif self.bounds is not None:
            object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    def sampled_bounds(self) -> tuple:
        """(S0, S1, S2) from dense sampling of chi, chi', chi'' and |s|."""
        ss = self.s.sup
        c2 = self.chi2.sup(0)
        return tuple(ss * c2 * self.chi1.sup(k) for k in range(3))

    @property
    def S0(self) -> float:
        return self.bounds[0]

    @property
    def S1(self) -> float:
        return self.bounds[1]

    @property
    def S2(self) -> float:
        return self.bounds[2]

    @property
    def is_zero(self) -> bool:
        return self.s.type == "zero" or self.s.sup == 0.0

    @property
    def m_support(self):
        if self.chi1.type == "const":
            return None
        return self.chi1.support

    def _check_form(self, reduced_mode: bool):
        if self.form == "product-weights" and not reduced_mode:
            raise ValueError("product-weights influence kernel is only usable in reduced mode")

    def evaluate(self, x, m, y, n, reduced_mode: bool = False):
        """(S, dS/dm, d2S/dm2) with broadcasting over all arguments."""
        self._check_form(reduced_mode)
        x = as_points(x, self.dim)
        y = as_points(y, self.dim)
        sv = self.s(x - y)
        m = np.asarray(m, dtype=float)
        n = np.asarray(n, dtype=float)
        if self.form == "product-weights":
            S = m * n * sv
            return S, n * sv, np.zeros_like(S)
        c2 = self.chi2(n)
        return (self.chi1(m) * c2 * sv,
                self.chi1(m, 1) * c2 * sv,
                self.chi1(m, 2) * c2 * sv)

    def dS_dn(self, x, m, y, n, reduced_mode: bool = False):
        self._check_form(reduced_mode)
        sv = self.s(as_points(x, self.dim) - as_points(y, self.dim))
        if self.form == "product-weights":
            return np.asarray(m, dtype=float) * sv
        return self.chi1(m) * self.chi2(n, 1) * sv


def zero_influence(dim: int = 1) -> InfluenceKernel:
    return InfluenceKernel(dim=dim, s=SSpec(type="zero"))


def eval_influence(kernel: InfluenceKernel, x, m, y, n, reduced_mode: bool = False):
    if np.any(np.asarray(m) < 0) or np.any(np.asarray(n) < 0):
        raise ValueError("weights must be nonnegative")
    S, dS, d2S = kernel.evaluate(x, m, y, n, reduced_mode=reduced_mode)
    if np.ndim(S) == 0:
        return float(S), float(dS), float(d2S)
    return S, dS, d2S


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    div_norm: float
    bound_violations: int
    parity_ok: bool
    tol_div: float
    support_ok: bool = True
    identity_residual: float | None = None
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.div_norm <= self.tol_div and self.bound_violations == 0
                and self.parity_ok and self.support_ok)


def _node_grid(G: int, dim: int) -> np.ndarray:
    c = (np.arange(G) + 0.5) / G
    mesh = np.meshgrid(*([c] * dim), indexing="ij")
    return np.stack(mesh, axis=-1)


def _validate_interaction(k: InteractionKernel, G: int) -> ValidationReport:
    X = _node_grid(G, k.dim)
    h = 1.0 / G
    vals = k.evaluate(X)
    norms = np.linalg.norm(vals, axis=-1)
    viol = int(np.sum(norms > k.sup_bound * (1 + 1e-12) + 1e-300))
    div = np.zeros(X.shape[:-1])
    for q in range(k.dim):
        e = np.zeros(k.dim)
        e[q] = h
        div += (k.evaluate(X + e)[..., q] - k.evaluate(X - e)[..., q]) / (2 * h)
    tol = 1e-10
    notes = []
    if k.discontinuity_lines:
        tol = 1e-2
        notes.append("discontinuous family: tol_div relaxed to 1e-2")
    div_norm = float(np.max(np.abs(div)))
    if not k.divergence_free:
        notes.append("family not flagged divergence-free; div_norm reported only")
        tol = np.inf
    return ValidationReport(div_norm=div_norm, bound_violations=viol, parity_ok=True,
                            tol_div=tol, notes=notes)


def _validate_influence(k: InfluenceKernel, G: int) -> ValidationReport:
    notes = []
    # s on torus nodes, including the reflected nodes for the parity test
    Z = _node_grid(G, k.dim)
    sv = k.s(Z)
    sr = k.s(-Z)
    if k.s.parity == "even":
        parity_ok = bool(np.allclose(sv, sr, rtol=0, atol=1e-12))
    elif k.s.parity == "odd":
        parity_ok = bool(np.allclose(sv, -sr, rtol=0, atol=1e-12))
    else:
        parity_ok = True
    if k.form == "product-weights":
        return ValidationReport(div_norm=0.0, bound_violations=0, parity_ok=parity_ok,
                                tol_div=0.0, notes=["product-weights: unbounded, bounds not checked"])
    S0, S1, S2 = k.bounds
    # weights: dense in the declared support plus points outside
    if k.m_support is None:
        mg = np.linspace(0.0, 10.0, G)
    else:
        lo, hi = k.m_support
        mg = np.concatenate([np.linspace(0.0, lo, 4), np.linspace(lo, hi, G), hi + np.linspace(0, 2, 4)])
    ng = mg if k.chi2.type == "const" else np.linspace(k.chi2.support[0], k.chi2.support[1], G)
    c1 = [k.chi1(mg, r) for r in range(3)]
    c2 = k.chi2(ng)
    svals = sv.ravel()
    viol = 0
    for r, bound in enumerate((S0, S1, S2)):
        vals = np.abs(np.multiply.outer(np.multiply.outer(c1[r], c2), svals))
        viol += int(np.sum(vals > bound * (1 + 1e-12) + 1e-300))
    support_ok = True
    if k.m_support is not None:
        lo, hi = k.m_support
        outside = (mg <= lo) | (mg >= hi)
        support_ok = bool(np.all(c1[0][outside] == 0) and np.all(c1[1][outside] == 0))
    # integration-by-parts identity: grad_x (s * psi) = s * grad psi for psi = 1 + 0.3 sin(2 pi y1)
    h = 1.0 / G
    conv = _self_convolution(k.s, G, k.dim, lambda y: 1.0 + 0.3 * np.sin(TWO_PI * y[..., 0]))
    lhs = (np.roll(conv, -1, axis=0) - np.roll(conv, 1, axis=0)) / (2 * h)
    rhs = _self_convolution(k.s, G, k.dim, lambda y: 0.3 * TWO_PI * np.cos(TWO_PI * y[..., 0]))
    resid = float(np.max(np.abs(lhs - rhs)))
    notes.append("identity residual is the x1-derivative check without absolute values")
    return ValidationReport(div_norm=0.0, bound_violations=viol, parity_ok=parity_ok, tol_div=0.0,
                            support_ok=support_ok, identity_residual=resid, notes=notes)


def _self_convolution(s: SSpec, G: int, dim: int, f) -> np.ndarray:
    """Midpoint quadrature of int s(x - y) f(y) dy on the node grid."""
    X = _node_grid(G, dim).reshape(-1, dim)
    vals = f(X)
    out = s(X[:, None, :] - X[None, :, :]) @ vals / G ** dim
    return out.reshape((G,) * dim)


def validate_kernel(kernel, resolution: int = 32) -> ValidationReport:
    if resolution < 16:
        raise ValueError("validation grid needs at least 16 nodes per axis")
    if isinstance(kernel, InteractionKernel):
        return _validate_interaction(kernel, resolution)
    if isinstance(kernel, InfluenceKernel):
        return _validate_influence(kernel, resolution)
    raise TypeError(f"not a kernel: {type(kernel).__name__}")


@dataclass(frozen=True)
class Kernels:
    """The pair (a, S) handed to every solver."""
    interaction: InteractionKernel
    influence: InfluenceKernel

    @property
    def dim(self) -> int:
        return self.interaction.dim

    def __post_init__(self):
        if self.interaction.dim != self.influence.dim:
            raise ValueError("interaction and influence kernels disagree on dim")


def zero_kernels(dim: int = 1) -> Kernels:
    return Kernels(zero_interaction(dim), zero_influence(dim))
