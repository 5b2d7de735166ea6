"""Quadrature on multi-cut supports and the linear systems living on them.

A support configuration is a disjoint union of p closed intervals (cuts)
given by 2p strictly increasing endpoints.  Everything here works with the
edge polynomial A (monic, simple zeros at the endpoints) folded so that
integrands handed to Gauss-Chebyshev rules stay smooth: the square-root
factors attached to the active interval are absorbed into the weight and
the remaining factors are evaluated as explicit products over endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (InconsistentConfiguration, NegativeDensity,
                     NegativeRUnderRoot, NonConvergence, SingularSystem)
from .polynomials import RealPolynomial, all_roots

QUAD_TOL = 1e-11
CHEB_N0 = 64
CHEB_CAP = 8192
GL_N0 = 24
GL_CAP = 6144
TAIL_TERMS = 24


@lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def adaptive_gl(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                tol: float = QUAD_TOL, n0: int = GL_N0, cap: int = GL_CAP,
                strict: bool = False) -> float:
    """Gauss-Legendre with node doubling until two levels agree."""
    if b == a:
        return 0.0
    prev = None
    n = n0
    val = 0.0
    while n <= cap:
        x, w = _leggauss(n)
        xm = 0.5 * (a + b) + 0.5 * (b - a) * x
        val = 0.5 * (b - a) * float(np.sum(w * f(xm)))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    if strict:
        raise NonConvergence(f"Gauss-Legendre stalled at {cap} nodes")
    return val


def cheb_singular_integral(f: Callable[[np.ndarray], np.ndarray], a: float,
                           b: float, tol: float = QUAD_TOL, n0: int = CHEB_N0,
                           cap: int = CHEB_CAP, strict: bool = False) -> float:
    """integral of f(x) / sqrt((x-a)(b-x)) over [a, b].

    Midpoint Gauss-Chebyshev: (pi/n) * sum f(m + r cos theta_k) at the odd
    Chebyshev angles; nodes double until two levels agree to `tol`.
    """
    m = 0.5 * (a + b)
    r = 0.5 * (b - a)
    prev = None
    n = n0
    val = 0.0
    while n <= cap:
        theta = (2.0 * np.arange(1, n + 1) - 1.0) * (math.pi / (2.0 * n))
        val = (math.pi / n) * float(np.sum(f(m + r * np.cos(theta))))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    if strict:
        raise NonConvergence(f"Chebyshev rule stalled at {cap} nodes")
    return val


def cheb_u_integral(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                    tol: float = QUAD_TOL, n0: int = CHEB_N0,
                    cap: int = CHEB_CAP, strict: bool = False) -> float:
    """integral of f(x) * sqrt((x-a)(b-x)) over [a, b] (second-kind weight)."""
    m = 0.5 * (a + b)
    r = 0.5 * (b - a)
    prev = None
    n = n0
    val = 0.0
    while n <= cap:
        k = np.arange(1, n + 1)
        theta = k * math.pi / (n + 1.0)
        s2 = np.sin(theta) ** 2
        val = (math.pi * r * r / (n + 1.0)) * float(np.sum(s2 * f(m + r * np.cos(theta))))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    if strict:
        raise NonConvergence(f"Chebyshev-U rule stalled at {cap} nodes")
    return val


def edge_integral(f: Callable[[np.ndarray], np.ndarray], edge: float,
                  target: float, kind: str = "inv",
                  tol: float = QUAD_TOL) -> float:
    """integral of f(y) * |y - edge|**(+-1/2) over the segment between
    `edge` and `target`, with positive orientation (arc-length measure):
    the sign of the result comes from f alone.

    kind="inv" integrates f / sqrt|y - edge|, kind="sqrt" integrates
    f * sqrt|y - edge|.  The substitution y = edge +/- s**2 removes the
    singularity; f must be smooth on the closed segment.
    """
    span = target - edge
    if span == 0.0:
        return 0.0
    sgn = 1.0 if span > 0 else -1.0
    smax = math.sqrt(abs(span))

    if kind == "inv":
        def g(s):
            return 2.0 * f(edge + sgn * s * s)
    elif kind == "sqrt":
        def g(s):
            return 2.0 * s * s * f(edge + sgn * s * s)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return adaptive_gl(g, 0.0, smax, tol=tol)


# ----------------------------------------------------------------------
# support configurations


@dataclass(frozen=True)
class SupportConfig:
    """Union of p disjoint closed intervals encoded by sorted endpoints."""

    endpoints: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(v) for v in self.endpoints)
        if len(pts) < 2 or len(pts) % 2 != 0:
            raise InconsistentConfiguration(
                f"need an even, positive number of endpoints, got {len(pts)}")
        if any(u >= v for u, v in zip(pts, pts[1:])):
            raise InconsistentConfiguration(f"endpoints not strictly increasing: {pts}")
        object.__setattr__(self, "endpoints", pts)

    @property
    def p(self) -> int:
        return len(self.endpoints) // 2

    @property
    def A(self) -> RealPolynomial:
        return RealPolynomial.from_roots(self.endpoints)

    @property
    def spread(self) -> float:
        return self.endpoints[-1] - self.endpoints[0]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.endpoints[0] + self.endpoints[-1])

    def cuts(self) -> list[tuple[float, float]]:
        e = self.endpoints
        return [(e[2 * k], e[2 * k + 1]) for k in range(self.p)]

    def gaps(self) -> list[tuple[float, float]]:
        e = self.endpoints
        return [(e[2 * k + 1], e[2 * k + 2]) for k in range(self.p - 1)]

    def locate(self, x: float) -> tuple[str, int]:
        """Classify a real point: ("cut", k), ("gap", k), ("left", 0) or
        ("right", 0).  Gap k separates cuts k and k+1."""
        e = self.endpoints
        if x < e[0]:
            return "left", 0
        if x > e[-1]:
            return "right", 0
        for k, (u, v) in enumerate(self.cuts()):
            if u <= x <= v:
                return "cut", k
        for k, (u, v) in enumerate(self.gaps()):
            if u < x < v:
                return "gap", k
        return "cut", self.p - 1  # x equals an endpoint within float fuzz

    def excluded_product(self, x, exclude: Sequence[int]) -> np.ndarray:
        """prod over endpoints not in `exclude` of (x - a_i), vectorized."""
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        for i, a in enumerate(self.endpoints):
            if i in exclude:
                continue
            out = out * (x - a)
        return out

    def branch_sign(self, x: float) -> float:
        """Sign of the square root of A on the real axis off the support,
        for the branch positive right of all endpoints (continued through
        the upper half plane)."""
        region, k = self.locate(x)
        if region == "right":
            return 1.0
        if region == "left":
            return -1.0 if self.p % 2 else 1.0
        if region == "gap":
            # 2(p - k - 1) endpoints to the right of gap k
            return -1.0 if (self.p - k - 1) % 2 else 1.0
        raise InconsistentConfiguration(f"x={x} lies on the support")

    def sqrt_abs_A(self, x) -> np.ndarray:
        return np.sqrt(np.abs(self.A(x)))


def sqrt_A_complex(cfg: SupportConfig, z) -> np.ndarray:
    """The branch of sqrt(A) cut exactly along the support.

    Products of principal square roots of the linear factors: the sign
    flips cancel pairwise across gaps and outside the hull, leaving branch
    cuts only on the cuts themselves, with the branch positive on the real
    axis right of the support.
    """
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    for a in cfg.endpoints:
        out = out * np.sqrt(z - a)
    return out


# ----------------------------------------------------------------------
# gap moment systems and the Green family


@dataclass(frozen=True)
class HFamily:
    """Solutions h_j of the gap-orthogonality systems on a configuration.

    members[j] has degree j + p - 1; members[0] is the negative of the
    monic Green numerator h_monic.  For j >= 1 the expansion of
    members[j] / sqrt(A) at infinity is j z**(j-1) + O(1/z**2).
    """

    cfg: SupportConfig
    members: tuple[RealPolynomial, ...]

    @property
    def h_monic(self) -> RealPolynomial:
        return -1.0 * self.members[0]

    def __getitem__(self, j: int) -> RealPolynomial:
        return self.members[j]


def _gap_moments(cfg: SupportConfig, max_power: int,
                 tol: float = QUAD_TOL) -> list[np.ndarray]:
    """Moment rows M[g][i] = integral over gap g of x**i / sqrt(A(x)) dx.

    On a gap A > 0; the two active endpoints fold into the Chebyshev weight
    and the rest contributes sqrt(-excluded_product) (negative there since
    the interior factor pair is negative).
    """
    out = []
    e = cfg.endpoints
    for g, (u, v) in enumerate(cfg.gaps()):
        exclude = (2 * g + 1, 2 * g + 2)

        def fvec(x, _ex=exclude):
            rest = -cfg.excluded_product(x, _ex)
            if np.any(rest <= 0.0):
                raise NegativeRUnderRoot(
                    f"edge polynomial not positive inside gap {g}")
            base = 1.0 / np.sqrt(rest)
            return np.vstack([base * x**i for i in range(max_power + 1)])

        m = 0.5 * (u + v)
        r = 0.5 * (v - u)
        prev = None
        n = CHEB_N0
        row = None
        while n <= CHEB_CAP:
            theta = (2.0 * np.arange(1, n + 1) - 1.0) * (math.pi / (2.0 * n))
            vals = fvec(m + r * np.cos(theta))
            row = (math.pi / n) * vals.sum(axis=1)
            if prev is not None and np.max(np.abs(row - prev)) <= tol * max(
                    1.0, float(np.max(np.abs(row)))):
                break
            prev = row
            n *= 2
        out.append(row)
    return out


def solve_h_family(cfg: SupportConfig, J: int,
                   tol: float = QUAD_TOL) -> HFamily:
    """Solve the gap systems for h_0 ... h_J.

    h_j (degree j + p - 1) is pinned by: leading coefficient j (or -1 for
    j = 0), vanishing Laurent coefficients of h_j/sqrt(A) for powers
    z**(j-2) ... z**(-1), and zero integral against 1/sqrt(A) over every
    gap.  Gap rows are rescaled to unit max-norm before solving.
    """
    from .polynomials import sqrt_tail_series

    p = cfg.p
    if J < 0:
        raise ValueError("J must be >= 0")
    s = sqrt_tail_series(cfg.A, J + 4)
    moments = _gap_moments(cfg, J + p - 1, tol=tol) if p > 1 else []

    members: list[RealPolynomial] = []
    for j in range(J + 1):
        ncoef = j + p
        lead = -1.0 if j == 0 else float(j)
        M = np.zeros((ncoef, ncoef))
        rhs = np.zeros(ncoef)
        row = 0
        M[row, ncoef - 1] = 1.0
        rhs[row] = lead
        row += 1
        # Laurent rows: coefficient of z**n in h_j / sqrt(A) vanishes
        for n in range(j - 2, -2, -1):
            for k in range(0, j - n):
                idx = n + p + k
                if 0 <= idx < ncoef:
                    M[row, idx] += s[k]
            row += 1
        for g in range(p - 1):
            w = moments[g][:ncoef]
            scale = np.max(np.abs(w))
            if scale == 0.0:
                raise SingularSystem(f"vanishing moment row on gap {g}")
            M[row, :] = w / scale
            row += 1
        if row != ncoef:
            raise SingularSystem(f"h-system for j={j} is not square ({row}x{ncoef})")
        try:
            c = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"h-system for j={j} singular: {exc}") from exc
        if not np.all(np.isfinite(c)):
            raise SingularSystem(f"h-system for j={j} returned non-finite data")
        members.append(RealPolynomial(c))
    return HFamily(cfg=cfg, members=tuple(members))


# ----------------------------------------------------------------------
# Robin measure data


@dataclass(frozen=True)
class RobinData:
    """Green numerator, Robin constant and the harmonic-measure density."""

    cfg: SupportConfig
    h: RealPolynomial  # monic, degree p - 1
    rho: float

    def density(self, x) -> np.ndarray:
        """Robin (equilibrium) density |h| / (pi sqrt|A|) on the support."""
        x = np.asarray(x, dtype=float)
        return np.abs(self.h(x)) / (math.pi * self.cfg.sqrt_abs_A(x))

    def green_value(self, x: float) -> float:
        """Green function with pole at infinity, evaluated at real x off
        the support (0 on the support itself)."""
        region, k = self.cfg.locate(x)
        e = self.cfg.endpoints
        if region == "cut":
            return 0.0
        if region == "right":
            edge = e[-1]
        elif region == "left":
            edge = e[0]
        else:
            u, v = self.cfg.gaps()[k]
            edge = u if (x - u) <= (v - x) else v
        idx = e.index(edge)

        def f(y):
            rest = self.cfg.excluded_product(y, (idx,))
            return self.h(y) / np.sqrt(np.abs(rest))

        return abs(edge_integral(f, edge, x, kind="inv"))


def robin_data(cfg: SupportConfig, tol: float = QUAD_TOL,
               tail_terms: int = TAIL_TERMS) -> RobinData:
    """Robin constant and Green numerator of the configuration.

    rho is read off the large-argument behaviour of the Green function:
    the integral of h / sqrt(A) from the right edge up to a far cutoff plus
    an analytic tail, minus the logarithm.  The tail is expanded around the
    hull midpoint so its convergence is controlled by the hull radius.
    """
    from .polynomials import sqrt_tail_series

    fam = solve_h_family(cfg, 0, tol=tol)
    h = fam.h_monic
    e = cfg.endpoints
    spread = cfg.spread
    mu = cfg.midpoint
    Y = max(2.0 * spread + abs(e[-1]), e[-1] + 1.0, mu + 2.5 * max(spread, 1.0))

    def f(y):
        rest = cfg.excluded_product(y, (len(e) - 1,))
        return h(y) / np.sqrt(np.abs(rest))

    finite = edge_integral(f, e[-1], Y, kind="inv", tol=tol)

    h_sh = h.shift(mu)
    A_sh = cfg.A.shift(mu)
    s = sqrt_tail_series(A_sh, tail_terms + 1)
    tail = 0.0
    for q in range(1, tail_terms + 1):
        tau = 0.0
        for k in range(0, q + 1):
            idx = cfg.p - 1 - q + k
            if 0 <= idx <= h_sh.degree:
                tau += s[k] * h_sh.coeff(idx)
        tail += tau / (q * (Y - mu) ** q)

    rho = finite + tail - math.log(Y - mu)
    return RobinData(cfg=cfg, h=h, rho=rho)


def single_interval_robin(u: float, v: float) -> float:
    """Closed form: rho([u, v]) = log(4 / (v - u))."""
    return math.log(4.0 / (v - u))


def interval_green_with_pole(u: float, v: float, xi: float) -> tuple[float, float]:
    """For a single interval E = [u, v] and a real pole xi off E, return
    (g_E(xi, infinity), gamma(xi)) where gamma is the constant term of the
    pole expansion g_E(z, xi) = -log|z - xi| + gamma + o(1).

    Conformal transport of the disk Green function through the Joukowski
    map; used by the small-cut Robin expansion.
    """
    X = (2.0 * xi - u - v) / (v - u)
    if abs(X) <= 1.0:
        raise InconsistentConfiguration("pole must lie off the interval")
    sgn = 1.0 if X > 0 else -1.0
    root = math.sqrt(X * X - 1.0)
    W = X - sgn * root  # |W| < 1
    g_inf = math.log(abs(X + sgn * root))
    dWdx = (1.0 - sgn * X / root) * 2.0 / (v - u)
    gamma = math.log(abs(1.0 - W * W)) - math.log(abs(dWdx))
    return g_inf, gamma


def robin_with_small_cut(u: float, v: float, xi: float, delta: float) -> float:
    """Robin constant of [u, v] union [xi - delta, xi + delta] to leading
    order in 1/log(1/delta)."""
    g, gamma = interval_green_with_pole(u, v, xi)
    return single_interval_robin(u, v) - g * g / (gamma + math.log(2.0 / delta))


# ----------------------------------------------------------------------
# periods, mass, moments


def period_residuals(cfg: SupportConfig, B: RealPolynomial,
                     tol: float = QUAD_TOL) -> np.ndarray:
    """Signed integrals of the square-root branch of A*B**2 over each gap.

    The branch on gap k (continued through the upper half plane from the
    right of the support) is (-1)**(p-k-1) sqrt(A) B; all must vanish at
    equilibrium.  Raises NegativeRUnderRoot if A*B**2 dips below -tol
    inside a gap.
    """
    out = np.zeros(cfg.p - 1)
    scale = max(1.0, max(abs(c) for c in (cfg.A * B * B).coeffs))
    for g, (u, v) in enumerate(cfg.gaps()):
        exclude = (2 * g + 1, 2 * g + 2)
        sgn = cfg.branch_sign(0.5 * (u + v))

        def f(x, _ex=exclude):
            rest = -cfg.excluded_product(x, _ex)
            bad = rest < -tol * scale
            if np.any(bad):
                raise NegativeRUnderRoot(
                    f"density polynomial positive inside gap {g}")
            return np.sqrt(np.maximum(rest, 0.0)) * B(x)

        out[g] = sgn * cheb_u_integral(f, u, v, tol=tol)
    return out


def _check_no_interior_bzero(cfg: SupportConfig, B: RealPolynomial,
                             margin: float = 1e-9) -> None:
    if B.degree == 0:
        return
    for z in all_roots(B):
        if z.imag != 0.0:
            continue
        x = z.real
        for u, v in cfg.cuts():
            if u + margin * (v - u) < x < v - margin * (v - u):
                raise NegativeDensity(
                    f"double-zero factor vanishes at {x:.12g} inside cut [{u:.6g}, {v:.6g}]")


def cut_weight_integral(cfg: SupportConfig, B: RealPolynomial, k: int,
                        extra: Callable[[np.ndarray], np.ndarray] | None = None,
                        tol: float = QUAD_TOL) -> float:
    """integral over cut k of extra(x) * sqrt|R(x)| / pi dx."""
    u, v = cfg.cuts()[k]
    exclude = (2 * k, 2 * k + 1)

    def f(x):
        rest = cfg.excluded_product(x, exclude)
        val = np.sqrt(np.maximum(rest, 0.0)) * np.abs(B(x)) / math.pi
        if extra is not None:
            val = val * extra(x)
        return val

    return cheb_u_integral(f, u, v, tol=tol)


def mass_integral(cfg: SupportConfig, B: RealPolynomial,
                  tol: float = QUAD_TOL) -> float:
    """Total mass of the density sqrt|R| / pi over the support."""
    _check_no_interior_bzero(cfg, B)
    return sum(cut_weight_integral(cfg, B, k, tol=tol) for k in range(cfg.p))


def cut_partial_mass(cfg: SupportConfig, B: RealPolynomial, k: int,
                     x: float, tol: float = QUAD_TOL) -> float:
    """Mass of the density over [left edge of cut k, x], x inside cut k."""
    u, v = cfg.cuts()[k]
    x = min(max(x, u), v)
    m = 0.5 * (u + v)
    r = 0.5 * (v - u)
    theta_x = math.asin(min(1.0, max(-1.0, (x - m) / r)))
    exclude = (2 * k, 2 * k + 1)

    def g(theta):
        y = m + r * np.sin(theta)
        rest = cfg.excluded_product(y, exclude)
        return r * r * np.cos(theta) ** 2 * np.sqrt(np.maximum(rest, 0.0)) \
            * np.abs(B(y)) / math.pi

    return adaptive_gl(g, -0.5 * math.pi, theta_x, tol=tol)
