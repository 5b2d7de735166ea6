"""Dense real polynomials and the series manipulations built on them.

Coefficients are stored ascending (coeffs[k] multiplies x**k), trailing
zeros trimmed, so the degree is always len(coeffs) - 1.  Evaluation is
Horner's rule and works for real or complex arguments, scalars or arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergence

_TRIM_TOL = 0.0  # exact zeros only; callers decide what counts as negligible


def _trimmed(coeffs: Iterable[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[-1] == _TRIM_TOL:
        c.pop()
    if not c:
        c = [0.0]
    return tuple(c)


@dataclass(frozen=True)
class RealPolynomial:
    """Immutable dense polynomial with real coefficients, ascending order."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float]):
        object.__setattr__(self, "coeffs", _trimmed(coeffs))

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero() -> "RealPolynomial":
        return RealPolynomial((0.0,))

    @staticmethod
    def one() -> "RealPolynomial":
        return RealPolynomial((1.0,))

    @staticmethod
    def monomial(degree: int, coeff: float = 1.0) -> "RealPolynomial":
        return RealPolynomial((0.0,) * degree + (float(coeff),))

    @staticmethod
    def from_roots(roots: Sequence[float]) -> "RealPolynomial":
        """Monic polynomial with the given real roots."""
        c = np.array([1.0])
        for r in roots:
            c = np.convolve(c, np.array([-float(r), 1.0]))
        return RealPolynomial(c)

    @staticmethod
    def from_conjugate_pair(re: float, im: float) -> "RealPolynomial":
        """Monic quadratic with roots re +/- i*im."""
        return RealPolynomial((re * re + im * im, -2.0 * re, 1.0))

    # -- basic queries -------------------------------------------------

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def coeff(self, k: int) -> float:
        """Coefficient of x**k (0 beyond the stored degree)."""
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0.0

    def __call__(self, x):
        acc = np.zeros_like(np.asarray(x), dtype=np.result_type(np.asarray(x).dtype, float))
        for c in reversed(self.coeffs):
            acc = acc * x + c
        if np.isscalar(x) or np.asarray(x).shape == ():
            return acc[()]
        return acc

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "RealPolynomial | float") -> "RealPolynomial":
        if not isinstance(other, RealPolynomial):
            other = RealPolynomial((float(other),))
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return RealPolynomial(a)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self) -> "RealPolynomial":
        return RealPolynomial(tuple(-c for c in self.coeffs))

    def __sub__(self, other: "RealPolynomial | float") -> "RealPolynomial":
        if not isinstance(other, RealPolynomial):
            other = RealPolynomial((float(other),))
        return self + (-other)

    def __mul__(self, other: "RealPolynomial | float") -> "RealPolynomial":
        if isinstance(other, RealPolynomial):
            return RealPolynomial(np.convolve(self.coeffs, other.coeffs))
        return RealPolynomial(tuple(float(other) * c for c in self.coeffs))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, n: int) -> "RealPolynomial":
        if n < 0:
            raise ValueError("negative polynomial power")
        out = RealPolynomial.one()
        for _ in range(n):
            out = out * self
        return out

    def derivative(self) -> "RealPolynomial":
        if self.degree == 0:
            return RealPolynomial.zero()
        return RealPolynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def antiderivative(self) -> "RealPolynomial":
        """Primitive with zero constant term."""
        return RealPolynomial((0.0,) + tuple(c / (k + 1) for k, c in enumerate(self.coeffs)))

    def deflate(self, root: float) -> "RealPolynomial":
        """Synthetic division by (x - root); the remainder is dropped.

        Stable when `root` is (numerically) a root; used to peel known
        factors off configuration polynomials.
        """
        c = list(self.coeffs)
        out = [0.0] * (len(c) - 1)
        acc = c[-1]
        for k in range(len(c) - 2, -1, -1):
            out[k] = acc
            acc = c[k] + acc * root
        return RealPolynomial(out)

    def deflate_pair(self, re: float, im: float) -> "RealPolynomial":
        """Divide by the monic quadratic with roots re +/- i*im."""
        q = RealPolynomial.from_conjugate_pair(re, im)
        quot, _ = divmod_poly(self, q)
        return quot

    def scale_arg(self, q: float) -> "RealPolynomial":
        """p(q*x) as a polynomial in x."""
        return RealPolynomial(tuple(c * q**k for k, c in enumerate(self.coeffs)))

    def shift(self, c: float) -> "RealPolynomial":
        """p(x + c) as a polynomial in x (Taylor shift, Horner form)."""
        out = np.zeros(len(self.coeffs))
        for a in reversed(self.coeffs):
            head = c * out[0] + a
            out[1:] = out[:-1] + c * out[1:]
            out[0] = head
        return RealPolynomial(out)

    def __repr__(self) -> str:  # short, degree-first
        return f"RealPolynomial(deg={self.degree}, coeffs={self.coeffs})"


def divmod_poly(num: RealPolynomial, den: RealPolynomial) -> tuple[RealPolynomial, RealPolynomial]:
    """Euclidean division, returning (quotient, remainder)."""
    q, r = np.polydiv(np.array(num.coeffs[::-1]), np.array(den.coeffs[::-1]))
    return RealPolynomial(q[::-1]), RealPolynomial(r[::-1])


def poly_from_complex_roots(real_roots: Sequence[float],
                            pairs: Sequence[tuple[float, float]]) -> RealPolynomial:
    """Monic real polynomial with the given real roots and conjugate pairs."""
    p = RealPolynomial.from_roots(real_roots)
    for re, im in pairs:
        p = p * RealPolynomial.from_conjugate_pair(re, im)
    return p


# ----------------------------------------------------------------------
# root finding


def all_roots(poly: RealPolynomial, snap_tol: float = 1e-9,
              polish: bool = True) -> np.ndarray:
    """All complex roots via companion-matrix eigenvalues.

    Near-real roots (|Im| below snap_tol relative to 1 + |root|) are snapped
    onto the axis, and the remaining roots are symmetrized into exact
    conjugate pairs.  One or two Newton polishing steps per root sharpen the
    forward error on well-separated roots.
    """
    c = np.array(poly.coeffs, dtype=float)
    if poly.degree == 0:
        return np.array([], dtype=complex)
    try:
        roots = np.roots(c[::-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK hiccup
        raise NonConvergence(f"companion eigenvalue solve failed: {exc}") from exc

    if polish:
        dp = poly.derivative()
        for _ in range(2):
            fz = poly(roots)
            dz = dp(roots)
            ok = np.abs(dz) > 1e-30
            step = np.where(ok, fz / np.where(ok, dz, 1.0), 0.0)
            # guard against a polish step jumping between clustered roots
            step = np.where(np.abs(step) < 1e-2 * (1.0 + np.abs(roots)), step, 0.0)
            roots = roots - step

    snapped = np.where(np.abs(roots.imag) <= snap_tol * (1.0 + np.abs(roots)),
                       roots.real.astype(complex), roots)

    # symmetrize the strictly complex ones into conjugate pairs
    complex_mask = snapped.imag != 0.0
    cplx = snapped[complex_mask]
    upper = sorted([z for z in cplx if z.imag > 0], key=lambda z: (z.real, z.imag))
    lower = sorted([z for z in cplx if z.imag < 0], key=lambda z: (z.real, -z.imag))
    paired: list[complex] = []
    if len(upper) == len(lower):
        for zu, zl in zip(upper, lower):
            mid = 0.5 * (zu + np.conj(zl))
            paired.extend([mid, np.conj(mid)])
    else:  # odd leftover: keep as computed rather than inventing symmetry
        paired = list(cplx)

    out = np.concatenate([snapped[~complex_mask], np.array(paired, dtype=complex)])
    return np.sort_complex(out)


def split_real_pairs(roots: np.ndarray) -> tuple[list[float], list[tuple[float, float]]]:
    """Split an all_roots result into sorted real roots and upper-half pairs."""
    reals = sorted(float(z.real) for z in roots if z.imag == 0.0)
    pairs = sorted((float(z.real), float(z.imag)) for z in roots if z.imag > 0.0)
    return reals, pairs


def cluster_roots(roots: np.ndarray, tol: float = 1e-6) -> list[tuple[complex, int]]:
    """Greedy clustering of a root list into (center, multiplicity) groups."""
    remaining = list(roots)
    clusters: list[tuple[complex, int]] = []
    while remaining:
        z = remaining.pop(0)
        group = [z]
        keep = []
        for w in remaining:
            if abs(w - z) <= tol * (1.0 + abs(z)):
                group.append(w)
            else:
                keep.append(w)
        remaining = keep
        clusters.append((sum(group) / len(group), len(group)))
    return clusters


# ----------------------------------------------------------------------
# truncated series in 1/z around infinity


def series_mul(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """First n coefficients of the product of two power series."""
    return np.convolve(a[:n], b[:n])[:n]


def inv_sqrt_series(u: np.ndarray, n: int) -> np.ndarray:
    """Coefficients s of (1 + u(w))**(-1/2) with s[0] = 1, to order n.

    Recurrence from 2(1+u) S' + u' S = 0, stable and exact in rational
    arithmetic; u[0] must be 0.
    """
    s = np.zeros(n)
    s[0] = 1.0
    uu = np.zeros(n)
    uu[: min(n, len(u))] = u[:n]
    for k in range(1, n):
        acc = 0.0
        for j in range(1, k + 1):
            acc += (2 * k - j) * uu[j] * s[k - j]
        s[k] = -acc / (2 * k)
    return s


def sqrt_tail_series(monic: RealPolynomial, n: int) -> np.ndarray:
    """Series s with z**p / sqrt(A(z)) = sum_k s[k] z**(-k), A monic of degree 2p.

    The branch is the one positive on the real axis to the right of all roots.
    """
    deg = monic.degree
    if deg % 2 != 0:
        raise ValueError("even degree required")
    if abs(monic.leading - 1.0) > 1e-12:
        raise ValueError("monic polynomial required")
    u = np.zeros(n)
    for k in range(1, n):
        u[k] = monic.coeff(deg - k) if deg - k >= 0 else 0.0
    return inv_sqrt_series(u, n)
