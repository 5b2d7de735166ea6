"""Polynomial external fields and the factor algebra of density polynomials.

A field of degree 2m is phi(x) = sum_{j=1}^{2m} t_j x^j with the leading
coupling pinned to t_{2m} = 1/(2m), so phi'(x) is monic of degree 2m - 1.
The admissible densities supported on p cuts are encoded by a polynomial

    R = A * B**2,   deg A = 2p (simple zeros = support endpoints),
                    deg B = 2m - p - 1 (double zeros),

which must agree with (phi')**2 above degree 2m - 2, the next coefficient
carrying the total mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import DegreeMismatch, InconsistentConfiguration
from .polynomials import RealPolynomial, sqrt_tail_series

LEADING_TOL = 1e-12


@dataclass(frozen=True)
class ExternalField:
    """Even-degree polynomial field with normalized leading coupling.

    couplings holds (t_1, ..., t_{2m-1}); t_{2m} = 1/(2m) is implicit.
    """

    m: int
    couplings: tuple[float, ...]
    phi: RealPolynomial = dc_field(init=False, compare=False, repr=False)
    phi_prime: RealPolynomial = dc_field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise DegreeMismatch(f"field degree parameter m={self.m} must be >= 1")
        if len(self.couplings) != 2 * self.m - 1:
            raise DegreeMismatch(
                f"expected {2 * self.m - 1} couplings for degree {2 * self.m}, "
                f"got {len(self.couplings)}")
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))
        coeffs = (0.0,) + self.couplings + (1.0 / (2 * self.m),)
        phi = RealPolynomial(coeffs)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_prime", phi.derivative())

    @property
    def degree(self) -> int:
        return 2 * self.m

    @staticmethod
    def from_phi_coeffs(coeffs: Sequence[float]) -> tuple["ExternalField", float]:
        """Build a field from raw phi coefficients (ascending, constant first).

        The constant term is dropped (it shifts nothing) and the whole field
        is rescaled by kappa so the leading coefficient becomes 1/(2m).
        Returns (field, kappa); masses for the original field map to
        kappa * t for the returned one.
        """
        c = [float(v) for v in coeffs]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        deg = len(c) - 1
        if deg < 2 or deg % 2 != 0:
            raise DegreeMismatch(f"field degree must be even and >= 2, got {deg}")
        lead = c[-1]
        if lead <= 0:
            raise DegreeMismatch("leading coefficient must be positive")
        m = deg // 2
        kappa = 1.0 / (2 * m * lead)
        scaled = [kappa * v for v in c[1:deg]]
        return ExternalField(m, tuple(scaled)), kappa

    @staticmethod
    def quadratic() -> "ExternalField":
        """phi = x**2 / 2."""
        return ExternalField(1, (0.0,))

    @staticmethod
    def quartic_from_critical_points(alpha: complex, beta: complex) -> "ExternalField":
        """Quartic field with phi'(x) = x (x - alpha)(x - beta).

        alpha, beta must be both real or a conjugate pair, so the field has
        real coefficients; phi(0) = 0 and x = 0 is a critical point.
        """
        s = alpha + beta
        prod = alpha * beta
        if abs(complex(s).imag) > 1e-12 * (1 + abs(s)) or \
           abs(complex(prod).imag) > 1e-12 * (1 + abs(prod)):
            raise DegreeMismatch("critical points must be real or conjugate")
        return ExternalField(2, (0.0, complex(prod).real / 2.0, -complex(s).real / 3.0))

    def critical_points(self) -> np.ndarray:
        from .polynomials import all_roots

        return all_roots(self.phi_prime)


def double_zero_factor(fieldspec: ExternalField, A: RealPolynomial,
                       extra_terms: int = 2) -> RealPolynomial:
    """Polynomial part of phi' / sqrt(A): the double-zero factor B.

    A must be monic of even degree 2p <= 2m with the branch of the root
    positive to the right of all zeros.  The expansion of A**(-1/2) at
    infinity is taken to 2m + extra_terms terms, more than enough for the
    polynomial part of the product.
    """
    two_m = 2 * fieldspec.m
    if A.degree % 2 != 0 or A.degree == 0 or A.degree > two_m:
        raise DegreeMismatch(f"edge polynomial degree {A.degree} invalid for 2m={two_m}")
    if abs(A.leading - 1.0) > LEADING_TOL:
        raise DegreeMismatch("edge polynomial must be monic")
    p = A.degree // 2
    nterms = two_m + extra_terms
    s = sqrt_tail_series(A, nterms)
    f = fieldspec.phi_prime
    deg_b = two_m - 1 - p
    out = np.zeros(deg_b + 1)
    for n in range(deg_b + 1):
        acc = 0.0
        kmax = min(nterms - 1, f.degree - p - n)
        for k in range(0, kmax + 1):
            acc += f.coeff(n + p + k) * s[k]
        out[n] = acc
    return RealPolynomial(out)


def assemble_density_poly(fieldspec: ExternalField, A: RealPolynomial,
                          B: RealPolynomial,
                          tol: float = 1e-8) -> tuple[RealPolynomial, float]:
    """Assemble R = A * B**2 and extract the mass it encodes.

    R - (phi')**2 must vanish above degree 2m - 2 (relative to the
    coefficient scale of (phi')**2); the coefficient of x**(2m-2) equals
    -2t.  Returns (R, t).
    """
    two_m = 2 * fieldspec.m
    R = A * B * B
    if R.degree != 2 * fieldspec.phi_prime.degree:
        raise DegreeMismatch(
            f"R has degree {R.degree}, expected {2 * fieldspec.phi_prime.degree}")
    pp = fieldspec.phi_prime * fieldspec.phi_prime
    D = R - pp
    scale = max(1.0, max(abs(c) for c in pp.coeffs))
    for k in range(two_m - 1, R.degree + 1):
        if abs(D.coeff(k)) > tol * scale:
            raise InconsistentConfiguration(
                f"coefficient of x**{k} in R - (phi')**2 is {D.coeff(k):.3e}, "
                f"beyond {tol:.1e} * scale")
    mass = -0.5 * D.coeff(two_m - 2)
    return R, mass
