"""Closed-form theory for quartic fields.

A quartic field is brought to the normal form phi'(x) = x (x - alpha)(x - beta)
with the global minimum of phi at the origin and the remaining critical
points in the closed right half-plane.  In that frame the whole phase
portrait in t is decided by one number, the squared slope of the line from
the origin to the upper critical point, compared against a universal
threshold (the positive root of a cubic).  The module also solves the
quadruple-root configurations that pin the transition times and builds the
one-parameter family of fields with an interior merge point.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (DegenerateField, InconsistentConfiguration,
                     NoRealConfiguration)
from .fields import ExternalField
from .polynomials import RealPolynomial, all_roots

ONE_CUT_FOREVER = "OneCutForever"
TYPE_III_BOUNDARY = "TypeIIIBoundary"
FULL_SEQUENCE = "FullSequence"
REAL_CRITICAL_SEQUENCE = "RealCriticalSequence"
SYMMETRIC_TWO_CUT = "SymmetricTwoCut"

_COINCIDENCE_RTOL = 1e-9


@lru_cache(maxsize=1)
def critical_constants() -> "CriticalSlopeConstants":
    """Universal constants separating the quartic scenarios.

    The slope-squared threshold is the unique positive root of
    32 s^3 - 17 s^2 + 14 s - 1; the auxiliary root solves
    4 g^3 + 15 g^2 - 200 = 0 and satisfies s = (10 - g^2) / 30, which is
    verified here as a consistency check.
    """
    s = _safeguarded_newton(lambda x: 32 * x ** 3 - 17 * x ** 2 + 14 * x - 1,
                            lambda x: 96 * x ** 2 - 34 * x + 14, 0.0, 1.0)
    g = _safeguarded_newton(lambda x: 4 * x ** 3 + 15 * x ** 2 - 200,
                            lambda x: 12 * x ** 2 + 30 * x, 2.0, 3.0)
    if abs(s - (10 - g * g) / 30) > 1e-12:
        raise InconsistentConfiguration(
            "slope threshold fails the cross-identity against the auxiliary root")
    return CriticalSlopeConstants(boundary_slope_sq=s,
                                  boundary_slope=math.sqrt(s),
                                  auxiliary_root=g)


@dataclass(frozen=True)
class CriticalSlopeConstants:
    boundary_slope_sq: float
    boundary_slope: float
    auxiliary_root: float


def _safeguarded_newton(f, df, lo: float, hi: float) -> float:
    """Newton iteration kept inside a sign-changing bracket."""
    flo = f(lo)
    if flo == 0.0:
        return lo
    if flo * f(hi) > 0:
        raise InconsistentConfiguration("no sign change in bracket")
    x = 0.5 * (lo + hi)
    for _ in range(100):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx * flo < 0:
            hi = x
        else:
            lo = x
        d = df(x)
        step = fx / d if d != 0 else float("inf")
        xn = x - step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) < 1e-16 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


# ----------------------------------------------------------------------
# the normalized quartic field


@dataclass(frozen=True)
class AffineNormalization:
    """Invertible map between user coordinates and the normal frame.

    x_user = shift + orient * scale * x_norm, with orient in {+1, -1}.
    Masses and transition times carry over multiplied by scale**4.
    """

    shift: float = 0.0
    orient: float = 1.0
    scale: float = 1.0

    def to_user(self, x_norm: float) -> float:
        return self.shift + self.orient * self.scale * x_norm

    def from_user(self, x_user: float) -> float:
        return (x_user - self.shift) / (self.orient * self.scale)

    def time_to_user(self, t_norm: float) -> float:
        return t_norm * self.scale ** 4


@dataclass(frozen=True)
class QuarticField:
    """Quartic field in the normal frame, with the map back out of it.

    The critical points of the field are 0 (the global minimum), crit_a
    and crit_b.  Either both are real with 0 < crit_a < crit_b <= 2 crit_a,
    or they form a conjugate pair with the upper one in the closed first
    quadrant.
    """

    crit_a: complex
    crit_b: complex
    norm: AffineNormalization

    def __post_init__(self):
        a, b = self.crit_a, self.crit_b
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        if abs(a) <= tol and abs(b) <= tol:
            raise DegenerateField(
                "flat minimum (pure quartic): trivially one cut for all t")
        if abs(a.imag) <= tol and abs(b.imag) <= tol:
            ar, br = sorted((a.real, b.real))
            if ar <= tol:
                raise DegenerateField(
                    f"critical points {a}, {b} are not strictly right of the minimum")
            if abs(ar - br) <= tol * max(1.0, abs(br)):
                raise DegenerateField(
                    "coincident real critical points (inflection boundary)")
            if br > 2 * ar * (1 + 1e-9):
                raise InconsistentConfiguration(
                    f"minimum at origin is not global (outer well deeper): "
                    f"crit_a={ar}, crit_b={br}")
            object.__setattr__(self, "crit_a", complex(ar))
            object.__setattr__(self, "crit_b", complex(br))
        else:
            if abs(a - b.conjugate()) > tol:
                raise InconsistentConfiguration(
                    f"complex critical points must be conjugate, got {a}, {b}")
            up = a if a.imag > 0 else b
            if up.real < -tol:
                raise InconsistentConfiguration(
                    f"conjugate pair must lie in the right half-plane, got {up}")
            object.__setattr__(self, "crit_a", up)
            object.__setattr__(self, "crit_b", up.conjugate())

    @property
    def is_real_case(self) -> bool:
        return self.crit_a.imag == 0.0

    @property
    def sigma1(self) -> float:
        return (self.crit_a + self.crit_b).real

    @property
    def sigma2(self) -> float:
        return (self.crit_a * self.crit_b).real

    def field(self) -> ExternalField:
        """The normalized external field, couplings (t1, t2, t3)."""
        return ExternalField(m=2, couplings=(0.0, self.sigma2 / 2.0,
                                             -self.sigma1 / 3.0))

    def slope_sq(self) -> float:
        """Squared slope from the minimum to the upper critical point."""
        if self.is_real_case:
            return 0.0
        re, im = self.crit_a.real, self.crit_a.imag
        if re == 0.0:
            return float("inf")
        return (im / re) ** 2

    def phi_at(self, x: complex) -> complex:
        s1, s2 = self.sigma1, self.sigma2
        return x ** 2 * (x * x / 4 - s1 * x / 3 + s2 / 2)

    def outer_well_barrier(self) -> float:
        """Field value at the outer well in the real case.

        Equals crit_b**3 (2 crit_a - crit_b) / 12; positive when the
        origin is the strict global minimum, zero for equal wells.
        """
        if not self.is_real_case:
            raise InconsistentConfiguration("no outer well: conjugate pair case")
        a, b = self.crit_a.real, self.crit_b.real
        return b ** 3 * (2 * a - b) / 12.0

    @staticmethod
    def from_critical_points(alpha: complex, beta: complex | None = None,
                             norm: AffineNormalization | None = None) -> "QuarticField":
        """Build from the two nonzero critical points.

        A single complex argument is paired with its conjugate.
        """
        alpha = complex(alpha)
        if beta is None:
            if alpha.imag == 0.0:
                raise InconsistentConfiguration(
                    "a single real critical point does not determine the field")
            beta = alpha.conjugate()
        return QuarticField(alpha, complex(beta),
                            norm or AffineNormalization())

    @staticmethod
    def from_external(field: ExternalField) -> "QuarticField":
        """Normalize a degree-4 field: shift the global minimum to the
        origin and mirror so the other critical points sit on the right."""
        if field.m != 2:
            raise InconsistentConfiguration(
                f"quartic normal form needs degree 4, got degree {2 * field.m}")
        crits = all_roots(field.phi_prime)
        real_crits = sorted(c.real for c in crits if abs(c.imag) <= 1e-10 * (1 + abs(c)))
        if not real_crits:
            raise InconsistentConfiguration("no real critical point found")
        vals = [field.phi(c) for c in real_crits]
        zeta0 = real_crits[int(np.argmin(vals))]
        others = []
        for c in crits:
            c = complex(c)
            if abs(c.imag) <= 1e-10 * (1 + abs(c)) and abs(c.real - zeta0) <= 1e-10 * (1 + abs(c)):
                continue
            others.append(c - zeta0)
        if len(others) != 2:
            # repeated minimizer root: flat minimum
            raise DegenerateField(
                "flat minimum (pure quartic): trivially one cut for all t")
        orient = 1.0
        if sum(c.real for c in others) < 0:
            orient = -1.0
            others = [-c for c in others]
        return QuarticField(others[0], others[1],
                            AffineNormalization(shift=zeta0, orient=orient))


# ----------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Classification:
    """Scenario of the family in t, with closed-form transition times
    where the quadruple-root algebra provides them."""

    scenario: str
    slope_sq: float
    boundary_slope_sq: float
    birth_time: float | None
    fusion_time: float | None

    def transition_count(self) -> int:
        return {ONE_CUT_FOREVER: 0, TYPE_III_BOUNDARY: 1, FULL_SEQUENCE: 3,
                REAL_CRITICAL_SEQUENCE: 2, SYMMETRIC_TWO_CUT: 1}[self.scenario]


def classify(qf: QuarticField) -> Classification:
    """Decide the scenario of the t-family for a normalized quartic field.

    Conjugate-pair fields are sorted by the squared slope against the
    universal threshold; real-critical fields by whether the two wells are
    equally deep.  Closed-form quadruple-root times are attached when the
    scenario has them.
    """
    s = critical_constants().boundary_slope_sq
    sl = qf.slope_sq()
    birth_time: float | None = None
    fusion_time: float | None = None

    if qf.is_real_case:
        a, b = qf.crit_a.real, qf.crit_b.real
        if abs(b - 2 * a) <= _COINCIDENCE_RTOL * b:
            scenario = SYMMETRIC_TWO_CUT
        else:
            scenario = REAL_CRITICAL_SEQUENCE
        for c in quadruple_points(qf):
            if c.kind == "fusion":
                fusion_time = c.merge_time
    elif math.isinf(sl) or sl > s * (1 + _COINCIDENCE_RTOL):
        scenario = ONE_CUT_FOREVER
    elif abs(sl - s) <= _COINCIDENCE_RTOL * s:
        scenario = TYPE_III_BOUNDARY
        cfgs = quadruple_points(qf)
        edge = [c for c in cfgs if c.kind == "boundary"]
        if edge:
            fusion_time = edge[0].merge_time
        elif cfgs:
            fusion_time = cfgs[0].merge_time
    else:
        scenario = FULL_SEQUENCE
        for c in quadruple_points(qf):
            if c.kind == "birth":
                birth_time = c.merge_time
            elif c.kind == "fusion":
                fusion_time = c.merge_time

    return Classification(scenario=scenario, slope_sq=sl,
                          boundary_slope_sq=s, birth_time=birth_time,
                          fusion_time=fusion_time)


# ----------------------------------------------------------------------
# quadruple-root configurations


@dataclass(frozen=True)
class QuadrupleConfig:
    """A mass value where the density polynomial acquires a quadruple real
    zero: R = (x - edge_lo)(x - edge_hi)(x - location)**4.

    kind is "fusion" when the quadruple zero sits inside the cut,
    "birth" when it sits outside, "boundary" when it hits an edge.
    """

    location: float
    edge_lo: float
    edge_hi: float
    merge_time: float
    kind: str

    def density_poly(self) -> RealPolynomial:
        return (RealPolynomial((-self.edge_lo, 1.0))
                * RealPolynomial((-self.edge_hi, 1.0))
                * RealPolynomial((-self.location, 1.0)) ** 4)


def quadruple_points(qf: QuarticField) -> list[QuadrupleConfig]:
    """Solve for all quadruple-root configurations of the field.

    The location satisfies a real cubic in the symmetric functions of the
    critical points; each real root is kept only when the edge formula
    has a nonnegative radicand.  Raises NoRealConfiguration when nothing
    survives (conjugate-pair fields above the slope threshold).
    """
    s1, s2 = qf.sigma1, qf.sigma2
    cubic = RealPolynomial((-s1 * s2, 2 * (s1 * s1 + 2 * s2), -10 * s1, 10.0))
    scale = max(1.0, abs(s1), math.sqrt(abs(s2)))
    # A double root of the cubic (coalescing configurations at the slope
    # boundary) splits under roundoff into a conjugate pair with imaginary
    # parts of order sqrt(eps).  Keep the real parts, polish each with a
    # guarded Newton step, and only then merge duplicates; polishing the
    # merged midpoint first would divide by a vanishing derivative.
    roots = [_polish_cubic_root(cubic, r.real) for r in all_roots(cubic)
             if abs(r.imag) <= 1e-6 * scale]
    roots = _dedupe(roots, 1e-7 * scale)

    out: list[QuadrupleConfig] = []
    for b in roots:
        rad = 4 * b * s1 - 2 * s2 - 6 * b * b
        if rad < -1e-10 * scale * scale:
            continue
        root = math.sqrt(max(rad, 0.0))
        lo = s1 - 2 * b - root
        hi = s1 - 2 * b + root
        two_t = s2 * s2 - b * b * (b * b + 4 * b * (lo + hi) + 6 * lo * hi)
        T = 0.5 * two_t
        if T <= 1e-12 * scale ** 4:
            continue
        edge_tol = 1e-7 * max(1.0, abs(hi - lo))
        if abs(b - hi) <= edge_tol or abs(b - lo) <= edge_tol:
            kind = "boundary"
        elif lo < b < hi:
            kind = "fusion"
        else:
            kind = "birth"
        out.append(QuadrupleConfig(location=b, edge_lo=lo, edge_hi=hi,
                                   merge_time=T, kind=kind))
    if not out:
        raise NoRealConfiguration(
            "no quadruple-root configuration with real edges exists "
            "(slope above the threshold)")
    out.sort(key=lambda c: c.merge_time)
    return out


def _dedupe(xs: list[float], tol: float) -> list[float]:
    xs = sorted(xs)
    out: list[float] = []
    for x in xs:
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _polish_cubic_root(cubic: RealPolynomial, x: float) -> float:
    d = cubic.derivative()
    for _ in range(4):
        fx = cubic(x)
        dx = d(x)
        if dx == 0:
            break
        xn = x - fx / dx
        if abs(cubic(xn)) >= abs(fx):
            break
        x = xn
    return float(x)


# ----------------------------------------------------------------------
# type III locus and the interior-merge family


def type3_locus(d0: float, d1: float, d2: float) -> float:
    """Residual of the locus polynomial for phi'(x) = x^3 + d2 x^2 + d1 x + d0.

    Vanishes exactly when the family develops a cube-root singularity at
    some mass; reduces to 128 d1^3 + 135 d0^2 for centered cubics.
    """
    return (128 * d1 ** 3 + 135 * d0 ** 2
            - d2 * (d2 * (2 * d2 ** 2 - 9 * d1) ** 2
                    + 2 * (16 * d1 ** 2 * d2 + 45 * d0 * d1 - 10 * d0 * d2 ** 2)))


@dataclass(frozen=True)
class InteriorMergeFamily:
    """One-parameter quartic family with a type II merge at an interior
    point b0 = 2 c1 of the limiting cut [-2, 2]."""

    c1: float
    field: ExternalField
    merge_location: float
    outer_edges: tuple[float, float]
    merge_time: float
    jump_formula_value: float

    def quadruple_poly(self) -> RealPolynomial:
        b = self.merge_location
        return (RealPolynomial((-4.0, 0.0, 1.0))
                * RealPolynomial((-b, 1.0)) ** 4)


def interior_merge_family(c1: float) -> InteriorMergeFamily:
    """Quartic field whose cuts merge at b0 = 2 c1 with outer edges ±2.

    The merge time follows from matching the x^2 coefficient of
    (x^2 - 4)(x - b0)^4 against the squared field derivative.  The
    reference jump expression -c1^2 / (16 (1 - c1^2)^2) is evaluated for
    comparison output; it is not used as an oracle.
    """
    if not -1.0 < c1 < 1.0:
        raise InconsistentConfiguration(f"merge parameter must be in (-1, 1), got {c1}")
    field = ExternalField(m=2, couplings=(8 * c1, 2 * c1 * c1 - 1.0, -4 * c1 / 3.0))
    b0 = 2 * c1
    quad = RealPolynomial((-4.0, 0.0, 1.0)) * RealPolynomial((-b0, 1.0)) ** 4
    diff = quad - field.phi_prime * field.phi_prime
    for k in range(3, 7):
        if abs(diff.coeff(k)) > 1e-9:
            raise InconsistentConfiguration(
                f"interior-merge construction failed coefficient match at degree {k}")
    T = -0.5 * diff.coeff(2)
    s1sq = 1.0 - c1 * c1
    return InteriorMergeFamily(
        c1=c1, field=field, merge_location=b0, outer_edges=(-2.0, 2.0),
        merge_time=T, jump_formula_value=-c1 * c1 / (16 * s1sq * s1sq))
