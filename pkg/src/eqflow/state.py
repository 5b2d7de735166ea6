"""Equilibrium states: refinement, evaluation, verification, serialization.

A state of mass t on p cuts is coordinatized by its 2p endpoints together
with the zeros of the double-zero factor B (real ones plus upper-half
conjugate pair representatives).  Refinement is a damped Newton iteration
on the square system

    * coefficients of A B**2 - (phi')**2 above degree 2m - 2 vanish,
    * the coefficient at degree 2m - 2 equals -2t,
    * the square-root branch of A B**2 integrates to zero over every gap,

which has exactly 2m + p - 1 scalar equations for the 2m + p - 1 real
coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (InconsistentConfiguration, NegativeRUnderRoot,
                     NewtonDiverged, SingularSystem, TopologyBroken)
from .fields import ExternalField
from .polynomials import RealPolynomial, poly_from_complex_roots
from .quadrature import (SupportConfig, adaptive_gl, cheb_u_integral,
                         cut_weight_integral, edge_integral, mass_integral,
                         period_residuals, robin_data, sqrt_A_complex)

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 7
FD_STEP = 1e-7

STATE_SCHEMA = "eqflow-state-v1"


class StateGuess(NamedTuple):
    """Raw coordinates handed to the refiner."""

    endpoints: tuple[float, ...]
    b_real: tuple[float, ...]
    b_pairs: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class StateResiduals:
    coeff: float
    period: float
    mass: float

    def as_dict(self) -> dict:
        return {"coeff": self.coeff, "period": self.period, "mass": self.mass}


@dataclass(frozen=True)
class EquilibriumState:
    """A refined equilibrium configuration with its derived constants."""

    field: ExternalField
    t: float
    cfg: SupportConfig
    b_real: tuple[float, ...]
    b_pairs: tuple[tuple[float, float], ...]
    B: RealPolynomial
    R: RealPolynomial
    c_t: float
    rho: float
    energy: float
    residuals: StateResiduals

    @property
    def endpoints(self) -> tuple[float, ...]:
        return self.cfg.endpoints

    @property
    def p(self) -> int:
        return self.cfg.p

    def guess(self) -> StateGuess:
        return StateGuess(self.endpoints, self.b_real, self.b_pairs)


# ----------------------------------------------------------------------
# coordinate packing


class _Topology(NamedTuple):
    p: int
    n_real: int
    n_pairs: int

    @property
    def size(self) -> int:
        return 2 * self.p + self.n_real + 2 * self.n_pairs


def _pack(g: StateGuess) -> tuple[np.ndarray, _Topology]:
    topo = _Topology(len(g.endpoints) // 2, len(g.b_real), len(g.b_pairs))
    x = np.concatenate([
        np.asarray(g.endpoints, dtype=float),
        np.asarray(g.b_real, dtype=float),
        np.asarray([v for pair in g.b_pairs for v in pair], dtype=float),
    ])
    return x, topo


def _unpack(x: np.ndarray, topo: _Topology) -> StateGuess:
    e = tuple(x[: 2 * topo.p])
    br = tuple(x[2 * topo.p: 2 * topo.p + topo.n_real])
    rest = x[2 * topo.p + topo.n_real:]
    pairs = tuple((rest[2 * i], rest[2 * i + 1]) for i in range(topo.n_pairs))
    return StateGuess(e, br, pairs)


def _topology_ok(x: np.ndarray, topo: _Topology) -> bool:
    if not np.all(np.isfinite(x)):
        return False
    e = x[: 2 * topo.p]
    if np.any(np.diff(e) <= 0.0):
        return False
    ims = x[2 * topo.p + topo.n_real + 1:: 2]
    return bool(np.all(ims > 0.0))


def _build_B(g: StateGuess) -> RealPolynomial:
    return poly_from_complex_roots(g.b_real, g.b_pairs)


# ----------------------------------------------------------------------
# the hodograph residual


def _residual(field: ExternalField, t: float, x: np.ndarray,
              topo: _Topology, scale: float) -> np.ndarray:
    g = _unpack(x, topo)
    cfg = SupportConfig(g.endpoints)
    B = _build_B(g)
    two_m = 2 * field.m
    D = cfg.A * B * B - field.phi_prime * field.phi_prime
    out = np.empty(topo.size)
    k = 0
    for deg in range(two_m - 1, 2 * two_m - 2):
        out[k] = D.coeff(deg) / scale
        k += 1
    out[k] = (D.coeff(two_m - 2) + 2.0 * t) / scale
    k += 1
    if topo.p > 1:
        per = period_residuals(cfg, B)
        for gidx, (u, v) in enumerate(cfg.gaps()):
            r = 0.5 * (v - u)
            out[k] = per[gidx] / (r * r + (1e-8 * cfg.spread) ** 2)
            k += 1
    return out


def _coefficient_scale(field: ExternalField) -> float:
    pp = field.phi_prime * field.phi_prime
    return max(1.0, max(abs(c) for c in pp.coeffs))


def hodograph_refine(field: ExternalField, t: float,
                     guess: StateGuess | EquilibriumState,
                     tol: float = NEWTON_TOL,
                     max_iter: int = NEWTON_MAX_ITER,
                     with_constants: bool = True) -> EquilibriumState:
    """Newton-refine a configuration at mass t and build the full state.

    Raises NewtonDiverged if damping cannot reduce the residual,
    TopologyBroken if every damped step violates endpoint ordering or pair
    positivity (the caller must change the cut topology), SingularSystem
    on a rank-deficient Jacobian.
    """
    if isinstance(guess, EquilibriumState):
        guess = guess.guess()
    count = 2 * field.m - len(guess.endpoints) // 2 - 1 - \
        (len(guess.b_real) + 2 * len(guess.b_pairs))
    if count != 0:
        raise InconsistentConfiguration(
            f"zero count mismatch: {len(guess.b_real)} real + "
            f"{len(guess.b_pairs)} pairs with p={len(guess.endpoints) // 2}, m={field.m}")

    scale = _coefficient_scale(field)
    x, topo = _pack(guess)
    if not _topology_ok(x, topo):
        raise TopologyBroken(f"invalid initial configuration {guess}")

    res = _residual(field, t, x, topo, scale)
    best = float(np.max(np.abs(res)))

    for _ in range(max_iter):
        if best < tol:
            break
        J = _jacobian(field, t, x, topo, scale, res)
        try:
            dx = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"hodograph Jacobian singular: {exc}") from exc
        lam = 1.0
        accepted = False
        saw_valid = False
        for _h in range(NEWTON_MAX_HALVINGS):
            xn = x + lam * dx
            if _topology_ok(xn, topo):
                saw_valid = True
                try:
                    rn = _residual(field, t, xn, topo, scale)
                except NegativeRUnderRoot:
                    rn = None
                if rn is not None:
                    bn = float(np.max(np.abs(rn)))
                    if bn < best or bn < tol:
                        x, res, best = xn, rn, bn
                        accepted = True
                        break
            lam *= 0.5
        if not accepted:
            if not saw_valid:
                raise TopologyBroken(
                    "every damped Newton step violates the cut topology")
            raise NewtonDiverged(
                f"stalled at residual {best:.3e} (tol {tol:.1e})")
    if best >= tol:
        raise NewtonDiverged(f"no convergence after {max_iter} iterations, "
                             f"residual {best:.3e}")

    g = _unpack(x, topo)
    return finalize_state(field, t, g, with_constants=with_constants)


def _jacobian(field: ExternalField, t: float, x: np.ndarray, topo: _Topology,
              scale: float, res0: np.ndarray) -> np.ndarray:
    n = topo.size
    J = np.empty((n, n))
    e = x[: 2 * topo.p]
    seps = np.full(n, np.inf)
    if len(e) > 1:
        d = np.diff(e)
        seps[: 2 * topo.p] = np.concatenate([[d[0]], np.minimum(d[:-1], d[1:]), [d[-1]]])
    ims = x[2 * topo.p + topo.n_real + 1:: 2]
    seps[2 * topo.p + topo.n_real + 1:: 2] = ims
    for i in range(n):
        h = FD_STEP * max(1.0, abs(x[i]))
        if np.isfinite(seps[i]):
            h = min(h, 0.05 * seps[i])
        h = max(h, 1e-13)
        xp = x.copy()
        xp[i] += h
        rp = _residual(field, t, xp, topo, scale)
        J[:, i] = (rp - res0) / h
    return J


# ----------------------------------------------------------------------
# assembling the full state


def finalize_state(field: ExternalField, t: float, g: StateGuess,
                   with_constants: bool = True) -> EquilibriumState:
    """Build an EquilibriumState from refined coordinates.

    Computes the residual norms and, unless told otherwise, the Robin
    constant, the equilibrium constant and the total energy.
    """
    cfg = SupportConfig(g.endpoints)
    B = _build_B(g)
    R = cfg.A * B * B
    scale = _coefficient_scale(field)
    two_m = 2 * field.m
    D = R - field.phi_prime * field.phi_prime
    coeff_res = max(abs(D.coeff(k)) for k in range(two_m - 1, 2 * two_m - 1)) / scale
    coeff_res = max(coeff_res, abs(D.coeff(two_m - 2) + 2 * t) / scale)
    per = period_residuals(cfg, B) if cfg.p > 1 else np.zeros(0)
    per_res = float(np.max(np.abs(per))) if per.size else 0.0

    if with_constants:
        mass_err = mass_integral(cfg, B) - t
        rho = robin_data(cfg).rho
        c_t = _equilibrium_constant(field, cfg, B)
        phi_mean = sum(
            cut_weight_integral(cfg, B, k, extra=lambda y: field.phi(y))
            for k in range(cfg.p))
        energy = t * c_t + phi_mean
    else:
        mass_err = float("nan")
        rho = float("nan")
        c_t = float("nan")
        energy = float("nan")

    return EquilibriumState(
        field=field, t=t, cfg=cfg,
        b_real=tuple(float(v) for v in g.b_real),
        b_pairs=tuple((float(a), float(b)) for a, b in g.b_pairs),
        B=B, R=R, c_t=c_t, rho=rho, energy=energy,
        residuals=StateResiduals(coeff=float(coeff_res), period=per_res,
                                 mass=float(mass_err)))


def _equilibrium_constant(field: ExternalField, cfg: SupportConfig,
                          B: RealPolynomial) -> float:
    """The constant value of the total potential on the support.

    Evaluated as W(Y) - integral of the square-root branch from the right
    edge to Y, which equals W at the right edge exactly and keeps every
    quadrature smooth (the logarithm is evaluated strictly away from the
    support).
    """
    e = cfg.endpoints
    Y = e[-1] + max(1.0, cfg.spread)
    pot = -sum(
        cut_weight_integral(cfg, B, k, extra=lambda y: np.log(Y - y))
        for k in range(cfg.p))
    w_far = pot + field.phi(Y)
    edge_idx = len(e) - 1

    def f(y):
        rest = cfg.excluded_product(y, (edge_idx,))
        return np.sqrt(np.abs(rest)) * B(y)

    return w_far - edge_integral(f, e[-1], Y, kind="sqrt")


# ----------------------------------------------------------------------
# pointwise evaluation


def density_at(state: EquilibriumState, x) -> np.ndarray:
    """Equilibrium density sqrt(max(-R, 0)) / pi; zero off the support."""
    x = np.asarray(x, dtype=float)
    on = np.zeros(x.shape, dtype=bool)
    for u, v in state.cfg.cuts():
        on |= (x >= u) & (x <= v)
    val = np.sqrt(np.maximum(-state.R(x), 0.0)) / math.pi
    return np.where(on, val, 0.0)


def cauchy_at(state: EquilibriumState, z) -> np.ndarray:
    """Cauchy transform of the measure at complex z off the support.

    The square-root branch of R is cut exactly along the support and
    positive to the right; the subtraction against phi' is rationalized
    whenever the two nearly cancel, so the decay -t/z at infinity is
    computed without loss.
    """
    z = np.asarray(z, dtype=complex)
    w = sqrt_A_complex(state.cfg, z) * state.B(z)
    pp = state.field.phi_prime(z)
    # True degree of R - (phi')**2 is at most 2m - 2; anything above is
    # coordinate roundoff and would be amplified by z**(2m-1) at large z.
    full = state.R - state.field.phi_prime * state.field.phi_prime
    D = RealPolynomial(full.coeffs[: 2 * state.field.m - 1])
    same_side = (w * np.conj(pp)).real > 0.0
    denom = np.where(same_side, w + pp, 1.0)
    rationalized = D(z) / denom
    direct = w - pp
    out = np.where(same_side, rationalized, direct)
    if out.shape == ():
        return out[()]
    return out


def effective_potential(state: EquilibriumState, x: float) -> float:
    """W(x) - c_t for real x: zero on the support, the signed saturation
    margin elsewhere (nonnegative exactly when the state is a true
    equilibrium)."""
    cfg = state.cfg
    region, k = cfg.locate(x)
    if region == "cut":
        return 0.0
    e = cfg.endpoints
    if region == "right":
        edge, sigma = e[-1], 1.0
    elif region == "left":
        edge, sigma = e[0], -cfg.branch_sign(x)
    else:
        u, v = cfg.gaps()[k]
        edge, sigma = u, cfg.branch_sign(x)
    idx = e.index(edge)

    def f(y):
        rest = cfg.excluded_product(y, (idx,))
        return np.sqrt(np.abs(rest)) * state.B(y)

    return sigma * edge_integral(f, edge, x, kind="sqrt")


def potential_at(state: EquilibriumState, x: float) -> float:
    """Logarithmic potential of the measure by direct quadrature.

    Independent of the branch bookkeeping above (used for verification):
    each cut is integrated in the arcsine variable with the logarithmic
    point flagged to the adaptive rule when x lies inside.
    """
    from scipy.integrate import quad

    total = 0.0
    for k, (u, v) in enumerate(state.cfg.cuts()):
        m = 0.5 * (u + v)
        r = 0.5 * (v - u)
        exclude = (2 * k, 2 * k + 1)

        def g(theta):
            y = m + r * math.sin(theta)
            rest = state.cfg.excluded_product(np.asarray(y), exclude)
            dens = r * r * math.cos(theta) ** 2 * math.sqrt(max(float(rest), 0.0)) \
                * abs(float(state.B(y))) / math.pi
            return dens * math.log(abs(x - y)) if x != y else 0.0

        pts = None
        if u < x < v:
            pts = [math.asin(min(1.0, max(-1.0, (x - m) / r)))]
        val, _err = quad(g, -0.5 * math.pi, 0.5 * math.pi, points=pts,
                         limit=300, epsabs=1e-12, epsrel=1e-12)
        total += val
    return -total


@dataclass(frozen=True)
class EquilibriumReport:
    """Outcome of the independent variational check."""

    min_margin: float
    argmin_margin: float
    max_support_deviation: float
    min_density: float
    n_grid: int

    def ok(self, margin_tol: float = 1e-9, support_tol: float = 1e-6) -> bool:
        return (self.min_margin >= -margin_tol
                and self.max_support_deviation <= support_tol
                and self.min_density >= -margin_tol)


def verify_equilibrium(state: EquilibriumState, n_grid: int = 40,
                       n_support: int = 5) -> EquilibriumReport:
    """Check the variational characterization on a real grid.

    Margins W - c_t off the support (from the signed square-root branch),
    the constancy of W on each cut (direct potential quadrature), and
    density nonnegativity.
    """
    cfg = state.cfg
    e = cfg.endpoints
    L = max(1.0, 0.75 * cfg.spread)
    xs: list[float] = []
    xs.extend(np.linspace(e[0] - L, e[0], n_grid, endpoint=False))
    for u, v in cfg.gaps():
        pad = 1e-3 * (v - u)
        xs.extend(np.linspace(u + pad, v - pad, n_grid))
    xs.extend(np.linspace(e[-1] + L / n_grid, e[-1] + L, n_grid))

    margins = np.array([effective_potential(state, float(x)) for x in xs])
    imin = int(np.argmin(margins))

    dev = 0.0
    for u, v in cfg.cuts():
        for x in np.linspace(u + 0.1 * (v - u), v - 0.1 * (v - u), n_support):
            w = potential_at(state, float(x)) + state.field.phi(float(x))
            dev = max(dev, abs(w - state.c_t))

    dens_min = 0.0
    for u, v in cfg.cuts():
        grid = np.linspace(u, v, 4 * n_grid)
        dens_min = min(dens_min, float(np.min(-state.R(grid))))

    return EquilibriumReport(
        min_margin=float(np.min(margins)), argmin_margin=float(xs[imin]),
        max_support_deviation=float(dev), min_density=dens_min,
        n_grid=len(xs))


# ----------------------------------------------------------------------
# serialization


def state_to_json(state: EquilibriumState) -> str:
    doc = {
        "schema": STATE_SCHEMA,
        "t": state.t,
        "endpoints": list(state.endpoints),
        "b_real": list(state.b_real),
        "b_pairs": [list(p) for p in state.b_pairs],
        "c_t": state.c_t,
        "rho": state.rho,
        "energy": state.energy,
        "residuals": state.residuals.as_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def state_from_json(field: ExternalField, text: str) -> EquilibriumState:
    doc = json.loads(text)
    if doc.get("schema") != STATE_SCHEMA:
        raise InconsistentConfiguration(
            f"unknown state schema {doc.get('schema')!r}")
    g = StateGuess(tuple(doc["endpoints"]), tuple(doc["b_real"]),
                   tuple(tuple(p) for p in doc["b_pairs"]))
    cfg = SupportConfig(g.endpoints)
    B = _build_B(g)
    res = doc.get("residuals", {})
    return EquilibriumState(
        field=field, t=float(doc["t"]), cfg=cfg,
        b_real=g.b_real, b_pairs=g.b_pairs, B=B, R=cfg.A * B * B,
        c_t=float(doc["c_t"]), rho=float(doc["rho"]),
        energy=float(doc["energy"]),
        residuals=StateResiduals(coeff=float(res.get("coeff", float("nan"))),
                                 period=float(res.get("period", float("nan"))),
                                 mass=float(res.get("mass", float("nan")))))
