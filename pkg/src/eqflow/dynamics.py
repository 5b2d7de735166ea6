"""Evolution of equilibrium states in the mass parameter.

The endpoints and the zeros of the double-zero factor obey an ODE system
driven by the monic numerator of the Robin density.  An embedded
Runge-Kutta pair integrates those coordinates, a Newton re-anchor kills
drift every few steps, and four event monitors watch for the ways the
configuration can change:

  * BirthOfCut: the saturation margin at an exterior zero reaches zero,
  * Fusion: a gap collapses and two cuts merge,
  * TypeIII: a conjugate pair of zeros lands on a cut endpoint,
  * ExtremaBirth: a conjugate pair lands on the real axis off the support.

Coordinate collisions make the raw ODE right side blow up, so near each
of the last three events the integrator hands over to an asymptotic
clock: walk the mass geometrically toward the predicted critical value,
extrapolate it from the local power law, and reseed the new topology one
asymptotic term past the transition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import (EventResolutionFailed, InconsistentConfiguration,
                     NearSingular, NegativeDensity, NegativeRUnderRoot,
                     NewtonDiverged, SeedFailed, SingularSystem,
                     StepUnderflow, TopologyBroken)
from .fields import ExternalField
from .polynomials import all_roots, poly_from_complex_roots, RealPolynomial, \
    split_real_pairs
from .quadrature import SupportConfig, edge_integral, robin_data, \
    solve_h_family
from .state import (EquilibriumState, StateGuess, _pack, _topology_ok,
                    _unpack, effective_potential, finalize_state,
                    hodograph_refine)

BIRTH_OF_CUT = "BirthOfCut"
FUSION = "Fusion"
TYPE_III = "TypeIII"
EXTREMA_BIRTH = "ExtremaBirth"

_STEP_FAILURES = (NegativeRUnderRoot, NegativeDensity, TopologyBroken,
                  SingularSystem)


@dataclass(frozen=True)
class TransitionEvent:
    """A critical mass where the support or the zero pattern changes."""

    kind: str
    time: float
    location: float
    local_constants: dict

    def as_dict(self) -> dict:
        return {"kind": self.kind, "T": self.time, "location": self.location,
                "constants": dict(self.local_constants)}


@dataclass(frozen=True)
class EvolveOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    refine_every: int = 5
    guard_fraction: float = 1e-6
    arm_fraction: float = 5e-3
    event_t_tol: float = 1e-10
    approach_stop_fraction: float = 1e-5
    post_event_dt: tuple[float, ...] = (1e-5, 1e-4, 1e-3)
    max_steps: int = 50000
    max_events: int = 8


@dataclass
class Trajectory:
    field: ExternalField
    states: list[EquilibriumState]
    events: list[TransitionEvent]
    t_range: tuple[float, float]
    diagnostics: list[dict] = dc_field(default_factory=list)

    def state_at_or_before(self, t: float) -> EquilibriumState:
        best = None
        for s in self.states:
            if s.t <= t * (1 + 1e-14) and (best is None or s.t > best.t):
                best = s
        if best is None:
            raise EventResolutionFailed(f"no stored state at or before t={t}")
        return best

    def state_at_or_after(self, t: float) -> EquilibriumState:
        best = None
        for s in self.states:
            if s.t >= t * (1 - 1e-14) and (best is None or s.t < best.t):
                best = s
        if best is None:
            raise EventResolutionFailed(f"no stored state at or after t={t}")
        return best


# ----------------------------------------------------------------------
# seeding


def _classified_minima(fieldspec: ExternalField) -> tuple[list[float], bool]:
    """Real minimizers of the field, deduplicated, with a flat-well flag."""
    pp = fieldspec.phi_prime
    roots = [c.real for c in all_roots(pp)
             if abs(c.imag) <= 1e-9 * (1 + abs(c))]
    if not roots:
        return [], False
    scale = max(1.0, max(abs(c) for c in roots))
    roots.sort()
    merged: list[float] = []
    for c in roots:
        if merged and abs(c - merged[-1]) <= 1e-7 * scale:
            continue
        merged.append(c)
    d2 = pp.derivative()
    d3 = d2.derivative()
    d4 = d3.derivative()
    minima: list[float] = []
    flat = False
    curv_tol = 1e-9 * max(1.0, scale)
    for c in merged:
        curv = d2(c)
        if curv > curv_tol:
            minima.append(c)
        elif abs(curv) <= curv_tol and abs(d3(c)) <= 1e-6 * max(1.0, scale) \
                and d4(c) > 0.0:
            minima.append(c)
            flat = True
        # a root with small curvature and d3 != 0 is an inflection, not a well
    return minima, flat


def seed_small_t(fieldspec: ExternalField, t0: float) -> EquilibriumState:
    """Equilibrium state at small mass from the local-well asymptotics.

    One cut per global minimizer of the field, each a local semicircle
    around its well; the double-zero factor starts from the field
    derivative with the well roots divided out.  A flat (quartic-order)
    well takes the quarter-power closed form instead.
    """
    if t0 <= 0:
        raise SeedFailed(f"seed mass must be positive, got {t0}")
    minima, flat = _classified_minima(fieldspec)
    if not minima:
        raise SeedFailed("field has no real minimizer")
    depths = [fieldspec.phi(c) for c in minima]
    dmin = min(depths)
    keep = [c for c, d in zip(minima, depths)
            if d - dmin <= 1e-12 * max(1.0, abs(dmin))]
    share = t0 / len(keep)
    d2 = fieldspec.phi_prime.derivative()

    if flat:
        if len(keep) > 1:
            raise SeedFailed("flat well must be the unique global minimizer")
        zeta = keep[0]
        r = (8.0 * share / 3.0) ** 0.25
        guess = StateGuess((zeta - r, zeta + r), (),
                           ((zeta, r / math.sqrt(2.0)),))
    else:
        endpoints: list[float] = []
        for zeta in keep:
            r = math.sqrt(2.0 * share / d2(zeta))
            endpoints.extend([zeta - r, zeta + r])
        endpoints.sort()
        rest = fieldspec.phi_prime
        for zeta in keep:
            rest = rest.deflate(zeta)
        b_real, b_pairs = split_real_pairs(all_roots(rest))
        guess = StateGuess(tuple(endpoints), tuple(b_real), tuple(b_pairs))

    try:
        return hodograph_refine(fieldspec, t0, guess)
    except (NewtonDiverged, TopologyBroken, NegativeRUnderRoot,
            NegativeDensity, SingularSystem, InconsistentConfiguration) as exc:
        raise SeedFailed(
            f"small-mass seed did not refine at t={t0}: {exc}") from exc


# ----------------------------------------------------------------------
# derivatives


@dataclass(frozen=True)
class CoordinateDerivatives:
    """d/dt of endpoints, real zeros and conjugate pairs."""

    endpoints: tuple[float, ...]
    b_real: tuple[float, ...]
    b_pairs: tuple[tuple[float, float], ...]

    def pack(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.endpoints, dtype=float),
            np.asarray(self.b_real, dtype=float),
            np.asarray([v for p in self.b_pairs for v in p], dtype=float)])


def _collision_distance(g: StateGuess, cfg: SupportConfig) -> float:
    """Smallest distance among coordinates that collide at an event."""
    dmin = math.inf
    for u, v in cfg.gaps():
        dmin = min(dmin, v - u)
    for re, im in g.b_pairs:
        dmin = min(dmin, im)
        for a in cfg.endpoints:
            dmin = min(dmin, math.hypot(re - a, im))
    for b in g.b_real:
        for a in cfg.endpoints:
            dmin = min(dmin, abs(b - a))
    return dmin


def _monic_numerator(cfg: SupportConfig) -> RealPolynomial:
    return solve_h_family(cfg, 0).h_monic


def _derivatives_of(fieldspec: ExternalField, g: StateGuess,
                    guard_fraction: float) -> CoordinateDerivatives:
    cfg = SupportConfig(g.endpoints)
    guard = guard_fraction * cfg.spread
    dist = _collision_distance(g, cfg)
    if dist < guard:
        raise NearSingular(
            f"coordinate distance {dist:.3e} below guard {guard:.3e}",
            distance=dist)
    B = poly_from_complex_roots(g.b_real, g.b_pairs)
    h = _monic_numerator(cfg)
    Ad = cfg.A.derivative()
    Bd = B.derivative()
    de = tuple(2.0 * h(a) / (Ad(a) * B(a)) for a in g.endpoints)
    dr = tuple(h(b) / (cfg.A(b) * Bd(b)) for b in g.b_real)
    dp = []
    for re, im in g.b_pairs:
        z = complex(re, im)
        dz = h(z) / (cfg.A(z) * Bd(z))
        dp.append((dz.real, dz.imag))
    return CoordinateDerivatives(de, dr, tuple(dp))


def time_derivatives(state: EquilibriumState,
                     guard_fraction: float = 1e-6) -> CoordinateDerivatives:
    """d/dt of every coordinate at the current mass.

    Endpoints move at twice the ratio of the Robin numerator to the
    product of the edge-polynomial derivative and the double-zero factor;
    zeros of the latter move by the analogous simple-zero formula, with
    conjugate pairs evaluated off the axis.  Raises NearSingular when
    coordinates are within the guard distance of a collision.
    """
    return _derivatives_of(state.field, state.guess(), guard_fraction)


@dataclass(frozen=True)
class CouplingDerivatives:
    j: int
    endpoints: tuple[float, ...]
    b_real: tuple[float, ...]
    b_pairs: tuple[tuple[float, float], ...]


def coupling_derivatives(state: EquilibriumState, j: int,
                         guard_fraction: float = 1e-6) -> CouplingDerivatives:
    """Derivatives of the coordinates in the j-th coupling constant.

    j = 0 differentiates in the mass and reproduces time_derivatives
    exactly; 1 <= j <= 2m - 1 differentiates in the coefficient of x**j
    of the field.
    """
    if not 0 <= j <= 2 * state.field.m - 1:
        raise ValueError(f"coupling index out of range: {j}")
    g = state.guess()
    cfg = state.cfg
    dist = _collision_distance(g, cfg)
    if dist < guard_fraction * cfg.spread:
        raise NearSingular(f"coordinate distance {dist:.3e} below guard",
                           distance=dist)
    hj = solve_h_family(cfg, j)[j]
    # the j = 0 member carries leading coefficient -1, so this uniform
    # formula reproduces the time derivative without a special case
    Ad = cfg.A.derivative()
    Bd = state.B.derivative()
    de = tuple(-2.0 * hj(a) / (Ad(a) * state.B(a)) for a in g.endpoints)
    dr = tuple(-hj(b) / (cfg.A(b) * Bd(b)) for b in g.b_real)
    dp = []
    for re, im in g.b_pairs:
        z = complex(re, im)
        dz = -hj(z) / (cfg.A(z) * Bd(z))
        dp.append((dz.real, dz.imag))
    return CouplingDerivatives(j, de, dr, tuple(dp))


def hydrodynamic_residual(state: EquilibriumState, i: int, j: int) -> float:
    """Cross-symmetry defect max_k |h_i(a_k) d_j a_k - h_j(a_k) d_i a_k|."""
    fam = solve_h_family(state.cfg, max(i, j))
    di = coupling_derivatives(state, i)
    dj = coupling_derivatives(state, j)
    hi, hj = fam[i], fam[j]
    worst = 0.0
    for k, a in enumerate(state.endpoints):
        worst = max(worst,
                    abs(hi(a) * dj.endpoints[k] - hj(a) * di.endpoints[k]))
    return worst


# ----------------------------------------------------------------------
# the embedded Runge-Kutta pair (Dormand-Prince 5(4))

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


class _RHS:
    def __init__(self, fieldspec: ExternalField, topo, guard_fraction: float):
        self.fieldspec = fieldspec
        self.topo = topo
        self.guard_fraction = guard_fraction

    def __call__(self, y: np.ndarray) -> np.ndarray:
        g = _unpack(y, self.topo)
        return _derivatives_of(self.fieldspec, g, self.guard_fraction).pack()


def _dp54_step(rhs: _RHS, y: np.ndarray, dt: float, k1: np.ndarray | None):
    """One trial step: returns (y5, y4, first stage, FSAL stage)."""
    ks = [k1 if k1 is not None else rhs(y)]
    for i in range(1, 6):
        yi = y + dt * sum(a * k for a, k in zip(_DP_A[i], ks))
        ks.append(rhs(yi))
    y5 = y + dt * sum(b * k for b, k in zip(_DP_B5, ks))
    k7 = rhs(y5)
    y4 = y + dt * (sum(b * k for b, k in zip(_DP_B4[:6], ks)) + _DP_B4[6] * k7)
    return y5, y4, ks[0], k7


# ----------------------------------------------------------------------
# event monitors


@dataclass
class _Snapshot:
    t: float
    guess: StateGuess
    margins: dict[int, float]                 # b_real index -> margin
    gap_widths: tuple[float, ...]
    pair_ims: tuple[float, ...]
    pair_edge: tuple[tuple[float, int], ...]  # (distance, endpoint index)


def _exterior_margins(fieldspec: ExternalField, t: float,
                      g: StateGuess) -> dict[int, float]:
    st = finalize_state(fieldspec, t, g, with_constants=False)
    out = {}
    for i, b in enumerate(g.b_real):
        region, _k = st.cfg.locate(b)
        if region != "cut":
            out[i] = effective_potential(st, b)
    return out


def _snapshot(fieldspec: ExternalField, t: float, g: StateGuess) -> _Snapshot:
    cfg = SupportConfig(g.endpoints)
    gaps = tuple(v - u for u, v in cfg.gaps())
    ims = tuple(im for _re, im in g.b_pairs)
    pe = []
    for re, im in g.b_pairs:
        dists = [math.hypot(re - a, im) for a in cfg.endpoints]
        k = int(np.argmin(dists))
        pe.append((dists[k], k))
    return _Snapshot(t=t, guess=g,
                     margins=_exterior_margins(fieldspec, t, g),
                     gap_widths=gaps, pair_ims=ims, pair_edge=tuple(pe))


def _armed_kind(prev: _Snapshot, now: _Snapshot, opts: EvolveOptions):
    """An imminent collision: below the arm threshold and still shrinking.

    The shrink requirement keeps freshly reseeded post-event states, which
    start close to the collision but move away from it, from re-arming.
    A landing pair close to an endpoint is an edge impact, not a landing
    on open axis, so the landing arm requires clearance from every edge:
    on the impact line the imaginary part is half the edge distance and
    would otherwise always arm first.
    """
    arm = opts.arm_fraction * SupportConfig(now.guess.endpoints).spread
    if len(prev.gap_widths) == len(now.gap_widths):
        for gi, w in enumerate(now.gap_widths):
            if w < arm and w < prev.gap_widths[gi]:
                return (FUSION, gi)
    if len(prev.pair_edge) == len(now.pair_edge):
        for pi, (d, ei) in enumerate(now.pair_edge):
            if d < arm and d < prev.pair_edge[pi][0]:
                return (TYPE_III, pi, ei)
        for pi, im in enumerate(now.pair_ims):
            if im < arm and im < prev.pair_ims[pi] and \
                    now.pair_edge[pi][0] >= 10.0 * arm:
                return (EXTREMA_BIRTH, pi)
    return None


def _armed_static(snap: _Snapshot, opts: EvolveOptions):
    """Arming without direction data, for sub-guard emergencies."""
    arm = opts.arm_fraction * SupportConfig(snap.guess.endpoints).spread
    for gi, w in enumerate(snap.gap_widths):
        if w < arm:
            return (FUSION, gi)
    for pi, (d, ei) in enumerate(snap.pair_edge):
        if d < arm:
            return (TYPE_III, pi, ei)
    for pi, im in enumerate(snap.pair_ims):
        if im < arm and snap.pair_edge[pi][0] >= 10.0 * arm:
            return (EXTREMA_BIRTH, pi)
    _reject_cubic_contact(snap, arm)
    return None


def _reject_cubic_contact(snap: _Snapshot, arm: float) -> None:
    """Fail loudly when a real double zero is about to hit an endpoint.

    A simple zero of the double-zero factor colliding with a support
    endpoint produces a cubic contact of the density polynomial.  That
    configuration sits outside the four handled transitions, so name it
    instead of letting the step control starve.
    """
    for b in snap.guess.b_real:
        for a in snap.guess.endpoints:
            if abs(b - a) < arm:
                raise EventResolutionFailed(
                    f"real double zero at {b:.8g} is colliding with the "
                    f"endpoint at {a:.8g} near t={snap.t:.8g}: cubic edge "
                    "contact is not one of the handled transition kinds")


def _birth_crossing(prev: _Snapshot, now: _Snapshot) -> int | None:
    for i, m_now in now.margins.items():
        m_prev = prev.margins.get(i)
        if m_prev is not None and m_prev > 0.0 >= m_now:
            return i
    return None


# ----------------------------------------------------------------------
# event clocks and handoffs


def _merged_rate(g: StateGuess, gap_index: int):
    """Slope k of (gap half-width)^2 ~ k (T - t) for a closing gap.

    Built from the merged configuration: the two colliding endpoints are
    dropped, the trapped zero is deflated out of the double-zero factor,
    and the post-merge ratio -2 h(b) / (A(b) B_rest(b)) is evaluated at
    the trapped zero.
    """
    e = g.endpoints
    lo, hi = e[2 * gap_index + 1], e[2 * gap_index + 2]
    merged = e[: 2 * gap_index + 1] + e[2 * gap_index + 3:]
    trapped = [b for b in g.b_real if lo < b < hi]
    if len(trapped) != 1:
        raise EventResolutionFailed(
            f"closing gap ({lo:.6g}, {hi:.6g}) holds {len(trapped)} zeros; "
            "expected exactly one")
    b0 = trapped[0]
    cfg_m = SupportConfig(merged)
    B_rest = poly_from_complex_roots(
        tuple(b for b in g.b_real if b != b0), g.b_pairs)
    h_m = _monic_numerator(cfg_m)
    k = -2.0 * h_m(b0) / (cfg_m.A(b0) * B_rest(b0))
    return k, b0


# Constants of the edge-impact cube-root law.  With d0 the local rate
# (|A'(a) B_rest(a) / h(a)| at the impacted edge) the self-similar
# solution of the motion laws gives, in terms of s = Re b - a_edge(t),
#
#     (Im b)^2 = s^2 / 5,      d(s^3)/dt = -25 / (4 d0),
#
# so |b - a_edge| = sqrt(6/5) |s| and T - t = d0 |b - a_edge|^3 / K with
# K = (25/4) (6/5)^{3/2} = 3 sqrt(7.5).  The edge itself moves by
# -(4/5) s, and past T the pair re-enters the complex plane with its
# real part a fifth of the way inside.
_CUBE_CLOCK = 3.0 * math.sqrt(7.5)


def _cube_rate(g: StateGuess, pair_index: int, edge_index: int) -> float:
    """Rate d0 = |A'(a) B_rest(a) / h(a)| of the cube-root edge clock."""
    a = g.endpoints[edge_index]
    cfg = SupportConfig(g.endpoints)
    A_rest = poly_from_complex_roots(
        tuple(x for i, x in enumerate(g.endpoints) if i != edge_index), ())
    B_rest = poly_from_complex_roots(
        g.b_real,
        tuple(p for i, p in enumerate(g.b_pairs) if i != pair_index))
    h = _monic_numerator(cfg)
    return abs(A_rest(a) * B_rest(a) / h(a))


def _landing_rate(g: StateGuess, pair_index: int):
    """Splitting rate h(b0) / (A(b0) B_rest(b0)) for a pair landing on
    the axis at its current real part."""
    cfg = SupportConfig(g.endpoints)
    re, _im = g.b_pairs[pair_index]
    B_rest = poly_from_complex_roots(
        g.b_real,
        tuple(p for i, p in enumerate(g.b_pairs) if i != pair_index))
    h = _monic_numerator(cfg)
    return h(re) / (cfg.A(re) * B_rest(re)), re


class _EventBuilder:
    """Geometric approach to a critical mass plus post-event reseeding."""

    def __init__(self, fieldspec: ExternalField, opts: EvolveOptions,
                 t_end: float):
        self.fieldspec = fieldspec
        self.opts = opts
        self.t_end = t_end

    def refine(self, t: float, guess: StateGuess,
               with_constants: bool = False) -> EquilibriumState:
        return hodograph_refine(self.fieldspec, t, guess,
                                with_constants=with_constants)

    def approach(self, state: EquilibriumState,
                 clock: Callable[[EquilibriumState], tuple[float, float]],
                 stop_dist: float, predict=None):
        """Walk the mass toward the critical value predicted by `clock`.

        clock(state) -> (collision distance, predicted critical mass).
        Returns (last state, T) once the distance drops below stop_dist,
        or (state at t_end, None) when the prediction leaves the range.
        `predict(state, t_next, T_hat)` may supply a scaled warm start;
        without one the previous coordinates seed the refinement, which
        stalls once the local Jacobian degenerates, so a plateau within
        reach of stop_dist is accepted as converged.
        """
        st = state
        prev_dist = None
        for _ in range(200):
            dist, T_hat = clock(st)
            if dist <= stop_dist:
                return st, T_hat
            if prev_dist is not None and dist > 0.95 * prev_dist:
                if dist <= 100.0 * stop_dist:
                    return st, T_hat
                raise EventResolutionFailed(
                    f"approach stalled at distance {dist:.3e} (t={st.t})")
            prev_dist = dist
            if T_hat > self.t_end + 0.05 * max(1.0, self.t_end):
                if st.t >= self.t_end * (1 - 1e-14):
                    return st, None
                t_next = self.t_end
            else:
                t_next = min(st.t + 0.75 * (T_hat - st.t), self.t_end)
            if t_next <= st.t:
                raise EventResolutionFailed(f"event clock stalled at t={st.t}")
            step = t_next - st.t
            for _half in range(10):
                try:
                    g = predict(st, st.t + step, T_hat) if predict \
                        else st.guess()
                    st = self.refine(st.t + step, g)
                    break
                except (NewtonDiverged, TopologyBroken, NegativeRUnderRoot,
                        SingularSystem):
                    step *= 0.35
            else:
                raise EventResolutionFailed(
                    f"cannot refine inside the approach window at t={st.t}")
        raise EventResolutionFailed("approach loop did not converge")

    def reseed(self, T: float, guess_of_dt: Callable[[float], StateGuess]):
        """Try the post-event mass ladder; the first refinable guess wins."""
        scale = max(1.0, abs(T))
        last = None
        for frac in self.opts.post_event_dt:
            dt = frac * scale
            try:
                return hodograph_refine(self.fieldspec, T + dt,
                                        guess_of_dt(dt), with_constants=True)
            except (NewtonDiverged, TopologyBroken, NegativeRUnderRoot,
                    NegativeDensity, SingularSystem,
                    InconsistentConfiguration) as exc:
                last = exc
        raise EventResolutionFailed(
            f"no consistent topology reachable after the event at T={T}: "
            f"{last}")


# ----------------------------------------------------------------------
# evolve


def evolve(fieldspec: ExternalField, t_start: float, t_end: float,
           opts: EvolveOptions | None = None) -> Trajectory:
    """Integrate the family from t_start to t_end with event handling.

    States are recorded with their constants at every Newton re-anchor,
    on both sides of every event, and at the ends of the range.  The
    integration is deterministic: identical inputs give identical output.
    """
    opts = opts or EvolveOptions()
    if t_start <= 0:
        raise ValueError("t_start must be positive")
    if t_end <= t_start:
        raise ValueError("t_end must exceed t_start")

    state = _initial_state(fieldspec, t_start, opts)
    traj = Trajectory(field=fieldspec, states=[], events=[],
                      t_range=(t_start, t_end))
    _record(traj, state)
    builder = _EventBuilder(fieldspec, opts, t_end)

    y, topo = _pack(state.guess())
    rhs = _RHS(fieldspec, topo, opts.guard_fraction)
    t = state.t
    dt = min(0.01 * max(t, 1e-3), 0.25 * (t_end - t))
    snap = _snapshot(fieldspec, t, state.guess())
    k1 = None
    since_anchor = 0
    n_steps = 0
    near_singular_rejects = 0

    while t < t_end * (1 - 1e-14):
        if n_steps >= opts.max_steps:
            raise StepUnderflow(f"step budget exhausted at t={t}")
        n_steps += 1
        dt = min(dt, t_end - t)
        if dt < 1e-13 * max(1.0, t):
            if near_singular_rejects:
                raise EventResolutionFailed(
                    f"unclassified near-singular approach at t={t}")
            raise StepUnderflow(f"step size underflow at t={t}")

        try:
            y5, y4, k_first, k7 = _dp54_step(rhs, y, dt, k1)
            k1 = k_first
        except NearSingular:
            armed = _armed_static(snap, opts)
            if armed is not None:
                base = builder.refine(snap.t, snap.guess, with_constants=True)
                state, ev = _handle_armed(builder, traj, armed, base, opts)
                if ev is None:
                    return traj
                y, topo, rhs, t, dt, snap = _restart(fieldspec, state, opts,
                                                     t_end)
                k1, since_anchor, near_singular_rejects = None, 0, 0
                continue
            near_singular_rejects += 1
            dt *= 0.25
            continue
        except _STEP_FAILURES:
            dt *= 0.5
            continue

        sc = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(((y5 - y4) / sc) ** 2)))
        if not np.isfinite(err) or err > 1.0:
            dt *= max(0.2, 0.9 * err ** -0.2) if np.isfinite(err) else 0.2
            continue
        if not _topology_ok(y5, topo):
            dt *= 0.5
            continue

        t_new = t + dt
        g_new = _unpack(y5, topo)
        try:
            snap_new = _snapshot(fieldspec, t_new, g_new)
        except _STEP_FAILURES:
            dt *= 0.5
            continue
        near_singular_rejects = 0

        armed = _armed_kind(snap, snap_new, opts)
        if armed is not None:
            base = builder.refine(snap_new.t, snap_new.guess,
                                  with_constants=True)
            state, ev = _handle_armed(builder, traj, armed, base, opts)
            if ev is None:
                return traj
            y, topo, rhs, t, dt, snap = _restart(fieldspec, state, opts, t_end)
            k1, since_anchor = None, 0
            continue

        crossing = _birth_crossing(snap, snap_new)
        if crossing is not None:
            state = _handle_birth(builder, traj, snap, snap_new, crossing,
                                  opts)
            y, topo, rhs, t, dt, snap = _restart(fieldspec, state, opts, t_end)
            k1, since_anchor = None, 0
            continue

        t, y, k1 = t_new, y5, k7
        snap = snap_new
        since_anchor += 1
        dt *= min(5.0, max(0.2, 0.9 * err ** -0.2)) if err > 0 else 5.0

        if since_anchor >= opts.refine_every or t >= t_end * (1 - 1e-14):
            refined = hodograph_refine(fieldspec, t, _unpack(y, topo),
                                       with_constants=True)
            y_ref, _ = _pack(refined.guess())
            drift = float(np.max(np.abs(y_ref - y)))
            traj.diagnostics.append({
                "t": t, "dt": dt, "drift": drift,
                "residuals": refined.residuals.as_dict()})
            y = y_ref
            k1 = None
            _record(traj, refined)
            snap = _snapshot(fieldspec, t, refined.guess())
            since_anchor = 0

    return traj


def _initial_state(fieldspec: ExternalField, t_start: float,
                   opts: EvolveOptions) -> EquilibriumState:
    try:
        return seed_small_t(fieldspec, t_start)
    except SeedFailed:
        pass
    t0 = t_start
    for _ in range(10):
        t0 /= 4.0
        try:
            st = seed_small_t(fieldspec, t0)
        except SeedFailed:
            continue
        return continue_state(fieldspec, st, t_start)
    raise SeedFailed(f"could not seed the family near t={t_start}")


def continue_state(fieldspec: ExternalField, st: EquilibriumState,
                   t_target: float) -> EquilibriumState:
    """Newton continuation of a state to another mass, same topology.

    Walks a chain of refinements, shrinking the step whenever the solver
    loses the basin.  Raises SeedFailed when no chain reaches the target,
    usually a sign that a transition sits in between.
    """
    cur = st
    for _ in range(400):
        if abs(cur.t - t_target) <= 1e-14 * max(1.0, abs(t_target)):
            return hodograph_refine(fieldspec, t_target, cur.guess(),
                                    with_constants=True)
        step = t_target - cur.t
        for _half in range(14):
            try:
                cur = hodograph_refine(fieldspec, cur.t + step, cur.guess(),
                                       with_constants=False)
                break
            except (NewtonDiverged, TopologyBroken, NegativeRUnderRoot,
                    SingularSystem):
                step *= 0.4
        else:
            raise SeedFailed(f"continuation stalled at t={cur.t}")
    raise SeedFailed("continuation chain too long")


def _restart(fieldspec, state, opts, t_end):
    y, topo = _pack(state.guess())
    rhs = _RHS(fieldspec, topo, opts.guard_fraction)
    dt = min(1e-3 * max(state.t, 1e-3), 0.25 * max(t_end - state.t, 1e-12))
    snap = _snapshot(fieldspec, state.t, state.guess())
    return y, topo, rhs, state.t, dt, snap


def _record(traj: Trajectory, state: EquilibriumState) -> None:
    if traj.states and abs(traj.states[-1].t - state.t) <= \
            1e-15 * max(1.0, state.t):
        traj.states[-1] = state
        return
    traj.states.append(state)


def _note_event(traj: Trajectory, event: TransitionEvent,
                opts: EvolveOptions) -> None:
    traj.events.append(event)
    if len(traj.events) > opts.max_events:
        raise EventResolutionFailed(
            f"more than {opts.max_events} events; raise max_events if the "
            "field really has this many transitions")


# -- birth of a cut ----------------------------------------------------


def _handle_birth(builder: _EventBuilder, traj: Trajectory, prev: _Snapshot,
                  now: _Snapshot, zero_index: int,
                  opts: EvolveOptions) -> EquilibriumState:
    lo, hi = prev.t, now.t
    guess = prev.guess
    tol = opts.event_t_tol * max(1.0, hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        st_mid = builder.refine(mid, guess)
        margin = effective_potential(st_mid, st_mid.b_real[zero_index])
        if margin > 0.0:
            lo = mid
        else:
            hi = mid
        guess = st_mid.guess()
    T = 0.5 * (lo + hi)
    st_T = builder.refine(T, guess, with_constants=True)
    b0 = st_T.b_real[zero_index]
    cfg = st_T.cfg

    green = robin_data(cfg).green_value(b0)
    h = _monic_numerator(cfg)
    B_rest = st_T.B.deflate(b0)
    A_b0 = cfg.A(b0)
    e = cfg.endpoints
    below = [a for a in e if a < b0]
    anchor = max(below) if below else min(a for a in e if a > b0)
    idx = e.index(anchor)

    def inv_sqrt_A(yv):
        return 1.0 / np.sqrt(np.abs(cfg.excluded_product(yv, (idx,))))

    period = edge_integral(inv_sqrt_A, anchor, b0, kind="inv")
    C_seed = abs(4.0 * h(b0) / (math.sqrt(abs(A_b0)) * B_rest(b0)) * period)

    _record(traj, st_T)
    _note_event(traj, TransitionEvent(
        kind=BIRTH_OF_CUT, time=T, location=b0,
        local_constants={
            "log_law_constant": C_seed,
            "green_at_location": green,
            "edge_factor": abs(math.sqrt(abs(A_b0)) * B_rest(b0))}), opts)

    others = [abs(b0 - a) for a in e]
    others += [abs(b0 - b) for i, b in enumerate(st_T.b_real)
               if i != zero_index]
    clearance = min(others) if others else 1.0

    def guess_of_dt(dt: float) -> StateGuess:
        delta = math.sqrt(C_seed * dt / max(math.log(1.0 / dt), 1.0))
        delta = min(delta, 0.25 * clearance)
        new_e = tuple(sorted(st_T.endpoints + (b0 - delta, b0 + delta)))
        new_r = tuple(b for i, b in enumerate(st_T.b_real) if i != zero_index)
        return StateGuess(new_e, new_r, st_T.b_pairs)

    post = builder.reseed(T, guess_of_dt)
    _record(traj, post)
    return post


# -- armed clock events ------------------------------------------------


def _handle_armed(builder: _EventBuilder, traj: Trajectory, armed,
                  state: EquilibriumState, opts: EvolveOptions):
    kind = armed[0]
    if kind == FUSION:
        return _handle_fusion(builder, traj, state, armed[1], opts)
    if kind == TYPE_III:
        return _handle_typeiii(builder, traj, state, armed[1], armed[2], opts)
    return _handle_extrema(builder, traj, state, armed[1], opts)


def _handle_fusion(builder: _EventBuilder, traj: Trajectory,
                   state: EquilibriumState, gap_index: int,
                   opts: EvolveOptions):
    spread = state.cfg.spread

    def clock(st: EquilibriumState):
        u, v = st.cfg.gaps()[gap_index]
        w = v - u
        k, _b0 = _merged_rate(st.guess(), gap_index)
        if k <= 0:
            raise EventResolutionFailed(
                f"gap {gap_index} closes with nonpositive rate {k}")
        return w, st.t + 0.25 * w * w / k

    st_c, T = builder.approach(state, clock,
                               opts.approach_stop_fraction * spread)
    _record(traj, builder.refine(st_c.t, st_c.guess(), with_constants=True))
    if T is None:
        return traj.states[-1], None

    k_final, b0 = _merged_rate(st_c.guess(), gap_index)
    event = TransitionEvent(kind=FUSION, time=T, location=b0,
                            local_constants={"delta_sq_slope": k_final})
    _note_event(traj, event, opts)

    g = st_c.guess()
    merged_e = g.endpoints[: 2 * gap_index + 1] + \
        g.endpoints[2 * gap_index + 3:]
    lo, hi = g.endpoints[2 * gap_index + 1], g.endpoints[2 * gap_index + 2]
    rest_r = tuple(b for b in g.b_real if not lo < b < hi)

    def guess_of_dt(dt: float) -> StateGuess:
        im = math.sqrt(0.5 * k_final * dt)
        return StateGuess(merged_e, rest_r, g.b_pairs + ((b0, im),))

    post = builder.reseed(T, guess_of_dt)
    _record(traj, post)
    return post, event


def _handle_typeiii(builder: _EventBuilder, traj: Trajectory,
                    state: EquilibriumState, pair_index: int, edge_index: int,
                    opts: EvolveOptions):
    spread = state.cfg.spread

    def clock(st: EquilibriumState):
        g = st.guess()
        re, im = g.b_pairs[pair_index]
        a = g.endpoints[edge_index]
        dist = math.hypot(re - a, im)
        d0 = _cube_rate(g, pair_index, edge_index)
        return dist, st.t + d0 * dist ** 3 / _CUBE_CLOCK

    def predict(st: EquilibriumState, t_next: float, T_hat: float):
        # shrink the local coordinates by the cube-root law around the
        # inferred contact point; the edge sits 4/5 of the way from the
        # contact point to the pair's real part, on the far side
        g = st.guess()
        if not T_hat > t_next:
            return g
        sigma = ((T_hat - t_next) / (T_hat - st.t)) ** (1.0 / 3.0)
        re, im = g.b_pairs[pair_index]
        a = g.endpoints[edge_index]
        contact = a + 0.8 * (re - a)
        new_e = list(g.endpoints)
        new_e[edge_index] = contact + (a - contact) * sigma
        pairs = list(g.b_pairs)
        pairs[pair_index] = (contact + (re - contact) * sigma, im * sigma)
        return StateGuess(tuple(new_e), g.b_real, tuple(pairs))

    st_c, T = builder.approach(state, clock,
                               opts.approach_stop_fraction * spread,
                               predict=predict)
    _record(traj, builder.refine(st_c.t, st_c.guess(), with_constants=True))
    if T is None:
        return traj.states[-1], None

    g = st_c.guess()
    d0 = _cube_rate(g, pair_index, edge_index)
    # the edge stops a fifth of the remaining gap short of the contact
    # point, so extrapolating recovers the location to second order
    a_stop = g.endpoints[edge_index]
    re_stop, _ = g.b_pairs[pair_index]
    a_T = a_stop + 0.8 * (re_stop - a_stop)
    event = TransitionEvent(kind=TYPE_III, time=T, location=a_T,
                            local_constants={"cube_law_rate": d0})
    _note_event(traj, event, opts)

    # an odd endpoint index is the right edge of its cut, so outward is
    # toward larger x there and toward smaller x on an even (left) edge
    out = 1.0 if edge_index % 2 == 1 else -1.0

    def guess_of_dt(dt: float) -> StateGuess:
        w = (25.0 * dt / (4.0 * d0)) ** (1.0 / 3.0)
        new_e = list(g.endpoints)
        new_e[edge_index] = a_T + out * 0.8 * w
        pairs = list(g.b_pairs)
        pairs[pair_index] = (a_T - out * 0.2 * w, w / math.sqrt(5.0))
        return StateGuess(tuple(new_e), g.b_real, tuple(pairs))

    post = builder.reseed(T, guess_of_dt)
    _record(traj, post)
    return post, event


def _handle_extrema(builder: _EventBuilder, traj: Trajectory,
                    state: EquilibriumState, pair_index: int,
                    opts: EvolveOptions):
    spread = state.cfg.spread

    def clock(st: EquilibriumState):
        g = st.guess()
        _re, im = g.b_pairs[pair_index]
        rate, _b0 = _landing_rate(g, pair_index)
        if rate <= 0:
            raise EventResolutionFailed(
                "landing pair has nonpositive splitting rate")
        return im, st.t + im * im / rate

    st_c, T = builder.approach(state, clock,
                               opts.approach_stop_fraction * spread)
    _record(traj, builder.refine(st_c.t, st_c.guess(), with_constants=True))
    if T is None:
        return traj.states[-1], None

    g = st_c.guess()
    rate, b0 = _landing_rate(g, pair_index)
    event = TransitionEvent(kind=EXTREMA_BIRTH, time=T, location=b0,
                            local_constants={"splitting_rate": rate})
    _note_event(traj, event, opts)

    rest_pairs = tuple(p for i, p in enumerate(g.b_pairs) if i != pair_index)

    def guess_of_dt(dt: float) -> StateGuess:
        delta = math.sqrt(rate * dt)
        new_r = tuple(sorted(g.b_real + (b0 - delta, b0 + delta)))
        return StateGuess(g.endpoints, new_r, rest_pairs)

    post = builder.reseed(T, guess_of_dt)
    _record(traj, post)
    return post, event
