"""Local scaling-law fits and Robin-derivative limits at transitions.

Each transition leaves a characteristic imprint on the family: a closing
gap shrinks like a square root of the remaining mass, a conjugate pair
impacting an edge follows a cube-root clock, a landing pair descends
like a square root, and a newborn cut opens under a logarithmic
correction.  The probes here re-measure those laws from refined states
alone, walking a geometric ladder of masses toward the critical value,
so they check the event constants and the integrator independently of
the machinery that produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dynamics import (BIRTH_OF_CUT, EXTREMA_BIRTH, FUSION, TYPE_III,
                       TransitionEvent, Trajectory, continue_state)
from .errors import EventResolutionFailed, InsufficientWindow, SeedFailed
from .state import EquilibriumState

_LADDER_POINTS = 9
_LADDER_RATIO = 2.0


@dataclass(frozen=True)
class ScalingReport:
    """Fitted local law of one transition.

    exponent and prefactor come from a log-log least-squares fit of the
    kind's distance measure against the mass offset; samples holds the
    (offset, distance) pairs and details the kind-specific extras.
    """

    kind: str
    exponent: float
    prefactor: float
    window: tuple[float, float]
    samples: tuple[tuple[float, float], ...]
    details: dict = dc_field(default_factory=dict)


@dataclass(frozen=True)
class RobinJumpReport:
    """One-sided limits of the Robin-constant derivative at a transition."""

    kind: str
    left: float
    right: float
    details: dict = dc_field(default_factory=dict)


# ----------------------------------------------------------------------
# mass ladders


def _window_base(traj: Trajectory, event: TransitionEvent, side: int) -> float:
    T = float(event.time)
    t_lo, t_hi = traj.t_range
    span = (T - t_lo) if side < 0 else (t_hi - T)
    for other in traj.events:
        ot = float(other.time)
        if side < 0 and ot < T:
            span = min(span, 0.5 * (T - ot))
        elif side > 0 and ot > T:
            span = min(span, 0.5 * (ot - T))
    base = min(0.25 * span, 0.05 * max(abs(T), 1e-2))
    if base <= 1e-9 * max(1.0, abs(T)):
        raise InsufficientWindow(
            f"no room on the {'left' if side < 0 else 'right'} of T={T}")
    return base


def _ladder(traj: Trajectory, event: TransitionEvent, side: int,
            n_points: int) -> tuple[list[float], list[EquilibriumState]]:
    """Refined states at T -/+ base/ratio^i, walked toward the event."""
    T = float(event.time)
    base = _window_base(traj, event, side)
    dts = [base / _LADDER_RATIO ** i for i in range(n_points)]
    try:
        if side < 0:
            st = traj.state_at_or_before(T - dts[0])
        else:
            st = traj.state_at_or_after(T + dts[0])
    except EventResolutionFailed as exc:
        raise InsufficientWindow(str(exc)) from exc
    states = []
    try:
        for dt in dts:
            st = continue_state(traj.field, st, T - dt if side < 0 else T + dt)
            states.append(st)
    except SeedFailed as exc:
        raise InsufficientWindow(
            f"continuation failed inside the probe window: {exc}") from exc
    return dts, states


def _require_event(event: TransitionEvent | None) -> TransitionEvent:
    if event is None:
        raise InsufficientWindow("trajectory holds no event to probe")
    return event


# ----------------------------------------------------------------------
# distance measures


def _gap_halfwidth(st: EquilibriumState, loc: float) -> float:
    gaps = st.cfg.gaps()
    if not gaps:
        raise InsufficientWindow("state has no gap to measure")
    u, v = min(gaps, key=lambda g: abs(0.5 * (g[0] + g[1]) - loc))
    return 0.5 * (v - u)


def _cut_halfwidth(st: EquilibriumState, loc: float) -> float:
    u, v = min(st.cfg.cuts(), key=lambda c: abs(0.5 * (c[0] + c[1]) - loc))
    return 0.5 * (v - u)


def _pair_near(st: EquilibriumState, loc: float) -> tuple[float, float]:
    if not st.b_pairs:
        raise InsufficientWindow("state has no conjugate pair to measure")
    return min(st.b_pairs, key=lambda p: abs(p[0] - loc))


def _edge_near(st: EquilibriumState, loc: float) -> float:
    return min(st.endpoints, key=lambda a: abs(a - loc))


def _loglog_fit(dts, deltas) -> tuple[float, float]:
    x = np.log(np.asarray(dts))
    y = np.log(np.asarray(deltas))
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(slope), float(math.exp(intercept))


def _origin_slope(dts, sq) -> float:
    x = np.asarray(dts)
    y = np.asarray(sq)
    return float(np.dot(x, y) / np.dot(x, x))


# ----------------------------------------------------------------------
# scaling probe


def scaling_probe(traj: Trajectory, event: TransitionEvent | None,
                  n_points: int = _LADDER_POINTS) -> ScalingReport:
    """Fit the local law of one event from re-refined trajectory states.

    Fusion fits the closing gap halfwidth, TypeIII the pair-to-edge
    distance with the impact-angle ratio, ExtremaBirth the descending
    imaginary part, and BirthOfCut the newborn halfwidth under the
    logarithmic law.  Raises InsufficientWindow when the trajectory
    leaves no room on the needed side.
    """
    event = _require_event(event)
    loc = event.location
    if event.kind == BIRTH_OF_CUT:
        dts, states = _ladder(traj, event, +1, n_points)
        deltas = [_cut_halfwidth(st, loc) for st in states]
        consts = [d * d * math.log(1.0 / dt) / dt
                  for dt, d in zip(dts, deltas)]
        stability = max(abs(consts[i + 1] / consts[i] - 1.0)
                        for i in range(len(consts) - 1))
        exponent, prefactor = _loglog_fit(dts, deltas)
        details = {
            "log_law_constants": tuple(consts),
            "log_law_stability": stability,
            "log_law_constant_fit": consts[-1],
            "log_law_constant_seed": event.local_constants.get(
                "log_law_constant"),
        }
    elif event.kind == FUSION:
        dts, states = _ladder(traj, event, -1, n_points)
        deltas = [_gap_halfwidth(st, loc) for st in states]
        exponent, prefactor = _loglog_fit(dts, deltas)
        k_fit = _origin_slope(dts, [d * d for d in deltas])
        details = {
            "delta_sq_slope_fit": k_fit,
            "delta_sq_slope": event.local_constants.get("delta_sq_slope"),
        }
    elif event.kind == TYPE_III:
        dts, states = _ladder(traj, event, -1, n_points)
        deltas, angles = [], []
        for st in states:
            re, im = _pair_near(st, loc)
            a = _edge_near(st, loc)
            deltas.append(math.hypot(re - a, im))
            angles.append(im / (re - a))
        exponent, prefactor = _loglog_fit(dts, deltas)
        # the ratio and the inverted clock rate approach their limits
        # linearly in the distance, so extrapolate both ladders to contact
        design = np.vstack([np.asarray(deltas),
                            np.ones(len(deltas))]).T
        (_, angle0), *_ = np.linalg.lstsq(design, np.asarray(angles),
                                          rcond=None)
        rates = [3.0 * math.sqrt(7.5) * dt / d ** 3
                 for dt, d in zip(dts, deltas)]
        (_, rate0), *_ = np.linalg.lstsq(design, np.asarray(rates),
                                         rcond=None)
        details = {
            "impact_angle_ratio": float(angle0),
            "impact_angle_ratio_last": angles[-1],
            "cube_law_rate_fit": float(rate0),
            "cube_law_rate": event.local_constants.get("cube_law_rate"),
        }
    elif event.kind == EXTREMA_BIRTH:
        dts, states = _ladder(traj, event, -1, n_points)
        deltas = [_pair_near(st, loc)[1] for st in states]
        exponent, prefactor = _loglog_fit(dts, deltas)
        rate_fit = _origin_slope(dts, [d * d for d in deltas])
        details = {
            "splitting_rate_fit": rate_fit,
            "splitting_rate": event.local_constants.get("splitting_rate"),
        }
    else:
        raise InsufficientWindow(f"unknown event kind {event.kind!r}")
    return ScalingReport(kind=event.kind, exponent=exponent,
                         prefactor=prefactor, window=(dts[-1], dts[0]),
                         samples=tuple(zip(dts, deltas)), details=details)


# ----------------------------------------------------------------------
# Robin-derivative limits


def _one_sided_limit(dts, states) -> tuple[float, list[float]]:
    """Quadratic-intercept extrapolation of difference quotients to T."""
    ts = [st.t for st in states]
    rhos = [st.rho for st in states]
    quots, offsets = [], []
    for j in range(len(ts) - 1):
        quots.append((rhos[j + 1] - rhos[j]) / (ts[j + 1] - ts[j]))
        offsets.append(0.5 * (dts[j] + dts[j + 1]))
    design = np.vstack([np.ones(len(offsets)), np.asarray(offsets),
                        np.asarray(offsets) ** 2]).T
    coef, *_ = np.linalg.lstsq(design, np.asarray(quots), rcond=None)
    return float(coef[0]), quots


def _cusp_side(dts, states) -> dict:
    """Fit |d(rho)/dt| ~ C * offset^(-2/3) from difference quotients."""
    ts = [st.t for st in states]
    rhos = [st.rho for st in states]
    quots, coeffs, smalls, offsets = [], [], [], []
    for j in range(len(ts) - 1):
        q = (rhos[j + 1] - rhos[j]) / (ts[j + 1] - ts[j])
        s1, s2 = dts[j], dts[j + 1]
        quots.append(q)
        offsets.append(0.5 * (s1 + s2))
        # averaging C s^(-2/3) over [s2, s1] yields exactly this quotient,
        # so inverting the average recovers C rung by rung
        coeffs.append(abs(q) * (s1 - s2)
                      / (3.0 * (s1 ** (1.0 / 3.0) - s2 ** (1.0 / 3.0))))
        smalls.append(s2 ** (1.0 / 3.0))
    x = np.log(np.asarray(offsets))
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, _), *_ = np.linalg.lstsq(design, np.log(np.abs(quots)),
                                     rcond=None)
    design2 = np.vstack([np.asarray(smalls), np.ones(len(smalls))]).T
    (_, c0), *_ = np.linalg.lstsq(design2, np.asarray(coeffs), rcond=None)
    return {"exponent": float(slope), "coefficient": float(c0),
            "quotients": tuple(quots)}


def _divergent_side(dts, states) -> dict:
    """Fit d(rho)/dt ~ coeff / (dt log^2 dt) on the newborn-cut side."""
    ts = [st.t for st in states]
    rhos = [st.rho for st in states]
    quots, offsets = [], []
    for j in range(len(ts) - 1):
        quots.append((rhos[j + 1] - rhos[j]) / (ts[j + 1] - ts[j]))
        offsets.append(0.5 * (dts[j] + dts[j + 1]))
    scaled = [q * m * math.log(m) ** 2 for q, m in zip(quots, offsets)]
    # slope of log|quot * log^2 offset| against log offset; -1 at the law
    x = np.log(np.asarray(offsets))
    design = np.vstack([x, np.ones_like(x)]).T
    yq = np.log(np.abs(np.asarray(quots)) * np.log(np.asarray(offsets)) ** 2)
    (slope, _), *_ = np.linalg.lstsq(design, yq, rcond=None)
    coeff = float(np.mean(scaled[-3:]))
    return {
        "divergence_exponent": float(slope),
        "divergence_coefficient": coeff,
        "green_fit": math.sqrt(2.0 * abs(coeff)),
        "difference_quotients": tuple(quots),
    }


def robin_derivative_jump(traj: Trajectory, event: TransitionEvent | None,
                          n_points: int = _LADDER_POINTS) -> RobinJumpReport:
    """One-sided limits of d(rho)/dt at an event.

    Finite sides are extrapolated from difference quotients of the
    stored Robin constants along a refinement ladder.  The newborn-cut
    side of a BirthOfCut diverges; there the report carries the fitted
    divergence law instead and the limit is -inf.
    """
    event = _require_event(event)
    details: dict = {}

    dts_l, states_l = _ladder(traj, event, -1, n_points)

    if event.kind == TYPE_III:
        # the derivative blows up like a -2/3 power on both sides, so
        # there are no finite limits; fit the cusp law instead
        d0 = event.local_constants.get("cube_law_rate")
        if d0 is not None:
            details["divergence_coefficient_reference"] = (
                (5.0 / 3.0) * (4.0 / 25.0) ** (2.0 / 3.0)
                * d0 ** (-4.0 / 3.0))
        for label, (dts, states) in (
                ("left", (dts_l, states_l)),
                ("right", _ladder(traj, event, +1, n_points))):
            fit = _cusp_side(dts, states)
            details[f"{label}_divergence_exponent"] = fit["exponent"]
            details[f"{label}_divergence_coefficient"] = fit["coefficient"]
        return RobinJumpReport(kind=event.kind, left=-math.inf,
                               right=-math.inf, details=details)

    left, quots_l = _one_sided_limit(dts_l, states_l)
    details["left_quotients"] = tuple(quots_l)

    if event.kind == BIRTH_OF_CUT:
        dts_r, states_r = _ladder(traj, event, +1, n_points)
        details.update(_divergent_side(dts_r, states_r))
        details["green_at_location"] = event.local_constants.get(
            "green_at_location")
        right = -math.inf
    else:
        dts_r, states_r = _ladder(traj, event, +1, n_points)
        right, quots_r = _one_sided_limit(dts_r, states_r)
        details["right_quotients"] = tuple(quots_r)
        details["computed_jump"] = right - left

    if event.kind == FUSION:
        # frozen-endpoint reference value for the left limit, reported
        # for comparison only: -1 / (A(b0)^2 B_rest(b0)) on the merged
        # configuration
        post = states_r[-1]
        b0 = event.location
        re, im = _pair_near(post, b0)
        b_rest = post.B(b0) / ((b0 - re) ** 2 + im ** 2)
        a_val = post.cfg.A(b0)
        details["frozen_endpoint_formula"] = -1.0 / (a_val * a_val * b_rest)
        details["midpoint_offset"] = b0 - 0.5 * (post.endpoints[0]
                                                 + post.endpoints[-1])
    return RobinJumpReport(kind=event.kind, left=left, right=right,
                           details=details)
