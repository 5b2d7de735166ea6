"""Evolution in mass: motion laws, events, derivative identities."""

import math

import numpy as np
import pytest

from eqflow import (
    BIRTH_OF_CUT,
    EXTREMA_BIRTH,
    FUSION,
    TYPE_III,
    ExternalField,
    QuarticField,
    continue_state,
    coupling_derivatives,
    density_at,
    evolve,
    hodograph_refine,
    hydrodynamic_residual,
    quadruple_points,
    robin_data,
    solve_h_family,
    time_derivatives,
)
from eqflow.dynamics import seed_small_t
from eqflow.errors import EventResolutionFailed
from eqflow.quadrature import RobinData


def symmetric_edges(t: float) -> tuple[float, float]:
    """Two-cut closed form for the even double-well field: inner and outer
    endpoint magnitudes before the merge at t = 2."""
    root = math.sqrt(2.0 * t)
    return math.sqrt(2.0 - root), math.sqrt(2.0 + root)


def symmetric_post_pair_sq(t: float) -> float:
    """Squared imaginary part of the conjugate pair after the merge."""
    return (-4.0 + math.sqrt(4.0 + 6.0 * t)) / 3.0


# ----------------------------------------------------------------------
# event sequences against frozen oracles


def test_quadratic_flow_has_no_events(traj_quadratic):
    assert traj_quadratic.events == []
    assert traj_quadratic.states[0].t == pytest.approx(1e-3)
    assert traj_quadratic.states[-1].t == pytest.approx(10.0, rel=1e-12)


def test_symmetric_fusion_event(traj_symmetric):
    assert [e.kind for e in traj_symmetric.events] == [FUSION]
    ev = traj_symmetric.events[0]
    assert ev.time == pytest.approx(2.0, abs=1e-9)
    assert ev.location == pytest.approx(0.0, abs=1e-8)
    assert ev.local_constants["delta_sq_slope"] == pytest.approx(0.5, abs=1e-6)


def test_symmetric_closed_forms_both_sides(traj_symmetric):
    for t_probe in (0.6, 1.0, 1.5, 1.9):
        st = traj_symmetric.state_at_or_before(t_probe)
        a, c = symmetric_edges(st.t)
        assert st.endpoints == pytest.approx((-c, -a, a, c), abs=1e-7)
    for t_probe in (2.1, 2.5, 2.9):
        st = traj_symmetric.state_at_or_before(t_probe)
        assert st.p == 1
        q = symmetric_post_pair_sq(st.t)
        outer = math.sqrt(2.0 * q + 4.0)
        assert st.endpoints == pytest.approx((-outer, outer), abs=1e-7)
        (re, im), = st.b_pairs
        assert re == pytest.approx(0.0, abs=1e-8)
        assert im == pytest.approx(math.sqrt(q), abs=1e-6)


def test_full_sequence_events(traj_full_sequence):
    kinds = [e.kind for e in traj_full_sequence.events]
    assert kinds == [EXTREMA_BIRTH, BIRTH_OF_CUT, FUSION]
    eb, bc, fu = traj_full_sequence.events
    assert eb.time == pytest.approx(0.035675272, abs=1e-7)
    assert eb.location == pytest.approx(0.953363141, abs=1e-5)
    assert bc.time == pytest.approx(0.046231578, abs=1e-7)
    assert bc.location == pytest.approx(1.067221, abs=1e-4)
    assert fu.time == pytest.approx(0.056467873, abs=1e-7)
    assert fu.location == pytest.approx(0.759300, abs=1e-4)
    assert bc.local_constants["log_law_constant"] > 0.0
    assert bc.local_constants["green_at_location"] > 0.0


def test_full_sequence_events_match_quadruple_algebra(traj_full_sequence,
                                                      field_full_sequence):
    cfgs = quadruple_points(QuarticField.from_external(field_full_sequence))
    by_kind = {c.kind: c for c in cfgs}
    eb, _bc, fu = traj_full_sequence.events
    assert eb.time == pytest.approx(by_kind["birth"].merge_time, abs=1e-8)
    assert eb.location == pytest.approx(by_kind["birth"].location, abs=1e-5)
    assert fu.time == pytest.approx(by_kind["fusion"].merge_time, abs=1e-8)
    assert fu.location == pytest.approx(by_kind["fusion"].location, abs=1e-5)


def test_real_case_events(traj_real_case, field_real_case):
    kinds = [e.kind for e in traj_real_case.events]
    assert kinds == [BIRTH_OF_CUT, FUSION]
    bc, fu = traj_real_case.events
    assert bc.time == pytest.approx(0.048229043, abs=1e-7)
    assert bc.location == pytest.approx(1.538890, abs=1e-4)
    algebra = quadruple_points(QuarticField.from_external(field_real_case))
    assert fu.time == pytest.approx(algebra[-1].merge_time, abs=1e-8)
    assert fu.time == pytest.approx(0.175669207, abs=1e-7)


def test_boundary_type3_event(traj_boundary):
    assert [e.kind for e in traj_boundary.events] == [TYPE_III]
    ev = traj_boundary.events[0]
    assert ev.time == pytest.approx(0.058820390797569, abs=1e-9)
    assert ev.location == pytest.approx(0.851291756, abs=1e-6)
    assert ev.local_constants["cube_law_rate"] == pytest.approx(
        1.1077443, rel=1e-6)


def test_locus_field_type3_event(traj_locus):
    assert [e.kind for e in traj_locus.events] == [TYPE_III]
    ev = traj_locus.events[0]
    assert ev.time == pytest.approx(10.0, abs=1e-8)
    assert ev.location == pytest.approx(-2.0, abs=1e-6)
    assert ev.local_constants["cube_law_rate"] == pytest.approx(4.0, rel=1e-4)


def test_one_cut_forever_has_no_events(traj_one_cut):
    assert traj_one_cut.events == []
    assert all(s.p == 1 for s in traj_one_cut.states)
    assert traj_one_cut.states[-1].t == pytest.approx(50.0, rel=1e-12)


def test_interior_merge_trajectory(traj_interior_merge_25):
    kinds = [e.kind for e in traj_interior_merge_25.events]
    assert kinds == [EXTREMA_BIRTH, BIRTH_OF_CUT, FUSION]
    eb, bc, fu = traj_interior_merge_25.events
    assert eb.time == pytest.approx(0.458763014, abs=1e-7)
    assert bc.time == pytest.approx(1.529672252, abs=1e-7)
    assert fu.time == pytest.approx(2.5, abs=1e-9)
    assert fu.location == pytest.approx(0.5, abs=1e-9)
    st = traj_interior_merge_25.state_at_or_before(fu.time * (1 + 1e-12))
    assert st.endpoints[0] == pytest.approx(-2.0, abs=1e-8)
    assert st.endpoints[-1] == pytest.approx(2.0, abs=1e-8)


# ----------------------------------------------------------------------
# motion laws against closed forms


def test_time_derivatives_quadratic_closed_form(traj_quadratic):
    st = traj_quadratic.state_at_or_before(1.3)
    rate = 1.0 / math.sqrt(2.0 * st.t)
    dots = time_derivatives(st)
    assert dots.endpoints == pytest.approx((-rate, rate), rel=1e-9)


def test_time_derivatives_symmetric_closed_form(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    a, c = symmetric_edges(st.t)
    root = math.sqrt(2.0 * st.t)
    da = -1.0 / (2.0 * a * root)
    dc = 1.0 / (2.0 * c * root)
    dots = time_derivatives(st)
    assert dots.endpoints == pytest.approx((-dc, -da, da, dc), rel=1e-8)


def test_time_derivatives_match_continuation(traj_full_sequence):
    st = traj_full_sequence.state_at_or_before(0.02)
    h = 1e-6 * st.t
    lo = continue_state(st.field, st, st.t - h)
    hi = continue_state(st.field, st, st.t + h)
    fd = (np.array(hi.endpoints) - np.array(lo.endpoints)) / (2.0 * h)
    dots = time_derivatives(st)
    assert dots.endpoints == pytest.approx(tuple(fd), rel=1e-5)


def test_coupling_derivative_zero_is_time_derivative(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    dots = time_derivatives(st)
    by_coupling = coupling_derivatives(st, 0)
    assert by_coupling.endpoints == dots.endpoints
    assert by_coupling.b_real == dots.b_real
    assert by_coupling.b_pairs == dots.b_pairs


def test_coupling_derivatives_match_finite_differences(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    j = 2
    h = 1e-6
    base = list(st.field.couplings)
    pert = []
    for sign in (-1.0, 1.0):
        c = list(base)
        c[j - 1] += sign * h
        pert.append(hodograph_refine(ExternalField(st.field.m, tuple(c)),
                                     st.t, st.guess()))
    fd = (np.array(pert[1].endpoints) - np.array(pert[0].endpoints)) / (2 * h)
    dj = coupling_derivatives(st, j)
    assert dj.endpoints == pytest.approx(tuple(fd), rel=1e-5)


def test_coupling_index_out_of_range(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    with pytest.raises(ValueError):
        coupling_derivatives(st, 4)
    with pytest.raises(ValueError):
        coupling_derivatives(st, -1)


# ----------------------------------------------------------------------
# differentiation identities


def test_equilibrium_constant_derivative_is_robin(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.2)
    h = 1e-4 * st.t
    lo = continue_state(st.field, st, st.t - h)
    hi = continue_state(st.field, st, st.t + h)
    assert (hi.c_t - lo.c_t) / (2.0 * h) == pytest.approx(st.rho, abs=1e-6)


def test_density_time_derivative_is_robin_density(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.2)
    h = 1e-5
    lo = continue_state(st.field, st, st.t - h)
    hi = continue_state(st.field, st, st.t + h)
    rd = robin_data(st.cfg)
    worst = 0.0
    for u, v in st.cfg.cuts():
        margin = 0.05 * (v - u)
        xs = np.linspace(u + margin, v - margin, 25)
        fd = (density_at(hi, xs) - density_at(lo, xs)) / (2.0 * h)
        worst = max(worst, float(np.max(np.abs(fd - rd.density(xs)))))
    assert worst < 1e-5


def test_euler_coupling_identity(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    two_m = 2 * st.field.m
    fam = solve_h_family(st.cfg, two_m)
    total = st.t * fam[0]
    for j, tj in enumerate(st.field.couplings, start=1):
        total = total + tj * fam[j]
    total = total + (1.0 / two_m) * fam[two_m]
    target = st.cfg.A * st.B
    width = max(total.degree, target.degree) + 1
    diff = [abs(total.coeff(k) - target.coeff(k)) for k in range(width)]
    assert max(diff) < 1e-10


def test_hydrodynamic_cross_identities(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    for i in range(4):
        for j in range(i + 1, 4):
            assert hydrodynamic_residual(st, i, j) < 1e-9


# ----------------------------------------------------------------------
# numerical hygiene of emitted trajectories


@pytest.mark.parametrize("fixture", ["traj_quadratic", "traj_symmetric",
                                     "traj_full_sequence"])
def test_drift_and_residuals(fixture, request):
    traj = request.getfixturevalue(fixture)
    drifts = [d["drift"] for d in traj.diagnostics]
    assert drifts and max(drifts) < 1e-8
    for st in traj.states:
        assert st.residuals.coeff < 1e-9
        assert st.residuals.period < 1e-9
        assert abs(st.residuals.mass) < 1e-9


def test_re_refinement_is_stationary(traj_full_sequence):
    for st in traj_full_sequence.states[:: max(1, len(traj_full_sequence.states) // 8)]:
        again = hodograph_refine(st.field, st.t, st)
        before = np.concatenate([st.endpoints, st.b_real,
                                 [v for p in st.b_pairs for v in p]])
        after = np.concatenate([again.endpoints, again.b_real,
                                [v for p in again.b_pairs for v in p]])
        assert float(np.max(np.abs(after - before))) < 1e-12


# ----------------------------------------------------------------------
# seeding and continuation


def test_seed_flat_well_closed_form():
    field = ExternalField(m=2, couplings=(0.0, 0.0, 0.0))
    t0 = 1e-3
    st = seed_small_t(field, t0)
    a = (8.0 * t0 / 3.0) ** 0.25
    assert st.endpoints == pytest.approx((-a, a), abs=1e-9)
    (re, im), = st.b_pairs
    assert re == pytest.approx(0.0, abs=1e-10)
    assert im == pytest.approx(a / math.sqrt(2.0), abs=1e-9)
    rho = math.log(2.0) - 0.25 * math.log(8.0 * t0 / 3.0)
    assert st.rho == pytest.approx(rho, abs=1e-8)
    assert st.c_t == pytest.approx(t0 * rho + t0 / 4.0, abs=1e-8)


def test_continue_state_tracks_closed_form(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    moved = continue_state(st.field, st, 1.7)
    a, c = symmetric_edges(1.7)
    assert moved.endpoints == pytest.approx((-c, -a, a, c), abs=1e-9)


def test_state_lookup_bounds(traj_symmetric):
    t_lo = traj_symmetric.states[0].t
    t_hi = traj_symmetric.states[-1].t
    with pytest.raises(EventResolutionFailed):
        traj_symmetric.state_at_or_before(0.5 * t_lo)
    with pytest.raises(EventResolutionFailed):
        traj_symmetric.state_at_or_after(t_hi + 1.0)


def test_evolve_rejects_bad_ranges():
    field = ExternalField.quadratic()
    with pytest.raises(ValueError):
        evolve(field, 0.0, 1.0)
    with pytest.raises(ValueError):
        evolve(field, 1.0, 0.5)


def test_cubic_edge_contact_fails_loudly():
    field = ExternalField(m=2, couplings=(0.1, -1.0, 0.05))
    with pytest.raises(EventResolutionFailed, match="cubic edge contact"):
        evolve(field, 0.3, 0.8)


def test_robin_data_matches_state_constants(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    rd = robin_data(st.cfg)
    assert isinstance(rd, RobinData)
    assert rd.rho == st.rho
