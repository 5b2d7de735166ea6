"""Scaling-law fits and Robin-derivative limits re-measured from states."""

import math

import pytest

from eqflow import (
    TransitionEvent,
    robin_derivative_jump,
    scaling_probe,
)
from eqflow.errors import InsufficientWindow

INV_SQRT5 = 1.0 / math.sqrt(5.0)


# ----------------------------------------------------------------------
# fusion


def test_fusion_gap_closes_like_square_root(traj_symmetric):
    rep = scaling_probe(traj_symmetric, traj_symmetric.events[0])
    assert rep.kind == "Fusion"
    assert rep.exponent == pytest.approx(0.5, abs=0.02)
    assert len(rep.samples) == 9
    assert rep.window[0] < rep.window[1]
    fit = rep.details["delta_sq_slope_fit"]
    assert fit == pytest.approx(rep.details["delta_sq_slope"], rel=0.02)
    assert fit == pytest.approx(0.5, rel=0.02)


def test_fusion_robin_jump_symmetric_oracle(traj_symmetric):
    jump = robin_derivative_jump(traj_symmetric, traj_symmetric.events[0])
    assert jump.left == pytest.approx(-0.125, abs=1e-5)
    assert jump.right == pytest.approx(-0.0625, abs=1e-6)
    assert jump.details["computed_jump"] == pytest.approx(0.0625, abs=1e-5)
    # reference expression evaluated on the merged configuration agrees
    # with the measured right limit
    assert jump.details["frozen_endpoint_formula"] == pytest.approx(
        -0.0625, abs=1e-4)
    assert jump.details["midpoint_offset"] == pytest.approx(0.0, abs=1e-6)


# ----------------------------------------------------------------------
# extrema birth and birth of cut


def test_extrema_birth_pair_lands_like_square_root(traj_full_sequence):
    eb = traj_full_sequence.events[0]
    rep = scaling_probe(traj_full_sequence, eb)
    assert rep.kind == "ExtremaBirth"
    assert rep.exponent == pytest.approx(0.5, abs=0.015)
    assert rep.details["splitting_rate_fit"] == pytest.approx(
        rep.details["splitting_rate"], rel=0.03)


def test_birth_of_cut_logarithmic_law(traj_full_sequence):
    bc = traj_full_sequence.events[1]
    rep = scaling_probe(traj_full_sequence, bc)
    assert rep.kind == "BirthOfCut"
    # the pure power fit sits a little above 1/2 because of the slowly
    # varying logarithm; the stable quantity is delta^2 log(1/dt) / dt
    assert 0.45 < rep.exponent < 0.62
    assert rep.details["log_law_stability"] < 0.10
    ratio = rep.details["log_law_constant_fit"] / \
        rep.details["log_law_constant_seed"]
    assert 0.5 < ratio < 1.5


def test_birth_of_cut_robin_divergence(traj_full_sequence):
    bc = traj_full_sequence.events[1]
    jump = robin_derivative_jump(traj_full_sequence, bc)
    assert math.isfinite(jump.left)
    assert jump.right == -math.inf
    assert jump.details["divergence_exponent"] == pytest.approx(-1.0, abs=0.1)
    assert jump.details["divergence_coefficient"] < 0.0
    assert jump.details["green_at_location"] > 0.0


# ----------------------------------------------------------------------
# type III


def test_type3_cube_root_clock(traj_boundary):
    ev = traj_boundary.events[0]
    rep = scaling_probe(traj_boundary, ev)
    assert rep.kind == "TypeIII"
    assert rep.exponent == pytest.approx(1.0 / 3.0, abs=1.0 / 3.0 * 0.05)
    assert rep.details["impact_angle_ratio"] == pytest.approx(
        INV_SQRT5, rel=0.02)
    assert rep.details["cube_law_rate_fit"] == pytest.approx(
        rep.details["cube_law_rate"], rel=0.01)


def test_type3_angle_is_universal(traj_locus):
    # same impact geometry on an unrelated field, mirrored because the
    # pair strikes a left edge
    rep = scaling_probe(traj_locus, traj_locus.events[0])
    assert rep.exponent == pytest.approx(1.0 / 3.0, abs=1.0 / 3.0 * 0.05)
    assert abs(rep.details["impact_angle_ratio"]) == pytest.approx(
        INV_SQRT5, rel=0.02)
    assert rep.details["cube_law_rate_fit"] == pytest.approx(
        rep.details["cube_law_rate"], rel=0.01)


def test_type3_robin_cusp_both_sides(traj_boundary):
    ev = traj_boundary.events[0]
    jump = robin_derivative_jump(traj_boundary, ev)
    assert jump.left == -math.inf
    assert jump.right == -math.inf
    ref = jump.details["divergence_coefficient_reference"]
    for side in ("left", "right"):
        assert jump.details[f"{side}_divergence_exponent"] == pytest.approx(
            -2.0 / 3.0, abs=0.1)
        assert jump.details[f"{side}_divergence_coefficient"] == pytest.approx(
            ref, rel=0.10)


# ----------------------------------------------------------------------
# failure modes


def test_probe_requires_an_event(traj_quadratic):
    with pytest.raises(InsufficientWindow):
        scaling_probe(traj_quadratic, None)
    with pytest.raises(InsufficientWindow):
        robin_derivative_jump(traj_quadratic, None)


def test_probe_rejects_unknown_kind(traj_symmetric):
    bogus = TransitionEvent(kind="Quench", time=1.0, location=0.0,
                            local_constants={})
    with pytest.raises(InsufficientWindow):
        scaling_probe(traj_symmetric, bogus)
