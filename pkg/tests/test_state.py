"""Refinement, pointwise evaluation, verification, serialization."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from eqflow import (
    ExternalField,
    StateGuess,
    cauchy_at,
    density_at,
    effective_potential,
    hodograph_refine,
    potential_at,
    state_from_json,
    state_to_json,
    verify_equilibrium,
)
from eqflow.errors import InconsistentConfiguration, TopologyBroken


def quadratic_constants(t: float) -> tuple[float, float, float]:
    """Closed forms for the quadratic field at mass t.

    Endpoints +-sqrt(2t); the Robin constant and the equilibrium constant
    follow from the single-interval formula and its t-antiderivative.
    """
    edge = math.sqrt(2.0 * t)
    rho = 0.5 * math.log(2.0 / t)
    c_t = 0.5 * t * (1.0 + math.log(2.0 / t))
    return edge, rho, c_t


# ----------------------------------------------------------------------
# refinement


def test_refine_quadratic_from_coarse_guess():
    field = ExternalField.quadratic()
    st = hodograph_refine(field, 1.0, StateGuess((-1.0, 1.2), (), ()))
    edge, rho, c_t = quadratic_constants(1.0)
    assert st.endpoints[0] == pytest.approx(-edge, abs=1e-10)
    assert st.endpoints[1] == pytest.approx(edge, abs=1e-10)
    assert st.c_t == pytest.approx(c_t, abs=1e-9)
    assert st.rho == pytest.approx(rho, abs=1e-9)
    assert st.residuals.coeff < 1e-10
    assert abs(st.residuals.mass) < 1e-9


def test_refine_is_idempotent(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    again = hodograph_refine(st.field, st.t, st)
    move = np.max(np.abs(np.array(again.endpoints) - np.array(st.endpoints)))
    assert move < 1e-12


def test_refine_rejects_zero_count_mismatch():
    field = ExternalField.quadratic()
    with pytest.raises(InconsistentConfiguration):
        hodograph_refine(field, 1.0, StateGuess((-1.0, 1.0), (0.5,), ()))


def test_refine_rejects_broken_topology():
    field = ExternalField.quadratic()
    with pytest.raises(TopologyBroken):
        hodograph_refine(field, 1.0, StateGuess((1.0, -1.0), (), ()))


# ----------------------------------------------------------------------
# closed forms along the quadratic flow


def test_quadratic_closed_forms_along_flow(traj_quadratic):
    for t_probe in (0.01, 0.1, 1.0, 5.0, 9.5):
        st = traj_quadratic.state_at_or_before(t_probe)
        edge, rho, c_t = quadratic_constants(st.t)
        assert st.endpoints[0] == pytest.approx(-edge, abs=1e-8)
        assert st.endpoints[1] == pytest.approx(edge, abs=1e-8)
        assert st.rho == pytest.approx(rho, abs=1e-8)
        assert st.c_t == pytest.approx(c_t, abs=1e-8)
        # energy = t c_t + mean of phi; the second moment of the
        # semicircle of mass t is t**2 / 2
        assert st.energy == pytest.approx(st.t * c_t + 0.25 * st.t ** 2, abs=1e-7)


def test_density_is_semicircle(traj_quadratic):
    st = traj_quadratic.state_at_or_before(2.0)
    r2 = 2.0 * st.t
    xs = np.linspace(-0.9 * math.sqrt(r2), 0.9 * math.sqrt(r2), 21)
    assert np.allclose(density_at(st, xs), np.sqrt(r2 - xs * xs) / math.pi,
                       atol=1e-9)
    off = np.array([-10.0, math.sqrt(r2) + 0.5, 10.0])
    assert np.all(density_at(st, off) == 0.0)


def test_density_integrates_to_mass(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    total = 0.0
    for u, v in st.cfg.cuts():
        val, _ = quad(lambda x: float(density_at(st, x)), u, v,
                      limit=200, epsabs=1e-11)
        total += val
    assert total == pytest.approx(st.t, abs=1e-8)


# ----------------------------------------------------------------------
# transforms and potentials


def test_cauchy_transform_against_quadrature(traj_quadratic):
    st = traj_quadratic.state_at_or_before(1.0)

    def direct(z: complex) -> complex:
        re, _ = quad(lambda y: float(density_at(st, y)) * ((z - y).real
                     / abs(z - y) ** 2), st.endpoints[0], st.endpoints[1],
                     limit=200)
        im, _ = quad(lambda y: float(density_at(st, y)) * (-(z - y).imag
                     / abs(z - y) ** 2), st.endpoints[0], st.endpoints[1],
                     limit=200)
        return complex(re, im)

    for z in (2.5 + 0.0j, 0.3 + 1.0j, -4.0 + 0.5j):
        assert cauchy_at(st, z) == pytest.approx(-direct(z), abs=1e-8)


def test_cauchy_transform_decay(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    for R in (1e3, 1e5):
        z = complex(0.7, R)
        assert z * cauchy_at(st, z) == pytest.approx(-st.t, abs=50.0 / R)


def test_potential_plus_field_is_constant_on_support(traj_quadratic):
    st = traj_quadratic.state_at_or_before(1.0)
    for x in (-0.8, 0.0, 0.3, 1.1):
        w = potential_at(st, x) + st.field.phi(x)
        assert w == pytest.approx(st.c_t, abs=1e-8)


def test_effective_potential_margin(traj_quadratic):
    st = traj_quadratic.state_at_or_before(1.0)
    edge = st.endpoints[1]
    assert effective_potential(st, 0.0) == 0.0
    vals = [effective_potential(st, edge + s) for s in (0.2, 0.5, 1.0)]
    assert all(v > 0.0 for v in vals)
    assert vals == sorted(vals)
    # dual route: the signed branch integral equals the direct potential
    x = edge + 0.7
    w = potential_at(st, x) + st.field.phi(x)
    assert effective_potential(st, x) == pytest.approx(w - st.c_t, abs=1e-8)


def test_effective_potential_positive_in_gap(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    u, v = st.cfg.gaps()[0]
    mid = 0.5 * (u + v)
    assert effective_potential(st, mid) > 0.0
    w = potential_at(st, mid) + st.field.phi(mid)
    assert effective_potential(st, mid) == pytest.approx(w - st.c_t, abs=1e-8)


def test_verify_equilibrium_reports_clean(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.0)
    report = verify_equilibrium(st)
    assert report.ok()
    assert report.min_margin >= -1e-9
    assert report.max_support_deviation < 1e-6
    assert report.min_density >= -1e-9


# ----------------------------------------------------------------------
# serialization


def test_state_json_round_trip(traj_symmetric):
    st = traj_symmetric.state_at_or_before(1.5)
    text = state_to_json(st)
    back = state_from_json(st.field, text)
    assert back.t == st.t
    assert back.endpoints == st.endpoints
    assert back.b_real == st.b_real
    assert back.b_pairs == st.b_pairs
    assert back.c_t == st.c_t
    assert back.rho == st.rho
    assert back.energy == st.energy
    # a saved state is already at the solution: two Newton sweeps suffice
    refined = hodograph_refine(st.field, back.t, back, max_iter=2)
    assert refined.residuals.coeff < 1e-10


def test_state_json_rejects_unknown_schema(traj_quadratic):
    st = traj_quadratic.state_at_or_before(1.0)
    text = state_to_json(st).replace("eqflow-state-v1", "eqflow-state-v0")
    with pytest.raises(InconsistentConfiguration):
        state_from_json(st.field, text)
