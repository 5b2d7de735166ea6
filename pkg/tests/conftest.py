import pytest

from eqflow import ExternalField, evolve
from eqflow.quartic import critical_constants


@pytest.fixture(scope="session")
def traj_quadratic():
    return evolve(ExternalField.quadratic(), 1e-3, 10.0)


@pytest.fixture(scope="session")
def field_symmetric():
    return ExternalField(m=2, couplings=(0.0, -1.0, 0.0))


@pytest.fixture(scope="session")
def traj_symmetric(field_symmetric):
    return evolve(field_symmetric, 0.5, 3.0)


@pytest.fixture(scope="session")
def field_full_sequence():
    return ExternalField.quartic_from_critical_points(1 + 0.2j, 1 - 0.2j)


@pytest.fixture(scope="session")
def traj_full_sequence(field_full_sequence):
    return evolve(field_full_sequence, 1e-3, 0.09)


@pytest.fixture(scope="session")
def field_boundary():
    s = critical_constants().boundary_slope
    return ExternalField.quartic_from_critical_points(
        complex(1.0, s), complex(1.0, -s))


@pytest.fixture(scope="session")
def traj_boundary(field_boundary):
    return evolve(field_boundary, 1e-3, 0.12)


@pytest.fixture(scope="session")
def field_real_case():
    return ExternalField.quartic_from_critical_points(1.0, 1.5)


@pytest.fixture(scope="session")
def traj_real_case(field_real_case):
    return evolve(field_real_case, 1e-3, 0.3)


@pytest.fixture(scope="session")
def field_locus():
    # phi' = x^3 + 4 x^2 + 2 x - 8 after leading normalization
    return ExternalField(m=2, couplings=(-8.0, 1.0, 4.0 / 3.0))


@pytest.fixture(scope="session")
def traj_locus(field_locus):
    return evolve(field_locus, 1.0, 30.0)


@pytest.fixture(scope="session")
def traj_one_cut():
    field = ExternalField.quartic_from_critical_points(1 + 0.3j, 1 - 0.3j)
    return evolve(field, 1e-3, 50.0)


@pytest.fixture(scope="session")
def traj_interior_merge_25():
    from eqflow import interior_merge_family

    return evolve(interior_merge_family(0.25).field, 1e-3, 2.6)


@pytest.fixture(scope="session")
def traj_interior_merge_50():
    from eqflow import interior_merge_family

    return evolve(interior_merge_family(0.5).field, 1e-3, 4.1)
