import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crindex.asymptotic_ops import diagonal_phase_path, make_operator, reference_operator
from crindex.asymptotic_ops import conjugate_operator, random_operator
from crindex.cz_flow import (
    EndpointDegenerate,
    OperatorPath,
    cz_index,
    cz_index_direct,
    parity_shift,
    smootherstep,
    spectral_flow,
)
from crindex.numerics import ValidationError

SMALL = {"L": 4.0, "ns": 8, "nt": 32}


@pytest.mark.parametrize("domain", ["strip", "circle"])
def test_reference_has_index_zero(domain):
    A = reference_operator(1, domain)
    assert cz_index(A) == 0
    assert cz_index_direct(A, **SMALL) == 0


def _band_theta(k, frac):
    return np.pi * (k + 0.1 + 0.8 * frac)


@settings(max_examples=6, deadline=None)
@given(st.integers(-2, 2), st.floats(0, 1))
def test_strip_constant_shift_counts_crossed_eigenvalues(k, frac):
    # S = theta I has eigenvalues pi j - theta; each multiple of pi passed adds one
    theta = _band_theta(k, frac)
    A = make_operator(1, "strip", theta * np.eye(2))
    assert cz_index(A) == k
    assert cz_index_direct(A, refine=False, **SMALL) == k


@pytest.mark.parametrize("theta", [-4.0, 2.0, 8.0])
def test_circle_constant_shift_moves_in_steps_of_two(theta):
    A = make_operator(1, "circle", theta * np.eye(2))
    flow = cz_index(A)
    assert flow == cz_index_direct(A, refine=False, **SMALL)
    below = make_operator(1, "circle", (theta - 2 * np.pi) * np.eye(2))
    assert flow - cz_index(below) == 2


def test_profile_choice_does_not_matter():
    rng = np.random.default_rng(8)
    A = random_operator(rng, 1, "strip")
    assert cz_index(A) == cz_index(A, profile="smootherstep") == cz_index(A, profile=smootherstep)


def test_crossings_are_recorded_with_direction():
    A = make_operator(1, "strip", 3.5 * np.eye(2))
    rec = spectral_flow(OperatorPath(reference_operator(1, "strip"), A))
    assert rec.net == sum(c["direction"] for c in rec.crossings)
    assert rec.min_abs_eigenvalue > 0


def test_degenerate_endpoint_is_refused():
    with pytest.raises(EndpointDegenerate):
        cz_index(make_operator(1, "strip", np.pi * np.eye(2)))


def test_profile_validation():
    with pytest.raises(ValidationError):
        OperatorPath(reference_operator(), reference_operator(), lambda s: np.asarray(s) * 0.5)
    with pytest.raises(ValidationError):
        cz_index(reference_operator(), profile="linear")


def test_parity_shift_values():
    assert parity_shift(diagonal_phase_path([1]), "strip") == 1
    assert parity_shift(diagonal_phase_path([2]), "strip") == 0
    assert parity_shift(diagonal_phase_path([1], full=True), "circle") == 0


def test_half_rotation_of_reference_changes_index_by_one():
    A = reference_operator(1, "strip")
    B = conjugate_operator(A, diagonal_phase_path([1]))
    assert cz_index(B) == cz_index_direct(B, **SMALL) == -1
