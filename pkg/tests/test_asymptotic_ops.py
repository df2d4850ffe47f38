import numpy as np
import pytest

from crindex.asymptotic_ops import (
    BadDimensions,
    BoundaryConditionViolated,
    NotSymmetric,
    conjugate_operator,
    diagonal_phase_path,
    extrapolated_eigenvalues,
    is_nondegenerate,
    make_operator,
    random_operator,
    random_unitary_path,
    reference_operator,
    relative_residual,
    solve_asymptotic,
    spectrum,
)
from crindex.numerics import ValidationError


def test_strip_constant_spectrum_is_shifted_integers():
    theta = 0.7
    A = make_operator(1, "strip", theta * np.eye(2))
    lam = extrapolated_eigenvalues(A, 5, 128)
    expected = np.sort([np.pi * k - theta for k in range(-3, 4)])
    nearest = expected[np.argsort(np.abs(expected))[:5]]
    assert np.allclose(lam, np.sort(nearest), atol=1e-5)


def test_circle_reference_dispersion():
    sigma = 1.5
    A = reference_operator(1, "circle", sigma)
    lam = spectrum(A, 256).nearest_zero(4)
    # -i d/dt - sigma C on e^{2 pi i k t}: eigenvalues +-sqrt((2 pi k)^2 + sigma^2)
    assert np.allclose(np.sort(np.abs(lam))[:2], sigma, atol=1e-6)
    assert np.allclose(np.sort(np.abs(lam))[2:], np.hypot(2 * np.pi, sigma), rtol=1e-3)


def test_reference_is_nondegenerate_and_pi_shift_is_not():
    ok, margin = is_nondegenerate(reference_operator(1, "strip"))
    assert ok and margin == pytest.approx(1.0, abs=1e-4)
    ok, _ = is_nondegenerate(make_operator(1, "strip", np.pi * np.eye(2)))
    assert not ok


def test_make_operator_rejects_bad_input():
    with pytest.raises(ValidationError):
        make_operator(1, "strip", {"c0": np.eye(2), "bogus": []})
    with pytest.raises(NotSymmetric):
        make_operator(1, "strip", np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(BadDimensions):
        make_operator(1, "strip", np.eye(3))
    with pytest.raises(ValidationError):
        make_operator(1, "torus", np.eye(2))


def test_sampled_coefficient_matches_callable():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(4, 4))
    K = X + X.T
    f = lambda t: np.cos(np.pi * np.asarray(t))[:, None, None] * K
    ts = np.linspace(0, 1, 65)
    A1 = make_operator(2, "strip", f)
    A2 = make_operator(2, "strip", f(ts))
    tq = np.linspace(0, 1, 17)
    assert np.allclose(A1.coeff(tq), A2.coeff(tq), atol=1e-5)


@pytest.mark.parametrize("domain", ["strip", "circle"])
@pytest.mark.parametrize("n", [1, 2])
def test_solve_asymptotic_residual(domain, n):
    rng = np.random.default_rng(10 + n)
    A = random_operator(rng, n, domain)
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    eta = lambda t: np.cos(2 * np.pi * np.asarray(t))[:, None] * c
    t, xi = solve_asymptotic(A, eta)
    assert relative_residual(A, t, xi, eta(t)) <= 1e-6
    if domain == "strip":
        assert np.allclose(xi[0].imag, 0, atol=1e-10) and np.allclose(xi[-1].imag, 0, atol=1e-8)
    else:
        assert np.allclose(xi[0], xi[-1], atol=1e-8)


@pytest.mark.parametrize("domain", ["strip", "circle"])
def test_conjugation_preserves_spectrum(domain):
    rng = np.random.default_rng(5)
    A = random_operator(rng, 1, domain)
    B = conjugate_operator(A, random_unitary_path(rng, 1, domain))
    # the conjugated coefficient oscillates more, so raw spectra differ by O(h^2)
    diffs = [np.max(np.abs(spectrum(A, nt).nearest_zero(6) - spectrum(B, nt).nearest_zero(6)))
             for nt in (128, 256)]
    assert diffs[1] < diffs[0] / 3.5
    a = extrapolated_eigenvalues(A, 6, 256)
    b = extrapolated_eigenvalues(B, 6, 256)
    assert np.allclose(a, b, atol=1e-6 * np.max(np.abs(a)))


def test_strip_path_must_preserve_real_line_at_ends():
    bad = diagonal_phase_path([0.5])      # ends at e^{i pi / 2}
    with pytest.raises(BoundaryConditionViolated):
        conjugate_operator(reference_operator(1, "strip"), bad)
