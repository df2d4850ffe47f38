import numpy as np
import pytest

from crindex.asymptotic_ops import make_operator, random_operator, reference_operator
from crindex.cz_flow import cz_index, interpolation_problem
from crindex.strip_operator import (
    EndMismatch,
    SupportTooWide,
    adjoint,
    box_solve,
    decay_rates,
    discretize_cr,
    fredholm_index,
    glue,
    solve_translation_invariant,
    translation_invariant,
)


@pytest.mark.parametrize("domain", ["strip", "circle"])
def test_translation_invariant_reference_is_invertible(domain):
    op = discretize_cr(translation_invariant(reference_operator(1, domain), 4.0), ns=8, nt=32)
    comp = fredholm_index(op)
    assert (comp.kernel, comp.cokernel, comp.index) == (0, 0, 0)
    assert comp.refined_index == 0


def test_expected_index_from_end_dimensions():
    A = make_operator(1, "strip", 3.5 * np.eye(2))
    op = discretize_cr(interpolation_problem(reference_operator(1, "strip"), A), ns=8, nt=32)
    assert op.expected_index == fredholm_index(op, refine=False).index == cz_index(A)


def test_adjoint_swaps_kernel_and_cokernel():
    A = make_operator(1, "strip", -3.5 * np.eye(2))
    op = discretize_cr(interpolation_problem(reference_operator(1, "strip"), A), ns=8, nt=32)
    a = fredholm_index(op, refine=False)
    b = fredholm_index(adjoint(op), refine=False)
    assert (a.kernel, a.cokernel) == (b.cokernel, b.kernel)


def test_glue_requires_matching_ends():
    r = reference_operator(1, "strip")
    other = make_operator(1, "strip", 2.0 * np.eye(2))
    with pytest.raises(EndMismatch):
        glue(interpolation_problem(r, r), interpolation_problem(other, r), 4.0)


def _source(c):
    return lambda s, t: (np.exp(-s * s) * (c[0] + c[1] * np.cos(np.pi * np.asarray(t))))[:, None]


@pytest.mark.parametrize("domain", ["strip", "circle"])
def test_modal_solution_matches_box_scheme(domain):
    rng = np.random.default_rng(11)
    A = random_operator(rng, 1, domain)
    eta = _source(rng.normal(size=2) + 1j * rng.normal(size=2))
    sol = solve_translation_invariant(A, eta, L=10.0, ns=32, nt=32)
    assert sol.residual <= 1e-5
    s, u = box_solve(A, eta, L=10.0, ns=32, nt=32)
    s2, u2 = box_solve(A, eta, L=10.0, ns=64, nt=32)
    box = (4 * u2[::2] - u) / 3          # second order in s, so extrapolate
    assert np.allclose(s, sol.s)
    assert np.max(np.abs(box - sol.u)) <= 1e-3 * np.max(np.abs(sol.u))


def test_decay_rates_follow_the_spectral_gap():
    rng = np.random.default_rng(12)
    A = random_operator(rng, 1, "strip")
    sol = solve_translation_invariant(A, _source([1.0, 0.5j]), L=12.0, ns=32, nt=64)
    lam = sol.eigenvalues
    up, down = decay_rates(sol.s, sol.u, [(4.0, 9.0), (-9.0, -4.0)])
    assert up == pytest.approx(lam[lam < 0].max(), rel=0.05)
    assert down == pytest.approx(lam[lam > 0].min(), rel=0.05)


def test_source_must_fit_inside_the_window():
    with pytest.raises(SupportTooWide):
        solve_translation_invariant(reference_operator(), lambda s, t: np.ones((np.size(t), 1)), L=6.0)
