import numpy as np
import pytest

from crindex import antilinear as al


@pytest.mark.parametrize("tag", al.TAG_ORDER)
def test_classify_zero_recovers_every_tag(tag):
    zt = al.zero_type(tag)
    assert al.classify_zero(zt.alpha, 0.0, zt.boundary) == tag


@pytest.mark.parametrize("tag", ["interior+", "interior-", "(+,+)", "(-,-)"])
def test_gaussian_solves_the_continuous_equation(tag):
    # kernel: dbar g + sigma alpha conj(g) = 0; cokernel: -d g + sigma alpha conj(g) = 0
    sigma = 2.0
    g = al.gaussian_element(tag, sigma)
    F = al.sample_field(g, False, 4.0, 801)
    zt = al.zero_type(tag)
    first = F.dbar() if g.role == "kernel" else -F.d()
    res = first + sigma * zt.alpha(F.Z) * np.conj(F.values)
    inner = slice(5, -5)
    assert np.max(np.abs(res[inner, inner])) < 1e-3 * np.max(np.abs(first))


@pytest.mark.parametrize("tag", ["(+,-)", "(-,+)"])
def test_uncounted_types_have_no_element(tag):
    with pytest.raises(al.NoElement):
        al.gaussian_element(tag)


def test_duality_swaps_kernel_and_cokernel():
    for tag in ["interior+", "(+,+)", "(+,-)"]:
        m = al.ModelOperator(tag)
        d = al.dual_model(m)
        assert al.zero_type(d.tag).count == -al.zero_type(tag).count
        assert al.dual_model(d).tag == tag
        _, a = al.model_dims(m.tag, grid=64)
        _, b = al.model_dims(d.tag, grid=64)
        assert (a.kernel, a.cokernel) == (b.cokernel, b.kernel)


def test_model_table_at_larger_sigma():
    for tag in ["interior+", "(-,-)"]:
        _, comp = al.model_dims(tag, sigma=4.0, grid=64)
        assert (comp.kernel, comp.cokernel) == al.zero_type(tag).table_dims


def test_grid_too_coarse():
    with pytest.raises(al.GridTooCoarse):
        al.local_model("interior+", grid=24)


def test_radius_must_hold_the_gaussian():
    with pytest.raises(al.ValidationError):
        al.ModelOperator("interior+", sigma=0.25, R=6.0)


@pytest.mark.parametrize("tag", al.TAG_ORDER)
def test_local_bochner_weitzenboeck(tag):
    rng = np.random.default_rng(al.TAG_ORDER.index(tag))
    zt = al.zero_type(tag)
    for _ in range(10):
        slack, rhs = al.bochner_residual(tag, al.random_test_function(rng, zt.boundary), n=321)
        assert slack >= -0.05 * rhs
        if zt.form in ("+zbar", "-zbar"):
            # for the conjugate-linear coefficients the estimate is an identity
            assert abs(slack) <= 0.05 * rhs


def test_bochner_needs_real_boundary_values():
    with pytest.raises(al.BoundaryConditionViolated):
        al.bochner_residual("(+,+)", lambda z: 1j * np.exp(-np.abs(z) ** 2))


def test_configuration_rules():
    with pytest.raises(al.ZerosTooClose):
        al.deformation_for([(0, "(-,-)"), (3, "(+,+)")])
    with pytest.raises(al.UnsupportedConfiguration):
        al.deformation_for([(0, "interior+"), (5, "interior+")])
    with pytest.raises(al.UnsupportedConfiguration):
        al.deformation_for([(3, "(-,-)"), (-3, "(+,+)")])


@pytest.mark.parametrize("zeros", [
    [(-2 + 4j, "interior+"), (2 + 4j, "interior-")],
    [(-3, "(-,-)"), (3, "(+,+)")],
    [(-3, "(+,-)"), (3, "(-,+)")],
])
def test_strip_deformation_has_the_tagged_zeros(zeros):
    d = al.deformation_for(zeros)
    for p, tag in zeros:
        assert abs(d.alpha(np.array([p]))[0]) < 1e-12
        assert al.classify_zero(d.alpha, p, al.zero_type(tag).boundary) == tag
    # alpha is 1 near both ends of the strip
    far = np.array([-d.settle - 0.5 + 1j, d.settle + 0.5 + 3j])
    assert np.allclose(d.alpha(far), 1.0)


def test_mixed_boundary_pair_has_no_kernel():
    _, comp = al.deformation_index([(-3, "(+,-)"), (3, "(-,+)")], 16.0)
    assert (comp.kernel, comp.cokernel) == (0, 0)


def test_interior_pair_separates_at_large_sigma():
    op, comp = al.deformation_index([(-2 + 4j, "interior+"), (2 + 4j, "interior-")], 16.0)
    assert (comp.kernel, comp.cokernel) == (1, 1)
    assert al.kernel_mass_fraction(op, comp.kernel_basis, 16.0) > 0.99


def test_empty_kernel_has_no_profile():
    op, comp = al.deformation_index([(0, "interior-")], 4.0)
    with pytest.raises(al.EmptyKernel):
        al.kernel_mass_fraction(op, comp.kernel_basis, 4.0)


def test_global_constant_is_bounded_by_the_derivative():
    d = al.deformation_for([(-3, "(-,-)"), (3, "(+,+)")])
    x = np.linspace(-12, 12, 241)
    y = np.linspace(0, 8, 81)
    C = al.calibrate_global_constant(d.alpha, 4.0, 8.0, 12.0, np.random.default_rng(0), count=30, n=241)
    assert 0 <= C <= al.sup_d_alpha(d.alpha, x, y)


def test_rescaling_round_trip():
    x = np.linspace(-3, 3, 301)
    v = al.Field2D(x, x, np.exp(-np.abs(x[None, :] + 1j * x[:, None] - 0.1) ** 2 * 8))
    sigma = 4.0
    w = al.rescale_in(v, sigma, 0.0, x, x)
    back = al.rescale_out(w, sigma, 0.0, x, x)
    # both cut-offs are 1 where v lives, so the round trip is the identity there
    assert np.sqrt(v.norm2(back.values - v.values)) < 2e-2 * np.sqrt(v.norm2())
    assert np.sqrt(w.norm2()) == pytest.approx(np.sqrt(v.norm2()), rel=2e-2)


@pytest.mark.parametrize("sigma", [4.0, 16.0])
def test_commutation_defect_is_bounded_by_the_cutoff_gradient(sigma):
    x = np.linspace(-6, 6, 481)
    v = al.sample_field(lambda z: np.exp(-np.abs(z - 0.3) ** 2 / 2), False, 6.0, 481)
    X = np.linspace(-1.2, 1.2, 961)
    defect, bound = al.commutation_defect(v, sigma, "interior+", X, X)
    Dv = v.dbar() - v.Z * np.conj(v.values)
    scale = np.sqrt(sigma) * np.sqrt(v.norm2(Dv))
    assert defect <= bound + 1e-2 * scale
