import itertools

import numpy as np
import pytest

from crindex.asymptotic_ops import (
    conjugate_operator,
    make_operator,
    random_operator,
    random_unitary_path,
    reference_operator,
)
from crindex.cz_flow import parity_shift
from crindex.surface import (
    DegenerateAsymptotics,
    EndKindMismatch,
    SurfaceSpec,
    TransitionData,
    assemble_index,
    canonical_zero_sets,
    classify_boundary_zero,
    count_zero_set,
    det_squared_winding,
    euler_by_doubling,
    euler_characteristic,
    maslov_from_transitions,
    named_transition,
    reference_ends,
    sweep_surfaces,
    zero_datum,
)


@pytest.mark.parametrize("signs,value", [("+--", -1), ("++--", -1), ("++-", 0)])
def test_worked_disks(signs, value):
    S = SurfaceSpec.disk(signs)
    assert euler_characteristic(S) == euler_by_doubling(S) == value


def test_boundary_zero_counts():
    assert [classify_boundary_zero(a, c).count for a, c in
            [("+", "+"), ("+", "-"), ("-", "+"), ("-", "-")]] == [1, 0, 0, -1]


def test_count_examples():
    assert count_zero_set([]) == 0
    assert count_zero_set([zero_datum("interior+"), zero_datum("(-,-)")]) == 0
    first, _ = canonical_zero_sets(SurfaceSpec.disk("+--"))
    assert count_zero_set(first) == -1


@pytest.mark.parametrize("g,k", [(0, 0), (1, 0), (2, 3), (3, 1)])
def test_closed_surfaces(g, k):
    assert euler_characteristic(SurfaceSpec.closed(g, k)) == 2 - 2 * g - k


def test_sweep_against_oracles():
    n = 0
    for S in sweep_surfaces(1, 2, 3, 1):
        a, b = canonical_zero_sets(S)
        X = euler_characteristic(S)
        assert X == euler_by_doubling(S) == count_zero_set(a) == count_zero_set(b)
        assert a != b
        n += 1
    assert n > 500


def test_cyclic_arrangement_does_not_matter():
    signs = (1, 1, -1, -1)
    values = {euler_characteristic(SurfaceSpec(1, (p, (1,)), 1, 0)) for p in itertools.permutations(signs)}
    assert len(values) == 1


def test_named_canonical_examples():
    for S, value in [(SurfaceSpec.disk("+-"), 0), (SurfaceSpec.closed(1, 0), 0)]:
        a, b = canonical_zero_sets(S)
        assert count_zero_set(a) == count_zero_set(b) == value


def test_maslov_examples():
    assert maslov_from_transitions(TransitionData(1, {"e": named_transition("half_rotation_0")})) == 0
    assert abs(maslov_from_transitions(TransitionData(1, {"e": named_transition("half_rotation_1")}))) == 1
    loop = maslov_from_transitions(TransitionData(1, {"e": named_transition("full_loop_1")}))
    assert loop % 2 == 0 and loop != 0


def test_maslov_parity_matches_parity_shift():
    rng = np.random.default_rng(3)
    for _ in range(6):
        Om = random_unitary_path(rng, 2, "strip")
        assert det_squared_winding(Om, "strip") % 2 == parity_shift(Om, "strip")


def test_strip_with_reference_ends():
    S = SurfaceSpec.disk("+-")
    rep = assemble_index(S, 1, None, reference_ends(S))
    assert (rep.assembled, rep.numerical, rep.agreement) == (0, 0, True)


def test_disk_with_three_punctures():
    S = SurfaceSpec.disk("+--")
    rep = assemble_index(S, 1, None, reference_ends(S))
    assert rep.assembled == -1 and rep.numerical is None


@pytest.mark.parametrize("shape,domain", [("strip", "strip"), ("cylinder", "circle")])
def test_bookkeeping_invariance(shape, domain):
    # a trivialization change counted as a Maslov term or absorbed into the end operator
    rng = np.random.default_rng(21 if domain == "strip" else 22)
    S = SurfaceSpec.disk("+-") if shape == "strip" else SurfaceSpec(0, (), 1, 1)
    plus = S.ends()[0][0]
    for _ in range(2):
        ends = {name: random_operator(rng, 1, kind) for name, _, kind in S.ends()}
        Om = random_unitary_path(rng, 1, domain)
        via_maslov = assemble_index(S, 1, TransitionData(1, {plus: Om}), ends)
        moved = dict(ends)
        moved[plus] = conjugate_operator(ends[plus], Om)
        via_cz = assemble_index(S, 1, None, moved)
        assert via_maslov.assembled == via_cz.assembled
        assert via_maslov.agreement and via_cz.agreement


def test_end_kind_and_degeneracy_errors():
    S = SurfaceSpec.disk("+-")
    ends = reference_ends(S)
    ends["b0.0"] = reference_operator(1, "circle")
    with pytest.raises(EndKindMismatch):
        assemble_index(S, 1, None, ends)
    ends = reference_ends(S)
    ends["b0.1"] = make_operator(1, "strip", np.zeros((2, 2)))
    with pytest.raises(DegenerateAsymptotics):
        assemble_index(S, 1, None, ends)


def test_from_dict_rejects_unknown_fields():
    with pytest.raises(Exception):
        SurfaceSpec.from_dict({"genus": 0, "holes": 2})
    S = SurfaceSpec.from_dict({"genus": 1, "boundary": [["+", "-"]], "interior": {"plus": 1, "minus": 0}})
    assert euler_characteristic(S) == 2 - 2 - 1 - 1 - 1
