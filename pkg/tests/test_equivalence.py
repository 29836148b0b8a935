import random

import pytest
from flint import fmpq
from hypothesis import given
from hypothesis import strategies as st

from strictify.chain_core import ChainComplex, GradedMap, ground_field, homology_dims, identity_map, zero_map
from strictify.equivalence import (
    NotQuasiIsomorphism,
    build_equivalence,
    equivalence_defects,
    graded_mask,
    verify_equivalence,
)
from strictify.exact_algebra import dense
from strictify.generators import random_quasi_iso


def test_identity_gives_trivial_data():
    V = ChainComplex({0: ["a"], 1: ["b", "c"]}, {1: dense([[1, 0]])})
    e = build_equivalence(identity_map(V))
    assert e.method == "identity"
    assert e.f_inv.matrix == e.f.matrix
    assert e.lam.is_zero() and e.gamma.is_zero() and e.xi.is_zero()


def test_scalar_multiple():
    V = ground_field(0)
    e = build_equivalence(GradedMap(V, V, 0, dense([[2]])))
    assert e.f_inv.matrix == dense([[fmpq(1, 2)]])
    assert verify_equivalence(e)


def test_inclusion_into_cone_of_identity_plus_point():
    # V = k in degree 0, W = k in degree 0 plus an acyclic pair in degrees 1, 0
    V = ChainComplex({0: ["v"]})
    W = ChainComplex({0: ["w", "a"], 1: ["b"]}, {1: dense([[0], [1]])})
    f = GradedMap(V, W, 0, dense([[1], [0], [0]]))
    e = build_equivalence(f)
    assert verify_equivalence(e)
    # g must kill the acyclic part in homology; on w it is the inverse of f
    assert e.f_inv.matrix[0, 0] == 1


def test_rejects_non_quasi_iso():
    V = ground_field(0)
    with pytest.raises(NotQuasiIsomorphism):
        build_equivalence(zero_map(V, V))
    W = ChainComplex({0: ["x"], 1: ["y"]}, {1: dense([[1]])})
    with pytest.raises(NotQuasiIsomorphism):
        build_equivalence(zero_map(W, V))


def test_rejects_non_chain_map():
    V = ChainComplex({0: ["x"], 1: ["y"]}, {1: dense([[1]])})
    bad = GradedMap(V, V, 0, dense([[1, 0], [0, 0]]), check=False)
    with pytest.raises(NotQuasiIsomorphism, match="chain map"):
        build_equivalence(bad)


@given(st.integers(0, 10 ** 6))
def test_random_quasi_isos(seed):
    f = random_quasi_iso(seed)
    nonzero = lambda h: {k: v for k, v in h.items() if v}
    assert nonzero(homology_dims(f.source)) == nonzero(homology_dims(f.target))
    e = build_equivalence(f)
    for name, defect in equivalence_defects(e).items():
        assert defect.is_zero(), name
    assert e.f_inv.shift == 0 and e.lam.shift == 1 and e.gamma.shift == 1 and e.xi.shift == 2


def test_staged_solve_suffices_on_generated_maps():
    methods = {build_equivalence(random_quasi_iso(seed)).method for seed in range(50)}
    assert methods == {"staged"}


def test_graded_mask_respects_degrees():
    rng = random.Random(3)
    f = random_quasi_iso(rng.randint(0, 100))
    V, W = f.source, f.target
    for shift in (0, 1, 2):
        for i, j in graded_mask(V, W, shift):
            assert W.global_degrees[i] == V.global_degrees[j] + shift
