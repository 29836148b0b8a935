import random

import pytest
from flint import fmpq_mat
from hypothesis import given
from hypothesis import strategies as st

from strictify.bicomplex import Bicomplex, bicomplex_tensor, tot_oplus, tot_tensor_comparison
from strictify.chain_core import ChainComplexError, homology_dims, is_acyclic, is_chain_map
from strictify.exact_algebra import dense, identity, is_zero, rank
from strictify.generators import random_invertible, random_scalar


def random_bicomplex(seed: int, prefix: str) -> Bicomplex:
    """Tot of a random valid bicomplex: a square of two-term complexes joined by an iso, then twisted.

    Built as the tensor product of two random two-term complexes, which is
    always a valid bicomplex, with extra isolated cells.
    """
    rng = random.Random(seed)
    a = rng.randint(1, 2)
    row = Bicomplex({(0, 0): [f"{prefix}x{i}" for i in range(a)], (1, 0): [f"{prefix}y{i}" for i in range(a)]},
                    {(1, 0): random_invertible(rng, a) if rng.random() < 0.5 else fmpq_mat(a, a)})
    col = Bicomplex({(0, 0): [f"{prefix}u"], (0, 1): [f"{prefix}w"]},
                    horizontal={(0, 1): dense([[random_scalar(rng)]])})
    return bicomplex_tensor(row, col)


def test_single_cell():
    B = Bicomplex({(0, 0): ["a", "b"]})
    T = tot_oplus(B)
    assert T.degrees == (0,) and T.dim(0) == 2


def test_two_rows_joined_by_identity_is_acyclic():
    B = Bicomplex({(0, 0): ["a"], (1, 0): ["b"]}, {(1, 0): identity(1)})
    assert is_acyclic(tot_oplus(B))


def test_validation_rejects_commuting_squares():
    basis = {(0, 0): ["a"], (1, 0): ["b"], (0, 1): ["c"], (1, 1): ["e"]}
    vert = {(1, 0): identity(1), (1, 1): identity(1)}
    horiz = {(0, 1): identity(1), (1, 1): identity(1)}
    with pytest.raises(ChainComplexError, match="delta d"):
        Bicomplex(basis, vert, horiz)
    horiz[(1, 1)] = -identity(1)
    Bicomplex(basis, vert, horiz)


@given(st.integers(0, 10 ** 6))
def test_total_homology_matches_assembled_matrices(seed):
    B = random_bicomplex(seed, "")
    T = tot_oplus(B)
    d = T.global_d()
    assert is_zero(d * d)
    # independent count: total dimension minus twice the rank of the assembled d
    assert sum(homology_dims(T).values()) == T.total_dim - 2 * rank(d)


def test_unit_tensor():
    unit = Bicomplex({(0, 0): ["1"]})
    B = random_bicomplex(5, "")
    UB = bicomplex_tensor(unit, B)
    assert [UB.dim(c) for c in UB.cells] == [B.dim(c) for c in B.cells]
    assert tot_oplus(UB).global_d() == tot_oplus(B).global_d()


def test_one_cell_product():
    A = Bicomplex({(0, 1): ["a"]})
    C = Bicomplex({(1, 0): ["c"]})
    P = bicomplex_tensor(A, C)
    assert P.cells == ((1, 1),)


@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_tot_is_strong_monoidal(s1, s2):
    B1, B2 = random_bicomplex(s1, "p"), random_bicomplex(s2, "q")
    comp = tot_tensor_comparison(B1, B2)
    assert is_chain_map(comp)
    assert comp.matrix.rank() == comp.matrix.nrows() == comp.matrix.ncols()
