import random

from flint import fmpq_mat
from hypothesis import given
from hypothesis import strategies as st

from strictify.chain_core import (
    ChainComplex,
    GradedMap,
    TensorProduct,
    WedgeSquare,
    braiding,
    differential_map,
    direct_sum,
    ground_field,
    hom_boundary,
    homology_dims,
    identity_map,
    induced_homology_ranks,
    is_acyclic,
    is_chain_map,
    is_quasi_iso,
    mapping_cone,
    relabel,
    shift,
    tensor,
    tensor_maps,
    wedge_square,
    zero_complex,
    zero_map,
)
from strictify.exact_algebra import dense, identity, rank
from strictify.generators import random_quasi_iso

from conftest import complexes


def interval() -> ChainComplex:
    """K -> K with d = 1, degrees 1 -> 0."""
    return ChainComplex({0: ["a"], 1: ["b"]}, {1: dense([[1]])})


def test_hom_boundary_examples():
    V = interval()
    assert hom_boundary(identity_map(V)).is_zero()
    assert hom_boundary(differential_map(V)).is_zero()
    kappa = GradedMap(V, V, 1, dense([[0, 0], [1, 0]]))
    # direct evaluation: d kappa + kappa d on the global basis (a, b)
    d = V.global_d()
    assert hom_boundary(kappa).matrix == d * kappa.matrix + kappa.matrix * d
    assert hom_boundary(kappa).matrix == identity(2)


def test_wedge_examples():
    assert wedge_square(ground_field(0)).total_dim == 0
    W = wedge_square(ground_field(1))
    assert W.degrees == (2,) and W.dim(2) == 1


def test_wedge_dims_against_brute_force_quotient():
    V = ChainComplex({0: ["x"], 1: ["y"]})
    T = TensorProduct(V, V)
    tc = T.complex
    # relations v w + (-1)^{|v||w|} w v, one column per ordered pair
    rel = fmpq_mat(tc.total_dim, 4)
    labels = V.global_labels
    col = 0
    for a in labels:
        for b in labels:
            sign = -1 if (V.degree_of(a) * V.degree_of(b)) % 2 else 1
            rel[T.index(a, b), col] += 1
            rel[T.index(b, a), col] += sign
            col += 1
    for m in tc.degrees:
        rows = list(tc.global_slice(m))
        sub = fmpq_mat(len(rows), 4)
        for i, r in enumerate(rows):
            for j in range(4):
                sub[i, j] = rel[r, j]
        assert wedge_square(V).dim(m) == len(rows) - rank(sub)


def test_homology_examples():
    assert homology_dims(zero_complex()) == {}
    assert is_acyclic(mapping_cone(identity_map(ground_field(0))))


@given(complexes())
def test_homology_of_generated_complexes(data):
    V, shape = data
    hom = homology_dims(V)
    for k in V.degrees:
        assert hom[k] == shape.homology.get(k, 0)


def test_quasi_iso_examples():
    K = ground_field(0)
    assert is_quasi_iso(identity_map(K))
    assert not is_quasi_iso(zero_map(K, zero_complex()))
    B = ground_field(0, "h")
    C = mapping_cone(identity_map(ground_field(0, "c")))
    S = direct_sum(B, C)
    inc = fmpq_mat(S.total_dim, 1)
    inc[S.global_index("h"), 0] = 1
    assert is_quasi_iso(GradedMap(B, S, 0, inc))


def test_mapping_cone_examples():
    K = ground_field(0)
    assert is_acyclic(mapping_cone(identity_map(K)))
    cone = mapping_cone(zero_map(K, zero_complex()))
    assert homology_dims(cone) == {1: 1}


@given(st.integers(0, 10 ** 6))
def test_quasi_iso_agrees_with_induced_ranks(seed):
    f = random_quasi_iso(seed)
    assert is_chain_map(f)
    assert is_quasi_iso(f)
    hv, hw = homology_dims(f.source), homology_dims(f.target)
    ranks = induced_homology_ranks(f)
    for k in set(hv) | set(hw):
        assert ranks.get(k, 0) == hv.get(k, 0) == hw.get(k, 0)


@given(st.integers(0, 10 ** 6))
def test_cone_rank_balance(seed):
    """For a quasi-iso the cone is acyclic; for the zero map it carries H(W) + H(V)[1]."""
    f = random_quasi_iso(seed)
    V, W = f.source, f.target
    assert is_acyclic(mapping_cone(f))
    cone = homology_dims(mapping_cone(zero_map(V, W)))
    hv, hw = homology_dims(V), homology_dims(W)
    for k in cone:
        assert cone[k] == hw.get(k, 0) + hv.get(k - 1, 0)


@given(complexes(), st.integers(-3, 3))
def test_shift(data, k):
    V, _ = data
    assert shift(V, 0) == V
    assert shift(shift(V, k), -k) == V
    hv, hs = homology_dims(V), homology_dims(shift(V, k))
    assert all(hs[m + k] == hv[m] for m in hv)


@given(complexes(max_homology=1, prefix="a"), complexes(max_homology=1, prefix="b"))
def test_braiding_is_an_involutive_chain_iso(d1, d2):
    V, W = d1[0], d2[0]
    b = braiding(V, W)
    assert is_chain_map(b)
    assert (braiding(W, V) @ b).matrix == identity(tensor(V, W).total_dim)


def test_tensor_functoriality():
    rng = random.Random(3)
    for _ in range(3):
        f = random_quasi_iso(rng.randint(0, 1000))
        g = random_quasi_iso(rng.randint(0, 1000))
        f2 = identity_map(f.target)
        g2 = identity_map(g.target)
        lhs = tensor_maps(f2, g2) @ tensor_maps(f, g)
        rhs = tensor_maps(f2 @ f, g2 @ g)
        assert lhs.matrix == rhs.matrix
        assert is_chain_map(tensor_maps(f, g))


def test_wedge_projection_is_a_chain_map_with_section():
    V = relabel(interval(), "v")
    W = WedgeSquare(direct_sum(V, ground_field(1, "o")))
    assert is_chain_map(W.projection)
    assert (W.projection @ W.section).matrix == identity(W.complex.total_dim)


def test_json_round_trip():
    V = interval()
    assert ChainComplex.from_json(V.to_json()) == V
