import pytest
from flint import fmpq_mat
from hypothesis import given, settings
from hypothesis import strategies as st

from strictify.bar_kan import DerivedObject
from strictify.chain_core import ChainComplex, GradedMap
from strictify.exact_algebra import dense
from strictify.generators import generate_diagram, identity_diagram
from strictify.harness import corrupt_xi
from strictify.poisson import (
    DerivedPoisson,
    PoissonComplex,
    PoissonError,
    PoissonRceDiagram,
    graded_antisymmetry_defect,
    one_term_consistency_defect,
    pairing_defects,
    pullback_form,
    verify_rho,
    verify_tau_L,
)
from strictify.site import EDGES, SpiralEdge, SpiralNode
from strictify.zigzag import ZigzagContext

seeds = st.integers(0, 10 ** 6)
SYMPLECTIC = dense([[0, 1], [-1, 0]])


def test_pairing_defects_examples():
    V = ChainComplex({0: ["a", "b"]})
    assert pairing_defects(V, SYMPLECTIC) == []
    assert "not graded antisymmetric" in pairing_defects(V, dense([[0, 1], [1, 0]]))[0]
    W = ChainComplex({0: ["a"], 1: ["b"]}, {1: dense([[0]])})
    assert "pairs degrees" in pairing_defects(W, dense([[0, 1], [1, 0]]))[0]
    # d b = a, so tau(d b, a') = tau(a, a') must vanish for a chain map
    U = ChainComplex({0: ["a", "a2"], 1: ["b"]}, {1: dense([[1], [0]])})
    P = fmpq_mat(3, 3)
    P[0, 1], P[1, 0] = 1, -1
    assert pairing_defects(U, P) == ["pairing is not a chain map"]
    with pytest.raises(PoissonError):
        PoissonComplex(U, P)


def test_odd_pairing_is_symmetric():
    # degrees 1 and -1: tau(x, y) = -(-1)^{-1} tau(y, x) = tau(y, x)
    V = ChainComplex({-1: ["c"], 1: ["b"]})
    assert pairing_defects(V, dense([[0, 1], [1, 0]])) == []
    assert pairing_defects(V, dense([[0, 1], [-1, 0]])) != []


def test_wedge_functional():
    pc = PoissonComplex(ChainComplex({0: ["a", "b"]}), SYMPLECTIC)
    w = pc.wedge_functional()
    assert w.matrix.nrows() == 1


def test_pullback_and_preservation():
    V = ChainComplex({0: ["a", "b"]})
    scale = GradedMap(V, V, 0, dense([[2, 0], [0, 1]]))
    assert pullback_form(scale, SYMPLECTIC) == dense([[0, 2], [-2, 0]])
    D = identity_diagram(V, SYMPLECTIC)
    assert all(D.preserves(f) for f in EDGES)
    maps = dict(D.diagram.maps)
    from strictify.site import Mor, RceDiagram
    maps[Mor.JP] = scale
    with pytest.raises(PoissonError, match="does not preserve"):
        PoissonRceDiagram(RceDiagram(D.diagram.objects, maps), D.forms)


def test_identity_diagram_tau_L_is_constant():
    V = ChainComplex({0: ["a", "b"]})
    P = identity_diagram(V, SYMPLECTIC)
    tau = DerivedPoisson(ZigzagContext(P.diagram), P.forms)
    for a in range(-6, 6):
        for b in range(-6, 6):
            assert tau.block(SpiralNode.at(a), SpiralNode.at(b)) == SYMPLECTIC
            assert tau.block(SpiralEdge.at(a), SpiralNode.at(b)) == fmpq_mat(2, 2)


@given(seeds, st.integers(-6, 6), st.integers(-6, 6))
@settings(max_examples=20)
def test_node_block_matches_symmetrized_transport(seed, a, b):
    P = generate_diagram(seed % 300)
    zz = ZigzagContext(P.diagram)
    u, v = SpiralNode.at(a), SpiralNode.at(b)
    direct = (P.forms[u.obj] * zz.z_matrix(v, u) + zz.z_matrix(u, v).transpose() * P.forms[v.obj]) / 2
    assert DerivedPoisson(zz, P.forms).block(u, v) == direct


def test_tau_L_on_seeds():
    for seed in range(4):
        P = generate_diagram(seed)
        zz = ZigzagContext(P.diagram)
        report = verify_tau_L(zz, P.forms, 2)
        assert report.passed, report.witness
        X = DerivedObject(P.diagram, 2)
        T = DerivedPoisson(zz, P.forms).form(X.order)
        assert graded_antisymmetry_defect(X, T).is_zero()
        assert one_term_consistency_defect(zz, P.forms, 1).is_zero()


def test_rho_on_seeds():
    for seed in range(4):
        P = generate_diagram(seed)
        report = verify_rho(ZigzagContext(P.diagram), P.forms)
        assert report.passed, report.witness


def test_corrupted_xi_breaks_tau_L():
    P = generate_diagram(0)
    zz = corrupt_xi(ZigzagContext(P.diagram))
    report = verify_tau_L(zz, P.forms, 2)
    assert not report.passed
    assert report.witness is not None
