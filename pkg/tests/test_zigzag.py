from hypothesis import given, settings
from hypothesis import strategies as st

from strictify.chain_core import ChainComplex
from strictify.exact_algebra import dense, identity
from strictify.generators import generate_diagram, identity_diagram
from strictify.harness import corrupt_theta, verify_theta, verify_zigzag
from strictify.site import ALONG, Mor, Obj, SpiralEdge, SpiralNode, spiral_path
from strictify.zigzag import AlignmentCase, ZigzagContext, classify

seeds = st.integers(0, 10 ** 6)
coords = st.integers(-9, 9)


def test_classify_examples():
    im0 = SpiralEdge(0, Mor.IM)  # (1, M-) -> (0, M)
    assert classify(im0, SpiralNode(1, Obj.M)) is AlignmentCase.A1
    assert classify(im0, SpiralNode(-1, Obj.M)) is AlignmentCase.A2
    assert classify(SpiralNode(1, Obj.M), im0) is AlignmentCase.B2
    assert classify(SpiralNode(-1, Obj.M), im0) is AlignmentCase.B1
    ip, jp, jm = SpiralEdge(0, Mor.IP), SpiralEdge(0, Mor.JP), SpiralEdge(0, Mor.JM)
    assert classify(ip, jm) is AlignmentCase.C1
    assert classify(ip, jp) is AlignmentCase.C2
    assert classify(im0, ip) is AlignmentCase.C3
    assert classify(jm, ip) is AlignmentCase.C4
    assert classify(ip, ip) is AlignmentCase.C5


@given(coords, coords, st.integers(-3, 3))
def test_classify_is_shift_invariant(a, b, k):
    e, f = SpiralEdge.at(a), SpiralEdge.at(b)
    v = SpiralNode.at(b)
    assert classify(e, f) is classify(e.shifted(k), f.shifted(k))
    assert classify(e, v) is classify(e.shifted(k), v.shifted(k))


def test_identity_diagram_has_trivial_zigzags():
    V = ChainComplex({0: ["a"], 1: ["b"]}, {1: dense([[0]])})
    zz = ZigzagContext(identity_diagram(V).diagram)
    for a in range(-5, 5):
        for b in range(-5, 5):
            assert zz.z_matrix(SpiralNode.at(a), SpiralNode.at(b)) == identity(2)
    assert verify_zigzag(zz, 1).passed


@given(seeds, coords, coords, coords)
@settings(max_examples=20)
def test_z_composes_along_the_path(seed, a, b, c):
    zz = ZigzagContext(generate_diagram(seed % 200).diagram)
    lo, mid, hi = sorted((a, b, c))
    u, v, w = SpiralNode.at(lo), SpiralNode.at(mid), SpiralNode.at(hi)
    assert zz.z_matrix(u, w) == zz.z_matrix(v, w) * zz.z_matrix(u, v)
    assert zz.z_matrix(w, u) == zz.z_matrix(v, u) * zz.z_matrix(w, v)
    assert zz.z_matrix(u, u) == identity(zz.space(u).total_dim)


@given(seeds, coords, coords)
@settings(max_examples=20)
def test_z_matches_a_direct_product(seed, a, b):
    zz = ZigzagContext(generate_diagram(seed % 200).diagram)
    src, dst = SpiralNode.at(a), SpiralNode.at(b)
    m = identity(zz.space(src).total_dim)
    for edge, direction in spiral_path(src, dst):
        data = zz.data[edge.mor]
        m = (data.f.matrix if direction == ALONG else data.f_inv.matrix) * m
    assert zz.uncached().z_matrix(src, dst) == m


def test_homotopies_on_seeds():
    for seed in range(3):
        zz = ZigzagContext(generate_diagram(seed).diagram)
        out = verify_zigzag(zz, 1)
        assert out.passed, out.witness
        assert verify_theta(zz).passed


def test_corrupted_theta_is_detected():
    zz = ZigzagContext(generate_diagram(0).diagram)
    out = verify_theta(zz, corrupt_theta(zz))
    assert not out.passed
    assert "d(theta)" in out.witness
