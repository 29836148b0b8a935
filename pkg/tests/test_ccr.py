from flint import fmpq
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strictify.ccr import (
    CapOverflow,
    CcrConfig,
    CcrElement,
    CcrMorphism,
    PoissonViolation,
    graded_commutator,
    parse_element,
)
from strictify.harness import Context, Scenario, check_ccr


def weyl(cap=8, lambda_q=1):
    tau = {("q", "p"): 1, ("p", "q"): -1}
    return CcrConfig(lambda s: 0, lambda a, b: tau.get((a, b), 0), lambda s: {},
                     order_key=lambda s: "qp".index(s), lambda_q=lambda_q, cap=cap)


def act(word, poly):
    """q acts by x and p by -d/dx on polynomials {exponent: coeff}; the rightmost letter acts first."""
    for s in reversed(word):
        out = {}
        for k, c in poly.items():
            if s == "q":
                out[k + 1] = out.get(k + 1, 0) + c
            elif k:
                out[k - 1] = out.get(k - 1, 0) - k * c
        poly = {k: c for k, c in out.items() if c}
    return poly


def act_element(a, poly):
    out = {}
    for w, c in a.terms.items():
        for k, v in act(w, poly).items():
            out[k] = out.get(k, 0) + c * v
    return {k: v for k, v in out.items() if v}


def test_weyl_examples():
    cfg = weyl()
    q, p = CcrElement.generator(cfg, "q"), CcrElement.generator(cfg, "p")
    assert p * q == q * p - CcrElement.unit(cfg)
    assert p * q * q == CcrElement.word(cfg, "qqp") - q.scaled(2)
    assert graded_commutator(q, p, 0, 0) == CcrElement.unit(cfg)


words = st.lists(st.sampled_from("qp"), max_size=4).map(tuple)


@given(words, words, st.integers(0, 4))
def test_weyl_against_differential_operators(w1, w2, k):
    cfg = weyl()
    a, b = CcrElement.word(cfg, w1), CcrElement.word(cfg, w2)
    poly = {k: 1}
    assert act_element(a * b, poly) == act(w1 + w2, poly)
    assert all(cfg.is_normal(w) for w in (a * b).terms)


@given(words, words, words)
def test_associativity(w1, w2, w3):
    cfg = weyl(cap=12)
    a, b, c = (CcrElement.word(cfg, w) for w in (w1, w2, w3))
    assert (a * b) * c == a * (b * c)


def test_planck_constant_scales_the_relation():
    cfg = weyl(lambda_q=fmpq(1, 3))
    q, p = CcrElement.generator(cfg, "q"), CcrElement.generator(cfg, "p")
    assert q * p - p * q == CcrElement.unit(cfg).scaled(fmpq(1, 3))


def clifford():
    # b in degree 1, c in degree -1, tau(b, c) = tau(c, b) = 1, d c = 0, d b = 0
    deg = {"b": 1, "c": -1}
    return CcrConfig(deg.get, lambda a, b: 1 if a != b else 0, lambda s: {})


def test_odd_generators():
    cfg = clifford()
    b, c = CcrElement.generator(cfg, "b"), CcrElement.generator(cfg, "c")
    assert (b * b).is_zero()
    assert b * c + c * b == CcrElement.unit(cfg)
    assert graded_commutator(b, c, 1, -1) == CcrElement.unit(cfg)


def test_differential_is_a_derivation():
    # a dg example: d e = f with e in degree 1, f in degree 0, tau(e, .) = 0
    deg = {"f": 0, "e": 1}
    cfg = CcrConfig(deg.get, lambda a, b: 0, lambda s: {"f": 1} if s == "e" else {})
    e, f = CcrElement.generator(cfg, "e"), CcrElement.generator(cfg, "f")
    assert (e * f).d() == f * f
    assert (f * e).d() == f * f
    assert (e * e).is_zero()
    assert (e * f).d().d().is_zero()


def test_cap():
    cfg = weyl(cap=3)
    with pytest.raises(CapOverflow):
        CcrElement.word(cfg, "qqpq")
    with pytest.raises(ValueError):
        weyl(cap=1)


def test_morphisms():
    cfg = weyl()
    symplectic = CcrMorphism(cfg, cfg, lambda s: {"q": 2} if s == "q" else {"p": fmpq(1, 2)}, ["q", "p"])
    a = CcrElement.word(cfg, "pq")
    assert symplectic(a) == CcrElement.word(cfg, "pq")
    with pytest.raises(PoissonViolation):
        CcrMorphism(cfg, cfg, lambda s: {s: 2}, ["q", "p"])


def test_dump_round_trip():
    cfg = weyl()
    a = CcrElement.word(cfg, "ppq") + CcrElement.word(cfg, "q").scaled(fmpq(-2, 3))
    assert parse_element(cfg, a.dumps(), {"q": "q", "p": "p"}) == a


def test_derived_ccr_algebra():
    scenario = Scenario(seeds=1, ccr_samples=20, ccr_cap=4)
    out = check_ccr(Context(scenario))
    assert out.passed, out.witness
