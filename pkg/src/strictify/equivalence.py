"""Quasi-inverses with homotopy coherence data, found by exact linear solves.

For a quasi-isomorphism f : V -> W we produce g = f^{-1} : W -> V and

    lam in hom(W, W)_1,  gam in hom(V, V)_1,  xi in hom(V, W)_2

with

    f g - id = d(lam),   g f - id = d(gam),   f gam - lam f = d(xi).

This is an adjoint equivalence with counit -lam and unit gam, and the third
identity is one triangle identity.  All three are affine in the unknowns, so
they are solved as one linear system per stage with lowest-index pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass

from flint import fmpq_mat

from .chain_core import (
    ChainComplex,
    GradedMap,
    hom_boundary,
    identity_map,
    is_chain_map,
    zero_map,
)
from .exact_algebra import MatrixEquations, identity


class NotQuasiIsomorphism(ValueError):
    pass


@dataclass(frozen=True)
class EquivalenceData:
    f: GradedMap
    f_inv: GradedMap
    lam: GradedMap
    gamma: GradedMap
    xi: GradedMap
    method: str = "staged"


def graded_mask(source: ChainComplex, target: ChainComplex, shift: int) -> list[tuple[int, int]]:
    """Positions of the global matrix allowed for a degree ``shift`` map."""
    sdeg = source.global_degrees
    tdeg = target.global_degrees
    by_degree: dict[int, list[int]] = {}
    for i, k in enumerate(tdeg):
        by_degree.setdefault(k, []).append(i)
    return [(i, j) for j, k in enumerate(sdeg) for i in by_degree.get(k + shift, ())]


def _is_identity(f: GradedMap) -> bool:
    return f.source.basis == f.target.basis and f.matrix == identity(f.source.total_dim)


def trivial_equivalence(f: GradedMap) -> EquivalenceData:
    """Data for an identity morphism: inverse id and vanishing homotopies."""
    V = f.source
    return EquivalenceData(f, identity_map(V), zero_map(V, V, 1), zero_map(V, V, 1),
                           zero_map(V, V, 2), method="identity")


def build_equivalence(f: GradedMap) -> EquivalenceData:
    if not is_chain_map(f):
        raise NotQuasiIsomorphism("input is not a chain map")
    if _is_identity(f):
        return trivial_equivalence(f)
    V, W = f.source, f.target
    dV, dW, F = V.global_d(), W.global_d(), f.matrix
    nV, nW = V.total_dim, W.total_dim

    first = MatrixEquations()
    first.unknown("g", nV, nW, graded_mask(W, V, 0))
    first.unknown("lam", nW, nW, graded_mask(W, W, 1))
    first.equation([(dV, "g", None), (-identity(nV), "g", dW)], fmpq_mat(nV, nW))
    first.equation([(F, "g", None), (-dW, "lam", None), (None, "lam", -dW)], identity(nW))
    sol = first.solve()
    if sol is None:
        raise NotQuasiIsomorphism("no quasi-inverse with a homotopy f g ~ id exists")
    G = sol["g"]
    lam = sol["lam"]

    second = MatrixEquations()
    second.unknown("gam", nV, nV, graded_mask(V, V, 1))
    second.unknown("xi", nW, nV, graded_mask(V, W, 2))
    second.equation([(dV, "gam", None), (None, "gam", dV)], G * F - identity(nV))
    second.equation([(F, "gam", None), (-dW, "xi", None), (None, "xi", dV)], lam * F)
    sol2 = second.solve()
    method = "staged"
    if sol2 is None:
        # Let the counit homotopy move as well; the quasi-inverse stays fixed.
        joint = MatrixEquations()
        joint.unknown("lam", nW, nW, graded_mask(W, W, 1))
        joint.unknown("gam", nV, nV, graded_mask(V, V, 1))
        joint.unknown("xi", nW, nV, graded_mask(V, W, 2))
        joint.equation([(dW, "lam", None), (None, "lam", dW)], F * G - identity(nW))
        joint.equation([(dV, "gam", None), (None, "gam", dV)], G * F - identity(nV))
        joint.equation([(F, "gam", None), (-identity(nW), "lam", F), (-dW, "xi", None), (None, "xi", dV)],
                       fmpq_mat(nW, nV))
        sol2 = joint.solve()
        if sol2 is None:
            raise NotQuasiIsomorphism("the coherence system has no solution")
        lam = sol2["lam"]
        method = "joint"
    return EquivalenceData(
        f,
        GradedMap(W, V, 0, G, check=False),
        GradedMap(W, W, 1, lam, check=False),
        GradedMap(V, V, 1, sol2["gam"], check=False),
        GradedMap(V, W, 2, sol2["xi"], check=False),
        method=method,
    )


def equivalence_defects(e: EquivalenceData) -> dict[str, GradedMap]:
    """The three differences that must vanish, keyed by a short name."""
    V, W = e.f.source, e.f.target
    return {
        "f f_inv - id - d(lam)": (e.f @ e.f_inv) - identity_map(W) - hom_boundary(e.lam),
        "f_inv f - id - d(gamma)": (e.f_inv @ e.f) - identity_map(V) - hom_boundary(e.gamma),
        "f gamma - lam f - d(xi)": (e.f @ e.gamma) - (e.lam @ e.f) - hom_boundary(e.xi),
        "f_inv chain map": hom_boundary(e.f_inv),
    }


def verify_equivalence(e: EquivalenceData) -> bool:
    return all(m.is_zero() for m in equivalence_defects(e).values())
