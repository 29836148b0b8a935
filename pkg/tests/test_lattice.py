import dataclasses

import pytest
from flint import fmpq
from hypothesis import given, settings
from hypothesis import strategies as st

from strictify.exact_algebra import DualScalar, is_zero
from strictify.lattice_ym import (
    LatticeError,
    LatticeSpacetime,
    Perturbation,
    build_regions,
    compatibility_defect,
    density,
    explicit_zigzag,
    field_strength_value,
    geometric_equivalence,
    ghost_antifield_leak,
    green_commutation_defects,
    green_homotopy_defects,
    green_support_violations,
    non_preservation_witness,
    polarized_stress,
    psi_correction,
    rce_lin_plus,
    rce_lin_plus_unsimplified,
    rce_pairing_slope,
    region_defects,
    stress_derivative,
    winding_field,
)
from strictify.site import EDGES, Mor, Obj

from conftest import SMALL_H

T, X = 10, 8


@pytest.fixture(scope="module")
def bumpy():
    """A 10 x 8 lattice with a finite perturbation at two vertices."""
    return LatticeSpacetime(T, X).perturbed(Perturbation.from_density(SMALL_H | {(4, 2): (0, fmpq(1, 4), 1)}))


def test_coboundary_squares_to_zero():
    L = LatticeSpacetime(T, X)
    assert is_zero(L.d1() * L.d0())


def test_cell_counts():
    L = LatticeSpacetime(T, X)
    assert (L.size(0), L.size(1), L.size(2)) == (T * X, (2 * T - 1) * X, (T - 1) * X)
    with pytest.raises(LatticeError):
        LatticeSpacetime(6, 8)


def test_density_from_perturbation():
    h = Perturbation.from_density({(3, 3): (fmpq(1, 4), fmpq(1, 8), fmpq(5, 4))})
    L = LatticeSpacetime(T, X).perturbed(h)
    assert density(L.g(3, 3)) == DualScalar(fmpq(5, 4))
    assert density(L.g(0, 0)) == DualScalar(1)


def test_codifferential_is_the_adjoint(bumpy):
    for p in (1, 2):
        d = bumpy.coboundary(p - 1)
        lhs = d.transpose() @ bumpy.weight(p)
        rhs = bumpy.weight(p - 1) @ bumpy.codifferential(p)
        assert lhs == rhs


def test_codifferential_is_the_adjoint_to_first_order():
    h = Perturbation.from_density(SMALL_H)
    L = LatticeSpacetime(16, 8).perturbed(h, infinitesimal=True)
    assert L.is_dual
    d = L.coboundary(0)
    assert d.transpose() @ L.weight(1) == L.weight(0) @ L.codifferential(1)
    assert (L.codifferential(1) @ L.codifferential(2)).is_zero()


def test_box_commutes_with_d_and_delta(bumpy):
    d0, delta1 = bumpy.coboundary(0), bumpy.codifferential(1)
    assert d0 @ bumpy.dalembertian(0) == bumpy.dalembertian(1) @ d0
    assert delta1 @ bumpy.dalembertian(1) == bumpy.dalembertian(0) @ delta1


def flat_recursion(t0, x0, sign):
    """u(t+s, x) = u(t, x+1) + u(t, x-1) - u(t-s, x) - f(t, x), stepping away from the source."""
    u = {(t, x): 0 for t in range(T) for x in range(X)}
    steps = range(t0, T - 1) if sign == 1 else range(t0, 0, -1)
    for t in steps:
        for x in range(X):
            f = 1 if (t, x) == (t0, x0) else 0
            back = u.get((t - sign, x), 0)
            u[(t + sign, x)] = u[(t, (x + 1) % X)] + u[(t, (x - 1) % X)] - back - f
    return u


@given(st.integers(0, T - 1), st.integers(0, X - 1), st.sampled_from([1, -1]))
@settings(max_examples=30)
def test_flat_green_operator_matches_recursion(t0, x0, sign):
    L = LatticeSpacetime(T, X)
    G = L.green(sign, 0).matrix.base
    u = flat_recursion(t0, x0, sign)
    col = L.vertex(t0, x0)
    for (t, x), v in u.items():
        assert G[L.vertex(t, x), col] == v


def test_green_operators_solve_box(bumpy):
    for sign in (1, -1):
        for p in (0, 1):
            G = bumpy.green(sign, p)
            residual = bumpy.dalembertian(p).base * G.matrix.base
            for i, j, v in _entries(residual):
                row = bumpy.slice_of(p, i)
                if row in G.exact_slices and bumpy.slice_of(p, j) in G.source_slices:
                    assert v == (1 if i == j else 0)


def _entries(m):
    for i in range(m.nrows()):
        for j in range(m.ncols()):
            yield i, j, m[i, j]


def test_green_commutation_and_support(bumpy):
    for sign in (1, -1):
        for name, defect in green_commutation_defects(bumpy, sign, (1, T - 3)).items():
            assert defect.is_zero(), name
        for p in (0, 1):
            assert green_support_violations(bumpy, sign, p) == []


def test_region_data(small_regions):
    R = small_regions
    assert region_defects(R) == []
    M = R[Obj.M]
    assert R[Obj.MH].dims == M.dims
    for N in (Obj.MP, Obj.MM):
        assert all(R[N].dims[k] < M.dims[k] for k in M.dims)
    for sign in (1, -1):
        for k, defect in green_homotopy_defects(M, sign, (1, R.flat.T - 3)).items():
            assert defect.is_zero(), k


def test_perturbation_must_sit_inside_m():
    h = Perturbation.from_density({(1, 4): (fmpq(1, 8), 0, 1)})
    with pytest.raises(LatticeError, match="interior"):
        build_regions(LatticeSpacetime(16, 8), h)


def test_geometric_equivalences(small_regions):
    for f in EDGES:
        e = geometric_equivalence(small_regions, f)
        # lambda vanishes on beta, the top degree
        assert all(m.is_zero() for (r, c), m in e.lam.blocks.items() if c == 2)


def test_rce_simplification(small_regions):
    for infinitesimal in (False, True):
        assert rce_lin_plus(small_regions, infinitesimal) == rce_lin_plus_unsimplified(small_regions, infinitesimal)


def test_zigzag_does_not_preserve_tau(small_regions):
    eqs = {f: geometric_equivalence(small_regions, f) for f in EDGES}
    witness = non_preservation_witness(small_regions, explicit_zigzag(small_regions, eqs))
    assert witness is not None and witness.startswith("tau(Z ")


def fresh(regions, h):
    """The same regions with another infinitesimal perturbation (a fresh lattice drops cached operators)."""
    return dataclasses.replace(regions, h=h, flat=LatticeSpacetime(regions.flat.T, regions.flat.X))


def test_stress_vanishes_for_zero_perturbation(small_regions):
    R0 = fresh(small_regions, Perturbation({}))
    t_op = stress_derivative(R0)
    assert t_op.is_zero()
    assert psi_correction(R0, t_op).ansatz == "zero"


def test_stress_is_linear_in_h(small_regions):
    t1 = stress_derivative(small_regions)
    t2 = stress_derivative(fresh(small_regions, small_regions.h.scaled(2)))
    assert t2 == t1.scaled(2)
    assert not t1.is_zero()


def test_corrected_stress(small_regions):
    R = small_regions
    t_op = stress_derivative(R)
    assert not compatibility_defect(R, t_op).is_zero()
    sol = psi_correction(R, t_op)
    assert sol.ansatz == "chi-local"
    assert compatibility_defect(R, sol.t_corrected).is_zero()
    assert ghost_antifield_leak(R, sol.t_corrected) is None
    lo, hi = R.cauchy[Mor.IP]
    w1, w2 = winding_field(R, lo), winding_field(R, hi)
    value = polarized_stress(R, sol.t_corrected, w1, w2)
    assert value != 0
    assert value == rce_pairing_slope(R, w1, w2)
    assert value == field_strength_value(R, w1, w2)


def test_winding_field_is_a_cycle(small_regions):
    R = small_regions
    MP = R[Obj.MP]
    w = winding_field(R, R.cauchy[Mor.IP][0])
    D = MP.d_op().matrix().base
    assert is_zero(D * w)
    assert sum(1 for i in range(w.nrows()) if w[i, 0]) == R.flat.X
