"""The twelve acceptance criteria, each checked exactly at the default scenario.

Each test records one PASS/FAIL line, printed in the terminal summary.  The
lattice criteria share one Context so the regions and Green operators are
built once.
"""

import time

import pytest

from strictify import harness
from strictify.site import OBJECTS

SCENARIO = harness.Scenario()


@pytest.fixture(scope="module")
def ctx():
    return harness.Context(SCENARIO)


@pytest.fixture
def record(acceptance_log, request):
    def _record(number, title, outcomes, extra=""):
        failed = [f"{name}: {o.witness}" for name, o in outcomes if not o.passed]
        status = "PASS" if not failed else "FAIL"
        line = f"{status}  criterion {number:2d}  {title}"
        if extra:
            line += f"  [{extra}]"
        if failed:
            line += "  -- " + "; ".join(failed)
        acceptance_log.append(line)
        print(line)
        assert not failed, line
    return _record


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


def test_criterion_01_square_zero(ctx, record):
    start = time.perf_counter()
    abstract = harness.check_square_zero(ctx)
    lattice = harness.check_lattice_complexes(ctx)
    elapsed = time.perf_counter() - start
    fast = harness.Outcome(elapsed < 60, None if elapsed < 60 else f"took {elapsed:.1f} s")
    dims_ok = all(max(D.diagram[N].dim(k) for k in D.diagram[N].degrees) <= 5
                  and set(D.diagram[N].degrees) <= set(range(-2, 4))
                  for D in (ctx.diagram(s) for s in SCENARIO.seed_range) for N in OBJECTS)
    record(1, "d^2 = 0 on X~, Q(X)(N) and the lattice complexes",
           [("abstract", abstract), ("lattice", lattice), ("runtime", fast),
            ("dims", harness.Outcome(dims_ok, "a generated object exceeds the size bounds"))],
           f"{elapsed:.1f} s")


def test_criterion_02_counit(ctx, record):
    record(2, "eps kappa = id, kappa eps - id = d(rho)", [("counit", harness.check_counit(ctx))])


def test_criterion_03_unit(ctx, record):
    record(3, "cokernel stages acyclic to depth 6; non-quasi-iso control detected",
           [("cokernel", harness.check_cokernel(ctx)),
            ("control", harness.check_non_quasi_iso_control(ctx))])


def test_criterion_04_equivalence_data(ctx, record):
    record(4, "equivalence identities on 50 quasi-isos; identities give zero data",
           [("equivalences", harness.check_equivalences(ctx))])


def test_criterion_05_zigzag_homotopies(ctx, record):
    assert SCENARIO.zigzag_window == 3
    record(5, "Lambda, Gamma, Xi identities for |n| <= 3 and shift invariance",
           [("zigzag", harness.check_zigzag(ctx))])


def test_criterion_06_tau_L(ctx, record):
    corrupted = harness._corrupted_xi(ctx)
    detected = harness.Outcome(not corrupted.passed and bool(corrupted.witness),
                               "corrupted Xi was not detected")
    record(6, "tau_L chain map conditions and shift invariance; corrupted Xi fails with a witness",
           [("tau_L", harness.check_tau_L(ctx)), ("corrupted Xi", detected)])


def test_criterion_07_rho(ctx, record):
    record(7, "rho_N relations and naturality for all N", [("rho", harness.check_rho(ctx))])


def test_criterion_08_ccr(ctx, record):
    assert (SCENARIO.ccr_cap, SCENARIO.ccr_samples) == (6, 200)
    record(8, "CCR associativity, commutators, d^2 = 0, Leibniz, rce automorphism",
           [("ccr", harness.check_ccr(ctx))])


def test_criterion_09_lattice_green(ctx, record):
    assert (SCENARIO.lattice.T, SCENARIO.lattice.X) == (24, 16)
    out, elapsed = timed(harness.check_lattice_green, ctx)
    fast = harness.Outcome(elapsed < 300, None if elapsed < 300 else f"took {elapsed:.1f} s")
    record(9, "j = dG +- Gd, Green operators commute with d and delta, causal support",
           [("green", out), ("runtime", fast)], f"{elapsed:.1f} s")


def test_criterion_10_lattice_equivalences(ctx, record):
    record(10, "quasi-inverses of the four inclusions with xi = 0; compact support",
           [("equivalences", harness.check_lattice_equivalences(ctx))])


def test_criterion_11_lattice_rce(ctx, record):
    record(11, "rce simplified = unsimplified, antifields fixed, ghost shift a boundary, rce - Z = d(theta)",
           [("rce", harness.check_lattice_rce(ctx))])


def test_criterion_12_stress(ctx, record):
    witness = harness.check_lattice_non_preservation(ctx)
    stress = harness.check_lattice_stress(ctx)
    extra = ""
    if stress.passed:
        extra = f"tau(t~ w1, i w2) = {stress.details['polarized_stress']}, ansatz {stress.details['ansatz']}"
    record(12, "Z breaks tau; psi-corrected stress compatible, ghosts and antifields drop out",
           [("non-preservation", witness), ("stress", stress)], extra)
