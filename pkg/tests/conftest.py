import random

import pytest
from flint import fmpq, fmpq_mat
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from strictify.generators import build_standard, conjugate_complex, random_standard

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

small_ints = st.integers(min_value=-4, max_value=4)
rationals = st.builds(fmpq, small_ints, st.integers(min_value=1, max_value=5))


@st.composite
def matrices(draw, max_rows=5, max_cols=5):
    r = draw(st.integers(0, max_rows))
    c = draw(st.integers(0, max_cols))
    vals = draw(st.lists(rationals, min_size=r * c, max_size=r * c))
    return fmpq_mat(r, c, vals)


@st.composite
def complexes(draw, max_homology=2, max_pairs=1, prefix="v"):
    """A random complex of known homology, in a random basis."""
    seed = draw(st.integers(0, 10 ** 6))
    rng = random.Random(seed)
    shape = random_standard(rng, max_homology=max_homology, max_pairs=max_pairs)
    V, _ = conjugate_complex(build_standard(shape, ""), rng, prefix)
    return V, shape


SMALL_H = {(8, 4): (fmpq(1, 8), fmpq(1, 8), fmpq(9, 8)), (8, 5): (fmpq(-1, 8), 0, fmpq(7, 8))}


@pytest.fixture(scope="session")
def small_regions():
    """Regions of a 16 x 8 lattice perturbed at two vertices; cheap enough for unit tests."""
    from strictify.lattice_ym import LatticeSpacetime, Perturbation, build_regions
    return build_regions(LatticeSpacetime(16, 8), Perturbation.from_density(SMALL_H))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
