import pytest
from flint import fmpq, fmpq_mat
from hypothesis import given
from hypothesis import strategies as st

from strictify.exact_algebra import (
    DualMatrix,
    DualScalar,
    MatrixEquations,
    SparseMatrix,
    dense,
    dual_solve,
    format_scalar,
    identity,
    kernel_basis,
    rank,
    scalar,
    solve,
    solve_matrix,
)

from conftest import matrices, rationals


def test_rank_examples():
    assert rank(fmpq_mat(0, 0)) == 0
    assert rank(identity(2)) == 2
    assert rank(dense([[1, 2], [2, 4]])) == 1


def test_solve_examples():
    assert solve(identity(3), [1, 2, 3]) == [1, 2, 3]
    x = solve(dense([[1, 1]]), [0])
    assert x is not None and x[0] == 0 and x[0] + x[1] == 0
    assert solve(dense([[0]]), [1]) is None


def test_kernel_examples():
    assert kernel_basis(identity(3)) == []
    assert len(kernel_basis(fmpq_mat(1, 2))) == 2
    (v,) = kernel_basis(dense([[1, 2], [2, 4]]))
    assert v[0] * (-1) == 2 * v[1]


def test_dual_solve_examples():
    one = SparseMatrix(1, 1, [(0, 0, DualScalar(1, 0))])
    assert dual_solve(one, [DualScalar(1, 2)]) == [DualScalar(1, 2)]
    m = SparseMatrix(1, 1, [(0, 0, DualScalar(1, 3))])
    assert dual_solve(m, [1]) == [DualScalar(1, -3)]
    eps = SparseMatrix(1, 1, [(0, 0, DualScalar(0, 1))])
    with pytest.raises(ZeroDivisionError, match="base singular"):
        dual_solve(eps, [1])


def test_scalar_parsing_and_format():
    assert scalar("3/6") == fmpq(1, 2)
    assert format_scalar(fmpq(-4, 2)) == "-2/1"
    assert scalar(format_scalar(fmpq(7, 9))) == fmpq(7, 9)


@given(matrices())
def test_rank_nullity(m):
    assert rank(m) + len(kernel_basis(m)) == m.ncols()
    for v in kernel_basis(m):
        assert all(x == 0 for x in (m * fmpq_mat(len(v), 1, v)).entries())


@given(matrices(), st.data())
def test_solve_recovers_consistent_rhs(m, data):
    v = data.draw(st.lists(rationals, min_size=m.ncols(), max_size=m.ncols()))
    b = m * fmpq_mat(m.ncols(), 1, v) if m.ncols() else fmpq_mat(m.nrows(), 1)
    x = solve(m, list(b.entries()))
    assert x is not None
    if m.ncols():
        assert m * fmpq_mat(len(x), 1, x) == b


@given(matrices(), matrices())
def test_solve_matrix_is_exact_or_none(a, b):
    if a.nrows() != b.nrows():
        return
    x = solve_matrix(a, b)
    if x is not None:
        assert a * x == b


@given(rationals, rationals, rationals, rationals)
def test_dual_arithmetic(a, b, c, d):
    x, y = DualScalar(a, b), DualScalar(c, d)
    assert x * y == DualScalar(a * c, a * d + b * c)
    assert (x + y) - y == x
    if a:
        assert x * x.inverse() == DualScalar(1, 0)
        assert (y / x) * x == y


@given(matrices())
def test_sparse_dump_round_trip(m):
    s = SparseMatrix.from_dense(m)
    text = s.dump()
    assert SparseMatrix.parse(text) == s
    assert s.to_dense() == m
    lines = text.splitlines()
    assert lines[0] == f"{m.nrows()} {m.ncols()} {s.nnz}"
    keys = [tuple(int(t) for t in ln.split()[:2]) for ln in lines[1:]]
    assert keys == sorted(keys)


def test_sparse_dual_round_trip_and_invariants():
    s = SparseMatrix.from_dual_pair(dense([[1, 0], [0, 2]]), dense([[0, 3], [0, 1]]))
    assert s.is_dual
    assert SparseMatrix.parse(s.dump()) == s
    with pytest.raises(ValueError, match="duplicate"):
        SparseMatrix(2, 2, [(0, 0, 1), (0, 0, 2)])
    with pytest.raises(IndexError):
        SparseMatrix(2, 2, [(2, 0, 1)])
    assert SparseMatrix(2, 2, [(0, 0, 0)]).nnz == 0


def test_dual_matrix_product_and_solve():
    a = DualMatrix(dense([[2, 0], [0, 1]]), dense([[1, 0], [1, 0]]))
    b = DualMatrix(dense([[1], [1]]), dense([[0], [2]]))
    x = a.solve(a @ b)
    assert x.base == b.base and x.slope_or_zero() == b.slope_or_zero()
    assert (a @ b).transpose().shape() == (1, 2)


def test_matrix_equations_homotopy():
    # find h with d h + h d = id - p on the two-term complex K -> K
    d = dense([[0, 0], [1, 0]])
    eqs = MatrixEquations()
    eqs.unknown("h", 2, 2, [(0, 1)])
    eqs.equation([(d, "h", None), (None, "h", d)], identity(2))
    sol = eqs.solve()
    assert sol is not None
    h = sol["h"]
    assert d * h + h * d == identity(2)
