"""Exact rational and dual-number linear algebra.

Scalars are ``flint.fmpq`` values (reduced fractions with positive
denominator).  Dense work is done with ``flint.fmpq_mat``; the
``SparseMatrix`` triplet type is the interchange and serialization format.
Pivoting is always lowest index first, so every solve and kernel basis is
reproducible.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

from flint import fmpq, fmpq_mat, fmpz

Scalar = fmpq

ZERO = fmpq(0)
ONE = fmpq(1)


def scalar(value) -> fmpq:
    """Coerce ints, fractions, flint numbers and ``"p/q"`` strings to fmpq."""
    if isinstance(value, fmpq):
        return value
    if isinstance(value, (int, fmpz)):
        return fmpq(value)
    if isinstance(value, Fraction):
        return fmpq(value.numerator, value.denominator)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            p, q = text.split("/", 1)
            return fmpq(int(p), int(q))
        return fmpq(int(text))
    raise TypeError(f"cannot convert {value!r} to an exact rational")


def format_scalar(value) -> str:
    """Render a rational as ``p/q`` (always with an explicit denominator)."""
    value = scalar(value)
    return f"{int(value.p)}/{int(value.q)}"


class DualScalar:
    """An element a + b*eps of Q[eps]/(eps^2)."""

    __slots__ = ("base", "slope")

    def __init__(self, base=0, slope=0):
        self.base = scalar(base)
        self.slope = scalar(slope)

    @staticmethod
    def lift(value) -> "DualScalar":
        if isinstance(value, DualScalar):
            return value
        return DualScalar(value, 0)

    def __add__(self, other):
        other = DualScalar.lift(other)
        return DualScalar(self.base + other.base, self.slope + other.slope)

    __radd__ = __add__

    def __sub__(self, other):
        other = DualScalar.lift(other)
        return DualScalar(self.base - other.base, self.slope - other.slope)

    def __rsub__(self, other):
        return DualScalar.lift(other) - self

    def __neg__(self):
        return DualScalar(-self.base, -self.slope)

    def __mul__(self, other):
        other = DualScalar.lift(other)
        return DualScalar(
            self.base * other.base,
            self.base * other.slope + self.slope * other.base,
        )

    __rmul__ = __mul__

    def is_invertible(self) -> bool:
        return self.base != 0

    def inverse(self) -> "DualScalar":
        if self.base == 0:
            raise ZeroDivisionError("dual number with zero base part is not invertible")
        inv = 1 / self.base
        return DualScalar(inv, -self.slope * inv * inv)

    def __truediv__(self, other):
        return self * DualScalar.lift(other).inverse()

    def __rtruediv__(self, other):
        return DualScalar.lift(other) * self.inverse()

    def __eq__(self, other):
        try:
            other = DualScalar.lift(other)
        except TypeError:
            return NotImplemented
        return self.base == other.base and self.slope == other.slope

    def __hash__(self):
        return hash((self.base, self.slope))

    def __bool__(self):
        return self.base != 0 or self.slope != 0

    def __repr__(self):
        return f"DualScalar({self.base}, {self.slope})"

    def __str__(self):
        return f"{format_scalar(self.base)}+{format_scalar(self.slope)}e"


# ---------------------------------------------------------------------------
# dense helpers


def zeros(rows: int, cols: int) -> fmpq_mat:
    return fmpq_mat(rows, cols)


def identity(n: int) -> fmpq_mat:
    m = fmpq_mat(n, n)
    for i in range(n):
        m[i, i] = ONE
    return m


def diagonal(values: Sequence) -> fmpq_mat:
    n = len(values)
    m = fmpq_mat(n, n)
    for i, v in enumerate(values):
        if v:
            m[i, i] = scalar(v)
    return m


def dense(rows: Sequence[Sequence], ncols: int | None = None) -> fmpq_mat:
    """Build a matrix from nested rows of anything ``scalar`` accepts."""
    nrows = len(rows)
    if ncols is None:
        ncols = len(rows[0]) if nrows else 0
    flat = [scalar(v) for row in rows for v in row]
    return fmpq_mat(nrows, ncols, flat)


def is_zero(m: fmpq_mat) -> bool:
    return m == fmpq_mat(m.nrows(), m.ncols())


def submatrix(m: fmpq_mat, rows: Sequence[int], cols: Sequence[int]) -> fmpq_mat:
    if not rows or not cols:
        return fmpq_mat(len(rows), len(cols))
    if 4 * len(rows) * len(cols) < m.nrows() * m.ncols():
        return fmpq_mat(len(rows), len(cols), [m[i, j] for i in rows for j in cols])
    flat = m.entries()
    n = m.ncols()
    return fmpq_mat(len(rows), len(cols), [flat[i * n + j] for i in rows for j in cols])


def place(target: fmpq_mat, block: fmpq_mat, row: int, col: int, scale=None) -> None:
    """Add ``block`` (optionally scaled) into ``target`` at offset (row, col)."""
    for i, j, v in nonzero_entries(block):
        if scale is not None:
            v = v * scale
        target[row + i, col + j] += v


def block_matrix(blocks: Sequence[Sequence[fmpq_mat | None]],
                 row_sizes: Sequence[int], col_sizes: Sequence[int]) -> fmpq_mat:
    """Assemble a matrix from a grid of blocks; ``None`` stands for zero."""
    out = fmpq_mat(sum(row_sizes), sum(col_sizes))
    r = 0
    for bi, row in enumerate(blocks):
        c = 0
        for bj, blk in enumerate(row):
            if blk is not None:
                place(out, blk, r, c)
            c += col_sizes[bj]
        r += row_sizes[bi]
    return out


def hstack(mats: Sequence[fmpq_mat]) -> fmpq_mat:
    rows = mats[0].nrows()
    return block_matrix([list(mats)], [rows], [m.ncols() for m in mats])


def vstack(mats: Sequence[fmpq_mat]) -> fmpq_mat:
    cols = mats[0].ncols()
    return block_matrix([[m] for m in mats], [m.nrows() for m in mats], [cols])


def column(values: Sequence) -> fmpq_mat:
    return fmpq_mat(len(values), 1, [scalar(v) for v in values])


def column_values(m: fmpq_mat, j: int = 0) -> list[fmpq]:
    return [m[i, j] for i in range(m.nrows())]


def nonzero_entries(m: fmpq_mat) -> Iterable[tuple[int, int, fmpq]]:
    n = m.ncols()
    if not n:
        return
    for k, v in enumerate(m.entries()):
        if v:
            i, j = divmod(k, n)
            yield i, j, v


def as_dense(m) -> fmpq_mat:
    if isinstance(m, fmpq_mat):
        return m
    if isinstance(m, SparseMatrix):
        return m.to_dense()
    return dense(m)


def kron(a: fmpq_mat, b: fmpq_mat) -> fmpq_mat:
    """Kronecker product; vec_r(A X B) = kron(A, B^T) vec_r(X) for row-major vec."""
    out = fmpq_mat(a.nrows() * b.nrows(), a.ncols() * b.ncols())
    bn = list(nonzero_entries(b))
    for i, j, v in nonzero_entries(a):
        for k, l, w in bn:
            out[i * b.nrows() + k, j * b.ncols() + l] = v * w
    return out


# ---------------------------------------------------------------------------
# sparse triplet matrices


class SparseMatrix:
    """Immutable triplet matrix over Q or over the dual numbers.

    Entries are kept sorted by (row, col); zeros are dropped and duplicate
    positions are rejected.
    """

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, triplets: Iterable[tuple[int, int, object]] = ()):
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        seen = {}
        for r, c, v in triplets:
            if not (0 <= r < rows and 0 <= c < cols):
                raise IndexError(f"entry ({r}, {c}) outside a {rows}x{cols} matrix")
            if (r, c) in seen:
                raise ValueError(f"duplicate entry at ({r}, {c})")
            v = v if isinstance(v, DualScalar) else scalar(v)
            seen[(r, c)] = v
        self.rows = rows
        self.cols = cols
        self.entries = tuple((r, c, seen[(r, c)]) for (r, c) in sorted(seen) if seen[(r, c)])

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @property
    def is_dual(self) -> bool:
        return any(isinstance(v, DualScalar) for _, _, v in self.entries)

    @classmethod
    def from_dense(cls, m) -> "SparseMatrix":
        m = as_dense(m)
        return cls(m.nrows(), m.ncols(), nonzero_entries(m))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], ncols: int | None = None) -> "SparseMatrix":
        nrows = len(rows)
        if ncols is None:
            ncols = len(rows[0]) if nrows else 0
        trip = []
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if v:
                    trip.append((i, j, v))
        return cls(nrows, ncols, trip)

    @classmethod
    def from_dual_pair(cls, base: fmpq_mat, slope: fmpq_mat) -> "SparseMatrix":
        trip = {}
        for i, j, v in nonzero_entries(base):
            trip[(i, j)] = DualScalar(v, 0)
        for i, j, v in nonzero_entries(slope):
            trip[(i, j)] = DualScalar(trip[(i, j)].base if (i, j) in trip else 0, v)
        return cls(base.nrows(), base.ncols(), ((i, j, v) for (i, j), v in trip.items()))

    def to_dense(self) -> fmpq_mat:
        if self.is_dual:
            raise TypeError("dual matrix has no single dense rational form; use dual_parts")
        out = fmpq_mat(self.rows, self.cols)
        for r, c, v in self.entries:
            out[r, c] = v
        return out

    def dual_parts(self) -> tuple[fmpq_mat, fmpq_mat]:
        base = fmpq_mat(self.rows, self.cols)
        slope = fmpq_mat(self.rows, self.cols)
        for r, c, v in self.entries:
            v = DualScalar.lift(v)
            base[r, c] = v.base
            slope[r, c] = v.slope
        return base, slope

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.cols, self.rows, ((c, r, v) for r, c, v in self.entries))

    def matvec(self, vec: Sequence) -> list:
        if len(vec) != self.cols:
            raise ValueError("vector length does not match column count")
        out = [ZERO] * self.rows
        for r, c, v in self.entries:
            out[r] = v * vec[c] + out[r]
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.rows, self.cols, self.entries) == (other.rows, other.cols, other.entries)

    def __hash__(self):
        return hash((self.rows, self.cols, self.entries))

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"

    def dump(self) -> str:
        """Text form: header ``rows cols nnz`` then ``row col p/q`` lines."""
        lines = [f"{self.rows} {self.cols} {self.nnz}"]
        for r, c, v in self.entries:
            if isinstance(v, DualScalar):
                text = f"{format_scalar(v.base)}+{format_scalar(v.slope)}e"
            else:
                text = format_scalar(v)
            lines.append(f"{r} {c} {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SparseMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty matrix dump")
        rows, cols, nnz = (int(t) for t in lines[0].split())
        if len(lines) - 1 != nnz:
            raise ValueError(f"header announces {nnz} entries, found {len(lines) - 1}")
        trip = []
        for ln in lines[1:]:
            r, c, v = ln.split()
            if v.endswith("e"):
                base, slope = v[:-1].split("+", 1)
                val = DualScalar(scalar(base), scalar(slope))
            else:
                val = scalar(v)
            trip.append((int(r), int(c), val))
        return cls(rows, cols, trip)


# ---------------------------------------------------------------------------
# elimination


def pivot_columns(reduced: fmpq_mat, rank_: int) -> list[int]:
    """Pivot column of each nonzero row of a reduced row echelon form."""
    pivots = []
    col = 0
    ncols = reduced.ncols()
    for i in range(rank_):
        while col < ncols and reduced[i, col] == 0:
            col += 1
        pivots.append(col)
        col += 1
    return pivots


def rank(m) -> int:
    m = as_dense(m)
    if m.nrows() == 0 or m.ncols() == 0:
        return 0
    return m.rank()


def solve_matrix(a, b) -> fmpq_mat | None:
    """Solve A X = B for a matrix right-hand side.

    Returns the particular solution whose free variables are zero, with
    pivots chosen lowest index first, or None when the system is inconsistent.
    """
    a = as_dense(a)
    b = as_dense(b)
    n, m = a.nrows(), a.ncols()
    k = b.ncols()
    if b.nrows() != n:
        raise ValueError("right-hand side has the wrong number of rows")
    if n == 0:
        return fmpq_mat(m, k)
    if m == 0:
        return fmpq_mat(0, k) if is_zero(b) else None
    if n == m and k > 0:
        try:
            return a.solve(b)
        except ZeroDivisionError:
            pass
    reduced, r = hstack([a, b]).rref()
    pivots = pivot_columns(reduced, r)
    if any(p >= m for p in pivots):
        return None
    x = fmpq_mat(m, k)
    for row, p in enumerate(pivots):
        for j in range(k):
            v = reduced[row, m + j]
            if v:
                x[p, j] = v
    return x


def solve(m, b: Sequence) -> list[fmpq] | None:
    """One particular solution of m x = b, or None when b is not in the image."""
    x = solve_matrix(m, column(b))
    if x is None:
        return None
    return column_values(x)


def kernel_matrix(m) -> fmpq_mat:
    """Columns form the null space basis, one per free column in index order."""
    m = as_dense(m)
    ncols = m.ncols()
    if m.nrows() == 0 or ncols == 0:
        return identity(ncols)
    reduced, r = m.rref()
    pivots = pivot_columns(reduced, r)
    pivot_set = set(pivots)
    free = [j for j in range(ncols) if j not in pivot_set]
    out = fmpq_mat(ncols, len(free))
    for c, j in enumerate(free):
        out[j, c] = ONE
        for row, p in enumerate(pivots):
            v = reduced[row, j]
            if v:
                out[p, c] = -v
    return out


def kernel_basis(m) -> list[list[fmpq]]:
    k = kernel_matrix(m)
    return [column_values(k, j) for j in range(k.ncols())]


def dual_solve(m: SparseMatrix, b: Sequence) -> list[DualScalar] | None:
    """Solve m x = b over Q[eps]/(eps^2).

    With a square invertible base part the solution is unique.  A square
    singular base part signals ``base singular``.  Rectangular systems are
    solved through the block system [[A0, 0], [A1, A0]] and give None when
    inconsistent.
    """
    a0, a1 = m.dual_parts()
    rhs = [DualScalar.lift(v) for v in b]
    if len(rhs) != m.rows:
        raise ValueError("right-hand side has the wrong length")
    b0 = column([v.base for v in rhs])
    b1 = column([v.slope for v in rhs])
    if m.rows == m.cols:
        if m.rows == 0:
            return []
        if a0.rank() < m.rows:
            raise ZeroDivisionError("base singular")
        x0 = a0.solve(b0)
        x1 = a0.solve(b1 - a1 * x0)
        return [DualScalar(x0[i, 0], x1[i, 0]) for i in range(m.cols)]
    n, k = m.rows, m.cols
    big = block_matrix([[a0, None], [a1, a0]], [n, n], [k, k])
    sol = solve(big, column_values(vstack([b0, b1])))
    if sol is None:
        return None
    return [DualScalar(sol[i], sol[k + i]) for i in range(k)]


def dual_matmul(a: tuple[fmpq_mat, fmpq_mat], b: tuple[fmpq_mat, fmpq_mat]) -> tuple[fmpq_mat, fmpq_mat]:
    """Product of dual matrices given as (base, slope) pairs."""
    return a[0] * b[0], a[0] * b[1] + a[1] * b[0]


def dual_inverse(a: tuple[fmpq_mat, fmpq_mat]) -> tuple[fmpq_mat, fmpq_mat]:
    base_inv = a[0].inv()
    return base_inv, -(base_inv * a[1] * base_inv)


class MatrixEquations:
    """Linear systems whose unknowns are matrices with prescribed sparsity.

    Each unknown is a matrix where only the positions in ``mask`` are free
    (all other entries are fixed to zero).  Each equation states
    ``sum_t A_t X_t B_t = C``; ``None`` for A or B means the identity.
    """

    def __init__(self):
        self._unknowns: dict[str, tuple[int, int, dict[tuple[int, int], int]]] = {}
        self._count = 0
        self._rows: list[dict[int, fmpq]] = []
        self._rhs: list[fmpq] = []

    def unknown(self, name: str, rows: int, cols: int, mask: Iterable[tuple[int, int]]) -> None:
        index = {}
        for pos in mask:
            index[pos] = self._count
            self._count += 1
        self._unknowns[name] = (rows, cols, index)

    def equation(self, terms: Sequence[tuple[fmpq_mat | None, str, fmpq_mat | None]], rhs: fmpq_mat) -> None:
        coeffs: dict[tuple[int, int], dict[int, fmpq]] = {}
        for a, name, b in terms:
            rows, cols, index = self._unknowns[name]
            a_cols: dict[int, list[tuple[int, fmpq]]] = {}
            if a is not None:
                for p, i, v in nonzero_entries(a):
                    a_cols.setdefault(i, []).append((p, v))
            b_rows: dict[int, list[tuple[int, fmpq]]] = {}
            if b is not None:
                for j, q, v in nonzero_entries(b):
                    b_rows.setdefault(j, []).append((q, v))
            for (i, j), var in index.items():
                left = a_cols.get(i, ()) if a is not None else ((i, ONE),)
                right = b_rows.get(j, ()) if b is not None else ((j, ONE),)
                for p, v in left:
                    for q, w in right:
                        row = coeffs.setdefault((p, q), {})
                        row[var] = row.get(var, ZERO) + v * w
        keys = set(coeffs)
        keys.update((i, j) for i, j, _ in nonzero_entries(rhs))
        for key in sorted(keys):
            row = {k: v for k, v in coeffs.get(key, {}).items() if v}
            self._rows.append(row)
            self._rhs.append(rhs[key[0], key[1]])

    def solve(self) -> dict[str, fmpq_mat] | None:
        live = [r for r, (row, c) in enumerate(zip(self._rows, self._rhs)) if row or c]
        a = fmpq_mat(len(live), self._count)
        b = fmpq_mat(len(live), 1)
        for out_row, r in enumerate(live):
            for var, v in self._rows[r].items():
                a[out_row, var] = v
            b[out_row, 0] = self._rhs[r]
        x = solve_matrix(a, b)
        if x is None:
            return None
        result = {}
        for name, (rows, cols, index) in self._unknowns.items():
            m = fmpq_mat(rows, cols)
            for (i, j), var in index.items():
                if x[var, 0]:
                    m[i, j] = x[var, 0]
            result[name] = m
        return result


# ---------------------------------------------------------------------------
# matrices over the dual numbers


class DualMatrix:
    """A matrix A0 + eps A1 over Q[eps]/(eps^2); ``slope`` None means A1 = 0."""

    __slots__ = ("base", "slope")

    def __init__(self, base: fmpq_mat, slope: fmpq_mat | None = None):
        self.base = base
        self.slope = None if slope is None or is_zero(slope) else slope

    @staticmethod
    def zeros(rows: int, cols: int) -> "DualMatrix":
        return DualMatrix(fmpq_mat(rows, cols))

    @staticmethod
    def from_entries(rows: int, cols: int, entries: Iterable[tuple[int, int, object]]) -> "DualMatrix":
        """Build from (i, j, value) triplets; values may be dual scalars."""
        base = fmpq_mat(rows, cols)
        slope = fmpq_mat(rows, cols)
        for i, j, v in entries:
            v = DualScalar.lift(v) if isinstance(v, DualScalar) else DualScalar(v)
            base[i, j] += v.base
            slope[i, j] += v.slope
        return DualMatrix(base, slope)

    def shape(self) -> tuple[int, int]:
        return self.base.nrows(), self.base.ncols()

    def nrows(self) -> int:
        return self.base.nrows()

    def ncols(self) -> int:
        return self.base.ncols()

    @property
    def is_dual(self) -> bool:
        return self.slope is not None

    def slope_or_zero(self) -> fmpq_mat:
        return self.slope if self.slope is not None else fmpq_mat(*self.shape())

    def __matmul__(self, other: "DualMatrix") -> "DualMatrix":
        base = self.base * other.base
        slope = None
        if self.slope is not None:
            slope = self.slope * other.base
        if other.slope is not None:
            term = self.base * other.slope
            slope = term if slope is None else slope + term
        return DualMatrix(base, slope)

    def __add__(self, other: "DualMatrix") -> "DualMatrix":
        if other.slope is None:
            slope = self.slope
        elif self.slope is None:
            slope = other.slope
        else:
            slope = self.slope + other.slope
        return DualMatrix(self.base + other.base, slope)

    def __neg__(self) -> "DualMatrix":
        return DualMatrix(-self.base, None if self.slope is None else -self.slope)

    def __sub__(self, other: "DualMatrix") -> "DualMatrix":
        return self + (-other)

    def scaled(self, c) -> "DualMatrix":
        c = scalar(c)
        return DualMatrix(self.base * c, None if self.slope is None else self.slope * c)

    def transpose(self) -> "DualMatrix":
        return DualMatrix(self.base.transpose(), None if self.slope is None else self.slope.transpose())

    def sub(self, rows: Sequence[int], cols: Sequence[int]) -> "DualMatrix":
        return DualMatrix(submatrix(self.base, rows, cols),
                          None if self.slope is None else submatrix(self.slope, rows, cols))

    def solve(self, rhs: "DualMatrix") -> "DualMatrix":
        """X with self X = rhs for a square self with invertible base part."""
        x0 = self.base.solve(rhs.base)
        if self.slope is None and rhs.slope is None:
            return DualMatrix(x0)
        r1 = rhs.slope_or_zero()
        if self.slope is not None:
            r1 = r1 - self.slope * x0
        return DualMatrix(x0, self.base.solve(r1))

    def is_zero(self) -> bool:
        return is_zero(self.base) and self.slope is None

    def at_slope(self) -> fmpq_mat:
        """The eps-coefficient (first derivative) part."""
        return self.slope_or_zero()

    def __eq__(self, other):
        if not isinstance(other, DualMatrix):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash(self.shape())

    def __repr__(self):
        kind = "dual" if self.is_dual else "rational"
        return f"DualMatrix({self.nrows()}x{self.ncols()}, {kind})"


def dual_vstack(mats: Sequence[DualMatrix], ncols: int) -> DualMatrix:
    """Stack blocks vertically, going through the flat entry lists."""
    rows = sum(m.nrows() for m in mats)
    base = []
    for m in mats:
        base.extend(m.base.entries())
    out_base = fmpq_mat(rows, ncols, base) if rows and ncols else fmpq_mat(rows, ncols)
    if not any(m.is_dual for m in mats):
        return DualMatrix(out_base)
    slope = []
    for m in mats:
        slope.extend(m.slope_or_zero().entries())
    return DualMatrix(out_base, fmpq_mat(rows, ncols, slope) if rows and ncols else None)
