"""Bicomplexes with anticommuting differentials and their direct-sum totalization.

Cells are indexed by (p, q).  The vertical differential ``delta`` maps
(p, q) -> (p-1, q) and the horizontal differential ``d`` maps
(p, q) -> (p, q-1).  Both square to zero and anticommute.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from flint import fmpq_mat

from .chain_core import ChainComplex, ChainComplexError, GradedMap
from .exact_algebra import ONE, is_zero, nonzero_entries

Cell = tuple[int, int]


class Bicomplex:
    def __init__(self, basis: Mapping[Cell, Sequence[str]],
                 vertical: Mapping[Cell, fmpq_mat] | None = None,
                 horizontal: Mapping[Cell, fmpq_mat] | None = None,
                 validate: bool = True):
        self.basis = {(int(p), int(q)): tuple(v) for (p, q), v in sorted(basis.items()) if len(v)}
        self.cells = tuple(self.basis)
        self.vertical = self._checked(vertical or {}, (-1, 0), "delta")
        self.horizontal = self._checked(horizontal or {}, (0, -1), "d")
        if validate:
            self.validate()

    def _checked(self, maps, step, name):
        out = {}
        for cell, m in maps.items():
            p, q = cell
            tgt = (p + step[0], q + step[1])
            rows, cols = self.dim(tgt), self.dim((p, q))
            if (m.nrows(), m.ncols()) != (rows, cols):
                if rows * cols == 0 and is_zero(m):
                    continue
                raise ChainComplexError(f"{name} at {cell} has the wrong shape")
            if rows and cols and not is_zero(m):
                out[(p, q)] = m
        return out

    def dim(self, cell: Cell) -> int:
        return len(self.basis.get(cell, ()))

    def delta(self, cell: Cell) -> fmpq_mat:
        p, q = cell
        return self.vertical.get(cell, fmpq_mat(self.dim((p - 1, q)), self.dim(cell)))

    def d(self, cell: Cell) -> fmpq_mat:
        p, q = cell
        return self.horizontal.get(cell, fmpq_mat(self.dim((p, q - 1)), self.dim(cell)))

    def validate(self) -> None:
        for (p, q) in self.cells:
            if not is_zero(self.delta((p - 1, q)) * self.delta((p, q))):
                raise ChainComplexError(f"delta^2 != 0 at {(p, q)}")
            if not is_zero(self.d((p, q - 1)) * self.d((p, q))):
                raise ChainComplexError(f"d^2 != 0 at {(p, q)}")
            anti = self.delta((p, q - 1)) * self.d((p, q)) + self.d((p - 1, q)) * self.delta((p, q))
            if not is_zero(anti):
                raise ChainComplexError(f"delta d + d delta != 0 at {(p, q)}")

    def total_layout(self) -> dict[int, list[tuple[Cell, int]]]:
        """For each total degree, the cells in (p, q) order with their offsets."""
        layout: dict[int, list[tuple[Cell, int]]] = {}
        for cell in self.cells:
            m = cell[0] + cell[1]
            entries = layout.setdefault(m, [])
            offset = sum(self.dim(c) for c, _ in entries)
            entries.append((cell, offset))
        return layout


def tot_label(cell: Cell, label: str) -> str:
    return f"{cell[0]},{cell[1]}:{label}"


def tot_oplus(B: Bicomplex) -> ChainComplex:
    """Tot(B)_m = sum over p+q=m of B_{p,q}, differential delta + d.

    The basis is ordered by vertical degree, then horizontal degree, then the
    order of each cell's own basis.
    """
    layout = B.total_layout()
    basis = {m: [tot_label(cell, lab) for cell, _ in cells for lab in B.basis[cell]]
             for m, cells in layout.items()}
    diff = {}
    for m, cells in layout.items():
        rows = len(basis.get(m - 1, ()))
        mat = fmpq_mat(rows, len(basis[m]))
        below = {cell: off for cell, off in layout.get(m - 1, [])}
        for (p, q), col0 in cells:
            for tgt, block in (((p - 1, q), B.delta((p, q))), ((p, q - 1), B.d((p, q)))):
                if tgt not in below:
                    continue
                row0 = below[tgt]
                for i, j, v in nonzero_entries(block):
                    mat[row0 + i, col0 + j] += v
        diff[m] = mat
    return ChainComplex(basis, diff)


def bicomplex_tensor(B1: Bicomplex, B2: Bicomplex) -> Bicomplex:
    """B1 (x) B2 with Leibniz differentials and total-degree Koszul signs."""
    basis: dict[Cell, list[str]] = {}
    pos: dict[tuple[Cell, str, Cell, str], tuple[Cell, int]] = {}
    for c1 in B1.cells:
        for c2 in B2.cells:
            cell = (c1[0] + c2[0], c1[1] + c2[1])
            entries = basis.setdefault(cell, [])
            for a in B1.basis[c1]:
                for b in B2.basis[c2]:
                    pos[(c1, a, c2, b)] = (cell, len(entries))
                    entries.append(f"{tot_label(c1, a)}⊗{tot_label(c2, b)}")
    vert = {cell: fmpq_mat(len(basis.get((cell[0] - 1, cell[1]), ())), len(v)) for cell, v in basis.items()}
    horiz = {cell: fmpq_mat(len(basis.get((cell[0], cell[1] - 1), ())), len(v)) for cell, v in basis.items()}
    for (c1, a, c2, b), (cell, col) in pos.items():
        ia = B1.basis[c1].index(a)
        ib = B2.basis[c2].index(b)
        sign = ONE if (c1[0] + c1[1]) % 2 == 0 else -ONE
        for store, step, m1, m2 in ((vert, (-1, 0), B1.delta, B2.delta), (horiz, (0, -1), B1.d, B2.d)):
            t1 = (c1[0] + step[0], c1[1] + step[1])
            blk = m1(c1)
            for r in range(blk.nrows()):
                v = blk[r, ia]
                if v:
                    row = pos[(t1, B1.basis[t1][r], c2, b)][1]
                    store[cell][row, col] += v
            t2 = (c2[0] + step[0], c2[1] + step[1])
            blk = m2(c2)
            for r in range(blk.nrows()):
                v = blk[r, ib]
                if v:
                    row = pos[(c1, a, t2, B2.basis[t2][r])][1]
                    store[cell][row, col] += sign * v
    return Bicomplex(basis, vert, horiz)


def tot_tensor_comparison(B1: Bicomplex, B2: Bicomplex) -> GradedMap:
    """The basis bijection Tot(B1 (x) B2) -> Tot(B1) (x) Tot(B2)."""
    from .chain_core import TensorProduct

    left = tot_oplus(bicomplex_tensor(B1, B2))
    right = TensorProduct(tot_oplus(B1), tot_oplus(B2))
    out = fmpq_mat(right.complex.total_dim, left.total_dim)
    for c1 in B1.cells:
        for c2 in B2.cells:
            cell = (c1[0] + c2[0], c1[1] + c2[1])
            for a in B1.basis[c1]:
                for b in B2.basis[c2]:
                    a_tot, b_tot = tot_label(c1, a), tot_label(c2, b)
                    label = tot_label(cell, f"{a_tot}⊗{b_tot}")
                    out[right.index(a_tot, b_tot), left.global_index(label)] = ONE
    return GradedMap(left, right.complex, 0, out, check=False)
