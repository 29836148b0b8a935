"""Chain complexes over Q with labelled bases, graded maps and mapping complexes.

A complex stores, for each degree k, a tuple of basis labels and the
differential d_k : V_k -> V_{k-1} as a ``dim(k-1) x dim(k)`` matrix.  Labels
are unique across the whole complex, so an element can be written as a dict
``label -> coefficient``.

Graded maps are stored as one "global" matrix over the concatenated bases
(degrees in increasing order).  This keeps composition and the mapping
complex differential a plain matrix product.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Sequence

from flint import fmpq, fmpq_mat

from .exact_algebra import (
    ONE,
    format_scalar,
    identity,
    is_zero,
    kernel_matrix,
    nonzero_entries,
    rank,
    scalar,
    submatrix,
)


class ChainComplexError(ValueError):
    """Raised when a complex or map violates its structural invariants."""


class ChainComplex:
    """A finitely supported complex of based Q-vector spaces."""

    def __init__(self, basis: Mapping[int, Sequence[str]],
                 diff: Mapping[int, fmpq_mat] | None = None, validate: bool = True):
        self.basis = {int(k): tuple(v) for k, v in sorted(basis.items()) if len(v)}
        self.degrees = tuple(self.basis)
        self._where = {}
        self._offset = {}
        pos = 0
        for k in self.degrees:
            self._offset[k] = pos
            for i, label in enumerate(self.basis[k]):
                if label in self._where:
                    raise ChainComplexError(f"duplicate basis label {label!r}")
                self._where[label] = (k, i)
            pos += len(self.basis[k])
        self.total_dim = pos
        self._diff = {}
        for k, m in (diff or {}).items():
            k = int(k)
            rows, cols = self.dim(k - 1), self.dim(k)
            if m.nrows() != rows or m.ncols() != cols:
                if rows * cols == 0 and is_zero(m):
                    continue
                raise ChainComplexError(
                    f"d_{k} has shape {m.nrows()}x{m.ncols()}, expected {rows}x{cols}")
            if rows and cols and not is_zero(m):
                self._diff[k] = m
        self._global_d = None
        if validate:
            self.validate()

    # -- shape ---------------------------------------------------------------

    def dim(self, k: int) -> int:
        return len(self.basis.get(k, ()))

    def labels(self, k: int) -> tuple[str, ...]:
        return self.basis.get(k, ())

    def d(self, k: int) -> fmpq_mat:
        m = self._diff.get(k)
        if m is None:
            return fmpq_mat(self.dim(k - 1), self.dim(k))
        return m

    def offset(self, k: int) -> int:
        if k in self._offset:
            return self._offset[k]
        return sum(self.dim(j) for j in self.degrees if j < k)

    def locate(self, label: str) -> tuple[int, int]:
        """Degree and in-degree index of a basis label."""
        return self._where[label]

    def degree_of(self, label: str) -> int:
        return self._where[label][0]

    def global_index(self, label: str) -> int:
        k, i = self._where[label]
        return self._offset[k] + i

    @property
    def global_labels(self) -> list[str]:
        return [lab for k in self.degrees for lab in self.basis[k]]

    @property
    def global_degrees(self) -> list[int]:
        return [k for k in self.degrees for _ in self.basis[k]]

    def global_slice(self, k: int) -> range:
        start = self.offset(k)
        return range(start, start + self.dim(k))

    def global_d(self) -> fmpq_mat:
        """The differential as one square matrix over the concatenated basis."""
        if self._global_d is None:
            out = fmpq_mat(self.total_dim, self.total_dim)
            for k, m in self._diff.items():
                r0, c0 = self._offset[k - 1], self._offset[k]
                for i, j, v in nonzero_entries(m):
                    out[r0 + i, c0 + j] = v
            self._global_d = out
        return self._global_d

    def parity(self) -> fmpq_mat:
        """Diagonal matrix of (-1)^degree over the concatenated basis."""
        out = fmpq_mat(self.total_dim, self.total_dim)
        for idx, k in enumerate(self.global_degrees):
            out[idx, idx] = ONE if k % 2 == 0 else -ONE
        return out

    def validate(self) -> None:
        for k in self.degrees:
            prod = self.d(k - 1) * self.d(k)
            if not is_zero(prod):
                raise ChainComplexError(f"d_{k - 1} d_{k} is not zero")

    def is_zero_complex(self) -> bool:
        return self.total_dim == 0

    # -- elements --------------------------------------------------------------

    def vector(self, element: Mapping[str, object]) -> fmpq_mat:
        """Column vector over the global basis for a dict ``label -> coeff``."""
        out = fmpq_mat(self.total_dim, 1)
        for label, c in element.items():
            out[self.global_index(label), 0] += scalar(c)
        return out

    def element(self, vec: fmpq_mat) -> dict[str, fmpq]:
        labels = self.global_labels
        return {labels[i]: vec[i, 0] for i in range(vec.nrows()) if vec[i, 0]}

    def apply_d(self, element: Mapping[str, object]) -> dict[str, fmpq]:
        return self.element(self.global_d() * self.vector(element))

    # -- comparison and serialization ----------------------------------------

    def __eq__(self, other):
        if not isinstance(other, ChainComplex):
            return NotImplemented
        return self.basis == other.basis and self.global_d() == other.global_d()

    def __hash__(self):
        return hash(tuple(self.basis.items()))

    def __repr__(self):
        dims = ", ".join(f"{k}:{self.dim(k)}" for k in self.degrees)
        return f"ChainComplex({{{dims}}})"

    def to_dict(self) -> dict:
        diffs = []
        for k in sorted(self._diff):
            trip = [[i, j, format_scalar(v)] for i, j, v in nonzero_entries(self._diff[k])]
            diffs.append({"degree": k, "entries": trip})
        return {
            "degrees": [{"degree": k, "basis": list(self.basis[k])} for k in self.degrees],
            "differentials": diffs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChainComplex":
        basis = {int(e["degree"]): list(e["basis"]) for e in data["degrees"]}
        cx = cls(basis, validate=False)
        diff = {}
        for e in data.get("differentials", []):
            k = int(e["degree"])
            m = fmpq_mat(cx.dim(k - 1), cx.dim(k))
            for i, j, v in e["entries"]:
                m[int(i), int(j)] = scalar(v)
            diff[k] = m
        return cls(basis, diff)

    @classmethod
    def from_json(cls, text: str) -> "ChainComplex":
        return cls.from_dict(json.loads(text))


def zero_complex() -> ChainComplex:
    return ChainComplex({})


def ground_field(degree: int = 0, label: str = "1") -> ChainComplex:
    """The one-dimensional complex Q concentrated in a single degree."""
    return ChainComplex({degree: [label]})


def relabel(V: ChainComplex, prefix: str) -> ChainComplex:
    basis = {k: [prefix + lab for lab in V.basis[k]] for k in V.degrees}
    return ChainComplex(basis, {k: V.d(k) for k in V.degrees}, validate=False)


# ---------------------------------------------------------------------------
# graded maps


class GradedMap:
    """A degree ``shift`` map kappa_m : V_m -> W_{m+shift}, stored globally."""

    __slots__ = ("source", "target", "shift", "matrix")

    def __init__(self, source: ChainComplex, target: ChainComplex, shift: int,
                 matrix: fmpq_mat | None = None, check: bool = True):
        self.source = source
        self.target = target
        self.shift = int(shift)
        if matrix is None:
            matrix = fmpq_mat(target.total_dim, source.total_dim)
        if matrix.nrows() != target.total_dim or matrix.ncols() != source.total_dim:
            raise ChainComplexError("graded map matrix has the wrong shape")
        self.matrix = matrix
        if check:
            tdeg = target.global_degrees
            sdeg = source.global_degrees
            for i, j, _ in nonzero_entries(matrix):
                if tdeg[i] != sdeg[j] + self.shift:
                    raise ChainComplexError(
                        f"entry ({i}, {j}) of a shift {self.shift} map connects degree "
                        f"{sdeg[j]} to degree {tdeg[i]}")

    @classmethod
    def from_components(cls, source: ChainComplex, target: ChainComplex, shift: int,
                        comps: Mapping[int, fmpq_mat]) -> "GradedMap":
        out = fmpq_mat(target.total_dim, source.total_dim)
        for m, block in comps.items():
            rows, cols = target.dim(m + shift), source.dim(m)
            if block.nrows() != rows or block.ncols() != cols:
                if rows * cols == 0:
                    continue
                raise ChainComplexError(f"component {m} has the wrong shape")
            r0, c0 = target.offset(m + shift), source.offset(m)
            for i, j, v in nonzero_entries(block):
                out[r0 + i, c0 + j] = v
        return cls(source, target, shift, out, check=False)

    def component(self, m: int) -> fmpq_mat:
        rows = list(self.target.global_slice(m + self.shift))
        cols = list(self.source.global_slice(m))
        return submatrix(self.matrix, rows, cols)

    def apply(self, element: Mapping[str, object]) -> dict[str, fmpq]:
        return self.target.element(self.matrix * self.source.vector(element))

    # -- algebra ---------------------------------------------------------------

    def _same_shape(self, other: "GradedMap") -> None:
        if (self.source is not other.source and self.source != other.source) or \
                (self.target is not other.target and self.target != other.target) or \
                self.shift != other.shift:
            raise ChainComplexError("graded maps have different shapes")

    def __add__(self, other: "GradedMap") -> "GradedMap":
        self._same_shape(other)
        return GradedMap(self.source, self.target, self.shift, self.matrix + other.matrix, check=False)

    def __sub__(self, other: "GradedMap") -> "GradedMap":
        self._same_shape(other)
        return GradedMap(self.source, self.target, self.shift, self.matrix - other.matrix, check=False)

    def __neg__(self) -> "GradedMap":
        return GradedMap(self.source, self.target, self.shift, -self.matrix, check=False)

    def scaled(self, c) -> "GradedMap":
        return GradedMap(self.source, self.target, self.shift, self.matrix * scalar(c), check=False)

    def __matmul__(self, other: "GradedMap") -> "GradedMap":
        """Composition self o other."""
        if other.target.total_dim != self.source.total_dim:
            raise ChainComplexError("cannot compose: target and source differ")
        return GradedMap(other.source, self.target, self.shift + other.shift,
                         self.matrix * other.matrix, check=False)

    def __eq__(self, other):
        if not isinstance(other, GradedMap):
            return NotImplemented
        return self.shift == other.shift and self.matrix == other.matrix

    def __hash__(self):
        return hash((self.shift, self.matrix.nrows(), self.matrix.ncols()))

    def is_zero(self) -> bool:
        return is_zero(self.matrix)

    def __repr__(self):
        return f"GradedMap({self.source!r} -> {self.target!r}, shift={self.shift})"

    def to_dict(self) -> dict:
        src, tgt = self.source.global_labels, self.target.global_labels
        return {
            "shift": self.shift,
            "entries": [[tgt[i], src[j], format_scalar(v)] for i, j, v in nonzero_entries(self.matrix)],
        }


def identity_map(V: ChainComplex) -> GradedMap:
    return GradedMap(V, V, 0, identity(V.total_dim), check=False)


def zero_map(V: ChainComplex, W: ChainComplex, shift: int = 0) -> GradedMap:
    return GradedMap(V, W, shift, check=False)


def differential_map(V: ChainComplex) -> GradedMap:
    """The differential of V viewed as a shift -1 element of hom(V, V)."""
    return GradedMap(V, V, -1, V.global_d(), check=False)


def hom_boundary(kappa: GradedMap) -> GradedMap:
    """(d kappa)_m = d^W kappa_m - (-1)^n kappa_{m-1} d^V for a shift n map."""
    sign = ONE if kappa.shift % 2 == 0 else -ONE
    mat = kappa.target.global_d() * kappa.matrix - (kappa.matrix * kappa.source.global_d()) * sign
    return GradedMap(kappa.source, kappa.target, kappa.shift - 1, mat, check=False)


def is_chain_map(f: GradedMap) -> bool:
    return f.shift == 0 and hom_boundary(f).is_zero()


# ---------------------------------------------------------------------------
# homology


def homology_dims(V: ChainComplex) -> dict[int, int]:
    """dim H_k = dim ker d_k - rank d_{k+1} for every degree of the support."""
    out = {}
    for k in V.degrees:
        kernel = V.dim(k) - rank(V.d(k))
        out[k] = kernel - rank(V.d(k + 1))
    return out


def is_acyclic(V: ChainComplex) -> bool:
    return all(v == 0 for v in homology_dims(V).values())


def cycle_basis(V: ChainComplex, k: int) -> fmpq_mat:
    """Columns span ker d_k inside V_k."""
    return kernel_matrix(V.d(k))


def induced_homology_ranks(f: GradedMap) -> dict[int, int]:
    """Rank of H_k(f) for a chain map f : V -> W, computed from cycle bases."""
    V, W = f.source, f.target
    out = {}
    for k in sorted(set(V.degrees) | set(W.degrees)):
        z = cycle_basis(V, k)
        if z.ncols() == 0 or W.dim(k) == 0:
            out[k] = 0
            continue
        image = f.component(k) * z
        boundaries = W.d(k + 1)
        both = image if boundaries.ncols() == 0 else _hcat(image, boundaries)
        out[k] = rank(both) - rank(boundaries)
    return out


def _hcat(a: fmpq_mat, b: fmpq_mat) -> fmpq_mat:
    out = fmpq_mat(a.nrows(), a.ncols() + b.ncols())
    for i, j, v in nonzero_entries(a):
        out[i, j] = v
    for i, j, v in nonzero_entries(b):
        out[i, a.ncols() + j] = v
    return out


# ---------------------------------------------------------------------------
# constructions


def direct_sum(V: ChainComplex, W: ChainComplex) -> ChainComplex:
    """V + W with the block diagonal differential (labels must not clash)."""
    basis = {}
    for k in sorted(set(V.degrees) | set(W.degrees)):
        basis[k] = list(V.labels(k)) + list(W.labels(k))
    diff = {}
    for k in basis:
        m = fmpq_mat(len(basis.get(k - 1, ())), len(basis[k]))
        for i, j, v in nonzero_entries(V.d(k)):
            m[i, j] = v
        r0, c0 = V.dim(k - 1), V.dim(k)
        for i, j, v in nonzero_entries(W.d(k)):
            m[r0 + i, c0 + j] = v
        diff[k] = m
    return ChainComplex(basis, diff)


def shift(V: ChainComplex, k: int) -> ChainComplex:
    """V[k]_m = V_{m-k} with differential (-1)^k d."""
    sign = ONE if k % 2 == 0 else -ONE
    basis = {m + k: V.basis[m] for m in V.degrees}
    diff = {m + k: V.d(m) * sign for m in V.degrees}
    return ChainComplex(basis, diff)


def mapping_cone(f: GradedMap) -> ChainComplex:
    """cone(f)_k = W_k + V_{k-1}, d(w, v) = (dw + f v, -dv)."""
    if f.shift != 0:
        raise ChainComplexError("mapping cone needs a chain map")
    V, W = f.source, f.target
    degrees = sorted(set(W.degrees) | {k + 1 for k in V.degrees})
    basis = {k: [f"t[{a}]" for a in W.labels(k)] + [f"s[{a}]" for a in V.labels(k - 1)]
             for k in degrees}
    diff = {}
    for k in degrees:
        rows_w, rows_v = W.dim(k - 1), V.dim(k - 2)
        cols_w, cols_v = W.dim(k), V.dim(k - 1)
        m = fmpq_mat(rows_w + rows_v, cols_w + cols_v)
        for i, j, v in nonzero_entries(W.d(k)):
            m[i, j] = v
        for i, j, v in nonzero_entries(f.component(k - 1)):
            m[i, cols_w + j] = v
        for i, j, v in nonzero_entries(V.d(k - 1)):
            m[rows_w + i, cols_w + j] = -v
        diff[k] = m
    return ChainComplex(basis, diff)


def is_quasi_iso(f: GradedMap) -> bool:
    return is_acyclic(mapping_cone(f))


def tensor(V: ChainComplex, W: ChainComplex) -> ChainComplex:
    """V (x) W with d(v w) = dv w + (-1)^|v| v dw; basis ordered by (|v|, v, w)."""
    return TensorProduct(V, W).complex


class TensorProduct:
    """Tensor product with index bookkeeping for elementary tensors."""

    def __init__(self, V: ChainComplex, W: ChainComplex):
        self.left = V
        self.right = W
        basis: dict[int, list[str]] = {}
        self._pos: dict[tuple[str, str], tuple[int, int]] = {}
        for i in V.degrees:
            for j in W.degrees:
                cell = basis.setdefault(i + j, [])
                for a in V.labels(i):
                    for b in W.labels(j):
                        self._pos[(a, b)] = (i + j, len(cell))
                        cell.append(f"{a}⊗{b}")
        diff = {}
        for m, labels in basis.items():
            rows = len(basis.get(m - 1, ()))
            diff[m] = fmpq_mat(rows, len(labels))
        for (a, b), (m, col) in self._pos.items():
            i, ia = V.locate(a)
            j, jb = W.locate(b)
            dv = V.d(i)
            for r in range(dv.nrows()):
                v = dv[r, ia]
                if v:
                    row = self._pos[(V.labels(i - 1)[r], b)][1]
                    diff[m][row, col] += v
            dw = W.d(j)
            sign = ONE if i % 2 == 0 else -ONE
            for r in range(dw.nrows()):
                v = dw[r, jb]
                if v:
                    row = self._pos[(a, W.labels(j - 1)[r])][1]
                    diff[m][row, col] += sign * v
        self.complex = ChainComplex(basis, diff)

    def index(self, a: str, b: str) -> int:
        """Global index of the elementary tensor a (x) b."""
        m, i = self._pos[(a, b)]
        return self.complex.offset(m) + i

    def pairs(self) -> Iterable[tuple[str, str]]:
        return self._pos.keys()


def tensor_maps(f: GradedMap, g: GradedMap) -> GradedMap:
    """(f (x) g)(v w) = (-1)^{|g||v|} f(v) (x) g(w)."""
    src = TensorProduct(f.source, g.source)
    tgt = TensorProduct(f.target, g.target)
    out = fmpq_mat(tgt.complex.total_dim, src.complex.total_dim)
    fl, gl = f.target.global_labels, g.target.global_labels
    for (a, b) in src.pairs():
        col = src.index(a, b)
        deg_a = f.source.degree_of(a)
        sign = -ONE if (g.shift * deg_a) % 2 else ONE
        fa = f.matrix
        ga = g.matrix
        ja, jb = f.source.global_index(a), g.source.global_index(b)
        fcol = [(r, fa[r, ja]) for r in range(fa.nrows()) if fa[r, ja]]
        gcol = [(r, ga[r, jb]) for r in range(ga.nrows()) if ga[r, jb]]
        for r1, v1 in fcol:
            for r2, v2 in gcol:
                out[tgt.index(fl[r1], gl[r2]), col] += sign * v1 * v2
    return GradedMap(src.complex, tgt.complex, f.shift + g.shift, out, check=False)


def braiding(V: ChainComplex, W: ChainComplex) -> GradedMap:
    """v (x) w -> (-1)^{|v||w|} w (x) v."""
    src = TensorProduct(V, W)
    tgt = TensorProduct(W, V)
    out = fmpq_mat(tgt.complex.total_dim, src.complex.total_dim)
    for (a, b) in src.pairs():
        sign = -ONE if (V.degree_of(a) * W.degree_of(b)) % 2 else ONE
        out[tgt.index(b, a), src.index(a, b)] = sign
    return GradedMap(src.complex, tgt.complex, 0, out, check=False)


class WedgeSquare:
    """V ^ V as the quotient of V (x) V by v w + (-1)^{|v||w|} w v.

    The canonical basis consists of pairs a <= b in the global basis order of
    V, where a == b is kept only in odd degree.  ``projection`` is the
    quotient map and ``section`` sends [a, b] to a (x) b.
    """

    def __init__(self, V: ChainComplex):
        self.space = V
        self.tensor = TensorProduct(V, V)
        labels = V.global_labels
        degs = V.global_degrees
        basis: dict[int, list[str]] = {}
        self._pos: dict[tuple[int, int], tuple[int, int]] = {}
        for a in range(len(labels)):
            for b in range(a, len(labels)):
                if a == b and degs[a] % 2 == 0:
                    continue
                m = degs[a] + degs[b]
                cell = basis.setdefault(m, [])
                self._pos[(a, b)] = (m, len(cell))
                cell.append(f"{labels[a]}∧{labels[b]}")
        skeleton = ChainComplex(basis, validate=False)
        tc = self.tensor.complex
        proj = fmpq_mat(skeleton.total_dim, tc.total_dim)
        sect = fmpq_mat(tc.total_dim, skeleton.total_dim)
        for a in range(len(labels)):
            for b in range(len(labels)):
                col = self.tensor.index(labels[a], labels[b])
                if a < b or (a == b and degs[a] % 2):
                    m, i = self._pos[(a, b)]
                    proj[skeleton.offset(m) + i, col] = ONE
                elif a > b:
                    m, i = self._pos[(b, a)]
                    sign = ONE if (degs[a] * degs[b]) % 2 else -ONE
                    proj[skeleton.offset(m) + i, col] = sign
        for (a, b), (m, i) in self._pos.items():
            sect[self.tensor.index(labels[a], labels[b]), skeleton.offset(m) + i] = ONE
        d_wedge = proj * tc.global_d() * sect
        diff = {}
        for m in skeleton.degrees:
            rows = list(skeleton.global_slice(m - 1))
            cols = list(skeleton.global_slice(m))
            diff[m] = submatrix(d_wedge, rows, cols)
        self.complex = ChainComplex(basis, diff)
        self.projection = GradedMap(tc, self.complex, 0, proj, check=False)
        self.section = GradedMap(self.complex, tc, 0, sect, check=False)


def wedge_square(V: ChainComplex) -> ChainComplex:
    return WedgeSquare(V).complex
