"""Bar model of the derived left Kan extension along L : C -> BZ.

The derived object X~ is a two-row bicomplex indexed by the spiral.  Row 0
has a copy of X(N) for every node (n, N), row 1 a copy of X(sf) for every
edge (n, f), and

    delta(n, f, x) = (-1)^|x| ((n + L(f), sf, x) - (n, tf, X(f) x)),

with the horizontal differential inherited from X.  Everything here is
stored blockwise: a ``BlockMap`` sends a cell (node, edge, or any other
hashable key) to a matrix acting on the full graded space of that cell.

Maps are locally finite, so identities are checked per cell with no
truncation error.  Homology statements use a finite level window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from flint import fmpq, fmpq_mat

from .bicomplex import Bicomplex, tot_oplus
from .chain_core import ChainComplex, GradedMap, homology_dims, identity_map
from .exact_algebra import ONE, MatrixEquations, identity, is_zero, nonzero_entries, scalar
from .equivalence import graded_mask
from .site import (
    EDGES,
    IDENTITIES,
    OBJECTS,
    Mor,
    Obj,
    RceDiagram,
    SpiralEdge,
    SpiralNode,
    check_homotopy_time_slice,
    compose,
    edges_in_window,
    localize,
    morphisms_into,
    nodes_in_window,
    spiral_path,
)


class TimeSliceError(ValueError):
    """The diagram does not send every morphism to a quasi-isomorphism."""


# ---------------------------------------------------------------------------
# block maps


class BlockMap:
    """A sparse matrix of matrices: blocks[(target_cell, source_cell)]."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Mapping[tuple[Hashable, Hashable], fmpq_mat] | None = None):
        self.blocks: dict[tuple[Hashable, Hashable], fmpq_mat] = {}
        for key, m in (blocks or {}).items():
            self.add_block(key[0], key[1], m)

    def add_block(self, tgt, src, m: fmpq_mat) -> None:
        key = (tgt, src)
        if key in self.blocks:
            self.blocks[key] = self.blocks[key] + m
        else:
            self.blocks[key] = m

    def get(self, tgt, src) -> fmpq_mat | None:
        return self.blocks.get((tgt, src))

    def __add__(self, other: "BlockMap") -> "BlockMap":
        out = BlockMap(self.blocks)
        for (t, s), m in other.blocks.items():
            out.add_block(t, s, m)
        return out

    def __neg__(self) -> "BlockMap":
        return BlockMap({k: -m for k, m in self.blocks.items()})

    def __sub__(self, other: "BlockMap") -> "BlockMap":
        return self + (-other)

    def scaled(self, c) -> "BlockMap":
        c = scalar(c)
        return BlockMap({k: m * c for k, m in self.blocks.items()})

    def __matmul__(self, other: "BlockMap") -> "BlockMap":
        by_target: dict[Hashable, list[tuple[Hashable, fmpq_mat]]] = {}
        for (t, s), m in other.blocks.items():
            by_target.setdefault(t, []).append((s, m))
        out = BlockMap()
        for (t, mid), a in self.blocks.items():
            for s, b in by_target.get(mid, ()):
                out.add_block(t, s, a * b)
        return out

    def transpose(self) -> "BlockMap":
        return BlockMap({(s, t): m.transpose() for (t, s), m in self.blocks.items()})

    def nonzero_blocks(self) -> dict[tuple[Hashable, Hashable], fmpq_mat]:
        return {k: m for k, m in self.blocks.items() if not is_zero(m)}

    def is_zero(self) -> bool:
        return not self.nonzero_blocks()

    def column(self, src) -> dict[Hashable, fmpq_mat]:
        return {t: m for (t, s), m in self.blocks.items() if s == src}

    def restrict_source(self, keep: Callable[[Hashable], bool]) -> "BlockMap":
        return BlockMap({(t, s): m for (t, s), m in self.blocks.items() if keep(s)})

    def restrict_target(self, keep: Callable[[Hashable], bool]) -> "BlockMap":
        return BlockMap({(t, s): m for (t, s), m in self.blocks.items() if keep(t)})


def block_identity(spaces: Mapping[Hashable, ChainComplex]) -> BlockMap:
    return BlockMap({(k, k): identity(V.total_dim) for k, V in spaces.items()})


# ---------------------------------------------------------------------------
# cellular complexes


class CellularComplex:
    """A complex assembled from cells, each a copy of a graded space.

    ``cells`` maps a key to (vertical degree, space, label prefix).  The
    differential is a BlockMap whose blocks are global matrices between the
    spaces.  Horizontal blocks keep the vertical degree and vertical blocks
    lower it by one.
    """

    def __init__(self, cells: Sequence[tuple[Hashable, int, ChainComplex, str]], differential: BlockMap):
        self.order = [c[0] for c in cells]
        self.vertical = {c[0]: c[1] for c in cells}
        self.spaces = {c[0]: c[2] for c in cells}
        self.prefix = {c[0]: c[3] for c in cells}
        self.differential = differential
        self._bicomplex = None
        self._total = None
        self._index = None

    def bicomplex(self) -> Bicomplex:
        if self._bicomplex is None:
            basis: dict[tuple[int, int], list[str]] = {}
            where: dict[Hashable, dict[int, int]] = {}
            for key in self.order:
                p, V = self.vertical[key], self.spaces[key]
                where[key] = {}
                for q in V.degrees:
                    cell = basis.setdefault((p, q), [])
                    where[key][q] = len(cell)
                    cell.extend(self.prefix[key] + lab for lab in V.labels(q))
            vert: dict[tuple[int, int], fmpq_mat] = {}
            horiz: dict[tuple[int, int], fmpq_mat] = {}
            for (t, s), m in self.differential.blocks.items():
                ps, pt = self.vertical[s], self.vertical[t]
                store, step = (horiz, 0) if ps == pt else (vert, -1)
                if pt != ps + step:
                    raise ValueError(f"block {t} <- {s} is neither vertical nor horizontal")
                S, T = self.spaces[s], self.spaces[t]
                sdeg, tdeg = S.global_degrees, T.global_degrees
                for i, j, v in nonzero_entries(m):
                    qs, qt = sdeg[j], tdeg[i]
                    if store is horiz and qt != qs - 1 or store is vert and qt != qs:
                        raise ValueError(f"block {t} <- {s} has the wrong degree")
                    src_cell, tgt_cell = (ps, qs), (pt, qt)
                    mat = store.get(src_cell)
                    if mat is None:
                        mat = fmpq_mat(len(basis[tgt_cell]), len(basis[src_cell]))
                        store[src_cell] = mat
                    row = where[t][qt] + (i - T.offset(qt))
                    col = where[s][qs] + (j - S.offset(qs))
                    mat[row, col] += v
            self._bicomplex = Bicomplex(basis, vert, horiz, validate=False)
            self._where = where
        return self._bicomplex

    def total(self) -> ChainComplex:
        if self._total is None:
            self._total = tot_oplus(self.bicomplex())
        return self._total

    def index(self, key: Hashable) -> list[int]:
        """Global indices in ``total()`` of the basis of a cell, in its global order."""
        if self._index is None:
            total = self.total()
            self._index = {}
            for k in self.order:
                p, V = self.vertical[k], self.spaces[k]
                self._index[k] = [total.global_index(f"{p},{V.degree_of(lab)}:{self.prefix[k]}{lab}")
                                  for lab in V.global_labels]
        return self._index[key]

    def to_total_matrix(self, blocks: BlockMap, source: "CellularComplex | None" = None) -> fmpq_mat:
        """Scatter a BlockMap between two cellular complexes into one matrix."""
        source = source or self
        out = fmpq_mat(self.total().total_dim, source.total().total_dim)
        for (t, s), m in blocks.blocks.items():
            rows, cols = self.index(t), source.index(s)
            for i, j, v in nonzero_entries(m):
                out[rows[i], cols[j]] += v
        return out

    def check_square_zero(self) -> bool:
        return (self.differential @ self.differential).is_zero()

    def parity(self, key: Hashable) -> fmpq_mat:
        """(-1)^(total degree) on a cell."""
        par = self.spaces[key].parity()
        return par if self.vertical[key] % 2 == 0 else -par


# ---------------------------------------------------------------------------
# the derived object


def node_prefix(node: SpiralNode) -> str:
    return f"({node.level},{node.obj.value},"


def edge_prefix(edge: SpiralEdge) -> str:
    return f"({edge.level},{edge.mor.value},"


class DerivedObject(CellularComplex):
    """The level window |n| <= radius of X~; edges need both ends inside."""

    def __init__(self, D: RceDiagram, radius: int):
        self.diagram = D
        self.radius = radius
        self.nodes = nodes_in_window(radius)
        self.edges = edges_in_window(radius)
        cells = [(v, 0, D[v.obj], node_prefix(v)) for v in self.nodes]
        cells += [(e, 1, D[e.mor.source], edge_prefix(e)) for e in self.edges]
        super().__init__(cells, tilde_blocks(D, self.nodes, self.edges))

    def space(self, cell) -> ChainComplex:
        return self.spaces[cell]


def tilde_blocks(D: RceDiagram, nodes: Iterable[SpiralNode], edges: Iterable[SpiralEdge]) -> BlockMap:
    """The total differential of X~ on the given nodes and edges."""
    out = BlockMap()
    for v in nodes:
        out.add_block(v, v, D[v.obj].global_d())
    for e in edges:
        S = D[e.mor.source]
        par = S.parity()
        out.add_block(e, e, S.global_d())
        out.add_block(e.source, e, par)
        out.add_block(e.target, e, -(D.map(e.mor).matrix * par))
    return out


# ---------------------------------------------------------------------------
# elements


Symbol = tuple  # (level, Obj or Mor, label)


@dataclass
class DerivedElement:
    """A finite combination of symbols (n, N, x) and (n, f, x)."""

    terms: dict[Symbol, fmpq] = field(default_factory=dict)

    @staticmethod
    def basis(level: int, where, label: str) -> "DerivedElement":
        return DerivedElement({(level, where, label): ONE})

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, fmpq(0)) + v
        return DerivedElement({k: v for k, v in out.items() if v})

    def __sub__(self, other):
        return self + other.scaled(-1)

    def scaled(self, c) -> "DerivedElement":
        c = scalar(c)
        return DerivedElement({k: v * c for k, v in self.terms.items() if v * c})

    def __eq__(self, other):
        if not isinstance(other, DerivedElement):
            return NotImplemented
        a = {k: v for k, v in self.terms.items() if v}
        b = {k: v for k, v in other.terms.items() if v}
        return a == b

    def is_zero(self) -> bool:
        return not any(self.terms.values())

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = [f"{v}*({n},{w},{x})" for (n, w, x), v in sorted(self.terms.items(), key=str)]
        return " + ".join(parts)


def _cell_of(symbol: Symbol):
    n, where, _ = symbol
    return SpiralNode(n, where) if isinstance(where, Obj) else SpiralEdge(n, where)


def _space_of(D: RceDiagram, cell) -> ChainComplex:
    return D[cell.obj] if isinstance(cell, SpiralNode) else D[cell.mor.source]


def _symbol(cell, label: str) -> Symbol:
    return (cell.level, cell.obj if isinstance(cell, SpiralNode) else cell.mor, label)


def element_to_blocks(D: RceDiagram, e: DerivedElement) -> dict:
    out = {}
    for sym, c in e.terms.items():
        cell = _cell_of(sym)
        V = _space_of(D, cell)
        vec = out.setdefault(cell, fmpq_mat(V.total_dim, 1))
        vec[V.global_index(sym[2]), 0] += c
    return out


def blocks_to_element(D: RceDiagram, vecs: Mapping) -> DerivedElement:
    terms = {}
    for cell, vec in vecs.items():
        labels = _space_of(D, cell).global_labels
        for i in range(vec.nrows()):
            if vec[i, 0]:
                sym = _symbol(cell, labels[i])
                terms[sym] = terms.get(sym, fmpq(0)) + vec[i, 0]
    return DerivedElement({k: v for k, v in terms.items() if v})


def apply_blocks(m: BlockMap, vecs: Mapping) -> dict:
    out = {}
    for (t, s), blk in m.blocks.items():
        if s in vecs:
            r = blk * vecs[s]
            out[t] = out[t] + r if t in out else r
    return out


def tilde_differential(D: RceDiagram, e: DerivedElement) -> DerivedElement:
    """delta + d on X~, evaluated on a finite element."""
    vecs = element_to_blocks(D, e)
    nodes = [c for c in vecs if isinstance(c, SpiralNode)]
    edges = [c for c in vecs if isinstance(c, SpiralEdge)]
    return blocks_to_element(D, apply_blocks(tilde_blocks(D, nodes, edges), vecs))


def level_shift(e: DerivedElement, k: int) -> DerivedElement:
    return DerivedElement({(n + k, w, x): v for (n, w, x), v in e.terms.items()})


def rce_lin(e: DerivedElement) -> DerivedElement:
    """The RCE automorphism: add 1 to every level."""
    return level_shift(e, 1)


def rce_lin_inverse(e: DerivedElement) -> DerivedElement:
    return level_shift(e, -1)


def iota(D: RceDiagram, x: Mapping[str, object]) -> DerivedElement:
    """x in X(M) |-> (0, M, x)."""
    return DerivedElement({(0, Obj.M, lab): scalar(c) for lab, c in x.items() if scalar(c)})


def iota_blocks(D: RceDiagram) -> BlockMap:
    return BlockMap({(SpiralNode(0, Obj.M), "X(M)"): identity(D[Obj.M].total_dim)})


# ---------------------------------------------------------------------------
# the resolution Q(X)


def resolution_cells(N: Obj) -> list[tuple[int, Mor]]:
    """Cells of Q(X)(N): (0, g) for g into N and (1, f) for non-identity f into N."""
    out = [(0, g) for g in morphisms_into(N)]
    out += [(1, f) for f in EDGES if f.target is N]
    return out


class Resolution(CellularComplex):
    """Q(X)(N): (g, x) with tg = N in row 0 and (id_N, f, x) in row 1."""

    def __init__(self, D: RceDiagram, N: Obj):
        self.diagram = D
        self.obj = N
        cells = []
        for key in resolution_cells(N):
            p, g = key
            prefix = f"({g.value}," if p == 0 else f"({IDENTITIES[N].value},{g.value},"
            cells.append((key, p, D[g.source], prefix))
        blocks = BlockMap()
        for key in resolution_cells(N):
            p, g = key
            S = D[g.source]
            blocks.add_block(key, key, S.global_d())
            if p == 1:
                par = S.parity()
                blocks.add_block((0, g), key, par)
                blocks.add_block((0, IDENTITIES[N]), key, -(D.map(g).matrix * par))
        super().__init__(cells, blocks)


def q_resolution(D: RceDiagram) -> dict:
    """Q(X)(N) for every object together with Q(X)(h) for every edge h."""
    res = {N: Resolution(D, N) for N in OBJECTS}
    maps = {h: resolution_map(D, res, h) for h in EDGES}
    return {"objects": res, "maps": maps}


def resolution_map(D: RceDiagram, res: Mapping[Obj, Resolution], h: Mor) -> BlockMap:
    """Post-composition with h.  Row 1 of Q(X)(sh) is empty for the edges of C."""
    src = res[h.source]
    out = BlockMap()
    for key in src.order:
        p, g = key
        if p == 0:
            out.add_block((0, compose(h, g)), key, identity(src.spaces[key].total_dim))
        elif h.is_identity:
            out.add_block(key, key, identity(src.spaces[key].total_dim))
        else:
            raise ValueError("post-composition of a row 1 cell with a non-identity")
    return out


def q_map(D: RceDiagram, N: Obj) -> BlockMap:
    """q : Q(X)(N) -> X(N), (g, x) -> X(g) x and row 1 -> 0."""
    out = BlockMap()
    for g in morphisms_into(N):
        out.add_block("X", (0, g), D.map(g).matrix)
    return out


def s_map(D: RceDiagram, N: Obj) -> BlockMap:
    """s : X(N) -> Q(X)(N), x -> (id_N, x)."""
    return BlockMap({((0, IDENTITIES[N]), "X"): identity(D[N].total_dim)})


def s_q_homotopy(D: RceDiagram, N: Obj) -> BlockMap:
    """h(f, x) = -(-1)^|x| (id_N, f, x), so that s q - id = D h + h D on Q(X)(N)."""
    out = BlockMap()
    for f in EDGES:
        if f.target is N:
            out.add_block((1, f), (0, f), -D[f.source].parity())
    return out


def s_q_defect(D: RceDiagram, N: Obj) -> BlockMap:
    """s q - id - (D h + h D) on Q(X)(N), blockwise."""
    Q = Resolution(D, N)
    h = s_q_homotopy(D, N)
    dQ = Q.differential
    return s_map(D, N) @ q_map(D, N) - block_identity(Q.spaces) - (dQ @ h + h @ dQ)


def s_q_homotopy_by_solve(D: RceDiagram, N: Obj) -> fmpq_mat:
    """Some homotopy for s q ~ id on Tot Q(X)(N), found by a linear solve."""
    Q = Resolution(D, N)
    total = Q.total()
    single = CellularComplex([("X", 0, D[N], "")], BlockMap({("X", "X"): D[N].global_d()}))
    sq = Q.to_total_matrix(s_map(D, N), single) * single.to_total_matrix(q_map(D, N), Q)
    n = total.total_dim
    dq = total.global_d()
    eqs = MatrixEquations()
    eqs.unknown("h", n, n, graded_mask(total, total, 1))
    eqs.equation([(dq, "h", None), (None, "h", dq)], sq - identity(n))
    sol = eqs.solve()
    if sol is None:
        raise ArithmeticError("s q is not homotopic to the identity")
    return sol["h"]


def derived_unit(D: RceDiagram, N: Obj) -> BlockMap:
    """eta : Q(X)(N) -> X~, (g, x) -> (L(g), sg, x) and (id, f, x) -> (0, f, x)."""
    out = BlockMap()
    for key in resolution_cells(N):
        p, g = key
        dim = D[g.source].total_dim
        if p == 0:
            out.add_block(SpiralNode(localize(g), g.source), key, identity(dim))
        else:
            out.add_block(SpiralEdge(0, g), key, identity(dim))
    return out


# ---------------------------------------------------------------------------
# derived counit


def pullback_along_localization(Y: ChainComplex, shift_map: GradedMap) -> RceDiagram:
    """L^* Y: every object Y, i- acts by Y(1) and the other edges by the identity."""
    maps = {f: (shift_map if f is Mor.IM else identity_map(Y)) for f in EDGES}
    return RceDiagram({N: Y for N in OBJECTS}, maps)


@dataclass
class CounitData:
    diagram: RceDiagram
    derived: DerivedObject
    eps: BlockMap
    kappa: BlockMap
    rho: BlockMap


def _power(A: fmpq_mat, A_inv: fmpq_mat, k: int) -> fmpq_mat:
    out = identity(A.nrows())
    base = A if k >= 0 else A_inv
    for _ in range(abs(k)):
        out = base * out
    return out


def derived_counit(Y: ChainComplex, shift_map: GradedMap, radius: int) -> CounitData:
    """eps, kappa and the homotopy rho with kappa eps - id = d(rho) on the window."""
    D = pullback_along_localization(Y, shift_map)
    X = DerivedObject(D, radius)
    A = shift_map.matrix
    A_inv = A.inv()
    par = Y.parity()
    eps = BlockMap()
    for v in X.nodes:
        eps.add_block("Y", v, _power(A, A_inv, v.level))
    kappa = BlockMap({(SpiralNode(0, Obj.M), "Y"): identity(Y.total_dim)})
    rho = BlockMap()
    origin = SpiralNode(0, Obj.M)
    for v in X.nodes:
        for i, (edge, _) in enumerate(spiral_path(origin, v)):
            sign = -ONE if i % 2 == 0 else ONE
            rho.add_block(edge, v, _power(A, A_inv, v.level - edge.source.level) * par * sign)
    return CounitData(D, X, eps, kappa, rho)


def counit_defects(data: CounitData) -> dict[str, BlockMap]:
    X = data.derived
    ident = block_identity(X.spaces)
    dX = X.differential
    Y = data.diagram[Obj.M]
    return {
        "eps kappa - id": data.eps @ data.kappa - BlockMap({("Y", "Y"): identity(Y.total_dim)}),
        "kappa eps - id - d(rho)": data.kappa @ data.eps - ident - (dX @ data.rho + data.rho @ dX),
        "eps chain map": data.eps @ dX - BlockMap({("Y", "Y"): Y.global_d()}) @ data.eps,
    }


# ---------------------------------------------------------------------------
# cokernel of X(M) -> X~ in filtration stages


def coker_stage(D: RceDiagram, side: int, p: int) -> CellularComplex:
    """F^R_p (side=+1) or F^L_p (side=-1): nodes and edges k <= p away from (0, M)."""
    cells = []
    blocks = BlockMap()
    nodes = [SpiralNode.at(side * (k + 1)) for k in range(p + 1)]
    edges = [SpiralEdge.at(min(side * k, side * (k + 1))) for k in range(p + 1)]
    inside = set(nodes)
    for v in nodes:
        cells.append((v, 0, D[v.obj], node_prefix(v)))
        blocks.add_block(v, v, D[v.obj].global_d())
    for e in edges:
        S = D[e.mor.source]
        par = S.parity()
        cells.append((e, 1, S, edge_prefix(e)))
        blocks.add_block(e, e, S.global_d())
        if e.source in inside:
            blocks.add_block(e.source, e, par)
        if e.target in inside:
            blocks.add_block(e.target, e, -(D.map(e.mor).matrix * par))
    return CellularComplex(cells, blocks)


def coker_stage_homology(D: RceDiagram, side: int, p: int) -> dict[int, int]:
    return homology_dims(coker_stage(D, side, p).total())


def coker_acyclicity_check(D: RceDiagram, p_max: int) -> bool:
    """Every stage F^R_p and F^L_p with p <= p_max is acyclic."""
    if not check_homotopy_time_slice(D):
        raise TimeSliceError("the diagram fails the homotopy time-slice axiom")
    for side in (1, -1):
        for p in range(p_max + 1):
            if any(coker_stage_homology(D, side, p).values()):
                return False
    return True


# ---------------------------------------------------------------------------
# general bar construction for a finite category


class FiniteCategory:
    """Objects, morphisms (name -> (source, target)) and a composition table."""

    def __init__(self, objects: Sequence[str], morphisms: Mapping[str, tuple[str, str]],
                 composition: Mapping[tuple[str, str], str]):
        self.objects = list(objects)
        self.morphisms = dict(morphisms)
        self.ids = {}
        for name, (s, t) in self.morphisms.items():
            if name.startswith("id_"):
                self.ids[s] = name
        self.table = dict(composition)

    def is_identity(self, f: str) -> bool:
        return f in self.ids.values()

    def source(self, f: str) -> str:
        return self.morphisms[f][0]

    def target(self, f: str) -> str:
        return self.morphisms[f][1]

    def compose(self, g: str, f: str) -> str:
        if self.target(f) != self.source(g):
            raise ValueError(f"{g} o {f} is not composable")
        if self.is_identity(f):
            return g
        if self.is_identity(g):
            return f
        return self.table[(g, f)]

    def chains(self, m: int, target: str) -> list[tuple[str, ...]]:
        """Composable tuples (f1, ..., fm) of non-identities with t(f1) = target."""
        if m == 0:
            return [()]
        out = []
        for f in self.morphisms:
            if not self.is_identity(f) and self.target(f) == target:
                for rest in self.chains(m - 1, self.source(f)):
                    out.append((f,) + rest)
        return out


def bar_construction(C: FiniteCategory, Dcat: FiniteCategory, functor: Mapping[str, str],
                     X: Mapping[str, ChainComplex], Xmap: Mapping[str, GradedMap],
                     d: str, max_m: int) -> CellularComplex:
    """The normalized bar bicomplex B(D, C, X)(d) up to vertical degree max_m.

    ``functor`` sends objects and morphisms of C to those of D.  Cells are
    (c, g, f1, ..., fm) with g : F(c) -> d and composable non-identities,
    carrying X(s fm) (or X(c) when m = 0).
    """
    def space_obj(cell):
        c, g, fs = cell
        return C.source(fs[-1]) if fs else c

    cells = []
    keys = []
    for m in range(max_m + 1):
        for c in C.objects:
            for g in Dcat.morphisms:
                if Dcat.source(g) != functor[c] or Dcat.target(g) != d:
                    continue
                for fs in C.chains(m, c):
                    key = (c, g, fs)
                    keys.append(key)
                    label = "(" + ",".join([c, g] + list(fs)) + ","
                    cells.append((key, m, X[space_obj(key)], label))
    present = set(keys)
    blocks = BlockMap()
    for key in keys:
        c, g, fs = key
        V = X[space_obj(key)]
        blocks.add_block(key, key, V.global_d())
        m = len(fs)
        if m == 0:
            continue
        par = V.parity()
        first = (C.source(fs[0]), Dcat.compose(g, functor[fs[0]]), fs[1:])
        terms = [(first, ONE, None)]
        for j in range(1, m):
            comp = C.compose(fs[j - 1], fs[j])
            if C.is_identity(comp):
                continue
            sign = ONE if j % 2 == 0 else -ONE
            terms.append(((c, g, fs[:j - 1] + (comp,) + fs[j + 1:]), sign, None))
        sign = ONE if m % 2 == 0 else -ONE
        terms.append(((c, g, fs[:-1]), sign, Xmap[fs[-1]].matrix))
        for tgt, sign, act in terms:
            if tgt not in present:
                continue
            mat = par if act is None else act * par
            blocks.add_block(tgt, key, mat * sign)
    return CellularComplex(cells, blocks)
