"""Zig-zag maps along the spiral and their coherence homotopies.

For nodes u, v of the spiral, Z^v_u : X(u) -> X(v) walks the unique path
from u to v, applying X(f) when a step follows an edge and the chosen
quasi-inverse f^{-1} when it runs against it.  The homotopies

    Lam^{(n,f)}_{v}  : f Z^{(n+L f, sf)}_v - Z^{(n, tf)}_v = d(Lam)
    Gam^{v}_{(n',f')}: Z^v_{(n', tf')} f' - Z^v_{(n'+L f', sf')} = d(Gam)
    Xi^{(n,f)}_{(n',f')}: f Gam^{(n+L f, sf)} - Gam^{(n, tf)}
                          + Lam_{(n'+L f', sf')} - Lam_{(n', tf')} f' = d(Xi)

are read off from the equivalence data of each edge after deciding which
endpoints face each other.  The decision uses spiral coordinates only.
"""

from __future__ import annotations

import enum
from typing import Mapping

from flint import fmpq_mat

from .bar_kan import BlockMap, tilde_blocks
from .chain_core import ChainComplex, GradedMap, hom_boundary
from .equivalence import EquivalenceData, build_equivalence, trivial_equivalence, verify_equivalence
from .exact_algebra import identity
from .site import ALONG, EDGES, Mor, Obj, RceDiagram, SpiralEdge, SpiralNode, spiral_path


class AlignmentCase(enum.Enum):
    A1 = "A1"  # edge, node: the node is on the source side
    A2 = "A2"  # edge, node: the node is on the target side
    B1 = "B1"  # node, edge: the node is on the target side
    B2 = "B2"  # node, edge: the node is on the source side
    C1 = "C1"  # edge, edge: f faces f' with its source, f' faces f with its target
    C2 = "C2"  # both face each other with their sources
    C3 = "C3"  # both face each other with their targets
    C4 = "C4"  # f faces f' with its target, f' faces f with its source
    C5 = "C5"  # the same edge


def _near_source(edge: SpiralEdge, coord: float) -> bool:
    return abs(coord - edge.source.coord) < abs(coord - edge.target.coord)


def classify(a, b) -> AlignmentCase:
    """Case for (edge, node), (node, edge) or (edge, edge)."""
    if isinstance(a, SpiralEdge) and isinstance(b, SpiralNode):
        return AlignmentCase.A1 if _near_source(a, b.coord) else AlignmentCase.A2
    if isinstance(a, SpiralNode) and isinstance(b, SpiralEdge):
        return AlignmentCase.B2 if _near_source(b, a.coord) else AlignmentCase.B1
    if isinstance(a, SpiralEdge) and isinstance(b, SpiralEdge):
        if a == b:
            return AlignmentCase.C5
        f_source = _near_source(a, b.lower + 0.5)
        g_source = _near_source(b, a.lower + 0.5)
        if f_source:
            return AlignmentCase.C2 if g_source else AlignmentCase.C1
        return AlignmentCase.C4 if g_source else AlignmentCase.C3
    raise TypeError("classify takes (edge, node), (node, edge) or (edge, edge)")


def _as_edge(e) -> SpiralEdge | None:
    """A spiral edge, or None for (level, identity morphism)."""
    if isinstance(e, SpiralEdge):
        return e
    level, mor = e
    return None if mor.is_identity else SpiralEdge(level, mor)


class ZigzagContext:
    """A diagram with equivalence data for each edge morphism.

    Zig-zag matrices are cached by coordinates reduced modulo the Z-action,
    so shifted queries reuse the same entries.
    """

    def __init__(self, D: RceDiagram, equivalences: Mapping[Mor, EquivalenceData] | None = None,
                 verify: bool = True, memoize: bool = True):
        self.diagram = D
        self.memoize = memoize
        given = dict(equivalences or {})
        self.data: dict[Mor, EquivalenceData] = {}
        for f in EDGES:
            self.data[f] = given[f] if f in given else build_equivalence(D.map(f))
            if verify and not verify_equivalence(self.data[f]):
                raise ArithmeticError(f"equivalence data for {f} does not verify")
        self._z: dict[tuple[int, int], fmpq_mat] = {}

    def uncached(self) -> "ZigzagContext":
        """The same data with shift-normalized caching switched off."""
        return ZigzagContext(self.diagram, self.data, verify=False, memoize=False)

    def equivalence(self, f: Mor) -> EquivalenceData:
        if f.is_identity:
            return trivial_equivalence(self.diagram.map(f))
        return self.data[f]

    def space(self, v: SpiralNode) -> ChainComplex:
        return self.diagram[v.obj]

    # -- zig-zag maps -------------------------------------------------------

    def z_matrix(self, src: SpiralNode, dst: SpiralNode) -> fmpq_mat:
        if not self.memoize:
            return self._walk(src, dst)
        base = 4 * (src.coord // 4)
        key = (src.coord - base, dst.coord - base)
        if key not in self._z:
            self._z[key] = self._walk(src, dst)
        return self._z[key]

    def _walk(self, src: SpiralNode, dst: SpiralNode) -> fmpq_mat:
        m = identity(self.space(src).total_dim)
        for edge, direction in spiral_path(src, dst):
            step = self.data[edge.mor].f if direction == ALONG else self.data[edge.mor].f_inv
            m = step.matrix * m
        return m

    def z_map(self, src: SpiralNode, dst: SpiralNode) -> GradedMap:
        """Z^{dst}_{src} : X(src) -> X(dst)."""
        return GradedMap(self.space(src), self.space(dst), 0, self.z_matrix(src, dst), check=False)

    # -- homotopies ---------------------------------------------------------

    def lambda_matrix(self, edge: SpiralEdge, node: SpiralNode) -> fmpq_mat | None:
        if classify(edge, node) is AlignmentCase.A1:
            return None
        return self.data[edge.mor].lam.matrix * self.z_matrix(node, edge.target)

    def gamma_matrix(self, node: SpiralNode, edge: SpiralEdge) -> fmpq_mat | None:
        if classify(node, edge) is AlignmentCase.B1:
            return None
        return self.z_matrix(edge.source, node) * self.data[edge.mor].gamma.matrix

    def xi_matrix(self, edge: SpiralEdge, other: SpiralEdge) -> fmpq_mat | None:
        case = classify(edge, other)
        if case is AlignmentCase.C5:
            return self.data[edge.mor].xi.matrix
        if case is AlignmentCase.C4:
            return (self.data[edge.mor].lam.matrix * self.z_matrix(other.source, edge.target)
                    * self.data[other.mor].gamma.matrix)
        return None

    def lambda_left(self, edge, node: SpiralNode) -> GradedMap:
        """Lam^{(n,f)}_{(n',N')} : X(N') -> X(tf), degree 1."""
        e = _as_edge(edge)
        tgt = self.diagram[(e.mor if e else edge[1]).target]
        m = self.lambda_matrix(e, node) if e else None
        src = self.space(node)
        return GradedMap(src, tgt, 1, m if m is not None else fmpq_mat(tgt.total_dim, src.total_dim), check=False)

    def gamma_right(self, node: SpiralNode, edge) -> GradedMap:
        """Gam^{(n,N)}_{(n',f')} : X(sf') -> X(N), degree 1."""
        e = _as_edge(edge)
        src = self.diagram[(e.mor if e else edge[1]).source]
        m = self.gamma_matrix(node, e) if e else None
        tgt = self.space(node)
        return GradedMap(src, tgt, 1, m if m is not None else fmpq_mat(tgt.total_dim, src.total_dim), check=False)

    def xi_two(self, edge, other) -> GradedMap:
        """Xi^{(n,f)}_{(n',f')} : X(sf') -> X(tf), degree 2."""
        e, o = _as_edge(edge), _as_edge(other)
        tgt = self.diagram[(e.mor if e else edge[1]).target]
        src = self.diagram[(o.mor if o else other[1]).source]
        m = self.xi_matrix(e, o) if e and o else None
        return GradedMap(src, tgt, 2, m if m is not None else fmpq_mat(tgt.total_dim, src.total_dim), check=False)

    # -- defining identities ------------------------------------------------

    def lambda_defect(self, edge: SpiralEdge, node: SpiralNode) -> GradedMap:
        f = self.diagram.map(edge.mor)
        lhs = f @ self.z_map(node, edge.source) - self.z_map(node, edge.target)
        return lhs - hom_boundary(self.lambda_left(edge, node))

    def gamma_defect(self, node: SpiralNode, edge: SpiralEdge) -> GradedMap:
        f = self.diagram.map(edge.mor)
        lhs = self.z_map(edge.target, node) @ f - self.z_map(edge.source, node)
        return lhs - hom_boundary(self.gamma_right(node, edge))

    def xi_defect(self, edge: SpiralEdge, other: SpiralEdge) -> GradedMap:
        f = self.diagram.map(edge.mor)
        g = self.diagram.map(other.mor)
        lhs = (f @ self.gamma_right(edge.source, other)
               - self.gamma_right(edge.target, other)
               + self.lambda_left(edge, other.source)
               - self.lambda_left(edge, other.target) @ g)
        return lhs - hom_boundary(self.xi_two(edge, other))

    # -- the theta homotopy -------------------------------------------------

    def path_homotopy(self, src: SpiralNode, dst: SpiralNode) -> BlockMap:
        """H : X(src) -> X~ of degree 1 with d(H) = (dst, Z^{dst}_{src} x) - (src, x).

        An along step over (n, f) contributes -(-1)^|x| (n, f, x); an
        against step contributes (-1)^|x| (n, f, f^{-1} x) + (n, tf, lam_f x).
        """
        out = BlockMap()
        here = src
        for edge, direction in spiral_path(src, dst):
            z = self.z_matrix(src, here)
            data = self.data[edge.mor]
            par = self.diagram[edge.mor.source].parity()
            if direction == ALONG:
                out.add_block(edge, "x", -(par * z))
                here = edge.target
            else:
                out.add_block(edge, "x", par * data.f_inv.matrix * z)
                out.add_block(edge.target, "x", data.lam.matrix * z)
                here = edge.source
        return out

    def theta_homotopy(self) -> BlockMap:
        """theta : X(M) -> X~ with d(theta) = (1, M, x) - (0, M, Z^{(0,M)}_{(1,M)} x)."""
        return -self.path_homotopy(SpiralNode(1, Obj.M), SpiralNode(0, Obj.M))

    def theta_defect(self, theta: BlockMap | None = None) -> BlockMap:
        """(1, M, x) - (0, M, Z x) - (D theta + theta d), blockwise; zero when theta works."""
        theta = self.theta_homotopy() if theta is None else theta
        X = self.diagram[Obj.M]
        dim = X.total_dim
        cells = {c for (c, _) in theta.blocks} | {SpiralNode(1, Obj.M), SpiralNode(0, Obj.M)}
        nodes = [c for c in cells if isinstance(c, SpiralNode)]
        edges = [c for c in cells if isinstance(c, SpiralEdge)]
        D = tilde_blocks(self.diagram, nodes, edges).restrict_target(lambda c: c in cells)
        top = SpiralNode(1, Obj.M)
        bottom = SpiralNode(0, Obj.M)
        target = BlockMap({(top, "x"): identity(dim),
                           (bottom, "x"): -self.z_matrix(top, bottom)})
        d_src = BlockMap({("x", "x"): X.global_d()})
        return target - (D @ theta + theta @ d_src)

