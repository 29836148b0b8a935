"""Poisson chain complexes, the Poisson structure on the derived object and
its compatibility homotopy with the original structure.

A Poisson structure on V is stored as its Gram matrix P over the global
basis: tau(u (x) v) = u^T P v.  It is graded antisymmetric,
tau(x (x) y) = -(-1)^{|x||y|} tau(y (x) x), supported in total degree 0, and
a chain map V (x) V -> Q, i.e. D^T P + (-1)^deg P D = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from flint import fmpq, fmpq_mat

from .bar_kan import (
    BlockMap,
    CellularComplex,
    DerivedObject,
    Resolution,
    derived_unit,
    q_map,
    resolution_cells,
    resolution_map,
)
from .chain_core import ChainComplex, GradedMap, WedgeSquare, ground_field
from .exact_algebra import ONE, is_zero, nonzero_entries
from .site import EDGES, MORPHISMS, OBJECTS, Mor, Obj, RceDiagram, SpiralEdge, SpiralNode, localize
from .zigzag import ZigzagContext


class PoissonError(ValueError):
    pass


def pairing_defects(V: ChainComplex, P: fmpq_mat) -> list[str]:
    """Reasons why P is not a Poisson structure on V (empty when it is)."""
    problems = []
    degs = V.global_degrees
    for i, j, v in nonzero_entries(P):
        if degs[i] + degs[j] != 0:
            problems.append(f"entry ({i}, {j}) pairs degrees {degs[i]} and {degs[j]}")
            break
    sym = fmpq_mat(P.nrows(), P.ncols())
    for i, j, v in nonzero_entries(P):
        sign = -ONE if (degs[i] * degs[j]) % 2 == 0 else ONE
        sym[j, i] = sign * v
    if sym != P:
        problems.append("pairing is not graded antisymmetric")
    D = V.global_d()
    if not is_zero(D.transpose() * P + V.parity() * P * D):
        problems.append("pairing is not a chain map")
    return problems


class PoissonComplex:
    def __init__(self, V: ChainComplex, form: fmpq_mat, validate: bool = True):
        self.space = V
        self.form = form
        if validate:
            problems = pairing_defects(V, form)
            if problems:
                raise PoissonError("; ".join(problems))

    def tau(self, u: fmpq_mat, v: fmpq_mat) -> fmpq:
        return (u.transpose() * self.form * v)[0, 0]

    def wedge_functional(self) -> GradedMap:
        """tau as a chain map V ^ V -> Q, evaluated on section representatives."""
        W = WedgeSquare(self.space)
        row = self.form_on_tensor(W) * W.section.matrix
        K = ground_field(0)
        m = fmpq_mat(1, W.complex.total_dim)
        degs = W.complex.global_degrees
        for j in range(W.complex.total_dim):
            if degs[j] == 0:
                m[0, j] = row[0, j]
        return GradedMap(W.complex, K, 0, m)

    def form_on_tensor(self, W: WedgeSquare) -> fmpq_mat:
        tc = W.tensor
        out = fmpq_mat(1, tc.complex.total_dim)
        labels = self.space.global_labels
        for i, j, v in nonzero_entries(self.form):
            out[0, tc.index(labels[i], labels[j])] = v
        return out


def pullback_form(f: GradedMap, P: fmpq_mat) -> fmpq_mat:
    """tau o (f ^ f) for tau on the target of f."""
    return f.matrix.transpose() * P * f.matrix


class PoissonRceDiagram:
    """A diagram on C whose objects carry Poisson structures preserved by the maps."""

    def __init__(self, diagram: RceDiagram, forms: Mapping[Obj, fmpq_mat], validate: bool = True):
        self.diagram = diagram
        self.forms = {N: forms[N] for N in OBJECTS}
        if validate:
            self.validate()

    def validate(self) -> None:
        for N in OBJECTS:
            problems = pairing_defects(self.diagram[N], self.forms[N])
            if problems:
                raise PoissonError(f"{N}: " + "; ".join(problems))
        for f in EDGES:
            if not self.preserves(f):
                raise PoissonError(f"X({f}) does not preserve the Poisson structure")

    def preserves(self, f: Mor) -> bool:
        m = self.diagram.map(f)
        return pullback_form(m, self.forms[f.target]) == self.forms[f.source]

    def __getitem__(self, N: Obj) -> ChainComplex:
        return self.diagram[N]


def pullback_poisson(f: GradedMap, P: fmpq_mat) -> fmpq_mat:
    """The Poisson structure tau o (f ^ f) on the source of f."""
    return pullback_form(f, P)


# ---------------------------------------------------------------------------
# the Poisson structure on the derived object
#
# A bilinear form on a cellular complex is a BlockMap keyed by (cell, cell);
# its value on (a, b) is a^T T[c(a), c(b)] b.  It is a chain map into Q when
# D^T T + Par T D = 0, Par being (-1)^(total degree) of the left argument.


HALF = fmpq(1, 2)


def _cell_kind(c) -> int:
    return 0 if isinstance(c, SpiralNode) else 1


class DerivedPoisson:
    """tau_L on X~, evaluated block by block from zig-zag data.

    Components, with P the Gram matrix of each tau_N and Par the parity:

      node, node: (P_N Z + Z'^T P_N') / 2
      edge, node: (X(f)^T P_tf Lam + Gam'^T P_N' Par') / 2
      node, edge: Par (P_N Gam + Lam'^T P_tf' X(f') Par') / 2
      edge, edge: -Par (X(f)^T P_tf Xi - Xi'^T P_tf' X(f')) / 2

    where a prime marks the same datum with the two arguments exchanged.
    ``one_term`` keeps only the first summand of each component.
    """

    def __init__(self, ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat]):
        self.ctx = ctx
        self.forms = dict(forms)
        self._cache: dict[tuple, fmpq_mat] = {}

    def _space(self, c) -> ChainComplex:
        return self.ctx.diagram[c.obj] if isinstance(c, SpiralNode) else self.ctx.diagram[c.mor.source]

    def _zeros(self, c1, c2) -> fmpq_mat:
        return fmpq_mat(self._space(c1).total_dim, self._space(c2).total_dim)

    def _first(self, c1, c2) -> fmpq_mat | None:
        """The first summand of the component for (c1, c2), None when it vanishes."""
        ctx, D = self.ctx, self.ctx.diagram
        k1, k2 = _cell_kind(c1), _cell_kind(c2)
        if (k1, k2) == (0, 0):
            return self.forms[c1.obj] * ctx.z_matrix(c2, c1)
        if (k1, k2) == (1, 0):
            lam = ctx.lambda_matrix(c1, c2)
            if lam is None:
                return None
            return D.map(c1.mor).matrix.transpose() * self.forms[c1.mor.target] * lam
        if (k1, k2) == (0, 1):
            gam = ctx.gamma_matrix(c1, c2)
            if gam is None:
                return None
            return self._space(c1).parity() * self.forms[c1.obj] * gam
        xi = ctx.xi_matrix(c1, c2)
        if xi is None:
            return None
        return -(self._space(c1).parity() * D.map(c1.mor).matrix.transpose() * self.forms[c1.mor.target] * xi)

    def one_term(self, c1, c2) -> fmpq_mat:
        m = self._first(c1, c2)
        return m if m is not None else self._zeros(c1, c2)

    def block(self, c1, c2) -> fmpq_mat:
        if self.ctx.memoize:
            k = _lower(c1) // 4
            c1, c2 = c1.shifted(-k), c2.shifted(-k)
            if (c1, c2) in self._cache:
                return self._cache[(c1, c2)]
        ctx, D = self.ctx, self.ctx.diagram
        k1, k2 = _cell_kind(c1), _cell_kind(c2)
        out = self._zeros(c1, c2)
        first = self._first(c1, c2)
        if first is not None:
            out += first
        if (k1, k2) == (0, 0):
            out += ctx.z_matrix(c1, c2).transpose() * self.forms[c2.obj]
        elif (k1, k2) == (1, 0):
            gam = ctx.gamma_matrix(c2, c1)
            if gam is not None:
                out += gam.transpose() * self.forms[c2.obj] * self._space(c2).parity()
        elif (k1, k2) == (0, 1):
            lam = ctx.lambda_matrix(c2, c1)
            if lam is not None:
                out += (self._space(c1).parity() * lam.transpose() * self.forms[c2.mor.target]
                        * D.map(c2.mor).matrix * self._space(c2).parity())
        else:
            xi = ctx.xi_matrix(c2, c1)
            if xi is not None:
                out += (self._space(c1).parity() * xi.transpose() * self.forms[c2.mor.target]
                        * D.map(c2.mor).matrix)
        out = out * HALF
        if self.ctx.memoize:
            self._cache[(c1, c2)] = out
        return out

    def evaluate(self, a: tuple, b: tuple) -> fmpq:
        """tau_L on two basis symbols (level, Obj or Mor, label)."""
        c1, c2 = _symbol_cell(a), _symbol_cell(b)
        i = self._space(c1).global_index(a[2])
        j = self._space(c2).global_index(b[2])
        return self.block(c1, c2)[i, j]

    def form(self, cells) -> BlockMap:
        cells = list(cells)
        return BlockMap({(c1, c2): self.block(c1, c2) for c1 in cells for c2 in cells})


def _lower(c) -> int:
    return c.coord if isinstance(c, SpiralNode) else c.lower


def _symbol_cell(sym: tuple):
    n, where, _ = sym
    return SpiralNode(n, where) if isinstance(where, Obj) else SpiralEdge(n, where)


def _cell_parity(X: CellularComplex) -> BlockMap:
    return BlockMap({(c, c): X.parity(c) for c in X.order})


def chain_map_defect(X: CellularComplex, T: BlockMap) -> BlockMap:
    """D^T T + Par T D for a bilinear form T on a cellular complex."""
    dX = X.differential
    return dX.transpose() @ T + _cell_parity(X) @ T @ dX


TAU_CONDITIONS = ("tau0 d = 0", "tau0 delta + tau1 d = 0", "tau1 delta + tau2 d = 0")


@dataclass
class Witness:
    condition: str
    left: object
    right: object
    row: str
    col: str
    value: fmpq

    def __str__(self):
        return f"{self.condition} fails at ({self.row}, {self.col}) on {self.left} x {self.right}: {self.value}"


@dataclass
class CheckReport:
    passed: bool
    results: dict[str, bool]
    witness: Witness | None = None


def _first_witness(X: CellularComplex, defect: BlockMap, name_of) -> tuple[dict[str, bool], Witness | None]:
    failed: dict[str, bool] = {}
    witness = None
    for (c1, c2), m in sorted(defect.nonzero_blocks().items(), key=lambda kv: str(kv[0])):
        name = name_of(c1, c2)
        failed[name] = True
        if witness is None:
            i, j, v = next(iter(nonzero_entries(m)))
            witness = Witness(name, c1, c2, X.spaces[c1].global_labels[i], X.spaces[c2].global_labels[j], v)
    return failed, witness


def verify_tau_L(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], radius: int = 3) -> CheckReport:
    """The three chain-map conditions on all cell pairs of the window, plus Z-invariance."""
    X = DerivedObject(ctx.diagram, radius)
    tau = DerivedPoisson(ctx, forms)
    T = tau.form(X.order)
    defect = chain_map_defect(X, T)
    failed, witness = _first_witness(
        X, defect, lambda c1, c2: TAU_CONDITIONS[X.vertical[c1] + X.vertical[c2]])
    results = {name: name not in failed for name in TAU_CONDITIONS}
    direct = DerivedPoisson(ctx.uncached(), forms)
    shifted = all(direct.block(c1.shifted(k), c2.shifted(k)) == T.blocks[(c1, c2)]
                  for k in (1,) for c1 in X.order for c2 in X.order)
    results["Z-invariance"] = shifted
    return CheckReport(all(results.values()), results, witness)


def graded_antisymmetry_defect(X: CellularComplex, T: BlockMap) -> BlockMap:
    """T[c1, c2] + (-1)^{|a||b|} T[c2, c1]^T entrywise, with total degrees."""
    out = BlockMap()
    for (c1, c2), m in T.blocks.items():
        other = T.blocks.get((c2, c1))
        if other is None:
            continue
        out.add_block(c1, c2, m + _koszul(X, c1, c2, other.transpose()))
    return out


def _total_degrees(X: CellularComplex, c) -> list[int]:
    return [k + X.vertical[c] for k in X.spaces[c].global_degrees]


def _koszul(X: CellularComplex, c1, c2, m: fmpq_mat) -> fmpq_mat:
    d1, d2 = _total_degrees(X, c1), _total_degrees(X, c2)
    out = fmpq_mat(m.nrows(), m.ncols())
    for i, j, v in nonzero_entries(m):
        out[i, j] = -v if (d1[i] * d2[j]) % 2 else v
    return out


def one_term_consistency_defect(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], radius: int = 2) -> BlockMap:
    """Antisymmetrized one-term evaluation minus the full formula, blockwise."""
    X = DerivedObject(ctx.diagram, radius)
    tau = DerivedPoisson(ctx, forms)
    out = BlockMap()
    for c1 in X.order:
        for c2 in X.order:
            anti = (tau.one_term(c1, c2) - _koszul(X, c1, c2, tau.one_term(c2, c1).transpose())) * HALF
            out.add_block(c1, c2, anti - tau.block(c1, c2))
    return out


# ---------------------------------------------------------------------------
# the compatibility homotopy rho_N on Q(X)(N)


def rho_N(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], N: Obj) -> BlockMap:
    """rho_N as a degree one bilinear form on Q(X)(N), keyed by resolution cells.

      (g, g'):        (Par X(g)^T P_N Lam^{(0,g)} + Lam^{(0,g') T} P_N X(g')) / 2
      ((id,f), g'):   -Xi^{(0,g')}_{(0,f) T} P_N X(g') Par' / 2
      (g, (id,f')):   -X(g)^T P_N Xi^{(0,g)}_{(0,f')} / 2

    Terms whose morphisms are identities vanish, and so does (row 1, row 1).
    """
    D = ctx.diagram
    P = forms[N]
    out = BlockMap()
    cells = resolution_cells(N)
    for key in cells:
        for key2 in cells:
            (p, g), (p2, g2) = key, key2
            dim1, dim2 = D[g.source].total_dim, D[g2.source].total_dim
            m = fmpq_mat(dim1, dim2)
            if p == 0 and p2 == 0:
                node2 = SpiralNode(localize(g2), g2.source)
                node1 = SpiralNode(localize(g), g.source)
                if not g.is_identity:
                    lam = ctx.lambda_matrix(SpiralEdge(0, g), node2)
                    if lam is not None:
                        m += D[g.source].parity() * D.map(g).matrix.transpose() * P * lam
                if not g2.is_identity:
                    lam = ctx.lambda_matrix(SpiralEdge(0, g2), node1)
                    if lam is not None:
                        m += lam.transpose() * P * D.map(g2).matrix
            elif p == 1 and p2 == 0 and not g2.is_identity:
                xi = ctx.xi_matrix(SpiralEdge(0, g2), SpiralEdge(0, g))
                if xi is not None:
                    m -= xi.transpose() * P * D.map(g2).matrix * D[g2.source].parity()
            elif p == 0 and p2 == 1 and not g.is_identity:
                xi = ctx.xi_matrix(SpiralEdge(0, g), SpiralEdge(0, g2))
                if xi is not None:
                    m -= D.map(g).matrix.transpose() * P * xi
            out.add_block(key, key2, m * HALF)
    return out


def pulled_back_forms(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], N: Obj) -> tuple[BlockMap, BlockMap]:
    """tau_L o (eta ^ eta) and tau_N o (q ^ q) on Q(X)(N)."""
    D = ctx.diagram
    tau = DerivedPoisson(ctx, forms)
    eta = derived_unit(D, N)
    image = {s: t for (t, s) in eta.blocks}
    cells = resolution_cells(N)
    via_eta = BlockMap({(a, b): tau.block(image[a], image[b]) for a in cells for b in cells})
    q = q_map(D, N)
    via_q = q.transpose() @ BlockMap({("X", "X"): forms[N]}) @ q
    for a in cells:
        for b in cells:
            via_q.add_block(a, b, fmpq_mat(D[a[1].source].total_dim, D[b[1].source].total_dim))
    return via_eta, via_q


def rho_defect(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], N: Obj) -> BlockMap:
    """tau_L(eta, eta) - tau_N(q, q) - rho_N o D_tensor, blockwise."""
    Q = Resolution(ctx.diagram, N)
    via_eta, via_q = pulled_back_forms(ctx, forms, N)
    return via_eta - via_q - chain_map_defect(Q, rho_N(ctx, forms, N))


def rho_naturality_defect(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat], h: Mor) -> BlockMap:
    """rho_{th} o (Q(h) ^ Q(h)) - rho_{sh} on Q(X)(sh)."""
    res = {N: Resolution(ctx.diagram, N) for N in OBJECTS}
    Qh = resolution_map(ctx.diagram, res, h)
    return Qh.transpose() @ rho_N(ctx, forms, h.target) @ Qh - rho_N(ctx, forms, h.source)


def verify_rho(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat]) -> CheckReport:
    results = {}
    witness = None
    for N in OBJECTS:
        defect = rho_defect(ctx, forms, N)
        ok = defect.is_zero()
        results[f"rho relation at {N}"] = ok
        if not ok and witness is None:
            Q = Resolution(ctx.diagram, N)
            witness = _first_witness(Q, defect, lambda a, b: f"rho relation at {N}")[1]
    for h in MORPHISMS:
        results[f"rho naturality along {h}"] = rho_naturality_defect(ctx, forms, h).is_zero()
    return CheckReport(all(results.values()), results, witness)


def naturality_check_rho(ctx: ZigzagContext, forms: Mapping[Obj, fmpq_mat]) -> bool:
    return all(rho_naturality_defect(ctx, forms, h).is_zero() for h in MORPHISMS)
