"""Linear Yang-Mills on a 1+1 dimensional lattice, in exact arithmetic.

The lattice has T time levels and X sites on a circle.  Cells are vertices
(t, x), time edges (t, x) -> (t+1, x), space edges (t, x) -> (t, x+1) and
faces spanned by (t, x) and (t+1, x+1).  The coboundary d is the signed
incidence.  A metric is given per vertex as (g_tt, g_tx, g_xx) with
signature (+, -); it fixes the weights of the bilinear forms on cochains:

    0-forms   s                  (s = sqrt|det g|, must be rational)
    1-forms   s g^{-1}           (a 2x2 block on the edges based at a vertex)
    2-forms   -1/s

and the codifferential is the exact adjoint delta = W^{-1} d^T W.  Every
metric-dependent matrix is a ``DualMatrix``, so a metric g + eps h gives
first derivatives in eps exactly.

Observables on a region R form the complex

    chi (deg -1) <-(-delta)- phi (0) <-(delta d)- alpha (1) <-(-d)- beta (2)

of forms supported in R.  The supports are nested so that each differential
stays inside R for every metric: phi lives on edges whose codifferential
stencil stays on R-vertices, alpha on edges whose delta d stencil stays in
the phi support, beta on vertices whose coboundary stays in the alpha support.
"""

from __future__ import annotations

import dataclasses
import itertools
from typing import Iterable, Mapping, Sequence

from flint import fmpq, fmpq_mat

from .chain_core import ChainComplex, GradedMap
from .equivalence import EquivalenceData
from .exact_algebra import (ONE, ZERO, DualMatrix, DualScalar, dual_vstack, identity,
                            nonzero_entries, scalar, solve_matrix, submatrix)
from .poisson import PoissonRceDiagram
from .site import EDGES, Mor, Obj, RceDiagram
from .zigzag import ZigzagContext


class LatticeError(ValueError):
    """Bad lattice parameters or a metric the construction cannot handle."""


class NonSteppableMetric(LatticeError):
    """A per-slice block of the d'Alembertian is singular."""

    def __init__(self, p: int, k: int):
        super().__init__(f"non-steppable metric: slice block {k} for {p}-forms is singular")
        self.degree = p
        self.slice = k


class LatticeCheckError(ArithmeticError):
    """An identity that should hold exactly failed; carries a witness."""

    def __init__(self, message: str, witness=None):
        super().__init__(message if witness is None else f"{message}: {witness}")
        self.witness = witness


FLAT = (ONE, ZERO, -ONE)


def _dual(v) -> DualScalar:
    return v if isinstance(v, DualScalar) else DualScalar(scalar(v))


def rational_sqrt(v) -> fmpq:
    v = scalar(v)
    try:
        return v.sqrt()
    except Exception as exc:
        raise LatticeError(f"volume density sqrt({v}) is not rational") from exc


def density(g) -> DualScalar:
    """s = sqrt(-det g) over the dual numbers; only the base needs a rational root."""
    gtt, gtx, gxx = (_dual(v) for v in g)
    neg_det = gtx * gtx - gtt * gxx
    if neg_det.base <= 0:
        raise LatticeError(f"metric {g} is not Lorentzian")
    s0 = rational_sqrt(neg_det.base)
    return DualScalar(s0, neg_det.slope / (2 * s0))


# ---------------------------------------------------------------------------
# perturbations


@dataclasses.dataclass(frozen=True)
class Perturbation:
    """A metric perturbation h given per vertex as (h_tt, h_tx, h_xx)."""

    entries: Mapping[tuple[int, int], tuple[fmpq, fmpq, fmpq]]

    @property
    def support(self) -> set[tuple[int, int]]:
        return {v for v, h in self.entries.items() if any(h)}

    def scaled(self, c) -> "Perturbation":
        c = scalar(c)
        return Perturbation({v: tuple(c * a for a in h) for v, h in self.entries.items()})

    def is_zero(self) -> bool:
        return not self.support

    @staticmethod
    def from_density(values: Mapping[tuple[int, int], tuple]) -> "Perturbation":
        """h from (h_tt, h_tx, q) per vertex, with h_xx chosen so flat + h has density q.

        For g = diag(1, -1) + h we need (1 + h_tt)(1 - h_xx) + h_tx^2 = q^2.
        """
        out = {}
        for v, (a, c, q) in values.items():
            a, c, q = scalar(a), scalar(c), scalar(q)
            if a == -1:
                raise LatticeError("h_tt = -1 makes the metric degenerate")
            out[v] = (a, c, ONE - (q * q - c * c) / (ONE + a))
        return Perturbation(out)


def default_perturbation(t_range=(10, 13), x_range=(6, 9)) -> Perturbation:
    """A fixed, non-symmetric pattern with rational volume density."""
    values = {}
    a_cycle = [fmpq(1, 8), fmpq(-1, 8), fmpq(1, 4), fmpq(1, 8)]
    c_cycle = [fmpq(1, 8), ZERO, fmpq(-1, 8), fmpq(1, 8), ZERO]
    q_cycle = [fmpq(9, 8), fmpq(7, 8), fmpq(1), fmpq(5, 4)]
    for i, (t, x) in enumerate(itertools.product(range(t_range[0], t_range[1] + 1),
                                                 range(x_range[0], x_range[1] + 1))):
        values[(t, x)] = (a_cycle[i % 4], c_cycle[i % 5], q_cycle[(i // 2) % 4])
    return Perturbation.from_density(values)


# ---------------------------------------------------------------------------
# the lattice and its operators


class LatticeSpacetime:
    """Cells, incidence and metric weights of a T x X lattice, periodic in x.

    ``metric`` maps vertices to (g_tt, g_tx, g_xx); missing vertices are flat.
    Values may be rationals or dual scalars.
    """

    def __init__(self, T: int, X: int, metric: Mapping[tuple[int, int], tuple] | None = None):
        if T < 8 or X < 8:
            raise LatticeError("the lattice needs T, X >= 8")
        self.T, self.X = T, X
        self.metric = {v: tuple(_dual(a) for a in g) for v, g in (metric or {}).items()}
        self.n_vertices = T * X
        self.n_edges = (2 * T - 1) * X
        self.n_faces = (T - 1) * X
        self._cache: dict = {}

    # -- cells ----------------------------------------------------------------

    def vertex(self, t: int, x: int) -> int:
        return t * self.X + x % self.X

    def time_edge(self, t: int, x: int) -> int:
        if not 0 <= t < self.T - 1:
            raise IndexError("no time edge there")
        return 2 * t * self.X + x % self.X

    def space_edge(self, t: int, x: int) -> int:
        shift = self.X if t < self.T - 1 else 0
        return 2 * t * self.X + shift + x % self.X

    def face(self, t: int, x: int) -> int:
        return t * self.X + x % self.X

    def vertex_at(self, i: int) -> tuple[int, int]:
        return divmod(i, self.X)

    def edge_at(self, i: int) -> tuple[str, int, int]:
        t, r = divmod(i, 2 * self.X)
        if t == self.T - 1 or r >= self.X:
            return ("s", t, r % self.X)
        return ("t", t, r)

    def cell_at(self, p: int, i: int) -> tuple:
        if p == 0:
            return ("v",) + self.vertex_at(i)
        if p == 1:
            return self.edge_at(i)
        return ("f",) + divmod(i, self.X)

    def cell_name(self, p: int, i: int) -> str:
        kind, t, x = self.cell_at(p, i)
        return f"{kind}({t},{x})"

    def size(self, p: int) -> int:
        return (self.n_vertices, self.n_edges, self.n_faces)[p]

    def slice_of(self, p: int, i: int) -> int:
        return self.cell_at(p, i)[1]

    def slice_range(self, p: int, k: int) -> range:
        if p == 0:
            return range(k * self.X, (k + 1) * self.X)
        if p == 1:
            end = (2 * k + 2) * self.X if k < self.T - 1 else (2 * k + 1) * self.X
            return range(2 * k * self.X, end)
        return range(k * self.X, (k + 1) * self.X)

    def n_slices(self, p: int) -> int:
        return self.T if p < 2 else self.T - 1

    # -- metric -----------------------------------------------------------------

    def g(self, t: int, x: int) -> tuple[DualScalar, DualScalar, DualScalar]:
        return self.metric.get((t, x % self.X), tuple(DualScalar(a) for a in FLAT))

    def with_metric(self, metric) -> "LatticeSpacetime":
        return LatticeSpacetime(self.T, self.X, metric)

    def perturbed(self, h: Perturbation, infinitesimal: bool = False) -> "LatticeSpacetime":
        """The lattice with metric g + h, or g + eps h when ``infinitesimal``."""
        metric = dict(self.metric)
        for v, hv in h.entries.items():
            base = self.g(*v)
            if infinitesimal:
                metric[v] = tuple(b + DualScalar(0, a) for b, a in zip(base, hv))
            else:
                metric[v] = tuple(b + a for b, a in zip(base, hv))
        return LatticeSpacetime(self.T, self.X, metric)

    @property
    def is_dual(self) -> bool:
        return any(a.slope for g in self.metric.values() for a in g)

    def non_flat_vertices(self) -> set[tuple[int, int]]:
        return {v for v, g in self.metric.items() if g != tuple(DualScalar(a) for a in FLAT)}

    # -- combinatorial coboundaries --------------------------------------------

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def d0(self) -> fmpq_mat:
        def build():
            m = fmpq_mat(self.n_edges, self.n_vertices)
            for t in range(self.T):
                for x in range(self.X):
                    if t < self.T - 1:
                        e = self.time_edge(t, x)
                        m[e, self.vertex(t + 1, x)] += 1
                        m[e, self.vertex(t, x)] -= 1
                    e = self.space_edge(t, x)
                    m[e, self.vertex(t, x + 1)] += 1
                    m[e, self.vertex(t, x)] -= 1
            return m
        return self._cached("d0", build)

    def d1(self) -> fmpq_mat:
        def build():
            m = fmpq_mat(self.n_faces, self.n_edges)
            for t in range(self.T - 1):
                for x in range(self.X):
                    f = self.face(t, x)
                    m[f, self.space_edge(t, x)] += 1
                    m[f, self.time_edge(t, x + 1)] += 1
                    m[f, self.space_edge(t + 1, x)] -= 1
                    m[f, self.time_edge(t, x)] -= 1
            return m
        return self._cached("d1", build)

    def coboundary(self, p: int) -> DualMatrix:
        """d on p-cochains as a (p+1)-cells x p-cells matrix."""
        if p == 0:
            return DualMatrix(self.d0())
        if p == 1:
            return DualMatrix(self.d1())
        raise LatticeError("d is only defined on 0- and 1-cochains")

    # -- weights ----------------------------------------------------------------

    def _k_block(self, t: int, x: int):
        """s g^{-1} = -(1/s) adj(g) as (K_tt, K_tx, K_xx)."""
        gtt, gtx, gxx = self.g(t, x)
        s = density((gtt, gtx, gxx))
        inv = -s.inverse()
        return inv * gxx, -(inv * gtx), inv * gtt

    def weight(self, p: int) -> DualMatrix:
        """The metric weight W_p of the bilinear form on p-cochains."""
        def build():
            entries = []
            if p == 0:
                for t in range(self.T):
                    for x in range(self.X):
                        entries.append((self.vertex(t, x),) * 2 + (density(self.g(t, x)),))
                return DualMatrix.from_entries(self.n_vertices, self.n_vertices, entries)
            if p == 1:
                for t in range(self.T):
                    for x in range(self.X):
                        ktt, ktx, kxx = self._k_block(t, x)
                        s = self.space_edge(t, x)
                        entries.append((s, s, kxx))
                        if t < self.T - 1:
                            e = self.time_edge(t, x)
                            entries += [(e, e, ktt), (e, s, ktx), (s, e, ktx)]
                return DualMatrix.from_entries(self.n_edges, self.n_edges, entries)
            for t in range(self.T - 1):
                for x in range(self.X):
                    f = self.face(t, x)
                    entries.append((f, f, -density(self.g(t, x)).inverse()))
            return DualMatrix.from_entries(self.n_faces, self.n_faces, entries)
        return self._cached(("W", p), build)

    def weight_inverse(self, p: int) -> DualMatrix:
        def build():
            entries = []
            if p == 0:
                for t in range(self.T):
                    for x in range(self.X):
                        entries.append((self.vertex(t, x),) * 2 + (density(self.g(t, x)).inverse(),))
                return DualMatrix.from_entries(self.n_vertices, self.n_vertices, entries)
            if p == 1:
                for t in range(self.T):
                    for x in range(self.X):
                        s = self.space_edge(t, x)
                        if t == self.T - 1:
                            entries.append((s, s, self._k_block(t, x)[2].inverse()))
                            continue
                        gtt, gtx, gxx = self.g(t, x)
                        inv = density((gtt, gtx, gxx)).inverse()
                        e = self.time_edge(t, x)
                        entries += [(e, e, inv * gtt), (e, s, inv * gtx), (s, e, inv * gtx),
                                    (s, s, inv * gxx)]
                return DualMatrix.from_entries(self.n_edges, self.n_edges, entries)
            for t in range(self.T - 1):
                for x in range(self.X):
                    f = self.face(t, x)
                    entries.append((f, f, -density(self.g(t, x))))
            return DualMatrix.from_entries(self.n_faces, self.n_faces, entries)
        return self._cached(("Winv", p), build)

    def codifferential(self, p: int) -> DualMatrix:
        """delta on p-cochains: W_{p-1}^{-1} d^T W_p, a (p-1)-cells x p-cells matrix."""
        if p not in (1, 2):
            raise LatticeError("delta is only defined on 1- and 2-cochains")

        def build():
            d = self.coboundary(p - 1).transpose()
            return self.weight_inverse(p - 1) @ d @ self.weight(p)
        return self._cached(("delta", p), build)

    def dalembertian(self, p: int) -> DualMatrix:
        """delta d + d delta on p-cochains (p = 0, 1)."""
        def build():
            if p == 0:
                return self.codifferential(1) @ self.coboundary(0)
            if p == 1:
                return (self.coboundary(0) @ self.codifferential(1)
                        + self.codifferential(2) @ self.coboundary(1))
            raise LatticeError("the d'Alembertian is used on 0- and 1-forms only")
        return self._cached(("box", p), build)

    def pairing(self, p: int, a: fmpq_mat, b: fmpq_mat) -> fmpq_mat:
        """a^T W_p b for the base metric."""
        return a.transpose() * self.weight(p).base * b

    # -- Green operators --------------------------------------------------------

    def green(self, sign: int, p: int) -> "GreenOperator":
        """Retarded (sign = +1) or advanced (sign = -1) Green operator on p-forms."""
        return self._cached(("green", sign, p), lambda: GreenOperator(self, sign, p))

    def causal_propagator(self, p: int) -> DualMatrix:
        return self._cached(("causal", p), lambda: self.green(1, p).matrix - self.green(-1, p).matrix)


class GreenOperator:
    """Slice-by-slice solution of box u = f with all unit sources at once.

    Retarded: u vanishes on and below the lowest slice of the source and the
    rows of slice k fix slice k+1.  Advanced: the mirror image.  On a finite
    lattice the equation is exact on the rows of ``exact_slices`` for sources
    on ``source_slices``: the last row slices in the stepping direction have
    no further slice to solve for.
    """

    def __init__(self, lattice: LatticeSpacetime, sign: int, p: int):
        if sign not in (1, -1):
            raise LatticeError("sign must be +1 (retarded) or -1 (advanced)")
        self.lattice = lattice
        self.sign = sign
        self.p = p
        box = lattice.dalembertian(p)
        n = lattice.size(p)
        K = lattice.n_slices(p)
        ranges = [list(lattice.slice_range(p, k)) for k in range(K)]
        self._check_stencil(box, ranges)
        blocks: list[DualMatrix | None] = [None] * K
        zero_rows = [DualMatrix.zeros(len(r), n) for r in ranges]

        def u(k):
            if 0 <= k < K and blocks[k] is not None:
                return blocks[k]
            return zero_rows[k] if 0 <= k < K else None

        order = range(K) if sign == 1 else range(K - 1, -1, -1)
        solved_rows = []
        for k in order:
            nxt = k + sign
            if not 0 <= nxt < K or len(ranges[nxt]) != len(ranges[k]):
                continue
            rhs = DualMatrix(_unit_rows(ranges[k], n))
            for j in (k - sign, k):
                if 0 <= j < K:
                    rhs = rhs - box.sub(ranges[k], ranges[j]) @ u(j)
            step = box.sub(ranges[k], ranges[nxt])
            if step.base.rank() < len(ranges[k]):
                raise NonSteppableMetric(p, k)
            blocks[nxt] = step.solve(rhs)
            solved_rows.append(k)
        first = solved_rows[0]
        self.exact_slices = sorted(solved_rows + [k for k in range(K) if (k - first) * sign < 0])
        # sources on slices skipped before the first solve would need u there
        self.source_slices = [k for k in range(K) if (k - first) * sign >= 0]
        self.matrix = dual_vstack([u(k) for k in range(K)], n)

    @staticmethod
    def _check_stencil(box: DualMatrix, ranges: Sequence[Sequence[int]]) -> None:
        where = {}
        for k, r in enumerate(ranges):
            for i in r:
                where[i] = k
        for m in (box.base, box.slope):
            if m is None:
                continue
            for i, j, _ in nonzero_entries(m):
                if abs(where[i] - where[j]) > 1:
                    raise LatticeError("the d'Alembertian couples non-adjacent slices")

    def apply(self, f: fmpq_mat) -> fmpq_mat:
        return self.matrix.base * f


def _unit_rows(rows: Sequence[int], n: int) -> fmpq_mat:
    m = fmpq_mat(len(rows), n)
    for a, i in enumerate(rows):
        m[a, i] = ONE
    return m


# ---------------------------------------------------------------------------
# regions and cones


def periodic_distance(a: int, b: int, X: int) -> int:
    d = (a - b) % X
    return min(d, X - d)


def causal_cone(lattice: LatticeSpacetime, seeds: Iterable[tuple[int, int]], sign: int,
                widen: int = 1) -> set[tuple[int, int]]:
    """Vertices in the slope-1 future (sign +1) or past (-1) of ``seeds``, widened.

    The seeds are first thickened to a diamond of radius ``widen``, so the
    cone keeps slope 1 everywhere (also above the seeds) and covers the
    stencil of the d'Alembertian.
    """
    seeds = list(seeds)
    out = set()
    for t in range(lattice.T):
        for x in range(lattice.X):
            for (s, y) in seeds:
                dt = (t - s) * sign
                if periodic_distance(x, y, lattice.X) <= dt + widen:
                    out.add((t, x))
                    break
    return out


def slab(lattice: LatticeSpacetime, t_min: int, t_max: int) -> set[tuple[int, int]]:
    return {(t, x) for t in range(t_min, t_max + 1) for x in range(lattice.X)}


def full_slices(lattice: LatticeSpacetime, region: set[tuple[int, int]]) -> list[int]:
    return [t for t in range(lattice.T) if all((t, x) in region for x in range(lattice.X))]


def _column_pattern(m: DualMatrix) -> dict[int, set[int]]:
    """Rows reached by each column, over base and slope parts."""
    out: dict[int, set[int]] = {}
    for part in (m.base, m.slope):
        if part is not None:
            for i, j, _ in nonzero_entries(part):
                out.setdefault(j, set()).add(i)
    return out


DEGREES = (-1, 0, 1, 2)
FORM_DEGREE = {-1: 0, 0: 1, 1: 1, 2: 0}
PREFIX = {-1: "chi", 0: "phi", 1: "alpha", 2: "beta"}


def region_supports(lattice: LatticeSpacetime, region: set[tuple[int, int]]) -> dict[int, list[int]]:
    """Cells carrying observables of each degree, as sorted ambient indices.

    Degree -1 lives on the vertices of the region; each higher degree takes
    the cells inside the region whose image under the differential (for
    this metric) stays in the previous support.
    """
    L = lattice
    chi = {L.vertex(t, x) for (t, x) in region}
    ends = _column_pattern(L.coboundary(0).transpose())
    inside = [e for e in range(L.n_edges) if ends[e] <= chi]
    delta1 = _column_pattern(L.codifferential(1))
    phi = {e for e in inside if delta1.get(e, set()) <= chi}
    delta_d = _column_pattern(L.codifferential(2) @ L.coboundary(1))
    alpha = {e for e in inside if delta_d.get(e, set()) <= phi}
    d0 = _column_pattern(L.coboundary(0))
    beta = {v for v in chi if d0[v] <= alpha}
    return {-1: sorted(chi), 0: sorted(phi), 1: sorted(alpha), 2: sorted(beta)}


class ObservableComplex:
    """The complex of linear observables supported in a region.

    The differential is a ``DualMatrix`` over the concatenated basis
    (chi, phi, alpha, beta); ``complex`` is the rational chain complex of
    the base metric.
    """

    def __init__(self, lattice: LatticeSpacetime, region: set[tuple[int, int]], name: str = "R",
                 supports: Mapping[int, list[int]] | None = None):
        self.lattice = lattice
        self.region = frozenset(region)
        self.name = name
        self.supports = dict(supports) if supports is not None else region_supports(lattice, set(region))
        self.dims = {k: len(self.supports[k]) for k in DEGREES}
        self.offsets = {}
        pos = 0
        for k in DEGREES:
            self.offsets[k] = pos
            pos += self.dims[k]
        self.total_dim = pos
        self._position = {k: {c: i for i, c in enumerate(self.supports[k])} for k in DEGREES}
        self._complex = None
        self._d = None
        self._blocks = None

    def labels(self, k: int) -> list[str]:
        return [f"{PREFIX[k]}:{self.lattice.cell_name(FORM_DEGREE[k], c)}" for c in self.supports[k]]

    def embedding(self, k: int) -> fmpq_mat:
        """Ambient p-cells x support: extension by zero."""
        n = self.lattice.size(FORM_DEGREE[k])
        m = fmpq_mat(n, self.dims[k])
        for j, c in enumerate(self.supports[k]):
            m[c, j] = ONE
        return m

    def restrict(self, k: int, forms: DualMatrix, what: str = "form") -> DualMatrix:
        """Rows of ``forms`` on the support of degree k; everything else must vanish."""
        keep = self._position[k]
        for m in (forms.base, forms.slope):
            if m is None:
                continue
            for i, j, _ in nonzero_entries(m):
                if i not in keep:
                    cell = self.lattice.cell_name(FORM_DEGREE[k], i)
                    raise LatticeCheckError(f"{what} leaves the {PREFIX[k]} support of {self.name}",
                                            f"column {j} is nonzero on {cell}")
        return forms.sub(self.supports[k], list(range(forms.ncols())))

    def differential_blocks(self) -> dict[int, DualMatrix]:
        """d_k : L_k -> L_{k-1} for k = 0, 1, 2 on the supports."""
        if self._blocks is None:
            L = self.lattice
            sup = self.supports
            dd = L.codifferential(2) @ L.coboundary(1)
            full = {0: -_cols(L.codifferential(1), sup[0]),
                    1: _cols(dd, sup[1]),
                    2: -_cols(L.coboundary(0), sup[2])}
            self._blocks = {k: self.restrict(k - 1, m, "the differential") for k, m in full.items()}
        return self._blocks

    def d_op(self) -> BlockOperator:
        if self._d is None:
            self._d = BlockOperator(self.dims, self.dims,
                                    {(k - 1, k): m for k, m in self.differential_blocks().items()})
        return self._d

    @property
    def complex(self) -> ChainComplex:
        if self._complex is None:
            blocks = self.differential_blocks()
            if any(m.is_dual for m in blocks.values()):
                raise LatticeError("a dual-number complex has no rational ChainComplex")
            self._complex = ChainComplex({k: self.labels(k) for k in DEGREES},
                                         {k: m.base for k, m in blocks.items()})
        return self._complex

    def degree_mask(self, degrees: Iterable[int]) -> fmpq_mat:
        """Diagonal projector onto the given degrees."""
        m = fmpq_mat(self.total_dim, self.total_dim)
        for k in degrees:
            for i in range(self.offsets[k], self.offsets[k] + self.dims[k]):
                m[i, i] = ONE
        return m

    def basis_label(self, i: int) -> str:
        for k in DEGREES:
            if i < self.offsets[k] + self.dims[k]:
                return self.labels(k)[i - self.offsets[k]]
        raise IndexError(i)

    def with_lattice(self, lattice: LatticeSpacetime, name: str | None = None) -> "ObservableComplex":
        """Same cells, different metric."""
        return ObservableComplex(lattice, set(self.region), name or self.name, self.supports)


def _offsets(dims: Mapping[int, int]) -> dict[int, int]:
    out, pos = {}, 0
    for k in DEGREES:
        out[k] = pos
        pos += dims[k]
    return out


def _assemble_part(parts: Mapping[tuple[int, int], fmpq_mat], row_dims, col_dims) -> fmpq_mat:
    """Concatenate degree blocks row by row through flat entry lists."""
    rows = sum(row_dims.values())
    cols = sum(col_dims.values())
    if not rows or not cols:
        return fmpq_mat(rows, cols)
    flat = []
    for r in DEGREES:
        if not row_dims[r]:
            continue
        pieces = []
        for c in DEGREES:
            if not col_dims[c]:
                continue
            m = parts.get((r, c))
            pieces.append((m.entries(), col_dims[c]) if m is not None else (None, col_dims[c]))
        for i in range(row_dims[r]):
            for entries, n in pieces:
                if entries is None:
                    flat.extend([ZERO] * n)
                else:
                    flat.extend(entries[i * n:(i + 1) * n])
    return fmpq_mat(rows, cols, flat)


def assemble(blocks: Mapping[tuple[int, int], DualMatrix], row_dims: Mapping[int, int],
             col_dims: Mapping[int, int]) -> DualMatrix:
    """A global matrix from degree blocks; degrees are ordered as in DEGREES."""
    base = _assemble_part({rc: m.base for rc, m in blocks.items()}, row_dims, col_dims)
    if not any(m.is_dual for m in blocks.values()):
        return DualMatrix(base)
    slope = _assemble_part({rc: m.slope for rc, m in blocks.items() if m.slope is not None},
                           row_dims, col_dims)
    return DualMatrix(base, slope)


class BlockOperator:
    """A linear map between observable complexes kept as degree blocks.

    ``blocks[(r, c)]`` maps degree c of the source to degree r of the
    target; missing blocks are zero.  Products only touch matching blocks,
    which keeps the 2000-dimensional lattice complexes cheap.
    """

    def __init__(self, row_dims: Mapping[int, int], col_dims: Mapping[int, int],
                 blocks: Mapping[tuple[int, int], DualMatrix] | None = None):
        self.row_dims = dict(row_dims)
        self.col_dims = dict(col_dims)
        self.blocks = {rc: m for rc, m in (blocks or {}).items() if not m.is_zero()}

    @staticmethod
    def identity(dims: Mapping[int, int]) -> "BlockOperator":
        return BlockOperator(dims, dims, {(k, k): DualMatrix(identity(dims[k])) for k in DEGREES if dims[k]})

    @staticmethod
    def from_matrix(m: fmpq_mat, row_dims, col_dims) -> "BlockOperator":
        ro, co = _offsets(row_dims), _offsets(col_dims)
        blocks = {}
        for r in DEGREES:
            for c in DEGREES:
                if row_dims[r] and col_dims[c]:
                    blocks[(r, c)] = DualMatrix(submatrix(m, range(ro[r], ro[r] + row_dims[r]),
                                                          range(co[c], co[c] + col_dims[c])))
        return BlockOperator(row_dims, col_dims, blocks)

    def block(self, r: int, c: int) -> DualMatrix:
        m = self.blocks.get((r, c))
        return m if m is not None else DualMatrix.zeros(self.row_dims[r], self.col_dims[c])

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        out: dict[tuple[int, int], DualMatrix] = {}
        for (r, k), a in self.blocks.items():
            for (k2, c), b in other.blocks.items():
                if k == k2:
                    term = a @ b
                    out[(r, c)] = out[(r, c)] + term if (r, c) in out else term
        return BlockOperator(self.row_dims, other.col_dims, out)

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        out = dict(self.blocks)
        for rc, m in other.blocks.items():
            out[rc] = out[rc] + m if rc in out else m
        return BlockOperator(self.row_dims, self.col_dims, out)

    def __neg__(self) -> "BlockOperator":
        return BlockOperator(self.row_dims, self.col_dims, {rc: -m for rc, m in self.blocks.items()})

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return self + (-other)

    def scaled(self, c) -> "BlockOperator":
        return BlockOperator(self.row_dims, self.col_dims, {rc: m.scaled(c) for rc, m in self.blocks.items()})

    def transpose(self) -> "BlockOperator":
        return BlockOperator(self.col_dims, self.row_dims,
                             {(c, r): m.transpose() for (r, c), m in self.blocks.items()})

    def base(self) -> "BlockOperator":
        return BlockOperator(self.row_dims, self.col_dims,
                             {rc: DualMatrix(m.base) for rc, m in self.blocks.items()})

    def slope(self) -> "BlockOperator":
        return BlockOperator(self.row_dims, self.col_dims,
                             {rc: DualMatrix(m.slope) for rc, m in self.blocks.items() if m.slope is not None})

    @property
    def is_dual(self) -> bool:
        return any(m.is_dual for m in self.blocks.values())

    def is_zero(self) -> bool:
        return not self.blocks

    def first_nonzero(self) -> tuple[int, int, int, int, fmpq] | None:
        """(row degree, row, column degree, column, value) of some nonzero entry."""
        for (r, c), m in sorted(self.blocks.items()):
            for part in (m.base, m.slope):
                if part is None:
                    continue
                for i, j, v in nonzero_entries(part):
                    return r, i, c, j, v
        return None

    def matrix(self) -> DualMatrix:
        return assemble(self.blocks, self.row_dims, self.col_dims)

    def __eq__(self, other):
        if not isinstance(other, BlockOperator):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash((tuple(self.row_dims.items()), tuple(self.col_dims.items())))


def d_boundary(d_target: BlockOperator, op: BlockOperator, d_source: BlockOperator, degree: int) -> BlockOperator:
    """The mapping complex differential d o op - (-1)^degree op o d."""
    out = d_target @ op
    return out - op @ d_source if degree % 2 == 0 else out + op @ d_source


# ---------------------------------------------------------------------------
# ambient operators: the shifted solution complex and the Green homotopies

J_SIGNS = {-1: -1, 0: -1, 1: 1, 2: 1}


def ambient_size(lattice: LatticeSpacetime, k: int) -> int:
    return lattice.size(FORM_DEGREE[k])


def solution_differentials(lattice: LatticeSpacetime) -> dict[int, DualMatrix]:
    """Differential of the shifted solution complex on all cochains, degree k -> k-1."""
    return lattice._cached("sol_d", lambda: {
        0: -lattice.codifferential(1),
        1: -(lattice.codifferential(2) @ lattice.coboundary(1)),
        2: -lattice.coboundary(0)})


def green_homotopy_blocks(lattice: LatticeSpacetime, sign: int) -> dict[int, DualMatrix]:
    """G(d chi), G phi, -G(delta alpha) on all cochains, keyed by source degree."""
    def build():
        g0 = lattice.green(sign, 0).matrix
        g1 = lattice.green(sign, 1).matrix
        return {-1: g1 @ lattice.coboundary(0), 0: g1, 1: -(g0 @ lattice.codifferential(1))}
    return lattice._cached(("green_homotopy", sign), build)


def q_blocks(lattice: LatticeSpacetime) -> dict[int, DualMatrix]:
    """Q(chi) = -d chi, Q(phi) = phi, Q(alpha) = -delta alpha, keyed by source degree."""
    def build():
        n = lattice.n_edges
        return {-1: -lattice.coboundary(0), 0: DualMatrix(identity(n)), 1: -lattice.codifferential(1)}
    return lattice._cached("Q", build)


def green_q_blocks(lattice: LatticeSpacetime, sign: int) -> dict[int, DualMatrix]:
    """G^{sign} Q keyed by source degree; the image has degree one higher."""
    def build():
        g0 = lattice.green(sign, 0).matrix
        g1 = lattice.green(sign, 1).matrix
        q = q_blocks(lattice)
        return {-1: g1 @ q[-1], 0: g1, 1: g0 @ q[1]}
    return lattice._cached(("green_q", sign), build)


def causal_green_q_blocks(lattice: LatticeSpacetime) -> dict[int, DualMatrix]:
    def build():
        plus, minus = green_q_blocks(lattice, 1), green_q_blocks(lattice, -1)
        return {k: plus[k] - minus[k] for k in plus}
    return lattice._cached("causal_green_q", build)


def trusted_cells(lattice: LatticeSpacetime, k: int, window: tuple[int, int]) -> list[int]:
    """Ambient cells of observable degree k whose slice lies in ``window``."""
    p = FORM_DEGREE[k]
    lo, hi = window
    return [i for i in range(lattice.size(p)) if lo <= lattice.slice_of(p, i) <= hi]


def _cols(m: DualMatrix, cols: Sequence[int]) -> DualMatrix:
    return m.sub(list(range(m.nrows())), cols)


def green_homotopy_defects(C: ObservableComplex, sign: int,
                           window: tuple[int, int]) -> dict[int, DualMatrix]:
    """j - (d G + G d) per source degree, on the target rows inside ``window``."""
    L = C.lattice
    G = green_homotopy_blocks(L, sign)
    sol_d = solution_differentials(L)
    d_obs = C.differential_blocks()
    out = {}
    for k in DEGREES:
        n = ambient_size(L, k)
        lhs = DualMatrix(C.embedding(k)).scaled(J_SIGNS[k])
        rhs = DualMatrix.zeros(n, C.dims[k])
        if k in G:
            rhs = rhs + sol_d[k + 1] @ _cols(G[k], C.supports[k])
        if k - 1 in G:
            rhs = rhs + _cols(G[k - 1], C.supports[k - 1]) @ d_obs[k]
        rows = trusted_cells(L, k, window)
        out[k] = (lhs - rhs).sub(rows, list(range(C.dims[k])))
    return out


def _base_vertex(lattice: LatticeSpacetime, p: int, i: int) -> tuple[int, int]:
    return tuple(lattice.cell_at(p, i)[1:])


def in_cone(lattice: LatticeSpacetime, source: tuple[int, int], point: tuple[int, int], sign: int,
            widen: int) -> bool:
    dt = (point[0] - source[0]) * sign
    return dt >= -widen and periodic_distance(point[1], source[1], lattice.X) <= max(dt, 0) + widen


def green_support_violations(lattice: LatticeSpacetime, sign: int, p: int, widen: int = 2,
                             limit: int = 5) -> list[str]:
    """Entries of G^{sign} outside the widened slope-1 cone of their source."""
    G = lattice.green(sign, p).matrix
    out = []
    for m in (G.base, G.slope):
        if m is None:
            continue
        for i, j, _ in nonzero_entries(m):
            if not in_cone(lattice, _base_vertex(lattice, p, j), _base_vertex(lattice, p, i), sign, widen):
                out.append(f"G{'+' if sign > 0 else '-'} of {lattice.cell_name(p, j)} "
                           f"reaches {lattice.cell_name(p, i)}")
                if len(out) >= limit:
                    return out
    return out


def green_commutation_defects(lattice: LatticeSpacetime, sign: int,
                              window: tuple[int, int]) -> dict[str, DualMatrix]:
    """d G = G d on 0-forms and delta G = G delta on 1-forms, rows and sources in ``window``."""
    g0 = lattice.green(sign, 0).matrix
    g1 = lattice.green(sign, 1).matrix
    d0 = lattice.coboundary(0)
    delta1 = lattice.codifferential(1)
    lo, hi = window

    def cells(p):
        return [i for i in range(lattice.size(p)) if lo <= lattice.slice_of(p, i) <= hi]

    v, e = cells(0), cells(1)
    return {"d G = G d": (d0 @ _cols(g0, v) - g1 @ _cols(d0, v)).sub(e, list(range(len(v)))),
            "delta G = G delta": (delta1 @ _cols(g1, e) - g0 @ _cols(delta1, e)).sub(v, list(range(len(e))))}


# ---------------------------------------------------------------------------
# the Poisson structure


def poisson_form(C: ObservableComplex) -> BlockOperator:
    """The matrix of tau on L(C): tau(u, v) = u^T P v.

    tau(phi1, phi2) = <phi1, G phi2> and tau(alpha, chi) = <alpha, G d chi> = tau(chi, alpha),
    with G the causal propagator on 1-forms.
    """
    L = C.lattice
    wg = L.weight(1) @ L.causal_propagator(1)
    phiphi = wg.sub(C.supports[0], C.supports[0])
    all_e = list(range(L.n_edges))
    alphachi = wg.sub(C.supports[1], all_e) @ _cols(L.coboundary(0), C.supports[-1])
    return BlockOperator(C.dims, C.dims, {(0, 0): phiphi, (1, -1): alphachi, (-1, 1): alphachi.transpose()})


def _parity_rows(op: BlockOperator) -> BlockOperator:
    return BlockOperator(op.row_dims, op.col_dims,
                         {(r, c): (m if r % 2 == 0 else -m) for (r, c), m in op.blocks.items()})


def poisson_defects(C: ObservableComplex, P: BlockOperator) -> list[str]:
    """Reasons why P is not a Poisson structure on L(C); empty when it is."""
    problems = []
    for (r, c) in P.blocks:
        if r + c != 0:
            problems.append(f"tau pairs degrees {r} and {c}")
    for (r, c), m in P.blocks.items():
        sign = -1 if (r * c) % 2 == 0 else 1
        if P.block(c, r) != m.transpose().scaled(sign):
            problems.append(f"tau is not graded antisymmetric on degrees ({r}, {c})")
    D = C.d_op()
    defect = D.transpose() @ P + _parity_rows(P) @ D
    if not defect.is_zero():
        r, i, c, j, v = defect.first_nonzero()
        problems.append(f"tau is not a chain map: ({C.labels(r)[i]}, {C.labels(c)[j]}) gives {v}")
    return problems


# ---------------------------------------------------------------------------
# the four regions and their diagram


def inclusion_op(source: ObservableComplex, target: ObservableComplex) -> BlockOperator:
    """Extension by zero L(source) -> L(target), degree by degree."""
    blocks = {}
    for k in DEGREES:
        pos = target._position[k]
        m = fmpq_mat(target.dims[k], source.dims[k])
        for j, c in enumerate(source.supports[k]):
            if c not in pos:
                raise LatticeCheckError(f"{source.name} is not inside {target.name}",
                                        f"{PREFIX[k]} on {source.lattice.cell_name(FORM_DEGREE[k], c)}")
            m[pos[c], j] = ONE
        blocks[(k, k)] = DualMatrix(m)
    return BlockOperator(target.dims, source.dims, blocks)


def restrict_form(P: BlockOperator, source: ObservableComplex, target: ObservableComplex) -> BlockOperator:
    """tau o (f ^ f) for the inclusion f of source into target; a submatrix of P."""
    pos = {k: [target._position[k][c] for c in source.supports[k]] for k in DEGREES}
    return BlockOperator(source.dims, source.dims,
                         {(r, c): m.sub(pos[r], pos[c]) for (r, c), m in P.blocks.items()})


@dataclasses.dataclass
class Regions:
    """M, M+, M_h, M- with their Poisson structures and the four inclusions.

    ``cut`` holds the slice t0 of the partition of unity used for each
    inclusion and ``cauchy`` the pair of Cauchy slices around it.
    """

    flat: LatticeSpacetime
    perturbed: LatticeSpacetime
    h: Perturbation
    complexes: dict
    forms: dict
    inclusions: dict
    cut: dict
    cauchy: dict
    widen: int

    def __getitem__(self, N: Obj) -> ObservableComplex:
        return self.complexes[N]

    def graded_map(self, f: Mor) -> GradedMap:
        src, tgt = self.complexes[f.source], self.complexes[f.target]
        return GradedMap(src.complex, tgt.complex, 0, self.inclusions[f].matrix().base, check=False)

    def rce_diagram(self) -> RceDiagram:
        return RceDiagram({N: C.complex for N, C in self.complexes.items()},
                          {f: self.graded_map(f) for f in EDGES}, validate=False)

    def poisson_diagram(self) -> PoissonRceDiagram:
        forms = {N: P.matrix().base for N, P in self.forms.items()}
        return PoissonRceDiagram(self.rce_diagram(), forms, validate=False)


def _middle_cut(slices: list[int]) -> tuple[int, tuple[int, int]]:
    lo, hi = slices[0], slices[-1]
    return (lo + hi + 1) // 2, (lo, hi)


def build_regions(lattice: LatticeSpacetime, h: Perturbation, margin: int = 2, widen: int = 1,
                  cut: Mapping[Mor, int] | None = None, check: bool = True) -> Regions:
    """The regions of the relative Cauchy evolution for the perturbation h.

    With ``check`` the four complexes are verified (d^2 = 0, tau Poisson)
    and the inclusions are verified to be tau-preserving chain maps.
    """
    T = lattice.T
    lo, hi = margin, T - 1 - margin
    for (t, x) in h.support:
        if not lo + widen < t < hi - widen:
            raise LatticeError(f"perturbation at {(t, x)} is not inside the interior of M")
    perturbed = lattice.perturbed(h)
    M = slab(lattice, lo, hi)
    plus = M - causal_cone(lattice, h.support, -1, widen)
    minus = M - causal_cone(lattice, h.support, 1, widen)
    full = {}
    for name, region in (("M+", plus), ("M-", minus)):
        full[name] = full_slices(lattice, region)
        if len(full[name]) < 2:
            raise LatticeError(f"region {name} is too thin: fewer than two full slices")
    complexes = {Obj.M: ObservableComplex(lattice, M, "M"),
                 Obj.MP: ObservableComplex(lattice, plus, "M+"),
                 Obj.MM: ObservableComplex(lattice, minus, "M-")}
    complexes[Obj.MH] = complexes[Obj.M].with_lattice(perturbed, "Mh")
    forms = {Obj.M: poisson_form(complexes[Obj.M]), Obj.MH: poisson_form(complexes[Obj.MH])}
    for N in (Obj.MP, Obj.MM):
        forms[N] = restrict_form(forms[Obj.M], complexes[N], complexes[Obj.M])
    inclusions = {f: inclusion_op(complexes[f.source], complexes[f.target]) for f in EDGES}
    cuts, cauchy = {}, {}
    for f in EDGES:
        slices = full["M+"] if f in (Mor.IP, Mor.JP) else full["M-"]
        t0, sigma = _middle_cut(slices)
        if cut and f in cut:
            t0 = cut[f]
            if not sigma[0] < t0 <= sigma[1]:
                raise LatticeError(f"cut slice {t0} for {f} is not between the Cauchy slices {sigma}")
        cuts[f], cauchy[f] = t0, sigma
    regions = Regions(lattice, perturbed, h, complexes, forms, inclusions, cuts, cauchy, widen)
    if check:
        problems = region_defects(regions)
        if problems:
            raise LatticeCheckError("region data fails", "; ".join(problems))
    return regions


def region_defects(regions: Regions) -> list[str]:
    """d^2 = 0, Poisson structures, and tau-preserving chain-map inclusions."""
    problems = []
    for N, C in regions.complexes.items():
        D = C.d_op()
        if not (D @ D).is_zero():
            problems.append(f"d^2 != 0 on L({N})")
        problems += [f"L({N}): {p}" for p in poisson_defects(C, regions.forms[N])]
    for f in EDGES:
        src, tgt = regions[f.source], regions[f.target]
        F = regions.inclusions[f]
        defect = tgt.d_op() @ F - F @ src.d_op()
        if not defect.is_zero():
            r, i, c, j, v = defect.first_nonzero()
            problems.append(f"{f} is not a chain map at {src.labels(c)[j]}")
        pulled = restrict_form(regions.forms[f.target], src, tgt)
        if pulled != regions.forms[f.source]:
            problems.append(f"{f} does not preserve tau")
    return problems


# ---------------------------------------------------------------------------
# geometric quasi-inverses


def _split_rows(m: fmpq_mat, keep) -> fmpq_mat:
    """Zero the rows i with keep(i) false."""
    n = m.ncols()
    if not m.nrows() or not n:
        return m
    flat = m.entries()
    for i in range(m.nrows()):
        if not keep(i):
            flat[i * n:(i + 1) * n] = [ZERO] * n
    return fmpq_mat(m.nrows(), n, flat)


def _split_dual_rows(m: DualMatrix, keep) -> DualMatrix:
    return DualMatrix(_split_rows(m.base, keep), None if m.slope is None else _split_rows(m.slope, keep))


def partition_homotopy(C: ObservableComplex, t0: int) -> BlockOperator:
    """-rho_+ G^- Q - rho_- G^+ Q on L(C) with rho_+ the indicator of slices >= t0.

    The image must stay inside the supports of C; a stray entry raises
    ``LatticeCheckError`` (the compact support statement).
    """
    L = C.lattice
    adv, ret = green_q_blocks(L, -1), green_q_blocks(L, 1)
    blocks = {}
    for k in (-1, 0, 1):
        p = FORM_DEGREE[k + 1]
        m = -(_split_dual_rows(_cols(adv[k], C.supports[k]), lambda i: L.slice_of(p, i) >= t0)
              + _split_dual_rows(_cols(ret[k], C.supports[k]), lambda i: L.slice_of(p, i) < t0))
        blocks[(k + 1, k)] = C.restrict(k + 1, m, f"the partition homotopy on {PREFIX[k]}")
    return BlockOperator(C.dims, C.dims, blocks)


@dataclasses.dataclass
class GeometricEquivalence:
    """f, f^{-1} = f^*(id + d lam), lam, gam and xi = 0 as block operators."""

    mor: Mor
    source: ObservableComplex
    target: ObservableComplex
    f: BlockOperator
    f_inv: BlockOperator
    lam: BlockOperator
    gam: BlockOperator

    def defects(self) -> dict[str, BlockOperator]:
        DV, DW = self.source.d_op(), self.target.d_op()
        IV, IW = BlockOperator.identity(self.source.dims), BlockOperator.identity(self.target.dims)
        return {
            "f f_inv - id - d(lam)": self.f @ self.f_inv - IW - d_boundary(DW, self.lam, DW, 1),
            "f_inv f - id - d(gamma)": self.f_inv @ self.f - IV - d_boundary(DV, self.gam, DV, 1),
            "f gamma - lam f": self.f @ self.gam - self.lam @ self.f,
            "f_inv chain map": DV @ self.f_inv - self.f_inv @ DW,
        }

    def witness(self, name: str, defect: BlockOperator) -> str:
        r, i, c, j, v = defect.first_nonzero()
        col_space = self.target if name in ("f f_inv - id - d(lam)", "f_inv chain map") else self.source
        return f"{name} at basis element {col_space.labels(c)[j]} (degree {c}): {v}"

    def equivalence_data(self) -> EquivalenceData:
        V, W = self.source.complex, self.target.complex
        return EquivalenceData(GradedMap(V, W, 0, self.f.matrix().base, check=False),
                               GradedMap(W, V, 0, self.f_inv.matrix().base, check=False),
                               GradedMap(W, W, 1, self.lam.matrix().base, check=False),
                               GradedMap(V, V, 1, self.gam.matrix().base, check=False),
                               GradedMap(V, W, 2, fmpq_mat(W.total_dim, V.total_dim), check=False),
                               method="geometric")


def geometric_equivalence(regions: Regions, f: Mor, verify: bool = True) -> GeometricEquivalence:
    """Quasi-inverse data for one inclusion from the Green operators of its target and source."""
    src, tgt = regions[f.source], regions[f.target]
    t0 = regions.cut[f]
    F = regions.inclusions[f]
    DW = tgt.d_op()
    lam = partition_homotopy(tgt, t0)
    gam = partition_homotopy(src, t0)
    moved = BlockOperator.identity(tgt.dims) + d_boundary(DW, lam, DW, 1)
    f_inv = F.transpose() @ moved
    outside = moved - F @ f_inv
    if not outside.is_zero():
        r, i, c, j, v = outside.first_nonzero()
        raise LatticeCheckError(f"id + d lam for {f} leaves L({src.name})",
                                f"image of {tgt.labels(c)[j]} has {tgt.labels(r)[i]} = {v}")
    data = GeometricEquivalence(f, src, tgt, F, f_inv, lam, gam)
    if verify:
        for name, defect in data.defects().items():
            if not defect.is_zero():
                raise LatticeCheckError(f"{f}: identity fails", data.witness(name, defect))
    return data


# ---------------------------------------------------------------------------
# relative Cauchy evolution


def ambient_differentials(lattice: LatticeSpacetime) -> dict[int, DualMatrix]:
    """The observable differential (-delta, delta d, -d) on all cochains, degree k -> k-1."""
    return lattice._cached("obs_d", lambda: {
        0: -lattice.codifferential(1),
        1: lattice.codifferential(2) @ lattice.coboundary(1),
        2: -lattice.coboundary(0)})


def _metric_lattice(regions: Regions, infinitesimal: bool) -> LatticeSpacetime:
    if not infinitesimal:
        return regions.perturbed
    key = "infinitesimal"
    if key not in regions.flat._cache:
        regions.flat._cache[key] = regions.flat.perturbed(regions.h, infinitesimal=True)
    return regions.flat._cache[key]


def rce_lin_plus(regions: Regions, infinitesimal: bool = False) -> BlockOperator:
    """i_+ + (d^{L(M_h)} - d^{L(M)}) G_{M_h} Q_{M_h} : L(M+) -> L(M).

    G is the causal propagator.  With ``infinitesimal`` the metric is
    g + eps h and the result is a dual-number operator.
    """
    Lh = _metric_lattice(regions, infinitesimal)
    M, MP = regions[Obj.M], regions[Obj.MP]
    dh, d = ambient_differentials(Lh), ambient_differentials(regions.flat)
    gq = causal_green_q_blocks(Lh)
    blocks = {}
    for k in (-1, 0, 1):
        diff = dh[k + 1] - d[k + 1]
        if diff.is_zero():
            continue
        m = diff @ _cols(gq[k], MP.supports[k])
        blocks[(k, k)] = M.restrict(k, m, f"the perturbation term on {PREFIX[k]}")
    return regions.inclusions[Mor.IP] + BlockOperator(M.dims, MP.dims, blocks)


def rce_lin_plus_unsimplified(regions: Regions, infinitesimal: bool = False) -> BlockOperator:
    """(id + (d_{M_h} - d_M) lam_{j-}) restricted to L(M+), with d_N the mapping differential."""
    Lh = _metric_lattice(regions, infinitesimal)
    M = regions[Obj.M]
    Mh = M.with_lattice(Lh, "Mh")
    lam = partition_homotopy(Mh, regions.cut[Mor.JM])
    diff = Mh.d_op() - M.d_op()
    change = diff @ lam + lam @ diff
    return regions.inclusions[Mor.IP] + change @ regions.inclusions[Mor.IP]


def rce_lin(regions: Regions, equivalence_ip: GeometricEquivalence | None = None,
            infinitesimal: bool = False) -> BlockOperator:
    """rce^{lin} = rce^{lin,+} o (id + d lam_{i+}) on L(M)."""
    e = equivalence_ip or geometric_equivalence(regions, Mor.IP, verify=False)
    return rce_lin_plus(regions, infinitesimal) @ e.f_inv


def ghost_boundary_witness(regions: Regions, rce_plus: BlockOperator) -> fmpq_mat:
    """y with d y = rce(chi) - chi for every ghost basis element chi of L(M+), by a linear solve."""
    M = regions[Obj.M]
    change = (rce_plus - regions.inclusions[Mor.IP]).block(-1, -1).base
    y = solve_matrix(M.d_op().block(-1, 0).base, change)
    if y is None:
        raise LatticeCheckError("rce(chi) - chi is not a boundary")
    return y


def zigzag_context(regions: Regions, equivalences: Mapping[Mor, GeometricEquivalence] | None = None) -> ZigzagContext:
    """The abstract zig-zag machinery fed with the geometric equivalence data."""
    equivalences = dict(equivalences or {})
    for f in EDGES:
        if f not in equivalences:
            equivalences[f] = geometric_equivalence(regions, f)
    data = {f: e.equivalence_data() for f, e in equivalences.items()}
    return ZigzagContext(regions.rce_diagram(), data, verify=False)


def explicit_zigzag(regions: Regions, equivalences: Mapping[Mor, GeometricEquivalence]) -> BlockOperator:
    """L(i-) L(j-)^{-1} L(j+) L(i+)^{-1} on L(M)."""
    return (regions.inclusions[Mor.IM] @ equivalences[Mor.JM].f_inv
            @ regions.inclusions[Mor.JP] @ equivalences[Mor.IP].f_inv)


# ---------------------------------------------------------------------------
# stress-energy


def stress_derivative(regions: Regions) -> BlockOperator:
    """t = d/d eps of rce^{lin,+} for the metric g + eps h, as a map L(M+) -> L(M)."""
    return rce_lin_plus(regions, infinitesimal=True).slope()


def compatibility_defect(regions: Regions, t_op: BlockOperator) -> BlockOperator:
    """tau(t w1, i w2) + tau(i w1, t w2) as a form on L(M+)."""
    P = regions.forms[Obj.M]
    I = regions.inclusions[Mor.IP]
    return t_op.transpose() @ P @ I + I.transpose() @ P @ t_op


def corrected_stress(regions: Regions, t_op: BlockOperator, psi: BlockOperator) -> BlockOperator:
    """t~ = t + d psi (psi of degree 1)."""
    return t_op + d_boundary(regions[Obj.M].d_op(), psi, regions[Obj.MP].d_op(), 1)


def closed_form_psi(regions: Regions) -> BlockOperator:
    """psi(chi) = W1^{-1} (dW1/d eps) d G chi with G the causal propagator on 0-forms.

    The weight derivative lives on the support of h, so psi(chi) is local.
    """
    flat = regions.flat
    Le = _metric_lattice(regions, True)
    w_dot = DualMatrix(Le.weight(1).slope_or_zero())
    m = flat.weight_inverse(1) @ w_dot @ flat.coboundary(0) @ _cols(flat.causal_propagator(0),
                                                                       regions[Obj.MP].supports[-1])
    M = regions[Obj.M]
    return BlockOperator(M.dims, regions[Obj.MP].dims, {(0, -1): M.restrict(0, m, "the closed-form psi")})


@dataclasses.dataclass
class PsiSolution:
    """The outcome of the psi solve: which ansatz worked and the corrected stress."""

    ansatz: str
    psi: BlockOperator
    t_corrected: BlockOperator
    unknowns: int
    attempts: list


def _mask_cells(lattice: LatticeSpacetime, p: int, vertices: set[tuple[int, int]]) -> list[int]:
    return [i for i in range(lattice.size(p)) if _base_vertex(lattice, p, i) in vertices]


def _dilate(lattice: LatticeSpacetime, vertices: set[tuple[int, int]], radius: int) -> set[tuple[int, int]]:
    out = set()
    for (t, x) in vertices:
        for dt in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if 0 <= t + dt < lattice.T:
                    out.add((t + dt, (x + dx) % lattice.X))
    return out


def _local_ansatz(regions: Regions, degrees: Sequence[int], radius: int):
    """Unknowns psi = sum s_j e_{a_j} u_j with u_j a row of G Q restricted to L(M+).

    Row a and the G Q row b share a base vertex near the support of h, so
    each unknown is one entry of a local block matrix S in psi(w) = S G Q w.
    """
    flat = regions.flat
    M, MP = regions[Obj.M], regions[Obj.MP]
    gq = causal_green_q_blocks(flat)
    near = _dilate(flat, regions.h.support, radius)
    unknowns = []
    for c in degrees:
        r = c + 1
        p = FORM_DEGREE[r]
        U = _cols(gq[c], MP.supports[c]).base
        cells = [i for i in _mask_cells(flat, p, near) if i in M._position[r]]
        by_vertex: dict = {}
        for i in cells:
            by_vertex.setdefault(_base_vertex(flat, p, i), []).append(i)
        for group in by_vertex.values():
            for a in group:
                for b in group:
                    unknowns.append((c, M.offsets[r] + M._position[r][a], b, U))
    return unknowns


def _ansatz_psi(regions: Regions, unknowns, values) -> BlockOperator:
    M, MP = regions[Obj.M], regions[Obj.MP]
    blocks: dict[tuple[int, int], fmpq_mat] = {}
    for (c, a, b, U), s in zip(unknowns, values):
        if not s:
            continue
        r = c + 1
        m = blocks.setdefault((r, c), fmpq_mat(M.dims[r], MP.dims[c]))
        row = a - M.offsets[r]
        for j in range(MP.dims[c]):
            v = U[b, j]
            if v:
                m[row, j] += s * v
    return BlockOperator(M.dims, MP.dims, {rc: DualMatrix(m) for rc, m in blocks.items()})


def _projected_system(regions: Regions, t_op: BlockOperator, unknowns, n_eq: int, seed: int):
    """Random bilinear projections y^T C(s) z of the compatibility equations, linear in s."""
    import random
    rng = random.Random(seed)
    M, MP = regions[Obj.M], regions[Obj.MP]
    n = MP.total_dim
    P = regions.forms[Obj.M].matrix().base
    I = regions.inclusions[Mor.IP].matrix().base
    DM = M.d_op().matrix().base
    DP = MP.d_op().matrix().base
    T = t_op.matrix().base
    Y = fmpq_mat(n, n_eq, [rng.randint(-3, 3) for _ in range(n * n_eq)])
    Z = fmpq_mat(n, n_eq, [rng.randint(-3, 3) for _ in range(n * n_eq)])
    PIz = P * (I * Z)
    PtIy = P.transpose() * (I * Y)
    DtPIz = DM.transpose() * PIz
    DtPtIy = DM.transpose() * PtIy
    DPz, DPy = DP * Z, DP * Y
    rhs = fmpq_mat(n_eq, 1)
    Ty, Tz = T * Y, T * Z
    for q in range(n_eq):
        v = ZERO
        for i in range(T.nrows()):
            v += Ty[i, q] * PIz[i, q] + PtIy[i, q] * Tz[i, q]
        rhs[q, 0] = -v
    A = fmpq_mat(n_eq, len(unknowns))
    offsets = MP.offsets
    for j, (c, a, b, U) in enumerate(unknowns):
        cols = [(k, U[b, k]) for k in range(U.ncols()) if U[b, k]]
        for q in range(n_eq):
            az = sum((v * Z[offsets[c] + k, q] for k, v in cols), ZERO)
            ay = sum((v * Y[offsets[c] + k, q] for k, v in cols), ZERO)
            bz = sum((v * DPz[offsets[c] + k, q] for k, v in cols), ZERO)
            by = sum((v * DPy[offsets[c] + k, q] for k, v in cols), ZERO)
            A[q, j] = ay * DtPIz[a, q] + by * PIz[a, q] + az * DtPtIy[a, q] + bz * PtIy[a, q]
    return A, rhs


ANSATZ_LADDER = (("chi-local", (-1,), 0), ("chi-wide", (-1,), 1), ("all-degrees", (-1, 0, 1), 1))


class NoExactPsi(LatticeCheckError):
    """No psi in any ansatz of the ladder makes the corrected stress compatible."""


def psi_correction(regions: Regions, t_op: BlockOperator | None = None, seed: int = 0) -> PsiSolution:
    """Solve for psi with t + d psi compatible with tau, trying the ansatz ladder in order.

    Each rung solves a projected system of random bilinear combinations of
    the equations and then verifies the compatibility on all basis pairs.
    """
    t_op = stress_derivative(regions) if t_op is None else t_op
    attempts = []
    M, MP = regions[Obj.M], regions[Obj.MP]
    if compatibility_defect(regions, t_op).is_zero():
        zero = BlockOperator(M.dims, MP.dims)
        return PsiSolution("zero", zero, t_op, 0, ["zero: t already compatible"])
    for name, degrees, radius in ANSATZ_LADDER:
        unknowns = _local_ansatz(regions, degrees, radius)
        n_eq = len(unknowns) + 16
        A, rhs = _projected_system(regions, t_op, unknowns, n_eq, seed)
        sol = solve_matrix(A, rhs)
        if sol is None:
            attempts.append(f"{name}: projected system inconsistent ({len(unknowns)} unknowns)")
            continue
        psi = _ansatz_psi(regions, unknowns, [sol[j, 0] for j in range(len(unknowns))])
        t_tilde = corrected_stress(regions, t_op, psi)
        if compatibility_defect(regions, t_tilde).is_zero():
            attempts.append(f"{name}: solved with {len(unknowns)} unknowns")
            return PsiSolution(name, psi, t_tilde, len(unknowns), attempts)
        attempts.append(f"{name}: projected solution fails the full check")
    raise NoExactPsi("no exact psi", "; ".join(attempts))


def polarized_stress(regions: Regions, t_corrected: BlockOperator, w1: fmpq_mat, w2: fmpq_mat) -> fmpq:
    """tau(t~ w1, i w2) for column vectors w1, w2 over the basis of L(M+)."""
    P = regions.forms[Obj.M].matrix().base
    T = t_corrected.matrix().base
    I = regions.inclusions[Mor.IP].matrix().base
    return ((T * w1).transpose() * P * (I * w2))[0, 0]


def ghost_antifield_leak(regions: Regions, t_corrected: BlockOperator) -> tuple[int, int] | None:
    """The first degree pair (deg w1, deg w2) outside (0, 0) where tau(t~ w1, i w2) is nonzero."""
    P = regions.forms[Obj.M]
    I = regions.inclusions[Mor.IP]
    pairing = t_corrected.transpose() @ P @ I
    for (r, c), m in sorted(pairing.blocks.items()):
        if (r, c) != (0, 0) and not m.is_zero():
            return (r, c)
    return None


def preservation_defect(op: BlockOperator, source_form: BlockOperator,
                        target_form: BlockOperator) -> BlockOperator:
    """op^T P_target op - P_source; zero iff op preserves tau."""
    return op.transpose() @ target_form @ op - source_form


def non_preservation_witness(regions: Regions, op: BlockOperator, source: Obj = Obj.M) -> str | None:
    """A basis pair (w1, w2) with tau(op w1, op w2) != tau(w1, w2), or None.

    A pair of degree-0 fields is preferred when there is one.
    """
    defect = preservation_defect(op, regions.forms[source], regions.forms[Obj.M])
    if defect.is_zero():
        return None
    fields = BlockOperator(defect.row_dims, defect.col_dims, {(0, 0): defect.block(0, 0)})
    r, i, c, j, v = (fields if not fields.is_zero() else defect).first_nonzero()
    C = regions[source]
    return f"tau(Z {C.labels(r)[i]}, Z {C.labels(c)[j]}) - tau({C.labels(r)[i]}, {C.labels(c)[j]}) = {v}"


def winding_field(regions: Regions, t: int) -> fmpq_mat:
    """phi = the sum of the space edges of slice t, as a degree-0 cycle of L(M+).

    Its flat codifferential is a difference of equal neighbours, so phi is
    co-closed.  It is not the codifferential of a compactly supported 2-form
    (it winds around the circle), so its field strength d G phi is nonzero.
    """
    flat = regions.flat
    phi = fmpq_mat(flat.size(1), 1)
    for x in range(flat.X):
        phi[flat.space_edge(t, x), 0] = ONE
    MP = regions[Obj.MP]
    local = MP.restrict(0, DualMatrix(phi), f"the winding field on slice {t}").base
    out = fmpq_mat(MP.total_dim, 1)
    for i in range(local.nrows()):
        out[MP.offsets[0] + i, 0] = local[i, 0]
    return out


def rce_pairing_slope(regions: Regions, w1: fmpq_mat, w2: fmpq_mat) -> fmpq:
    """d/d eps of tau_M(rce_eps w1, i w2), with rce taken in its unsimplified form.

    For cycles w1, w2 this equals tau(t~ w1, i w2) whatever psi is, which
    makes it an independent route to the polarized stress.
    """
    R = rce_lin_plus_unsimplified(regions, infinitesimal=True).matrix()
    P = regions.forms[Obj.M].matrix().base
    I = regions.inclusions[Mor.IP].matrix().base
    return ((R.slope_or_zero() * w1).transpose() * P * (I * w2))[0, 0]


def field_strength_value(regions: Regions, phi1: fmpq_mat, phi2: fmpq_mat) -> fmpq:
    """1/2 sum over faces of F1 F2 (h_tt - h_xx) at the face's base vertex, F = d G phi.

    This is the flat field-strength contraction against h, reported next to
    the polarized stress for comparison.
    """
    flat = regions.flat
    MP = regions[Obj.MP]
    G = flat.causal_propagator(1).base
    d1 = flat.coboundary(1).base
    emb = MP.embedding(0)
    F1 = d1 * (G * (emb * _block_rows(phi1, MP.offsets[0], MP.dims[0])))
    F2 = d1 * (G * (emb * _block_rows(phi2, MP.offsets[0], MP.dims[0])))
    total = ZERO
    for v, (htt, htx, hxx) in regions.h.entries.items():
        i = flat.face(*v)
        total += F1[i, 0] * F2[i, 0] * (htt - hxx)
    return total / 2


def _block_rows(vec: fmpq_mat, offset: int, n: int) -> fmpq_mat:
    out = fmpq_mat(n, 1)
    for i in range(n):
        out[i, 0] = vec[offset + i, 0]
    return out
