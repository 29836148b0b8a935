"""The four-object category C, its localization to BZ and the spiral.

C has objects M, M+, Mh, M- and non-identity morphisms

    i+ : M+ -> M,   j+ : M+ -> Mh,   j- : M- -> Mh,   i- : M- -> M.

Localizing at all morphisms gives BZ; the functor L sends i- to 1 and every
other morphism to 0.  The comma category of L is a line (the spiral), which
we never materialize: a node (n, N) has the integer coordinate

    c(n, M) = 4n,  c(n, M+) = 4n - 1,  c(n, Mh) = 4n - 2,  c(n, M-) = 4n - 3,

and the edge between coordinates c and c + 1 is determined by c mod 4.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from .chain_core import ChainComplex, GradedMap, is_chain_map, is_quasi_iso


class Obj(enum.Enum):
    M = "M"
    MP = "M+"
    MH = "Mh"
    MM = "M-"

    def __repr__(self):
        return self.value

    __str__ = __repr__


class Mor(enum.Enum):
    ID_M = "id_M"
    ID_MP = "id_M+"
    ID_MH = "id_Mh"
    ID_MM = "id_M-"
    IP = "i+"
    JP = "j+"
    JM = "j-"
    IM = "i-"

    def __repr__(self):
        return self.value

    __str__ = __repr__

    @property
    def source(self) -> Obj:
        return _ENDS[self][0]

    @property
    def target(self) -> Obj:
        return _ENDS[self][1]

    @property
    def is_identity(self) -> bool:
        return self in IDENTITIES.values()


_ENDS = {
    Mor.ID_M: (Obj.M, Obj.M),
    Mor.ID_MP: (Obj.MP, Obj.MP),
    Mor.ID_MH: (Obj.MH, Obj.MH),
    Mor.ID_MM: (Obj.MM, Obj.MM),
    Mor.IP: (Obj.MP, Obj.M),
    Mor.JP: (Obj.MP, Obj.MH),
    Mor.JM: (Obj.MM, Obj.MH),
    Mor.IM: (Obj.MM, Obj.M),
}

OBJECTS = (Obj.M, Obj.MP, Obj.MH, Obj.MM)
IDENTITIES = {Obj.M: Mor.ID_M, Obj.MP: Mor.ID_MP, Obj.MH: Mor.ID_MH, Obj.MM: Mor.ID_MM}
EDGES = (Mor.IP, Mor.JP, Mor.JM, Mor.IM)
MORPHISMS = tuple(IDENTITIES.values()) + EDGES


def compose(g: Mor, f: Mor) -> Mor:
    """g o f; only composites with an identity exist."""
    if f.target is not g.source:
        raise ValueError(f"{g} o {f} is not composable")
    if f.is_identity:
        return g
    if g.is_identity:
        return f
    raise ValueError(f"{g} o {f} is not a morphism of C")


def localize(f: Mor) -> int:
    """The localization functor L : C -> BZ on morphisms."""
    return 1 if f is Mor.IM else 0


def morphisms_into(N: Obj) -> list[Mor]:
    """All morphisms g with target N, identity first."""
    return [IDENTITIES[N]] + [f for f in EDGES if f.target is N]


# ---------------------------------------------------------------------------
# spiral


_POSITION = {Obj.M: 0, Obj.MP: -1, Obj.MH: -2, Obj.MM: -3}
_BY_RESIDUE = {0: Obj.M, 3: Obj.MP, 2: Obj.MH, 1: Obj.MM}


@dataclass(frozen=True, order=True)
class SpiralNode:
    level: int
    obj: Obj

    @property
    def coord(self) -> int:
        return 4 * self.level + _POSITION[self.obj]

    @staticmethod
    def at(coord: int) -> "SpiralNode":
        r = coord % 4
        return SpiralNode((coord - _POSITION[_BY_RESIDUE[r]]) // 4, _BY_RESIDUE[r])

    def shifted(self, k: int) -> "SpiralNode":
        return SpiralNode(self.level + k, self.obj)

    def __repr__(self):
        return f"({self.level},{self.obj})"


@dataclass(frozen=True, order=True)
class SpiralEdge:
    level: int
    mor: Mor

    def __post_init__(self):
        if self.mor.is_identity:
            raise ValueError("identity morphisms are not spiral edges")

    @property
    def source(self) -> SpiralNode:
        return SpiralNode(self.level + localize(self.mor), self.mor.source)

    @property
    def target(self) -> SpiralNode:
        return SpiralNode(self.level, self.mor.target)

    @property
    def lower(self) -> int:
        """Coordinate of the endpoint closer to minus infinity."""
        return min(self.source.coord, self.target.coord)

    @staticmethod
    def at(lower: int) -> "SpiralEdge":
        """The edge joining coordinates ``lower`` and ``lower + 1``."""
        n, r = divmod(lower, 4)
        if r == 0:
            return SpiralEdge(n, Mor.IM)
        return SpiralEdge(n + 1, {1: Mor.JM, 2: Mor.JP, 3: Mor.IP}[r])

    def shifted(self, k: int) -> "SpiralEdge":
        return SpiralEdge(self.level + k, self.mor)

    def __repr__(self):
        return f"({self.level},{self.mor})"


ALONG = "along"
AGAINST = "against"


def spiral_path(src: SpiralNode, dst: SpiralNode) -> list[tuple[SpiralEdge, str]]:
    """The unique shortest path from src to dst, each step tagged along/against."""
    a, b = src.coord, dst.coord
    steps = []
    if a < b:
        for c in range(a, b):
            edge = SpiralEdge.at(c)
            steps.append((edge, ALONG if edge.source.coord == c else AGAINST))
    else:
        for c in range(a - 1, b - 1, -1):
            edge = SpiralEdge.at(c)
            steps.append((edge, ALONG if edge.source.coord == c + 1 else AGAINST))
    return steps


def nodes_in_window(radius: int) -> list[SpiralNode]:
    """Nodes with |level| <= radius, in coordinate order."""
    return sorted((SpiralNode(n, N) for n in range(-radius, radius + 1) for N in OBJECTS),
                  key=lambda v: v.coord)


def edges_in_window(radius: int) -> list[SpiralEdge]:
    """Edges whose endpoints both lie in the level window, in coordinate order."""
    nodes = nodes_in_window(radius)
    lo, hi = nodes[0].coord, nodes[-1].coord
    return [SpiralEdge.at(c) for c in range(lo, hi)]


# ---------------------------------------------------------------------------
# diagrams


class DiagramError(ValueError):
    pass


class RceDiagram:
    """A functor C -> Ch: four complexes and four chain maps."""

    def __init__(self, objects: Mapping[Obj, ChainComplex], maps: Mapping[Mor, GradedMap],
                 validate: bool = True):
        self.objects = {N: objects[N] for N in OBJECTS}
        self.maps = {f: maps[f] for f in EDGES}
        if validate:
            self.validate()

    def validate(self) -> None:
        for f, m in self.maps.items():
            if m.source.total_dim != self[f.source].total_dim or \
                    m.target.total_dim != self[f.target].total_dim:
                raise DiagramError(f"{f} does not connect X({f.source}) to X({f.target})")
            if m.source.basis != self[f.source].basis or m.target.basis != self[f.target].basis:
                raise DiagramError(f"{f} is attached to the wrong complexes")
            if not is_chain_map(m):
                raise DiagramError(f"X({f}) is not a chain map")

    def __getitem__(self, N: Obj) -> ChainComplex:
        return self.objects[N]

    def map(self, f: Mor) -> GradedMap:
        if f.is_identity:
            from .chain_core import identity_map
            return identity_map(self[f.source])
        return self.maps[f]


def check_homotopy_time_slice(D: RceDiagram) -> bool:
    """True iff every morphism of C goes to a quasi-isomorphism."""
    return all(is_quasi_iso(D.maps[f]) for f in EDGES)
