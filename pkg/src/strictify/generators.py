"""Seeded random complexes, quasi-isomorphisms and Poisson diagrams.

Everything is built in a "standard form" where the structure is visible
(homology generators plus contractible pairs e -> de), and then conjugated
by random degreewise changes of basis so that nothing downstream can rely
on that form.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from flint import fmpq, fmpq_mat

from .chain_core import ChainComplex, GradedMap, identity_map
from .exact_algebra import ONE, identity, nonzero_entries
from .poisson import PoissonRceDiagram
from .site import EDGES, OBJECTS, Mor, RceDiagram

DEGREES = tuple(range(-2, 4))


def random_scalar(rng: random.Random, nonzero: bool = False) -> fmpq:
    while True:
        v = fmpq(rng.randint(-3, 3), rng.choice((1, 1, 1, 2, 3)))
        if v or not nonzero:
            return v


def random_invertible(rng: random.Random, n: int) -> fmpq_mat:
    """Product of a random unit lower and a random unit upper triangular matrix."""
    lower = identity(n)
    upper = identity(n)
    for i in range(n):
        upper[i, i] = random_scalar(rng, nonzero=True)
        for j in range(i):
            if rng.random() < 0.6:
                lower[i, j] = random_scalar(rng)
            if rng.random() < 0.6:
                upper[j, i] = random_scalar(rng)
    return lower * upper


@dataclass
class StandardComplex:
    """Homology generators per degree plus pairs (e_k, de_k) with e_k in degree k."""

    homology: dict[int, int]
    pairs: dict[int, int]


def random_standard(rng: random.Random, degrees=DEGREES, max_homology: int = 2,
                    max_pairs: int = 1, require_homology: bool = True) -> StandardComplex:
    while True:
        hom = {k: rng.randint(0, max_homology) for k in degrees}
        pairs = {k: rng.randint(0, max_pairs) for k in degrees if k - 1 in degrees}
        if not require_homology or any(hom.values()):
            return StandardComplex(hom, pairs)


def build_standard(shape: StandardComplex, prefix: str) -> ChainComplex:
    """Basis in degree k: homology h, then tops e of pairs, then bottoms of pairs."""
    basis: dict[int, list[str]] = {}
    for k, n in shape.homology.items():
        basis.setdefault(k, []).extend(f"{prefix}h{k}_{i}" for i in range(n))
    for k, n in shape.pairs.items():
        basis.setdefault(k, []).extend(f"{prefix}e{k}_{i}" for i in range(n))
        basis.setdefault(k - 1, []).extend(f"{prefix}b{k}_{i}" for i in range(n))
    cx = ChainComplex(basis, validate=False)
    diff = {}
    for k, n in shape.pairs.items():
        m = fmpq_mat(cx.dim(k - 1), cx.dim(k))
        for i in range(n):
            m[cx.locate(f"{prefix}b{k}_{i}")[1], cx.locate(f"{prefix}e{k}_{i}")[1]] = ONE
        diff[k] = m
    return ChainComplex(basis, diff)


def conjugate_complex(V: ChainComplex, rng: random.Random, prefix: str) -> tuple[ChainComplex, fmpq_mat]:
    """A copy of V in a random basis; returns it with the global change of basis C (new = C old)."""
    blocks = {k: random_invertible(rng, V.dim(k)) for k in V.degrees}
    C = fmpq_mat(V.total_dim, V.total_dim)
    for k, b in blocks.items():
        off = V.offset(k)
        for i, j, v in nonzero_entries(b):
            C[off + i, off + j] = v
    basis = {k: [f"{prefix}{i}_{k}" for i in range(V.dim(k))] for k in V.degrees}
    Cinv = C.inv()
    d = C * V.global_d() * Cinv
    W = ChainComplex(basis, validate=False)
    diff = {k: _block(d, W, k - 1, k) for k in W.degrees}
    return ChainComplex(basis, diff), C


def _block(m: fmpq_mat, V: ChainComplex, row_deg: int, col_deg: int) -> fmpq_mat:
    rows = list(V.global_slice(row_deg))
    cols = list(V.global_slice(col_deg))
    out = fmpq_mat(len(rows), len(cols))
    for a, i in enumerate(rows):
        for b, j in enumerate(cols):
            out[a, b] = m[i, j]
    return out


def random_homotopy(rng: random.Random, V: ChainComplex, W: ChainComplex, shift: int = 1,
                    density: float = 0.5) -> GradedMap:
    sdeg, tdeg = V.global_degrees, W.global_degrees
    m = fmpq_mat(W.total_dim, V.total_dim)
    for i, a in enumerate(tdeg):
        for j, b in enumerate(sdeg):
            if a == b + shift and rng.random() < density:
                m[i, j] = random_scalar(rng)
    return GradedMap(V, W, shift, m, check=False)


def null_homotopic_map(rng: random.Random, V: ChainComplex, W: ChainComplex) -> GradedMap:
    """d h + h d for a random degree one h; always a chain map."""
    h = random_homotopy(rng, V, W)
    mat = W.global_d() * h.matrix + h.matrix * V.global_d()
    return GradedMap(V, W, 0, mat, check=False)


def random_quasi_iso(seed: int) -> GradedMap:
    """A quasi-isomorphism V -> W between random complexes of small dimension."""
    rng = random.Random(seed)
    base = build_standard(random_standard(rng), "")
    extra_v = build_standard(random_standard(rng, max_homology=0, require_homology=False), "v")
    extra_w = build_standard(random_standard(rng, max_homology=0, require_homology=False), "w")
    V0 = _sum(base, extra_v)
    W0 = _sum(base, extra_w)
    # (b, a) -> (b + stuff from a killed in homology, chain map into the acyclic part)
    m = fmpq_mat(W0.total_dim, V0.total_dim)
    for lab in base.global_labels:
        m[W0.global_index(lab), V0.global_index(lab)] = ONE
    mix = null_homotopic_map(rng, V0, W0).matrix
    F = m + mix
    V, Cv = conjugate_complex(V0, rng, "v")
    W, Cw = conjugate_complex(W0, rng, "w")
    return GradedMap(V, W, 0, Cw * F * Cv.inv(), check=False)


def _sum(V: ChainComplex, W: ChainComplex) -> ChainComplex:
    from .chain_core import direct_sum
    return direct_sum(V, W)


def random_pairing(rng: random.Random, V: ChainComplex, cycles: list[str],
                   density: float = 0.7) -> fmpq_mat:
    """A graded antisymmetric chain pairing on V.

    It is the sum of a pairing between the given cycles (basis labels of
    elements with zero differential) of opposite degree and an exact term
    sigma o D for a random antisymmetric degree one functional sigma.
    """
    n = V.total_dim
    degs = V.global_degrees
    P = fmpq_mat(n, n)
    hom = [V.global_index(lab) for lab in cycles]
    for a in hom:
        for b in hom:
            if a < b and degs[a] + degs[b] == 0 and rng.random() < density:
                v = random_scalar(rng)
                P[a, b] = v
                P[b, a] = -v if (degs[a] * degs[b]) % 2 == 0 else v
    S = fmpq_mat(n, n)
    for a in range(n):
        for b in range(a, n):
            if degs[a] + degs[b] == -1 and rng.random() < density:
                v = random_scalar(rng)
                S[a, b] = v
                if a != b:
                    S[b, a] = -v if (degs[a] * degs[b]) % 2 == 0 else v
    # tau(x, y) += sigma(dx, y) + (-1)^|x| sigma(x, dy)
    D = V.global_d()
    par = V.parity()
    return P + D.transpose() * S + par * S * D


def transport_pairing(P: fmpq_mat, C: fmpq_mat) -> fmpq_mat:
    """The pairing in the new basis when new = C old."""
    Cinv = C.inv()
    return Cinv.transpose() * P * Cinv


def homology_labels(V: ChainComplex) -> list[str]:
    """Labels of the homology generators of a complex in standard form."""
    return [lab for lab in V.global_labels if _kind(lab) == "h"]


def _kind(label: str) -> str:
    head = label.split("_")[0]
    return head.rstrip("-0123456789")[-1:]


def standard_base(rng: random.Random, max_homology: int = 2, max_pairs: int = 1) -> ChainComplex:
    return build_standard(random_standard(rng, max_homology=max_homology, max_pairs=max_pairs), "")


def generate_diagram(seed: int, max_homology: int = 2, max_pairs: int = 1, acyclic_pairs: int = 1,
                     broken: Mor | None = None, conjugate: bool = True, max_dim: int = 5):
    """A seeded Poisson diagram on C satisfying the homotopy time-slice axiom.

    Each object is B + A_N with B a common base complex and A_N contractible.
    X(f) is the identity on B plus null-homotopic chain maps B -> A_t and
    A_s -> A_t.  The pairing lives on B and vanishes on A_N, so every map
    preserves it.  With ``broken`` set, that map is zero on B, which makes it
    fail to be a quasi-isomorphism while staying a chain map.  No object has
    more than ``max_dim`` basis vectors in a single degree.
    """
    rng = random.Random(seed)
    while True:
        base = standard_base(rng, max_homology, max_pairs)
        tau_base = random_pairing(rng, base, homology_labels(base))
        if max_homology and not any(True for _ in nonzero_entries(tau_base)):
            continue
        raw = {}
        for N in OBJECTS:
            shape = random_standard(rng, max_homology=0, max_pairs=acyclic_pairs, require_homology=False)
            tag = {"M": "m", "M+": "p", "Mh": "q", "M-": "n"}[N.value]
            raw[N] = _sum(base, build_standard(shape, tag))
        if all(X.dim(k) <= max_dim for X in raw.values() for k in X.degrees):
            break
    forms0 = {}
    for N, X in raw.items():
        P = fmpq_mat(X.total_dim, X.total_dim)
        idx = [X.global_index(lab) for lab in base.global_labels]
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                P[i, j] = tau_base[a, b]
        forms0[N] = P
    maps0 = {}
    for f in EDGES:
        S, T = raw[f.source], raw[f.target]
        m = fmpq_mat(T.total_dim, S.total_dim)
        if f is not broken:
            for lab in base.global_labels:
                m[T.global_index(lab), S.global_index(lab)] = ONE
        acyc_t = [T.global_index(lab) for lab in T.global_labels if lab not in set(base.global_labels)]
        mix = null_homotopic_map(rng, S, T).matrix
        for i in range(T.total_dim):
            if i not in acyc_t:
                for j in range(S.total_dim):
                    mix[i, j] = 0
        maps0[f] = m + mix
    objects, maps, forms = {}, {}, {}
    change = {}
    for N in OBJECTS:
        tag = {"M": "m", "M+": "p", "Mh": "q", "M-": "n"}[N.value]
        if conjugate:
            objects[N], change[N] = conjugate_complex(raw[N], rng, tag)
        else:
            objects[N], change[N] = raw[N], identity(raw[N].total_dim)
        forms[N] = transport_pairing(forms0[N], change[N])
    for f in EDGES:
        mat = change[f.target] * maps0[f] * change[f.source].inv()
        maps[f] = GradedMap(objects[f.source], objects[f.target], 0, mat, check=False)
    return PoissonRceDiagram(RceDiagram(objects, maps), forms, validate=broken is None)


def identity_diagram(V: ChainComplex, form: fmpq_mat | None = None):
    """Every object V and every morphism the identity."""
    form = form if form is not None else fmpq_mat(V.total_dim, V.total_dim)
    return PoissonRceDiagram(RceDiagram({N: V for N in OBJECTS}, {f: identity_map(V) for f in EDGES}),
                             {N: form for N in OBJECTS})


def random_z_complex(seed: int, max_homology: int = 2, max_pairs: int = 1):
    """A complex Y with a chain automorphism Y(1), in a random basis."""
    rng = random.Random(seed)
    shape = random_standard(rng, max_homology=max_homology, max_pairs=max_pairs)
    Y0 = build_standard(shape, "")
    A = fmpq_mat(Y0.total_dim, Y0.total_dim)
    for k in Y0.degrees:
        hs = [Y0.global_index(f"h{k}_{i}") for i in range(shape.homology.get(k, 0))]
        block = random_invertible(rng, len(hs))
        for a, i in enumerate(hs):
            for b, j in enumerate(hs):
                A[i, j] = block[a, b]
    for k, n in shape.pairs.items():
        for i in range(n):
            c = random_scalar(rng, nonzero=True)
            A[Y0.global_index(f"e{k}_{i}"), Y0.global_index(f"e{k}_{i}")] = c
            A[Y0.global_index(f"b{k}_{i}"), Y0.global_index(f"b{k}_{i}")] = c
    Y, C = conjugate_complex(Y0, rng, "y")
    return Y, GradedMap(Y, Y, 0, C * A * C.inv(), check=False)
