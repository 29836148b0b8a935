"""CCR algebras of Poisson complexes as normal-ordered dg-algebras.

The algebra generated by the basis of a Poisson complex (V, tau) has the
relations

    v w - (-1)^{|v||w|} w v = lambda_q tau(v, w) 1.

Elements are stored as combinations of normal-ordered words: letters
non-decreasing for the generator order, and no odd letter repeated next to
itself.  A product is a concatenation followed by rewriting adjacent pairs
that are out of order.  Each swap lowers the number of inversions and each
contraction shortens the word, so rewriting terminates.

Generators are arbitrary hashable symbols.  The configuration supplies
their degree, the pairing and the differential as functions, so the
generator set can be infinite (the spiral) while each element stays finite.
"""

from __future__ import annotations

from typing import Callable, Hashable, Iterable, Mapping, Sequence

from flint import fmpq

from .bar_kan import DerivedElement, level_shift, tilde_differential
from .exact_algebra import ONE, format_scalar, scalar
from .site import Obj

Word = tuple


class CapOverflow(ArithmeticError):
    """A product would need words longer than the configured cap."""


class PoissonViolation(ValueError):
    """A generator map does not preserve the pairing."""

    def __init__(self, a, b, lhs, rhs):
        super().__init__(f"tau(f {a}, f {b}) = {lhs} but tau({a}, {b}) = {rhs}")
        self.pair = (a, b)
        self.values = (lhs, rhs)


class CcrConfig:
    """Generator degrees, order, pairing and differential for one CCR algebra."""

    def __init__(self, degree: Callable[[Hashable], int],
                 tau: Callable[[Hashable, Hashable], object],
                 differential: Callable[[Hashable], Mapping[Hashable, object]],
                 order_key: Callable[[Hashable], object] | None = None,
                 lambda_q=1, cap: int = 6, name: Callable[[Hashable], str] = str):
        if cap < 2:
            raise ValueError("the word cap must be at least 2")
        self.degree = degree
        self.tau = lambda a, b: scalar(tau(a, b))
        self._differential = differential
        self.order_key = order_key or (lambda s: (degree(s), s))
        self.lambda_q = scalar(lambda_q)
        self.cap = cap
        self.name = name
        self._normal: dict[Word, dict[Word, fmpq]] = {}
        self._d: dict[Hashable, dict[Hashable, fmpq]] = {}

    def d_generator(self, s) -> dict[Hashable, fmpq]:
        if s not in self._d:
            self._d[s] = {k: scalar(v) for k, v in self._differential(s).items() if scalar(v)}
        return self._d[s]

    def word_degree(self, word: Word) -> int:
        return sum(self.degree(s) for s in word)

    def normal_form(self, word: Word) -> dict[Word, fmpq]:
        """Rewrite a word into normal-ordered words; cached per word."""
        if len(word) > self.cap:
            raise CapOverflow(f"word of length {len(word)} exceeds cap {self.cap}")
        if word in self._normal:
            return self._normal[word]
        out: dict[Word, fmpq] = {}
        for i in range(len(word) - 1):
            a, b = word[i], word[i + 1]
            ka, kb = self.order_key(a), self.order_key(b)
            odd_repeat = a == b and self.degree(a) % 2 == 1
            if ka > kb or odd_repeat:
                rest = word[:i] + word[i + 2:]
                if odd_repeat:
                    _accumulate(out, self.normal_form(rest), self.lambda_q * self.tau(a, a) / 2)
                else:
                    sign = -ONE if (self.degree(a) * self.degree(b)) % 2 else ONE
                    _accumulate(out, self.normal_form(word[:i] + (b, a) + word[i + 2:]), sign)
                    _accumulate(out, self.normal_form(rest), self.lambda_q * self.tau(a, b))
                break
        else:
            out = {word: ONE}
        self._normal[word] = out
        return out

    def is_normal(self, word: Word) -> bool:
        return self.normal_form(word) == {word: ONE}


def _accumulate(out: dict, terms: Mapping, c) -> None:
    if not c:
        return
    for w, v in terms.items():
        s = out.get(w, fmpq(0)) + v * c
        if s:
            out[w] = s
        else:
            out.pop(w, None)


class CcrElement:
    """A finite combination of normal-ordered words."""

    __slots__ = ("config", "terms")

    def __init__(self, config: CcrConfig, terms: Mapping[Word, object] | None = None, normalize: bool = True):
        self.config = config
        out: dict[Word, fmpq] = {}
        for w, c in (terms or {}).items():
            c = scalar(c)
            if normalize:
                _accumulate(out, config.normal_form(tuple(w)), c)
            elif c:
                out[tuple(w)] = out.get(tuple(w), fmpq(0)) + c
        self.terms = {w: c for w, c in out.items() if c}

    @staticmethod
    def unit(config: CcrConfig) -> "CcrElement":
        return CcrElement(config, {(): ONE})

    @staticmethod
    def generator(config: CcrConfig, s) -> "CcrElement":
        return CcrElement(config, {(s,): ONE})

    @staticmethod
    def word(config: CcrConfig, letters: Sequence) -> "CcrElement":
        return CcrElement(config, {tuple(letters): ONE})

    def __add__(self, other: "CcrElement") -> "CcrElement":
        out = dict(self.terms)
        _accumulate(out, other.terms, ONE)
        return CcrElement(self.config, out, normalize=False)

    def __neg__(self) -> "CcrElement":
        return self.scaled(-1)

    def __sub__(self, other: "CcrElement") -> "CcrElement":
        return self + (-other)

    def scaled(self, c) -> "CcrElement":
        c = scalar(c)
        return CcrElement(self.config, {w: v * c for w, v in self.terms.items()}, normalize=False)

    def __mul__(self, other: "CcrElement") -> "CcrElement":
        return ccr_mul(self, other)

    def __eq__(self, other):
        if not isinstance(other, CcrElement):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def d(self) -> "CcrElement":
        return ccr_differential(self)

    def dumps(self) -> str:
        """One line per word: ``coeff * [gen1, gen2, ...]``."""
        name = self.config.name
        lines = []
        for w, c in sorted(self.terms.items(), key=lambda kv: (len(kv[0]), [self.config.order_key(s) for s in kv[0]])):
            lines.append(f"{format_scalar(c)} * [{', '.join(name(s) for s in w)}]")
        return "\n".join(lines)

    def __repr__(self):
        return self.dumps() or "0"


def parse_element(config: CcrConfig, text: str, symbols: Mapping[str, Hashable]) -> CcrElement:
    """Inverse of ``dumps`` given a table from generator names to symbols."""
    terms: dict[Word, fmpq] = {}
    for line in text.strip().splitlines():
        coeff, _, rest = line.partition(" * ")
        inner = rest.strip()[1:-1].strip()
        word = tuple(symbols[s.strip()] for s in _split_names(inner)) if inner else ()
        terms[word] = terms.get(word, fmpq(0)) + scalar(coeff)
    return CcrElement(config, terms)


def _split_names(inner: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in inner:
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        depth += (ch == "(") - (ch == ")")
        cur.append(ch)
    parts.append("".join(cur))
    return parts


def ccr_mul(a: CcrElement, b: CcrElement) -> CcrElement:
    cfg = a.config
    out: dict[Word, fmpq] = {}
    for w1, c1 in a.terms.items():
        for w2, c2 in b.terms.items():
            _accumulate(out, cfg.normal_form(w1 + w2), c1 * c2)
    return CcrElement(cfg, out, normalize=False)


def ccr_differential(a: CcrElement) -> CcrElement:
    """The graded derivation extending d on generators."""
    cfg = a.config
    out: dict[Word, fmpq] = {}
    for w, c in a.terms.items():
        sign = ONE
        for i, s in enumerate(w):
            for t, v in cfg.d_generator(s).items():
                _accumulate(out, cfg.normal_form(w[:i] + (t,) + w[i + 1:]), c * v * sign)
            if cfg.degree(s) % 2:
                sign = -sign
    return CcrElement(cfg, out, normalize=False)


def graded_commutator(a: CcrElement, b: CcrElement, deg_a: int, deg_b: int) -> CcrElement:
    sign = -1 if (deg_a * deg_b) % 2 else 1
    return a * b - (b * a).scaled(sign)


# ---------------------------------------------------------------------------
# functoriality


class CcrMorphism:
    """The algebra map induced by a pairing-preserving linear map on generators."""

    def __init__(self, source: CcrConfig, target: CcrConfig,
                 on_generators: Callable[[Hashable], Mapping[Hashable, object]],
                 check_basis: Iterable[Hashable] | None = None):
        self.source = source
        self.target = target
        self.on_generators = on_generators
        if check_basis is not None:
            check_pairing_preserved(source, target, on_generators, list(check_basis))

    def image_of_generator(self, s) -> CcrElement:
        return CcrElement(self.target, {(t,): v for t, v in self.on_generators(s).items()})

    def __call__(self, a: CcrElement) -> CcrElement:
        out = CcrElement(self.target)
        for w, c in a.terms.items():
            term = CcrElement.unit(self.target)
            for s in w:
                term = term * self.image_of_generator(s)
            out = out + term.scaled(c)
        return out


def check_pairing_preserved(source: CcrConfig, target: CcrConfig,
                            f: Callable[[Hashable], Mapping[Hashable, object]], basis: Sequence) -> None:
    images = {s: {t: scalar(v) for t, v in f(s).items()} for s in basis}
    for a in basis:
        for b in basis:
            lhs = sum((ca * cb * target.tau(x, y) for x, ca in images[a].items() for y, cb in images[b].items()),
                      fmpq(0))
            rhs = source.tau(a, b)
            if lhs != rhs:
                raise PoissonViolation(a, b, lhs, rhs)


def ccr_map(source: CcrConfig, target: CcrConfig, on_generators, check_basis=None) -> CcrMorphism:
    return CcrMorphism(source, target, on_generators, check_basis)


# ---------------------------------------------------------------------------
# the CCR algebra of the derived object


def symbol_degree(D, sym) -> int:
    n, where, label = sym
    if isinstance(where, Obj):
        return D[where].degree_of(label)
    return 1 + D[where.source].degree_of(label)


def symbol_name(sym) -> str:
    n, where, label = sym
    return f"({n},{where.value},{label})"


def derived_ccr_config(tau, lambda_q=1, cap: int = 6) -> CcrConfig:
    """CCR algebra on the spiral symbols of X~ with tau_L from a DerivedPoisson."""
    D = tau.ctx.diagram

    def degree(sym):
        return symbol_degree(D, sym)

    def differential(sym):
        return tilde_differential(D, DerivedElement({sym: ONE})).terms

    def key(sym):
        n, where, label = sym
        return (degree(sym), n, isinstance(where, Obj), where.value, label)

    return CcrConfig(degree, tau.evaluate, differential, order_key=key, lambda_q=lambda_q, cap=cap,
                     name=symbol_name)


def _shift_generator(k: int):
    def f(sym):
        return level_shift(DerivedElement({sym: ONE}), k).terms
    return f


def rce_ccr(config: CcrConfig, check_basis=None) -> tuple[CcrMorphism, CcrMorphism]:
    """The RCE automorphism on the derived CCR algebra and its inverse."""
    forward = CcrMorphism(config, config, _shift_generator(1), check_basis)
    backward = CcrMorphism(config, config, _shift_generator(-1), check_basis)
    return forward, backward
