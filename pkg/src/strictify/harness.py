"""Scenario-driven verification runs with machine-readable reports.

A scenario is a JSON document selecting which checks to run and with which
parameters.  Every check returns a pass/fail verdict, a witness string on
failure and a small dictionary of details; exact values are written as
"p/q" strings.  The report is deterministic for fixed scenario bytes except
for the ``timing`` field, which is excluded from ``report_sha256``.

Checks whose name starts with ``control.`` are negative controls: they
corrupt some data on purpose and pass only when the corresponding
verification catches it.  Checks starting with ``corrupted.`` run a
verification on corrupted data and report its failure as is; they are not
part of the default selection.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Mapping

from flint import fmpq, fmpq_mat

from . import __version__
from .bar_kan import (
    BlockMap,
    DerivedObject,
    Resolution,
    TimeSliceError,
    coker_acyclicity_check,
    coker_stage_homology,
    counit_defects,
    derived_counit,
)
from .ccr import CcrElement, derived_ccr_config, graded_commutator, rce_ccr
from .chain_core import GradedMap, hom_boundary, identity_map
from .equivalence import EquivalenceData, build_equivalence, equivalence_defects, graded_mask
from .exact_algebra import ONE, SparseMatrix, format_scalar, nonzero_entries, scalar
from .generators import generate_diagram, random_quasi_iso, random_z_complex
from .lattice_ym import (
    EDGES as LATTICE_EDGES,
    LatticeCheckError,
    LatticeError,
    LatticeSpacetime,
    Perturbation,
    build_regions,
    compatibility_defect,
    default_perturbation,
    density,
    explicit_zigzag,
    field_strength_value,
    geometric_equivalence,
    ghost_antifield_leak,
    ghost_boundary_witness,
    green_commutation_defects,
    green_homotopy_defects,
    green_support_violations,
    non_preservation_witness,
    polarized_stress,
    psi_correction,
    rce_lin_plus,
    rce_lin_plus_unsimplified,
    rce_pairing_slope,
    region_defects,
    stress_derivative,
    winding_field,
    zigzag_context,
)
from .poisson import DerivedPoisson, graded_antisymmetry_defect, verify_rho, verify_tau_L
from .site import EDGES, OBJECTS, Mor, Obj, SpiralNode, check_homotopy_time_slice, edges_in_window, nodes_in_window
from .zigzag import ZigzagContext

SCHEMA = "strictify.report/1"
JOBS_ENV = "STRICTIFY_JOBS"
MODES = ("abstract", "lattice", "both")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """A scenario that cannot be parsed or validated; carries the position when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# scenarios


@dataclasses.dataclass(frozen=True)
class LatticeConfig:
    T: int = 24
    X: int = 16
    margin: int = 2
    widen: int = 1
    rectangle: tuple = ((10, 13), (6, 9))
    entries: tuple | None = None
    cuts: tuple = ()

    def perturbation(self) -> Perturbation:
        if self.entries is None:
            return default_perturbation(*self.rectangle)
        return Perturbation({v: h for v, h in self.entries})

    def cut_map(self) -> dict[Mor, int]:
        return {Mor(name): t for name, t in self.cuts}


@dataclasses.dataclass(frozen=True)
class Scenario:
    mode: str = "both"
    seed: int = 0
    seeds: int = 25
    quasi_isos: int = 50
    max_homology: int = 2
    max_pairs: int = 1
    acyclic_pairs: int = 1
    max_dim: int = 5
    window: int = 4
    zigzag_window: int = 3
    tau_window: int = 3
    p_max: int = 6
    ccr_cap: int = 6
    ccr_samples: int = 200
    lattice: LatticeConfig = LatticeConfig()
    checks: tuple | None = None

    @property
    def seed_range(self) -> range:
        return range(self.seed, self.seed + self.seeds)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)


_INT_FIELDS = ("seed", "seeds", "quasi_isos", "max_homology", "max_pairs", "acyclic_pairs", "max_dim",
               "window", "zigzag_window", "tau_window", "p_max", "ccr_cap", "ccr_samples")
_POSITIVE = {"seeds", "quasi_isos", "max_dim", "window", "zigzag_window", "tau_window", "ccr_cap", "ccr_samples"}
_LATTICE_INT = ("T", "X", "margin", "widen")


def _position(text: str, key: str) -> tuple[int | None, int | None]:
    """Line and column of the first occurrence of ``"key"`` in the text."""
    idx = text.find(f'"{key}"')
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    return line, idx - (text.rfind("\n", 0, idx) + 1) + 1


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario JSON; errors name the line and column."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ConfigError("the scenario must be a JSON object", 1, 1)

    def fail(key: str, message: str):
        raise ConfigError(f"{key}: {message}", *_position(text, key))

    known = set(_INT_FIELDS) | {"mode", "lattice", "checks"}
    for key in data:
        if key not in known:
            fail(key, "unknown field")
    values: dict = {}
    for key in _INT_FIELDS:
        if key in data:
            v = data[key]
            if not isinstance(v, int) or isinstance(v, bool):
                fail(key, "expected an integer")
            if v < 0 or (key in _POSITIVE and v == 0):
                fail(key, "must be positive" if key in _POSITIVE else "must be non-negative")
            values[key] = v
    if "mode" in data:
        if data["mode"] not in MODES:
            fail("mode", f"expected one of {', '.join(MODES)}")
        values["mode"] = data["mode"]
    if "checks" in data and data["checks"] is not None:
        checks = data["checks"]
        if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
            fail("checks", "expected a list of check or group names")
        unknown = [c for c in checks if c not in CHECKS and c not in GROUPS]
        if unknown:
            fail("checks", f"unknown check {unknown[0]!r}")
        values["checks"] = tuple(checks)
    if "lattice" in data:
        values["lattice"] = _parse_lattice(text, data["lattice"], fail)
    return Scenario(**values)


def _parse_lattice(text: str, data, fail) -> LatticeConfig:
    if not isinstance(data, dict):
        fail("lattice", "expected an object")
    known = set(_LATTICE_INT) | {"h", "cuts"}
    for key in data:
        if key not in known:
            fail(key, "unknown lattice field")
    values: dict = {}
    for key in _LATTICE_INT:
        if key in data:
            v = data[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < (8 if key in ("T", "X") else 0):
                fail(key, "expected an integer (T, X >= 8; margin, widen >= 0)")
            values[key] = v
    h = data.get("h", {})
    if not isinstance(h, dict):
        fail("h", "expected an object with a rectangle and optional entries")
    if "rectangle" in h:
        rect = h["rectangle"]
        ok = (isinstance(rect, list) and len(rect) == 2
              and all(isinstance(r, list) and len(r) == 2 and all(isinstance(a, int) for a in r) and r[0] <= r[1]
                      for r in rect))
        if not ok:
            fail("rectangle", "expected [[t_min, t_max], [x_min, x_max]]")
        values["rectangle"] = (tuple(rect[0]), tuple(rect[1]))
    rect = values.get("rectangle", LatticeConfig.rectangle)
    if "entries" in h:
        entries = []
        if not isinstance(h["entries"], dict):
            fail("entries", 'expected an object {"t,x": ["h_tt", "h_tx", "h_xx"]}')
        for key, val in sorted(h["entries"].items()):
            try:
                t, x = (int(a) for a in key.split(","))
                hv = tuple(scalar(str(a)) for a in val)
            except (ValueError, TypeError, ZeroDivisionError):
                fail("entries", f"bad entry {key!r}: expected \"t,x\": [\"p/q\", \"p/q\", \"p/q\"]")
            if len(hv) != 3:
                fail("entries", f"entry {key!r} needs three components")
            if not (rect[0][0] <= t <= rect[0][1] and rect[1][0] <= x <= rect[1][1]):
                fail("entries", f"entry {key!r} lies outside the rectangle")
            try:
                density((ONE + hv[0], hv[1], -ONE + hv[2]))
            except LatticeError as exc:
                fail("entries", f"entry {key!r}: {exc}")
            entries.append(((t, x), hv))
        values["entries"] = tuple(entries)
    if "cuts" in data:
        cuts = data["cuts"]
        names = {m.value for m in EDGES}
        if not isinstance(cuts, dict) or any(k not in names or not isinstance(v, int) for k, v in cuts.items()):
            fail("cuts", f"expected an object from {sorted(names)} to slice numbers")
        values["cuts"] = tuple(sorted(cuts.items()))
    return LatticeConfig(**values)


def scenario_to_dict(s: Scenario) -> dict:
    out = {k: getattr(s, k) for k in ("mode",) + _INT_FIELDS}
    lat = s.lattice
    out["lattice"] = {"T": lat.T, "X": lat.X, "margin": lat.margin, "widen": lat.widen,
                      "h": {"rectangle": [list(lat.rectangle[0]), list(lat.rectangle[1])]},
                      "cuts": dict(lat.cuts)}
    if lat.entries is not None:
        out["lattice"]["h"]["entries"] = {f"{t},{x}": [format_scalar(a) for a in h] for (t, x), h in lat.entries}
    out["checks"] = None if s.checks is None else list(s.checks)
    return out


# ---------------------------------------------------------------------------
# shared, lazily built inputs


class Context:
    """Per-process cache of the objects several checks share."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._cache: dict = {}

    def get(self, key, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def diagram(self, seed: int):
        s = self.scenario
        return self.get(("diagram", seed), lambda: generate_diagram(
            seed, s.max_homology, s.max_pairs, s.acyclic_pairs, max_dim=s.max_dim))

    def zigzag(self, seed: int) -> ZigzagContext:
        return self.get(("zigzag", seed), lambda: ZigzagContext(self.diagram(seed).diagram))

    def regions(self):
        lat = self.scenario.lattice

        def build():
            L = LatticeSpacetime(lat.T, lat.X)
            return build_regions(L, lat.perturbation(), lat.margin, lat.widen, lat.cut_map() or None, check=False)
        return self.get("regions", build)

    def equivalences(self):
        R = self.regions()
        return self.get("equivalences", lambda: {f: geometric_equivalence(R, f, verify=False)
                                                 for f in LATTICE_EDGES})


@dataclasses.dataclass
class Outcome:
    passed: bool
    witness: str | None = None
    details: dict = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    mode: str
    run: Callable[[Context], Outcome]
    default: bool = True


def _first_block_entry(m: BlockMap, X=None) -> str:
    (t, s), block = sorted(m.nonzero_blocks().items(), key=lambda kv: str(kv[0]))[0]
    i, j, v = next(iter(nonzero_entries(block)))
    if X is not None:
        return f"block ({t}, {s}) entry ({X.spaces[t].global_labels[i]}, {X.spaces[s].global_labels[j]}) = {v}"
    return f"block ({t}, {s}) entry ({i}, {j}) = {v}"


def _first_map_entry(g: GradedMap) -> str:
    i, j, v = next(iter(nonzero_entries(g.matrix)))
    return f"({g.target.global_labels[i]}, {g.source.global_labels[j]}) = {v}"


def _negate(outcome: Outcome, what: str) -> Outcome:
    """A negative control passes exactly when the underlying verification fails."""
    if outcome.passed:
        return Outcome(False, f"corrupted {what} was not detected", outcome.details)
    details = dict(outcome.details)
    details["detected"] = outcome.witness
    return Outcome(True, None, details)


# ---------------------------------------------------------------------------
# abstract checks


def check_square_zero(ctx: Context) -> Outcome:
    s = ctx.scenario
    for seed in s.seed_range:
        D = ctx.diagram(seed).diagram
        X = DerivedObject(D, s.window)
        if not X.check_square_zero():
            return Outcome(False, f"seed {seed}: X~ " + _first_block_entry(X.differential @ X.differential, X))
        for N in OBJECTS:
            Q = Resolution(D, N)
            if not Q.check_square_zero():
                return Outcome(False, f"seed {seed}: Q(X)({N}) " + _first_block_entry(Q.differential @ Q.differential, Q))
    return Outcome(True, details={"seeds": s.seeds, "window": s.window})


def check_generators(ctx: Context) -> Outcome:
    s = ctx.scenario
    for seed in s.seed_range:
        P = ctx.diagram(seed)
        if not check_homotopy_time_slice(P.diagram):
            return Outcome(False, f"seed {seed}: a morphism is not a quasi-isomorphism")
        for f in EDGES:
            if not P.preserves(f):
                return Outcome(False, f"seed {seed}: {f} does not preserve tau")
    return Outcome(True, details={"seeds": s.seeds})


def check_counit(ctx: Context) -> Outcome:
    s = ctx.scenario
    for seed in s.seed_range:
        Y, A = random_z_complex(seed, s.max_homology, s.max_pairs)
        data = derived_counit(Y, A, s.window)
        for name, defect in counit_defects(data).items():
            if not defect.is_zero():
                return Outcome(False, f"seed {seed}: {name} at {_first_block_entry(defect)}")
    return Outcome(True, details={"seeds": s.seeds, "window": s.window})


def check_cokernel(ctx: Context) -> Outcome:
    s = ctx.scenario
    for seed in s.seed_range:
        D = ctx.diagram(seed).diagram
        try:
            ok = coker_acyclicity_check(D, s.p_max)
        except TimeSliceError as exc:
            return Outcome(False, f"seed {seed}: {exc}")
        if not ok:
            return Outcome(False, f"seed {seed}: a cokernel stage up to depth {s.p_max} has homology")
    return Outcome(True, details={"seeds": s.seeds, "depth": s.p_max})


def check_non_quasi_iso_control(ctx: Context) -> Outcome:
    s = ctx.scenario
    D = generate_diagram(s.seed, s.max_homology, s.max_pairs, s.acyclic_pairs, broken=Mor.JP,
                         max_dim=s.max_dim).diagram
    if check_homotopy_time_slice(D):
        return Outcome(False, "the broken diagram still satisfies the time-slice axiom")
    for side in (1, -1):
        for p in range(s.p_max + 1):
            hom = coker_stage_homology(D, side, p)
            if any(hom.values()):
                return Outcome(True, details={"detected": f"side {side:+d}, depth {p}: homology "
                                                          f"{ {k: v for k, v in hom.items() if v} }"})
    return Outcome(False, "every cokernel stage of the broken diagram is acyclic")


def verify_equivalence_data(e: EquivalenceData) -> Outcome:
    for name, defect in equivalence_defects(e).items():
        if not defect.is_zero():
            return Outcome(False, f"{name} at {_first_map_entry(defect)}")
    return Outcome(True)


def check_equivalences(ctx: Context) -> Outcome:
    s = ctx.scenario
    methods: dict[str, int] = {}
    for seed in range(s.seed, s.seed + s.quasi_isos):
        e = build_equivalence(random_quasi_iso(seed))
        methods[e.method] = methods.get(e.method, 0) + 1
        out = verify_equivalence_data(e)
        if not out.passed:
            return Outcome(False, f"seed {seed}: {out.witness}")
    for seed in s.seed_range:
        V = ctx.diagram(seed).diagram[Obj.M]
        e = build_equivalence(identity_map(V))
        if not (e.lam.is_zero() and e.gamma.is_zero() and e.xi.is_zero() and e.f_inv.matrix == e.f.matrix):
            return Outcome(False, f"seed {seed}: identity data is not (id, 0, 0, 0)")
    return Outcome(True, details={"quasi_isos": s.quasi_isos, "methods": methods})


def corrupt_equivalence(e: EquivalenceData) -> EquivalenceData:
    """lam + E for an elementary degree-one map E that is not a cycle of the hom complex."""
    W = e.f.target
    for i, j in graded_mask(W, W, 1):
        E = fmpq_mat(W.total_dim, W.total_dim)
        E[i, j] = ONE
        bump = GradedMap(W, W, 1, E, check=False)
        if not hom_boundary(bump).is_zero():
            return dataclasses.replace(e, lam=e.lam + bump)
    raise ValueError("every degree-one map is a cycle; nothing to corrupt")


def _corrupted_equivalence(ctx: Context) -> Outcome:
    e = build_equivalence(random_quasi_iso(ctx.scenario.seed))
    return verify_equivalence_data(corrupt_equivalence(e))


def verify_zigzag(zz: ZigzagContext, radius: int) -> Outcome:
    nodes, edges = nodes_in_window(radius), edges_in_window(radius)
    counts = {"lambda": 0, "gamma": 0, "xi": 0}
    for e in edges:
        for v in nodes:
            if not zz.lambda_defect(e, v).is_zero():
                return Outcome(False, f"Lambda identity fails for edge {e}, node {v}")
            if not zz.gamma_defect(v, e).is_zero():
                return Outcome(False, f"Gamma identity fails for node {v}, edge {e}")
            counts["lambda"] += 1
            counts["gamma"] += 1
        for e2 in edges:
            if not zz.xi_defect(e, e2).is_zero():
                return Outcome(False, f"Xi identity fails for edges {e}, {e2}")
            counts["xi"] += 1
    direct = zz.uncached()
    for k in (1, -1):
        for v in nodes:
            for w in nodes:
                if direct.z_matrix(v.shifted(k), w.shifted(k)) != direct.z_matrix(v, w):
                    return Outcome(False, f"Z is not shift invariant at ({v}, {w}) by {k}")
        for e in edges:
            for v in nodes:
                if direct.lambda_matrix(e.shifted(k), v.shifted(k)) != direct.lambda_matrix(e, v):
                    return Outcome(False, f"Lambda is not shift invariant at ({e}, {v}) by {k}")
                if direct.gamma_matrix(v.shifted(k), e.shifted(k)) != direct.gamma_matrix(v, e):
                    return Outcome(False, f"Gamma is not shift invariant at ({v}, {e}) by {k}")
            for e2 in edges:
                if direct.xi_matrix(e.shifted(k), e2.shifted(k)) != direct.xi_matrix(e, e2):
                    return Outcome(False, f"Xi is not shift invariant at ({e}, {e2}) by {k}")
    return Outcome(True, details=counts)


def check_zigzag(ctx: Context) -> Outcome:
    s = ctx.scenario
    total = {"lambda": 0, "gamma": 0, "xi": 0}
    for seed in s.seed_range:
        out = verify_zigzag(ctx.zigzag(seed), s.zigzag_window)
        if not out.passed:
            return Outcome(False, f"seed {seed}: {out.witness}")
        for k in total:
            total[k] += out.details[k]
    return Outcome(True, details={"pairs_checked": total, "window": s.zigzag_window})


def verify_theta(zz: ZigzagContext, theta=None) -> Outcome:
    defect = zz.theta_defect(theta)
    if defect.is_zero():
        return Outcome(True)
    return Outcome(False, "rce(x) - Z x - d(theta) at " + _first_block_entry(defect))


def corrupt_theta(zz: ZigzagContext) -> BlockMap:
    """theta plus the identity on one edge cell that theta already uses."""
    theta = zz.theta_homotopy()
    (cell, src), block = sorted(theta.blocks.items(), key=lambda kv: str(kv[0]))[0]
    bump = fmpq_mat(block.nrows(), block.ncols())
    for i in range(min(bump.nrows(), bump.ncols())):
        bump[i, i] = ONE
    return theta + BlockMap({(cell, src): bump})


def check_theta(ctx: Context) -> Outcome:
    for seed in ctx.scenario.seed_range:
        out = verify_theta(ctx.zigzag(seed))
        if not out.passed:
            return Outcome(False, f"seed {seed}: {out.witness}")
    return Outcome(True, details={"seeds": ctx.scenario.seeds})


def _corrupted_theta(ctx: Context) -> Outcome:
    zz = ctx.zigzag(ctx.scenario.seed)
    return verify_theta(zz, corrupt_theta(zz))


def check_tau_L(ctx: Context) -> Outcome:
    s = ctx.scenario
    for seed in s.seed_range:
        P = ctx.diagram(seed)
        zz = ctx.zigzag(seed)
        report = verify_tau_L(zz, P.forms, s.tau_window)
        if not report.passed:
            failed = [k for k, v in report.results.items() if not v]
            return Outcome(False, f"seed {seed}: {', '.join(failed)}: {report.witness}")
        X = DerivedObject(P.diagram, s.tau_window)
        if not graded_antisymmetry_defect(X, DerivedPoisson(zz, P.forms).form(X.order)).is_zero():
            return Outcome(False, f"seed {seed}: tau_L is not graded antisymmetric")
    return Outcome(True, details={"seeds": s.seeds, "window": s.tau_window})


def corrupt_xi(zz: ZigzagContext, f: Mor = Mor.JP) -> ZigzagContext:
    """The same zig-zag data with Xi of one edge replaced by a nonzero map that is not a cycle."""
    e = zz.data[f]
    V, W = e.f.source, e.f.target
    for i, j in graded_mask(V, W, 2):
        E = fmpq_mat(W.total_dim, V.total_dim)
        E[i, j] = ONE
        bump = GradedMap(V, W, 2, E, check=False)
        if not hom_boundary(bump).is_zero():
            data = dict(zz.data)
            data[f] = dataclasses.replace(e, xi=e.xi + bump)
            return ZigzagContext(zz.diagram, data, verify=False)
    raise ValueError("no degree-two map to corrupt Xi with")


def _corrupted_xi(ctx: Context) -> Outcome:
    P = ctx.diagram(ctx.scenario.seed)
    zz = corrupt_xi(ctx.zigzag(ctx.scenario.seed))
    report = verify_tau_L(zz, P.forms, min(ctx.scenario.tau_window, 2))
    if report.passed:
        return Outcome(True)
    return Outcome(False, str(report.witness))


def check_rho(ctx: Context) -> Outcome:
    for seed in ctx.scenario.seed_range:
        report = verify_rho(ctx.zigzag(seed), ctx.diagram(seed).forms)
        if not report.passed:
            failed = [k for k, v in report.results.items() if not v]
            return Outcome(False, f"seed {seed}: {', '.join(failed)}: {report.witness}")
    return Outcome(True, details={"seeds": ctx.scenario.seeds})


def check_ccr(ctx: Context) -> Outcome:
    s = ctx.scenario
    P = ctx.diagram(s.seed)
    zz = ctx.zigzag(s.seed)
    cfg = derived_ccr_config(DerivedPoisson(zz, P.forms), cap=s.ccr_cap)
    X = DerivedObject(P.diagram, 1)
    syms = [(c.level, c.obj if isinstance(c, SpiralNode) else c.mor, lab)
            for c in X.order for lab in X.spaces[c].global_labels]
    rng = random.Random(s.seed)
    half = s.ccr_cap // 2

    def word(n):
        return CcrElement.word(cfg, [rng.choice(syms) for _ in range(n)])

    for _ in range(s.ccr_samples):
        a, b, c = (word(rng.randint(0, s.ccr_cap // 3)) for _ in range(3))
        if (a * b) * c != a * (b * c):
            return Outcome(False, f"associativity fails on {a!r} | {b!r} | {c!r}")
    for x in syms:
        for y in syms:
            gx, gy = CcrElement.generator(cfg, x), CcrElement.generator(cfg, y)
            lhs = graded_commutator(gx, gy, cfg.degree(x), cfg.degree(y))
            if lhs != CcrElement.unit(cfg).scaled(cfg.tau(x, y)):
                return Outcome(False, f"[{x}, {y}] != tau({x}, {y})")
    for _ in range(s.ccr_samples):
        a = word(rng.randint(0, s.ccr_cap - 2))
        if not a.d().d().is_zero():
            return Outcome(False, f"d^2 != 0 on {a!r}")
        letters = [rng.choice(syms) for _ in range(rng.randint(0, half))]
        u, v = CcrElement.word(cfg, letters), word(rng.randint(0, half))
        sign = -1 if sum(cfg.degree(x) for x in letters) % 2 else 1
        if (u * v).d() != u.d() * v + (u * v.d()).scaled(sign):
            return Outcome(False, f"Leibniz fails on {u!r} | {v!r}")
    forward, backward = rce_ccr(cfg)
    for _ in range(max(1, s.ccr_samples // 2)):
        a = word(rng.randint(0, s.ccr_cap - 2))
        if backward(forward(a)) != a or forward(backward(a)) != a:
            return Outcome(False, f"rce is not invertible on {a!r}")
        if forward(a.d()) != forward(a).d():
            return Outcome(False, f"rce does not commute with d on {a!r}")
    return Outcome(True, details={"generators": len(syms), "samples": s.ccr_samples, "cap": s.ccr_cap})


# ---------------------------------------------------------------------------
# lattice checks


def check_lattice_complexes(ctx: Context) -> Outcome:
    R = ctx.regions()
    problems = region_defects(R)
    if problems:
        return Outcome(False, "; ".join(problems))
    return Outcome(True, details={str(N): C.dims for N, C in R.complexes.items()} | {
        "cuts": {str(f): t for f, t in R.cut.items()}})


def check_lattice_green(ctx: Context) -> Outcome:
    R = ctx.regions()
    L = R.flat
    window = (1, L.T - 3)
    for lattice, label in ((R.flat, "flat"), (R.perturbed, "perturbed")):
        C = R[Obj.M].with_lattice(lattice, "M")
        for sign in (1, -1):
            for k, defect in green_homotopy_defects(C, sign, window).items():
                if not defect.is_zero():
                    i, j, v = next(iter(nonzero_entries(defect.base)))
                    return Outcome(False, f"{label}: j != dG + Gd for G{'+' if sign > 0 else '-'} "
                                          f"on {C.labels(k)[j]}: {v}")
            for name, defect in green_commutation_defects(lattice, sign, window).items():
                if not defect.is_zero():
                    return Outcome(False, f"{label}: {name} fails for G{'+' if sign > 0 else '-'}")
            for p in (0, 1):
                bad = green_support_violations(lattice, sign, p, widen=2, limit=1)
                if bad:
                    return Outcome(False, f"{label}: {bad[0]}")
    return Outcome(True, details={"window": list(window), "support_widen": 2})


def check_lattice_equivalences(ctx: Context) -> Outcome:
    R = ctx.regions()
    for f in LATTICE_EDGES:
        try:
            e = geometric_equivalence(R, f)
        except LatticeCheckError as exc:
            return Outcome(False, f"{f}: {exc}")
        if any(c == 2 and not m.is_zero() for (r, c), m in e.lam.blocks.items()):
            return Outcome(False, f"{f}: lambda(beta) != 0")
    return Outcome(True, details={"xi": "0", "cuts": {str(f): t for f, t in R.cut.items()}})


def check_lattice_rce(ctx: Context) -> Outcome:
    R = ctx.regions()
    details = {}
    for infinitesimal in (False, True):
        simple = rce_lin_plus(R, infinitesimal)
        full = rce_lin_plus_unsimplified(R, infinitesimal)
        if simple != full:
            r, i, c, j, v = (simple - full).first_nonzero()
            return Outcome(False, f"simplified != unsimplified rce at {R[Obj.MP].labels(c)[j]}: {v}")
    rce = rce_lin_plus(R)
    inc = R.inclusions[Mor.IP]
    for k in (1, 2):
        for r in (-1, 0, 1, 2):
            if rce.block(r, k) != inc.block(r, k):
                return Outcome(False, f"rce changes antifields of degree {k}")
    if not (R[Obj.M].d_op() @ rce - rce @ R[Obj.MP].d_op()).is_zero():
        return Outcome(False, "rce^{lin,+} is not a chain map")
    try:
        ghost_boundary_witness(R, rce)
    except LatticeCheckError as exc:
        return Outcome(False, str(exc))
    details["ghost_moved"] = not (rce - inc).block(-1, -1).is_zero()
    eqs = ctx.equivalences()
    zz = zigzag_context(R, eqs)
    Z = explicit_zigzag(R, eqs).matrix().base
    if Z != zz.z_matrix(SpiralNode(1, Obj.M), SpiralNode(0, Obj.M)):
        return Outcome(False, "the explicit zig-zag differs from the spiral walk")
    theta = verify_theta(zz)
    if not theta.passed:
        return theta
    return Outcome(True, details=details)


def check_lattice_stress(ctx: Context) -> Outcome:
    R = ctx.regions()
    t_op = stress_derivative(R)
    M, MP = R[Obj.M], R[Obj.MP]
    if not (M.d_op() @ t_op - t_op @ MP.d_op()).is_zero():
        return Outcome(False, "t is not a chain map")
    for k in (1, 2):
        if any(c == k and not m.is_zero() for (r, c), m in t_op.blocks.items()):
            return Outcome(False, f"t is nonzero on degree {k}")
    details = {"uncorrected_compatible": compatibility_defect(R, t_op).is_zero()}
    try:
        sol = psi_correction(R, t_op, seed=ctx.scenario.seed)
    except LatticeCheckError as exc:
        return Outcome(False, str(exc), details)
    details["ansatz"] = sol.ansatz
    details["attempts"] = sol.attempts
    leak = ghost_antifield_leak(R, sol.t_corrected)
    if leak is not None:
        return Outcome(False, f"tau(t~ w1, i w2) is nonzero for degrees {leak}", details)
    slices = sorted(R.cauchy[Mor.IP])
    w1, w2 = winding_field(R, slices[0]), winding_field(R, slices[1])
    value = polarized_stress(R, sol.t_corrected, w1, w2)
    oracle = rce_pairing_slope(R, w1, w2)
    details |= {"winding_slices": slices, "polarized_stress": format_scalar(value),
                "rce_slope": format_scalar(oracle),
                "field_strength": format_scalar(field_strength_value(R, w1, w2))}
    if value == 0:
        return Outcome(False, "the polarized stress vanishes on the winding pair", details)
    if value != oracle:
        return Outcome(False, f"polarized stress {value} != slope of the rce pairing {oracle}", details)
    return Outcome(True, details=details)


def check_lattice_non_preservation(ctx: Context) -> Outcome:
    R = ctx.regions()
    Z = explicit_zigzag(R, ctx.equivalences())
    witness = non_preservation_witness(R, Z)
    if witness is None:
        return Outcome(False, "the zig-zag preserves tau for this perturbation")
    return Outcome(True, details={"witness": witness})


# ---------------------------------------------------------------------------
# registry

_CHECK_LIST = [
    Check("structure.square_zero", "d^2 = 0 on X~ and on every Q(X)(N)", "abstract", check_square_zero),
    Check("structure.generators", "generated diagrams: time-slice axiom and tau-preserving maps", "abstract",
          check_generators),
    Check("counit", "eps kappa = id and kappa eps - id = d(rho) on the window", "abstract", check_counit),
    Check("unit.cokernel", "cokernel stages of X(M) -> X~ are acyclic", "abstract", check_cokernel),
    Check("equivalence.identities", "f f^-1 - id = d lam, f^-1 f - id = d gam, f gam - lam f = d xi",
          "abstract", check_equivalences),
    Check("zigzag.homotopies", "defining identities of Lambda, Gamma, Xi and shift invariance", "abstract",
          check_zigzag),
    Check("zigzag.theta", "rce - Z = d(theta) on X(M)", "abstract", check_theta),
    Check("poisson.tau_L", "tau_L is a graded antisymmetric chain map, shift invariant", "abstract",
          check_tau_L),
    Check("poisson.rho", "tau_L(eta, eta) - tau_N(q, q) = d(rho_N), natural in N", "abstract", check_rho),
    Check("ccr.algebra", "CCR relations, d^2 = 0, Leibniz, rce is an automorphism", "abstract", check_ccr),
    Check("control.non_quasi_iso", "a non-quasi-isomorphism leaves homology in a cokernel stage", "abstract",
          check_non_quasi_iso_control),
    Check("control.corrupted_equivalence", "corrupted lambda fails the equivalence identities", "abstract",
          lambda ctx: _negate(_corrupted_equivalence(ctx), "lambda")),
    Check("control.corrupted_theta", "corrupted theta fails rce - Z = d(theta)", "abstract",
          lambda ctx: _negate(_corrupted_theta(ctx), "theta")),
    Check("control.corrupted_xi", "corrupted Xi breaks the chain-map property of tau_L", "abstract",
          lambda ctx: _negate(_corrupted_xi(ctx), "Xi")),
    Check("lattice.complexes", "observable complexes, tau, inclusions preserve tau", "lattice",
          check_lattice_complexes),
    Check("lattice.green", "j = dG + Gd, Green operators commute with d and delta, causal support",
          "lattice", check_lattice_green),
    Check("lattice.equivalences", "quasi-inverses of the region inclusions with xi = 0", "lattice",
          check_lattice_equivalences),
    Check("lattice.rce", "rce^{lin,+} simplified = unsimplified, antifields fixed, ghosts in homology, "
                         "rce - Z = d(theta)", "lattice", check_lattice_rce),
    Check("lattice.non_preservation", "the zig-zag does not preserve tau", "lattice",
          check_lattice_non_preservation),
    Check("lattice.stress", "psi-corrected stress is compatible with tau; ghosts and antifields drop out",
          "lattice", check_lattice_stress),
    Check("corrupted.equivalence", "equivalence identities on corrupted lambda", "abstract",
          _corrupted_equivalence, default=False),
    Check("corrupted.theta", "rce - Z = d(theta) with corrupted theta", "abstract", _corrupted_theta,
          default=False),
    Check("corrupted.xi", "tau_L chain map with corrupted Xi", "abstract", _corrupted_xi, default=False),
]

CHECKS: dict[str, Check] = {c.name: c for c in _CHECK_LIST}
GROUPS = {
    "abstract": [c.name for c in _CHECK_LIST if c.mode == "abstract" and c.default],
    "lattice": [c.name for c in _CHECK_LIST if c.mode == "lattice" and c.default],
    "controls": [c.name for c in _CHECK_LIST if c.name.startswith("control.")],
    "negative": [c.name for c in _CHECK_LIST if not c.default],
}


def select_checks(scenario: Scenario, only: list[str] | None = None) -> list[str]:
    """Names to run, in registry order.  ``only`` overrides the scenario's selection."""
    chosen = only if only is not None else scenario.checks
    if chosen is None:
        modes = ("abstract", "lattice") if scenario.mode == "both" else (scenario.mode,)
        return [c.name for c in _CHECK_LIST if c.default and c.mode in modes]
    names = set()
    for item in chosen:
        if item in GROUPS:
            names.update(GROUPS[item])
        elif item in CHECKS:
            names.add(item)
        else:
            raise ConfigError(f"unknown check {item!r}")
    return [c.name for c in _CHECK_LIST if c.name in names]


# ---------------------------------------------------------------------------
# running


_WORKER: dict = {}


def _run_one(scenario: Scenario, name: str, ctx: Context | None = None) -> tuple[dict, float]:
    if ctx is None:
        ctx = _WORKER.get(scenario)
        if ctx is None:
            ctx = _WORKER[scenario] = Context(scenario)
    check = CHECKS[name]
    start = time.perf_counter()
    try:
        out = check.run(ctx)
    except (ArithmeticError, ValueError) as exc:
        out = Outcome(False, f"{type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - start
    return {"name": name, "anchor": check.anchor, "passed": bool(out.passed), "witness": out.witness,
            "details": _jsonable(out.details)}, elapsed


def _jsonable(value):
    if isinstance(value, fmpq):
        return format_scalar(value)
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"{JOBS_ENV}={raw!r} is not an integer") from None
    if jobs < 1:
        raise ConfigError(f"{JOBS_ENV} must be at least 1")
    return jobs


def run(scenario: Scenario, scenario_bytes: bytes = b"", only: list[str] | None = None,
        jobs: int | None = None) -> dict:
    """Run the selected checks and assemble the report dictionary."""
    names = select_checks(scenario, only)
    jobs = default_jobs() if jobs is None else jobs
    start = time.perf_counter()
    if jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, [scenario] * len(names), names))
    else:
        ctx = Context(scenario)
        results = [_run_one(scenario, n, ctx) for n in names]
    body = {
        "schema": SCHEMA,
        "tool": {"name": "strictify", "version": __version__},
        "scenario_sha256": hashlib.sha256(scenario_bytes).hexdigest(),
        "scenario": scenario_to_dict(scenario),
        "verdict": "pass" if all(r["passed"] for r, _ in results) else "fail",
        "checks": [r for r, _ in results],
    }
    body["report_sha256"] = hashlib.sha256(canonical_json(body).encode()).hexdigest()
    body["timing"] = {"total_seconds": round(time.perf_counter() - start, 3),
                      "checks": {r["name"]: round(t, 3) for r, t in results}}
    return body


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def report_text(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def exit_code(report: dict) -> int:
    return EXIT_PASS if report["verdict"] == "pass" else EXIT_FAIL


# ---------------------------------------------------------------------------
# artifacts


def _sparse(m) -> str:
    return SparseMatrix.from_dense(m).dump()


def diagram_snapshot(P) -> dict:
    """Complexes, maps and forms of a Poisson diagram; matrices in the sparse text form."""
    D = P.diagram
    return {
        "objects": {N.value: D[N].to_dict() for N in OBJECTS},
        "maps": {f.value: _sparse(D.map(f).matrix) for f in EDGES},
        "forms": {N.value: _sparse(P.forms[N]) for N in OBJECTS},
    }


def shift_matrix(D, radius: int) -> tuple[fmpq_mat, list[str], list[str]]:
    """rce on X~ from the levels -radius..radius-1 to -radius+1..radius, in the cell bases."""
    X = DerivedObject(D, radius)

    def cells(lo, hi):
        return [c for c in X.order if lo <= c.level <= hi]

    src, tgt = cells(-radius, radius - 1), cells(-radius + 1, radius)
    labels_s = [X.prefix[c] + lab for c in src for lab in X.spaces[c].global_labels]
    labels_t = [X.prefix[c] + lab for c in tgt for lab in X.spaces[c].global_labels]
    where = {c: i for i, c in enumerate(tgt)}
    offs_t, o = {}, 0
    for c in tgt:
        offs_t[c] = o
        o += X.spaces[c].total_dim
    m = fmpq_mat(len(labels_t), len(labels_s))
    col = 0
    for c in src:
        image = c.shifted(1)
        for i in range(X.spaces[c].total_dim):
            if image in where:
                m[offs_t[image] + i, col + i] = ONE
        col += X.spaces[c].total_dim
    return m, labels_t, labels_s


def tau_snapshot(zz: ZigzagContext, forms, radius: int) -> dict:
    X = DerivedObject(zz.diagram, radius)
    T = DerivedPoisson(zz, forms).form(X.order)
    return {"cells": [str(c) for c in X.order], "matrix": _sparse(X.to_total_matrix(T)),
            "basis": X.total().global_labels}


ARTIFACTS = ("diagram", "derived_complex", "rce_lin", "tau_L", "identity_rce_lin", "lattice_rce_plus")


def dump_artifact(artifact: str, scenario: Scenario) -> str:
    """Text of one artifact; identical for identical scenarios."""
    s = scenario
    if artifact == "diagram":
        data = diagram_snapshot(Context(s).diagram(s.seed))
    elif artifact == "derived_complex":
        data = DerivedObject(Context(s).diagram(s.seed).diagram, s.window).total().to_dict()
    elif artifact in ("rce_lin", "identity_rce_lin"):
        P = Context(s).diagram(s.seed)
        D = P.diagram
        if artifact == "identity_rce_lin":
            from .generators import identity_diagram
            D = identity_diagram(D[Obj.M]).diagram
        m, rows, cols = shift_matrix(D, s.window)
        data = {"rows": rows, "cols": cols, "matrix": _sparse(m)}
    elif artifact == "tau_L":
        ctx = Context(s)
        data = tau_snapshot(ctx.zigzag(s.seed), ctx.diagram(s.seed).forms, min(s.tau_window, 2))
    elif artifact == "lattice_rce_plus":
        R = Context(s).regions()
        M, MP = R[Obj.M], R[Obj.MP]
        data = {"rows": [M.basis_label(i) for i in range(M.total_dim)],
                "cols": [MP.basis_label(i) for i in range(MP.total_dim)],
                "matrix": _sparse(rce_lin_plus(R).matrix().base)}
    else:
        raise ConfigError(f"unknown artifact {artifact!r}; expected one of {', '.join(ARTIFACTS)}")
    return json.dumps({"artifact": artifact, "schema": SCHEMA, "data": data}, indent=1, sort_keys=True) + "\n"


def parse_matrix_artifact(text: str) -> SparseMatrix:
    """The matrix stored in a dumped artifact that has one."""
    return SparseMatrix.parse(json.loads(text)["data"]["matrix"])


def generated_diagram(seed: int, scenario: Scenario | None = None) -> str:
    """A seeded Poisson diagram in the snapshot format, as JSON text."""
    s = (scenario or Scenario()).with_seed(seed)
    data = diagram_snapshot(Context(s).diagram(seed))
    return json.dumps({"artifact": "diagram", "schema": SCHEMA, "seed": seed, "data": data},
                      indent=1, sort_keys=True) + "\n"
