"""Poisson maps, pullbacks, and involutive-family construction.

The central recipe: pull an involutive family back through a verified
Poisson map and adjoin Casimir functions of the new source; repeating
this along multiplication or action chains yields families in involution
on n-fold products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Expression,
    Variable,
    compile_scalar,
    differentiate,
    free_variables,
    is_literal_zero,
    parse,
    simplify,
    substitute,
    to_string,
)
from .poisson import (
    DEFAULT_TOLERANCE,
    NamedFunction,
    PoissonStructure,
    append_suffix,
    bracket,
    check_function_symbols,
    is_casimir,
    product,
    structure_points,
)

RANK_TOLERANCE = 1e-8

PROVENANCE_SEED = "seed"
PROVENANCE_PULLED = "pulled-back"
PROVENANCE_CASIMIR = "casimir-factor"


class VerificationError(Exception):
    """A structural claim failed its numeric check."""


@dataclass
class VerificationReport:
    """Residual table from a map or involution check."""

    max_residual: float
    worst_point: Mapping[str, float] | None
    pairs: dict[tuple[str, str], float]
    tolerance: float = DEFAULT_TOLERANCE
    skipped: int = 0

    @property
    def accepted(self) -> bool:
        return self.max_residual < self.tolerance

    def to_json(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "accepted": self.accepted,
            "worst_point": dict(self.worst_point) if self.worst_point else None,
            "pairs": {f"{a},{b}": r for (a, b), r in sorted(self.pairs.items())},
            "skipped_evaluations": self.skipped,
        }


@dataclass(eq=False)
class PoissonMap:
    """Components of a map between charts, one expression per target coordinate."""

    name: str
    source: PoissonStructure
    target: PoissonStructure
    components: dict[str, Expression]

    def component(self, target_coord: str) -> Expression:
        return self.components[target_coord]

    def component_list(self) -> list[Expression]:
        return [self.components[n] for n in self.target.chart.names]

    def merged_parameters(self) -> dict[str, float]:
        merged = dict(self.source.parameters)
        for p, v in self.target.parameters.items():
            if p in merged and merged[p] != v:
                raise ValueError(f"conflicting values for parameter {p!r}")
            merged[p] = v
        return merged


def poisson_map(
    name: str,
    source: PoissonStructure,
    target: PoissonStructure,
    components: Mapping[str, Expression | str],
    *,
    verify: bool = True,
    points: Sequence[Mapping[str, float]] | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> PoissonMap:
    """Build a map and, unless deferred, verify the Poisson-map property."""
    comps: dict[str, Expression] = {}
    for coord, raw in components.items():
        if coord not in target.chart.names:
            raise ValueError(f"{coord!r} is not a coordinate of the target chart")
        comps[coord] = parse(raw) if isinstance(raw, str) else raw
    missing = set(target.chart.names) - set(comps)
    if missing:
        raise ValueError(f"missing components for {sorted(missing)}")
    allowed = set(source.chart.names) | set(source.parameters) | set(target.parameters)
    for coord, e in comps.items():
        extra = free_variables(e) - allowed
        if extra:
            raise ValueError(f"component {coord!r} uses unknown symbols {sorted(extra)}")
    m = PoissonMap(name, source, target, comps)
    if verify:
        report = verify_poisson_map(m, points, tol=tol)
        if not report.accepted:
            raise VerificationError(
                f"map '{name}' is not Poisson: residual "
                f"{report.max_residual:.3e} at {report.worst_point}"
            )
    return m


def _map_sweep_structure(m: PoissonMap) -> PoissonStructure:
    """Source structure with both parameter sets merged, for evaluation."""
    merged = m.merged_parameters()
    if merged == m.source.parameters:
        return m.source
    extra = {p: v for p, v in merged.items() if p not in m.source.parameters}
    src = m.source
    out = PoissonStructure(
        src.chart,
        {
            (src.chart.names[i], src.chart.names[j]): e
            for (i, j), e in src.upper_items()
        },
        merged,
        name=src.name,
    )
    return out


def _pair_sweep(
    exprs: dict[tuple[str, str], Expression],
    structure: PoissonStructure,
    points: Sequence[Mapping[str, float]],
    tol: float,
) -> VerificationReport:
    from .poisson import _sweep  # residual machinery shared with the bracket checks

    keys = sorted(exprs)
    todo = [exprs[k] for k in keys]
    if not todo or not points:
        return VerificationReport(0.0, None, {k: 0.0 for k in keys}, tol)
    maxima, worst, skipped = _sweep(todo, structure, points)
    pairs = dict(zip(keys, maxima))
    top = max(range(len(keys)), key=lambda i: maxima[i])
    return VerificationReport(maxima[top], worst[top], pairs, tol, len(skipped))


def verify_poisson_map(
    m: PoissonMap,
    points: Sequence[Mapping[str, float]] | None = None,
    *,
    tol: float = DEFAULT_TOLERANCE,
) -> VerificationReport:
    """Residuals of {x_i o m, x_j o m}_source - L_target^{ij} o m per pair."""
    sweep_struct = _map_sweep_structure(m)
    if points is None:
        points = structure_points(sweep_struct, require=m.component_list())
    residuals: dict[tuple[str, str], Expression] = {}
    names = m.target.chart.names
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            lhs = bracket(m.components[names[i]], m.components[names[j]], sweep_struct)
            rhs = substitute(m.target.component(i, j), m.components)
            resid = simplify(lhs - rhs)
            if not is_literal_zero(resid):
                residuals[(names[i], names[j])] = resid
    report = _pair_sweep(residuals, sweep_struct, points, tol)
    full_pairs = {
        (names[i], names[j]): report.pairs.get((names[i], names[j]), 0.0)
        for i in range(len(names))
        for j in range(i + 1, len(names))
    }
    report.pairs = full_pairs
    return report


def pullback(f: Expression, m: PoissonMap) -> Expression:
    """f composed with the map, by substitution of its components."""
    allowed = set(m.target.chart.names) | set(m.merged_parameters())
    extra = free_variables(f) - allowed
    if extra:
        raise ValueError(
            f"free variables {sorted(extra)} are not coordinates of the target chart"
        )
    return simplify(substitute(f, m.components))


def identity_map(structure: PoissonStructure) -> PoissonMap:
    comps = {n: Variable(n) for n in structure.chart.names}
    return PoissonMap("id", structure, structure, comps)


def product_map(maps: Sequence[PoissonMap], *, name: str | None = None, verify: bool = False) -> PoissonMap:
    """Componentwise product; factor i's coordinates get suffix i.

    The product of verified Poisson maps is Poisson, so verification is
    off by default; pass verify=True to re-check numerically.
    """
    if not maps:
        raise ValueError("product of no maps")
    if len(maps) == 1:
        return maps[0]
    source = product(*[m.source for m in maps])
    target = product(*[m.target for m in maps])
    comps: dict[str, Expression] = {}
    for idx, m in enumerate(maps, start=1):
        suffix = str(idx)
        for coord in m.target.chart.names:
            comps[coord + suffix] = append_suffix(
                m.components[coord], m.source.chart.names, suffix
            )
    label = name or "x".join(m.name for m in maps)
    return poisson_map(label, source, target, comps, verify=verify)


# ---------------------------------------------------------------------------
# function families


@dataclass(eq=False)
class FunctionFamily:
    """Named functions over one chart, claimed to be pairwise in involution."""

    structure: PoissonStructure
    members: tuple[NamedFunction, ...]
    tags: tuple[str, ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.members) != len(self.tags):
            raise ValueError("one provenance tag per member required")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def bodies(self) -> list[Expression]:
        return [m.body for m in self.members]

    def names(self) -> list[str]:
        return [m.name for m in self.members]

    def to_json(self) -> dict:
        return {
            "chart": list(self.structure.chart.names),
            "members": [
                {"name": m.name, "expression": to_string(m.body), "provenance": t}
                for m, t in zip(self.members, self.tags)
            ],
            "notes": list(self.notes),
        }


def seed_family(structure: PoissonStructure, functions: Sequence[NamedFunction]) -> FunctionFamily:
    for fn in functions:
        check_function_symbols(fn.body, structure)
    return FunctionFamily(structure, tuple(functions), tuple(PROVENANCE_SEED for _ in functions))


def _dedup(members, tags):
    seen = set()
    out_m, out_t = [], []
    for m, t in zip(members, tags):
        key = to_string(m.body)
        if key in seen:
            continue
        seen.add(key)
        out_m.append(m)
        out_t.append(t)
    return tuple(out_m), tuple(out_t)


def extend_family(
    family: FunctionFamily,
    m: PoissonMap,
    casimirs: Sequence[NamedFunction],
    *,
    points: Sequence[Mapping[str, float]] | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> FunctionFamily:
    """One recursion step: pull every member back through m, adjoin Casimirs.

    Each candidate Casimir is re-checked against the source structure and
    refused (by name) if its residual exceeds the tolerance.
    """
    if family.structure.chart.names != m.target.chart.names:
        raise ValueError(
            f"family lives on {family.structure.chart.names}, "
            f"map target is {m.target.chart.names}"
        )
    sweep_struct = _map_sweep_structure(m)
    if points is None:
        points = structure_points(sweep_struct, require=m.component_list())
    members = [
        NamedFunction(f"{fn.name}@{m.name}", pullback(fn.body, m)) for fn in family
    ]
    tags = [PROVENANCE_PULLED] * len(members)
    for c in casimirs:
        residual = is_casimir(c.body, sweep_struct, points)
        if residual >= tol:
            raise VerificationError(
                f"refusing to adjoin '{c.name}': casimir residual {residual:.3e}"
            )
        members.append(c)
        tags.append(PROVENANCE_CASIMIR)
    out_m, out_t = _dedup(members, tags)
    return FunctionFamily(m.source, out_m, out_t, family.notes)


def check_involution(
    family: FunctionFamily | Sequence[NamedFunction],
    structure: PoissonStructure,
    points: Sequence[Mapping[str, float]],
    *,
    tol: float = DEFAULT_TOLERANCE,
) -> VerificationReport:
    """Max over pairs and points of |{f_i, f_j}|."""
    members = list(family.members) if isinstance(family, FunctionFamily) else list(family)
    exprs: dict[tuple[str, str], Expression] = {}
    pairs_all: dict[tuple[str, str], float] = {}
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            key = (members[i].name, members[j].name)
            pairs_all[key] = 0.0
            b = bracket(members[i].body, members[j].body, structure)
            if not is_literal_zero(b):
                exprs[key] = b
    report = _pair_sweep(exprs, structure, points, tol)
    pairs_all.update(report.pairs)
    report.pairs = pairs_all
    return report


# ---------------------------------------------------------------------------
# chains


@dataclass
class ChainSpec:
    """Recipe for repeated extension along a product chain.

    kind 'multiplication' uses a map M x M -> M applied to the two leftmost
    factors at every stage; kind 'action' uses a map M x N -> N applied to
    the two rightmost ones.  `factor_casimirs` is a Casimir basis of M,
    `base_casimirs` one of N (action chains only).
    """

    kind: str
    map: PoissonMap
    factor_casimirs: Sequence[NamedFunction]
    base_casimirs: Sequence[NamedFunction] = ()

    def __post_init__(self):
        if self.kind not in ("multiplication", "action"):
            raise ValueError(f"unknown chain kind {self.kind!r}")


def _mult_stage(spec: ChainSpec, n: int) -> PoissonMap:
    """Stage map Pi^{n+1} M -> Pi^n M applying Phi to factors 1,2."""
    M = spec.map.target
    source = product(*[M] * (n + 1))
    target = product(*[M] * n)
    comps: dict[str, Expression] = {}
    for c in M.chart.names:
        lead = c + "1" if n > 1 else c
        comps[lead] = spec.map.components[c]
        for j in range(2, n + 1):
            comps[c + str(j)] = Variable(c + str(j + 1))
    label = spec.map.name if n == 1 else f"{spec.map.name}xid{n - 1}"
    return poisson_map(label, source, target, comps, verify=False)


def _action_stage(spec: ChainSpec, n: int) -> PoissonMap:
    """Stage map M^n x N -> M^{n-1} x N applying Phi to the last two factors."""
    M = _action_factor(spec)
    N = spec.map.target
    source = product(*([M] * n + [N]))
    target = product(*([M] * (n - 1) + [N])) if n > 1 else N
    comps: dict[str, Expression] = {}
    for j in range(1, n):
        for c in M.chart.names:
            comps[c + str(j)] = Variable(c + str(j))
    rename = {c + "1": Variable(c + str(n)) for c in M.chart.names}
    rename.update({c + "2": Variable(c + str(n + 1)) for c in N.chart.names})
    for c in N.chart.names:
        tgt = c + str(n) if n > 1 else c
        comps[tgt] = substitute(spec.map.components[c], rename)
    label = spec.map.name if n == 1 else f"id{n - 1}x{spec.map.name}"
    return poisson_map(label, source, target, comps, verify=False)


def _action_factor(spec: ChainSpec) -> PoissonStructure:
    """Recover the acting factor M from the action map's source.

    The source of an action map is product(M, N) with suffixes 1, 2; M is
    reconstructed by stripping suffix 1 from the leading block.
    """
    src = spec.map.source
    n_names = spec.map.target.chart.names
    k = src.chart.dimension - len(n_names)
    m_names = tuple(nm[:-1] for nm in src.chart.names[:k])
    comps = {
        (m_names[i], m_names[j]): substitute(
            e, {n + "1": Variable(n) for n in m_names}
        )
        for (i, j), e in src.upper_items()
        if i < k and j < k
    }
    return PoissonStructure(m_names, comps, src.parameters, name="factor")


def build_chain(
    seed: FunctionFamily,
    spec: ChainSpec,
    depth: int,
    *,
    tol: float = DEFAULT_TOLERANCE,
    points_per_stage: int | None = None,
    verify_stages: bool = True,
) -> FunctionFamily:
    """Left-nested chain of extend_family steps up to the depth-fold product.

    Depth 1 returns the seed unchanged.  Any stage whose casimir or
    involution check fails aborts with the stage name.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    family = seed
    notes = list(seed.notes)
    notes.append(f"chain kind={spec.kind} path=left-nested depth={depth}")
    for n in range(1, depth):
        if spec.kind == "multiplication":
            stage = _mult_stage(spec, n)
            per_factor = spec.factor_casimirs
            casimirs = [
                NamedFunction(
                    f"{c.name}{i}",
                    append_suffix(c.body, _mult_base(spec).chart.names, str(i)),
                )
                for i in range(1, n + 2)
                for c in per_factor
            ]
        else:
            stage = _action_stage(spec, n)
            M = _action_factor(spec)
            casimirs = [
                NamedFunction(f"{c.name}{i}", append_suffix(c.body, M.chart.names, str(i)))
                for i in range(1, n + 1)
                for c in spec.factor_casimirs
            ]
            casimirs += [
                NamedFunction(
                    f"{c.name}{n + 1}",
                    append_suffix(c.body, spec.map.target.chart.names, str(n + 1)),
                )
                for c in spec.base_casimirs
            ]
        try:
            family = extend_family(family, stage, casimirs, tol=tol)
            if verify_stages:
                pts = structure_points(
                    _map_sweep_structure(stage),
                    points_per_stage or 40,
                    require=stage.component_list(),
                )
                report = check_involution(family, stage.source, pts, tol=tol)
                if not report.accepted:
                    raise VerificationError(
                        f"involution residual {report.max_residual:.3e}"
                    )
        except VerificationError as exc:
            raise VerificationError(f"chain stage '{stage.name}' failed: {exc}") from exc
    family.notes = tuple(notes)
    return family


def _mult_base(spec: ChainSpec) -> PoissonStructure:
    return spec.map.target


# ---------------------------------------------------------------------------
# functional independence


def independence_rank(
    family: FunctionFamily | Sequence[NamedFunction],
    points: Sequence[Mapping[str, float]],
    *,
    structure: PoissonStructure | None = None,
    tol: float = RANK_TOLERANCE,
) -> int:
    """Max over points of the numeric Jacobian rank of the family.

    Rank is computed by Gaussian elimination with full pivoting; a pivot
    counts while it exceeds `tol` times the largest pivot.  Points where
    some gradient fails to evaluate are skipped.
    """
    if isinstance(family, FunctionFamily):
        members = list(family.members)
        structure = structure or family.structure
    else:
        members = list(family)
        if structure is None:
            raise ValueError("structure required when passing a bare member list")
    if not points:
        raise ValueError("at least one sample point is required")
    chart_names = structure.chart.names
    pnames = sorted(structure.parameters)
    names = list(chart_names) + pnames
    tail = [structure.parameters[p] for p in pnames]
    grads = [
        [compile_scalar(differentiate(m.body, c), names) for c in chart_names]
        for m in members
    ]
    best = 0
    for pt in points:
        vals = [float(pt[c]) for c in chart_names] + tail
        try:
            rows = [[g(vals) for g in row] for row in grads]
        except (ArithmeticError, ValueError):
            continue
        mat = np.array(rows, dtype=float)
        if not np.all(np.isfinite(mat)):
            continue
        best = max(best, _pivoted_rank(mat, tol))
    return best


def _pivoted_rank(mat: np.ndarray, tol: float) -> int:
    a = mat.copy()
    rank = 0
    first_pivot = None
    while a.size:
        idx = np.unravel_index(np.argmax(np.abs(a)), a.shape)
        pivot = abs(a[idx])
        if pivot == 0.0:
            break
        if first_pivot is None:
            first_pivot = pivot
        elif pivot <= tol * first_pivot:
            break
        r, c = idx
        row = a[r] / a[r, c]
        a = np.delete(a, r, axis=0)
        if a.size:
            a = a - np.outer(a[:, c], row)
            a = np.delete(a, c, axis=1)
        rank += 1
    return rank


# ---------------------------------------------------------------------------
# JSON wire formats


def map_to_json(m: PoissonMap) -> dict:
    from .poisson import structure_to_json

    return {
        "name": m.name,
        "source": structure_to_json(m.source),
        "target": structure_to_json(m.target),
        "components": {
            c: to_string(m.components[c]) for c in m.target.chart.names
        },
    }


def map_from_json(doc: Mapping, *, verify: bool = True) -> PoissonMap:
    from .poisson import structure_from_json

    source = structure_from_json(doc["source"])
    target = structure_from_json(doc["target"])
    return poisson_map(
        doc.get("name", "map"),
        source,
        target,
        {c: parse(t) for c, t in doc["components"].items()},
        verify=verify,
    )
