"""Poisson structures on coordinate charts.

A structure is an antisymmetric matrix of expressions over a chart; only
the upper triangle is stored, the lower triangle is its negation and the
diagonal is zero, so antisymmetry holds by construction.  All residual
checks are numeric, evaluated over seeded sample points.
"""
from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .expr import (
    Expression,
    compile_scalar,
    const,
    differentiate,
    free_variables,
    is_literal_zero,
    parse,
    simplify,
    substitute,
    to_string,
    Variable,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0xC0FFEE
DEFAULT_POINTS = 100
DEFAULT_TOLERANCE = 1e-9

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Chart:
    """Ordered list of distinct coordinate names."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate coordinate names in {self.names}")
        for n in self.names:
            if not _NAME_RE.match(n):
                raise ValueError(f"bad coordinate name {n!r}")

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class NamedFunction:
    name: str
    body: Expression


def named(name: str, body: Expression | str) -> NamedFunction:
    return NamedFunction(name, parse(body) if isinstance(body, str) else body)


class PoissonStructure:
    """Chart plus the upper triangle of the component matrix.

    `components` maps coordinate-name pairs (either order) to expressions;
    omitted pairs are zero.  `parameters` binds any non-coordinate symbols
    appearing in the components to numeric values.
    """

    def __init__(
        self,
        chart: Chart | Sequence[str],
        components: Mapping[tuple[str, str], Expression | str | float],
        parameters: Mapping[str, float] | None = None,
        name: str = "",
    ):
        self.chart = chart if isinstance(chart, Chart) else Chart(tuple(chart))
        self.parameters = {k: float(v) for k, v in (parameters or {}).items()}
        self.name = name
        for p in self.parameters:
            if p in self.chart.names:
                raise ValueError(f"parameter {p!r} collides with a coordinate")
        self._upper: dict[tuple[int, int], Expression] = {}
        allowed = set(self.chart.names) | set(self.parameters)
        for (a, b), raw in components.items():
            e = parse(raw) if isinstance(raw, str) else raw
            if isinstance(e, (int, float)):
                e = const(e)
            if a == b:
                raise ValueError(f"diagonal component ({a},{a}) must be zero")
            i, j = self.chart.index(a), self.chart.index(b)
            if i > j:
                i, j = j, i
                e = simplify(-e)
            else:
                e = simplify(e)
            if (i, j) in self._upper:
                raise ValueError(f"component ({a},{b}) given twice")
            extra = free_variables(e) - allowed
            if extra:
                raise ValueError(f"component ({a},{b}) uses unknown symbols {sorted(extra)}")
            if not is_literal_zero(e):
                self._upper[(i, j)] = e

    def component(self, i: int, j: int) -> Expression:
        if i == j:
            return const(0)
        if i < j:
            return self._upper.get((i, j), const(0))
        e = self._upper.get((j, i))
        return const(0) if e is None else simplify(-e)

    def component_by_name(self, a: str, b: str) -> Expression:
        return self.component(self.chart.index(a), self.chart.index(b))

    def upper_items(self):
        """Nonzero stored components as ((i, j), expression) with i < j."""
        return sorted(self._upper.items())

    def all_expressions(self) -> list[Expression]:
        return [e for _, e in self.upper_items()]

    def __repr__(self):
        label = self.name or "?"
        return f"PoissonStructure({label}, chart={self.chart.names})"


def check_function_symbols(e: Expression, structure: PoissonStructure) -> None:
    allowed = set(structure.chart.names) | set(structure.parameters)
    extra = free_variables(e) - allowed
    if extra:
        raise ValueError(
            f"free variables {sorted(extra)} are neither coordinates of "
            f"{structure.chart.names} nor declared parameters"
        )


def bracket(f: Expression, g: Expression, structure: PoissonStructure) -> Expression:
    """Poisson bracket of two functions, simplified once.

    Uses the stored upper triangle: {f, g} = sum over i<j of
    L^{ij} (d_i f d_j g - d_j f d_i g).
    """
    check_function_symbols(f, structure)
    check_function_symbols(g, structure)
    names = structure.chart.names
    total: Expression = const(0)
    for (i, j), lam in structure.upper_items():
        fi = differentiate(f, names[i])
        fj = differentiate(f, names[j])
        gi = differentiate(g, names[i])
        gj = differentiate(g, names[j])
        total = total + lam * (fi * gj - fj * gi)
    return simplify(total)


# ---------------------------------------------------------------------------
# numeric sweeps


def _sweep(
    exprs: Sequence[Expression],
    structure: PoissonStructure,
    points: Sequence[Mapping[str, float]],
):
    """Max |expr| per expression over points.

    Returns (maxima, worst_points, skipped) where skipped collects
    (expr_index, point_index, reason) for evaluation failures.
    """
    chart_names = structure.chart.names
    pnames = sorted(structure.parameters)
    names = list(chart_names) + pnames
    tail = [structure.parameters[p] for p in pnames]
    fns = [compile_scalar(e, names) for e in exprs]
    maxima = [0.0] * len(exprs)
    worst: list[Mapping[str, float] | None] = [None] * len(exprs)
    skipped: list[tuple[int, int, str]] = []
    evaluated = [0] * len(exprs)
    for pi, pt in enumerate(points):
        vals = [float(pt[c]) for c in chart_names] + tail
        for ei, fn in enumerate(fns):
            try:
                r = fn(vals)
            except (ArithmeticError, ValueError) as exc:
                skipped.append((ei, pi, str(exc)))
                continue
            if not math.isfinite(r):
                skipped.append((ei, pi, "non-finite value"))
                continue
            evaluated[ei] += 1
            if abs(r) >= maxima[ei]:
                maxima[ei] = abs(r)
                worst[ei] = pt
    if skipped:
        logger.warning("sweep skipped %d evaluations (domain violations)", len(skipped))
    if exprs and points and max(evaluated) == 0:
        raise ValueError("no sample point was evaluable for any expression")
    return maxima, worst, skipped


def jacobi_residual(
    structure: PoissonStructure,
    points: Sequence[Mapping[str, float]],
) -> float:
    """Max over points and coordinate triples of the cyclic double bracket.

    Zero (up to roundoff) exactly when the structure satisfies the Jacobi
    identity on the sampled region.  Points with evaluation failures are
    skipped and logged.
    """
    names = structure.chart.names
    n = len(names)
    exprs = []
    for i in range(n):
        for j in range(i + 1, n):
            for l in range(j + 1, n):
                xi, xj, xl = (Variable(names[t]) for t in (i, j, l))
                cyc = (
                    bracket(structure.component(i, j), xl, structure)
                    + bracket(structure.component(j, l), xi, structure)
                    + bracket(structure.component(l, i), xj, structure)
                )
                cyc = simplify(cyc)
                if not is_literal_zero(cyc):
                    exprs.append(cyc)
    if not exprs:
        return 0.0
    maxima, _, _ = _sweep(exprs, structure, points)
    return max(maxima)


def is_casimir(
    c: Expression,
    structure: PoissonStructure,
    points: Sequence[Mapping[str, float]],
) -> float:
    """Max over points and coordinates of |{c, x_i}|."""
    check_function_symbols(c, structure)
    exprs = []
    for name in structure.chart.names:
        b = bracket(c, Variable(name), structure)
        if not is_literal_zero(b):
            exprs.append(b)
    if not exprs:
        return 0.0
    maxima, _, _ = _sweep(exprs, structure, points)
    return max(maxima)


# ---------------------------------------------------------------------------
# products


def append_suffix(e: Expression, names: Iterable[str], suffix: str) -> Expression:
    """Rename the given coordinates by appending a suffix."""
    return substitute(e, {n: Variable(n + suffix) for n in names})


def product(*factors: PoissonStructure) -> PoissonStructure:
    """Block-diagonal structure on the suffix-renamed union chart.

    Factor i keeps its components with every coordinate renamed by the
    factor index (x -> x1, x2, ...), applied left to right even to names
    that already end in digits.  A single factor is returned unchanged.
    """
    if not factors:
        raise ValueError("product of no structures")
    if len(factors) == 1:
        return factors[0]
    new_names: list[str] = []
    components: dict[tuple[str, str], Expression] = {}
    parameters: dict[str, float] = {}
    for idx, f in enumerate(factors, start=1):
        suffix = str(idx)
        renamed = [n + suffix for n in f.chart.names]
        new_names.extend(renamed)
        for (i, j), e in f.upper_items():
            a, b = f.chart.names[i] + suffix, f.chart.names[j] + suffix
            components[(a, b)] = append_suffix(e, f.chart.names, suffix)
        for p, v in f.parameters.items():
            if p in parameters and parameters[p] != v:
                raise ValueError(f"conflicting values for parameter {p!r}")
            parameters[p] = v
    label = "x".join(f.name or "?" for f in factors)
    return PoissonStructure(Chart(tuple(new_names)), components, parameters, name=label)


# ---------------------------------------------------------------------------
# seeded sampling


def sample_points(
    chart: Chart | Sequence[str],
    n: int = DEFAULT_POINTS,
    *,
    seed: int = DEFAULT_SEED,
    parameters: Mapping[str, float] | None = None,
    require: Sequence[Expression] = (),
    low: float = -2.0,
    high: float = 2.0,
    bounds: Mapping[str, tuple[float, float]] | None = None,
    max_retries: int = 1000,
) -> list[dict[str, float]]:
    """Seeded uniform sample points on the chart.

    Coordinates are drawn uniformly from [low, high] (optionally per-name
    `bounds`); a draw is rejected and retried when any expression in
    `require` fails to evaluate to a finite value there.
    """
    names = chart.names if isinstance(chart, Chart) else tuple(chart)
    parameters = dict(parameters or {})
    pnames = sorted(parameters)
    tail = [float(parameters[p]) for p in pnames]
    fns = [compile_scalar(e, list(names) + pnames) for e in require]
    rng = random.Random(seed)
    bounds = bounds or {}
    out = []
    for _ in range(n):
        for _attempt in range(max_retries):
            vals = [rng.uniform(*bounds.get(nm, (low, high))) for nm in names]
            ok = True
            for fn in fns:
                try:
                    r = fn(vals + tail)
                except (ArithmeticError, ValueError):
                    ok = False
                    break
                if not math.isfinite(r):
                    ok = False
                    break
            if ok:
                out.append(dict(zip(names, vals)))
                break
        else:
            raise ValueError(
                f"could not sample a valid point after {max_retries} retries"
            )
    return out


def structure_points(
    structure: PoissonStructure,
    n: int = DEFAULT_POINTS,
    *,
    seed: int = DEFAULT_SEED,
    require: Sequence[Expression] = (),
    bounds: Mapping[str, tuple[float, float]] | None = None,
) -> list[dict[str, float]]:
    """Sample points valid for every component of the structure."""
    req = list(structure.all_expressions()) + list(require)
    return sample_points(
        structure.chart,
        n,
        seed=seed,
        parameters=structure.parameters,
        require=req,
        bounds=bounds,
    )


# ---------------------------------------------------------------------------
# JSON system definition


def structure_to_json(structure: PoissonStructure) -> dict:
    """`{"chart": [...], "parameters": {...}, "bivector": {"i,j": expr}}`."""
    bivector = {
        f"{i},{j}": to_string(e) for (i, j), e in structure.upper_items()
    }
    return {
        "chart": list(structure.chart.names),
        "parameters": dict(sorted(structure.parameters.items())),
        "bivector": bivector,
    }


def structure_from_json(doc: Mapping, name: str = "") -> PoissonStructure:
    chart = Chart(tuple(doc["chart"]))
    components: dict[tuple[str, str], Expression] = {}
    for key, text in doc.get("bivector", {}).items():
        i, j = (int(t) for t in key.split(","))
        components[(chart.names[i], chart.names[j])] = parse(text)
    return PoissonStructure(
        chart, components, doc.get("parameters", {}), name=name or doc.get("name", "")
    )
