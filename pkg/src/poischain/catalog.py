"""Preconfigured example systems.

Each entry bundles a Poisson structure, its Casimir basis, the natural
product/realization maps, and named Hamiltonians, all verified at
construction.  Systems:

* ``su2``: linear structure on R^3 with cyclic coordinate brackets,
  componentwise addition map, and the unit-sphere canonical chart.
* ``su2_chain``: the k-site product carrying the pairwise interaction sum.
* ``jordan_schwinger``: canonical T*R^2 with the quadratic realization map
  onto su2 and the induced four-function set on T*R^4.
* ``sb2c_deformed``: the k-deformed family with sinh bracket, group
  multiplication map, and deformed Casimir.
* ``sb2c_realization``: canonical (q, p) realization of the deformed
  commutation rules.
* ``triangular``: quadratic brackets on upper-triangular 2x2 matrix
  coordinates (a, b, x, y) with two Casimirs and the matrix product map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

from .construct import (
    ChainSpec,
    FunctionFamily,
    PoissonMap,
    build_chain,
    extend_family,
    poisson_map,
    product_map,
    pullback,
    seed_family,
)
from .expr import Expression, Variable, const, free_variables, parse, simplify, substitute
from .poisson import (
    Chart,
    DEFAULT_POINTS,
    DEFAULT_SEED,
    DEFAULT_TOLERANCE,
    NamedFunction,
    PoissonStructure,
    append_suffix,
    bracket,
    is_casimir,
    jacobi_residual,
    named,
    product,
    sample_points,
    structure_points,
    structure_to_json,
)

SYSTEM_NAMES = (
    "su2",
    "su2_chain",
    "jordan_schwinger",
    "sb2c_deformed",
    "sb2c_realization",
    "triangular",
)

_CONSTRUCTION_POINTS = 60


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class ParameterSet:
    """Numeric parameters shared by the catalog systems.

    alpha, beta, gamma scale the quadratic/deformed brackets; k is the
    deformation parameter; delta and a configure the canonical
    realization; r is the sphere-leaf radius; k_sites the chain length.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    k: float = 1.0
    delta: float = 1.0
    a: float = 1.0
    r: float = 1.0
    k_sites: int = 2

    def __post_init__(self):
        if not self.r > 0:
            raise CatalogError("leaf radius r must be positive")
        if not self.delta > 0:
            raise CatalogError("delta must be positive")
        if self.a < 0:
            raise CatalogError("a must be nonnegative")
        if int(self.k_sites) != self.k_sites or self.k_sites < 2:
            raise CatalogError("k_sites must be an integer >= 2")

    def validate_for(self, name: str) -> None:
        if name in ("sb2c_deformed", "sb2c_realization"):
            if self.k == 0:
                raise CatalogError(f"{name} requires k != 0")
        if name == "sb2c_realization":
            if not math.isclose(self.alpha, self.delta**2, rel_tol=1e-12, abs_tol=0.0):
                raise CatalogError(
                    "the realization requires alpha = delta^2 "
                    f"(got alpha={self.alpha}, delta={self.delta})"
                )
            if self.alpha <= 0:
                raise CatalogError("the realization requires alpha = delta^2 > 0")
            if self.beta != 1.0:
                raise CatalogError("the realization requires beta = 1")
            if self.gamma == 0 and not self.a > 0:
                raise CatalogError("a must be positive when gamma = 0")

    def replace(self, **kw) -> "ParameterSet":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(eq=False)
class Hamiltonian:
    name: str
    body: Expression
    structure: PoissonStructure

    def as_named(self) -> NamedFunction:
        return NamedFunction(self.name, self.body)


@dataclass(eq=False)
class SystemDefinition:
    name: str
    params: ParameterSet
    structure: PoissonStructure
    casimirs: tuple[NamedFunction, ...]
    maps: dict[str, PoissonMap]
    hamiltonians: dict[str, Hamiltonian]

    def to_json(self) -> dict:
        doc = structure_to_json(self.structure)
        doc["name"] = self.name
        return doc


def get_system(name: str, params: ParameterSet | None = None) -> SystemDefinition:
    """Fully verified system definition for a catalog name."""
    if name not in SYSTEM_NAMES:
        raise CatalogError(f"unknown system '{name}' (choose from {', '.join(SYSTEM_NAMES)})")
    p = params or ParameterSet()
    p.validate_for(name)
    return _build(name, p)


@lru_cache(maxsize=None)
def _build(name: str, p: ParameterSet) -> SystemDefinition:
    builder = {
        "su2": _build_su2,
        "su2_chain": _build_su2_chain,
        "jordan_schwinger": _build_jordan_schwinger,
        "sb2c_deformed": _build_sb2c,
        "sb2c_realization": _build_sb2c_realization,
        "triangular": _build_triangular,
    }[name]
    system = builder(p)
    _verify_system(system)
    return system


def _verify_system(system: SystemDefinition) -> None:
    pts = structure_points(system.structure, _CONSTRUCTION_POINTS)
    resid = jacobi_residual(system.structure, pts)
    if resid >= DEFAULT_TOLERANCE:
        raise CatalogError(f"{system.name}: jacobi residual {resid:.3e}")
    for c in system.casimirs:
        resid = is_casimir(c.body, system.structure, pts)
        if resid >= DEFAULT_TOLERANCE:
            raise CatalogError(f"{system.name}: '{c.name}' casimir residual {resid:.3e}")


def _su2_structure() -> PoissonStructure:
    return PoissonStructure(
        ("x", "y", "z"),
        {("x", "y"): "z", ("y", "z"): "x", ("z", "x"): "y"},
        name="su2",
    )


def _sphere_chart(r: float) -> PoissonStructure:
    return PoissonStructure(
        ("q", "p"), {("q", "p"): "1"}, {"r": r}, name="sphere_chart"
    )


def _build_su2(p: ParameterSet) -> SystemDefinition:
    M = _su2_structure()
    MM = product(M, M)
    add = poisson_map(
        "add", MM, M, {"x": "x1+x2", "y": "y1+y2", "z": "z1+z2"}, verify=True
    )
    leaf = poisson_map(
        "leaf",
        _sphere_chart(p.r),
        M,
        {"x": "sqrt(r^2-p^2)*cos(q)", "y": "sqrt(r^2-p^2)*sin(q)", "z": "p"},
        verify=True,
    )
    leaf_pair = product_map([leaf, leaf], name="leaf_pair")
    c = named("c", "x^2+y^2+z^2")
    H = Hamiltonian("H", simplify(parse("x1*x2+y1*y2+z1*z2")), MM)
    # difference of the squared-sum coproducts, constant on product leaves
    H1 = Hamiltonian(
        "H1", simplify(parse("(z1+z2)^2 - ((x1+x2)^2+(y1+y2)^2+(z1+z2)^2)")), MM
    )
    return SystemDefinition(
        "su2",
        p,
        M,
        (c,),
        {"add": add, "leaf": leaf, "leaf_pair": leaf_pair},
        {"H": H, "H1": H1},
    )


def _pair_interaction(names: Sequence[str], i: int, j: int) -> Expression:
    return parse("+".join(f"{n}{i}*{n}{j}" for n in names))


def _build_su2_chain(p: ParameterSet) -> SystemDefinition:
    base = get_system("su2", p)
    m = int(p.k_sites)
    chain_struct = product(*[base.structure] * m)
    casimirs = tuple(
        NamedFunction(f"c{i}", append_suffix(base.casimirs[0].body, ("x", "y", "z"), str(i)))
        for i in range(1, m + 1)
    )
    interaction = const(0)
    for i in range(1, m + 1):
        for j in range(i + 1, m + 1):
            interaction = interaction + _pair_interaction(("x", "y", "z"), i, j)
    H = Hamiltonian("H", simplify(interaction), chain_struct)
    leaf_chain = product_map([base.maps["leaf"]] * m, name="leaf_chain")
    return SystemDefinition(
        "su2_chain",
        p,
        chain_struct,
        casimirs,
        {"add": base.maps["add"], "leaf": leaf_chain},
        {"H": H},
    )


def _build_jordan_schwinger(p: ParameterSet) -> SystemDefinition:
    canon = PoissonStructure(
        ("q1", "q2", "p1", "p2"),
        {("q1", "p1"): "-1", ("q2", "p2"): "-1"},
        name="t_star_r2",
    )
    M = _su2_structure()
    psi = poisson_map(
        "psi",
        canon,
        M,
        {
            "x": "(q1*q2+p1*p2)/2",
            "y": "(p1*q2-q1*p2)/2",
            "z": "(p1^2+q1^2-p2^2-q2^2)/4",
        },
        verify=True,
    )
    psi_pair = product_map([psi, psi], name="psi_pair", verify=True)
    T4 = psi_pair.source
    F = parse("(p1^2+p2^2+q1^2+q2^2)^2/16")
    F1 = append_suffix(F, canon.chart.names, "1")
    F2 = append_suffix(F, canon.chart.names, "2")
    G1 = pullback(parse("x1+x2"), psi_pair)
    G2 = pullback(parse("y1+y2"), psi_pair)
    G3 = pullback(parse("z1+z2"), psi_pair)
    # interaction normalized so that the coproduct of the quadratic casimir
    # splits as F1 + F2 + H
    H = simplify(const(2) * pullback(parse("x1*x2+y1*y2+z1*z2"), psi_pair))
    hams = {
        "F": Hamiltonian("F", simplify(F), canon),
        "F1": Hamiltonian("F1", simplify(F1), T4),
        "F2": Hamiltonian("F2", simplify(F2), T4),
        "H": Hamiltonian("H", H, T4),
        "G1": Hamiltonian("G1", G1, T4),
        "G2": Hamiltonian("G2", G2, T4),
        "G3": Hamiltonian("G3", G3, T4),
    }
    return SystemDefinition(
        "jordan_schwinger",
        p,
        canon,
        (),
        {"realization": psi, "realization_pair": psi_pair},
        hams,
    )


def _sb2c_structure(p: ParameterSet) -> PoissonStructure:
    params = {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma, "k": p.k}
    return PoissonStructure(
        ("x", "y", "z"),
        {
            ("z", "x"): "beta*y",
            ("y", "z"): "alpha*x",
            ("x", "y"): "gamma*sinh(k*z)/k",
        },
        params,
        name="sb2c_deformed",
    )


_SB2C_CASIMIR = "alpha*x^2+beta*y^2+4*gamma/k^2*sinh(k*z/2)^2"


def _build_sb2c(p: ParameterSet) -> SystemDefinition:
    M = _sb2c_structure(p)
    MM = product(M, M)
    mult = poisson_map(
        "mult",
        MM,
        M,
        {
            "z": "z1+z2",
            "x": "x1*exp(k*z2/2)+exp(-k*z1/2)*x2",
            "y": "y1*exp(k*z2/2)+exp(-k*z1/2)*y2",
        },
        verify=True,
    )
    c = named("c", _SB2C_CASIMIR)
    H = Hamiltonian("H", simplify(const(0.5) * pullback(c.body, mult)), MM)
    return SystemDefinition("sb2c_deformed", p, M, (c,), {"mult": mult}, {"H": H})


def _build_sb2c_realization(p: ParameterSet) -> SystemDefinition:
    deformed = get_system("sb2c_deformed", p)
    canon = PoissonStructure(
        ("q", "p"),
        {("q", "p"): "-1"},
        {
            "alpha": p.alpha,
            "beta": p.beta,
            "gamma": p.gamma,
            "k": p.k,
            "delta": p.delta,
            "a": p.a,
        },
        name="sb2c_canonical",
    )
    radial = "sqrt(a^2-4*gamma/k^2*sinh(k*p/2)^2)"
    real = poisson_map(
        "realization",
        canon,
        deformed.structure,
        {
            "x": f"{radial}*sin(delta*q)/delta",
            "y": f"{radial}*cos(delta*q)",
            "z": "p",
        },
        verify=True,
    )
    pair = product_map([real, real], name="realization_pair")
    hams = {"H": Hamiltonian("H", pullback(deformed.hamiltonians["H"].body, pair), pair.source)}
    if p.a == 0.0 and p.gamma == -1.0 and p.delta == 1.0:
        hams["H1"] = Hamiltonian(
            "H1",
            parse("4*exp(k*(p2-p1)/2)*1/k^2*sinh(k*p1/2)*sinh(k*p2/2)*(cos(q1-q2)-1)"),
            pair.source,
        )
    return SystemDefinition(
        "sb2c_realization",
        p,
        canon,
        (),
        {"realization": real, "realization_pair": pair},
        hams,
    )


def _build_triangular(p: ParameterSet) -> SystemDefinition:
    params = {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma}
    M = PoissonStructure(
        ("a", "b", "x", "y"),
        {
            ("x", "a"): "beta*y*a",
            ("x", "b"): "-beta*y*b",
            ("x", "y"): "gamma*(b^2-a^2)",
            ("y", "a"): "-alpha*x*a",
            ("y", "b"): "alpha*x*b",
        },
        params,
        name="triangular",
    )
    MM = product(M, M)
    mult = poisson_map(
        "mult",
        MM,
        M,
        {"a": "a1*a2", "b": "b1*b2", "x": "a1*x2+x1*b2", "y": "a1*y2+y1*b2"},
        verify=True,
    )
    c1 = named("c1", "a*b")
    c2 = named("c2", "alpha*x^2+beta*y^2+gamma*(a^2+b^2)")
    H = Hamiltonian("H", simplify(const(0.5) * pullback(c2.body, mult)), MM)
    return SystemDefinition(
        "triangular", p, M, (c1, c2), {"mult": mult}, {"H": H}
    )


# ---------------------------------------------------------------------------
# classical limit


def classical_limit(name: str, params: ParameterSet | None = None) -> SystemDefinition:
    """The k-independent limit of a deformed family: linear brackets,
    quadratic Casimir, additive coproduct."""
    if name not in ("sb2c_deformed", "sb2c_realization"):
        raise CatalogError(f"'{name}' is not a deformed family")
    p = params or ParameterSet()
    pars = {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma}
    M0 = PoissonStructure(
        ("x", "y", "z"),
        {("z", "x"): "beta*y", ("y", "z"): "alpha*x", ("x", "y"): "gamma*z"},
        pars,
        name="sb2c_classical_limit",
    )
    MM = product(M0, M0)
    add = poisson_map(
        "add", MM, M0, {"x": "x1+x2", "y": "y1+y2", "z": "z1+z2"}, verify=True
    )
    c0 = named("c0", "alpha*x^2+beta*y^2+gamma*z^2")
    H0_expr = simplify(
        append_suffix(c0.body, ("x", "y", "z"), "1")
        + append_suffix(c0.body, ("x", "y", "z"), "2")
        + parse("alpha*x1*x2+beta*y1*y2+gamma*z1*z2")
    )
    system = SystemDefinition(
        "sb2c_classical_limit",
        p,
        M0,
        (c0,),
        {"add": add},
        {"H0": Hamiltonian("H0", H0_expr, MM)},
    )
    _verify_system(system)
    return system


# ---------------------------------------------------------------------------
# canonical-chart Hamiltonians


def _canonical_identity_check(
    closed: Expression,
    ambient: Expression,
    chart_map: PoissonMap,
    shift: float,
    *,
    tol: float,
    bounds: Mapping[str, tuple[float, float]] | None = None,
    points: int = DEFAULT_POINTS,
) -> float:
    """Max |closed - (ambient o chart + shift)| over sampled chart points."""
    pulled = pullback(ambient, chart_map)
    diff = simplify(closed - (pulled + const(shift)))
    sweep_struct = chart_map.source
    merged = chart_map.merged_parameters()
    pts = sample_points(
        sweep_struct.chart,
        points,
        parameters=merged,
        require=list(chart_map.component_list()) + [closed],
        bounds=bounds,
    )
    from .poisson import _sweep

    probe = PoissonStructure(
        sweep_struct.chart,
        {
            (sweep_struct.chart.names[i], sweep_struct.chart.names[j]): e
            for (i, j), e in sweep_struct.upper_items()
        },
        merged,
        name=sweep_struct.name,
    )
    maxima, _, _ = _sweep([diff], probe, pts)
    resid = maxima[0]
    if resid >= tol:
        raise CatalogError(f"canonical identity failed (residual {resid:.3e})")
    return resid


def canonical_hamiltonians(
    name: str, params: ParameterSet | None = None, *, tol: float = 1e-10
) -> list[NamedFunction]:
    """Closed-form Hamiltonians on the canonical charts.

    Each returned function is checked on construction against the pullback
    of its ambient counterpart through the chart map.
    """
    p = params or ParameterSet()
    if name in ("su2", "su2_chain"):
        return _canonical_su2(name, p, tol)
    if name in ("sb2c_deformed", "sb2c_realization"):
        return _canonical_sb2c(p, tol)
    if name == "jordan_schwinger":
        return _canonical_jordan_schwinger(p, tol)
    raise CatalogError(f"'{name}' has no canonical chart")


def _sqrt_pair(i: int, j: int) -> str:
    return f"sqrt((r^2-p{i}^2)*(r^2-p{j}^2))"


def _canonical_su2(name: str, p: ParameterSet, tol: float) -> list[NamedFunction]:
    system = get_system(name, p)
    if name == "su2":
        chart_map = system.maps["leaf_pair"]
        m = 2
    else:
        chart_map = system.maps["leaf"]
        m = int(p.k_sites)
    terms = [
        f"p{i}*p{j}+{_sqrt_pair(i, j)}*cos(q{i}-q{j})"
        for i in range(1, m + 1)
        for j in range(i + 1, m + 1)
    ]
    closed_H = parse("+".join(terms))
    ambient_H = (
        system.hamiltonians["H"].body
        if name == "su2_chain"
        else get_system("su2", p).hamiltonians["H"].body
    )
    _canonical_identity_check(closed_H, ambient_H, chart_map, 0.0, tol=tol)
    out = [NamedFunction("H", closed_H)]
    if name == "su2":
        closed_H1 = parse(f"p1^2+p2^2-2*{_sqrt_pair(1, 2)}*cos(q1-q2)")
        shift = 2.0 * p.r * p.r
        _canonical_identity_check(
            closed_H1, system.hamiltonians["H1"].body, chart_map, shift, tol=tol
        )
        out.append(NamedFunction("H1", closed_H1))
    return out


def _canonical_sb2c(p: ParameterSet, tol: float) -> list[NamedFunction]:
    p.validate_for("sb2c_realization")
    system = get_system("sb2c_realization", p)
    chart_map = system.maps["realization_pair"]
    S = "(a^2-4*gamma/k^2*sinh(k*{v}/2)^2)"
    closed_H = parse(
        "exp(k*(p2-p1)/2)*("
        f"sqrt({S.format(v='p1')}*{S.format(v='p2')})*cos(delta*(q1-q2))"
        "+a^2*cosh(k*(p1+p2)/2)"
        "+4*gamma/k^2*sinh(k*p1/2)*sinh(k*p2/2))"
    )
    ambient = get_system("sb2c_deformed", p).hamiltonians["H"].body
    _canonical_identity_check(closed_H, ambient, chart_map, 0.0, tol=tol)
    out = [NamedFunction("H", closed_H)]
    if p.a == 0.0 and p.gamma == -1.0 and p.delta == 1.0:
        closed_H1 = system.hamiltonians["H1"].body
        # the compact form holds where sinh(k p1/2) sinh(k p2/2) >= 0
        _canonical_identity_check(
            closed_H1,
            ambient,
            chart_map,
            0.0,
            tol=tol,
            bounds={"p1": (0.05, 2.0), "p2": (0.05, 2.0)},
        )
        out.append(NamedFunction("H1", closed_H1))
    return out


def _canonical_jordan_schwinger(p: ParameterSet, tol: float) -> list[NamedFunction]:
    system = get_system("jordan_schwinger", p)
    closed_H = parse(
        "((q11*q21+p11*p21)*(q12*q22+p12*p22)"
        "+(p11*q21-q11*p21)*(p12*q22-q12*p22))/2"
        "+(p11^2+q11^2-p21^2-q21^2)*(p12^2+q12^2-p22^2-q22^2)/8"
    )
    chart_map = system.maps["realization_pair"]
    ambient = simplify(const(2) * parse("x1*x2+y1*y2+z1*z2"))
    _canonical_identity_check(closed_H, ambient, chart_map, 0.0, tol=tol)
    return [NamedFunction("H", closed_H)]


# ---------------------------------------------------------------------------
# standard involutive families


def standard_family(system: SystemDefinition, *, depth: int | None = None) -> FunctionFamily:
    """The featured involutive family of a catalog system."""
    name = system.name
    if name in ("su2", "su2_chain"):
        base = get_system("su2", system.params)
        seeds = [base.casimirs[0], named("f", "z")]
        spec = ChainSpec("multiplication", base.maps["add"], base.casimirs)
        d = depth or (int(system.params.k_sites) if name == "su2_chain" else 2)
        return build_chain(seed_family(base.structure, seeds), spec, d)
    if name == "jordan_schwinger":
        T4 = system.maps["realization_pair"].source
        members = tuple(
            system.hamiltonians[h].as_named() for h in ("F1", "F2", "H", "G1")
        )
        return FunctionFamily(T4, members, ("pulled-back",) * 4)
    if name in ("sb2c_deformed", "triangular", "sb2c_classical_limit"):
        mult = system.maps.get("mult") or system.maps["add"]
        fam = seed_family(system.structure, list(system.casimirs))
        return extend_family(fam, mult, _factor_casimirs(system))
    if name == "sb2c_realization":
        deformed = get_system("sb2c_deformed", system.params)
        fam = standard_family(deformed)
        pair = system.maps["realization_pair"]
        members = tuple(
            NamedFunction(f"{m.name}@{pair.name}", pullback(m.body, pair)) for m in fam
        )
        return FunctionFamily(pair.source, members, ("pulled-back",) * len(members))
    raise CatalogError(f"no standard family for '{name}'")


def _factor_casimirs(system: SystemDefinition, factors: int = 2) -> list[NamedFunction]:
    out = []
    for i in range(1, factors + 1):
        for c in system.casimirs:
            out.append(
                NamedFunction(
                    f"{c.name}{i}",
                    append_suffix(c.body, system.structure.chart.names, str(i)),
                )
            )
    return out


def conserved_candidates(
    system: SystemDefinition, structure: PoissonStructure
) -> dict[str, NamedFunction]:
    """Functions worth monitoring along flows on the given chart."""
    out: dict[str, NamedFunction] = {}
    base_names = system.structure.chart.names
    if structure.chart.names == base_names:
        for c in system.casimirs:
            out[c.name] = c
    else:
        dim = structure.chart.dimension
        if dim % len(base_names) == 0:
            m = dim // len(base_names)
            expected = tuple(
                n + str(i) for i in range(1, m + 1) for n in base_names
            )
            if structure.chart.names == expected:
                for fn in _factor_casimirs(system, m):
                    out[fn.name] = fn
    for h in system.hamiltonians.values():
        if h.structure.chart.names == structure.chart.names:
            out[h.name] = h.as_named()
    return out


# ---------------------------------------------------------------------------
# restriction of the triangular brackets to the exponential surface


def triangular_restriction(
    p: ParameterSet | None = None,
    *,
    points: int = DEFAULT_POINTS,
    seed: int = DEFAULT_SEED,
) -> dict:
    """Brackets of (x, y, log(b/a)/k) pulled back along a=e^{-kz/2}, b=e^{kz/2}.

    Verifies numerically that the induced brackets close on (x, y, z) and
    fits the coefficients of the deformed three-coordinate family they
    form.  Returns the fitted coefficients and the fit residual.
    """
    p = p or ParameterSet()
    if p.k == 0:
        raise CatalogError("restriction requires k != 0")
    tri = get_system("triangular", p)
    M = tri.structure
    with_k = PoissonStructure(
        M.chart,
        {(M.chart.names[i], M.chart.names[j]): e for (i, j), e in M.upper_items()},
        {**M.parameters, "k": p.k},
        name=M.name,
    )
    zfun = parse("log(b/a)/k")
    fx, fy = Variable("x"), Variable("y")
    emb = {"a": parse("exp(-k*z/2)"), "b": parse("exp(k*z/2)")}
    checks = [
        ("gamma", bracket(fx, fy, with_k), parse("sinh(k*z)/k")),
        ("alpha", bracket(fy, zfun, with_k), Variable("x")),
        ("beta", bracket(zfun, fx, with_k), Variable("y")),
    ]
    params = {**with_k.parameters}
    pts = sample_points(("x", "y", "z"), points, seed=seed, parameters=params)
    from .expr import compile_scalar

    names = ["x", "y", "z"] + sorted(params)
    tail = [params[n] for n in sorted(params)]
    fitted: dict[str, float] = {}
    residual = 0.0
    for label, brack, basis in checks:
        restricted = simplify(substitute(brack, emb))
        leftover = free_variables(restricted) - {"x", "y", "z"} - set(params)
        if leftover:
            raise CatalogError(f"restriction does not close: {sorted(leftover)} remain")
        fv = compile_scalar(restricted, names)
        fb = compile_scalar(basis, names)
        num = den = 0.0
        samples = []
        for pt in pts:
            vals = [pt["x"], pt["y"], pt["z"]] + tail
            v, bb = fv(vals), fb(vals)
            samples.append((v, bb))
            num += v * bb
            den += bb * bb
        coef = num / den if den else 0.0
        fitted[label] = coef
        residual = max(residual, max(abs(v - coef * bb) for v, bb in samples))
    fitted["max_residual"] = residual
    return fitted
