"""Shared numeric helpers for the test suite."""
import math

from poischain.expr import EvaluationError, evaluate, simplify, to_string
from poischain.poisson import sample_points


def eval_at(expr, point, parameters=None):
    merged = {**(parameters or {}), **point}
    return evaluate(expr, merged)


def max_abs(expr, points, parameters=None):
    worst = 0.0
    for pt in points:
        worst = max(worst, abs(eval_at(expr, pt, parameters)))
    return worst


def central_difference(expr, point, name, parameters=None, h=1e-6):
    up = dict(point)
    dn = dict(point)
    up[name] = point[name] + h
    dn[name] = point[name] - h
    return (eval_at(expr, up, parameters) - eval_at(expr, dn, parameters)) / (2 * h)


def canonical(expr):
    """Printed canonical form, for symbolic-equality assertions."""
    return to_string(simplify(expr))


def term_scale(expr, point, parameters=None):
    """Largest |additive term| of the top-level sum at the point.

    Reassociating a sum moves its value by a few ulps of this scale, which
    is the right yardstick for simplify's evaluation preservation.
    """
    from poischain.expr import Binary, Unary

    merged = {**(parameters or {}), **point}
    worst = 0.0
    node = expr
    while isinstance(node, Binary) and node.op in "+-":
        worst = max(worst, abs(evaluate(node.right, merged)))
        node = node.left
    return max(worst, abs(evaluate(node, merged)))


def ulps_apart(a, b, scale=None):
    if a == b:
        return 0.0
    yard = max(abs(a), abs(b), scale or 0.0)
    return abs(a - b) / math.ulp(yard)


def domain_points(chart, n=100, *, parameters=None, require=(), seed=0xC0FFEE, bounds=None):
    return sample_points(
        chart, n, seed=seed, parameters=parameters, require=require, bounds=bounds
    )


def catalog_expressions():
    """Every expression shipped by the catalog with its chart and parameters."""
    import poischain as pc

    out = []
    for name in pc.catalog.SYSTEM_NAMES:
        s = pc.get_system(name)
        params = dict(s.structure.parameters)
        chart = s.structure.chart.names
        for _, e in s.structure.upper_items():
            out.append((f"{name} bivector", e, chart, params))
        for c in s.casimirs:
            out.append((f"{name} {c.name}", c.body, chart, params))
        for m in s.maps.values():
            mp = m.merged_parameters()
            for comp in m.component_list():
                out.append((f"{name} map {m.name}", comp, m.source.chart.names, mp))
        for h in s.hamiltonians.values():
            hp = {**h.structure.parameters, **params}
            out.append((f"{name} {h.name}", h.body, h.structure.chart.names, hp))
    return out
