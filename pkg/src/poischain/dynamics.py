"""Hamiltonian vector fields, fixed- and adaptive-step integration,
and conservation monitoring along trajectories.

Sign convention: the field generated by H has components
``Gamma^j = sum_i L^{ij} d_i H``.  No structure-preserving integrator is
used; first-integral drift is measured, not enforced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .expr import (
    EvaluationError,
    Expression,
    compile_vector,
    compile_scalar,
    const,
    differentiate,
    is_literal_zero,
    simplify,
    substitute,
)
from .poisson import Chart, NamedFunction, PoissonStructure, check_function_symbols


@dataclass(eq=False)
class VectorFieldSpec:
    chart: Chart
    components: dict[str, Expression]
    parameters: dict[str, float] = field(default_factory=dict)

    def component_list(self) -> list[Expression]:
        return [self.components[n] for n in self.chart.names]


def hamiltonian_field(H: Expression, structure: PoissonStructure) -> VectorFieldSpec:
    """Vector field of H through the structure, components simplified."""
    check_function_symbols(H, structure)
    names = structure.chart.names
    comps: dict[str, Expression] = {}
    for j, xj in enumerate(names):
        total: Expression = const(0)
        for i, xi in enumerate(names):
            if i == j:
                continue
            lam = structure.component(i, j)
            if is_literal_zero(lam):
                continue
            total = total + lam * differentiate(H, xi)
        comps[xj] = simplify(total)
    return VectorFieldSpec(structure.chart, comps, dict(structure.parameters))


@dataclass(eq=False)
class Trajectory:
    chart: Chart
    times: list[float]
    states: list[tuple[float, ...]]
    method: str
    step: float
    steps_taken: int
    completed: bool = True
    error: str | None = None

    def state_points(self):
        names = self.chart.names
        for t, s in zip(self.times, self.states):
            yield t, dict(zip(names, s))

    def initial_point(self) -> dict[str, float]:
        return dict(zip(self.chart.names, self.states[0]))


class StepUnderflowError(Exception):
    pass


def _compiled_field(v: VectorFieldSpec):
    comps = [substitute(e, v.parameters) for e in v.component_list()]
    return compile_vector(comps, v.chart.names)


def integrate(
    v: VectorFieldSpec,
    x0: Mapping[str, float],
    t_end: float,
    h: float,
    method: str = "rk4",
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    thin: int = 1,
) -> Trajectory:
    """Integrate from t=0 to t_end.

    rk4 takes ceil(t_end/h) equal steps; rkf45 adapts its step from the
    initial value h using the embedded 4(5) error estimate against
    rtol/atol.  On a mid-trajectory domain violation the partial
    trajectory is returned with `completed=False` and the error recorded.
    Every step is sampled (accepted steps for rkf45); `thin` keeps every
    thin-th sample plus the final one.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    missing = [n for n in v.chart.names if n not in x0]
    if missing:
        raise ValueError(f"initial point misses coordinates {missing}")
    if method not in ("rk4", "rkf45"):
        raise ValueError(f"unknown method {method!r}")
    f = _compiled_field(v)
    y = [float(x0[n]) for n in v.chart.names]
    if method == "rk4":
        return _integrate_rk4(v.chart, f, y, t_end, h, thin)
    return _integrate_rkf45(v.chart, f, y, t_end, h, rtol, atol, thin)


def _integrate_rk4(chart, f, y, t_end, h, thin):
    n_steps = math.ceil(t_end / h)
    hh = t_end / n_steps
    dim = len(y)
    times = [0.0]
    states = [tuple(y)]
    error = None
    taken = 0
    for s in range(n_steps):
        try:
            k1 = f(y)
            y2 = [y[i] + 0.5 * hh * k1[i] for i in range(dim)]
            k2 = f(y2)
            y3 = [y[i] + 0.5 * hh * k2[i] for i in range(dim)]
            k3 = f(y3)
            y4 = [y[i] + hh * k3[i] for i in range(dim)]
            k4 = f(y4)
            y = [
                y[i] + hh / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                for i in range(dim)
            ]
        except (ArithmeticError, ValueError) as exc:
            error = f"domain violation at t={times[-1]:.6g}: {exc}"
            break
        if not all(math.isfinite(c) for c in y):
            error = f"state left the finite domain at t={times[-1]:.6g}"
            break
        taken += 1
        times.append((s + 1) * hh)
        states.append(tuple(y))
    tr = Trajectory(chart, times, states, "rk4", hh, taken, error is None, error)
    return _thin(tr, thin)


_RKF_A = (
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_RKF_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_RKF_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


def _integrate_rkf45(chart, f, y, t_end, h0, rtol, atol, thin):
    dim = len(y)
    t = 0.0
    h = min(h0, t_end)
    times = [0.0]
    states = [tuple(y)]
    error = None
    taken = 0
    h_min = 1e-14 * max(1.0, t_end)
    while t < t_end:
        if h < h_min:
            error = f"step underflow at t={t:.6g} (h={h:.3e})"
            break
        h = min(h, t_end - t)
        try:
            k = [f(y)]
            for row in _RKF_A:
                yk = [
                    y[i] + h * sum(a * k[s][i] for s, a in enumerate(row))
                    for i in range(dim)
                ]
                k.append(f(yk))
            y4 = [
                y[i] + h * sum(b * k[s][i] for s, b in enumerate(_RKF_B4))
                for i in range(dim)
            ]
            y5 = [
                y[i] + h * sum(b * k[s][i] for s, b in enumerate(_RKF_B5))
                for i in range(dim)
            ]
        except (ArithmeticError, ValueError) as exc:
            error = f"domain violation at t={t:.6g}: {exc}"
            break
        if not all(math.isfinite(c) for c in y4):
            error = f"state left the finite domain at t={t:.6g}"
            break
        err = 0.0
        for i in range(dim):
            scale = atol + rtol * max(abs(y[i]), abs(y4[i]))
            err = max(err, abs(y5[i] - y4[i]) / scale)
        if err <= 1.0:
            t += h
            y = y4
            taken += 1
            times.append(t)
            states.append(tuple(y))
        grow = 0.9 * (err ** -0.2) if err > 0.0 else 5.0
        h = h * min(5.0, max(0.2, grow))
    tr = Trajectory(chart, times, states, "rkf45", h0, taken, error is None, error)
    return _thin(tr, thin)


def _thin(tr: Trajectory, thin: int) -> Trajectory:
    if thin <= 1 or len(tr.times) < 3:
        return tr
    keep = list(range(0, len(tr.times), thin))
    if keep[-1] != len(tr.times) - 1:
        keep.append(len(tr.times) - 1)
    tr.times = [tr.times[i] for i in keep]
    tr.states = [tr.states[i] for i in keep]
    return tr


@dataclass(eq=False)
class ConservationReport:
    """Per-function max relative drift along a trajectory."""

    drifts: dict[str, float]
    failures: dict[str, str] = field(default_factory=dict)

    def max_drift(self) -> float:
        return max(self.drifts.values(), default=0.0)

    def to_json(self) -> dict:
        out: dict = {name: drift for name, drift in sorted(self.drifts.items())}
        for name in sorted(self.failures):
            out[name] = None
        return out


def conservation_report(
    tr: Trajectory,
    functions: Sequence[NamedFunction],
    parameters: Mapping[str, float] | None = None,
) -> ConservationReport:
    """max_t |F(x(t)) - F(x(0))| / (1 + |F(x(0))|) for each function."""
    params = dict(parameters or {})
    drifts: dict[str, float] = {}
    failures: dict[str, str] = {}
    for fn in functions:
        body = substitute(fn.body, params) if params else fn.body
        try:
            compiled = compile_scalar(body, tr.chart.names)
            f0 = compiled(tr.states[0])
            worst = 0.0
            for s in tr.states[1:]:
                worst = max(worst, abs(compiled(s) - f0))
            drifts[fn.name] = worst / (1.0 + abs(f0))
        except (ArithmeticError, ValueError, EvaluationError) as exc:
            failures[fn.name] = str(exc)
    return ConservationReport(drifts, failures)


def trajectory_to_csv(tr: Trajectory) -> str:
    """Header `t,<coords>`; one row per sample, 17 significant digits."""
    lines = ["t," + ",".join(tr.chart.names)]
    for t, s in zip(tr.times, tr.states):
        lines.append(",".join(f"{v:.17g}" for v in (t, *s)))
    return "\n".join(lines) + "\n"
