"""Command-line front end.

Subcommands: ``check`` (structure/casimir/map/involution residuals),
``family`` (chain construction with involution report), ``simulate``
(trajectory CSV plus conservation JSON), ``export`` (system definition
JSON).  Exit codes: 0 success, 1 failed check or drift bound, 2 usage or
input errors.  Identical arguments (including seeds) produce
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import catalog
from .catalog import CatalogError, ParameterSet, get_system
from .construct import (
    ChainSpec,
    VerificationError,
    check_involution,
    seed_family,
    verify_poisson_map,
)
from .dynamics import conservation_report, hamiltonian_field, integrate, trajectory_to_csv
from .expr import ExpressionError, free_variables, parse
from .poisson import (
    DEFAULT_POINTS,
    DEFAULT_SEED,
    DEFAULT_TOLERANCE,
    NamedFunction,
    is_casimir,
    jacobi_residual,
    named,
    structure_from_json,
    structure_points,
)


class UsageError(Exception):
    pass


def _parse_params(pairs) -> ParameterSet:
    valid = {f.name: f.type for f in fields(ParameterSet)}
    overrides = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--param expects name=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in valid:
            raise UsageError(f"unknown parameter {key!r} (choose from {', '.join(sorted(valid))})")
        try:
            overrides[key] = int(raw) if key == "k_sites" else float(raw)
        except ValueError:
            raise UsageError(f"bad value for parameter {key!r}: {raw!r}") from None
    return ParameterSet(**overrides)


def _load_system(ref: str, params: ParameterSet):
    if ref in catalog.SYSTEM_NAMES:
        return get_system(ref, params)
    path = Path(ref)
    if path.exists():
        doc = json.loads(path.read_text())
        structure = structure_from_json(doc, name=path.stem)
        return catalog.SystemDefinition(
            path.stem, params, structure, (), {}, {}
        )
    raise UsageError(f"unknown system {ref!r} (not a catalog name or a readable file)")


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_seed(text: str) -> int:
    return int(text, 0)


def cmd_check(args) -> int:
    params = _parse_params(args.param)
    system = _load_system(args.system, params)
    points = structure_points(system.structure, args.points, seed=args.seed)
    tol = args.tol
    checks = []
    what = args.what

    if what in ("jacobi", "all"):
        residual = jacobi_residual(system.structure, points)
        checks.append({"what": "jacobi", "residual": residual, "passed": residual < tol})

    if what in ("casimir", "all"):
        targets: list[NamedFunction] = []
        if args.function:
            targets.append(named("user", args.function))
        elif system.casimirs:
            targets.extend(system.casimirs)
        elif what == "casimir":
            raise UsageError("no --function given and the system declares no casimirs")
        for fn in targets:
            residual = is_casimir(fn.body, system.structure, points)
            checks.append(
                {
                    "what": "casimir",
                    "function": str(fn.body),
                    "residual": residual,
                    "passed": residual < tol,
                }
            )

    if what in ("maps", "all"):
        requested = [args.map] if args.map else sorted(system.maps)
        for label in requested:
            if label not in system.maps:
                raise UsageError(f"unknown map {label!r} (has {sorted(system.maps)})")
            report = verify_poisson_map(system.maps[label], tol=tol)
            checks.append(
                {
                    "what": "map",
                    "map": label,
                    "residual": report.max_residual,
                    "passed": report.accepted,
                }
            )

    if what in ("involution", "all"):
        family = catalog.standard_family(system)
        fpts = structure_points(family.structure, args.points, seed=args.seed)
        report = check_involution(family, family.structure, fpts, tol=tol)
        checks.append(
            {
                "what": "involution",
                "family": family.names(),
                "residual": report.max_residual,
                "passed": report.accepted,
            }
        )

    passed = all(c["passed"] for c in checks)
    _emit(
        {
            "system": system.name,
            "points": args.points,
            "seed": args.seed,
            "tolerance": tol,
            "checks": checks,
            "passed": passed,
        },
        args.out,
    )
    return 0 if passed else 1


def cmd_family(args) -> int:
    params = _parse_params(args.param)
    system = _load_system(args.system, params)
    mult = system.maps.get("mult") or system.maps.get("add")
    if mult is None:
        raise UsageError(f"system '{system.name}' has no multiplication map")
    seeds = list(system.casimirs)
    for item in args.seed_function or ():
        if "=" not in item:
            raise UsageError(f"--seed-function expects name=EXPR, got {item!r}")
        name, _, text = item.partition("=")
        seeds.append(named(name.strip(), text))
    if not seeds:
        raise UsageError("empty seed family: give --seed-function")
    spec = ChainSpec("multiplication", mult, system.casimirs)
    family = catalog.build_chain(
        seed_family(system.structure, seeds), spec, args.depth, tol=args.tol
    )
    points = structure_points(family.structure, args.points, seed=args.seed)
    report = check_involution(family, family.structure, points, tol=args.tol)
    doc = family.to_json()
    doc["system"] = system.name
    doc["depth"] = args.depth
    doc["involution"] = report.to_json()
    _emit(doc, args.out)
    return 0 if report.accepted else 1


def _resolve_hamiltonian(system, text: str):
    if text in system.hamiltonians:
        return system.hamiltonians[text]
    body = parse(text)
    free = free_variables(body)
    candidates = [system.structure]
    candidates += [h.structure for h in system.hamiltonians.values()]
    candidates += [m.source for m in system.maps.values()]
    for s in candidates:
        if free <= set(s.chart.names) | set(s.parameters):
            return catalog.Hamiltonian("user", body, s)
    raise UsageError(
        f"cannot place hamiltonian over any known chart (free variables {sorted(free)})"
    )


def cmd_simulate(args) -> int:
    params = _parse_params(args.param)
    system = _load_system(args.system, params)
    H = _resolve_hamiltonian(system, args.hamiltonian)
    x0 = {}
    for item in args.x0.split(","):
        if "=" not in item:
            raise UsageError(f"--x0 expects name=value pairs, got {item!r}")
        name, _, raw = item.partition("=")
        try:
            x0[name.strip()] = float(raw)
        except ValueError:
            raise UsageError(f"bad value in --x0: {item!r}") from None

    candidates = catalog.conserved_candidates(system, H.structure)
    if H.name not in candidates:
        candidates[H.name] = H.as_named()
    if args.watch:
        watch = []
        for label in args.watch.split(","):
            label = label.strip()
            if label not in candidates:
                raise UsageError(
                    f"unknown watch function {label!r} (has {sorted(candidates)})"
                )
            watch.append(candidates[label])
    else:
        watch = [candidates[k] for k in sorted(candidates)]

    field = hamiltonian_field(H.body, H.structure)
    try:
        trajectory = integrate(
            field,
            x0,
            args.t_end,
            args.step,
            args.method,
            rtol=args.rtol,
            atol=args.atol,
            thin=args.thin,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).write_text(trajectory_to_csv(trajectory))
    report = conservation_report(trajectory, watch, H.structure.parameters)
    drift_ok = (
        trajectory.completed
        and not report.failures
        and all(d < args.drift_bound for d in report.drifts.values())
    )
    doc = {
        "system": system.name,
        "hamiltonian": H.name,
        "method": trajectory.method,
        "step": trajectory.step,
        "steps_taken": trajectory.steps_taken,
        "completed": trajectory.completed,
        "error": trajectory.error,
        "drift_bound": args.drift_bound,
        "drifts": report.to_json(),
        "passed": drift_ok,
    }
    report_path = args.report or str(Path(args.out).with_suffix("")) + ".conservation.json"
    _emit(doc, report_path)
    return 0 if drift_ok else 1


def cmd_export(args) -> int:
    params = _parse_params(args.param)
    system = _load_system(args.system, params)
    _emit(system.to_json(), args.out)
    return 0


def _add_common(sp):
    sp.add_argument("--system", required=True, help="catalog name or system JSON path")
    sp.add_argument("--param", action="append", metavar="NAME=VALUE")
    sp.add_argument("--points", type=int, default=DEFAULT_POINTS)
    sp.add_argument("--seed", type=_parse_seed, default=DEFAULT_SEED)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    sp.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="poischain",
        description="Verify Poisson structures, build involutive families, integrate flows.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("check", help="run structural residual checks")
    _add_common(sp)
    sp.add_argument(
        "--what",
        choices=("jacobi", "casimir", "maps", "involution", "all"),
        default="all",
    )
    sp.add_argument("--function", help="expression for the casimir check")
    sp.add_argument("--map", help="restrict the map check to one named map")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("family", help="build a chain family and verify involution")
    _add_common(sp)
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--seed-function", action="append", metavar="NAME=EXPR")
    sp.set_defaults(func=cmd_family)

    sp = sub.add_parser("simulate", help="integrate a Hamiltonian flow")
    sp.add_argument("--system", required=True)
    sp.add_argument("--param", action="append", metavar="NAME=VALUE")
    sp.add_argument("--hamiltonian", required=True, help="catalog name or expression")
    sp.add_argument("--x0", required=True, help="comma-separated name=value pairs")
    sp.add_argument("--t-end", type=float, required=True, dest="t_end")
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--method", choices=("rk4", "rkf45"), default="rk4")
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("--thin", type=int, default=1)
    sp.add_argument("--watch", help="comma-separated function names to monitor")
    sp.add_argument("--drift-bound", type=float, default=1e-6, dest="drift_bound")
    sp.add_argument("--out", required=True, help="trajectory CSV path")
    sp.add_argument("--report", help="conservation JSON path")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export", help="emit the system definition JSON")
    _add_common(sp)
    sp.set_defaults(func=cmd_export)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CatalogError, ExpressionError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
