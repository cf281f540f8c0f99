"""Symbolic scalar expressions over named real coordinates.

The language is deliberately small: floating-point constants, named
variables, the binary operators ``+ - * / ^`` and a fixed set of unary
functions.  Expressions are immutable trees and every operation here is
pure, so they can be shared freely across threads.

The printed form (:func:`to_string`, also ``str(e)``) is the interchange
format for the rest of the package: minimal parentheses, ``^`` for
powers.  It round-trips through :func:`parse` with bit-identical
evaluation at every point.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

Number = Union[int, float]
Point = Mapping[str, float]

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "tanh", "exp", "log", "sqrt")

_MATH_FUNCS = {name: getattr(math, name) for name in FUNCTIONS}


class ExpressionError(Exception):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownFunctionError(ParseError):
    pass


class EvaluationError(ExpressionError):
    pass


class UnboundVariableError(EvaluationError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class DomainError(EvaluationError):
    """Evaluation left the real domain; reports the offending subterm."""

    def __init__(self, message: str, subterm: "Expression"):
        super().__init__(f"{message} in '{to_string(subterm)}'")
        self.subterm = subterm


@dataclass(frozen=True, slots=True)
class Expression:
    def __add__(self, other):
        return Binary("+", self, _coerce(other))

    def __radd__(self, other):
        return Binary("+", _coerce(other), self)

    def __sub__(self, other):
        return Binary("-", self, _coerce(other))

    def __rsub__(self, other):
        return Binary("-", _coerce(other), self)

    def __mul__(self, other):
        return Binary("*", self, _coerce(other))

    def __rmul__(self, other):
        return Binary("*", _coerce(other), self)

    def __truediv__(self, other):
        return Binary("/", self, _coerce(other))

    def __rtruediv__(self, other):
        return Binary("/", _coerce(other), self)

    def __pow__(self, other):
        return Binary("^", self, _coerce(other))

    def __rpow__(self, other):
        return Binary("^", _coerce(other), self)

    def __neg__(self):
        return Unary("neg", self)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Constant(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Variable(Expression):
    name: str


@dataclass(frozen=True, slots=True)
class Unary(Expression):
    op: str  # 'neg' or one of FUNCTIONS
    arg: Expression


@dataclass(frozen=True, slots=True)
class Binary(Expression):
    op: str  # + - * / ^
    left: Expression
    right: Expression


def const(v: Number) -> Constant:
    v = float(v)
    if v == 0.0:
        v = 0.0  # normalize -0.0
    return Constant(v)


def var(name: str) -> Variable:
    return Variable(name)


def _coerce(v) -> Expression:
    if isinstance(v, Expression):
        return v
    if isinstance(v, (int, float)):
        return const(v)
    raise TypeError(f"cannot use {type(v).__name__} as an expression")


def func(op: str, arg) -> Unary:
    if op not in FUNCTIONS:
        raise ValueError(f"unknown function '{op}'")
    return Unary(op, _coerce(arg))


def sin(e):
    return func("sin", e)


def cos(e):
    return func("cos", e)


def sinh(e):
    return func("sinh", e)


def cosh(e):
    return func("cosh", e)


def tanh(e):
    return func("tanh", e)


def exp(e):
    return func("exp", e)


def log(e):
    return func("log", e)


def sqrt(e):
    return func("sqrt", e)


# ---------------------------------------------------------------------------
# traversal helpers


def free_variables(e: Expression) -> frozenset[str]:
    match e:
        case Constant():
            return frozenset()
        case Variable(name=n):
            return frozenset((n,))
        case Unary(arg=a):
            return free_variables(a)
        case Binary(left=l, right=r):
            return free_variables(l) | free_variables(r)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expression, mapping: Mapping[str, Expression | Number]) -> Expression:
    """Replace variables by expressions; unmapped variables are kept."""
    subs = {n: _coerce(v) for n, v in mapping.items()}

    def walk(node):
        match node:
            case Constant():
                return node
            case Variable(name=n):
                return subs.get(n, node)
            case Unary(op=op, arg=a):
                return Unary(op, walk(a))
            case Binary(op=op, left=l, right=r):
                return Binary(op, walk(l), walk(r))
        raise TypeError(f"not an expression: {node!r}")

    return walk(e)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expression, point: Point) -> float:
    """Evaluate at a point binding every free variable, in IEEE doubles.

    Raises :class:`UnboundVariableError` for missing bindings and
    :class:`DomainError` when a subterm leaves the real domain (division
    by zero, sqrt/log out of range, fractional power of a negative base).
    """
    match e:
        case Constant(value=v):
            return v
        case Variable(name=n):
            try:
                return float(point[n])
            except KeyError:
                raise UnboundVariableError(n) from None
        case Unary(op="neg", arg=a):
            return -evaluate(a, point)
        case Unary(op=op, arg=a):
            x = evaluate(a, point)
            try:
                return _MATH_FUNCS[op](x)
            except ValueError:
                raise DomainError(f"{op} argument out of range", e) from None
            except OverflowError:
                raise DomainError(f"{op} overflow", e) from None
        case Binary(op=op, left=l, right=r):
            a = evaluate(l, point)
            b = evaluate(r, point)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if b == 0.0:
                    raise DomainError("division by zero", e)
                return a / b
            if op == "^":
                try:
                    return math.pow(a, b)
                except ValueError:
                    raise DomainError("power outside the real domain", e) from None
                except OverflowError:
                    raise DomainError("power overflow", e) from None
    raise TypeError(f"not an expression: {e!r}")


def compile_scalar(e: Expression, names: Sequence[str]) -> Callable[[Sequence[float]], float]:
    """Compile to a fast callable taking coordinate values in `names` order.

    The generated code performs exactly the operations of :func:`evaluate`
    (same libm calls, same order), so results are bit-identical; domain
    violations surface as ValueError/ZeroDivisionError/OverflowError
    instead of :class:`DomainError`.
    """
    return compile_vector((e,), names, _scalar=True)


def compile_vector(exprs, names: Sequence[str], _scalar: bool = False):
    index: dict[str, int] = {}
    for i, n in enumerate(names):
        if n in index:
            raise ValueError(f"duplicate name '{n}'")
        index[n] = i
    bodies = [_pycode(e, index) for e in exprs]
    env = {"pow": math.pow, **_MATH_FUNCS}
    if _scalar:
        src = f"lambda v: {bodies[0]}"
    else:
        src = f"lambda v: ({', '.join(bodies)}{',' if len(bodies) == 1 else ''})"
    return eval(src, env)  # noqa: S307 - code generated from our own AST


def _pycode(e: Expression, index: Mapping[str, int]) -> str:
    match e:
        case Constant(value=v):
            return repr(v)
        case Variable(name=n):
            try:
                return f"v[{index[n]}]"
            except KeyError:
                raise UnboundVariableError(n) from None
        case Unary(op="neg", arg=a):
            return f"(-{_pycode(a, index)})"
        case Unary(op=op, arg=a):
            return f"{op}({_pycode(a, index)})"
        case Binary(op="^", left=l, right=r):
            return f"pow({_pycode(l, index)}, {_pycode(r, index)})"
        case Binary(op=op, left=l, right=r):
            return f"({_pycode(l, index)}{op}{_pycode(r, index)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expression, v: str) -> Expression:
    """Exact partial derivative with respect to coordinate `v`.

    Every other variable is treated as a constant.  The result is
    returned in simplified form.
    """
    return simplify(_diff(e, v))


def _diff(e: Expression, v: str) -> Expression:
    match e:
        case Constant():
            return const(0)
        case Variable(name=n):
            return const(1 if n == v else 0)
        case Unary(op="neg", arg=a):
            return Unary("neg", _diff(a, v))
        case Unary(op=op, arg=a):
            da = _diff(a, v)
            if op == "sin":
                return cos(a) * da
            if op == "cos":
                return Unary("neg", sin(a)) * da
            if op == "sinh":
                return cosh(a) * da
            if op == "cosh":
                return sinh(a) * da
            if op == "tanh":
                return (const(1) - tanh(a) ** 2) * da
            if op == "exp":
                return e * da
            if op == "log":
                return da / a
            if op == "sqrt":
                return da / (const(2) * e)
        case Binary(op=op, left=l, right=r):
            dl = _diff(l, v)
            dr = _diff(r, v)
            if op == "+":
                return dl + dr
            if op == "-":
                return dl - dr
            if op == "*":
                return dl * r + l * dr
            if op == "/":
                return (dl * r - l * dr) / (r ** 2)
            if op == "^":
                if isinstance(r, Constant):
                    return r * l ** const(r.value - 1.0) * dl
                return e * (dr * log(l) + r * dl / l)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# printing

_LEVEL_ADD = 10
_LEVEL_NEG = 15
_LEVEL_MUL = 20
_LEVEL_POW = 30
_LEVEL_ATOM = 40


def _level(e: Expression) -> int:
    match e:
        case Constant(value=v):
            return _LEVEL_NEG if v < 0 else _LEVEL_ATOM
        case Variable():
            return _LEVEL_ATOM
        case Unary(op="neg"):
            return _LEVEL_NEG
        case Unary():
            return _LEVEL_ATOM
        case Binary(op=op):
            if op in "+-":
                return _LEVEL_ADD
            if op in "*/":
                return _LEVEL_MUL
            return _LEVEL_POW
    raise TypeError(f"not an expression: {e!r}")


def format_number(v: float) -> str:
    if v == math.floor(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _wrap(e: Expression, need: int) -> str:
    s = to_string(e)
    return f"({s})" if _level(e) < need else s


def to_string(e: Expression) -> str:
    """Render with minimal parentheses; reparses to an evaluation-identical tree."""
    match e:
        case Constant(value=v):
            return format_number(v)
        case Variable(name=n):
            return n
        case Unary(op="neg", arg=a):
            return "-" + _wrap(a, 25)
        case Unary(op=op, arg=a):
            return f"{op}({to_string(a)})"
        case Binary(op=op, left=l, right=r):
            if op in "+-":
                return _wrap(l, 0) + op + _wrap(r, _LEVEL_ADD + 1)
            if op in "*/":
                return _wrap(l, _LEVEL_NEG) + op + _wrap(r, _LEVEL_MUL + 1)
            return _wrap(l, _LEVEL_POW + 1) + op + _wrap(r, 25)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept_op(self, *ops: str):
        kind, text, _ = self.peek()
        if kind == "op" and text in ops:
            return self.advance()
        return None

    def parse(self) -> Expression:
        e = self.additive()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos)
        return e

    def additive(self) -> Expression:
        e = self.multiplicative()
        while (tok := self.accept_op("+", "-")) is not None:
            e = Binary(tok[1], e, self.multiplicative())
        return e

    def multiplicative(self) -> Expression:
        e = self.unary()
        while (tok := self.accept_op("*", "/")) is not None:
            e = Binary(tok[1], e, self.unary())
        return e

    def unary(self) -> Expression:
        if self.accept_op("-"):
            inner = self.unary()
            if isinstance(inner, Constant):
                return const(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.accept_op("^"):
            return Binary("^", base, self.unary())  # right-associative
        return base

    def atom(self) -> Expression:
        kind, text, pos = self.advance()
        if kind == "num":
            return const(float(text))
        if kind == "name":
            if self.accept_op("("):
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function '{text}'", pos)
                arg = self.additive()
                k2, t2, p2 = self.advance()
                if (k2, t2) != ("op", ")"):
                    if (k2, t2) == ("op", ","):
                        raise ParseError(f"'{text}' takes a single argument", p2)
                    raise ParseError("expected ')'", p2)
                return Unary(text, arg)
            return Variable(text)
        if (kind, text) == ("op", "("):
            e = self.additive()
            k2, t2, p2 = self.advance()
            if (k2, t2) != ("op", ")"):
                raise ParseError("expected ')'", p2)
            return e
        raise ParseError(f"unexpected {text!r}" if text else "unexpected end of input", pos)


def parse(text: str) -> Expression:
    """Parse infix syntax with standard precedence; ``^`` is right-associative."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# simplification
#
# Normal form: a sum of terms, each a float coefficient times a product of
# canonical atomic factors with float exponents.  Factor bases are kept
# sorted by a total sort key (operator rank, then payload, then children),
# so syntactically identical terms collide and cancel exactly.  Powers of
# sums are NOT expanded and no trigonometric identities are applied.

_Factors = tuple  # tuple[tuple[Expression, float], ...]


class _FoldOverflow(ExpressionError):
    pass


def sort_key(e: Expression):
    match e:
        case Constant(value=v):
            return (0, repr(v), ())
        case Variable(name=n):
            return (1, n, ())
        case Unary(op=op, arg=a):
            return (2, op, (sort_key(a),))
        case Binary(op=op, left=l, right=r):
            return (3, op, (sort_key(l), sort_key(r)))
    raise TypeError(f"not an expression: {e!r}")


def simplify(e: Expression) -> Expression:
    """Evaluation-equivalent canonical form.

    Performs constant folding, 0/1 identities, collection of identical
    additive terms and multiplicative factors, and deterministic term
    ordering.  Guaranteed to take any difference of syntactically equal
    products to the literal constant 0.
    """
    try:
        return _rebuild(_norm(e))
    except _FoldOverflow:
        return e


def _add_term(acc: dict, factors: _Factors, coeff: float) -> None:
    if coeff == 0.0:
        return
    if not math.isfinite(coeff):
        raise _FoldOverflow()
    new = acc.get(factors, 0.0) + coeff
    if new == 0.0:
        acc.pop(factors, None)
    else:
        acc[factors] = new


def _merge_factors(fa: _Factors, fb: _Factors) -> _Factors:
    out = []
    i = j = 0
    while i < len(fa) and j < len(fb):
        ka, kb = sort_key(fa[i][0]), sort_key(fb[j][0])
        if ka == kb:
            exp_sum = fa[i][1] + fb[j][1]
            if exp_sum != 0.0:
                out.append((fa[i][0], exp_sum))
            i += 1
            j += 1
        elif ka < kb:
            out.append(fa[i])
            i += 1
        else:
            out.append(fb[j])
            j += 1
    out.extend(fa[i:])
    out.extend(fb[j:])
    return tuple(out)


def _mul_norms(na: dict, nb: dict) -> dict:
    out: dict = {}
    for fa, ca in na.items():
        for fb, cb in nb.items():
            _add_term(out, _merge_factors(fa, fb), ca * cb)
    return out


def _const_value(n: dict):
    if not n:
        return 0.0
    if len(n) == 1 and () in n:
        return n[()]
    return None


def _atom(e: Expression, exponent: float = 1.0) -> dict:
    return {((e, exponent),): 1.0}


def _norm(e: Expression) -> dict:
    match e:
        case Constant(value=v):
            return {(): v} if v != 0.0 else {}
        case Variable():
            return _atom(e)
        case Unary(op="neg", arg=a):
            return {f: -c for f, c in _norm(a).items()}
        case Unary(op=op, arg=a):
            na = _norm(a)
            cv = _const_value(na)
            if cv is not None:
                try:
                    folded = _MATH_FUNCS[op](cv)
                except (ValueError, OverflowError):
                    folded = None
                if folded is not None and math.isfinite(folded):
                    return {(): folded} if folded != 0.0 else {}
            return _atom(Unary(op, _rebuild(na)))
        case Binary(op="+", left=l, right=r):
            out = dict(_norm(l))
            for f, c in _norm(r).items():
                _add_term(out, f, c)
            return out
        case Binary(op="-", left=l, right=r):
            out = dict(_norm(l))
            for f, c in _norm(r).items():
                _add_term(out, f, -c)
            return out
        case Binary(op="*", left=l, right=r):
            return _mul_norms(_norm(l), _norm(r))
        case Binary(op="/", left=l, right=r):
            return _div_norm(_norm(l), _norm(r))
        case Binary(op="^", left=l, right=r):
            return _pow_norm(_norm(l), _norm(r))
    raise TypeError(f"not an expression: {e!r}")


def _div_norm(na: dict, nb: dict) -> dict:
    cb = _const_value(nb)
    if cb is not None:
        if cb == 0.0:
            # keep the literal division so evaluation still reports it
            return _atom(Binary("/", _rebuild(na), const(0))) if na else _atom(Binary("/", const(0), const(0)))
        out: dict = {}
        for f, c in na.items():
            _add_term(out, f, c / cb)
        return out
    if len(nb) == 1:
        (fb, cbb), = nb.items()
        inv = tuple((b, -x) for b, x in fb)
        out = {}
        for f, c in na.items():
            _add_term(out, _merge_factors(f, inv), c / cbb)
        return out
    return _mul_norms(na, _atom(_rebuild(nb), -1.0))


def _pow_norm(nb_base: dict, nb_exp: dict) -> dict:
    p = _const_value(nb_exp)
    if p is None:
        return _atom(Binary("^", _rebuild(nb_base), _rebuild(nb_exp)))
    if p == 0.0:
        return {(): 1.0}
    if p == 1.0:
        return dict(nb_base)
    if not nb_base:  # base is the literal 0
        if p > 0:
            return {}
        return _atom(Binary("^", const(0), const(p)))
    cb = _const_value(nb_base)
    if cb is not None:
        try:
            folded = math.pow(cb, p)
        except (ValueError, OverflowError):
            folded = None
        if folded is not None and math.isfinite(folded):
            return {(): folded} if folded != 0.0 else {}
        return _atom(Binary("^", const(cb), const(p)))
    if float(p).is_integer() and len(nb_base) == 1:
        (f, c), = nb_base.items()
        try:
            c2 = c ** p
        except OverflowError:
            c2 = math.inf
        if math.isfinite(c2):
            newf = tuple((b, x * p) for b, x in f if x * p != 0.0)
            return {newf: c2}
    if len(nb_base) == 1:
        (f, c), = nb_base.items()
        if c == 1.0 and len(f) == 1 and f[0][1] == 1.0:
            return _atom(f[0][0], p)
    return _atom(_rebuild(nb_base), p)


def _factors_key(f: _Factors):
    return tuple((sort_key(b), x) for b, x in f)


def _pow_node(base: Expression, exponent: float) -> Expression:
    if exponent == 1.0:
        return base
    return Binary("^", base, const(exponent))


def _fold_mul(parts) -> Expression:
    e = parts[0]
    for p in parts[1:]:
        e = Binary("*", e, p)
    return e


def _build_term(coeff: float, factors: _Factors) -> Expression:
    num = [(b, x) for b, x in factors if x > 0]
    den = [(b, -x) for b, x in factors if x < 0]
    parts = []
    if coeff != 1.0 or not num:
        parts.append(const(coeff))
    parts.extend(_pow_node(b, x) for b, x in num)
    numerator = _fold_mul(parts)
    if den:
        return Binary("/", numerator, _fold_mul([_pow_node(b, x) for b, x in den]))
    return numerator


def _rebuild(n: dict) -> Expression:
    if not n:
        return const(0)
    terms = sorted(n.items(), key=lambda kv: _factors_key(kv[0]))
    (f0, c0) = terms[0]
    if c0 < 0 and c0 == -1.0 and f0:
        expr: Expression = Unary("neg", _build_term(1.0, f0))
    else:
        expr = _build_term(c0, f0)
    for f, c in terms[1:]:
        expr = Binary("-" if c < 0 else "+", expr, _build_term(abs(c), f))
    return expr


def is_literal_zero(e: Expression) -> bool:
    return isinstance(e, Constant) and e.value == 0.0
