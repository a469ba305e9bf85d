"""Declarative constraints over an imputed window.

Two families: measurement constraints are equalities forcing the imputed
series, when re-coarsened, to reproduce the observed coarse values; and
operational constraints are inequalities (or guarded forms) encoding how
signals relate physically -- e.g. a work-conserving scheduler bounds the
number of non-empty milliseconds by the packets-sent count.

Every expression can be evaluated two ways: exactly (hard indicator steps;
used for violation reporting and by the repair solver) or smoothly
(indicators replaced by ``0.5 * (1 + tanh(k * v))``; differentiable, used
inside the training loss).  Both evaluators share one tree walk and work on
numpy arrays or torch tensors, batched or single-window.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DataError
from .series import CoarseBundle, FineSeries, positive_threshold

FORMS = ("eq", "ineq")
SCOPES = ("interval", "window")
TAGS = ("measurement", "operational")

DEFAULT_SHARPNESS = 50.0


def step_exact(v):
    """Hard unit step 1[v > 0]."""
    if hasattr(v, "detach"):
        return (v > 0).to(v.dtype)
    return (np.asarray(v) > 0).astype(np.float64)


def step_smooth(v, sharpness: float = DEFAULT_SHARPNESS):
    """Smoothed unit step 0.5*(1 + tanh(k*v)); equals 0.5 at v = 0."""
    if sharpness <= 0:
        raise DataError(f"sharpness must be positive, got {sharpness}")
    if hasattr(v, "detach"):
        import torch

        return 0.5 * (1.0 + torch.tanh(sharpness * v))
    return 0.5 * (1.0 + np.tanh(sharpness * np.asarray(v, dtype=np.float64)))


# --------------------------------------------------------------------------
# evaluation context


def _is_torch(x) -> bool:
    return hasattr(x, "detach")


def _amax(x, axis):
    return x.amax(dim=axis) if _is_torch(x) else np.amax(x, axis=axis)


def _amin(x, axis):
    return x.amin(dim=axis) if _is_torch(x) else np.amin(x, axis=axis)


def _sum(x, axis):
    return x.sum(dim=axis) if _is_torch(x) else np.sum(x, axis=axis)


def _mean(x, axis):
    return x.mean(dim=axis) if _is_torch(x) else np.mean(x, axis=axis)


def _where(cond, a, b):
    if _is_torch(a) or _is_torch(cond):
        import torch

        return torch.where(cond if _is_torch(cond) else torch.as_tensor(cond), a, b)
    return np.where(cond, a, b)


@dataclass
class EvalContext:
    """Everything an expression needs besides the imputed values.

    ``x`` has shape [batch, intervals, zoom]; measurements map entry names to
    [batch, intervals] arrays; scalars map names to [batch] arrays or floats.
    ``sample_offsets`` gives the in-interval index of each periodic entry.
    """

    x: Any
    measurements: Mapping[str, Any]
    scalars: Mapping[str, Any]
    domain: str = "nonneg_real"
    smooth: bool = False
    sharpness: float = DEFAULT_SHARPNESS
    sample_offsets: Mapping[str, int] = field(default_factory=dict)

    @property
    def batch(self) -> int:
        return self.x.shape[0]

    @property
    def intervals(self) -> int:
        return self.x.shape[1]

    def measurement(self, name: str):
        try:
            return self.measurements[name]
        except KeyError:
            raise DataError(
                f"unresolved measurement {name!r}; available: {sorted(self.measurements)}"
            ) from None

    def scalar(self, name: str):
        try:
            return self.scalars[name]
        except KeyError:
            raise DataError(f"unresolved scalar {name!r}; available: {sorted(self.scalars)}") from None

    def broadcast_scalar(self, v):
        """Lift a scalar (or [batch] array) to [batch, intervals]."""
        if _is_torch(self.x):
            import torch

            t = torch.as_tensor(v, dtype=self.x.dtype)
            if t.ndim == 0:
                t = t.expand(self.batch)
            return t[:, None].expand(self.batch, self.intervals)
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim == 0:
            arr = np.full(self.batch, float(arr))
        return np.broadcast_to(arr[:, None], (self.batch, self.intervals))


def context_for_example(
    imputed: FineSeries | np.ndarray,
    bundle: CoarseBundle,
    scalars: Mapping[str, float] | None = None,
    smooth: bool = False,
    sharpness: float = DEFAULT_SHARPNESS,
    domain: str | None = None,
) -> EvalContext:
    """Single-example numpy context (batch dimension of 1)."""
    if isinstance(imputed, FineSeries):
        domain = domain or imputed.domain
        values = imputed.values
    else:
        values = np.asarray(imputed, dtype=np.float64)
    n = bundle.context_len * bundle.zoom
    if values.size != n:
        raise DataError(f"imputed length {values.size} != context_len*zoom = {n}")
    x = values.reshape(1, bundle.context_len, bundle.zoom)
    measurements = {k: v[None, :] for k, v in bundle.measurements().items()}
    offsets = {
        e.name: e.spec.offset for e in bundle.entries if e.spec.kind == "periodic"
    }
    return EvalContext(
        x=x,
        measurements=measurements,
        scalars=dict(scalars or {}),
        domain=domain or "nonneg_real",
        smooth=smooth,
        sharpness=sharpness,
        sample_offsets=offsets,
    )


# --------------------------------------------------------------------------
# expression tree


class Expr:
    """Base node.  Evaluation returns [batch, intervals] ([batch, 1] for
    window scope); expressions combine with +, -, and scaling by a constant."""

    def evaluate(self, ctx: EvalContext, scope: str = "interval"):
        raise NotImplementedError

    def refs(self) -> tuple[set[str], set[str], bool]:
        """(measurement names, scalar names, touches_x)."""
        raise NotImplementedError

    def __add__(self, other) -> "Expr":
        return BinOp("+", self, _coerce(other))

    def __radd__(self, other) -> "Expr":
        return BinOp("+", _coerce(other), self)

    def __sub__(self, other) -> "Expr":
        return BinOp("-", self, _coerce(other))

    def __rsub__(self, other) -> "Expr":
        return BinOp("-", _coerce(other), self)

    def __mul__(self, other) -> "Expr":
        return BinOp("*", self, _coerce(other))

    __rmul__ = __mul__


def _coerce(v) -> "Expr":
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(float(v))
    raise DataError(f"cannot use {v!r} in a constraint expression")


def _agg_axes(ctx: EvalContext, scope: str):
    """Slice of x to aggregate: per interval keeps [B, Nc, Z]; per window
    flattens to [B, 1, Nc*Z]."""
    x = ctx.x
    if scope == "window":
        return x.reshape(x.shape[0], 1, -1)
    return x


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def evaluate(self, ctx, scope="interval"):
        n = 1 if scope == "window" else ctx.intervals
        if _is_torch(ctx.x):
            import torch

            return torch.full((ctx.batch, n), self.value, dtype=ctx.x.dtype)
        return np.full((ctx.batch, n), self.value)

    def refs(self):
        return set(), set(), False

    def __repr__(self):
        return f"{self.value:g}"


@dataclass(frozen=True)
class MRef(Expr):
    """A coarse measurement entry, one value per interval."""

    name: str

    def evaluate(self, ctx, scope="interval"):
        if scope == "window":
            raise DataError(f"measurement m[{self.name}] is per-interval; not usable at window scope")
        return ctx.measurement(self.name)

    def refs(self):
        return {self.name}, set(), False

    def __repr__(self):
        return f"m[{self.name}]"


@dataclass(frozen=True)
class SRef(Expr):
    """A per-window scalar side measurement."""

    name: str

    def evaluate(self, ctx, scope="interval"):
        v = ctx.broadcast_scalar(ctx.scalar(self.name))
        return v[:, :1] if scope == "window" else v

    def refs(self):
        return set(), {self.name}, False

    def __repr__(self):
        return f"s[{self.name}]"


@dataclass(frozen=True)
class Agg(Expr):
    """Aggregation of the imputed values: max, min, mean, or sum."""

    op: str

    def evaluate(self, ctx, scope="interval"):
        x = _agg_axes(ctx, scope)
        fn = {"max": _amax, "min": _amin, "mean": _mean, "sum": _sum}[self.op]
        return fn(x, -1)

    def refs(self):
        return set(), set(), True

    def __repr__(self):
        return f"{self.op}(x)"


@dataclass(frozen=True)
class At(Expr):
    """The imputed value at a fixed index within each interval."""

    index: int

    def evaluate(self, ctx, scope="interval"):
        x = _agg_axes(ctx, scope)
        if not 0 <= self.index < x.shape[-1]:
            raise DataError(f"at(x, {self.index}) outside the aggregation span {x.shape[-1]}")
        return x[..., self.index]

    def refs(self):
        return set(), set(), True

    def __repr__(self):
        return f"at(x, {self.index})"


@dataclass(frozen=True)
class SampleAt(Expr):
    """The imputed value at the periodic-sample offset of a named entry."""

    entry: str

    def evaluate(self, ctx, scope="interval"):
        if scope == "window":
            raise DataError("samples(x, ...) is per-interval; not usable at window scope")
        try:
            offset = ctx.sample_offsets[self.entry]
        except KeyError:
            raise DataError(
                f"no periodic entry {self.entry!r} in the bundle layout; "
                f"have: {sorted(ctx.sample_offsets)}"
            ) from None
        return ctx.x[..., offset]

    def refs(self):
        return {self.entry}, set(), True

    def __repr__(self):
        return f"samples(x, m[{self.entry}])"


@dataclass(frozen=True)
class CountPos(Expr):
    """Number of strictly positive imputed values (epsilon-thresholded per
    the channel domain; smoothed with tanh steps when ctx.smooth)."""

    def evaluate(self, ctx, scope="interval"):
        x = _agg_axes(ctx, scope)
        eps = positive_threshold(ctx.domain)
        if ctx.smooth:
            return _sum(step_smooth(x - eps / 2.0, ctx.sharpness), -1)
        # exact: integers count x >= 1 (the midpoint test is equivalent and
        # float-safe); reals count x > eps, matching the coarsening operator
        thr = eps / 2.0 if ctx.domain == "nonneg_int" else eps
        return _sum(step_exact(x - thr), -1)

    def refs(self):
        return set(), set(), True

    def __repr__(self):
        return "count_pos(x)"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op == "*" and not (
            isinstance(self.left, (Const, SRef)) or isinstance(self.right, (Const, SRef))
        ):
            raise DataError("multiplication requires a constant or scalar factor")

    def evaluate(self, ctx, scope="interval"):
        a = self.left.evaluate(ctx, scope)
        b = self.right.evaluate(ctx, scope)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        return a * b

    def refs(self):
        m1, s1, x1 = self.left.refs()
        m2, s2, x2 = self.right.refs()
        return m1 | m2, s1 | s2, x1 or x2

    def __repr__(self):
        lhs, rhs = repr(self.left), repr(self.right)
        if isinstance(self.left, BinOp):
            lhs = f"({lhs})"
        if isinstance(self.right, BinOp):
            rhs = f"({rhs})"
        return f"{lhs} {self.op} {rhs}"


# --------------------------------------------------------------------------
# guards and constraints

_CMP = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


@dataclass(frozen=True)
class Guard:
    """A predicate over measurements and scalars only, so it is decidable
    before any imputed value exists.  A false guard makes the constraint
    vacuously satisfied."""

    left: Expr
    op: str
    right: Expr

    def __post_init__(self):
        if self.op not in _CMP:
            raise DataError(f"unknown comparison {self.op!r}")
        for side in (self.left, self.right):
            _, _, touches_x = side.refs()
            if touches_x:
                raise DataError("guards may reference only measurements and scalars")

    def evaluate(self, ctx: EvalContext, scope: str = "interval"):
        a = self.left.evaluate(ctx, scope)
        b = self.right.evaluate(ctx, scope)
        return _CMP[self.op](a, b)

    def __repr__(self):
        return f"{self.left!r} {self.op} {self.right!r}"


@dataclass(frozen=True)
class Constraint:
    """A named residual: equalities are satisfied at residual 0, inequalities
    at residual <= 0.  ``tag`` separates measurement inversions from
    operational knowledge (the repair solver never relaxes measurements)."""

    name: str
    form: str
    expr: Expr
    guard: Guard | None = None
    scope: str = "interval"
    tag: str = "operational"

    def __post_init__(self):
        if self.form not in FORMS:
            raise DataError(f"constraint {self.name}: form must be one of {FORMS}")
        if self.scope not in SCOPES:
            raise DataError(f"constraint {self.name}: scope must be one of {SCOPES}")
        if self.tag not in TAGS:
            raise DataError(f"constraint {self.name}: tag must be one of {TAGS}")
        if self.scope == "window":
            mrefs, _, _ = self.expr.refs()
            if mrefs and any(isinstance(n, MRef) for n in _walk(self.expr)):
                raise DataError(
                    f"constraint {self.name}: window scope cannot use per-interval measurements"
                )

    def residual(self, ctx: EvalContext):
        """[batch, R] residual; guarded-out slots are exactly 0."""
        res = self.expr.evaluate(ctx, self.scope)
        if self.guard is not None:
            mask = self.guard.evaluate(ctx, self.scope)
            res = _where(mask, res, res * 0)
        return res

    def violation(self, residual):
        """Non-negative violation magnitude per slot."""
        if self.form == "eq":
            return abs(residual)
        if _is_torch(residual):
            return residual.clamp_min(0)
        return np.maximum(residual, 0.0)


def _walk(e: Expr):
    yield e
    if isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        names = [c.name for c in self.constraints]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate constraint names: {names}")

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    @property
    def equalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.form == "eq")

    @property
    def inequalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.form == "ineq")

    @property
    def n_eq(self) -> int:
        return len(self.equalities)

    @property
    def n_ineq(self) -> int:
        return len(self.inequalities)

    def get(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise DataError(f"no constraint named {name!r}")


def eval_exact(
    constraint: Constraint,
    imputed: FineSeries | np.ndarray,
    bundle: CoarseBundle,
    scalars: Mapping[str, float] | None = None,
    domain: str | None = None,
) -> np.ndarray:
    """Residual per scoped interval using hard indicator semantics."""
    ctx = context_for_example(imputed, bundle, scalars, smooth=False, domain=domain)
    return np.asarray(constraint.residual(ctx))[0]


def eval_smooth(
    constraint: Constraint,
    imputed: FineSeries | np.ndarray,
    bundle: CoarseBundle,
    scalars: Mapping[str, float] | None = None,
    sharpness: float = DEFAULT_SHARPNESS,
    domain: str | None = None,
) -> np.ndarray:
    """Residual with indicator steps replaced by tanh-smoothed steps."""
    ctx = context_for_example(
        imputed, bundle, scalars, smooth=True, sharpness=sharpness, domain=domain
    )
    return np.asarray(constraint.residual(ctx))[0]


# --------------------------------------------------------------------------
# builtin constraint library

#: Builders for the stock constraint shapes.  Each entry maps a constraint id
#: to (required bindings, factory).  Bindings name the coarse entries and
#: scalars the constraint reads.
def _lib_max_reported(b):
    return Constraint(
        "max_reported", "eq", MRef(b["max"]) - Agg("max"), tag="measurement"
    )


def _lib_periodic_samples(b):
    return Constraint(
        "periodic_samples", "eq", MRef(b["periodic"]) - SampleAt(b["periodic"]),
        tag="measurement",
    )


def _lib_busy_le_sent(b):
    return Constraint("busy_le_sent", "ineq", CountPos() - MRef(b["out_count"]))


def _lib_sum_reported(b):
    return Constraint("sum_reported", "eq", MRef(b["sum"]) - Agg("sum"), tag="measurement")


def _lib_sum_ge_retransmit(b):
    return Constraint("sum_ge_retransmit", "ineq", MRef(b["retransmit_sum"]) - Agg("sum"))


def _lib_sum_ge_congestion(b):
    return Constraint("sum_ge_congestion", "ineq", MRef(b["congestion_sum"]) - Agg("sum"))


def _lib_congestion_burst(b):
    frac = float(b.get("burst_fraction", 0.5))
    return Constraint(
        "congestion_burst",
        "ineq",
        Const(frac) * SRef(b.get("bandwidth", "bandwidth")) - Agg("max"),
        guard=Guard(MRef(b["congestion_sum"]), ">", Const(0.0)),
    )


def _lib_cwnd_caps_volume(b):
    return Constraint(
        "cwnd_caps_volume",
        "ineq",
        Agg("sum") - SRef(b.get("mss", "mss")) * SRef(b.get("snd_cwnd", "snd_cwnd")),
        guard=Guard(SRef(b.get("elapsed_time", "elapsed_time")), "<=", SRef(b.get("rtt", "rtt"))),
    )


def _lib_rwnd_idle(b):
    return Constraint(
        "rwnd_idle",
        "eq",
        Agg("sum"),
        guard=Guard(
            SRef(b.get("elapsed_time", "elapsed_time")),
            "<=",
            SRef(b.get("rwnd_limited", "rwnd_limited")),
        ),
    )


_LIBRARY = {
    "max_reported": (("max",), _lib_max_reported),
    "periodic_samples": (("periodic",), _lib_periodic_samples),
    "busy_le_sent": (("out_count",), _lib_busy_le_sent),
    "sum_reported": (("sum",), _lib_sum_reported),
    "sum_ge_retransmit": (("retransmit_sum",), _lib_sum_ge_retransmit),
    "sum_ge_congestion": (("congestion_sum",), _lib_sum_ge_congestion),
    "congestion_burst": (("congestion_sum",), _lib_congestion_burst),
    "cwnd_caps_volume": ((), _lib_cwnd_caps_volume),
    "rwnd_idle": ((), _lib_rwnd_idle),
}

LIBRARY_NAMES = tuple(_LIBRARY)


def builtin_library(
    bindings: Mapping[str, str | float], names: Sequence[str] | None = None
) -> ConstraintSet:
    """Build stock constraints from the library.

    ``bindings`` maps binding slots (e.g. "max", "out_count",
    "congestion_sum") to coarse entry names, plus optional scalar-name
    overrides.  Requesting a constraint whose binding is missing raises an
    error naming the unbound slot.
    """
    names = tuple(names) if names is not None else LIBRARY_NAMES
    out = []
    for name in names:
        if name not in _LIBRARY:
            raise DataError(f"unknown library constraint {name!r}; have {list(_LIBRARY)}")
        required, factory = _LIBRARY[name]
        for slot in required:
            if slot not in bindings:
                raise DataError(f"constraint {name!r}: unbound measurement slot {slot!r}")
        out.append(factory(bindings))
    return ConstraintSet(tuple(out))


# --------------------------------------------------------------------------
# text format
#
#   name: [if GUARD then] EXPR OP EXPR [@ window] [measurement]
#
# with OP one of ==, <=, >=; expressions over max(x), min(x), mean(x),
# sum(x), count_pos(x), at(x, I), samples(x, m[ENTRY]), m[ENTRY], s[NAME],
# numbers, + - *, and parentheses.  Lines starting with # are comments.

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?)"
    r"|(?P<mref>m\[[^\]]+\])"
    r"|(?P<sref>s\[[^\]]+\])"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|!=|<|>|[()+\-*,@])"
    r")"
)


def _tokenize(text: str) -> list[str]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise DataError(f"cannot tokenize constraint text at: {text[pos:]!r}")
            break
        tokens.append(m.group().strip())
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], line: str):
        self.tokens = tokens
        self.line = line
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise DataError(f"unexpected end of constraint: {self.line!r}")
        self.i += 1
        return tok

    def expect(self, tok: str):
        got = self.next()
        if got != tok:
            raise DataError(f"expected {tok!r}, got {got!r} in {self.line!r}")

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek() in ("+", "-"):
            op = self.next()
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek() == "*":
            self.next()
            node = BinOp("*", node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        tok = self.next()
        if tok == "-":
            return BinOp("-", Const(0.0), self.parse_factor())
        if tok == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        if tok.startswith("m["):
            return MRef(tok[2:-1].strip())
        if tok.startswith("s["):
            return SRef(tok[2:-1].strip())
        if re.fullmatch(r"\d+\.?\d*(?:[eE][+-]?\d+)?", tok):
            return Const(float(tok))
        if tok in ("max", "min", "mean", "sum"):
            self.expect("(")
            self.expect("x")
            self.expect(")")
            return Agg(tok)
        if tok == "count_pos":
            self.expect("(")
            self.expect("x")
            self.expect(")")
            return CountPos()
        if tok == "at":
            self.expect("(")
            self.expect("x")
            self.expect(",")
            idx = self.next()
            self.expect(")")
            return At(int(idx))
        if tok == "samples":
            self.expect("(")
            self.expect("x")
            self.expect(",")
            parts = []
            while self.peek() not in (")", None):
                parts.append(self.next())
            self.expect(")")
            entry = "".join(parts)
            if entry.startswith("m["):
                entry = entry[2:-1]
            return SampleAt(entry)
        raise DataError(f"unexpected token {tok!r} in {self.line!r}")

    def parse_comparison(self) -> tuple[Expr, str, Expr]:
        lhs = self.parse_expr()
        op = self.next()
        if op not in _CMP:
            raise DataError(f"expected a comparison, got {op!r} in {self.line!r}")
        rhs = self.parse_expr()
        return lhs, op, rhs


def _comparison_to_constraint(name, lhs, op, rhs, guard, scope, tag) -> Constraint:
    if op == "==":
        return Constraint(name, "eq", lhs - rhs, guard=guard, scope=scope, tag=tag)
    if op in ("<=", "<"):
        return Constraint(name, "ineq", lhs - rhs, guard=guard, scope=scope, tag=tag)
    if op in (">=", ">"):
        return Constraint(name, "ineq", rhs - lhs, guard=guard, scope=scope, tag=tag)
    raise DataError(f"constraint {name}: unsupported comparison {op!r}")


def parse_constraint(line: str) -> Constraint:
    """Parse one ``name: [if G then] lhs OP rhs [@ window] [measurement]`` line."""
    if ":" not in line:
        raise DataError(f"constraint line needs 'name:' prefix: {line!r}")
    name, rest = line.split(":", 1)
    name = name.strip()
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise DataError(f"bad constraint name {name!r}")

    tag = "operational"
    rest = rest.strip()
    for marker in ("measurement", "operational"):
        if rest.endswith(marker):
            tag = marker
            rest = rest[: -len(marker)].strip()
            break
    scope = "interval"
    if rest.endswith("@ window") or rest.endswith("@window"):
        scope = "window"
        rest = rest[: rest.rindex("@")].strip()

    p = _Parser(_tokenize(rest), line)
    guard = None
    if p.peek() == "if":
        p.next()
        gl, gop, gr = p.parse_comparison()
        guard = Guard(gl, gop, gr)
        p.expect("then")
    lhs, op, rhs = p.parse_comparison()
    if p.peek() is not None:
        raise DataError(f"trailing tokens {p.tokens[p.i:]} in {line!r}")
    return _comparison_to_constraint(name, lhs, op, rhs, guard, scope, tag)


def parse_constraints(text: str) -> ConstraintSet:
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append(parse_constraint(line))
    if not out:
        raise DataError("constraint file contains no constraints")
    return ConstraintSet(tuple(out))


def load_constraints(path) -> ConstraintSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_constraints(fh.read())


def format_constraint(c: Constraint) -> str:
    op = "==" if c.form == "eq" else "<="
    body = f"{c.expr!r} {op} 0"
    # re-derive "lhs OP rhs" when the residual is a plain difference
    if isinstance(c.expr, BinOp) and c.expr.op == "-":
        body = f"{c.expr.left!r} {op} {c.expr.right!r}"
    if c.guard is not None:
        body = f"if {c.guard!r} then {body}"
    suffix = " @ window" if c.scope == "window" else ""
    if c.tag == "measurement":
        suffix += "  measurement"
    return f"{c.name}: {body}{suffix}"


def format_constraints(cset: ConstraintSet) -> str:
    return "\n".join(format_constraint(c) for c in cset) + "\n"
