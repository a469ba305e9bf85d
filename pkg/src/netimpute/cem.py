"""Constraint enforcement: minimally correct a model's output so every
constraint holds exactly.

The imputed window is re-solved as a mixed-integer program: continuous or
integer variables per fine step (per the channel domain), absolute
deviations from the model output as split variables, max-attainment and
count-positive encoded with indicator booleans.  Periodic-sample indices are
pinned to their measured values and excluded from the objective.  Blocks
(one per coarse interval unless a window-scope constraint couples them) are
solved independently.

Infeasibility policy: measurement constraints are never relaxed; operational
constraints are dropped greedily in reverse declaration order until the
block becomes feasible, and every drop is logged.  If the measurements alone
cannot be satisfied the window is returned unchanged with an infeasibility
flag, which signals corrupt coarse inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .constraints import (
    Agg,
    At,
    BinOp,
    Const,
    Constraint,
    ConstraintSet,
    CountPos,
    EvalContext,
    Expr,
    MRef,
    SRef,
    SampleAt,
    context_for_example,
)
from .errors import DataError, SolverError
from .series import CoarseBundle, FineSeries, positive_threshold

#: Residual tolerance for "holds exactly": integer domains are exact,
#: real domains allow solver-level rounding.
TOL_INT = 1e-9
TOL_REAL = 1e-6


def residual_tol(domain: str) -> float:
    return TOL_INT if domain == "nonneg_int" else TOL_REAL


# --------------------------------------------------------------------------
# compiled records


@dataclass(frozen=True)
class _Lin:
    """sum(coeffs * x) + const  (eq: == 0, ineq: <= 0)."""

    coeffs: dict[int, float]
    const: float
    form: str
    source: str
    tag: str


@dataclass(frozen=True)
class _Extremal:
    """max/min over ``indices``; op in {max_eq, max_ub, max_lb, min_eq,
    min_ub, min_lb} with the bound ``value``."""

    op: str
    indices: tuple[int, ...]
    value: float
    source: str
    tag: str


@dataclass(frozen=True)
class _Count:
    """count of strictly positive x over ``indices``; op in {count_ub,
    count_lb} with bound ``value``."""

    op: str
    indices: tuple[int, ...]
    value: float
    source: str
    tag: str


@dataclass
class _Block:
    """All records touching one independent group of fine indices."""

    indices: tuple[int, ...]
    records: list = field(default_factory=list)


@dataclass
class RepairProblem:
    """A compiled repair instance for one window."""

    cset: ConstraintSet
    bundle: CoarseBundle
    scalars: Mapping[str, float]
    model_out: np.ndarray
    domain: str
    blocks: list[_Block]
    fixed: dict[int, float]
    channel_bound: float | None = None
    channel: str = "imputed"
    granularity_ms: float = 1.0

    @property
    def sample_indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.fixed))

    def objective_of(self, corrected: np.ndarray) -> float:
        mask = np.ones(self.model_out.size, dtype=bool)
        mask[list(self.fixed)] = False
        return float(np.abs(corrected - self.model_out)[mask].sum())

    def exact_violations(self, values: np.ndarray,
                         skip: Sequence[str] = ()) -> dict[str, float]:
        """Summed violation magnitude per constraint, exact semantics."""
        out = {}
        for c in self.cset:
            if c.name in skip:
                continue
            ctx = context_for_example(values, self.bundle, self.scalars, domain=self.domain)
            res = np.asarray(c.residual(ctx))[0]
            out[c.name] = float(np.sum(c.violation(res)))
        return out

    def is_feasible(self, values: np.ndarray, skip: Sequence[str] = ()) -> bool:
        tol = residual_tol(self.domain)
        return all(v <= tol for v in self.exact_violations(values, skip).values())


@dataclass
class RepairReport:
    objective: float
    pre_violations: dict[str, float]
    post_violations: dict[str, float]
    relaxed: list[str]
    infeasible: bool
    solve_ms: float
    changed: int


# --------------------------------------------------------------------------
# symbolic partial evaluation of constraint expressions


@dataclass
class _Sym:
    lin: dict[int, float]
    const: float
    specials: list[tuple[str, float]]  # (kind, coefficient), kind in {max, min, count}

    @classmethod
    def of_const(cls, v: float) -> "_Sym":
        return cls({}, float(v), [])

    @property
    def is_const(self) -> bool:
        return not self.lin and not self.specials


def _sym_add(a: _Sym, b: _Sym, sign: float) -> _Sym:
    lin = dict(a.lin)
    for k, v in b.lin.items():
        lin[k] = lin.get(k, 0.0) + sign * v
    specials = list(a.specials) + [(k, sign * c) for k, c in b.specials]
    return _Sym(lin, a.const + sign * b.const, specials)


def _sym_scale(a: _Sym, factor: float) -> _Sym:
    return _Sym(
        {k: v * factor for k, v in a.lin.items()},
        a.const * factor,
        [(k, c * factor) for k, c in a.specials],
    )


def _symbolic(expr: Expr, n: int, interval: int | None, bundle: CoarseBundle,
              scalars: Mapping[str, float], source: str) -> _Sym:
    """Evaluate an expression with the imputed block symbolic (local indices
    0..n-1); measurements and scalars become constants."""
    if isinstance(expr, Const):
        return _Sym.of_const(expr.value)
    if isinstance(expr, SRef):
        if expr.name not in scalars:
            raise DataError(f"{source}: unresolved scalar {expr.name!r}")
        return _Sym.of_const(float(scalars[expr.name]))
    if isinstance(expr, MRef):
        if interval is None:
            raise DataError(f"{source}: per-interval measurement at window scope")
        return _Sym.of_const(float(bundle.get(expr.name).values[interval]))
    if isinstance(expr, Agg):
        if expr.op == "sum":
            return _Sym({t: 1.0 for t in range(n)}, 0.0, [])
        if expr.op == "mean":
            return _Sym({t: 1.0 / n for t in range(n)}, 0.0, [])
        return _Sym({}, 0.0, [(expr.op, 1.0)])
    if isinstance(expr, CountPos):
        return _Sym({}, 0.0, [("count", 1.0)])
    if isinstance(expr, At):
        if not 0 <= expr.index < n:
            raise DataError(f"{source}: at(x, {expr.index}) outside block of {n}")
        return _Sym({expr.index: 1.0}, 0.0, [])
    if isinstance(expr, SampleAt):
        offset = bundle.get(expr.entry).spec.offset
        return _Sym({offset: 1.0}, 0.0, [])
    if isinstance(expr, BinOp):
        a = _symbolic(expr.left, n, interval, bundle, scalars, source)
        b = _symbolic(expr.right, n, interval, bundle, scalars, source)
        if expr.op == "+":
            return _sym_add(a, b, 1.0)
        if expr.op == "-":
            return _sym_add(a, b, -1.0)
        if a.is_const:
            return _sym_scale(b, a.const)
        if b.is_const:
            return _sym_scale(a, b.const)
        raise DataError(f"{source}: product of two non-constant terms")
    raise DataError(f"{source}: unsupported expression node {type(expr).__name__}")


def _canonical(sym: _Sym, c: Constraint, offset: int, n: int) -> list:
    """Turn a symbolic residual into solver records with global indices."""
    shift = lambda d: {offset + k: v for k, v in d.items()}
    span = tuple(range(offset, offset + n))
    if not sym.specials:
        return [_Lin(shift(sym.lin), sym.const, c.form, c.name, c.tag)]
    if len(sym.specials) != 1 or sym.lin:
        raise DataError(
            f"{c.name}: cannot mix extremal/count terms with other imputed terms"
        )
    kind, a = sym.specials[0]
    if a == 0:
        return []
    bound = -sym.const / a
    if kind == "count":
        if c.form == "eq":
            return [
                _Count("count_ub", span, bound, c.name, c.tag),
                _Count("count_lb", span, bound, c.name, c.tag),
            ]
        op = "count_ub" if a > 0 else "count_lb"
        return [_Count(op, span, bound, c.name, c.tag)]
    if c.form == "eq":
        return [_Extremal(f"{kind}_eq", span, bound, c.name, c.tag)]
    op = f"{kind}_ub" if a > 0 else f"{kind}_lb"
    return [_Extremal(op, span, bound, c.name, c.tag)]


def compile(
    cset: ConstraintSet,
    bundle: CoarseBundle,
    scalars: Mapping[str, float],
    model_out: np.ndarray | FineSeries,
    domain: str | None = None,
    channel_bound: float | None = None,
    channel: str | None = None,
    granularity_ms: float = 1.0,
) -> RepairProblem:
    """Lower a constraint set to per-block solver records for one window.

    Guards are decided now (they read only measurements and scalars); false
    guards drop their constraint.  Periodic-sample equalities become pinned
    indices.
    """
    if isinstance(model_out, FineSeries):
        domain = domain or model_out.domain
        channel = channel or model_out.channel
        granularity_ms = model_out.granularity_ms
        model_out = np.asarray(model_out.values, dtype=np.float64)
    else:
        model_out = np.asarray(model_out, dtype=np.float64)
    domain = domain or "nonneg_real"
    channel = channel or "imputed"
    L = bundle.context_len * bundle.zoom
    if model_out.size != L:
        raise DataError(f"model output length {model_out.size} != window length {L}")
    zoom = bundle.zoom

    guard_ctx = context_for_example(model_out, bundle, scalars, domain=domain)
    window_scope = any(c.scope == "window" for c in cset)
    if window_scope:
        blocks = [_Block(tuple(range(L)))]
    else:
        blocks = [
            _Block(tuple(range(i * zoom, (i + 1) * zoom)))
            for i in range(bundle.context_len)
        ]

    fixed: dict[int, float] = {}
    for c in cset:
        if c.scope == "window":
            spans = [(None, 0, L, 0)]
        else:
            spans = [(i, i * zoom, zoom, i if not window_scope else 0) for i in range(bundle.context_len)]
        if c.guard is not None:
            mask = np.asarray(c.guard.evaluate(guard_ctx, c.scope))[0]
        else:
            mask = None
        for interval, offset, n, block_id in spans:
            if mask is not None:
                fired = bool(mask[interval if c.scope == "interval" else 0])
                if not fired:
                    continue
            sym = _symbolic(c.expr, n, interval, bundle, scalars, c.name)
            for rec in _canonical(sym, c, offset, n):
                # single-variable measurement equality = a pinned sample
                if (
                    isinstance(rec, _Lin)
                    and rec.form == "eq"
                    and rec.tag == "measurement"
                    and len(rec.coeffs) == 1
                ):
                    (idx, coef), = rec.coeffs.items()
                    if coef != 0:
                        value = -rec.const / coef
                        prev = fixed.get(idx)
                        if prev is not None and abs(prev - value) > residual_tol(domain):
                            raise DataError(
                                f"{rec.source}: index {idx} pinned to conflicting values"
                            )
                        fixed[idx] = value
                        continue
                blocks[block_id].records.append(rec)
    if domain == "nonneg_int":
        fixed = {
            k: float(np.rint(v)) if abs(v - np.rint(v)) <= TOL_INT else v
            for k, v in fixed.items()
        }
    return RepairProblem(
        cset=cset,
        bundle=bundle,
        scalars=dict(scalars or {}),
        model_out=model_out,
        domain=domain,
        blocks=blocks,
        fixed=fixed,
        channel_bound=channel_bound,
        channel=channel,
        granularity_ms=granularity_ms,
    )


# --------------------------------------------------------------------------
# block solving


def _block_caps(problem: RepairProblem, block: _Block, records: list) -> np.ndarray:
    """Per-index upper bounds, tightened by max caps and sum equalities."""
    n = len(block.indices)
    caps = np.full(n, np.inf)
    if problem.channel_bound is not None:
        caps[:] = problem.channel_bound
    local = {g: i for i, g in enumerate(block.indices)}
    for rec in records:
        if isinstance(rec, _Extremal) and rec.op in ("max_eq", "max_ub"):
            for g in rec.indices:
                caps[local[g]] = min(caps[local[g]], rec.value)
        elif isinstance(rec, _Lin):
            idxs = list(rec.coeffs)
            vals = np.array([rec.coeffs[g] for g in idxs])
            if len(idxs) == 0 or np.any(vals <= 0):
                continue
            rhs = -rec.const
            if rhs < 0:
                continue
            # sum-style rows bound each member: coef*x_t <= rhs given x >= 0
            if rec.form in ("eq", "ineq"):
                for g, coef in zip(idxs, vals):
                    caps[local[g]] = min(caps[local[g]], rhs / coef)
    return caps


def _solve_block(
    problem: RepairProblem,
    block: _Block,
    records: list,
    time_limit: float,
    pin_witness: bool,
) -> np.ndarray | None:
    """Solve one block's MILP; None when infeasible or failed."""
    n = len(block.indices)
    local = {g: i for i, g in enumerate(block.indices)}
    xhat = problem.model_out[list(block.indices)]
    integral = problem.domain == "nonneg_int"
    eps = positive_threshold(problem.domain)

    caps = _block_caps(problem, block, records)
    lows = np.zeros(n)
    for g, v in problem.fixed.items():
        if g in local:
            i = local[g]
            lows[i] = caps[i] = v
    if np.any(lows > caps + 1e-12):
        return None
    for rec in records:
        if isinstance(rec, _Extremal) and rec.op in ("min_eq", "min_lb"):
            for g in rec.indices:
                i = local[g]
                if g not in problem.fixed:
                    lows[i] = max(lows[i], rec.value)

    free = [i for i, g in enumerate(block.indices) if g not in problem.fixed]
    nfree = len(free)

    # variable layout: x | p (dev+) | n (dev-) | indicator booleans
    nvar = n + 2 * nfree
    bool_groups: list[tuple[str, list[int], float, object]] = []
    for rec in records:
        if isinstance(rec, _Extremal) and rec.op in ("max_eq", "max_lb", "min_eq", "min_ub"):
            ids = list(range(nvar, nvar + len(rec.indices)))
            nvar += len(rec.indices)
            bool_groups.append((rec.op, ids, rec.value, rec))
        elif isinstance(rec, _Count):
            ids = list(range(nvar, nvar + len(rec.indices)))
            nvar += len(rec.indices)
            bool_groups.append((rec.op, ids, rec.value, rec))

    lb = np.zeros(nvar)
    ub = np.full(nvar, np.inf)
    lb[:n] = lows
    ub[:n] = caps
    integrality = np.zeros(nvar)
    if integral:
        integrality[:n] = 1
    for _, ids, _, _ in bool_groups:
        for b in ids:
            ub[b] = 1.0
            integrality[b] = 1

    cost = np.zeros(nvar)
    rows: list[np.ndarray] = []
    row_lb: list[float] = []
    row_ub: list[float] = []

    def add_row(coeffs: dict[int, float], lo: float, hi: float):
        row = np.zeros(nvar)
        for k, v in coeffs.items():
            row[k] = v
        rows.append(row)
        row_lb.append(lo)
        row_ub.append(hi)

    # deviation split: x_i - p_i + n_i == xhat_i
    for k, i in enumerate(free):
        p, m = n + k, n + nfree + k
        cost[p] = cost[m] = 1.0
        add_row({i: 1.0, p: -1.0, m: 1.0}, xhat[i], xhat[i])

    for rec in records:
        if isinstance(rec, _Lin):
            coeffs = {local[g]: v for g, v in rec.coeffs.items()}
            rhs = -rec.const
            if rec.form == "eq":
                add_row(coeffs, rhs, rhs)
            else:
                add_row(coeffs, -np.inf, rhs)

    for op, ids, value, rec in bool_groups:
        members = [local[g] for g in rec.indices]
        if op in ("max_eq", "max_lb"):
            # b_t = 1 forces x_t >= value; at least one witness
            for i, b in zip(members, ids):
                add_row({i: 1.0, b: -value}, 0.0, np.inf)
            add_row({b: 1.0 for b in ids}, 1.0, np.inf)
            if pin_witness and op == "max_eq":
                w = members[int(np.argmax(xhat[members]))]
                lb[ids[members.index(w)]] = 1.0
        elif op in ("min_eq", "min_ub"):
            # b_t = 1 forces x_t <= value; at least one witness
            for i, b in zip(members, ids):
                big = caps[i] if np.isfinite(caps[i]) else None
                if big is None:
                    raise DataError(
                        f"{rec.source}: no upper bound derivable; pass a channel bound"
                    )
                add_row({i: 1.0, b: big - value}, -np.inf, big)
            add_row({b: 1.0 for b in ids}, 1.0, np.inf)
        elif op == "count_ub":
            slack = 0.0 if integral else eps
            for i, b in zip(members, ids):
                big = caps[i] if np.isfinite(caps[i]) else None
                if big is None:
                    raise DataError(
                        f"{rec.source}: count encoding needs an upper bound; "
                        "pass a channel bound"
                    )
                add_row({i: 1.0, b: -big}, -np.inf, slack)
            add_row({b: 1.0 for b in ids}, 0.0, rec.value)
        elif op == "count_lb":
            thr = 1.0 if integral else 2 * eps
            for i, b in zip(members, ids):
                add_row({i: 1.0, b: -thr}, 0.0, np.inf)
            add_row({b: 1.0 for b in ids}, rec.value, np.inf)

    constraints = []
    if rows:
        constraints.append(LinearConstraint(np.vstack(rows), row_lb, row_ub))
    try:
        res = milp(
            c=cost,
            constraints=constraints,
            integrality=integrality,
            bounds=Bounds(lb, ub),
            options={"time_limit": time_limit, "presolve": True},
        )
    except ValueError:
        return None
    if res.status != 0 or res.x is None:
        return None
    x = np.asarray(res.x[:n], dtype=np.float64)
    if integral:
        x = np.rint(x)
    x = np.clip(x, lows, caps) + 0.0  # +0.0 clears negative zeros
    return x


def _records_ok(problem: RepairProblem, block: _Block, records: list,
                values: np.ndarray) -> bool:
    """Exact check of a candidate block against compiled records."""
    tol = residual_tol(problem.domain)
    local = {g: i for i, g in enumerate(block.indices)}
    v = values
    eps = positive_threshold(problem.domain)
    for g, val in problem.fixed.items():
        if g in local and abs(v[local[g]] - val) > tol:
            return False
    for rec in records:
        if isinstance(rec, _Lin):
            total = sum(coef * v[local[g]] for g, coef in rec.coeffs.items()) + rec.const
            if rec.form == "eq":
                if abs(total) > tol:
                    return False
            elif total > tol:
                return False
        elif isinstance(rec, _Extremal):
            sub = v[[local[g] for g in rec.indices]]
            agg = sub.max() if rec.op.startswith("max") else sub.min()
            if rec.op.endswith("_eq") and abs(agg - rec.value) > tol:
                return False
            if rec.op.endswith("_ub") and agg - rec.value > tol:
                return False
            if rec.op.endswith("_lb") and rec.value - agg > tol:
                return False
        elif isinstance(rec, _Count):
            sub = v[[local[g] for g in rec.indices]]
            cnt = float(np.sum(sub >= eps)) if problem.domain == "nonneg_int" \
                else float(np.sum(sub > eps))
            if rec.op == "count_ub" and cnt - rec.value > tol:
                return False
            if rec.op == "count_lb" and rec.value - cnt > tol:
                return False
    return True


def enforce(
    problem: RepairProblem,
    time_limit: float = 10.0,
    pin_witness: bool = True,
) -> tuple[FineSeries, RepairReport]:
    """Produce the minimally-corrected series satisfying the compiled
    constraints, plus a report of what happened."""
    t0 = time.perf_counter()
    pre = problem.exact_violations(problem.model_out)
    corrected = problem.model_out.copy()
    if problem.domain == "nonneg_int":
        corrected = np.rint(corrected)
    for g, v in problem.fixed.items():
        corrected[g] = v

    relaxed: list[str] = []
    infeasible = False
    if problem.domain == "nonneg_int" and any(
        v != np.rint(v) for v in problem.fixed.values()
    ):
        infeasible = True  # non-integral measured sample on an integer channel

    operational = [c.name for c in problem.cset if c.tag == "operational"]

    for block in problem.blocks if not infeasible else []:
        base = [rec for rec in block.records]
        cand = corrected[list(block.indices)]
        if _records_ok(problem, block, base, cand):
            continue  # nearest-feasible identity candidate already works

        # drop operational constraints in reverse declaration order until
        # the block solves; measurement records are never dropped
        drop: list[str] = []
        solution = None
        while True:
            records = [r for r in base if r.source not in drop]
            solution = _solve_block(problem, block, records, time_limit, pin_witness=False)
            if solution is not None:
                if pin_witness and any(
                    isinstance(r, _Extremal) and r.op == "max_eq" for r in records
                ):
                    pinned = _solve_block(problem, block, records, time_limit,
                                          pin_witness=True)
                    if pinned is not None:
                        cost_p = np.abs(pinned - problem.model_out[list(block.indices)]).sum()
                        cost_u = np.abs(solution - problem.model_out[list(block.indices)]).sum()
                        if cost_p <= cost_u + 1e-9:
                            solution = pinned
                break
            remaining = [nm for nm in operational if nm not in drop and
                         any(r.source == nm for r in base)]
            if not remaining:
                break
            drop.append(remaining[-1])

        if solution is None:
            infeasible = True
            break
        for nm in drop:
            if nm not in relaxed:
                relaxed.append(nm)
        corrected[list(block.indices)] = solution

    elapsed = (time.perf_counter() - t0) * 1000.0
    if infeasible:
        out_values = problem.model_out.copy()
        post = dict(pre)
        objective = 0.0
        changed = 0
        relaxed = []
    else:
        out_values = corrected
        post = problem.exact_violations(out_values)
        objective = problem.objective_of(out_values)
        changed = int(np.sum(out_values != problem.model_out))
    report = RepairReport(
        objective=objective,
        pre_violations=pre,
        post_violations=post,
        relaxed=relaxed,
        infeasible=infeasible,
        solve_ms=elapsed,
        changed=changed,
    )
    series = FineSeries(
        problem.channel,
        out_values,
        granularity_ms=problem.granularity_ms,
        domain=problem.domain if not infeasible else "nonneg_real",
    )
    return series, report


def repair_window(
    cset: ConstraintSet,
    bundle: CoarseBundle,
    scalars: Mapping[str, float],
    model_out: np.ndarray | FineSeries,
    domain: str = "nonneg_real",
    channel_bound: float | None = None,
    time_limit: float = 10.0,
    channel: str | None = None,
) -> tuple[FineSeries, RepairReport]:
    problem = compile(cset, bundle, scalars, model_out, domain, channel_bound,
                      channel=channel)
    return enforce(problem, time_limit=time_limit)


# --------------------------------------------------------------------------
# brute-force oracle


def brute_force_oracle(
    problem: RepairProblem, value_grid: Sequence[float]
) -> tuple[float, np.ndarray | None]:
    """Exhaustive search over grid assignments for tiny instances: the
    independent check that enforce() really is minimal.  Feasibility is
    judged by the original constraint set's exact evaluator, not by the
    compiled solver records.

    Returns (optimal objective, one optimal solution); (inf, None) when no
    grid assignment is feasible."""
    L = problem.model_out.size
    grid = np.asarray(sorted(set(float(v) for v in value_grid)))
    free = [t for t in range(L) if t not in problem.fixed]
    if L > 8 or grid.size > 8:
        raise DataError("oracle guard: window length and grid must both be <= 8")

    n_cand = int(grid.size ** len(free))
    candidates = np.tile(problem.model_out, (n_cand, 1))
    for t, v in problem.fixed.items():
        candidates[:, t] = v
    if free:
        mesh = np.meshgrid(*([grid] * len(free)), indexing="ij")
        for j, t in enumerate(free):
            candidates[:, t] = mesh[j].reshape(-1)

    bundle = problem.bundle
    ctx = EvalContext(
        x=candidates.reshape(n_cand, bundle.context_len, bundle.zoom),
        measurements={
            k: np.broadcast_to(v[None, :], (n_cand, v.size))
            for k, v in bundle.measurements().items()
        },
        scalars={k: np.full(n_cand, float(v)) for k, v in problem.scalars.items()},
        domain=problem.domain,
        smooth=False,
        sample_offsets={
            e.name: e.spec.offset for e in bundle.entries if e.spec.kind == "periodic"
        },
    )

    tol = residual_tol(problem.domain)
    feasible = np.ones(n_cand, dtype=bool)
    for c in problem.cset:
        res = np.asarray(c.residual(ctx))
        bad = np.abs(res) > tol if c.form == "eq" else res > tol
        feasible &= ~bad.any(axis=1)
    if not feasible.any():
        return float("inf"), None
    mask = np.ones(L, dtype=bool)
    mask[list(problem.fixed)] = False
    costs = np.abs(candidates - problem.model_out)[:, mask].sum(axis=1)
    costs = np.where(feasible, costs, np.inf)
    best = int(np.argmin(costs))
    return float(costs[best]), candidates[best]
