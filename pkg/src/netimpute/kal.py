"""Constraint-penalized training: an augmented-Lagrangian outer loop around
gradient-descent inner training.

Each constraint carries one Lagrange multiplier per training example and
residual slot.  The inner loop minimizes the combined loss plus penalty
terms with multipliers frozen; once it converges (early stopping on a
validation objective), multipliers are bumped by the violation magnitudes
and the penalty coefficient grows geometrically.  The outer loop stops when
mean violations saturate.

Residuals entering the loss and the multiplier updates are the smoothed,
scale-normalized ones (consistent with what is differentiated); everything
reported or used for stopping is evaluated exactly.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import torch

from .constraints import Constraint, ConstraintSet, EvalContext, DEFAULT_SHARPNESS
from .errors import ConfigError, DataError, TrainingDiverged
from .model import ImputationModel, WindowExample, l_combine
from .series import FineSeries

MU_INIT = 1e-3
MU_MULT = 1.5


@dataclass
class KalState:
    """Penalty coefficient and per-(constraint, example, slot) multipliers.

    Inequality multipliers stay non-negative via the positive-part clamp.
    Arrays are indexed by stable example positions in the training set.
    """

    mu: float
    mu_mult: float
    lambda_eq: list[np.ndarray]
    lambda_ineq: list[np.ndarray]
    outer_iter: int = 0
    violation_history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(
        cls,
        cset: ConstraintSet,
        n_examples: int,
        slots: Mapping[str, int],
        mu: float = MU_INIT,
        mu_mult: float = MU_MULT,
    ) -> "KalState":
        eq = [np.zeros((n_examples, slots[c.name])) for c in cset.equalities]
        ineq = [np.zeros((n_examples, slots[c.name])) for c in cset.inequalities]
        return cls(mu=mu, mu_mult=mu_mult, lambda_eq=eq, lambda_ineq=ineq)


def update_multipliers(
    kal: KalState,
    eq_residuals: Sequence[np.ndarray],
    ineq_residuals: Sequence[np.ndarray],
    reported_violation: dict | None = None,
) -> KalState:
    """One dual step: multipliers absorb 2*mu*residual (inequalities clamped
    at zero), then the penalty coefficient grows by mu_mult."""
    if len(eq_residuals) != len(kal.lambda_eq) or len(ineq_residuals) != len(kal.lambda_ineq):
        raise DataError("residual lists do not match the multiplier layout")
    mu_old = kal.mu
    new_eq = [lam + 2.0 * mu_old * res for lam, res in zip(kal.lambda_eq, eq_residuals)]
    new_ineq = [
        np.maximum(0.0, lam + 2.0 * mu_old * res)
        for lam, res in zip(kal.lambda_ineq, ineq_residuals)
    ]
    if reported_violation is None:
        eq_v = [np.abs(r).mean() for r in eq_residuals]
        ineq_v = [np.maximum(r, 0.0).mean() for r in ineq_residuals]
        reported_violation = {
            "eq": float(np.mean(eq_v)) if eq_v else 0.0,
            "ineq": float(np.mean(ineq_v)) if ineq_v else 0.0,
        }
    history = list(kal.violation_history) + [dict(reported_violation)]
    return KalState(
        mu=mu_old * kal.mu_mult,
        mu_mult=kal.mu_mult,
        lambda_eq=new_eq,
        lambda_ineq=new_ineq,
        outer_iter=kal.outer_iter + 1,
        violation_history=history,
    )


# --------------------------------------------------------------------------
# dataset tensors and batched residuals


class DatasetTensors:
    """Dataset columns as torch tensors plus everything needed to build
    constraint-evaluation contexts for arbitrary example subsets."""

    def __init__(self, examples: Sequence[WindowExample]):
        if not examples:
            raise DataError("empty example list")
        first = examples[0]
        self.examples = list(examples)
        self.zoom = first.input.zoom
        self.context_len = first.input.context_len
        self.domain = first.target.domain
        layout = first.input.layout()
        self.inputs = torch.empty(
            (len(examples), self.context_len, len(layout)), dtype=torch.float32
        )
        self.targets = torch.empty(
            (len(examples), self.context_len * self.zoom), dtype=torch.float32
        )
        self.measurements: dict[str, torch.Tensor] = {
            e.name: torch.empty((len(examples), self.context_len), dtype=torch.float32)
            for e in first.input.entries
        }
        scalar_keys = sorted(first.scalars)
        self.scalars: dict[str, torch.Tensor] = {
            k: torch.empty(len(examples), dtype=torch.float32) for k in scalar_keys
        }
        self.sample_offsets = {
            e.name: e.spec.offset for e in first.input.entries if e.spec.kind == "periodic"
        }
        for i, ex in enumerate(examples):
            if ex.input.layout() != layout:
                raise DataError(f"example {i} has a different bundle layout")
            for j, e in enumerate(ex.input.entries):
                v = torch.as_tensor(e.values.copy(), dtype=torch.float32)
                self.inputs[i, :, j] = v
                self.measurements[e.name][i] = v
            self.targets[i] = torch.as_tensor(ex.target.values.copy(), dtype=torch.float32)
            for k in scalar_keys:
                self.scalars[k][i] = float(ex.scalars[k])

    def __len__(self) -> int:
        return len(self.examples)

    def context(
        self, out: torch.Tensor, ids: np.ndarray | None = None,
        smooth: bool = True, sharpness: float = DEFAULT_SHARPNESS,
    ) -> EvalContext:
        """Evaluation context for model outputs ``out`` [B, L] (physical)."""
        x = out.reshape(out.shape[0], self.context_len, self.zoom)
        if ids is None:
            meas = self.measurements
            scal = self.scalars
        else:
            idx = torch.as_tensor(np.asarray(ids), dtype=torch.long)
            meas = {k: v[idx] for k, v in self.measurements.items()}
            scal = {k: v[idx] for k, v in self.scalars.items()}
        return EvalContext(
            x=x,
            measurements=meas,
            scalars=scal,
            domain=self.domain,
            smooth=smooth,
            sharpness=sharpness,
            sample_offsets=self.sample_offsets,
        )


def constraint_scales(cset: ConstraintSet, data: DatasetTensors) -> dict[str, float]:
    """Per-constraint normalization: the training-set maximum magnitude of
    the measurements (or scalars, or target values) the constraint reads.
    Keeps residuals of different units comparable inside the loss."""
    scales: dict[str, float] = {}
    for c in cset:
        mrefs, srefs, _ = c.expr.refs()
        candidates: list[float] = []
        for name in sorted(mrefs):
            if name in data.measurements:
                candidates.append(float(data.measurements[name].abs().max()))
        for name in sorted(srefs):
            if name in data.scalars:
                candidates.append(float(data.scalars[name].abs().max()))
        scale = max(candidates) if candidates else float(data.targets.abs().max())
        scales[c.name] = max(scale, 1e-9)
    return scales


def batch_residuals(
    cset: ConstraintSet,
    out: torch.Tensor,
    data: DatasetTensors,
    ids: np.ndarray | None = None,
    smooth: bool = True,
    sharpness: float = DEFAULT_SHARPNESS,
    scales: Mapping[str, float] | None = None,
) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
    """(equality residuals, inequality residuals), each a [B, slots] tensor
    per constraint, optionally divided by the constraint's scale."""
    ctx = data.context(out, ids, smooth=smooth, sharpness=sharpness)
    eq, ineq = [], []
    for c in cset:
        res = c.residual(ctx)
        if scales is not None:
            res = res / scales[c.name]
        (eq if c.form == "eq" else ineq).append(res)
    return eq, ineq


def penalty_terms(
    cset: ConstraintSet,
    eq_res: Sequence[torch.Tensor],
    ineq_res: Sequence[torch.Tensor],
    kal: KalState,
    ids: np.ndarray,
) -> torch.Tensor:
    """Sum of augmented-Lagrangian penalties over a batch.

    Equalities contribute mu*r^2 + lambda*r per slot; inequalities contribute
    lambda*r plus mu*r^2 gated on (lambda > 0 or r > 0), the gate evaluated
    without gradient."""
    total = torch.zeros(())
    idx = np.asarray(ids)
    for res, lam_all in zip(eq_res, kal.lambda_eq):
        lam = torch.as_tensor(lam_all[idx], dtype=res.dtype)
        total = total + (kal.mu * res.square() + lam * res).sum()
    for res, lam_all in zip(ineq_res, kal.lambda_ineq):
        lam = torch.as_tensor(lam_all[idx], dtype=res.dtype)
        gate = ((lam > 0) | (res.detach() > 0)).to(res.dtype)
        total = total + (lam * res + kal.mu * gate * res.square()).sum()
    return total


def l_aug(
    out,
    example: WindowExample,
    example_id: int,
    cset: ConstraintSet,
    kal: KalState,
    scales: Mapping[str, float] | None = None,
    emd_weight: float = 1.0,
    sharpness: float = DEFAULT_SHARPNESS,
) -> torch.Tensor:
    """Augmented loss for a single example (reference form; the trainer uses
    the batched equivalent).  ``out`` is the physical-unit imputation."""
    data = DatasetTensors([example])
    if not isinstance(out, torch.Tensor):
        out = torch.as_tensor(np.asarray(out, dtype=np.float64))
    target = torch.as_tensor(example.target.values.copy(), dtype=out.dtype)
    loss = l_combine(out, target, emd_weight)
    if len(cset) == 0:
        return loss
    sizes = [lam.shape[0] for lam in kal.lambda_eq + kal.lambda_ineq]
    if sizes and not 0 <= example_id < min(sizes):
        raise DataError(f"example id {example_id} outside multiplier range [0, {min(sizes)})")
    eq, ineq = batch_residuals(
        cset, out[None, :], data, ids=np.array([0]), smooth=True,
        sharpness=sharpness, scales=scales,
    )
    sliced = KalState(
        mu=kal.mu,
        mu_mult=kal.mu_mult,
        lambda_eq=[lam[example_id : example_id + 1] for lam in kal.lambda_eq],
        lambda_ineq=[lam[example_id : example_id + 1] for lam in kal.lambda_ineq],
    )
    return loss + penalty_terms(cset, eq, ineq, sliced, np.array([0]))


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40                 # max inner epochs per outer iteration
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 5
    max_outer: int = 10
    saturation_tol: float = 0.01     # relative violation improvement to keep going
    mu0: float = MU_INIT
    mu_mult: float = MU_MULT
    emd_weight: float = 1.0
    sharpness: float = DEFAULT_SHARPNESS
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.max_outer < 1 or self.batch_size < 1:
            raise ConfigError("epochs, max_outer, and batch_size must be >= 1")
        if self.mu0 <= 0:
            raise ConfigError("mu0 must be positive")


@dataclass
class FitResult:
    model: ImputationModel
    kal: KalState
    history: list[dict]
    epoch_log: list[dict]
    best_outer: int


def _mean_violation(cset, eq_res, ineq_res) -> float:
    parts = [float(r.abs().mean()) for r in eq_res]
    parts += [float(r.clamp_min(0).mean()) for r in ineq_res]
    return float(np.mean(parts)) if parts else 0.0


@torch.no_grad()
def _full_pass(model, data: DatasetTensors, cset, scales, sharpness, batch_size=256):
    """Model outputs plus smoothed and exact residuals over a whole split."""
    model.eval()
    outs = []
    for start in range(0, len(data), batch_size):
        outs.append(model(data.inputs[start : start + batch_size]))
    out = torch.cat(outs) if outs else torch.empty(0)
    smooth_eq, smooth_ineq = batch_residuals(
        cset, out, data, smooth=True, sharpness=sharpness, scales=scales
    )
    exact_eq, exact_ineq = batch_residuals(cset, out, data, smooth=False, scales=scales)
    model.train()
    return out, (smooth_eq, smooth_ineq), (exact_eq, exact_ineq)


def _class_loss(out_n: torch.Tensor, targets_n: torch.Tensor,
                targets_sorted_n: torch.Tensor, emd_weight: float) -> torch.Tensor:
    """Min-over-class combined loss, batched: out [B, L] against per-example
    target pools [B, K, L] (padded by repeating a real member, which leaves
    the minimum unchanged).  Gradient reaches only each example's closest
    member."""
    mse_pairs = ((out_n[:, None, :] - targets_n) ** 2).mean(dim=-1)
    if emd_weight > 0:
        out_sorted, _ = torch.sort(out_n, dim=-1)
        emd_pairs = (out_sorted[:, None, :] - targets_sorted_n).abs().mean(dim=-1)
        pairs = mse_pairs + emd_weight * emd_pairs
    else:
        pairs = mse_pairs
    return pairs.min(dim=1).values.mean()


def fit(
    train: Sequence[WindowExample],
    val: Sequence[WindowExample],
    cset: ConstraintSet,
    model: ImputationModel,
    config: TrainConfig,
    target_sets: Sequence[Sequence[FineSeries]] | None = None,
) -> FitResult:
    """Alternate inner gradient training with multiplier updates until
    violations saturate; return the model restored to the outer iteration
    with the best validation violation (best validation loss when training
    without constraints).

    ``target_sets`` (from refinement) switches class members to the
    min-over-class loss; everything else trains as usual."""
    train_data = DatasetTensors(train)
    val_data = DatasetTensors(val)
    scales = constraint_scales(cset, train_data) if len(cset) else {}
    n = len(train_data)

    slot_counts = {}
    with torch.no_grad():
        probe_eq, probe_ineq = batch_residuals(
            cset, train_data.targets[:1], train_data, ids=np.array([0]), smooth=False
        )
    for c, r in zip(cset.equalities, probe_eq):
        slot_counts[c.name] = r.shape[1]
    for c, r in zip(cset.inequalities, probe_ineq):
        slot_counts[c.name] = r.shape[1]
    kal = KalState.fresh(cset, n, slot_counts, mu=config.mu0, mu_mult=config.mu_mult)

    torch.manual_seed(config.seed)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    y_train_n = model.normalize_fine(train_data.targets)
    y_val_n = model.normalize_fine(val_data.targets)

    class_targets_n = class_sorted_n = None
    if target_sets is not None:
        if len(target_sets) != n:
            raise DataError("target_sets must align with the training examples")
        kmax = max(len(ts) for ts in target_sets)
        if kmax > 1:
            pools = torch.empty((n, kmax, train_data.targets.shape[1]), dtype=torch.float32)
            for i, ts in enumerate(target_sets):
                vals = [torch.as_tensor(t.values.copy(), dtype=torch.float32) for t in ts]
                while len(vals) < kmax:
                    vals.append(vals[0].clone())
                pools[i] = torch.stack(vals)
            class_targets_n = model.normalize_fine(pools)
            class_sorted_n, _ = torch.sort(class_targets_n, dim=-1)

    history: list[dict] = []
    epoch_log: list[dict] = []
    best_metric = math.inf
    best_state = copy.deepcopy(model.state_dict())
    best_outer = 0
    constrained = len(cset) > 0
    max_outer = config.max_outer if constrained else 1
    prev_violation = None

    for outer in range(max_outer):
        inner_best = math.inf
        inner_best_state = None
        stall = 0
        epochs_run = 0
        for epoch in range(config.epochs):
            rng = np.random.default_rng((config.seed, outer, epoch))
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                ids = order[start : start + config.batch_size]
                idx = torch.as_tensor(ids, dtype=torch.long)
                out = model(train_data.inputs[idx])
                loss = l_combine(model.normalize_fine(out), y_train_n[idx], config.emd_weight)
                if constrained:
                    eq, ineq = batch_residuals(
                        cset, out, train_data, ids=ids, smooth=True,
                        sharpness=config.sharpness, scales=scales,
                    )
                    loss = loss + (n / len(ids)) * penalty_terms(cset, eq, ineq, kal, ids)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"loss became non-finite at outer iteration {outer}", outer_iter=outer
                    )
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
            epochs_run = epoch + 1

            # validation objective: combine plus quadratic penalties (val
            # examples carry no multipliers, so lambda = 0 there)
            with torch.no_grad():
                model.eval()
                val_out = model(val_data.inputs)
                val_combine = float(
                    l_combine(model.normalize_fine(val_out), y_val_n, config.emd_weight)
                )
                val_obj = val_combine
                if constrained:
                    veq, vineq = batch_residuals(
                        cset, val_out, val_data, smooth=True,
                        sharpness=config.sharpness, scales=scales,
                    )
                    quad = sum(float(r.square().sum()) for r in veq)
                    quad += sum(float(r.clamp_min(0).square().sum()) for r in vineq)
                    val_obj = val_combine + kal.mu * quad / max(len(val_data), 1) * n
                model.train()
            epoch_log.append(
                {"outer": outer, "epoch": epoch, "train_loss": float(loss.detach()),
                 "val_combine": val_combine, "val_obj": val_obj}
            )
            if val_obj < inner_best - 1e-12:
                inner_best = val_obj
                inner_best_state = copy.deepcopy(model.state_dict())
                stall = 0
            else:
                stall += 1
                if stall > config.patience:
                    break
        if inner_best_state is not None:
            model.load_state_dict(inner_best_state)

        _, (smooth_eq, smooth_ineq), (exact_eq, exact_ineq) = _full_pass(
            model, train_data, cset, scales, config.sharpness
        )
        train_violation = (
            _mean_violation(cset, exact_eq, exact_ineq) if constrained else 0.0
        )
        _, _, (vexact_eq, vexact_ineq) = _full_pass(
            model, val_data, cset, scales, config.sharpness
        )
        val_violation = _mean_violation(cset, vexact_eq, vexact_ineq) if constrained else 0.0
        with torch.no_grad():
            model.eval()
            vc = float(
                l_combine(model.normalize_fine(model(val_data.inputs)), y_val_n,
                          config.emd_weight)
            )
            model.train()

        row = {
            "outer": outer,
            "mu": kal.mu,
            "train_violation": train_violation,
            "val_violation": val_violation,
            "val_combine": vc,
            "epochs_run": epochs_run,
        }
        history.append(row)

        metric = val_violation if constrained else vc
        if metric < best_metric:
            best_metric = metric
            best_state = copy.deepcopy(model.state_dict())
            best_outer = outer

        if constrained:
            kal = update_multipliers(
                kal,
                [r.numpy().astype(np.float64) for r in smooth_eq],
                [r.numpy().astype(np.float64) for r in smooth_ineq],
                reported_violation={"outer": outer, "mean": train_violation},
            )
            if prev_violation is not None and prev_violation > 0:
                improvement = (prev_violation - train_violation) / prev_violation
                if improvement < config.saturation_tol:
                    break
            if train_violation == 0.0:
                break
            prev_violation = train_violation

    model.load_state_dict(best_state)
    model.eval()
    model.meta = dict(
        model.meta,
        trained=True,
        mode="kal" if constrained else "plain",
        seed=config.seed,
        best_outer=best_outer,
    )
    return FitResult(model=model, kal=kal, history=history, epoch_log=epoch_log,
                     best_outer=best_outer)
