"""Target refinement for coarse-grained collisions.

Distinct fine-grained targets can share (near-)identical coarse inputs; a
model trained pointwise against such data regresses to the useless average
of the scenarios.  The cure: find those example groups, pool their targets
into one class, and train class members against the nearest member of the
pool (the min-over-class loss) so the model commits to one plausible
scenario instead of blending them.

The grouping test uses a basic model trained on the raw data with the
combined loss only: two examples join a class when their targets are far
apart (RMSE above ``theta_far`` target standard deviations) but the basic
model cannot tell their inputs apart (outputs within ``theta_close``
standard deviations).  Classes are transitive closures of that pair
relation; everything else stays untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .dataio import write_atomic
from .errors import ConfigError, DataError
from .model import ImputationModel, l_combine
from .series import CoarseBundle, FineSeries, WindowExample

THETA_FAR = 0.5
THETA_CLOSE = 0.1


@dataclass(frozen=True)
class EquivalenceClass:
    """Examples sharing one indistinguishable coarse input but holding
    distinct plausible targets."""

    member_ids: tuple[int, ...]
    representative_input: CoarseBundle
    targets: tuple[FineSeries, ...]

    def __post_init__(self):
        if len(self.targets) < 2 or len(self.member_ids) != len(self.targets):
            raise DataError("an equivalence class needs >= 2 members with aligned targets")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _pairwise_rmse(rows: np.ndarray) -> np.ndarray:
    """[N, N] RMSE between rows of an [N, L] matrix."""
    sq = (rows**2).sum(axis=1)
    gram = rows @ rows.T
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * gram, 0.0)
    return np.sqrt(d2 / rows.shape[1])


def equivalence_test(
    dataset: Sequence[WindowExample],
    basic_model: ImputationModel,
    theta_far: float = THETA_FAR,
    theta_close: float = THETA_CLOSE,
) -> list[EquivalenceClass]:
    """Group examples whose targets are far apart while the basic model's
    outputs are close; thresholds are in units of the dataset target
    standard deviation."""
    if not basic_model.meta.get("trained", False):
        raise ConfigError("the equivalence test needs a trained basic model")
    if theta_far <= 0 or theta_close <= 0:
        raise ConfigError("theta_far and theta_close must be positive")

    n = len(dataset)
    targets = np.stack([ex.target.values for ex in dataset])
    sigma = float(targets.std())
    if sigma == 0.0:
        return []

    basic_model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, n, 256):
            batch = dataset[start : start + 256]
            x = torch.tensor(
                np.stack(
                    [np.stack([e.values for e in ex.input.entries], axis=-1) for ex in batch]
                ),
                dtype=torch.float32,
            )
            outs.append(basic_model(x).numpy())
    outputs = np.concatenate(outs).astype(np.float64)

    d_target = _pairwise_rmse(targets)
    d_output = _pairwise_rmse(outputs)
    far = d_target > theta_far * sigma
    close = d_output < theta_close * sigma
    pair = far & close
    np.fill_diagonal(pair, False)

    uf = _UnionFind(n)
    for i, j in zip(*np.nonzero(np.triu(pair, 1))):
        uf.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)

    classes = []
    for members in groups.values():
        if len(members) < 2:
            continue
        members = sorted(members)
        classes.append(
            EquivalenceClass(
                member_ids=tuple(members),
                representative_input=dataset[members[0]].input,
                targets=tuple(dataset[m].target for m in members),
            )
        )
    classes.sort(key=lambda c: c.member_ids[0])
    return classes


def l_class(out, targets: Sequence[FineSeries] | torch.Tensor, emd_weight: float = 1.0):
    """Minimum combined loss over the class targets; the gradient flows only
    through the closest member."""
    if isinstance(targets, torch.Tensor):
        stacked = targets
    else:
        if len(targets) == 0:
            raise DataError("empty target class")
        stacked = torch.as_tensor(
            np.stack([t.values for t in targets]), dtype=torch.float64
        )
    if not isinstance(out, torch.Tensor):
        out = torch.as_tensor(np.array(out, dtype=np.float64))
    losses = torch.stack([l_combine(out, t, emd_weight) for t in stacked])
    return losses.min()


@dataclass(frozen=True)
class RefinedDataset:
    """Same examples, but class members carry the pooled target set; the
    trainer dispatches the min-over-class loss for them."""

    examples: tuple[WindowExample, ...]
    target_sets: tuple[tuple[FineSeries, ...], ...]
    classes: tuple[EquivalenceClass, ...]

    def __len__(self) -> int:
        return len(self.examples)


def refine_dataset(
    dataset: Sequence[WindowExample], classes: Sequence[EquivalenceClass]
) -> RefinedDataset:
    """Replace class members' single targets with the class target set.
    Overlapping classes are merged; inputs and dataset size never change."""
    n = len(dataset)
    uf = _UnionFind(n)
    for cls in classes:
        for m in cls.member_ids:
            if not 0 <= m < n:
                raise DataError(f"class member id {m} outside the dataset")
            uf.union(cls.member_ids[0], m)
    merged: dict[int, list[int]] = {}
    touched = {m for cls in classes for m in cls.member_ids}
    for m in sorted(touched):
        merged.setdefault(uf.find(m), []).append(m)

    target_sets: list[tuple[FineSeries, ...]] = [(ex.target,) for ex in dataset]
    out_classes = []
    for members in merged.values():
        pool = tuple(dataset[m].target for m in members)
        for m in members:
            target_sets[m] = pool
        out_classes.append(
            EquivalenceClass(tuple(members), dataset[members[0]].input, pool)
        )
    out_classes.sort(key=lambda c: c.member_ids[0])
    return RefinedDataset(tuple(dataset), tuple(target_sets), tuple(out_classes))


# --------------------------------------------------------------------------
# sidecar serialization: classes are inspectable next to the dataset


def save_classes(path: str | Path, classes: Sequence[EquivalenceClass]) -> None:
    payload = {
        "kind": "equivalence-classes",
        "classes": [list(c.member_ids) for c in classes],
    }
    write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_classes(path: str | Path, dataset: Sequence[WindowExample]) -> list[EquivalenceClass]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "equivalence-classes":
        raise DataError(f"{path}: not an equivalence-class sidecar file")
    classes = []
    for members in payload["classes"]:
        members = sorted(int(m) for m in members)
        classes.append(
            EquivalenceClass(
                tuple(members),
                dataset[members[0]].input,
                tuple(dataset[m].target for m in members),
            )
        )
    return classes
