"""Synthetic correlated telemetry: a single bursty queue simulated per
millisecond, plus dataset assembly into coarse/fine training windows.

The generator is a drop-tail queue fed by Poisson background traffic and an
on/off burst process.  It emits integer channels (queue length, packets sent,
packets dropped) and real-valued analogs derived from them (bytes sent,
retransmitted bytes, bytes sent while the link ran hot) so that every stock
constraint has a channel to bind against.  Conservation and work-conservation
hold exactly by construction, which makes ground-truth windows satisfy the
constraint library with zero residual.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .constraints import ConstraintSet, builtin_library
from .dataio import ingest_csv  # re-exported: CSV ingestion shares the dataset IO
from .errors import ConfigError, DataError
from .series import CoarsenerSpec, FineSeries, WindowExample, make_windows

__all__ = [
    "TrafficConfig",
    "SimTrace",
    "simulate",
    "simulate_trace",
    "DatasetSplits",
    "build_dataset",
    "expand_preset",
    "load_preset",
    "make_collision_dataset",
    "queue_entry_specs",
    "rate_entry_specs",
    "default_constraints",
    "ingest_csv",
    "BURST_FRACTION",
]

#: Fraction of line rate above which a millisecond counts as running hot;
#: shared with the congestion-implies-burst constraint.
BURST_FRACTION = 0.5


@dataclass(frozen=True)
class TrafficConfig:
    """Knobs for one simulated trace."""

    duration_ms: int = 8000
    service_rate: float = 4.0          # packets/ms the queue can drain
    capacity: int = 600                # buffer cap, packets
    background_load: float = 0.15      # fraction of service_rate
    burst_rate: float = 12.0           # packets/ms while a burst is on
    burst_duration_ms: tuple[int, int] = (5, 60)
    burst_gap_ms: tuple[int, int] = (60, 260)
    mtu_bytes: float = 1500.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ConfigError("duration_ms must be positive")
        if not 0.0 <= self.background_load <= 1.0:
            raise ConfigError("background_load must lie in [0, 1]")
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        if self.service_rate <= 0:
            raise ConfigError("service_rate must be positive")
        if self.burst_rate <= self.service_rate:
            raise ConfigError("burst_rate must exceed service_rate so bursts can build queues")
        lo, hi = self.burst_duration_ms
        if lo < 0 or hi < lo:
            raise ConfigError("burst_duration_ms must be a (min, max) pair with 0 <= min <= max")
        lo, hi = self.burst_gap_ms
        if lo < 1 or hi < lo:
            raise ConfigError("burst_gap_ms must be a (min, max) pair with 1 <= min <= max")

    @property
    def bandwidth_bytes(self) -> float:
        return self.service_rate * self.mtu_bytes


@dataclass(frozen=True)
class SimTrace:
    """Simulated channels plus the true burst schedule (for burst-detection
    validation) and the config that produced them."""

    channels: Mapping[str, FineSeries]
    burst_intervals: tuple[tuple[int, int], ...]
    config: TrafficConfig


def simulate_trace(cfg: TrafficConfig) -> SimTrace:
    """Run the queue model for one trace.

    Per millisecond: arrivals are Poisson at background plus burst rate;
    the queue sends up to its per-step service capacity (at least one packet
    whenever it holds any, so the scheduler is work-conserving); the
    remainder above the buffer cap is dropped; what's left carries over.
    """
    rng = np.random.default_rng(cfg.seed)
    T = cfg.duration_ms

    on = np.zeros(T, dtype=bool)
    bursts: list[tuple[int, int]] = []
    glo, ghi = cfg.burst_gap_ms
    dlo, dhi = cfg.burst_duration_ms
    t = int(rng.integers(glo, ghi + 1))
    while t < T:
        d = int(rng.integers(dlo, dhi + 1))
        if d > 0:
            end = min(t + d, T)
            on[t:end] = True
            bursts.append((t, end))
            t = end
        t += int(rng.integers(glo, ghi + 1))

    rate = cfg.background_load * cfg.service_rate + np.where(on, cfg.burst_rate, 0.0)
    arrivals = rng.poisson(rate)

    qlen = np.zeros(T, dtype=np.int64)
    sent = np.zeros(T, dtype=np.int64)
    drop = np.zeros(T, dtype=np.int64)
    q = 0
    cap_acc = 0.0
    for i in range(T):
        avail = q + int(arrivals[i])
        cap_acc += cfg.service_rate
        cap = int(cap_acc)
        cap_acc -= cap
        cap = max(cap, 1)
        s = min(avail, cap)
        rem = avail - s
        d = max(0, rem - cfg.capacity)
        q = rem - d
        sent[i] = s
        drop[i] = d
        qlen[i] = q

    mtu = cfg.mtu_bytes
    util = sent.astype(np.float64) * mtu
    retransmit = np.minimum(drop, sent).astype(np.float64) * mtu
    hot = util >= BURST_FRACTION * cfg.bandwidth_bytes
    congestion = np.where(hot, util, 0.0)

    channels = {
        "qlen": FineSeries("qlen", qlen, 1.0, "nonneg_int"),
        "sent": FineSeries("sent", sent, 1.0, "nonneg_int"),
        "drop": FineSeries("drop", drop, 1.0, "nonneg_int"),
        "util": FineSeries("util", util, 1.0, "nonneg_real"),
        "retransmit": FineSeries("retransmit", retransmit, 1.0, "nonneg_real"),
        "congestion": FineSeries("congestion", congestion, 1.0, "nonneg_real"),
    }
    return SimTrace(channels, tuple(bursts), cfg)


def simulate(cfg: TrafficConfig) -> dict[str, FineSeries]:
    """Simulated channels only (see simulate_trace for the burst schedule)."""
    return dict(simulate_trace(cfg).channels)


# --------------------------------------------------------------------------
# window assembly


def queue_entry_specs(zoom: int, periodic_offset: int = 0) -> list[tuple[str, CoarsenerSpec]]:
    """Monitoring layout for the queue-length task: per-interval max and
    periodic queue samples plus packet and drop counts."""
    return [
        ("qlen", CoarsenerSpec("max", zoom)),
        ("qlen", CoarsenerSpec("periodic", zoom, periodic_offset)),
        ("sent", CoarsenerSpec("sum", zoom)),
        ("drop", CoarsenerSpec("sum", zoom)),
    ]


def rate_entry_specs(zoom: int) -> list[tuple[str, CoarsenerSpec]]:
    """Monitoring layout for the link-utilization task: aggregated bytes plus
    retransmit and congestion byte counts."""
    return [
        ("util", CoarsenerSpec("sum", zoom)),
        ("retransmit", CoarsenerSpec("sum", zoom)),
        ("congestion", CoarsenerSpec("sum", zoom)),
    ]


def default_constraints(flavor: str = "queue") -> ConstraintSet:
    """Stock constraints bound to the generator's channel names."""
    if flavor == "queue":
        return builtin_library(
            {"max": "qlen.max", "periodic": "qlen.periodic", "out_count": "sent.sum"},
            names=("max_reported", "periodic_samples", "busy_le_sent"),
        )
    if flavor == "rate":
        return builtin_library(
            {
                "sum": "util.sum",
                "retransmit_sum": "retransmit.sum",
                "congestion_sum": "congestion.sum",
                "burst_fraction": BURST_FRACTION,
            },
            names=(
                "sum_reported",
                "sum_ge_retransmit",
                "sum_ge_congestion",
                "congestion_burst",
                "cwnd_caps_volume",
                "rwnd_idle",
            ),
        )
    raise ConfigError(f"unknown dataset flavor {flavor!r}")


def _window_scalars(cfg: TrafficConfig, zoom: int):
    """Per-window side measurements for the transfer-style constraints."""

    def scalars_fn(window_channels: Mapping[str, FineSeries], start: int) -> dict[str, float]:
        util = window_channels["util"].values
        elapsed = float(zoom) * window_channels["util"].granularity_ms
        interval_sums = util.reshape(-1, zoom).sum(axis=1)
        mss = cfg.mtu_bytes
        snd_cwnd = float(max(1.0, math.ceil(interval_sums.max() / mss)))
        rng = np.random.default_rng((cfg.seed, start, 7))
        rtt = elapsed * (2.0 if rng.random() < 0.5 else 0.5)
        rwnd_limited = 2.0 * elapsed if float(util.sum()) == 0.0 else 0.0
        return {
            "bandwidth": cfg.bandwidth_bytes,
            "mss": mss,
            "snd_cwnd": snd_cwnd,
            "elapsed_time": elapsed,
            "rtt": rtt,
            "rwnd_limited": rwnd_limited,
        }

    return scalars_fn


@dataclass(frozen=True)
class DatasetSplits:
    train: list[WindowExample]
    val: list[WindowExample]
    test: list[WindowExample]

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def trace_windows(
    trace: SimTrace,
    zoom: int,
    context_len: int,
    flavor: str = "queue",
    stride: int | None = None,
) -> list[WindowExample]:
    if flavor == "queue":
        specs = queue_entry_specs(zoom)
        target = "qlen"
    elif flavor == "rate":
        specs = rate_entry_specs(zoom)
        target = "util"
    else:
        raise ConfigError(f"unknown dataset flavor {flavor!r}")
    return make_windows(
        trace.channels,
        specs,
        target,
        context_len,
        stride=stride,
        scalars_fn=_window_scalars(trace.config, zoom),
    )


def build_dataset(
    cfgs: Sequence[TrafficConfig],
    zoom: int,
    context_len: int = 5,
    flavor: str = "queue",
    stride: int | None = None,
    holdout: Sequence[bool] | None = None,
) -> DatasetSplits:
    """Simulate every config and split the resulting windows by source trace
    (8/1/1 round-robin).  Traces flagged in ``holdout`` go entirely to the
    test split so the test set contains settings unseen during training.
    """
    if not cfgs:
        raise ConfigError("need at least one traffic config")
    if holdout is None:
        holdout = [False] * len(cfgs)
    if len(holdout) != len(cfgs):
        raise ConfigError("holdout flags must align with configs")

    train: list[WindowExample] = []
    val: list[WindowExample] = []
    test: list[WindowExample] = []
    regular = 0
    for cfg, held in zip(cfgs, holdout):
        windows = trace_windows(simulate_trace(cfg), zoom, context_len, flavor, stride)
        if held:
            test.extend(windows)
            continue
        slot = regular % 10
        regular += 1
        if slot == 8:
            val.extend(windows)
        elif slot == 9:
            test.extend(windows)
        else:
            train.extend(windows)
    if not train or not val or not test:
        raise ConfigError(
            f"too few traces to populate all splits: got {len(cfgs)} configs "
            f"-> train={len(train)} val={len(val)} test={len(test)} windows"
        )
    return DatasetSplits(train, val, test)


# --------------------------------------------------------------------------
# presets


def load_preset(name_or_path: str) -> dict:
    """Load a generator preset: a builtin name ("bursty", "persistent") or a
    path to a JSON file of the same shape."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    try:
        text = resources.files("netimpute.presets").joinpath(f"{name_or_path}.json").read_text()
    except (FileNotFoundError, ModuleNotFoundError):
        raise ConfigError(f"unknown preset {name_or_path!r} and no such file") from None
    return json.loads(text)


def expand_preset(preset: Mapping, seed: int) -> tuple[list[TrafficConfig], list[bool]]:
    """Turn a preset (template + variants + traces_per_variant) into concrete
    per-trace configs with derived seeds.  The i-th trace of variant v gets
    seed = seed*10_000 + v*100 + i, so runs are reproducible from one seed.
    """
    template = dict(preset.get("template", {}))
    variants = preset.get("variants", [{}])
    per = int(preset.get("traces_per_variant", 4))
    cfgs: list[TrafficConfig] = []
    flags: list[bool] = []
    for v, variant in enumerate(variants):
        overrides = {k: val for k, val in variant.items() if k != "holdout"}
        held = bool(variant.get("holdout", False))
        for i in range(per):
            params = {**template, **overrides}
            for key in ("burst_duration_ms", "burst_gap_ms"):
                if key in params:
                    params[key] = tuple(params[key])
            cfgs.append(TrafficConfig(**params, seed=seed * 10_000 + v * 100 + i))
            flags.append(held)
    return cfgs, flags


# --------------------------------------------------------------------------
# collision fixture: identical coarse inputs, time-shifted burst targets


def make_collision_dataset(
    zoom: int = 50,
    context_len: int = 5,
    n_groups: int = 8,
    members_per_group: int = 4,
    seed: int = 0,
) -> tuple[list[WindowExample], list[list[int]]]:
    """Windows engineered so groups share one coarse bundle but hold bursts
    at different positions -- the ambiguity that target refinement exists to
    absorb.  Returns the windows and the ground-truth groups (example ids).
    """
    rng = np.random.default_rng(seed)
    L = zoom * context_len
    examples: list[WindowExample] = []
    groups: list[list[int]] = []
    for g in range(n_groups):
        height = int(rng.integers(30, 110))
        dur = int(rng.integers(4, max(5, zoom // 3)))
        interval = int(rng.integers(0, context_len))
        positions = rng.choice(
            np.arange(1, zoom - dur), size=members_per_group, replace=False
        )
        member_ids = []
        for pos in positions:
            qlen = np.zeros(L)
            start = interval * zoom + int(pos)
            qlen[start : start + dur] = height
            sent = np.where(qlen > 0, 2.0, 0.0)
            drop = np.zeros(L)
            channels = {
                "qlen": FineSeries("qlen", qlen, 1.0, "nonneg_int"),
                "sent": FineSeries("sent", sent, 1.0, "nonneg_int"),
                "drop": FineSeries("drop", drop, 1.0, "nonneg_int"),
            }
            windows = make_windows(
                channels, queue_entry_specs(zoom), "qlen", context_len, stride=L
            )
            member_ids.append(len(examples))
            examples.append(windows[0])
        groups.append(member_ids)
    return examples, groups
