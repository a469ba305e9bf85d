"""Core time-series types, coarsening operators, and windowing.

A fine-grained series holds one telemetry channel (queue length, packet
counts, rates) at millisecond-scale granularity.  Monitoring tools reduce it
to coarse measurements by applying an aggregation operator over blocks of
``zoom`` consecutive fine steps; this module implements those operators and
the slicing of aligned channels into training windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

DOMAINS = ("nonneg_real", "nonneg_int")
COARSEN_KINDS = ("max", "min", "mean", "sum", "periodic", "count_positive")

#: Strict-positivity gap used by count_positive and the repair solver.
#: Integer channels count values >= 1; real channels count values > 1e-6.
EPS_POSITIVE_REAL = 1e-6
EPS_POSITIVE_INT = 1.0


def positive_threshold(domain: str) -> float:
    """Gap below which a value counts as zero for the given domain."""
    return EPS_POSITIVE_INT if domain == "nonneg_int" else EPS_POSITIVE_REAL


def count_positive(values: np.ndarray, domain: str) -> np.ndarray:
    """Count strictly positive entries along the last axis."""
    if domain == "nonneg_int":
        return np.sum(values >= EPS_POSITIVE_INT, axis=-1).astype(np.float64)
    return np.sum(values > EPS_POSITIVE_REAL, axis=-1).astype(np.float64)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FineSeries:
    """One fine-grained telemetry channel.

    values are non-negative; integer-domain channels (queue lengths, packet
    counts) must hold whole numbers, rate-like channels are real-valued.
    """

    channel: str
    values: np.ndarray
    granularity_ms: float = 1.0
    domain: str = "nonneg_real"

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_1d(self.values)))
        if self.values.ndim != 1 or self.values.size == 0:
            raise DataError(f"channel {self.channel!r}: values must be a non-empty 1-D sequence")
        if self.domain not in DOMAINS:
            raise DataError(f"channel {self.channel!r}: unknown domain {self.domain!r}")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"channel {self.channel!r}: non-finite values")
        if np.any(self.values < 0):
            bad = int(np.argmax(self.values < 0))
            raise DataError(f"channel {self.channel!r}: negative value at index {bad}")
        if self.domain == "nonneg_int" and not np.all(self.values == np.round(self.values)):
            bad = int(np.argmax(self.values != np.round(self.values)))
            raise DataError(f"channel {self.channel!r}: non-integer value at index {bad}")

    def __len__(self) -> int:
        return int(self.values.size)

    def slice(self, start: int, stop: int) -> "FineSeries":
        return FineSeries(self.channel, self.values[start:stop], self.granularity_ms, self.domain)

    def with_values(self, values: np.ndarray) -> "FineSeries":
        return FineSeries(self.channel, values, self.granularity_ms, self.domain)


@dataclass(frozen=True)
class CoarsenerSpec:
    """An aggregation operator applied per block of ``window`` fine steps.

    ``window`` is the zoom factor (fine steps per coarse step).  periodic
    picks the value at ``offset`` within each block; count_positive counts
    strictly positive fine values.
    """

    kind: str
    window: int
    offset: int = 0

    def __post_init__(self):
        if self.kind not in COARSEN_KINDS:
            raise DataError(f"unknown coarsener kind {self.kind!r}")
        if self.window < 2:
            raise DataError(f"coarsening window must be >= 2, got {self.window}")
        if self.kind == "periodic" and not (0 <= self.offset < self.window):
            raise DataError(f"periodic offset {self.offset} outside [0, {self.window})")


def coarsen(series: FineSeries, spec: CoarsenerSpec, domain: str | None = None) -> np.ndarray:
    """Apply a coarsening operator to a fine series.

    The series length must be a multiple of the spec window; the result has
    one value per block.
    """
    return coarsen_values(series.values, spec, domain or series.domain)


def coarsen_values(values: np.ndarray, spec: CoarsenerSpec, domain: str = "nonneg_real") -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    if n % spec.window != 0:
        raise DataError(
            f"series length {n} is not a multiple of the coarsening window {spec.window}"
        )
    blocks = values.reshape(values.shape[:-1] + (n // spec.window, spec.window))
    if spec.kind == "max":
        return blocks.max(axis=-1)
    if spec.kind == "min":
        return blocks.min(axis=-1)
    if spec.kind == "mean":
        return blocks.mean(axis=-1)
    if spec.kind == "sum":
        return blocks.sum(axis=-1)
    if spec.kind == "periodic":
        return blocks[..., spec.offset].copy()
    if spec.kind == "count_positive":
        return count_positive(blocks, domain)
    raise DataError(f"unknown coarsener kind {spec.kind!r}")  # pragma: no cover


def upsample_repeat(coarse: np.ndarray, window: int) -> np.ndarray:
    """Expand each coarse value into ``window`` identical fine steps."""
    return np.repeat(np.asarray(coarse, dtype=np.float64), window, axis=-1)


def entry_name(channel: str, kind: str) -> str:
    return f"{channel}.{kind}"


@dataclass(frozen=True)
class BundleEntry:
    """One coarse measurement stream: a channel observed through one operator."""

    channel: str
    spec: CoarsenerSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_1d(self.values)))

    @property
    def name(self) -> str:
        return entry_name(self.channel, self.spec.kind)


@dataclass(frozen=True)
class CoarseBundle:
    """Aligned coarse measurements over one context window of ``context_len``
    coarse intervals, all sharing the same zoom factor and time origin."""

    entries: tuple[BundleEntry, ...]
    context_len: int
    zoom: int

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate bundle entries: {names}")
        for e in self.entries:
            if e.values.size != self.context_len:
                raise DataError(
                    f"entry {e.name}: {e.values.size} coarse values, expected {self.context_len}"
                )
            if e.spec.window != self.zoom:
                raise DataError(f"entry {e.name}: window {e.spec.window} != bundle zoom {self.zoom}")

    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def get(self, name: str) -> BundleEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise DataError(f"bundle has no entry {name!r}; available: {list(self.names())}")

    def has(self, name: str) -> bool:
        return any(e.name == name for e in self.entries)

    def measurements(self) -> dict[str, np.ndarray]:
        return {e.name: e.values for e in self.entries}

    def layout(self) -> tuple[tuple[str, str, int, int], ...]:
        """Hashable (channel, kind, window, offset) layout key."""
        return tuple((e.channel, e.spec.kind, e.spec.window, e.spec.offset) for e in self.entries)


@dataclass(frozen=True)
class WindowExample:
    """A training pair: coarse bundle input and the fine ground-truth target,
    plus side measurements used only as constants inside constraints."""

    input: CoarseBundle
    target: FineSeries
    scalars: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.input.context_len * self.input.zoom
        if len(self.target) != expected:
            raise DataError(
                f"target length {len(self.target)} != context_len*zoom = {expected}"
            )

    def check_consistency(self, fine_channels: Mapping[str, FineSeries] | None = None,
                          atol: float = 1e-9) -> None:
        """Verify that re-coarsening the ground-truth channels reproduces the
        stored coarse values.  With no channels given, checks the target
        channel's entries only."""
        for e in self.input.entries:
            if fine_channels is not None and e.channel in fine_channels:
                fine = fine_channels[e.channel]
            elif e.channel == self.target.channel:
                fine = self.target
            else:
                continue
            got = coarsen(fine, e.spec)
            if not np.allclose(got, e.values, atol=atol, rtol=0):
                raise DataError(f"entry {e.name} inconsistent with fine channel {e.channel!r}")


def make_windows(
    channels: Mapping[str, FineSeries],
    specs: Sequence[tuple[str, CoarsenerSpec]],
    target_channel: str,
    context_len: int,
    stride: int | None = None,
    scalars_fn: Callable[[Mapping[str, FineSeries], int], Mapping[str, float]] | None = None,
) -> list[WindowExample]:
    """Slice aligned fine channels into sliding windows of
    ``context_len * zoom`` fine steps and coarsen each per the specs.

    ``scalars_fn(window_channels, start)`` may supply per-window side
    measurements.  Windows are self-consistent by construction: re-coarsening
    any window's channels reproduces its stored coarse values.
    """
    if not specs:
        raise DataError("at least one coarsening spec is required")
    if target_channel not in channels:
        raise DataError(f"target channel {target_channel!r} not among channels {sorted(channels)}")
    zooms = {spec.window for _, spec in specs}
    if len(zooms) != 1:
        raise DataError(f"all specs must share one zoom factor, got {sorted(zooms)}")
    zoom = zooms.pop()

    lengths = {name: len(s) for name, s in channels.items()}
    if len(set(lengths.values())) != 1:
        raise DataError(f"channels have unequal lengths: {lengths}")
    grans = {s.granularity_ms for s in channels.values()}
    if len(grans) != 1:
        raise DataError(f"channels have mixed granularities: {sorted(grans)}")
    for ch, _ in specs:
        if ch not in channels:
            raise DataError(f"spec references unknown channel {ch!r}")

    total = next(iter(lengths.values()))
    win_len = context_len * zoom
    if stride is None:
        stride = win_len
    if stride <= 0:
        raise DataError(f"stride must be positive, got {stride}")
    if total < win_len:
        return []

    out: list[WindowExample] = []
    for start in range(0, total - win_len + 1, stride):
        stop = start + win_len
        window_channels = {name: s.slice(start, stop) for name, s in channels.items()}
        entries = tuple(
            BundleEntry(ch, spec, coarsen(window_channels[ch], spec))
            for ch, spec in specs
        )
        bundle = CoarseBundle(entries, context_len=context_len, zoom=zoom)
        scalars = dict(scalars_fn(window_channels, start)) if scalars_fn else {}
        out.append(WindowExample(bundle, window_channels[target_channel], scalars))
    return out
