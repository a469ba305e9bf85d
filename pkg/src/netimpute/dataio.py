"""File formats: line-delimited window records and wide CSV for fine series.

A window file is JSON-lines: a single header record carrying granularity,
zoom, context length, target metadata, and the coarse-entry layout, followed
by one record per window.  Targets are optional so the same format serves
both labelled datasets and coarse-only inference inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .series import (
    BundleEntry,
    CoarseBundle,
    CoarsenerSpec,
    FineSeries,
    WindowExample,
    entry_name,
)

FORMAT_NAME = "netimpute-windows"
FORMAT_VERSION = 1


def write_atomic(path: str | Path, data: str | bytes) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _floats(values: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(values)]


def dataset_header(examples: Sequence[WindowExample]) -> dict:
    first = examples[0]
    return {
        "kind": "header",
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "granularity_ms": first.target.granularity_ms,
        "zoom": first.input.zoom,
        "context_len": first.input.context_len,
        "target_channel": first.target.channel,
        "target_domain": first.target.domain,
        "entries": [
            {
                "channel": e.channel,
                "op": e.spec.kind,
                "window": e.spec.window,
                "offset": e.spec.offset,
            }
            for e in first.input.entries
        ],
        "scalar_keys": sorted(first.scalars),
    }


def dump_windows(examples: Sequence[WindowExample], with_targets: bool = True) -> str:
    """Serialize windows to the JSON-lines record format."""
    if not examples:
        raise DataError("cannot serialize an empty window list")
    lines = [json.dumps(dataset_header(examples), sort_keys=True)]
    for i, ex in enumerate(examples):
        rec = {
            "kind": "window",
            "id": i,
            "coarse": {e.name: _floats(e.values) for e in ex.input.entries},
            "target": _floats(ex.target.values) if with_targets else None,
            "scalars": {k: float(v) for k, v in sorted(ex.scalars.items())},
        }
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_windows(path: str | Path, examples: Sequence[WindowExample],
                  with_targets: bool = True) -> None:
    write_atomic(path, dump_windows(examples, with_targets=with_targets))


def load_windows(path: str | Path) -> tuple[list[WindowExample], dict]:
    """Read a window file back into examples plus its header.

    Records without targets get an all-zero placeholder target (the header
    marks them via ``"targets": false``)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such dataset file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_NAME:
        raise DataError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {header.get('version')}")

    specs = [
        (e["channel"], CoarsenerSpec(e["op"], int(e["window"]), int(e.get("offset", 0))))
        for e in header["entries"]
    ]
    zoom = int(header["zoom"])
    context_len = int(header["context_len"])
    target_len = zoom * context_len
    gran = float(header["granularity_ms"])
    tchan, tdom = header["target_channel"], header["target_domain"]

    examples: list[WindowExample] = []
    has_targets = True
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        if rec.get("kind") != "window":
            raise DataError(f"{path}:{lineno}: expected a window record")
        entries = []
        for ch, spec in specs:
            name = entry_name(ch, spec.kind)
            if name not in rec["coarse"]:
                raise DataError(f"{path}:{lineno}: missing coarse entry {name!r}")
            entries.append(BundleEntry(ch, spec, np.asarray(rec["coarse"][name])))
        bundle = CoarseBundle(tuple(entries), context_len=context_len, zoom=zoom)
        tvals = rec.get("target")
        if tvals is None:
            has_targets = False
            tvals = np.zeros(target_len)
        target = FineSeries(tchan, np.asarray(tvals, dtype=np.float64), gran, tdom)
        examples.append(WindowExample(bundle, target, rec.get("scalars", {})))
    header["targets"] = has_targets
    return examples, header


# --------------------------------------------------------------------------
# imputed-series files: same framing, channels are imputed fine windows


def write_imputed(path: str | Path, series: Sequence[np.ndarray], header: Mapping) -> None:
    """One record per window with the imputed fine values."""
    out = [json.dumps({**dict(header), "kind": "header"}, sort_keys=True)]
    for i, values in enumerate(series):
        out.append(json.dumps({"kind": "imputed", "id": i, "values": _floats(values)},
                              sort_keys=True))
    write_atomic(path, "\n".join(out) + "\n")


def load_imputed(path: str | Path) -> tuple[list[np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such imputed file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty imputed file")
    header = json.loads(lines[0])
    series = []
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        if rec.get("kind") != "imputed":
            raise DataError(f"{path}:{lineno}: expected an imputed record")
        series.append(np.asarray(rec["values"], dtype=np.float64))
    return series, header


# --------------------------------------------------------------------------
# wide CSV for fine channels


def write_fine_csv(path: str | Path, channels: Mapping[str, FineSeries]) -> None:
    """Wide CSV, one column per channel; the first line is a header comment
    carrying the shared granularity."""
    if not channels:
        raise DataError("no channels to write")
    grans = {s.granularity_ms for s in channels.values()}
    lengths = {len(s) for s in channels.values()}
    if len(grans) != 1 or len(lengths) != 1:
        raise DataError("channels must share granularity and length")
    names = list(channels)
    rows = [f"# granularity_ms={grans.pop()}"]
    rows.append(",".join(names))
    arrays = [channels[n].values for n in names]
    for i in range(lengths.pop()):
        rows.append(",".join(repr(float(a[i])) for a in arrays))
    write_atomic(path, "\n".join(rows) + "\n")


def ingest_csv(path: str | Path, schema: Mapping) -> dict[str, FineSeries]:
    """Parse a wide CSV of fine-grained channels.

    ``schema`` holds ``granularity_ms`` and a ``channels`` map of
    name -> {"column": ..., "domain": ...}.  Negative values, missing
    columns, and ragged rows are rejected with the offending row number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such CSV file: {path}")
    if "channels" not in schema or "granularity_ms" not in schema:
        raise DataError("schema must define granularity_ms and channels")
    gran = float(schema["granularity_ms"])

    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        offset = 1
        if not first.startswith("#"):
            fh.seek(0)
            offset = 0
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no header row") from None
        columns = [c.strip() for c in columns]
        col_index: dict[str, int] = {}
        for name, chspec in schema["channels"].items():
            col = chspec.get("column", name)
            if col not in columns:
                raise DataError(f"{path}: missing column {col!r} for channel {name!r}")
            col_index[name] = columns.index(col)

        data: dict[str, list[float]] = {name: [] for name in col_index}
        for rowno, row in enumerate(reader, start=offset + 2):
            if not row:
                continue
            if len(row) != len(columns):
                raise DataError(f"{path}: row {rowno}: {len(row)} fields, expected {len(columns)}")
            for name, idx in col_index.items():
                try:
                    v = float(row[idx])
                except ValueError:
                    raise DataError(f"{path}: row {rowno}: bad value {row[idx]!r}") from None
                if v < 0:
                    raise DataError(f"{path}: row {rowno}: negative value in column {name!r}")
                data[name].append(v)

    out = {}
    for name, values in data.items():
        domain = schema["channels"][name].get("domain", "nonneg_real")
        out[name] = FineSeries(name, np.asarray(values), gran, domain)
    return out
