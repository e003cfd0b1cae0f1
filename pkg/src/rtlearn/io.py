"""CSV ingestion, dataset cache and model files.

Model file layout (all integers little-endian)::

    RTLEARN-MODEL\\n
    version: 1\\n
    kind: r2tl\\n
    dims: <d> <k>\\n
    length: <total bytes>\\n
    \\n
    section*            name (u16 length + UTF-8), type byte b'd' or b'b',
                        u64 count, payload (count float64 or count bytes)
    sha256 of everything above (32 bytes)

Doubles are written with ``<f8`` so every finite value (negative zero and
subnormals included) and every NaN payload round-trips bit-exactly.

Writers replace the target atomically (temporary file, ``fsync``, rename);
concurrent writers to the same path are the caller's responsibility.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .exceptions import (
    ChecksumError,
    ConfigError,
    DataError,
    ModelFileError,
    ModelKindError,
    VersionError,
)
from .pipeline.data import Series, TimeSeriesDataset, join_weather, resample_hourly
from .supervised import Normalization, R2tlConfig, TrainedModel

__all__ = [
    "CsvSpec",
    "PRESETS",
    "read_load_csv",
    "read_dataset",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_model",
    "load_model",
    "model_to_bytes",
    "model_from_bytes",
    "atomic_write",
    "FORMAT_VERSION",
    "MAGIC",
]

MAGIC = b"RTLEARN-MODEL\n"
FORMAT_VERSION = 1
_DIGEST = 32


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write(path, data) -> Path:
    """Write ``data`` (bytes or str) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CsvSpec:
    """Column mapping for one CSV channel.

    Columns are given by header name, or by 0-based position when the file
    has no header. ``delimiter=None`` picks comma or tab from the first line.
    ``timestamp_format`` is ``"auto"`` (epoch seconds if numeric, ISO-8601
    otherwise), ``"iso"`` or ``"epoch"``.
    """

    timestamp_column: str | int = "timestamp"
    value_column: str | int = "value"
    delimiter: str | None = None
    has_header: bool = True
    timestamp_format: str = "auto"

    def __post_init__(self):
        if self.timestamp_format not in ("auto", "iso", "epoch"):
            raise ConfigError(f"unknown timestamp format {self.timestamp_format!r}")


# Layouts assumed for the public datasets; adjust the column names if a
# particular export differs.
PRESETS = {
    "generic": CsvSpec(),
    "redd": CsvSpec(0, 1, delimiter=" ", has_header=False, timestamp_format="epoch"),
    "pecan": CsvSpec("localminute", "use", timestamp_format="iso"),
    "iawe": CsvSpec("timestamp", "W", timestamp_format="auto"),
}

_MISSING = {"", "nan", "na", "n/a", "null", "none"}


_SHORT_OFFSET = re.compile(r"(:\d{2}(?:\.\d+)?[+-]\d{2})$")


def _parse_timestamp(text: str, fmt: str) -> np.datetime64:
    text = text.strip()
    if fmt in ("auto", "epoch"):
        try:
            value = float(text)
        except ValueError:
            if fmt == "epoch":
                raise ValueError(f"not an epoch timestamp: {text!r}") from None
        else:
            if not np.isfinite(value):
                raise ValueError(f"non-finite epoch timestamp: {text!r}")
            return np.datetime64(int(round(value)), "s")
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    # Pecan Street style "-06" offsets; fromisoformat needs "-06:00" before 3.11
    iso = _SHORT_OFFSET.sub(r"\1:00", iso)
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from None
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.replace(microsecond=0), "s")


def _parse_value(text: str) -> float:
    t = text.strip()
    if t.lower() in _MISSING:
        return np.nan
    return float(t)


def _column_index(header, col, path):
    if isinstance(col, int):
        return col
    if header is None:
        raise ConfigError(f"{path}: column {col!r} given by name but the file has no header")
    names = [h.strip() for h in header]
    if col not in names:
        raise DataError(f"{path}: column {col!r} not found; header has {names}")
    return names.index(col)


def read_load_csv(path, spec: CsvSpec | str | None = None, *, name: str | None = None, on_error: str = "raise") -> Series:
    """Read one timestamped channel from a CSV file.

    Rows keep file order. Rows whose timestamp is not later than the previous
    row's are flagged in ``Series.non_monotone`` (by line number). A repeated
    timestamp is always an error. With ``on_error="raise"`` an unparseable
    row raises :class:`DataError` naming its line; with ``"reject"`` it is
    recorded in ``Series.rejected`` as ``(line, reason)`` so that parsed plus
    rejected rows always equals the number of data rows.
    """
    if isinstance(spec, str):
        if spec not in PRESETS:
            raise ConfigError(f"unknown CSV preset {spec!r}; expected one of {sorted(PRESETS)}")
        spec = PRESETS[spec]
    spec = spec or CsvSpec()
    if on_error not in ("raise", "reject"):
        raise ConfigError(f"on_error must be 'raise' or 'reject', got {on_error!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise DataError(f"{path}: file is empty")

    delim = spec.delimiter
    if delim is None:
        delim = "\t" if "\t" in lines[0] else ","
    if delim == " ":
        rows = [(i + 1, line.split()) for i, line in enumerate(lines)]
    else:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(lines, delimiter=delim))]
    rows = [(ln, r) for ln, r in rows if r and any(c.strip() for c in r)]

    header = None
    if spec.has_header:
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    ti = _column_index(header, spec.timestamp_column, path)
    vi = _column_index(header, spec.value_column, path)

    stamps, values, rejected, lines_ok = [], [], [], []
    for ln, row in rows:
        try:
            if max(ti, vi) >= len(row):
                raise ValueError(f"expected at least {max(ti, vi) + 1} fields, found {len(row)}")
            ts = _parse_timestamp(row[ti], spec.timestamp_format)
            try:
                v = _parse_value(row[vi])
            except ValueError:
                raise ValueError(f"not a number: {row[vi].strip()!r}") from None
        except ValueError as exc:
            if on_error == "raise":
                raise DataError(f"{path}:{ln}: {exc}") from None
            rejected.append((ln, str(exc)))
            continue
        stamps.append(ts)
        values.append(v)
        lines_ok.append(ln)

    ts_arr = np.array(stamps, dtype="datetime64[s]")
    if ts_arr.size:
        order = np.argsort(ts_arr, kind="stable")
        dup = np.flatnonzero(ts_arr[order][1:] == ts_arr[order][:-1])
        if dup.size:
            a, b = order[dup[0]], order[dup[0] + 1]
            raise DataError(
                f"{path}: duplicate timestamp {ts_arr[a]} on lines {lines_ok[min(a, b)]} and {lines_ok[max(a, b)]}"
            )
    non_mono = [lines_ok[i] for i in range(1, len(ts_arr)) if ts_arr[i] <= ts_arr[i - 1]]
    label = name or (str(spec.value_column) if isinstance(spec.value_column, str) else path.stem)
    return Series(ts_arr, np.asarray(values, dtype=float), label, rejected, non_mono)


def _sorted(series: Series) -> Series:
    order = np.argsort(series.timestamps, kind="stable")
    return Series(series.timestamps[order], series.values[order], series.name, series.rejected, series.non_monotone)


def read_dataset(
    load_path,
    weather_path,
    *,
    load_spec: CsvSpec | str | None = None,
    temperature_column="temperature",
    humidity_column="humidity",
    weather_timestamp_column="timestamp",
    weather_delimiter: str | None = None,
    building: str = "building",
    on_error: str = "raise",
) -> TimeSeriesDataset:
    """Load, hourly-average and join one building's load with city weather."""
    load = read_load_csv(load_path, load_spec, name="load", on_error=on_error)
    temp = read_load_csv(
        weather_path, CsvSpec(weather_timestamp_column, temperature_column, weather_delimiter),
        name="temperature", on_error=on_error,
    )
    hum = read_load_csv(
        weather_path, CsvSpec(weather_timestamp_column, humidity_column, weather_delimiter),
        name="humidity", on_error=on_error,
    )
    hourly = [resample_hourly(_sorted(s)) for s in (load, temp, hum)]
    return join_weather(*hourly, building=building)


_DATASET_COLUMNS = ("timestamp", "load", "temperature", "humidity")


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def save_dataset_csv(ds: TimeSeriesDataset, path) -> Path:
    """Cache a joined dataset as CSV (ISO timestamps, round-trippable floats)."""
    out = [",".join(_DATASET_COLUMNS)]
    for t, a, b, c in zip(ds.timestamps, ds.load, ds.temperature, ds.humidity):
        out.append(f"{np.datetime_as_string(t, unit='s')},{_fmt(a)},{_fmt(b)},{_fmt(c)}")
    return atomic_write(path, "\n".join(out) + "\n")


def load_dataset_csv(path, building: str | None = None) -> TimeSeriesDataset:
    """Read a dataset cache written by :func:`save_dataset_csv`."""
    path = Path(path)
    chans = {c: read_load_csv(path, CsvSpec("timestamp", c, ","), name=c) for c in _DATASET_COLUMNS[1:]}
    ts = chans["load"].timestamps
    return TimeSeriesDataset(
        ts, chans["load"].values, chans["temperature"].values, chans["humidity"].values,
        building or path.stem,
    )


# ---------------------------------------------------------------------------
# model files


def _section(name: str, payload) -> bytes:
    nb = name.encode("utf-8")
    if isinstance(payload, (bytes, bytearray)):
        return struct.pack("<H", len(nb)) + nb + b"b" + struct.pack("<Q", len(payload)) + bytes(payload)
    arr = np.ascontiguousarray(np.asarray(payload, dtype="<f8")).ravel()
    return struct.pack("<H", len(nb)) + nb + b"d" + struct.pack("<Q", arr.size) + arr.tobytes()


def model_to_bytes(model: TrainedModel) -> bytes:
    d, k = model.input_dim, model.k
    norm = model.normalization
    z_last = np.zeros(0) if model.z_last is None else model.z_last
    cfg = json.dumps(model.config_dict(), sort_keys=True).encode("utf-8")
    body = b"".join([
        _section("transform", model.transform),
        _section("weights", model.weights),
        _section("z0", model.z0),
        _section("z_last", z_last),
        _section("x_mean", norm.x_mean),
        _section("x_scale", norm.x_scale),
        _section("l_stats", [norm.l_mean, norm.l_scale]),
        _section("trace", model.objective_trace),
        _section("config", cfg),
        _section("meta", json.dumps(model.meta, sort_keys=True).encode("utf-8")),
    ])

    def header(total):
        return (
            MAGIC
            + f"version: {FORMAT_VERSION}\nkind: {model.kind}\ndims: {d} {k}\nlength: {total}\n\n".encode("ascii")
        )

    # the length field counts itself; iterate until its digit count settles
    total = len(header(0)) + len(body) + _DIGEST
    while len(header(total)) + len(body) + _DIGEST != total:
        total = len(header(total)) + len(body) + _DIGEST
    data = header(total) + body
    return data + hashlib.sha256(data).digest()


def save_model(model: TrainedModel, path) -> Path:
    """Serialize ``model``; see the module docstring for the layout."""
    return atomic_write(path, model_to_bytes(model))


def _parse_header(data: bytes):
    if not data.startswith(MAGIC):
        raise ModelFileError("not an rtlearn model file (bad magic)")
    end = data.find(b"\n\n", len(MAGIC) - 1)
    if end < 0:
        raise ModelFileError("model file is truncated (header incomplete)")
    fields_ = {}
    for line in data[len(MAGIC):end].decode("ascii", errors="replace").splitlines():
        key, sep, value = line.partition(":")
        if not sep:
            raise ModelFileError(f"malformed header line {line!r}")
        fields_[key.strip()] = value.strip()
    return fields_, end + 2


def _migration_hint(version: int) -> str:
    if version > FORMAT_VERSION:
        return (
            f"model file format version {version} is newer than the supported version {FORMAT_VERSION}; "
            "upgrade rtlearn to read it"
        )
    return (
        f"model file format version {version} is not supported (current version {FORMAT_VERSION}); "
        "re-train the model with `rtlearn train` to produce a current file"
    )


def model_from_bytes(data: bytes, kind: str | None = None) -> TrainedModel:
    head, pos = _parse_header(data)
    for key in ("version", "kind", "dims", "length"):
        if key not in head:
            raise ModelFileError(f"model header is missing {key!r}")
    try:
        length = int(head["length"])
    except ValueError:
        raise ModelFileError(f"bad length field {head['length']!r}") from None
    if len(data) < length:
        raise ModelFileError(f"model file is truncated: {len(data)} of {length} bytes present")
    if len(data) > length:
        raise ModelFileError(f"model file has {len(data) - length} unexpected trailing bytes")
    if hashlib.sha256(data[:-_DIGEST]).digest() != data[-_DIGEST:]:
        raise ChecksumError("model file checksum mismatch: the file is corrupted")
    try:
        version = int(head["version"])
    except ValueError:
        raise ModelFileError(f"bad version field {head['version']!r}") from None
    if version != FORMAT_VERSION:
        raise VersionError(_migration_hint(version))
    file_kind = head["kind"]
    if kind is not None and file_kind != kind:
        raise ModelKindError(f"model file holds a {file_kind!r} model, expected {kind!r}")
    try:
        d, k = (int(v) for v in head["dims"].split())
    except ValueError:
        raise ModelFileError(f"bad dims field {head['dims']!r}") from None

    sections = {}
    end = len(data) - _DIGEST
    while pos < end:
        if pos + 2 > end:
            raise ModelFileError("model file is truncated inside a section header")
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        typ = data[pos:pos + 1]
        (count,) = struct.unpack_from("<Q", data, pos + 1)
        pos += 9
        size = count * 8 if typ == b"d" else count
        if pos + size > end:
            raise ModelFileError(f"model file is truncated inside section {name!r}")
        raw = data[pos:pos + size]
        pos += size
        sections[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64) if typ == b"d" else bytes(raw)

    expected = {
        "transform": k * (d + k), "weights": k, "z0": k, "x_mean": d, "x_scale": d, "l_stats": 2,
    }
    for name, n in expected.items():
        if name not in sections:
            raise ModelFileError(f"model file lacks section {name!r}")
        if sections[name].size != n:
            raise ModelFileError(f"section {name!r} has {sections[name].size} entries, dims imply {n}")
    z_last = sections.get("z_last", np.zeros(0))
    if z_last.size not in (0, k):
        raise ModelFileError(f"section 'z_last' has {z_last.size} entries, expected 0 or {k}")
    try:
        cfg_dict = json.loads(sections["config"].decode("utf-8"))
        known = {f.name for f in fields(R2tlConfig)}
        cfg = R2tlConfig(**{key: v for key, v in cfg_dict.items() if key in known})
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFileError(f"model config section is invalid: {exc}") from None
    try:
        meta = json.loads(sections["meta"].decode("utf-8")) if "meta" in sections else {}
    except ValueError as exc:
        raise ModelFileError(f"model meta section is invalid: {exc}") from None
    l_mean, l_scale = sections["l_stats"]
    return TrainedModel(
        file_kind,
        sections["transform"].reshape(k, d + k),
        sections["weights"],
        sections["z0"],
        d,
        cfg,
        Normalization(sections["x_mean"], sections["x_scale"], float(l_mean), float(l_scale)),
        tuple(float(v) for v in sections.get("trace", ())),
        z_last if z_last.size else None,
        meta,
    )


def load_model(path, kind: str | None = None) -> TrainedModel:
    """Read a model file; ``kind`` (``"rtl"``/``"r2tl"``) rejects other kinds."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise ModelFileError(f"{path}: file not found") from None
    try:
        return model_from_bytes(data, kind)
    except ModelFileError as exc:
        raise type(exc)(f"{path}: {exc}") from None
