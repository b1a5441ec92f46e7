"""Config files, measured response tables and result files.

Config documents are YAML with a strict schema: every key must be a known
field, physical quantities carry their unit in the key name, and all
problems are reported together with the path to the offending key.
"""

from __future__ import annotations

import csv
import dataclasses
import difflib
import io as _io
import json
import math
import re
import types
import typing
import warnings
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import yaml

from .config import ConfigError, LinkConfig
from .rxdsp import EqualizerConfig
from .harness import AggregateRow, Dr8Settings, EyeHistogram, LinkResult, SweepSpec, WdmSettings, aggregate
from .signal import FrequencyResponse

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION", "ConfigDocument", "ResponseTableError", "ResponseTableWarning", "OutputError",
    "parse_config", "load_config", "load_scenario", "scenario_names", "dump_config", "to_dict",
    "parse_response_table", "load_response_table", "emit_results", "write_eye", "read_eye",
    "TABULAR_COLUMNS", "SUMMARY_COLUMNS",
]


class ResponseTableError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ResponseTableWarning(UserWarning):
    pass


class OutputError(OSError):
    pass


# ---------------------------------------------------------------------------
# dataclass <-> plain data
# ---------------------------------------------------------------------------


def to_dict(obj) -> Any:
    """Plain-data form of a config object (dataclasses, tuples, enums)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _is_optional(tp) -> tuple[bool, Any]:
    origin = typing.get_origin(tp)
    if origin is Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return True, args[0]
    return False, tp


def _convert(tp, value, path: str, errors: list[str]):
    optional, tp = _is_optional(tp)
    if value is None:
        if optional:
            return None
        errors.append(f"{path}: must not be null")
        return dataclasses.MISSING
    if tp is float:
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return dataclasses.MISSING
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return dataclasses.MISSING
        return value
    if tp is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true or false, got {value!r}")
            return dataclasses.MISSING
        return value
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
            return dataclasses.MISSING
        return value
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in tp)
            errors.append(f"{path}: {value!r} is not one of {choices}")
            return dataclasses.MISSING
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, errors)
    if typing.get_origin(tp) is tuple:
        (inner, *_rest) = typing.get_args(tp)
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list")
            return dataclasses.MISSING
        out = [_convert(inner, v, f"{path}[{i}]", errors) for i, v in enumerate(value)]
        if any(v is dataclasses.MISSING for v in out):
            return dataclasses.MISSING
        return tuple(out)
    raise TypeError(f"unsupported field type {tp!r} at {path}")


def _build(cls, data, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping, got {type(data).__name__}")
        return dataclasses.MISSING
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    kwargs = {}
    bad = False
    for key, value in data.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in names:
            hint = difflib.get_close_matches(str(key), names, n=1)
            tip = f" (did you mean {hint[0]!r}?)" if hint else ""
            errors.append(f"{where}: unknown key{tip}")
            bad = True
            continue
        v = _convert(hints[key], value, where, errors)
        if v is dataclasses.MISSING:
            bad = True
        else:
            kwargs[key] = v
    # construct even after a bad key so the object's own checks report too
    try:
        obj = cls(**kwargs)
    except ConfigError as exc:
        errors.extend(f"{path}.{e}" if path else e for e in exc.errors)
        return dataclasses.MISSING
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return dataclasses.MISSING
    return dataclasses.MISSING if bad else obj


# ---------------------------------------------------------------------------
# Config documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigDocument:
    link: LinkConfig
    sweep: Optional[SweepSpec] = None
    wdm: Optional[WdmSettings] = None
    dr8: Optional[Dr8Settings] = None
    schema_version: int = SCHEMA_VERSION


@dataclass(frozen=True)
class _SweepSection:
    variable: str
    values: tuple[float, ...]
    equalizers: tuple[EqualizerConfig, ...] = ()


_TOP_KEYS = ("schema_version", "link", "sweep", "wdm", "dr8")


def _resolve_tables(data, base_dir: Path):
    """Make relative response-table paths absolute against ``base_dir``."""
    if isinstance(data, dict):
        out = {k: _resolve_tables(v, base_dir) for k, v in data.items()}
        p = out.get("table_path")
        if isinstance(p, str) and not Path(p).is_absolute():
            out["table_path"] = str((base_dir / p).resolve())
        return out
    if isinstance(data, list):
        return [_resolve_tables(v, base_dir) for v in data]
    return data


def _table_files(data, path: str, errors: list[str]):
    if isinstance(data, dict):
        p = data.get("table_path")
        if data.get("kind") == "table" and isinstance(p, str) and not Path(p).is_file():
            errors.append(f"{path}.table_path: file not found: {p}")
        for k, v in data.items():
            _table_files(v, f"{path}.{k}", errors)
    elif isinstance(data, list):
        for i, v in enumerate(data):
            _table_files(v, f"{path}[{i}]", errors)


def parse_config(text: str, base_dir: Optional[Path] = None) -> ConfigDocument:
    """Parse and validate a YAML config document.

    Raises ConfigError listing every problem with its key path. Relative
    response-table paths are resolved against ``base_dir`` when given.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    errors: list[str] = []
    for key in data:
        if key not in _TOP_KEYS:
            hint = difflib.get_close_matches(str(key), _TOP_KEYS, n=1)
            errors.append(f"{key}: unknown key" + (f" (did you mean {hint[0]!r}?)" if hint else ""))
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    if base_dir is not None:
        data = _resolve_tables(data, Path(base_dir))
    _table_files(data.get("link"), "link", errors)

    link = _build(LinkConfig, data.get("link") or {}, "link", errors)
    wdm = dr8 = sweep = None
    if data.get("wdm") is not None:
        wdm = _build(WdmSettings, data["wdm"], "wdm", errors)
    if data.get("dr8") is not None:
        dr8 = _build(Dr8Settings, data["dr8"], "dr8", errors)
    if data.get("sweep") is not None:
        section = _build(_SweepSection, data["sweep"], "sweep", errors)
        ready = dataclasses.MISSING not in (link, section, wdm, dr8)
        if ready:
            try:
                sweep = SweepSpec(link, section.variable, section.values, section.equalizers, wdm, dr8)
            except ValueError as exc:
                errors.append(f"sweep: {exc}")
    if errors:
        raise ConfigError(errors)
    return ConfigDocument(link, sweep, wdm, dr8, version)


def load_config(path) -> ConfigDocument:
    """Read a config file; relative table paths are taken from its directory."""
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def scenario_names() -> list[str]:
    root = resources.files("imddlink") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(name: str) -> ConfigDocument:
    """One of the frozen scenario files shipped with the package."""
    root = resources.files("imddlink") / "scenarios"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise FileNotFoundError(f"no scenario {name!r}; available: {', '.join(scenario_names())}")
    with resources.as_file(root) as base:
        return parse_config(f.read_text(), base_dir=Path(base))


def dump_config(doc: ConfigDocument) -> str:
    """Effective config as YAML; parse_config(dump_config(d)) == d."""
    data: dict[str, Any] = {"schema_version": doc.schema_version, "link": to_dict(doc.link)}
    if doc.sweep is not None:
        data["sweep"] = {"variable": doc.sweep.variable, "values": list(doc.sweep.values),
                         "equalizers": to_dict(doc.sweep.equalizers)}
    if doc.wdm is not None:
        data["wdm"] = to_dict(doc.wdm)
    if doc.dr8 is not None:
        data["dr8"] = to_dict(doc.dr8)
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False)


# ---------------------------------------------------------------------------
# Response tables
# ---------------------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def parse_response_table(text: str, name: str = "table") -> FrequencyResponse:
    """Rows of (frequency_ghz, magnitude_db, phase_deg) -> FrequencyResponse.

    Columns may be separated by commas or whitespace; a first non-numeric
    row is taken as a header and lines starting with '#' are skipped. A
    missing 0 GHz row is added as (0, 0 dB, 0 deg) with a warning.
    """
    rows = []
    errors = []
    seen_data = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c for c in _SPLIT.split(line) if c]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            if not seen_data and not rows:
                seen_data = True  # header
                continue
            errors.append(f"row {lineno}: non-numeric cell in {line!r}")
            continue
        seen_data = True
        if len(values) != 3:
            errors.append(f"row {lineno}: expected 3 columns (frequency_ghz, magnitude_db, phase_deg), got {len(values)}")
            continue
        if not all(math.isfinite(v) for v in values):
            errors.append(f"row {lineno}: missing or non-finite cell")
            continue
        if values[0] < 0:
            errors.append(f"row {lineno}: negative frequency {values[0]}")
            continue
        if rows and values[0] <= rows[-1][1][0]:
            errors.append(f"row {lineno}: frequency {values[0]} GHz does not increase (previous {rows[-1][1][0]} GHz)")
            continue
        rows.append((lineno, values))
    if not rows and not errors:
        errors.append("table has no data rows")
    if errors:
        raise ResponseTableError(errors)
    table = np.array([v for _, v in rows])
    if table[0, 0] > 0:
        warnings.warn(f"{name}: no 0 GHz row, assuming 0 dB and 0 deg at DC", ResponseTableWarning, stacklevel=2)
        table = np.vstack([[0.0, 0.0, 0.0], table])
    gain = 10 ** (table[:, 1] / 20) * np.exp(1j * np.deg2rad(table[:, 2]))
    return FrequencyResponse(table[:, 0], gain, name)


def load_response_table(path) -> FrequencyResponse:
    path = Path(path)
    return parse_response_table(path.read_text(), name=path.stem)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

TABULAR_COLUMNS = (
    "point", "variable", "value", "seed", "modulation", "symbol_rate_gbd", "wavelength_nm",
    "rop_dbm", "equalizer", "bit_errors", "bits_compared", "ber", "ber_upper_bound",
    "fec", "fec_overhead_pct", "ber_threshold", "net_rate_gbps", "error",
)

SUMMARY_COLUMNS = (
    "equalizer", "ber_threshold", "fec_overhead_pct", "symbol_rate_gbd", "modulation",
    "lanes", "worst_ber", "net_rate_gbps", "aggregate_tbps",
)


def _sig3(x: Optional[float]) -> Optional[float]:
    return None if x is None else float(f"{x:.3g}")


def _rate(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(x, 1)


def _pct(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(100 * x, 4)


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:g}" if abs(x) < 1e-3 and x != 0 else repr(x)
    return str(x)


def _equalizer_names(results: Sequence[LinkResult]) -> list[str]:
    names: list[str] = []
    for r in results:
        for eq in r.config.rx.equalizers:
            if eq.name not in names:
                names.append(eq.name)
    return names


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _summary_rows(results: Sequence[LinkResult]) -> list[AggregateRow]:
    rows = []
    if not any(r.ok for r in results):
        return rows
    for name in _equalizer_names(results):
        if all(name in r.reports for r in results if r.ok):
            rows.append(aggregate(results, name))
    return rows


def tabular_rows(results: Sequence[LinkResult]) -> list[dict]:
    out = []
    for r in results:
        cfg = r.config
        base = {
            "point": r.info.get("point", ""),
            "variable": r.info.get("variable", ""),
            "value": r.info.get("value", ""),
            "seed": cfg.seed,
            "modulation": cfg.modulation,
            "symbol_rate_gbd": cfg.symbol_rate_gbd,
            "wavelength_nm": r.info.get("wavelength_nm", ""),
            "rop_dbm": r.info.get("rop_dbm", ""),
        }
        if not r.ok:
            out.append(dict(base, error=r.error))
            continue
        for name, rep in r.reports.items():
            v = r.verdicts.get(name)
            code = v.code if v is not None else None
            out.append(dict(
                base, equalizer=name, bit_errors=rep.bit_errors, bits_compared=rep.bits_compared,
                ber=_sig3(rep.ber), ber_upper_bound=_sig3(rep.upper_bound),
                fec=code.name if code else "unrecoverable",
                fec_overhead_pct=_pct(code.overhead) if code else None,
                ber_threshold=code.ber_threshold if code else None,
                net_rate_gbps=_rate(v.net_rate_gbps) if v is not None else None,
            ))
    return out


def structured_document(results: Sequence[LinkResult]) -> dict:
    items = []
    for r in results:
        eqs = {}
        for name, rep in r.reports.items():
            v = r.verdicts.get(name)
            code = v.code if v is not None else None
            eqs[name] = {
                "bit_errors": rep.bit_errors,
                "bits_compared": rep.bits_compared,
                "symbol_errors": rep.symbol_errors,
                "symbols_compared": rep.symbols_compared,
                "ber": _sig3(rep.ber),
                "ber_upper_bound": _sig3(rep.upper_bound),
                "fec": code.name if code else None,
                "fec_overhead_pct": _pct(code.overhead) if code else None,
                "net_rate_gbps": _rate(v.net_rate_gbps) if v is not None else None,
            }
        items.append({
            "seed": r.config.seed,
            "config": to_dict(r.config),
            "info": r.info,
            "warnings": list(r.warnings),
            "error": r.error,
            "equalizers": eqs,
        })
    summary = [dict(_summary_dict(row)) for row in _summary_rows(results)]
    return _jsonable({"schema_version": SCHEMA_VERSION, "results": items, "summary": summary})


def _summary_dict(row: AggregateRow) -> dict:
    return {
        "equalizer": row.equalizer,
        "ber_threshold": row.ber_threshold,
        "fec_overhead_pct": _pct(row.overhead),
        "symbol_rate_gbd": row.symbol_rate_gbd,
        "modulation": row.modulation,
        "lanes": row.lanes,
        "worst_ber": _sig3(row.worst_ber),
        "net_rate_gbps": _rate(row.net_rate_gbps),
        "aggregate_tbps": None if row.aggregate_tbps is None else round(row.aggregate_tbps, 2),
    }


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_results(results: Sequence[LinkResult], out_dir, fmt: str = "tabular", stem: str = "results") -> list[Path]:
    """Write results as CSV tables ('tabular') or one JSON document ('structured').

    Tabular output is ``<stem>.csv`` (one row per result and equalizer, in
    TABULAR_COLUMNS order) plus ``<stem>_summary.csv`` (SUMMARY_COLUMNS,
    one row per equalizer, FEC chosen for the worst lane). Output depends
    only on the results, so rewriting the same results is byte-identical.
    """
    if not results:
        raise ValueError("no results to emit")
    if fmt not in ("tabular", "structured"):
        raise ValueError(f"format must be tabular or structured, got {fmt!r}")
    out_dir = Path(out_dir)
    if fmt == "structured":
        text = json.dumps(structured_document(results), sort_keys=True, indent=2) + "\n"
        return [_write(out_dir / f"{stem}.json", text)]
    summary = [_summary_dict(r) for r in _summary_rows(results)]
    return [
        _write(out_dir / f"{stem}.csv", _csv_text(TABULAR_COLUMNS, tabular_rows(results))),
        _write(out_dir / f"{stem}_summary.csv", _csv_text(SUMMARY_COLUMNS, summary)),
    ]


def write_eye(eye: EyeHistogram, path) -> Path:
    """Plain-text eye matrix: '#' header lines, then one row per amplitude bin (top row = highest)."""
    n_t, n_a = eye.counts.shape
    header = (
        f"# eye histogram: {n_a} amplitude rows x {n_t} time columns\n"
        f"# dimensions {n_a} {n_t}\n"
        f"# time_ui {eye.time_edges_ui[0]:g} {eye.time_edges_ui[-1]:g}\n"
        f"# amplitude {eye.amplitude_edges[0]:.6g} {eye.amplitude_edges[-1]:.6g}\n"
        f"# symbol_rate_gbd {eye.symbol_rate_gbd:g} averages {eye.averages}\n"
    )
    body = "\n".join(" ".join(str(int(c)) for c in row) for row in eye.counts.T[::-1])
    return _write(Path(path), header + body + "\n")


def read_eye(path) -> tuple[np.ndarray, dict]:
    """Inverse of write_eye: (amplitude x time matrix, header fields)."""
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#"):
            break
        parts = line[1:].split()
        if parts and parts[0] in ("dimensions", "time_ui", "amplitude"):
            meta[parts[0]] = tuple(float(p) for p in parts[1:])
    return np.loadtxt(path, dtype=np.int64, ndmin=2), meta
