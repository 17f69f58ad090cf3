"""Serialization helpers shared by the command-line tools.

Floats are written with 17 significant digits so that every number read
back is bit-identical to the one written.  Files are written to a
temporary sibling and renamed into place, so a failed command never leaves
a partial output behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

__all__ = ["RunManifest", "dumps", "format_float", "read_json", "load_states", "write_output",
           "csv_text"]


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0.0:
        return "-0.0" if math.copysign(1.0, x) < 0 else "0.0"
    s = format(x, ".17g")
    # keep floats recognizable as floats once parsed
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, list):
        # numeric rows stay on one line
        if not obj or all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(format_float(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(pad + json.dumps(str(k)) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and a trailing newline."""
    out = []
    _emit(_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def read_json(path, what: str = "input") -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {what} file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{what} file {path} must hold a JSON object")
    return doc


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """What was run: command, inputs (with content hashes), output, seed and flags."""

    command: str
    inputs: dict = field(default_factory=dict)
    output: str | None = None
    seed: int | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        inputs = {}
        for name, path in sorted(self.inputs.items()):
            if path is None:
                continue
            inputs[name] = {"path": str(path), "sha256": _sha256(path)}
        return {"command": self.command, "inputs": inputs, "output": self.output,
                "seed": self.seed, "flags": dict(sorted(self.flags.items()))}


def csv_text(header, rows, comments=()) -> str:
    """CSV with ``#`` comment lines first; floats at 17 significant digits."""
    buf = io.StringIO()
    for line in comments:
        buf.write("# " + line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_output(text: str, path=None, stream=None):
    """Write ``text`` atomically to ``path``, or to ``stream`` when no path is given."""
    if path is None:
        stream.write(text)
        stream.flush()
        return
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_states(path, n: int | None = None) -> np.ndarray:
    """Read a state path from CSV with columns date, P_1..P_n, d_1..d_n, r (levels, simple rate).

    Extra columns are ignored; ``#`` lines are comments.  Returns log states
    ``(log P, log d, log(1 + r))`` row by row.
    """
    try:
        with open(Path(path), newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read state file {path}: {exc}") from None
    rows = [r for r in csv.reader(lines) if r]
    if len(rows) < 2:
        raise InputError(f"state file {path} has no data rows")
    header, rows = rows[0], rows[1:]
    cols = {c: i for i, c in enumerate(header)}
    pc = sorted((c for c in header if c.startswith("P_")), key=lambda c: int(c[2:]))
    dc = sorted((c for c in header if c.startswith("d_")), key=lambda c: int(c[2:]))
    if not pc or len(pc) != len(dc) or "r" not in cols:
        raise InputError("state CSV needs columns P_1..P_n, d_1..d_n, r")
    if n is not None and len(pc) != n:
        raise InputError(f"state CSV has {len(pc)} assets, model has {n}")
    try:
        vals = np.array([[float(r[cols[c]]) for c in pc + dc + ["r"]] for r in rows])
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed state row: {exc}") from None
    k = len(pc)
    if np.any(vals[:, :2 * k] <= 0) or np.any(vals[:, -1] <= -1) or not np.all(np.isfinite(vals)):
        raise InputError("prices and dividends must be positive and rates above -1")
    return np.column_stack([np.log(vals[:, :2 * k]), np.log1p(vals[:, -1])])


def state_row(x, n: int) -> list:
    """Levels ``P, d`` and simple rate ``r`` for one log state."""
    x = np.asarray(x, dtype=float)
    return list(np.exp(x[:2 * n])) + [float(np.expm1(x[-1]))]
