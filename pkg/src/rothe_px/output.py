"""CSV/JSON writers with a fixed, reproducible byte layout.

CSV: comma separated, LF line endings, '.' decimal separator, floats with 17
significant digits.  JSON: sorted keys, two-space indent, NaN/inf written as
null.
"""
from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .mesh import MeshFunction

__all__ = ["CsvTable", "emit_results", "format_value", "nodal_table", "versions", "write_csv", "write_json"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


@dataclass
class CsvTable:
    header: list
    rows: list = field(default_factory=list)


def write_csv(path: Path, table: CsvTable):
    lines = [",".join(table.header)]
    lines += [",".join(format_value(v) for v in row) for row in table.rows]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def nodal_table(u: MeshFunction) -> CsvTable:
    """Rows ``(vertex_id, x[, y], value)``."""
    mesh = u.mesh
    header = ["vertex_id", "x"] + (["y"] if mesh.dimension == 2 else []) + ["value"]
    rows = [[i, *mesh.vertices[i].tolist(), float(u.values[i])] for i in range(mesh.num_vertices)]
    return CsvTable(header, rows)


def versions() -> dict:
    import scipy

    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"rothe_px": pkg, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def emit_results(artifacts: dict, out_dir) -> list[Path]:
    """Write ``{filename: CsvTable | dict}`` into ``out_dir`` (created if needed).

    I/O errors propagate unchanged.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(artifacts):
        path = out / name
        item = artifacts[name]
        if isinstance(item, CsvTable):
            write_csv(path, item)
        else:
            write_json(path, item)
        written.append(path)
    return written
